"""
Multi-view datasets: validation, subsetting and the on-disk manifest format.

A dataset directory holds a YAML manifest that lists the views, the CSV file
holding each view (N rows by D_m columns, no header) and an optional labels
CSV (N rows of 0/1). Paths are relative to the manifest so that directories
can be moved around.
"""

import logging
import os
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from gfamix.errors import DataIOError, ValidationError
from gfamix.export import format_csv
from gfamix.utils import distinct_filenames, dump_yaml, load_yaml, write_document

logger = logging.getLogger(__name__)

MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.yaml"
LABELS_NAME = "labels.csv"


@dataclass(frozen=True)
class MultiViewDataset:
    views: Tuple[np.ndarray, ...]
    view_names: Tuple[str, ...]
    labels: Optional[np.ndarray] = None

    @property
    def n_samples(self):
        return self.views[0].shape[0]

    @property
    def n_views(self):
        return len(self.views)

    @property
    def view_dims(self):
        return tuple(v.shape[1] for v in self.views)

    @property
    def has_labels(self):
        return self.labels is not None

    def concatenated(self):
        return np.hstack(self.views)

    def subset(self, indices):
        indices = np.asarray(indices, dtype=int)
        labels = None if self.labels is None else self.labels[indices]
        return validate_dataset(
            [v[indices] for v in self.views], labels, self.view_names
        )

    def without_labels(self):
        return MultiViewDataset(self.views, self.view_names, None)

    def require_labels(self):
        if self.labels is None:
            raise ValidationError("The dataset has no labels, but labels are required")


def _frozen(array):
    array = np.array(array, dtype=float, copy=True)
    array.setflags(write=False)
    return array


def validate_dataset(views, labels=None, view_names=None):
    """
    Check the raw matrices against the dataset invariants and wrap them.
    Shapes are never coerced: anything that isn't already an N x D_m matrix
    is rejected.
    """
    if len(views) == 0:
        raise ValidationError("A dataset needs at least one view")
    checked = []
    for m, view in enumerate(views):
        view = np.asarray(view, dtype=float)
        if view.ndim != 2:
            raise ValidationError(f"View {m + 1} is not a matrix (ndim={view.ndim})")
        if view.shape[0] == 0 or view.shape[1] == 0:
            raise ValidationError(f"View {m + 1} is empty (shape {view.shape})")
        if not np.all(np.isfinite(view)):
            raise ValidationError(f"View {m + 1} has a non-finite entry")
        checked.append(view)
    n_samples = checked[0].shape[0]
    for m, view in enumerate(checked):
        if view.shape[0] != n_samples:
            raise ValidationError(
                f"row-count mismatch: view {m + 1} has {view.shape[0]} rows,"
                f" view 1 has {n_samples}"
            )

    if view_names is None:
        view_names = [f"view{m + 1}" for m in range(len(checked))]
    view_names = tuple(str(n) for n in view_names)
    if len(view_names) != len(checked):
        raise ValidationError(
            f"{len(view_names)} view names given for {len(checked)} views"
        )
    if len(set(view_names)) != len(view_names):
        raise ValidationError("View names must be unique")
    view_filenames(view_names)

    checked_labels = None
    if labels is not None:
        raw = np.asarray(labels)
        if raw.ndim != 1 or raw.shape[0] != n_samples:
            raise ValidationError(
                f"label length mismatch: {raw.size} labels for {n_samples} samples"
            )
        if raw.size and not np.all(np.isin(raw, [0, 1])):
            raise ValidationError("label outside {0,1}")
        checked_labels = raw.astype(int)
        checked_labels.setflags(write=False)

    return MultiViewDataset(
        tuple(_frozen(v) for v in checked), view_names, checked_labels
    )


def view_filenames(view_names):
    """The CSV file of each view; none may collide with another or the labels."""
    filenames = distinct_filenames(view_names, ".csv")
    if LABELS_NAME in filenames:
        raise ValidationError(f"A view name may not map to the labels file '{LABELS_NAME}'")
    return filenames


def write_dataset(dataset: MultiViewDataset, directory, manifest_name=MANIFEST_NAME):
    filenames = view_filenames(dataset.view_names)
    os.makedirs(directory, exist_ok=True)
    entries = []
    for name, filename, view in zip(dataset.view_names, filenames, dataset.views):
        write_document(format_csv(view), os.path.join(directory, filename))
        entries.append({"name": name, "path": filename, "dim": int(view.shape[1])})
    manifest = {
        "format_version": MANIFEST_VERSION,
        "n_samples": int(dataset.n_samples),
        "views": entries,
        "labels": None,
    }
    if dataset.has_labels:
        write_document(
            format_csv(dataset.labels.reshape(-1, 1), fmt="%d"),
            os.path.join(directory, LABELS_NAME),
        )
        manifest["labels"] = LABELS_NAME
    manifest_path = os.path.join(directory, manifest_name)
    write_document(dump_yaml(manifest), manifest_path)
    return manifest_path


def _read_matrix(path, ndmin):
    try:
        with open(path, "r", encoding="utf-8") as f:
            content = f.read()
    except OSError as exc:
        raise DataIOError(f"Unable to read CSV file: {exc.strerror}", path)
    rows = [line for line in content.split("\n") if line.strip()]
    try:
        return np.loadtxt(rows, delimiter=",", ndmin=ndmin, dtype=float)
    except ValueError as exc:
        raise DataIOError(f"Malformed CSV file: {exc}", path)


def _validate_manifest(manifest, path):
    if not isinstance(manifest, dict):
        raise DataIOError("The manifest must be a mapping", path)
    if manifest.get("format_version") != MANIFEST_VERSION:
        raise DataIOError(
            f"Unsupported manifest format_version {manifest.get('format_version')!r}",
            path,
        )
    for key in ["n_samples", "views"]:
        if key not in manifest:
            raise DataIOError(f"The manifest is missing the '{key}' key", path)
    if not isinstance(manifest["views"], list) or len(manifest["views"]) == 0:
        raise DataIOError("The manifest 'views' key must be a non-empty list", path)
    for entry in manifest["views"]:
        if not isinstance(entry, dict) or not {"name", "path", "dim"} <= set(entry):
            raise DataIOError("Each view entry needs 'name', 'path' and 'dim'", path)
    paths = [os.path.normpath(str(entry["path"])) for entry in manifest["views"]]
    if len(set(paths)) != len(paths):
        raise DataIOError("Two views in the manifest share one CSV file", path)


def read_dataset(manifest_path) -> MultiViewDataset:
    if os.path.isdir(manifest_path):
        manifest_path = os.path.join(manifest_path, MANIFEST_NAME)
    manifest = load_yaml(manifest_path)
    _validate_manifest(manifest, manifest_path)
    root = os.path.dirname(os.path.abspath(manifest_path))
    n_samples = manifest["n_samples"]

    views = []
    for entry in manifest["views"]:
        view_path = os.path.join(root, entry["path"])
        view = _read_matrix(view_path, ndmin=2)
        if view.shape != (n_samples, entry["dim"]):
            raise DataIOError(
                f"View '{entry['name']}' has shape {view.shape} but the manifest"
                f" declares ({n_samples}, {entry['dim']})",
                view_path,
            )
        views.append(view)

    labels = None
    if manifest.get("labels"):
        labels_path = os.path.join(root, manifest["labels"])
        labels = _read_matrix(labels_path, ndmin=1)
        if labels.shape != (n_samples,):
            raise DataIOError(
                f"The labels have shape {labels.shape} but the manifest"
                f" declares {n_samples} samples",
                labels_path,
            )

    dataset = validate_dataset(views, labels, [e["name"] for e in manifest["views"]])
    logger.info(
        "Loaded %d samples in %d views from %s",
        dataset.n_samples,
        dataset.n_views,
        manifest_path,
    )
    return dataset


def check_view_dims(expected: Sequence[int], dataset: MultiViewDataset):
    if tuple(expected) != dataset.view_dims:
        raise ValidationError(
            f"dimension mismatch: the model expects views of sizes {tuple(expected)},"
            f" the data has {dataset.view_dims}"
        )
