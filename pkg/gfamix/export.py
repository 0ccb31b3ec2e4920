"""
This module contains the code responsible for turning arrays, evaluation
reports and reconstructions into the CSV and SVG files that the command line
writes. All writes go through `write_document`, so a failure never leaves a
partial file behind.
"""

import io
import logging
import os

import jinja2
import numpy as np

from gfamix.utils import distinct_filenames, write_document

logger = logging.getLogger(__name__)

CSV_FLOAT_FORMAT = "%.17g"

_template_environment = jinja2.Environment(
    loader=jinja2.PackageLoader("gfamix", "data"),
    autoescape=jinja2.select_autoescape(["svg"]),
    undefined=jinja2.StrictUndefined,
    keep_trailing_newline=True,
)


def format_csv(array, header=None, fmt=CSV_FLOAT_FORMAT):
    buffer = io.StringIO()
    np.savetxt(
        buffer,
        np.atleast_2d(array),
        fmt=fmt,
        delimiter=",",
        newline="\n",
        header="" if header is None else ",".join(header),
        comments="",
    )
    return buffer.getvalue()


def format_rows(header, rows):
    """
    Format rows that mix integers, strings and floats; floats get the full 17
    significant digits so the files can be read back losslessly.
    """
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for value in row:
            if isinstance(value, (float, np.floating)):
                cells.append(CSV_FLOAT_FORMAT % value)
            else:
                cells.append(str(value))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def write_elbo_trace(elbo_trace, path):
    rows = [(i + 1, float(v)) for i, v in enumerate(elbo_trace)]
    write_document(format_rows(["iteration", "elbo"], rows), path)


def write_eval_report(report, path):
    rows = []
    for size, draws in zip(report.train_sizes, report.auc_per_draw):
        for repeat, value in enumerate(draws):
            rows.append((size, repeat + 1, float(value)))
    write_document(format_rows(["train_size", "repeat", "auc"], rows), path)


def write_comparison(reports, path):
    """
    One row per (train size, classifier): the mean AUC followed by the AUC of
    every draw. `reports` maps classifier names to `EvalReport`s.
    """
    n_repeats = max(r.n_repeats for r in reports.values())
    header = ["train_size", "classifier", "mean_auc"]
    header += [f"auc_{i + 1}" for i in range(n_repeats)]
    rows = []
    first = next(iter(reports.values()))
    for i, size in enumerate(first.train_sizes):
        for name, report in reports.items():
            draws = [float(v) for v in report.auc_per_draw[i]]
            rows.append((size, name, float(report.auc_mean[i]), *draws))
    write_document(format_rows(header, rows), path)


def write_draws(report, path):
    rows = []
    for size, draws in zip(report.train_sizes, report.draws):
        for repeat, (train, test) in enumerate(draws):
            rows.append((size, repeat + 1, "train", " ".join(str(i) for i in train)))
            rows.append((size, repeat + 1, "test", " ".join(str(i) for i in test)))
    write_document(format_rows(["train_size", "repeat", "split", "indices"], rows), path)


def write_panels(panels, view_names, directory):
    """
    Write one CSV per (panel, view) holding a trial-averaged response vector.
    `panels` maps panel names ("cluster1", "shared", "diff_1_2", ...) to a list
    of per-view vectors.
    """
    entries = [
        (f"{view_name}_{panel}", vector)
        for panel, vectors in panels.items()
        for view_name, vector in zip(view_names, vectors)
    ]
    filenames = distinct_filenames([stem for stem, _ in entries], ".csv")
    os.makedirs(directory, exist_ok=True)
    written = []
    for filename, (_, vector) in zip(filenames, entries):
        rows = [(d + 1, float(v)) for d, v in enumerate(vector)]
        path = os.path.join(directory, filename)
        write_document(format_rows(["feature", "value"], rows), path)
        written.append(path)
    return written


def _scale(values, lower, upper, out_lower, out_upper):
    span = upper - lower if upper > lower else 1.0
    return [out_lower + (v - lower) / span * (out_upper - out_lower) for v in values]


def render_auc_svg(reports, width=480, height=320, margin=48):
    """
    Render mean AUC against training-set size as an SVG line plot, one line per
    classifier.
    """
    palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
    sizes = sorted({s for r in reports.values() for s in r.train_sizes})
    x_lower, x_upper = min(sizes), max(sizes)
    lines = []
    for i, (name, report) in enumerate(reports.items()):
        xs = _scale(report.train_sizes, x_lower, x_upper, margin, width - margin)
        ys = _scale(report.auc_mean, 0.0, 1.0, height - margin, margin)
        lines.append(
            {
                "name": name,
                "color": palette[i % len(palette)],
                "points": " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys)),
            }
        )
    x_ticks = [
        {"label": s, "position": p}
        for s, p in zip(sizes, _scale(sizes, x_lower, x_upper, margin, width - margin))
    ]
    y_ticks = [
        {"label": f"{v:.1f}", "position": p}
        for v, p in zip(
            np.linspace(0, 1, 6), _scale(np.linspace(0, 1, 6), 0, 1, height - margin, margin)
        )
    ]
    template = _template_environment.get_template("auc_curve.svg.j2")
    return template.render(
        width=width,
        height=height,
        margin=margin,
        lines=lines,
        x_ticks=x_ticks,
        y_ticks=y_ticks,
    )
