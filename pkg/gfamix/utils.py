import logging
import os
import re
import tempfile

import yaml

try:
    from yaml import CSafeDumper as Dumper
    from yaml import CSafeLoader as Loader
except ImportError:
    from yaml import SafeDumper as Dumper
    from yaml import SafeLoader as Loader

from gfamix.errors import DataIOError, ValidationError

logger = logging.getLogger(__name__)


def sanitize_filename(filename):
    """Taken from django."""
    s = str(filename).strip().replace(" ", "_")
    s = re.sub(r"(?u)[^-\w.]", "", s)
    if s in {"", ".", ".."}:
        raise ValueError("Could not derive file name from '%s'" % filename)
    return s


def distinct_filenames(names, suffix=""):
    """
    Sanitized file names for `names`. Two names that sanitize to the same
    file are rejected.
    """
    seen = {}
    filenames = []
    for name in names:
        try:
            filename = sanitize_filename(f"{name}{suffix}")
        except ValueError as exc:
            raise ValidationError(str(exc))
        if filename in seen:
            raise ValidationError(
                f"The names '{seen[filename]}' and '{name}' both map to the file '{filename}'"
            )
        seen[filename] = name
        filenames.append(filename)
    return filenames


def stringify_list(array, wrap_in_quotes=False):
    if wrap_in_quotes:
        array = [f'"{item}"' for item in array]
    length = len(array)
    if length == 0:
        return ""
    elif length == 1:
        return array[0]
    elif length == 2:
        return f"{array[0]} and {array[1]}"
    else:
        return ", ".join(array[:-1]) + ", and " + array[-1]


def available_from_list(collection, singular, plural):
    if len(collection) == 0:
        return f"there are no available {plural}"
    elif len(collection) == 1:
        return f'the only available {singular} is "{collection[0]}"'
    else:
        return (
            f"the available {plural} are"
            f" {stringify_list(collection, wrap_in_quotes=True)}"
        )


def load_yaml(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            return yaml.load(f, Loader=Loader)
    except FileNotFoundError:
        raise DataIOError("File does not exist", path)
    except yaml.YAMLError as exc:
        raise DataIOError(f"Invalid YAML: {exc}", path)


def dump_yaml(data):
    return yaml.dump(data, Dumper=Dumper, sort_keys=False, default_flow_style=None)


def write_document(document, path):
    """
    Write the document next to its destination and rename it into place, so
    that a failure never leaves a partially written file behind.
    """
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    file_mode = "wb" if isinstance(document, bytes) else "w"
    encoding = None if isinstance(document, bytes) else "utf-8"
    fd, temp_path = tempfile.mkstemp(dir=directory or ".", suffix=".tmp")
    try:
        with os.fdopen(fd, file_mode, encoding=encoding, newline="" if encoding else None) as f:
            f.write(document)
        os.replace(temp_path, path)
    except BaseException:
        if os.path.exists(temp_path):
            os.remove(temp_path)
        raise
    logger.debug("Wrote %s", path)
