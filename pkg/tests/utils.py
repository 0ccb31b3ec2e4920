import csv

import numpy as np
import yaml

try:
    from yaml import CLoader as Loader
except ImportError:
    from yaml import Loader


def read_csv(path):
    """The header and the rows of a CSV file, every cell as a string."""
    with open(path, "r", newline="") as f:
        rows = list(csv.reader(f))
    return rows[0], rows[1:]


def read_csv_column(path, name):
    header, rows = read_csv(path)
    index = header.index(name)
    return np.array([float(row[index]) for row in rows])


def read_yaml(path):
    with open(path, "r") as f:
        return yaml.load(f, Loader=Loader)
