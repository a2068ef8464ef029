"""CSV and JSON readers/writers for logs, volumes, matrices and reports.

Numbers are written as decimal text with 17 significant digits so files
round-trip float64 values exactly and reruns are byte-identical.
"""

import csv
import json

import numpy as np


def format_number(x):
    return "%.17g" % x


def write_matrix(path, A, header=None):
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if header:
            fh.write(",".join(header) + "\n")
        for row in A:
            fh.write(",".join(format_number(x) for x in row) + "\n")


def read_matrix(path):
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([float(x) for x in line.split(",")])
            except ValueError:
                if lineno == 1:
                    continue
                raise ValueError(f"{path}: malformed number on line {lineno}") from None
    if not rows:
        raise ValueError(f"{path}: no numeric rows")
    if len({len(r) for r in rows}) != 1:
        raise ValueError(f"{path}: ragged rows")
    return np.array(rows)


def write_events(path, log):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("node_id,contagion_id,time\n")
        for u, k, t in log.events:
            fh.write(f"{u},{k},{t}\n")


def write_rows(path, header, rows):
    """Write a CSV of mixed fields; floats get 17 significant digits."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [format_number(x) if isinstance(x, (float, np.floating)) else x
                 for x in row]
            )


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(format_number(obj))
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_plain(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
