# wavescope/util/artifacts.py

import csv
import hashlib
import json
import logging
import math
import os

import numpy as np

from .errors import ParseError, ValidationError

logger = logging.getLogger(__name__)


def format_value(value) -> str:
    """Stable text form of a CSV cell: repr precision for floats, empty for None."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return format(value, ".17g")
    return str(value)


def resolve_output_path(output_dir: str, name: str) -> str:
    """
    Joins a file name to the output directory, refusing anything that would
    land outside of it.
    """
    root = os.path.realpath(output_dir)
    path = os.path.realpath(os.path.join(root, name))
    if os.path.commonpath([root, path]) != root:
        raise ValidationError(f"output '{name}' escapes the output directory", output=name)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    return path


def sha256_of(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def write_csv(path: str, columns, rows, header_lines=(), footer_lines=()) -> str:
    """
    Writes rows (dicts) under the given columns. Comment lines start with '#'.

    Returns:
        str: The path written.
    """
    with open(path, "w", newline="", encoding="utf-8") as handle:
        for line in header_lines:
            handle.write(f"# {line}\n")
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(row.get(column)) for column in columns])
        for line in footer_lines:
            handle.write(f"# {line}\n")
    logger.info("Wrote %s", path)
    return path


def append_csv_footer(path: str, footer_lines) -> None:
    with open(path, "a", encoding="utf-8") as handle:
        for line in footer_lines:
            handle.write(f"# {line}\n")


def write_json(path: str, payload: dict) -> str:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True, default=_json_default)
        handle.write("\n")
    logger.info("Wrote %s", path)
    return path


def _json_default(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.bool_):
        return bool(value)
    raise TypeError(f"not JSON serializable: {type(value).__name__}")


def write_array(path: str, array: np.ndarray, meta: dict) -> str:
    """
    Raw little-endian binary snapshot plus a JSON header next to it
    (`<path>.json`) giving dtype, shape and grid metadata.
    """
    array = np.ascontiguousarray(array)
    dtype = array.dtype.newbyteorder("<")
    with open(path, "wb") as handle:
        handle.write(array.astype(dtype, copy=False).tobytes())
    header = dict(meta)
    header.update({"dtype": dtype.str, "shape": list(array.shape)})
    write_json(path + ".json", header)
    return path


def read_array(path: str) -> np.ndarray:
    with open(path + ".json", encoding="utf-8") as handle:
        header = json.load(handle)
    data = np.fromfile(path, dtype=np.dtype(header["dtype"]))
    return data.reshape(header["shape"])


def read_chart_csv(path: str) -> dict:
    """
    Reads chart profiles from CSV with columns chart_id, u1 .. u_{n-1}, phi.
    Each chart must be sampled on a full uniform tensor grid.

    Returns:
        dict: chart_id -> phi array (1-D for n = 2, 2-D for n = 3).
    """
    samples = {}
    try:
        with open(path, newline="", encoding="utf-8") as handle:
            reader = csv.DictReader(row for row in handle if not row.startswith("#"))
            u_columns = sorted(c for c in (reader.fieldnames or []) if c.startswith("u"))
            if not u_columns or "phi" not in (reader.fieldnames or []):
                raise ParseError("chart file needs chart_id, u1.., phi columns", path=path)
            for line_number, row in enumerate(reader, start=2):
                try:
                    coords = tuple(float(row[c]) for c in u_columns)
                    samples.setdefault(row["chart_id"], []).append((coords, float(row["phi"])))
                except (KeyError, TypeError, ValueError) as exc:
                    raise ParseError(f"bad chart row: {exc}", path=path, line=line_number) from exc
    except FileNotFoundError as exc:
        raise ParseError("chart file not found", path=path) from exc

    profiles = {}
    for chart_id, rows in samples.items():
        coords = np.array([c for c, _ in rows])
        values = np.array([v for _, v in rows])
        axes = [np.unique(coords[:, k]) for k in range(coords.shape[1])]
        if np.prod([len(a) for a in axes]) != len(rows):
            raise ParseError("chart samples do not form a tensor grid", path=path, chart_id=chart_id)
        grid = np.full([len(a) for a in axes], np.nan)
        index = tuple(np.searchsorted(a, coords[:, k]) for k, a in enumerate(axes))
        grid[index] = values
        profiles[chart_id] = grid if grid.ndim > 1 else grid.reshape(-1)
    return profiles
