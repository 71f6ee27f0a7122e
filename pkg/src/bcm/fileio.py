"""CSV file formats.

Every format is a header line naming the kind and its shape
(``spd,<d>``, ``pointcloud,<n>,<d>``, ``gram,<p>``, ``coords,<p>``,
``grid,<H>,<W>``) followed by comma-separated rows.  Lines starting with
``#`` carry run metadata as ``# key=value`` and are skipped by readers.
"""
from __future__ import annotations

import os
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DomainError


def fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def metadata_lines(metadata: Mapping | None) -> list[str]:
    if not metadata:
        return []
    return [f"# {k}={fmt(v)}" for k, v in metadata.items()]


def _write(path, lines: Iterable[str]) -> None:
    with open(path, "w", newline="\n") as fh:
        for line in lines:
            fh.write(line)
            fh.write("\n")


def read_metadata(path) -> dict[str, str]:
    meta = {}
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key] = value
    return meta


def _read(path, kind: str, nshape: int):
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise DomainError(f"{path}: empty file")
    head = lines[0].split(",")
    if head[0] != kind or len(head) != 1 + nshape:
        raise DomainError(f"{path}: expected header '{kind}' with {nshape} sizes, got {lines[0]!r}")
    try:
        shape = tuple(int(s) for s in head[1:])
    except ValueError as exc:
        raise DomainError(f"{path}: bad header {lines[0]!r}") from exc
    rows = [[float(v) for v in ln.split(",")] for ln in lines[1:]]
    return shape, np.array(rows, dtype=float)


def write_matrix(path, kind: str, shape: Sequence[int], M, metadata=None) -> None:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    lines = metadata_lines(metadata)
    lines.append(",".join([kind] + [str(int(s)) for s in shape]))
    lines.extend(",".join(fmt(v) for v in row) for row in M)
    _write(path, lines)


def write_spd(path, S, metadata=None) -> None:
    S = np.asarray(S, dtype=float)
    write_matrix(path, "spd", [S.shape[0]], S, metadata)


def read_spd(path) -> np.ndarray:
    (d,), M = _read(path, "spd", 1)
    if M.shape != (d, d):
        raise DomainError(f"{path}: expected {d}x{d} matrix, got {M.shape}")
    return M


def write_gram(path, A, metadata=None) -> None:
    A = np.asarray(A, dtype=float)
    write_matrix(path, "gram", [A.shape[0]], A, metadata)


def read_gram(path) -> np.ndarray:
    (p,), M = _read(path, "gram", 1)
    if M.shape != (p, p):
        raise DomainError(f"{path}: expected {p}x{p} matrix, got {M.shape}")
    return M


def write_coords(path, lam, metadata=None) -> None:
    lam = np.asarray(lam, dtype=float).ravel()
    write_matrix(path, "coords", [lam.size], lam[None, :], metadata)


def read_coords(path) -> np.ndarray:
    (p,), M = _read(path, "coords", 1)
    lam = M.ravel()
    if lam.size != p:
        raise DomainError(f"{path}: expected {p} coordinates, got {lam.size}")
    return lam


def write_grid(path, grid, metadata=None) -> None:
    grid = np.asarray(grid, dtype=float)
    write_matrix(path, "grid", list(grid.shape), grid, metadata)


def read_grid(path) -> np.ndarray:
    (h, w), M = _read(path, "grid", 2)
    if M.shape != (h, w):
        raise DomainError(f"{path}: expected {h}x{w} grid, got {M.shape}")
    return M


def write_pointcloud(path, cloud, metadata=None) -> None:
    data = np.column_stack([cloud.weights, cloud.points])
    write_matrix(path, "pointcloud", [cloud.n, cloud.dim], data, metadata)


def read_pointcloud(path):
    from .ot import PointCloud

    (n, d), M = _read(path, "pointcloud", 2)
    if M.shape != (n, d + 1):
        raise DomainError(f"{path}: expected {n} rows of {d + 1} columns, got {M.shape}")
    return PointCloud(M[:, 1:], M[:, 0])


def write_table(path, columns: Sequence[str], rows: Iterable[Sequence], metadata=None) -> None:
    """Plain CSV with a column-name header, preceded by metadata comments."""
    lines = metadata_lines(metadata)
    lines.append(",".join(columns))
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    _write(path, lines)


def read_table(path) -> tuple[list[str], list[list[str]]]:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip() and not ln.startswith("#")]
    return lines[0].split(","), [ln.split(",") for ln in lines[1:]]


def write_report(path, items: Mapping, metadata=None) -> None:
    """``key=value`` text report."""
    lines = metadata_lines(metadata)
    lines.extend(f"{k}={fmt(v)}" for k, v in items.items())
    _write(path, lines)


def ensure_dir(path) -> str:
    os.makedirs(path, exist_ok=True)
    return path
