"""Images as measures: conversion, corruption models, linear recovery, IDX files."""
from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError
from .ot import PointCloud, w2_sq_entropic
from .qp import solve_simplex_qp
from .synthesis import as_grid_measure


class IdxFormatError(DomainError):
    pass


def as_raw_image(img) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim != 2 or img.size == 0:
        raise DomainError(f"image must be a non-empty 2D array, got shape {img.shape}")
    if np.any(img < 0) or np.any(img > 255) or np.any(np.asarray(img) != np.round(img)):
        raise DomainError("pixels must be integers in [0, 255]")
    return img.astype(np.int64)


def image_to_measure(img) -> np.ndarray:
    """Normalize pixel intensities into a grid measure."""
    img = as_raw_image(img)
    total = img.sum()
    if total == 0:
        raise DomainError("image has zero total intensity")
    return img / float(total)


def grid_to_pointcloud(grid) -> PointCloud:
    """Pixel ``(i, j)`` becomes the point ``(i, j)``; empty pixels are dropped."""
    grid = np.asarray(grid, dtype=float)
    ii, jj = np.nonzero(grid > 0)
    pts = np.column_stack([ii, jj]).astype(float)
    return PointCloud.from_masses(pts, grid[ii, jj])


def grid_w2_sq(
    a, b, epsilon: float = 0.1, prune: float = 1e-12, tol: float = 1e-7, max_iters: int = 1_000_000
) -> float:
    """Entropic W2^2 surrogate between two grid measures, in pixel units.

    Pixels holding less than ``prune`` of the largest pixel mass are dropped
    (and the rest renormalized) before transport; such mass changes the
    score by at most ``prune`` times the grid diameter squared, but slows
    small-epsilon Sinkhorn badly.
    """
    clouds = []
    for g in (a, b):
        g = as_grid_measure(g)
        clouds.append(grid_to_pointcloud(np.where(g >= prune * g.max(), g, 0.0)))
    return w2_sq_entropic(clouds[0], clouds[1], epsilon, tol=tol, max_iters=max_iters)


def noise_grid(shape, seed) -> np.ndarray:
    """Normalized white noise: iid Unif[0, 1] pixels, scaled to unit mass."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    z = rng.uniform(0.0, 1.0, size=shape)
    return z / z.sum()


def corrupt_noise(m, alpha: float, seed) -> np.ndarray:
    """``(1 - alpha) m + alpha zeta`` with ``zeta`` from :func:`noise_grid`."""
    m = as_grid_measure(m)
    if not 0.0 <= alpha <= 1.0:
        raise DomainError(f"alpha must lie in [0, 1], got {alpha}")
    return (1.0 - alpha) * m + alpha * noise_grid(m.shape, seed)


def corrupt_noise_expected(m, alpha: float) -> np.ndarray:
    """Noise model with the noise replaced by its expectation (the uniform grid)."""
    m = as_grid_measure(m)
    if not 0.0 <= alpha <= 1.0:
        raise DomainError(f"alpha must lie in [0, 1], got {alpha}")
    return (1.0 - alpha) * m + alpha / m.size


def central_block(shape, size: int = 8) -> tuple[int, int, int, int]:
    """``(row, col, height, width)`` of the centered ``size x size`` square."""
    h, w = shape
    return ((h - size) // 2, (w - size) // 2, size, size)


def corrupt_occlude(m, block: tuple[int, int, int, int]) -> np.ndarray:
    """Zero a rectangle ``(row, col, height, width)`` and renormalize."""
    m = as_grid_measure(m)
    r, c, bh, bw = block
    H, W = m.shape
    if r < 0 or c < 0 or bh < 0 or bw < 0 or r + bh > H or c + bw > W:
        raise DomainError(f"block {block} does not fit in a {H}x{W} grid")
    out = m.copy()
    out[r:r + bh, c:c + bw] = 0.0
    total = out.sum()
    if not total > 0:
        raise DomainError("occlusion removes all mass")
    return out / total


def linear_recovery(corrupted, refs: Sequence, clean_refs: Sequence | None = None):
    """Euclidean projection onto the convex hull of the (corrupted) references.

    Returns ``(lam, reconstruction)`` where the reconstruction mixes
    ``clean_refs`` (or ``refs`` if not given) with weights ``lam``.
    """
    if len(refs) == 0:
        raise DomainError("need at least one reference")
    y = np.asarray(corrupted, dtype=float).ravel()
    R = np.array([np.asarray(r, dtype=float).ravel() for r in refs]).T
    if R.shape[0] != y.size:
        raise DomainError("references and query live on different grids")
    sol = solve_simplex_qp(R.T @ R, -2.0 * (R.T @ y))
    mix = refs if clean_refs is None else clean_refs
    recon = sum(l * np.asarray(g, dtype=float) for l, g in zip(sol.lam, mix))
    return sol.lam, recon


def linear_residual(corrupted, refs: Sequence, lam) -> float:
    y = np.asarray(corrupted, dtype=float).ravel()
    R = np.array([np.asarray(r, dtype=float).ravel() for r in refs]).T
    return float(np.sum((y - R @ np.asarray(lam)) ** 2))


# --- IDX container -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class IdxDataset:
    """Unsigned-byte IDX payload; ``data.shape`` gives the dimensions."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.dtype != np.uint8:
            raise IdxFormatError(f"IDX payload must be uint8, got {arr.dtype}")
        if arr.ndim == 0 or arr.ndim > 255:
            raise IdxFormatError("IDX needs between 1 and 255 dimensions")
        object.__setattr__(self, "data", arr)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def magic(self) -> bytes:
        return bytes([0, 0, 0x08, self.data.ndim])


def _open(path, mode):
    return gzip.open(path, mode) if str(path).endswith(".gz") else open(path, mode)


def idx_bytes(ds: IdxDataset) -> bytes:
    header = ds.magic + struct.pack(f">{len(ds.dims)}I", *ds.dims)
    return header + np.ascontiguousarray(ds.data).tobytes()


def parse_idx(raw: bytes) -> IdxDataset:
    if len(raw) < 4:
        raise IdxFormatError("file shorter than the magic number")
    if raw[0] != 0 or raw[1] != 0 or raw[2] != 0x08:
        raise IdxFormatError(f"bad magic {raw[:4].hex()} (only unsigned-byte IDX is supported)")
    ndim = raw[3]
    if ndim == 0:
        raise IdxFormatError("IDX header declares zero dimensions")
    end = 4 + 4 * ndim
    if len(raw) < end:
        raise IdxFormatError("truncated dimension header")
    dims = struct.unpack(f">{ndim}I", raw[4:end])
    count = int(np.prod(dims, dtype=np.int64))
    payload = raw[end:]
    if len(payload) < count:
        raise IdxFormatError(f"truncated payload: {len(payload)} of {count} bytes")
    if len(payload) > count:
        raise IdxFormatError(f"payload has {len(payload) - count} bytes beyond the declared dims")
    data = np.frombuffer(payload, dtype=np.uint8).reshape(dims).copy()
    return IdxDataset(data)


def read_idx(path) -> IdxDataset:
    with _open(path, "rb") as fh:
        return parse_idx(fh.read())


def write_idx(ds: IdxDataset, path) -> None:
    with _open(path, "wb") as fh:
        fh.write(idx_bytes(ds))


def _find(directory, stem):
    for name in (stem, stem + ".gz"):
        path = os.path.join(directory, name)
        if os.path.exists(path):
            return path
    return None


def mnist_available(directory) -> bool:
    return bool(directory) and _find(directory, "train-images-idx3-ubyte") is not None \
        and _find(directory, "train-labels-idx1-ubyte") is not None


def load_mnist(directory, digit: int | None = None, split: str = "train") -> np.ndarray:
    """Images (N, 28, 28) uint8 from the standard IDX files, optionally one digit."""
    prefix = "train" if split == "train" else "t10k"
    ipath = _find(directory, f"{prefix}-images-idx3-ubyte")
    lpath = _find(directory, f"{prefix}-labels-idx1-ubyte")
    if ipath is None or lpath is None:
        raise FileNotFoundError(f"MNIST {split} files not found in {directory}")
    images = read_idx(ipath).data
    labels = read_idx(lpath).data
    if images.ndim != 3 or labels.shape[0] != images.shape[0]:
        raise IdxFormatError("image and label files do not match")
    if digit is not None:
        images = images[labels == digit]
    return images


# --- synthetic digits -----------------------------------------------------

# strokes of a "4" on a 28x28 canvas as (row0, col0, row1, col1)
_FOUR = ((5.0, 10.0, 16.0, 7.0), (16.0, 6.0, 16.0, 21.0), (5.0, 17.0, 24.0, 17.0))


def synthetic_digits(count: int, rng: np.random.Generator, size: int = 28, strokes=_FOUR) -> np.ndarray:
    """Seeded stand-in for MNIST: each stroke is an anisotropic Gaussian blob.

    Every image applies a random rotation, anisotropic scaling and shift to
    the stroke template, renders each stroke as a Gaussian elongated along
    it, and quantizes to 0..255 with a dark background.
    """
    ii, jj = np.meshgrid(np.arange(size, dtype=float), np.arange(size, dtype=float), indexing="ij")
    centre = (size - 1) / 2.0
    out = np.zeros((count, size, size), dtype=np.uint8)
    for n in range(count):
        theta = rng.uniform(-0.25, 0.25)
        sr, sc = rng.uniform(0.85, 1.15, size=2)
        shift = rng.uniform(-2.0, 2.0, size=2)
        width = rng.uniform(0.9, 1.4)
        rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
        T = rot @ np.diag([sr, sc])
        img = np.zeros((size, size))
        for r0, c0, r1, c1 in strokes:
            a = T @ (np.array([r0, c0]) - centre) + centre + shift
            b = T @ (np.array([r1, c1]) - centre) + centre + shift
            mid = 0.5 * (a + b)
            axis = b - a
            length = np.linalg.norm(axis)
            axis = axis / length
            dr, dc = ii - mid[0], jj - mid[1]
            along = dr * axis[0] + dc * axis[1]
            across = -dr * axis[1] + dc * axis[0]
            s_along = length / 3.0
            img = np.maximum(img, np.exp(-0.5 * (along / s_along) ** 2 - 0.5 * (across / width) ** 2))
        pix = np.round(255.0 * img)
        pix[pix < 26] = 0
        out[n] = pix.astype(np.uint8)
    return out
