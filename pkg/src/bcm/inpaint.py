"""Image recovery by barycentric coordinates.

A query digit is corrupted, its coordinates against a set of same-digit
references are estimated from the corrupted measures, and the recovered
image is the barycenter of the clean references at those coordinates.  A
Euclidean projection onto the convex hull of the references serves as the
baseline.  Both are scored against the clean query by the entropic W2^2
surrogate on the pixel grid.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .estimate import estimate_coords_pointcloud
from .gaussian import trial_rng
from .images import (
    central_block,
    corrupt_noise,
    corrupt_noise_expected,
    corrupt_occlude,
    grid_to_pointcloud,
    grid_w2_sq,
    image_to_measure,
    linear_recovery,
    load_mnist,
    synthetic_digits,
)
from .synthesis import ibp_barycenter

MODES = ("occlude", "noise")
COLUMNS = ("trial", "w2_bcm", "w2_linear", "bcm_wins", "objective")


@dataclass
class InpaintConfig:
    """Experiment parameters.

    ``epsilon`` regularizes the coordinate estimate, ``ibp_epsilon`` the
    barycenter reconstruction, and ``score_epsilon`` the W2^2 surrogate used
    for scoring.  Without ``mnist_dir`` the images come from the seeded
    synthetic digit generator.
    """

    mode: str = "occlude"
    alpha: float = 0.5
    p: int = 10
    trials: int = 50
    seed: int = 0
    epsilon: float = 10.0
    ibp_epsilon: float = 1.0
    ibp_method: str = "dense"
    ibp_tol: float = 1e-7
    ibp_max_iters: int = 5000
    score_epsilon: float = 0.1
    score_tol: float = 1e-7
    score_max_iters: int = 1_000_000
    tol: float = 1e-7
    max_iters: int = 10_000
    block: int = 8
    digit: int = 4
    mnist_dir: str | None = None
    query_in_refs: bool = False
    threads: int = 1

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha must lie in [0, 1]")
        if self.p < 1 or self.trials < 1:
            raise ConfigError("p and trials must be positive")
        for name in ("epsilon", "ibp_epsilon", "score_epsilon"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.ibp_method not in ("dense", "separable", "log"):
            raise ConfigError(f"unknown ibp_method {self.ibp_method!r}")
        if not 0 <= self.block <= 28:
            raise ConfigError("block must fit in the 28x28 grid")

    @property
    def source(self) -> str:
        return "mnist" if self.mnist_dir else "synthetic"


@dataclass(frozen=True, eq=False)
class InpaintTrial:
    trial: int
    original: np.ndarray
    corrupted: np.ndarray
    bcm: np.ndarray
    linear: np.ndarray
    lam: np.ndarray
    lam_linear: np.ndarray
    objective: float
    w2_bcm: float
    w2_linear: float

    def row(self):
        return (self.trial, self.w2_bcm, self.w2_linear, int(self.w2_bcm <= self.w2_linear), self.objective)


def _images(cfg: InpaintConfig, rng, pool):
    """Query image followed by ``p`` reference images."""
    count = cfg.p if cfg.query_in_refs else cfg.p + 1
    if pool is None:
        imgs = synthetic_digits(count, rng)
    else:
        if len(pool) < count:
            raise ConfigError(f"only {len(pool)} images of digit {cfg.digit}, need {count}")
        imgs = pool[np.sort(rng.choice(len(pool), size=count, replace=False))]
    ms = [image_to_measure(im) for im in imgs]
    if cfg.query_in_refs:
        return ms[0], ms
    return ms[0], ms[1:]


def run_trial(cfg: InpaintConfig, trial: int, pool=None) -> InpaintTrial:
    query, refs = _images(cfg, trial_rng(cfg.seed, trial), pool)
    if cfg.mode == "noise":
        corrupted = corrupt_noise(query, cfg.alpha, trial_rng(cfg.seed, trial, 1))
        # references see the expected noise, the uniform grid
        corrupted_refs = [corrupt_noise_expected(r, cfg.alpha) for r in refs]
    else:
        block = central_block(query.shape, cfg.block)
        corrupted = corrupt_occlude(query, block)
        corrupted_refs = [corrupt_occlude(r, block) for r in refs]

    est = estimate_coords_pointcloud(
        grid_to_pointcloud(corrupted),
        [grid_to_pointcloud(r) for r in corrupted_refs],
        cfg.epsilon,
        tol=cfg.tol,
        max_iters=cfg.max_iters,
        threads=cfg.threads,
    )
    bcm = ibp_barycenter(
        est.lam, refs, cfg.ibp_epsilon, max_iters=cfg.ibp_max_iters, tol=cfg.ibp_tol, method=cfg.ibp_method
    )
    lam_lin, lin = linear_recovery(corrupted, corrupted_refs, refs)
    return InpaintTrial(
        trial=trial,
        original=query,
        corrupted=corrupted,
        bcm=bcm,
        linear=lin,
        lam=est.lam,
        lam_linear=lam_lin,
        objective=est.value,
        w2_bcm=grid_w2_sq(query, bcm, cfg.score_epsilon, tol=cfg.score_tol, max_iters=cfg.score_max_iters),
        w2_linear=grid_w2_sq(query, lin, cfg.score_epsilon, tol=cfg.score_tol, max_iters=cfg.score_max_iters),
    )


def run_inpaint(cfg: InpaintConfig, on_trial=None) -> list[InpaintTrial]:
    """Run every trial in order; ``on_trial`` is called with each result."""
    cfg.validate()
    pool = load_mnist(cfg.mnist_dir, cfg.digit) if cfg.mnist_dir else None
    out = []
    for t in range(cfg.trials):
        res = run_trial(cfg, t, pool)
        if on_trial is not None:
            on_trial(res)
        out.append(res)
    return out


def summarize(results) -> dict:
    bcm = np.array([r.w2_bcm for r in results])
    lin = np.array([r.w2_linear for r in results])
    return {
        "trials": len(results),
        "mean_w2_bcm": float(bcm.mean()),
        "mean_w2_linear": float(lin.mean()),
        "bcm_win_rate": float(np.mean(bcm <= lin)),
    }
