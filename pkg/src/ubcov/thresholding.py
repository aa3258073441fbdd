"""Hard thresholding of block coordinates for the many-communities regime.

When the number of communities K (and with it the q = K + K(K+1)/2 free
coordinates) exceeds the sample size, the raw block-mean estimates are kept
only where their magnitude clears a level ``lambda``:

    a^_kk = a~_kk * 1{|a~_kk| > lambda},   b^_kl = b~_kl * 1{|b~_kl| > lambda}.

The level can be fixed, tied to the rate ``C * sqrt(log(K) / n)``, or chosen
by a sample-splitting rule: over N random splits the coordinates estimated
from one part are thresholded and compared, in the coordinate-weighted
Frobenius metric, against the raw coordinates from the held-out part; the
grid point minimising the averaged risk wins, ties going to the sparser
(larger) level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .blocks import (
    Partition,
    PdCheck,
    UniformBlock,
    frobenius_distance,
    is_positive_definite,
    make_uniform_block,
)
from .estimation import ThetaEstimate, estimate_from_data

__all__ = [
    "ThresholdConfig",
    "SelectedLambda",
    "LargeKEstimate",
    "hard_threshold_theta",
    "lambda_grid_from_coords",
    "select_lambda",
    "estimate_large_k",
]


@dataclass(frozen=True)
class ThresholdConfig:
    """Choice of the thresholding level.

    Exactly one of ``lam`` (explicit level), ``c_constant`` (level
    ``C * sqrt(log(K) / n)``) or ``auto`` (split-based selection) must be
    active.  ``splits``, ``grid_size`` and ``seed`` drive the selector;
    ``grid`` optionally overrides the automatic log-spaced grid.
    ``exempt_diagonal`` keeps the diagonal coefficients a~_kk unthresholded
    (off by default: thresholding a variance to zero can break positive
    definiteness, which is reported rather than repaired).
    """

    lam: float | None = None
    c_constant: float | None = None
    auto: bool = False
    splits: int = 50
    grid_size: int = 20
    seed: int = 0
    exempt_diagonal: bool = False
    grid: tuple[float, ...] | None = None

    def __post_init__(self):
        modes = (self.lam is not None) + (self.c_constant is not None) + bool(self.auto)
        if modes != 1:
            raise ValueError(
                "exactly one of lam, c_constant or auto must be specified"
            )
        if self.lam is not None and self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.c_constant is not None and self.c_constant <= 0:
            raise ValueError("the rate constant must be positive")
        if self.splits < 1:
            raise ValueError("splits must be at least 1")
        if self.grid_size < 2:
            raise ValueError("grid_size must be at least 2")


@dataclass(frozen=True)
class SelectedLambda:
    """Chosen level together with the evaluated risk curve."""

    lam: float
    grid: np.ndarray
    risks: np.ndarray


@dataclass(frozen=True)
class LargeKEstimate:
    """Thresholded coordinates with selection and sparsity diagnostics."""

    coords: UniformBlock
    lam: float
    selection: SelectedLambda | None
    kept_a: int
    kept_b_upper: int
    pd: PdCheck


def hard_threshold_theta(
    theta: ThetaEstimate | UniformBlock, lam: float, exempt_diagonal: bool = False
) -> UniformBlock:
    """Coordinatewise hard thresholding at level ``lam``.

    ``lam = 0`` reproduces the input coordinates.  With ``exempt_diagonal``
    the diagonal coefficients pass through untouched.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    coords = theta.coords if isinstance(theta, ThetaEstimate) else theta
    a = coords.a if exempt_diagonal else coords.a * (np.abs(coords.a) > lam)
    b = coords.b * (np.abs(coords.b) > lam)
    return make_uniform_block(a, b, coords.partition)


def lambda_grid_from_coords(coords: UniformBlock, grid_size: int) -> np.ndarray:
    """Log-spaced grid spanning [min nonzero coordinate / 2, max coordinate]."""
    mags = np.abs(theta_magnitudes(coords))
    nz = mags[mags > 0]
    if nz.size == 0:
        return np.zeros(1)
    lo, hi = nz.min() / 2.0, mags.max()
    if lo >= hi:
        return np.array([hi])
    return np.geomspace(lo, hi, grid_size)


def theta_magnitudes(coords: UniformBlock) -> np.ndarray:
    iu = np.triu_indices(coords.partition.count)
    return np.concatenate([coords.a, coords.b[iu]])


def _split_rng(seed: int, split: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(71, int(split)))
    return np.random.Generator(np.random.Philox(ss))


def select_lambda(
    x,
    partition: Partition,
    cfg: ThresholdConfig,
    centered: bool = True,
) -> SelectedLambda:
    """Split-based choice of the thresholding level.

    Each of the N splits holds out ``n2 = ceil(n / log n)`` rows; the risk of
    a level is the squared coordinate-weighted Frobenius distance between the
    thresholded estimate from the retained rows and the raw estimate from the
    held-out rows, averaged over splits.  Ties break toward the larger level.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if n < 4:
        raise ValueError("lambda selection needs at least 4 observations")
    n2 = math.ceil(n / math.log(n))
    n1 = n - n2
    if n2 < 2 or n1 < 2:
        raise ValueError(f"degenerate split sizes n1={n1}, n2={n2}")

    full = estimate_from_data(x, partition, centered=centered)
    grid = (
        np.asarray(cfg.grid, dtype=float)
        if cfg.grid is not None
        else lambda_grid_from_coords(full.coords, cfg.grid_size)
    )
    if np.any(grid < 0):
        raise ValueError("grid levels must be nonnegative")
    grid = np.sort(grid)

    risks = np.zeros(grid.shape[0])
    for split in range(cfg.splits):
        rng = _split_rng(cfg.seed, split)
        perm = rng.permutation(n)
        part1 = estimate_from_data(x[perm[:n1]], partition, centered=centered)
        part2 = estimate_from_data(x[perm[n1:]], partition, centered=centered)
        for j, lam in enumerate(grid):
            thr = hard_threshold_theta(part1, float(lam), cfg.exempt_diagonal)
            risks[j] += frobenius_distance(thr, part2.coords) ** 2
    risks /= cfg.splits

    # argmin; ties break toward the larger (sparser) level
    best_idx = int(np.nonzero(risks == risks.min())[0][-1])
    return SelectedLambda(lam=float(grid[best_idx]), grid=grid, risks=risks)


def resolve_lambda(
    x, partition: Partition, cfg: ThresholdConfig, centered: bool = True
) -> tuple[float, SelectedLambda | None]:
    """Concrete level for a config: explicit, rate-based, or selected."""
    if cfg.lam is not None:
        return float(cfg.lam), None
    if cfg.c_constant is not None:
        n = np.asarray(x).shape[0]
        k = partition.count
        return float(cfg.c_constant * math.sqrt(math.log(k) / n)), None
    sel = select_lambda(x, partition, cfg, centered=centered)
    return sel.lam, sel


def estimate_large_k(
    x,
    partition: Partition,
    cfg: ThresholdConfig,
    centered: bool = True,
) -> LargeKEstimate:
    """Raw coordinate estimation followed by hard thresholding.

    Diagnostics report the level used, how many coordinates survived, and
    whether the thresholded matrix is positive definite (no repair is
    attempted when it is not).
    """
    theta = estimate_from_data(x, partition, centered=centered)
    lam, selection = resolve_lambda(x, partition, cfg, centered=centered)
    coords = hard_threshold_theta(theta, lam, cfg.exempt_diagonal)
    iu = np.triu_indices(partition.count)
    return LargeKEstimate(
        coords=coords,
        lam=lam,
        selection=selection,
        kept_a=int(np.count_nonzero(coords.a)),
        kept_b_upper=int(np.count_nonzero(coords.b[iu])),
        pd=is_positive_definite(coords),
    )
