"""Two-step estimation when isolated features sit outside every community.

Columns are assumed ordered communities-first, singletons-last.  The
covariance of the full feature set then splits into the p x p community
block, a p x d coupling block D1 and the d x d singleton block D2.  The
community block is estimated in closed form through the block coordinates;
the singleton-related blocks are estimated by entrywise soft or hard
thresholding of the corresponding sample covariance parts (the variances on
the diagonal of D2 are preserved by default).  The two pieces are assembled
into a symmetric (p + d) x (p + d) estimate; its minimum eigenvalue is
reported and, unless explicitly requested, not repaired.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .blocks import Partition, UniformBlock, expand, symmetrize
from .estimation import estimate_from_data, sample_covariance
from .thresholding import ThresholdConfig

__all__ = [
    "AugmentedCov",
    "split_augmented",
    "soft_threshold_dense",
    "hard_threshold_dense",
    "select_lambda_dense",
    "estimate_augmented",
]

# Eigenvalue floor used by the optional clip, relative to the largest one.
CLIP_RTOL = 1e-8


@dataclass(frozen=True)
class AugmentedCov:
    """Assembled estimate for communities plus singletons.

    ``ub``, ``d1`` and ``d2`` are the raw two-step components;
    ``matrix`` is the final dense symmetric estimate (equal to the block
    assembly unless eigenvalue clipping was requested and triggered).
    """

    ub: UniformBlock
    d1: np.ndarray
    d2: np.ndarray
    d: int
    lam: float
    min_eigenvalue: float
    clipped: bool
    matrix: np.ndarray

    def assemble(self) -> np.ndarray:
        """Dense symmetric (p + d) x (p + d) estimate."""
        return self.matrix


def split_augmented(s, partition: Partition, d: int):
    """Partition a (p + d) x (p + d) covariance into community and singleton parts.

    Returns ``(community, s1, s2)`` where ``community`` is the leading
    p x p block, ``s1`` the p x d coupling block and ``s2`` the trailing
    d x d singleton block.
    """
    s = np.asarray(s, dtype=float)
    if d < 0:
        raise ValueError("singleton count must be nonnegative")
    p = partition.total
    if s.shape != (p + d, p + d):
        raise ValueError(f"matrix is {s.shape}, expected ({p + d}, {p + d})")
    return s[:p, :p], s[:p, p:], s[p:, p:]


def soft_threshold_dense(m, lam: float, preserve_diagonal: bool = True) -> np.ndarray:
    """Entrywise ``sign(x) * (|x| - lam)+``; the diagonal is kept when asked."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    m = np.asarray(m, dtype=float)
    out = np.sign(m) * np.maximum(np.abs(m) - lam, 0.0)
    if preserve_diagonal and m.ndim == 2 and m.shape[0] == m.shape[1]:
        np.fill_diagonal(out, np.diagonal(m))
    return out


def hard_threshold_dense(m, lam: float, preserve_diagonal: bool = True) -> np.ndarray:
    """Entrywise ``x * 1{|x| > lam}``; the diagonal is kept when asked."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    m = np.asarray(m, dtype=float)
    out = m * (np.abs(m) > lam)
    if preserve_diagonal and m.ndim == 2 and m.shape[0] == m.shape[1]:
        np.fill_diagonal(out, np.diagonal(m))
    return out


def _dense_threshold(m, lam: float, mode: str, preserve_diagonal: bool = True) -> np.ndarray:
    if mode == "soft":
        return soft_threshold_dense(m, lam, preserve_diagonal)
    if mode == "hard":
        return hard_threshold_dense(m, lam, preserve_diagonal)
    raise ValueError(f"unknown thresholding mode {mode!r}")


def _split_rng(seed: int, split: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(72, int(split)))
    return np.random.Generator(np.random.Philox(ss))


def select_lambda_dense(
    x,
    cfg: ThresholdConfig,
    mode: str = "soft",
    mask: np.ndarray | None = None,
    centered: bool = True,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Split-based level choice for dense entrywise thresholding.

    Risk of a level is the squared Frobenius distance, over the entries
    selected by ``mask`` (default: off-diagonal ones), between the
    thresholded covariance of the retained rows and the raw covariance of
    the held-out rows, averaged over splits.  Returns (level, grid, risks).
    """
    x = np.asarray(x, dtype=float)
    n, m_cols = x.shape
    if n < 4:
        raise ValueError("lambda selection needs at least 4 observations")
    n2 = math.ceil(n / math.log(n))
    n1 = n - n2
    if n2 < 2 or n1 < 2:
        raise ValueError(f"degenerate split sizes n1={n1}, n2={n2}")
    if mask is None:
        mask = ~np.eye(m_cols, dtype=bool)
    mask = np.asarray(mask, dtype=bool)

    full = sample_covariance(x, centered=centered)
    mags = np.abs(full[mask])
    nz = mags[mags > 0]
    if cfg.grid is not None:
        grid = np.sort(np.asarray(cfg.grid, dtype=float))
    elif nz.size == 0:
        grid = np.zeros(1)
    else:
        lo, hi = nz.min() / 2.0, mags.max()
        grid = np.geomspace(lo, hi, cfg.grid_size) if lo < hi else np.array([hi])

    risks = np.zeros(grid.shape[0])
    for split in range(cfg.splits):
        rng = _split_rng(cfg.seed, split)
        perm = rng.permutation(n)
        s1 = sample_covariance(x[perm[:n1]], centered=centered)
        s2 = sample_covariance(x[perm[n1:]], centered=centered)
        for j, lam in enumerate(grid):
            thr = _dense_threshold(s1, float(lam), mode, preserve_diagonal=True)
            risks[j] += float(np.sum((thr - s2)[mask] ** 2))
    risks /= cfg.splits
    best_idx = int(np.nonzero(risks == risks.min())[0][-1])
    return float(grid[best_idx]), grid, risks


def estimate_augmented(
    x,
    partition: Partition,
    d: int,
    lambda_singleton: float | None = None,
    mode: str = "soft",
    clip_psd: bool = False,
    centered: bool = True,
    cfg: ThresholdConfig | None = None,
) -> AugmentedCov:
    """Closed-form community estimate merged with thresholded singleton blocks.

    ``lambda_singleton=None`` selects the level by the split rule applied to
    the singleton-related entries (couplings and singleton off-diagonals).
    ``d = 0`` reduces to the plain community pipeline.  With ``clip_psd`` the
    assembled matrix has its spectrum floored at ``1e-8`` times the largest
    eigenvalue (off by default; the minimum eigenvalue is always reported).
    """
    x = np.asarray(x, dtype=float)
    n, total = x.shape
    p = partition.total
    if total != p + d:
        raise ValueError(f"data has {total} columns, partition + singletons give {p + d}")

    theta = estimate_from_data(x[:, :p], partition, centered=centered)
    if d == 0:
        coords = theta.coords
        dense = expand(coords)
        min_eig = float(np.linalg.eigvalsh(dense).min())
        return AugmentedCov(
            ub=coords, d1=np.zeros((p, 0)), d2=np.zeros((0, 0)), d=0,
            lam=0.0, min_eigenvalue=min_eig, clipped=False, matrix=dense,
        )

    s = sample_covariance(x, centered=centered)
    _, s1, s2 = split_augmented(s, partition, d)

    if lambda_singleton is None:
        cfg = cfg if cfg is not None else ThresholdConfig(auto=True)
        # threshold region: couplings plus singleton block off-diagonals
        mask = np.zeros((p + d, p + d), dtype=bool)
        mask[:p, p:] = True
        mask[p:, :p] = True
        mask[p:, p:] = ~np.eye(d, dtype=bool)
        lam, _, _ = select_lambda_dense(x, cfg, mode=mode, mask=mask, centered=centered)
    else:
        if lambda_singleton < 0:
            raise ValueError("lambda must be nonnegative")
        lam = float(lambda_singleton)

    d1 = _dense_threshold(s1, lam, mode, preserve_diagonal=False)
    d2 = symmetrize(_dense_threshold(s2, lam, mode, preserve_diagonal=True))

    top = expand(theta.coords)
    assembled = np.block([[top, d1], [d1.T, d2]])
    eigs, vecs = np.linalg.eigh(assembled)
    min_eig = float(eigs.min())
    clipped = False
    if clip_psd and min_eig < CLIP_RTOL * max(eigs.max(), 0.0):
        floor = CLIP_RTOL * max(eigs.max(), 0.0)
        assembled = symmetrize(vecs @ (np.maximum(eigs, floor)[:, None] * vecs.T))
        clipped = True
    return AugmentedCov(
        ub=theta.coords, d1=d1, d2=d2, d=d,
        lam=lam, min_eigenvalue=min_eig, clipped=clipped, matrix=assembled,
    )
