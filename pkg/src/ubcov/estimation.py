"""Closed-form estimation of uniform-block covariance and precision matrices.

The free parameters are theta = (a_1, ..., a_K, b_11, b_12, ..., b_KK), the
diagonal coefficients followed by the upper triangle of the block coefficient
matrix in row-major order, q = K + K(K+1)/2 in total.  The estimators are
block averages of the sample covariance matrix:

* ``b~_kl`` (k != l) is the mean of all entries of block S_kl,
* ``b~_kk`` is the mean of the off-diagonal entries of S_kk,
* ``a~_kk + b~_kk`` is the mean of the diagonal entries of S_kk,

which are simultaneously the maximum likelihood and minimum variance
unbiased estimators under Gaussian sampling.  Exact finite-sample variances
and covariances of all estimators have closed forms driven by three block
summaries of the covariance matrix (block entry sums, block row sums, block
squared Frobenius norms); see :func:`alpha_beta_covariance`.

Sample-size convention: the variance formulas carry ``n - 1`` denominators,
matching the mean-centered, divisor-(n-1) sample covariance.  For the
known-mean, divisor-n variant the same formulas apply with the effective
sample size ``n + 1`` (one extra degree of freedom); pipelines track this in
``n_eff`` and all variance helpers take the effective value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .blocks import (
    NotPositiveDefiniteError,
    Partition,
    UniformBlock,
    inverse,
    is_positive_definite,
    make_uniform_block,
    symmetrize,
)

__all__ = [
    "BlockStats",
    "ThetaEstimate",
    "sample_covariance",
    "block_stats",
    "estimate_theta",
    "estimate_from_data",
    "estimate_correlation_mode",
    "plugin_covariance",
    "plugin_precision",
    "exact_variance_theta",
    "alpha_beta_covariance",
    "phi_matrix",
    "exact_covariance_matrix",
    "standard_errors",
    "compute_inference",
    "wald_ci",
    "normal_quantile",
    "upper_indices",
    "theta_names",
    "theta_vector",
]

# z for a central 95% interval, from normal_quantile(0.975).
Z_975 = 1.9599639845


def _as_data_matrix(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ValueError("data must be a 2-d array of shape (n, p)")
    n, p = x.shape
    if n < 2:
        raise ValueError("at least 2 observations are required")
    if p < 2:
        raise ValueError("at least 2 variables are required")
    if not np.isfinite(x).all():
        raise ValueError("data contains non-finite entries")
    return x


def sample_covariance(x, centered: bool = True) -> np.ndarray:
    """Sample covariance matrix of the rows of ``x``.

    ``centered=True`` subtracts column means and divides by n - 1;
    ``centered=False`` treats the mean as known zero and divides by n.
    """
    x = _as_data_matrix(x)
    n = x.shape[0]
    if centered:
        xc = x - x.mean(axis=0, keepdims=True)
        s = xc.T @ xc / (n - 1)
    else:
        s = x.T @ x / n
    return symmetrize(s)


@dataclass(frozen=True)
class BlockStats:
    """Per-block summaries of a sample covariance matrix.

    ``trace_diag[k]`` is the trace of diagonal block S_kk and
    ``block_sum[k, l]`` the sum of all entries of block S_kl.  ``n`` is the
    number of observations; ``n_eff`` the effective sample size for the
    (n - 1)-denominator variance formulas (equals ``n`` for the centered
    estimator, ``n + 1`` for the known-mean divisor-n estimator).
    """

    n: int
    partition: Partition
    trace_diag: np.ndarray
    block_sum: np.ndarray
    n_eff: int

    def __post_init__(self):
        k = self.partition.count
        if self.trace_diag.shape != (k,) or self.block_sum.shape != (k, k):
            raise ValueError("block summaries do not match the partition")
        if not (np.isfinite(self.trace_diag).all() and np.isfinite(self.block_sum).all()):
            raise ValueError("block summaries must be finite")


def block_stats(s, partition: Partition, n: int, n_eff: int | None = None) -> BlockStats:
    """Aggregate a dense covariance matrix into per-block traces and sums."""
    s = np.asarray(s, dtype=float)
    p = partition.total
    if s.shape != (p, p):
        raise ValueError(f"matrix is {s.shape}, partition expects ({p}, {p})")
    lab = partition.labels()
    k = partition.count
    u = np.zeros((p, k))
    u[np.arange(p), lab] = 1.0
    bsum = symmetrize(u.T @ s @ u)
    tdiag = np.bincount(lab, weights=np.diagonal(s), minlength=k)
    return BlockStats(
        n=int(n),
        partition=partition,
        trace_diag=tdiag,
        block_sum=bsum,
        n_eff=int(n if n_eff is None else n_eff),
    )


@dataclass
class ThetaEstimate:
    """Estimated coordinates with the block-mean reparameterisation.

    ``alpha[k]`` is the mean diagonal entry of S_kk (= a_k + b_kk) and
    ``beta[k, l]`` the mean entry of S_kl (= b_kl off the diagonal,
    a_k / p_k + b_kk on it).  ``se_a`` / ``se_b`` and ``cov_theta`` are
    filled by :func:`compute_inference`.
    """

    coords: UniformBlock
    alpha: np.ndarray
    beta: np.ndarray
    n: int
    n_eff: int
    se_a: np.ndarray | None = field(default=None)
    se_b: np.ndarray | None = field(default=None)
    cov_theta: np.ndarray | None = field(default=None)

    @property
    def partition(self) -> Partition:
        return self.coords.partition

    def theta(self) -> np.ndarray:
        return theta_vector(self.coords.a, self.coords.b)


def estimate_theta(stats: BlockStats) -> ThetaEstimate:
    """Closed-form (UMVUE) estimates of the block coordinates."""
    part = stats.partition
    p = part.as_array()
    alpha = stats.trace_diag / p
    beta = stats.block_sum / np.outer(p, p)
    b = beta.copy()
    b_diag = (np.diag(stats.block_sum) - stats.trace_diag) / (p * (p - 1.0))
    np.fill_diagonal(b, b_diag)
    a = alpha - b_diag
    coords = make_uniform_block(a, b, part)
    return ThetaEstimate(coords=coords, alpha=alpha, beta=symmetrize(beta), n=stats.n, n_eff=stats.n_eff)


def estimate_from_data(x, partition: Partition, centered: bool = True) -> ThetaEstimate:
    """Full pipeline: sample covariance, block summaries, coordinate estimates."""
    x = _as_data_matrix(x)
    n = x.shape[0]
    s = sample_covariance(x, centered=centered)
    stats = block_stats(s, partition, n=n, n_eff=n if centered else n + 1)
    return estimate_theta(stats)


def estimate_correlation_mode(x, partition: Partition) -> ThetaEstimate:
    """Estimate coordinates of the sample correlation matrix.

    Columns are standardised, so every diagonal entry equals one and the
    estimates satisfy ``a~_kk + b~_kk = 1`` exactly.
    """
    x = _as_data_matrix(x)
    n = x.shape[0]
    xc = x - x.mean(axis=0, keepdims=True)
    sd = xc.std(axis=0, ddof=1)
    dead = np.nonzero(sd == 0.0)[0]
    if dead.size:
        raise ValueError(f"zero-variance column(s) at index {dead.tolist()}")
    z = xc / sd
    r = symmetrize(z.T @ z / (n - 1))
    np.fill_diagonal(r, 1.0)
    stats = block_stats(r, partition, n=n, n_eff=n)
    return estimate_theta(stats)


def plugin_covariance(theta: ThetaEstimate) -> UniformBlock:
    """The estimated covariance matrix in coordinates."""
    return theta.coords


def plugin_precision(theta: ThetaEstimate) -> UniformBlock:
    """Coordinates of the inverse of the estimated covariance matrix.

    Defined only when the estimate is positive definite (all ``a~_kk > 0``
    and the Delta spectrum positive); otherwise raises
    :class:`NotPositiveDefiniteError` carrying the offending eigenvalue.
    """
    check = is_positive_definite(theta.coords)
    if not check.is_pd:
        raise NotPositiveDefiniteError(
            f"precision undefined: estimate not positive definite "
            f"(min eigenvalue {check.min_eigenvalue:.6g})",
            check.min_eigenvalue,
        )
    return inverse(theta.coords)


# ---------------------------------------------------------------------------
# Exact finite-sample variances and covariances
# ---------------------------------------------------------------------------


def _block_summaries(a: np.ndarray, b: np.ndarray, partition: Partition):
    """Entry sums, row sums and squared Frobenius norms of each block."""
    p = partition.as_array()
    s_blk = np.diag(p * a) + np.outer(p, p) * b  # sum of entries of block (k, l)
    h = np.diag(a) + b * p[None, :]              # common row sum within block (k, l)
    f2 = np.outer(p, p) * b**2                   # squared Frobenius norm of block (k, l)
    bd = np.diag(b)
    np.fill_diagonal(f2, p * (a + bd) ** 2 + p * (p - 1) * bd**2)
    return s_blk, h, f2


def exact_variance_theta(a, b, partition: Partition, n: int):
    """Exact variances of (a~, b~) evaluated at the given coordinates.

    Returns ``(var_a, var_b)`` with shapes (K,) and (K, K):

    * ``var(a~_kk)   = 2 a_kk^2 / ((n-1)(p_k - 1))``
    * ``var(b~_kk)   = 2 {(a_kk + p_k b_kk)^2 - (2 a_kk + p_k b_kk) b_kk}
      / ((n-1) p_k (p_k - 1))``
    * ``var(b~_kl)   = {2 p_k p_l b_kl^2 + 2 (a_k + p_k b_kk)(a_l + p_l b_ll)}
      / (2 (n-1) p_k p_l)`` for k != l.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if n < 2:
        raise ValueError("n must be at least 2")
    m = n - 1.0
    p = partition.as_array()
    bd = np.diag(b)
    g = a + p * bd
    var_a = 2.0 * a**2 / (m * (p - 1.0))
    var_b = (2.0 * np.outer(p, p) * b**2 + 2.0 * np.outer(g, g)) / (
        2.0 * m * np.outer(p, p)
    )
    var_b_diag = 2.0 * (g**2 - (2.0 * a + p * bd) * bd) / (m * p * (p - 1.0))
    np.fill_diagonal(var_b, var_b_diag)
    return var_a, var_b


def upper_indices(k: int) -> list[tuple[int, int]]:
    """Row-major upper-triangle index pairs (diagonal included)."""
    return [(i, j) for i in range(k) for j in range(i, k)]


def theta_names(k: int) -> list[str]:
    """Parameter labels matching the theta vector layout, 1-based."""
    names = [f"a[{i + 1}]" for i in range(k)]
    names += [f"b[{i + 1},{j + 1}]" for i, j in upper_indices(k)]
    return names


def theta_vector(a, b) -> np.ndarray:
    """Flatten coordinates into the canonical q-vector."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    k = a.shape[0]
    iu = np.triu_indices(k)
    return np.concatenate([a, b[iu]])


def alpha_beta_covariance(a, b, partition: Partition, n: int) -> np.ndarray:
    """Exact q x q covariance of the block-mean estimators (alpha~, beta~).

    With ``s_kl`` the entry sum of block (k, l) of the covariance matrix,
    ``h_kl`` its common row sum and ``f2_kl`` its squared Frobenius norm,

    * ``cov(alpha~_k, alpha~_l)    = 2 f2_kl / ((n-1) p_k p_l)``
    * ``cov(alpha~_k, beta~_l1,l2) = 2 h_k,l1 h_k,l2 / ((n-1) p_l1 p_l2)``
    * ``cov(beta~_k1,k2, beta~_l1,l2)
      = (s_k1,l1 s_k2,l2 + s_k1,l2 s_k2,l1) / ((n-1) p_k1 p_k2 p_l1 p_l2)``

    uniformly over all index patterns (diagonal blocks included).  Each case
    of the piecewise variance/covariance display specialises these three
    identities; the test suite asserts the correspondence case by case and
    against a Monte Carlo oracle.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if n < 2:
        raise ValueError("n must be at least 2")
    m = n - 1.0
    p = partition.as_array()
    k = partition.count
    s_blk, h, f2 = _block_summaries(a, b, partition)

    pairs = upper_indices(k)
    k1 = np.array([i for i, _ in pairs])
    k2 = np.array([j for _, j in pairs])
    q = k + len(pairs)
    cov = np.empty((q, q))

    cov[:k, :k] = 2.0 * f2 / (m * np.outer(p, p))
    cross = 2.0 * h[:, k1] * h[:, k2] / (m * (p[k1] * p[k2])[None, :])
    cov[:k, k:] = cross
    cov[k:, :k] = cross.T
    s11 = s_blk[np.ix_(k1, k1)]
    s22 = s_blk[np.ix_(k2, k2)]
    s12 = s_blk[np.ix_(k1, k2)]
    s21 = s_blk[np.ix_(k2, k1)]
    denom = m * np.outer(p[k1] * p[k2], p[k1] * p[k2])
    cov[k:, k:] = (s11 * s22 + s12 * s21) / denom
    return symmetrize(cov)


def phi_matrix(partition: Partition) -> np.ndarray:
    """Linear map from (alpha~, beta~) to theta~ = (a~, b~).

    Per community the 2 x 2 action on (alpha_kk, beta_kk) is
    ``[[p_k, -p_k], [-1, p_k]] / (p_k - 1)``; off-diagonal betas map
    identically.  Contains partition sizes only.
    """
    k = partition.count
    p = partition.as_array()
    pairs = upper_indices(k)
    q = k + len(pairs)
    phi = np.zeros((q, q))
    diag_pos = {kk: k + i for i, (kk, ll) in enumerate(pairs) if kk == ll}
    for kk in range(k):
        c = p[kk] / (p[kk] - 1.0)
        phi[kk, kk] = c
        phi[kk, diag_pos[kk]] = -c
    for i, (kk, ll) in enumerate(pairs):
        row = k + i
        if kk == ll:
            phi[row, kk] = -1.0 / (p[kk] - 1.0)
            phi[row, diag_pos[kk]] = p[kk] / (p[kk] - 1.0)
        else:
            phi[row, row] = 1.0
    return phi


def exact_covariance_matrix(a, b, partition: Partition, n: int) -> np.ndarray:
    """Exact q x q covariance of theta~ = (a~, b~), ordered like theta_vector."""
    cov_ab = alpha_beta_covariance(a, b, partition, n)
    phi = phi_matrix(partition)
    return symmetrize(phi @ cov_ab @ phi.T)


def standard_errors(theta: ThetaEstimate):
    """Plug-in standard errors of (a~, b~) at the estimated coordinates."""
    var_a, var_b = exact_variance_theta(
        theta.coords.a, theta.coords.b, theta.partition, theta.n_eff
    )
    return np.sqrt(np.maximum(var_a, 0.0)), np.sqrt(np.maximum(var_b, 0.0))


def compute_inference(theta: ThetaEstimate, full_covariance: bool = False) -> ThetaEstimate:
    """Fill ``se_a`` / ``se_b`` (and optionally ``cov_theta``) in place."""
    theta.se_a, theta.se_b = standard_errors(theta)
    if full_covariance:
        theta.cov_theta = exact_covariance_matrix(
            theta.coords.a, theta.coords.b, theta.partition, theta.n_eff
        )
    return theta


# ---------------------------------------------------------------------------
# Normal quantile and Wald intervals
# ---------------------------------------------------------------------------

# Rational approximation of the standard normal quantile (relative error
# below 1.15e-9 everywhere) refined with one Halley step, giving accuracy
# near machine precision.  normal_quantile(0.975) = 1.9599639845.
_NQ_A = (
    -3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
    1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00,
)
_NQ_B = (
    -5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
    6.680131188771972e01, -1.328068155288572e01,
)
_NQ_C = (
    -7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
    -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00,
)
_NQ_D = (
    7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
    3.754408661907416e00,
)


def normal_quantile(prob: float) -> float:
    """Inverse standard normal CDF for ``0 < prob < 1``."""
    p = float(prob)
    if not 0.0 < p < 1.0:
        raise ValueError("probability must be strictly between 0 and 1")
    a, b, c, d = _NQ_A, _NQ_B, _NQ_C, _NQ_D
    p_low = 0.02425
    if p < p_low:
        qv = math.sqrt(-2.0 * math.log(p))
        x = (((((c[0] * qv + c[1]) * qv + c[2]) * qv + c[3]) * qv + c[4]) * qv + c[5]) / (
            (((d[0] * qv + d[1]) * qv + d[2]) * qv + d[3]) * qv + 1.0
        )
    elif p <= 1.0 - p_low:
        qv = p - 0.5
        r = qv * qv
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * qv / (
            ((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0
        )
    else:
        qv = math.sqrt(-2.0 * math.log(1.0 - p))
        x = -(((((c[0] * qv + c[1]) * qv + c[2]) * qv + c[3]) * qv + c[4]) * qv + c[5]) / (
            (((d[0] * qv + d[1]) * qv + d[2]) * qv + d[3]) * qv + 1.0
        )
    # One Halley refinement against the exact CDF.
    err = 0.5 * math.erfc(-x / math.sqrt(2.0)) - p
    u = err * math.sqrt(2.0 * math.pi) * math.exp(x * x / 2.0)
    return x - u / (1.0 + x * u / 2.0)


def wald_ci(estimate, se, level: float = 0.95):
    """Symmetric normal-quantile interval ``estimate +/- z * se``."""
    if not 0.0 < level < 1.0:
        raise ValueError("confidence level must be strictly between 0 and 1")
    se_arr = np.asarray(se, dtype=float)
    if np.any(se_arr < 0.0):
        raise ValueError("standard errors must be nonnegative")
    z = normal_quantile((1.0 + level) / 2.0)
    est = np.asarray(estimate, dtype=float)
    lo, hi = est - z * se_arr, est + z * se_arr
    if np.isscalar(estimate) or est.ndim == 0:
        return float(lo), float(hi)
    return lo, hi
