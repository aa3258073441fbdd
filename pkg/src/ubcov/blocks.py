"""Compressed coordinates and exact algebra for uniform-block matrices.

A p x p symmetric matrix built from K communities of sizes (p_1, ..., p_K)
with diagonal blocks ``a_k * I + b_kk * J`` and constant off-diagonal blocks
``b_kl * 1`` is fully determined by the K diagonal coefficients, the K x K
block coefficient matrix and the community sizes.  Every operation in this
module works on those K x K coordinates in O(K^3); ``expand`` materialises
the dense p x p form and exists for oracles, I/O and interop only.

Key facts used throughout (with P = diag(p_1, ..., p_K)):

* the spectrum consists of each ``a_k`` with multiplicity ``p_k - 1`` plus
  the K eigenvalues of ``Delta = A + B P``;
* ``Delta`` is similar to the symmetric matrix ``A + P^(1/2) B P^(1/2)``,
  so its eigenvalues are real and can be obtained with a symmetric solver;
* the matrix is positive definite iff all ``a_k > 0`` and all eigenvalues
  of ``Delta`` are positive;
* the inverse has coordinates ``(A^-1, -Delta^-1 B A^-1)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SingularityError",
    "NotPositiveDefiniteError",
    "Partition",
    "UniformBlock",
    "PdCheck",
    "make_uniform_block",
    "identity",
    "expand",
    "add",
    "subtract",
    "multiply",
    "trace_ub",
    "delta_matrix",
    "eigenvalues",
    "is_positive_definite",
    "inverse",
    "frobenius_distance",
    "spectral_distance",
    "symmetrize",
]

# Relative cutoffs below which A or Delta are treated as numerically singular.
A_SINGULAR_RTOL = 1e-12
DELTA_COND_MAX = 1e12


class SingularityError(ValueError):
    """A or Delta is numerically singular, the inverse is unreliable."""


class NotPositiveDefiniteError(ValueError):
    """Positive definiteness required but not satisfied."""

    def __init__(self, message: str, min_eigenvalue: float):
        super().__init__(message)
        self.min_eigenvalue = float(min_eigenvalue)


def symmetrize(m: np.ndarray) -> np.ndarray:
    """Return the symmetric part (M + M^T) / 2 as a new array."""
    m = np.asarray(m, dtype=float)
    return (m + m.T) / 2.0


@dataclass(frozen=True)
class Partition:
    """Community sizes (p_1, ..., p_K), each at least 2."""

    sizes: tuple[int, ...]

    def __post_init__(self):
        if len(self.sizes) == 0:
            raise ValueError("partition needs at least one community")
        clean = []
        for s in self.sizes:
            if int(s) != s or int(s) < 2:
                raise ValueError(f"community sizes must be integers >= 2, got {s!r}")
            clean.append(int(s))
        object.__setattr__(self, "sizes", tuple(clean))

    @property
    def count(self) -> int:
        """Number of communities K."""
        return len(self.sizes)

    @property
    def total(self) -> int:
        """Expanded dimension p = sum of community sizes."""
        return sum(self.sizes)

    @property
    def n_params(self) -> int:
        """Number of free coordinates q = K + K(K+1)/2."""
        k = self.count
        return k + k * (k + 1) // 2

    def as_array(self) -> np.ndarray:
        return np.array(self.sizes, dtype=float)

    def offsets(self) -> np.ndarray:
        """Start offsets of each community, strictly increasing."""
        return np.concatenate([[0], np.cumsum(self.sizes)[:-1]]).astype(int)

    def slices(self) -> list[slice]:
        off = self.offsets()
        return [slice(int(o), int(o + s)) for o, s in zip(off, self.sizes)]

    def labels(self) -> np.ndarray:
        """Community index of each expanded coordinate, length p."""
        return np.repeat(np.arange(self.count), self.sizes)


@dataclass(frozen=True)
class UniformBlock:
    """Coordinates (a, b, partition) of a uniform-block matrix.

    ``a`` holds the K diagonal coefficients, ``b`` the K x K block
    coefficients.  Instances built through :func:`make_uniform_block` carry a
    bitwise-symmetric ``b``; products of non-commuting operands are the only
    construction that stores a non-symmetric ``b`` (their dense expansion is
    genuinely non-symmetric).  Arrays are read-only; treat instances as
    immutable values.
    """

    a: np.ndarray
    b: np.ndarray
    partition: Partition

    def __post_init__(self):
        k = self.partition.count
        if self.a.shape != (k,):
            raise ValueError(f"a must have shape ({k},), got {self.a.shape}")
        if self.b.shape != (k, k):
            raise ValueError(f"b must have shape ({k}, {k}), got {self.b.shape}")
        if not (np.isfinite(self.a).all() and np.isfinite(self.b).all()):
            raise ValueError("coordinates must be finite")

    @property
    def has_symmetric_b(self) -> bool:
        return bool(np.array_equal(self.b, self.b.T))

    def expand(self) -> np.ndarray:
        return expand(self)

    def delta(self) -> np.ndarray:
        return delta_matrix(self)

    def __add__(self, other: "UniformBlock") -> "UniformBlock":
        return add(self, other)

    def __sub__(self, other: "UniformBlock") -> "UniformBlock":
        return subtract(self, other)


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.flags.writeable = False
    return arr


def make_uniform_block(
    a, b, partition: Partition, *, symmetrize_b: bool = True
) -> UniformBlock:
    """Validate and build coordinates; ``b`` is stored as (B + B^T)/2.

    ``symmetrize_b=False`` keeps ``b`` exactly as passed and is reserved for
    results whose dense counterpart is non-symmetric (products of
    non-commuting factors).
    """
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float)
    if b.ndim != 2:
        raise ValueError("b must be a K x K matrix")
    if symmetrize_b:
        b = symmetrize(b)
    return UniformBlock(_freeze(a), _freeze(b), partition)


def identity(partition: Partition) -> UniformBlock:
    """Coordinates of the p x p identity matrix."""
    k = partition.count
    return make_uniform_block(np.ones(k), np.zeros((k, k)), partition)


def expand(m: UniformBlock) -> np.ndarray:
    """Dense p x p form; entries are copies of the coordinates (no rounding)."""
    lab = m.partition.labels()
    dense = m.b[np.ix_(lab, lab)].copy()
    diag = dense.diagonal().copy() + m.a[lab]
    np.fill_diagonal(dense, diag)
    return dense


def _check_same_partition(x: UniformBlock, y: UniformBlock) -> None:
    if x.partition != y.partition:
        raise ValueError(
            f"partition mismatch: {x.partition.sizes} vs {y.partition.sizes}"
        )


def add(x: UniformBlock, y: UniformBlock) -> UniformBlock:
    """Coordinates of expand(x) + expand(y)."""
    _check_same_partition(x, y)
    return make_uniform_block(x.a + y.a, x.b + y.b, x.partition, symmetrize_b=False)


def subtract(x: UniformBlock, y: UniformBlock) -> UniformBlock:
    """Coordinates of expand(x) - expand(y)."""
    _check_same_partition(x, y)
    return make_uniform_block(x.a - y.a, x.b - y.b, x.partition, symmetrize_b=False)


def multiply(x: UniformBlock, y: UniformBlock) -> UniformBlock:
    """Coordinates of the matrix product expand(x) @ expand(y).

    The bilinear rule is ``a* = a1 a2`` and ``B* = A1 B2 + B1 A2 + B1 P B2``.
    For non-commuting operands the product of two symmetric matrices is not
    symmetric, so ``b`` is returned exactly as computed (not symmetrised);
    commuting operands (m with its inverse, powers, identity) yield a
    symmetric ``b`` up to floating-point noise.
    """
    _check_same_partition(x, y)
    p = x.partition.as_array()
    a_out = x.a * y.a
    b_out = x.a[:, None] * y.b + x.b * y.a[None, :] + x.b @ (p[:, None] * y.b)
    return make_uniform_block(a_out, b_out, x.partition, symmetrize_b=False)


def trace_ub(m: UniformBlock) -> float:
    """Trace of the dense form, computed in coordinates."""
    p = m.partition.as_array()
    return float(np.sum(p * (m.a + np.diag(m.b))))


def delta_matrix(m: UniformBlock) -> np.ndarray:
    """The K x K matrix Delta = A + B P carrying the community-level spectrum."""
    p = m.partition.as_array()
    return np.diag(m.a) + m.b * p[None, :]


def _delta_eigenvalues(m: UniformBlock) -> np.ndarray:
    # Delta = A + B P is similar to A + P^(1/2) B P^(1/2) via conjugation by
    # P^(1/2); the symmetric form guarantees a real spectrum.
    s = np.sqrt(m.partition.as_array())
    sym = np.diag(m.a) + s[:, None] * m.b * s[None, :]
    return np.linalg.eigvalsh(sym)


def eigenvalues(m: UniformBlock) -> np.ndarray:
    """All p eigenvalues: each a_k repeated p_k - 1 times plus the Delta spectrum.

    Requires a symmetric ``b`` (the dense form must be symmetric for the
    eigenvalues to be real).
    """
    if not m.has_symmetric_b:
        raise ValueError("eigenvalues requires symmetric block coefficients")
    sizes = np.array(m.partition.sizes)
    rep = np.repeat(m.a, sizes - 1)
    return np.concatenate([rep, _delta_eigenvalues(m)])


@dataclass(frozen=True)
class PdCheck:
    """Positive definiteness verdict with the minimum eigenvalue found."""

    is_pd: bool
    min_eigenvalue: float


def is_positive_definite(m: UniformBlock) -> PdCheck:
    """True iff all a_k > 0 and Delta has positive eigenvalues only."""
    if not m.has_symmetric_b:
        raise ValueError("positive definiteness requires symmetric block coefficients")
    min_a = float(m.a.min())
    min_delta = float(_delta_eigenvalues(m).min())
    low = min(min_a, min_delta)
    return PdCheck(is_pd=low > 0.0, min_eigenvalue=low)


def inverse(m: UniformBlock) -> UniformBlock:
    """Coordinates (A^-1, -Delta^-1 B A^-1) of the matrix inverse.

    Raises :class:`SingularityError` when some ``|a_k|`` falls below
    ``1e-12 * max|a|`` or the condition estimate of Delta exceeds ``1e12``.
    """
    amax = float(np.abs(m.a).max())
    if amax == 0.0 or np.any(np.abs(m.a) < A_SINGULAR_RTOL * amax):
        bad = np.nonzero(np.abs(m.a) < max(A_SINGULAR_RTOL * amax, np.finfo(float).tiny))[0]
        raise SingularityError(f"diagonal coefficients too small at communities {bad.tolist()}")
    delta = delta_matrix(m)
    cond = np.linalg.cond(delta)
    if not np.isfinite(cond) or cond > DELTA_COND_MAX:
        raise SingularityError(f"Delta condition estimate {cond:.3e} exceeds {DELTA_COND_MAX:.0e}")
    a_inv = 1.0 / m.a
    b_inv = -np.linalg.solve(delta, m.b * a_inv[None, :])
    return make_uniform_block(a_inv, b_inv, m.partition, symmetrize_b=m.has_symmetric_b)


def frobenius_distance(x: UniformBlock, y: UniformBlock) -> float:
    """Frobenius norm of expand(x) - expand(y), in coordinates.

    With coordinate differences d_a, d_b the squared norm is
    ``sum_k p_k (d_a_k + d_b_kk)^2 + sum_k p_k (p_k - 1) d_b_kk^2
    + sum_{k != l} p_k p_l d_b_kl^2``.
    """
    _check_same_partition(x, y)
    p = x.partition.as_array()
    da = x.a - y.a
    db = x.b - y.b
    db_diag = np.diag(db)
    off = p[:, None] * p[None, :] * db**2
    total = (
        np.sum(p * (da + db_diag) ** 2)
        + np.sum(p * (p - 1) * db_diag**2)
        + np.sum(off)
        - np.sum(np.diag(off))
    )
    return float(np.sqrt(max(total, 0.0)))


def spectral_distance(x: UniformBlock, y: UniformBlock) -> float:
    """Spectral norm of expand(x) - expand(y) via the K-dimensional spectrum."""
    diff = subtract(x, y)
    return float(np.abs(eigenvalues(diff)).max())
