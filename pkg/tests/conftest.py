"""Shared generators and dense oracles for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from ubcov import Partition, UniformBlock, expand, make_uniform_block


def random_partition(rng: np.random.Generator, k_max: int = 5, size_max: int = 6) -> Partition:
    k = int(rng.integers(1, k_max + 1))
    sizes = tuple(int(s) for s in rng.integers(2, size_max + 1, size=k))
    return Partition(sizes)


def random_coords(
    rng: np.random.Generator,
    partition: Partition | None = None,
    scale: float = 1.0,
    k_max: int = 5,
    size_max: int = 6,
) -> UniformBlock:
    part = partition if partition is not None else random_partition(rng, k_max, size_max)
    a = rng.normal(0.0, scale, part.count)
    b = rng.normal(0.0, scale, (part.count, part.count))
    return make_uniform_block(a, b, part)


def random_pd_coords(
    rng: np.random.Generator,
    partition: Partition | None = None,
    margin: float = 0.05,
    k_max: int = 5,
    size_max: int = 6,
) -> UniformBlock:
    """Random coordinates shifted to be comfortably positive definite.

    Adding c to every diagonal coefficient shifts the whole spectrum by c,
    so the minimum eigenvalue can be placed exactly.
    """
    m = random_coords(rng, partition, 1.0, k_max, size_max)
    dense = expand(m)
    eigs = np.linalg.eigvalsh(dense)
    lift = margin * (abs(eigs).max() + 1.0) - eigs.min()
    return make_uniform_block(m.a + lift, m.b, m.partition)


def dense_oracle(m: UniformBlock) -> np.ndarray:
    """Straight dense expansion built independently of blocks.expand."""
    out = np.zeros((m.partition.total, m.partition.total))
    slices = m.partition.slices()
    for k, sk in enumerate(slices):
        for l, sl in enumerate(slices):
            if k == l:
                size = m.partition.sizes[k]
                out[sk, sl] = m.a[k] * np.eye(size) + m.b[k, k] * np.ones((size, size))
            else:
                out[sk, sl] = m.b[k, l]
    return out


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240801)
