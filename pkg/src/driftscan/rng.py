"""Deterministic, platform-stable random streams.

Every source of randomness in the package flows through a counter-based
Philox generator keyed by an integer seed plus an explicit path of
integers (e.g. a test-point index, or a (cell, trial) pair).  Streams for
distinct paths are independent, so results never depend on evaluation
order or worker count.  Normal variates are produced by applying the
inverse normal CDF to uniforms rather than a rejection sampler, which
keeps bit-level output identical across platforms.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

_U53 = float(2**53)


def stream(seed: int, *path: int) -> np.random.Generator:
    """Independent generator for the given seed and integer path."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((int(seed), *map(int, path)))))


def uniform_open(rng: np.random.Generator, size=None) -> np.ndarray:
    """Uniform draws on the open interval (0, 1).

    Built from 53-bit integers so that 0.0 and 1.0 are impossible, which
    protects downstream inverse-CDF transforms from infinities.
    """
    return rng.integers(1, 2**53, size=size).astype(np.float64) / _U53


def standard_normals(rng: np.random.Generator, size=None) -> np.ndarray:
    """Standard normal draws via inverse CDF on the counter-based stream."""
    return ndtri(uniform_open(rng, size=size))
