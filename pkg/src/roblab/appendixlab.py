"""Slab measure and sign-pattern cell occupancy on the sphere.

Removing the thin coordinate slabs |x_i| <= 1/(100 d^{3/2}) from the unit
sphere leaves 2^d connected cells of equal measure, labeled by coordinate
sign patterns.  Two Monte Carlo facts are checked here: the removed slabs
carry at most a tenth of the measure, and for n <= 2^d / 100 sample points,
at least three quarters of them typically land alone in their cell and
outside the slab.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict

import numpy as np

from .isodist import mix_seed, _sample_component

SLAB_MEASURE_BOUND = 0.1


def slab_width(d: int) -> float:
    return 1.0 / (100.0 * d ** 1.5)


@dataclass
class SlabReport:
    d: int
    N: int
    width: float
    empirical_slab_measure: float
    bound: float
    passed: bool

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def slab_measure_estimate(d: int, N: int, seed: int, block: int = 200_000) -> SlabReport:
    """Fraction of N uniform sphere samples with some coordinate inside the
    slab width; passes iff the fraction is at most 0.1."""
    if N < 100_000:
        raise ValueError("need N >= 10^5 samples")
    w = slab_width(d)
    hits = 0
    done = 0
    shard = 0
    while done < N:
        m = min(block, N - done)
        X = _sample_component("sphere", d, mix_seed(seed, shard), m)
        hits += int(np.count_nonzero(np.min(np.abs(X), axis=1) <= w))
        done += m
        shard += 1
    measure = hits / N
    return SlabReport(d=d, N=N, width=w, empirical_slab_measure=measure,
                      bound=SLAB_MEASURE_BOUND, passed=measure <= SLAB_MEASURE_BOUND)


def sign_pattern(X: np.ndarray) -> np.ndarray:
    """Cell label per row: the vector of coordinate signs.  Deterministic and
    invariant to positive rescaling."""
    return (np.asarray(X) > 0.0)


def _unique_cell_trials(d: int, n: int, N_trials: int, seed: int) -> np.ndarray:
    """Per-trial count of points that lie outside the slab and share their
    sign pattern with no other sample point."""
    w = slab_width(d)
    counts = np.empty(N_trials, dtype=int)
    for trial in range(N_trials):
        X = _sample_component("sphere", d, mix_seed(seed, trial), n)
        outside = np.min(np.abs(X), axis=1) > w
        _, inverse, pattern_counts = np.unique(
            sign_pattern(X), axis=0, return_inverse=True, return_counts=True)
        alone = pattern_counts[inverse] == 1
        counts[trial] = int(np.count_nonzero(outside & alone))
    return counts


@dataclass
class UniqueCellReport:
    d: int
    n: int
    trials: int
    threshold: int
    fractions: list[float]
    success_rate: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def unique_cell_fraction(d: int, n: int, N_trials: int, seed: int) -> UniqueCellReport:
    """Per trial, the fraction of the n sphere points that sit alone in a
    non-slab sign-pattern cell; a trial succeeds when at least ceil(3n/4)
    do.  Refuses when n exceeds 2^d / 100: beyond that the cells are too few
    for the sequential new-cell argument."""
    if n < 1 or N_trials < 1:
        raise ValueError("need n >= 1 and N_trials >= 1")
    if n > 2 ** d / 100.0:
        raise ValueError(
            f"hypothesis violated: n = {n} exceeds 2^d / 100 = {2 ** d / 100:.6g} at d = {d}")
    counts = _unique_cell_trials(d, n, N_trials, seed)
    threshold = math.ceil(3.0 * n / 4.0)
    return UniqueCellReport(
        d=d, n=n, trials=N_trials, threshold=threshold,
        fractions=[c / n for c in counts],
        success_rate=float(np.mean(counts >= threshold)))
