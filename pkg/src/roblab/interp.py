"""Sum-of-radial-bumps interpolators and their random-projection variant.

Given n separated points with labels in [-1, 1], placing one compactly
supported radial bump per point interpolates exactly while keeping the
Lipschitz constant at lip_g / radius.  Projecting first onto a random
d_tilde-dimensional subspace shrinks the parameter count to n (d_tilde + 1)
at the cost of a sqrt(d / d_tilde) factor in the Lipschitz constant, which is
what traces out the size-vs-smoothness curve.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .isodist import Dataset, min_pairwise_distance, mix_seed

CUBIC_SMOOTHSTEP_LIP = 1.5

# stream tag separating projection draws from dataset draws at equal seeds
_PROJECTION_STREAM = 0x50524F4A


@dataclass(frozen=True)
class BumpFunction:
    """Radial profile g with g(0) = 1, g(a) = 0 for a >= 1, and a certified
    bound lip_g on |g'|.

    The only built-in profile is the cubic smoothstep
    g(a) = 2 a^3 - 3 a^2 + 1 on [0, 1]: it is C^1 across both endpoints
    (g'(0) = g'(1) = 0), monotone nonincreasing, and max |g'| = |g'(1/2)| = 3/2.
    """

    kind: str = "cubic_smoothstep"
    lip_g: float = CUBIC_SMOOTHSTEP_LIP

    def __post_init__(self):
        if self.kind != "cubic_smoothstep":
            raise ValueError(f"unknown bump kind {self.kind!r}")

    def profile(self, a: np.ndarray) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        inside = np.clip(a, 0.0, 1.0)
        vals = 2.0 * inside ** 3 - 3.0 * inside ** 2 + 1.0
        return np.where(a < 1.0, vals, 0.0)

    def derivative(self, a: np.ndarray) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        return np.where((a >= 0.0) & (a < 1.0), 6.0 * a * a - 6.0 * a, 0.0)


@dataclass
class SmoothInterpolator:
    """f(x) = sum_i labels_i * g(||P x - center_i|| / radius).

    ``projection`` has orthonormal rows (so it is 1-Lipschitz); when absent,
    P is the identity and centers live in the input space directly.
    """

    centers: np.ndarray          # (m, d_tilde)
    labels: np.ndarray           # (m,)
    radius: float
    bump: BumpFunction
    projection: Optional[np.ndarray] = None   # (d_tilde, d), orthonormal rows

    def __post_init__(self):
        self.centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        self.labels = np.asarray(self.labels, dtype=float)
        if self.centers.shape[0] != self.labels.shape[0]:
            raise ValueError("centers and labels disagree on count")
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if np.max(np.abs(self.labels)) > 1.0 + 1e-12:
            raise ValueError("labels must lie in [-1, 1]")
        if self.projection is not None:
            self.projection = np.asarray(self.projection, dtype=float)
            if self.projection.shape[0] != self.centers.shape[1]:
                raise ValueError("projection row count must match center dimension")

    @property
    def m(self) -> int:
        return self.centers.shape[0]

    @property
    def d_tilde(self) -> int:
        return self.centers.shape[1]

    @property
    def input_dim(self) -> int:
        return self.projection.shape[1] if self.projection is not None else self.d_tilde

    @property
    def param_count(self) -> int:
        # one center (d_tilde coordinates) plus one label per bump
        return self.m * (self.d_tilde + 1)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return evaluate_batch(self, X)

    def to_dict(self) -> dict:
        out = {
            "d": self.input_dim,
            "d_tilde": self.d_tilde,
            "r": self.radius,
            "lip_g": self.bump.lip_g,
            "param_count": self.param_count,
            "centers": [float(v) for v in self.centers.ravel()],
            "labels": [float(v) for v in self.labels],
        }
        if self.projection is not None:
            out["projection"] = [float(v) for v in self.projection.ravel()]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @staticmethod
    def from_dict(d: dict) -> "SmoothInterpolator":
        m = len(d["labels"])
        dt = d["d_tilde"]
        proj = None
        if "projection" in d and d["projection"] is not None:
            proj = np.array(d["projection"], dtype=float).reshape(dt, d["d"])
        return SmoothInterpolator(
            centers=np.array(d["centers"], dtype=float).reshape(m, dt),
            labels=np.array(d["labels"], dtype=float),
            radius=d["r"],
            bump=BumpFunction(lip_g=d["lip_g"]),
            projection=proj,
        )


def evaluate(f: SmoothInterpolator, x: np.ndarray) -> float:
    """Exact evaluation at a single point."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != f.input_dim:
        raise ValueError(f"expected a vector of dimension {f.input_dim}")
    return float(evaluate_batch(f, x[None, :])[0])


def evaluate_batch(f: SmoothInterpolator, X: np.ndarray, clip: bool = False) -> np.ndarray:
    """Exact sum of bumps at each row of X; ``clip`` applies the final
    1-Lipschitz clamp to [-1, 1] (harmless for certified bounds, useful when
    overlapping supports push sums past the label range)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != f.input_dim:
        raise ValueError(f"expected points of dimension {f.input_dim}, got {X.shape[1]}")
    Z = X @ f.projection.T if f.projection is not None else X
    sq = (np.sum(Z * Z, axis=1)[:, None]
          + np.sum(f.centers * f.centers, axis=1)[None, :]
          - 2.0 * Z @ f.centers.T)
    dists = np.sqrt(np.maximum(sq, 0.0))
    vals = f.bump.profile(dists / f.radius) @ f.labels
    return np.clip(vals, -1.0, 1.0) if clip else vals


def build_bump_interpolator(ds: Dataset, radius_policy="half_min_sep") -> SmoothInterpolator:
    """One bump per data point, centered at the point itself.

    ``radius_policy`` is either the string "half_min_sep" (radius = half the
    minimum pairwise separation, making supports disjoint so the analytic
    Lipschitz constant is exact) or a positive number used as a fixed radius.
    Interpolation is exact whenever radius <= min separation.
    """
    radius = _resolve_radius(ds.X, radius_policy)
    return SmoothInterpolator(centers=ds.X.copy(), labels=ds.y.copy(),
                              radius=radius, bump=BumpFunction())


def _resolve_radius(centers: np.ndarray, radius_policy) -> float:
    if isinstance(radius_policy, str):
        if radius_policy != "half_min_sep":
            raise ValueError(f"unknown radius policy {radius_policy!r}")
        if centers.shape[0] < 2:
            raise ValueError("half_min_sep needs at least two points; pass a fixed radius")
        min_sep = min_pairwise_distance(centers)
        if min_sep == 0.0:
            raise ValueError("duplicate points: cannot build a bump interpolator")
        return min_sep / 2.0
    radius = float(radius_policy)
    if radius <= 0:
        raise ValueError("fixed radius must be positive")
    return radius


def required_d_tilde_floor(n: int) -> int:
    """Smallest admissible projected dimension, ceil(4 ln n)."""
    return max(1, math.ceil(4.0 * math.log(n))) if n > 1 else 1


def build_projected_interpolator(ds: Dataset, p_budget: Optional[int] = None,
                                 seed: int = 0, d_tilde: Optional[int] = None) -> SmoothInterpolator:
    """Bump interpolator on randomly projected covariates.

    Exactly one of ``p_budget`` / ``d_tilde`` must be given.  From a parameter
    budget, the projected dimension is the largest d_tilde with
    n (d_tilde + 1) <= p_budget, i.e. floor(p_budget / n) - 1.  The projection
    keeps random subspaces honest: rows come from the QR factorization of a
    seeded Gaussian matrix, so they are orthonormal and the map is
    1-Lipschitz.  Refuses if d_tilde falls below ceil(4 ln n): below a
    logarithmic dimension the projected points lose their separation and the
    construction breaks down.
    """
    if (p_budget is None) == (d_tilde is None):
        raise ValueError("give exactly one of p_budget or d_tilde")
    n, d = ds.X.shape
    if d_tilde is None:
        d_tilde = p_budget // n - 1
    floor = required_d_tilde_floor(n)
    if d_tilde < floor:
        raise ValueError(
            f"projected dimension {d_tilde} is below the floor ceil(4 ln n) = {floor} "
            f"for n = {n}; increase the parameter budget")
    if d_tilde > d:
        raise ValueError(f"projected dimension {d_tilde} exceeds ambient dimension {d}")
    # dedicated stream: reusing the dataset's own stream would align the
    # subspace with the sample vectors themselves
    rng = mix_seed(seed, _PROJECTION_STREAM)
    # filled (d_tilde, d) then transposed so that, at a fixed seed, smaller
    # d_tilde uses a prefix of the same columns: subspaces nest, and min
    # separation (hence the certified constant) is monotone across a sweep
    gauss = rng.standard_normal((d_tilde, d)).T
    q, _ = np.linalg.qr(gauss)
    projection = q.T                     # (d_tilde, d), orthonormal rows
    centers = ds.X @ q
    radius = _resolve_radius(centers, "half_min_sep")
    return SmoothInterpolator(centers=centers, labels=ds.y.copy(), radius=radius,
                              bump=BumpFunction(), projection=projection)


def analytic_lip(f: SmoothInterpolator) -> float:
    """Certified upper bound on Lip(f).

    With pairwise center distances >= 2 radius the bump supports are disjoint
    and the bound lip_g / radius is exact (attained when some |label| = 1).
    Otherwise any point can sit inside at most (1 + max over centers of the
    number of neighbors within 2 radius) supports, and gradients add, so the
    bound scales by that overlap multiplicity.  The projection contributes a
    factor Lip <= 1.
    """
    base = f.bump.lip_g / f.radius
    if f.m == 1:
        return base
    sq = (np.sum(f.centers * f.centers, axis=1)[:, None]
          + np.sum(f.centers * f.centers, axis=1)[None, :]
          - 2.0 * f.centers @ f.centers.T)
    np.fill_diagonal(sq, np.inf)
    # strict-overlap test with relative slack: at distance exactly 2r the
    # supports only touch where g' vanishes (the profile is C^1), so pairs at
    # the threshold up to rounding contribute no gradient
    threshold = (2.0 * f.radius) ** 2 * (1.0 - 1e-9)
    if np.min(sq) >= threshold:
        return base
    multiplicity = 1 + int(np.max(np.sum(sq < threshold, axis=1)))
    return multiplicity * base


def interpolation_residuals(f: SmoothInterpolator, ds: Dataset) -> np.ndarray:
    """f(x_i) - y_i over the dataset the interpolator was built from."""
    return evaluate_batch(f, ds.X) - ds.y
