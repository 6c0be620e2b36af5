"""Samplers for isoperimetric covariate distributions and noisy label models.

The built-in component families are the three classical examples for which
Lipschitz functions concentrate at rate exp(-d t^2 / (2 c L^2)) with c = 1:

* ``sphere``    -- uniform on the unit sphere S^{d-1},
* ``gaussian``  -- N(0, I_d / d),
* ``cube``      -- uniform on the axis-aligned cube of Euclidean diameter 1
                   (side 1/sqrt(d), centered at the origin).

A :class:`DistributionSpec` is a finite mixture of such components.  Label
models attach outputs y in [-1, 1] to covariates together with the exact
noise level ``sigma_sq = E[Var[y|x]]`` implied by their construction, and
expose the true conditional mean g(x) = E[y|x] so that the noise part
z = y - g(x) can be recovered for moment checks.

Everything here is a pure function of its arguments (seed included).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

COMPONENT_KINDS = ("sphere", "gaussian", "cube")


class ConfigurationError(ValueError):
    """Invalid distribution / label-model configuration."""


def mix_seed(seed: int, index: int) -> np.random.Generator:
    """Deterministic per-shard generator derived from (seed, shard index)."""
    return np.random.default_rng(np.random.SeedSequence(entropy=(int(seed), int(index))))


# ---------------------------------------------------------------------------
# distribution spec
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Component:
    """One mixture component with its isoperimetry constant and weight."""

    kind: str
    dim: int
    c: float = 1.0
    weight: float = 1.0

    def __post_init__(self):
        if self.kind not in COMPONENT_KINDS:
            raise ConfigurationError(f"unknown component kind {self.kind!r}")
        if self.dim < 1:
            raise ConfigurationError("component dim must be >= 1")
        if self.c <= 0:
            raise ConfigurationError("isoperimetry constant c must be positive")
        if self.weight < 0:
            raise ConfigurationError("mixture weight must be nonnegative")

    def sample(self, rng: np.random.Generator, m: int) -> np.ndarray:
        return _sample_component(self.kind, self.dim, rng, m)


@dataclass(frozen=True)
class DistributionSpec:
    """Mixture sum_l weight_l * component_l of isoperimetric components."""

    components: tuple[Component, ...]

    def __post_init__(self):
        if not self.components:
            raise ConfigurationError("mixture needs at least one component")
        dims = {comp.dim for comp in self.components}
        if len(dims) != 1:
            raise ConfigurationError(f"mixture components disagree on dimension: {sorted(dims)}")
        total = sum(comp.weight for comp in self.components)
        if not math.isclose(total, 1.0, rel_tol=0, abs_tol=1e-9):
            raise ConfigurationError(f"mixture weights sum to {total}, expected 1")

    @property
    def dim(self) -> int:
        return self.components[0].dim

    @property
    def k(self) -> int:
        return len(self.components)

    @property
    def weights(self) -> np.ndarray:
        return np.array([comp.weight for comp in self.components])

    def to_dict(self) -> dict:
        return {
            "components": [
                {"kind": c.kind, "dim": c.dim, "c": c.c, "weight": c.weight}
                for c in self.components
            ]
        }

    @staticmethod
    def from_dict(d: dict) -> "DistributionSpec":
        return DistributionSpec(tuple(Component(**c) for c in d["components"]))


def single(kind: str, dim: int, c: float = 1.0) -> DistributionSpec:
    """One-component mixture, the common case."""
    return DistributionSpec((Component(kind=kind, dim=dim, c=c, weight=1.0),))


def _sample_component(kind: str, dim: int, rng: np.random.Generator, m: int) -> np.ndarray:
    if kind == "sphere":
        z = rng.standard_normal((m, dim))
        return z / np.linalg.norm(z, axis=1, keepdims=True)
    if kind == "gaussian":
        return rng.standard_normal((m, dim)) / math.sqrt(dim)
    if kind == "cube":
        half_side = 0.5 / math.sqrt(dim)
        return rng.uniform(-half_side, half_side, size=(m, dim))
    raise ConfigurationError(f"unknown component kind {kind!r}")


# ---------------------------------------------------------------------------
# label models
# ---------------------------------------------------------------------------

class LabelModel:
    """Base for label models; subclasses provide exact sigma_sq and g(x)=E[y|x]."""

    kind: str = "abstract"
    sigma_sq: float

    def conditional_mean(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def sample_labels(self, X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {"kind": self.kind, "sigma_sq": self.sigma_sq}


class PureNoise(LabelModel):
    """y uniform on {-1, +1}, independent of x; g == 0 and sigma_sq = 1."""

    kind = "pure_noise"

    def __init__(self):
        self.sigma_sq = 1.0

    def conditional_mean(self, X):
        return np.zeros(len(X))

    def sample_labels(self, X, rng):
        return rng.integers(0, 2, size=len(X)) * 2.0 - 1.0


class FlipNoise(LabelModel):
    """y = +-target(x) with flip probability eta; target maps into {-1, +1}.

    The conditional mean is (1 - 2 eta) * target(x), so the noise part
    z = y - E[y|x] has E[z|x] = 0 and E[z^2] = 4 eta (1 - eta) exactly.
    """

    kind = "flip_noise"

    def __init__(self, target: Callable[[np.ndarray], np.ndarray], flip_prob: float,
                 target_name: str = "custom"):
        if not 0.0 <= flip_prob <= 1.0:
            raise ConfigurationError("flip_prob must lie in [0, 1]")
        self.target = target
        self.flip_prob = float(flip_prob)
        self.target_name = target_name
        self.sigma_sq = 4.0 * flip_prob * (1.0 - flip_prob)

    def conditional_mean(self, X):
        s = np.asarray(self.target(X), dtype=float)
        return (1.0 - 2.0 * self.flip_prob) * s

    def sample_labels(self, X, rng):
        s = np.asarray(self.target(X), dtype=float)
        if not np.all(np.isin(s, (-1.0, 1.0))):
            raise ConfigurationError("flip-noise target must map into {-1, +1}")
        flips = rng.random(len(X)) < self.flip_prob
        return np.where(flips, -s, s)

    def to_dict(self):
        return {"kind": self.kind, "sigma_sq": self.sigma_sq,
                "flip_prob": self.flip_prob, "target": self.target_name}


class AdditiveNoise(LabelModel):
    """y = target(x) + U[-scale, scale]; requires |target| + scale <= 1.

    The support restriction means no clipping ever occurs, keeping
    sigma_sq = scale^2 / 3 exact.
    """

    kind = "additive_noise"

    def __init__(self, target: Callable[[np.ndarray], np.ndarray], noise_scale: float,
                 target_name: str = "custom"):
        if not 0.0 < noise_scale <= 1.0:
            raise ConfigurationError("noise_scale must lie in (0, 1]")
        self.target = target
        self.noise_scale = float(noise_scale)
        self.target_name = target_name
        self.sigma_sq = noise_scale ** 2 / 3.0

    def conditional_mean(self, X):
        return np.asarray(self.target(X), dtype=float)

    def sample_labels(self, X, rng):
        g = np.asarray(self.target(X), dtype=float)
        if np.max(np.abs(g)) > 1.0 - self.noise_scale + 1e-12:
            raise ConfigurationError(
                "additive-noise target violates |g(x)| <= 1 - noise_scale; "
                "labels would need clipping")
        return g + rng.uniform(-self.noise_scale, self.noise_scale, size=len(X))

    def to_dict(self):
        return {"kind": self.kind, "sigma_sq": self.sigma_sq,
                "noise_scale": self.noise_scale, "target": self.target_name}


def sign_first_coordinate(X: np.ndarray) -> np.ndarray:
    """Built-in {-1,+1} target: sign of the first covariate coordinate."""
    s = np.sign(X[:, 0])
    return np.where(s == 0, 1.0, s)


BUILTIN_TARGETS = {"sign_first_coordinate": sign_first_coordinate}


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------

@dataclass
class Dataset:
    """n covariate rows with labels in [-1, 1] and the model that made them."""

    X: np.ndarray
    y: np.ndarray
    spec: DistributionSpec
    label_model: LabelModel
    seed: int
    component_ids: np.ndarray = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


def sample_dataset(spec: DistributionSpec, model: LabelModel, n: int, seed: int) -> Dataset:
    """Draw n i.i.d. pairs: component from the mixture weights, covariate from
    the component, then a label from the model.  Bit-deterministic given seed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    k = spec.k
    ids = rng.choice(k, size=n, p=spec.weights) if k > 1 else np.zeros(n, dtype=int)
    X = np.empty((n, spec.dim))
    for ell in range(k):
        rows = np.flatnonzero(ids == ell)
        if len(rows):
            X[rows] = spec.components[ell].sample(rng, len(rows))
    y = model.sample_labels(X, rng)
    if np.max(np.abs(y)) > 1.0 + 1e-12:
        raise ConfigurationError("label model emitted values outside [-1, 1]")
    return Dataset(X=X, y=y, spec=spec, label_model=model, seed=seed, component_ids=ids)


def min_pairwise_distance(X: np.ndarray) -> float:
    """Exact minimum Euclidean distance over all pairs (dense enumeration)."""
    n = X.shape[0]
    if n < 2:
        raise ValueError("min_pairwise_distance needs at least two rows")
    sq = np.sum(X * X, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.fill_diagonal(d2, np.inf)
    return float(math.sqrt(max(float(np.min(d2)), 0.0)))


# ---------------------------------------------------------------------------
# isoperimetry tail check
# ---------------------------------------------------------------------------

@dataclass
class TailRow:
    t: float
    empirical: float
    bound: float
    passed: bool


@dataclass
class TailReport:
    rows: list[TailRow]
    sample_mean: float
    n_samples: int
    passed: bool

    def to_json(self) -> str:
        return json.dumps([
            {"t": r.t, "empirical": r.empirical, "bound": r.bound, "pass": r.passed}
            for r in self.rows
        ])


def isoperimetry_tail_check(spec: DistributionSpec, f, L: float,
                            t_grid: Sequence[float], N: int, seed: int,
                            n_shards: int = 1) -> TailReport:
    """Empirical check of the deviation inequality

        P[|f(x) - E f| >= t]  <=  2 exp(-d t^2 / (2 c L^2))

    for a single mixture component.  ``f`` must accept an (m, d) array and
    return m values; ``L`` must upper bound its Lipschitz constant.  E[f] is
    estimated from the same N samples, which biases the tail by O(N^{-1/2});
    that is why N >= 10^4 is required.  Shards derive their streams from
    (seed, shard index) and are combined in shard order, so the report depends
    only on (seed, n_shards), not on execution order.
    """
    if spec.k != 1:
        raise ValueError("tail check applies to a single component, not a mixture")
    if len(t_grid) == 0:
        raise ValueError("t_grid must be nonempty")
    if N < 10_000:
        raise ValueError("need N >= 10^4 samples for a trustworthy sample mean")
    comp = spec.components[0]
    counts = [N // n_shards + (1 if i < N % n_shards else 0) for i in range(n_shards)]
    values = [
        np.asarray(f(comp.sample(mix_seed(seed, i), m)), dtype=float)
        for i, m in enumerate(counts) if m > 0
    ]
    vals = np.concatenate(values)
    mean = float(np.mean(vals))
    dev = np.abs(vals - mean)
    rows = []
    for t in t_grid:
        if t < 0:
            raise ValueError("tail grid points must be nonnegative")
        emp = float(np.mean(dev >= t))
        bound = 2.0 * math.exp(-comp.dim * t * t / (2.0 * comp.c * L * L))
        rows.append(TailRow(t=float(t), empirical=emp, bound=bound, passed=emp <= bound))
    return TailReport(rows=rows, sample_mean=mean, n_samples=int(N),
                      passed=all(r.passed for r in rows))


def linear_functional_tail_checks(spec: DistributionSpec, U: np.ndarray, L: float,
                                  t_grid: Sequence[float], N: int, seed: int) -> list[TailReport]:
    """Tail checks for a batch of linear functionals x -> <u, x> sharing one
    sample batch.  ``U`` has one functional per row; each report is exactly the
    one `isoperimetry_tail_check` would produce for that functional on these
    samples."""
    if spec.k != 1:
        raise ValueError("tail check applies to a single component, not a mixture")
    if len(t_grid) == 0:
        raise ValueError("t_grid must be nonempty")
    if N < 10_000:
        raise ValueError("need N >= 10^4 samples for a trustworthy sample mean")
    comp = spec.components[0]
    U = np.atleast_2d(np.asarray(U, dtype=float))
    if U.shape[1] != comp.dim:
        raise ValueError(f"functionals have dimension {U.shape[1]}, expected {comp.dim}")
    X = comp.sample(mix_seed(seed, 0), N)
    vals = X @ U.T
    dev = np.abs(vals - vals.mean(axis=0, keepdims=True))
    reports = []
    for j in range(U.shape[0]):
        rows = []
        for t in t_grid:
            emp = float(np.mean(dev[:, j] >= t))
            bound = 2.0 * math.exp(-comp.dim * t * t / (2.0 * comp.c * L * L))
            rows.append(TailRow(t=float(t), empirical=emp, bound=bound, passed=emp <= bound))
        reports.append(TailReport(rows=rows, sample_mean=float(vals[:, j].mean()),
                                  n_samples=int(N), passed=all(r.passed for r in rows)))
    return reports


# ---------------------------------------------------------------------------
# noise moment checks
# ---------------------------------------------------------------------------

@dataclass
class NoiseMomentReport:
    mean_z_sq: float
    mean_z_g: float
    sigma_sq: float
    dev_sigma: float
    dev_cross: float
    eps: float
    flagged_sigma: bool
    flagged_cross: bool

    @property
    def passed(self) -> bool:
        return not (self.flagged_sigma or self.flagged_cross)


def noise_moment_checks(ds: Dataset, eps: float) -> NoiseMomentReport:
    """Empirical versions of the two Hoeffding moments of the noise part
    z = y - g(x): mean of z^2 against the model's exact sigma_sq, and the
    cross term mean of z*g against 0.  Either deviating by more than eps/6
    is flagged."""
    g = ds.label_model.conditional_mean(ds.X)
    z = ds.y - g
    mean_z_sq = float(np.mean(z * z))
    mean_z_g = float(np.mean(z * g))
    dev_sigma = abs(mean_z_sq - ds.label_model.sigma_sq)
    dev_cross = abs(mean_z_g)
    tol = eps / 6.0
    return NoiseMomentReport(
        mean_z_sq=mean_z_sq, mean_z_g=mean_z_g, sigma_sq=ds.label_model.sigma_sq,
        dev_sigma=dev_sigma, dev_cross=dev_cross, eps=float(eps),
        flagged_sigma=dev_sigma > tol, flagged_cross=dev_cross > tol)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def save_dataset_csv(ds: Dataset, path: str) -> str:
    """Write `x_0,...,x_{d-1},y` CSV plus a JSON sidecar `<path>.json` with
    {n, d, spec, label_model, sigma_sq, seed}.  Returns the sidecar path."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x_{j}" for j in range(ds.d)] + ["y"])
        for i in range(ds.n):
            writer.writerow([repr(float(v)) for v in ds.X[i]] + [repr(float(ds.y[i]))])
    sidecar = path + ".json"
    meta = {
        "n": ds.n, "d": ds.d, "spec": ds.spec.to_dict(),
        "label_model": ds.label_model.to_dict(),
        "sigma_sq": ds.label_model.sigma_sq, "seed": ds.seed,
    }
    with open(sidecar, "w") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return sidecar


def load_dataset_csv(path: str) -> tuple[np.ndarray, np.ndarray, dict]:
    """Read back a dataset CSV and its sidecar.  Returns (X, y, meta)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    arr = np.array(rows)
    if header[-1] != "y" or not header[0].startswith("x_"):
        raise ValueError(f"{path} is not a dataset CSV (header {header[:3]}...)")
    with open(path + ".json") as fh:
        meta = json.load(fh)
    return arr[:, :-1], arr[:, -1], meta
