"""Layered networks with skip connections and weight sharing.

Neurons are partitioned into layers 1..D; layer j reads the concatenation of
the input and every earlier layer, through a matrix whose entries are either
structural zeros or tied to one of p scalar parameters.  The tying map allows
the same parameter to drive many entries (multiplicity Q), which is how
convolution-style sharing is counted honestly.  A minimal full-batch
gradient-descent trainer drives the squared loss below a target.

Two certified quantities matter downstream: the spectral product
B(w) = prod_j max(||W_j||_op, 1), a Lipschitz bound for chain-structured
networks, and the parametrization constant J = R (W Q p)^D bounding how fast
the function can move, in sup norm over the radius-R ball, as the parameter
vector moves.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .isodist import Dataset
from .lipcert import spectral_product_bound


def _relu(z):
    return np.maximum(z, 0.0)


def _relu_prime(z):
    return (z > 0.0).astype(float)


def _tanh_prime(z):
    t = np.tanh(z)
    return 1.0 - t * t


def _abs_prime(z):
    return np.sign(z)


def _identity(z):
    return z


def _one(z):
    return np.ones_like(z)


# every entry is 1-Lipschitz; identity is the conventional linear output stage
NONLINEARITIES: dict[str, tuple[Callable, Callable]] = {
    "relu": (_relu, _relu_prime),
    "tanh": (np.tanh, _tanh_prime),
    "abs": (np.abs, _abs_prime),
    "identity": (_identity, _one),
}


class TrainingDivergence(RuntimeError):
    def __init__(self, message: str, trace: list[float]):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class Architecture:
    """Connectivity, tying maps, and scalar bounds for one network family.

    ``weight_index[j]`` has shape (layer_sizes[j], d + sum of earlier layer
    sizes); an entry >= 0 names the parameter feeding that matrix cell and -1
    marks a structural zero.  ``bias_index[j]`` does the same per neuron.
    ``W`` bounds parameter magnitude (the box [-W, W]^p), ``R`` bounds
    covariate norm.
    """

    input_dim: int
    layer_sizes: tuple[int, ...]
    weight_index: tuple[np.ndarray, ...]
    bias_index: tuple[np.ndarray, ...]
    nonlinearities: tuple[tuple[str, ...], ...]
    p: int
    W: float = 1.0
    R: float = 1.0

    def __post_init__(self):
        if self.input_dim < 1 or not self.layer_sizes:
            raise ValueError("need input_dim >= 1 and at least one layer")
        widths = [self.input_dim, *self.layer_sizes]
        used = np.zeros(self.p, dtype=bool) if self.p else np.zeros(0, dtype=bool)
        for j, size in enumerate(self.layer_sizes):
            fan_in = sum(widths[: j + 1])
            wi = self.weight_index[j]
            bi = self.bias_index[j]
            if wi.shape != (size, fan_in):
                raise ValueError(f"layer {j + 1} weight map has shape {wi.shape}, "
                                 f"expected {(size, fan_in)}")
            if bi.shape != (size,):
                raise ValueError(f"layer {j + 1} bias map has shape {bi.shape}")
            if len(self.nonlinearities[j]) != size:
                raise ValueError(f"layer {j + 1} needs {size} nonlinearity names")
            for name in self.nonlinearities[j]:
                if name not in NONLINEARITIES:
                    raise ValueError(f"unknown nonlinearity {name!r}")
            for arr in (wi, bi):
                vals = arr[arr >= 0]
                if vals.size and (vals.max() >= self.p):
                    raise ValueError("parameter index out of range")
                used[vals] = True
        if self.p and not used.all():
            raise ValueError("some parameter indices are never referenced")

    @property
    def depth(self) -> int:
        return len(self.layer_sizes)

    @property
    def masks(self) -> tuple[np.ndarray, ...]:
        return tuple(wi >= 0 for wi in self.weight_index)

    @property
    def Q(self) -> int:
        """Max number of matrix entries / bias terms tied to one parameter."""
        if self.p == 0:
            return 1
        counts = np.zeros(self.p, dtype=int)
        for wi, bi in zip(self.weight_index, self.bias_index):
            for arr in (wi, bi):
                vals = arr[arr >= 0]
                np.add.at(counts, vals, 1)
        return max(int(counts.max()), 1)

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "layer_sizes": list(self.layer_sizes),
            "masks": [m.astype(int).tolist() for m in self.masks],
            "sharing": {
                "weights": [wi.tolist() for wi in self.weight_index],
                "biases": [bi.tolist() for bi in self.bias_index],
            },
            "nonlinearities": [list(names) for names in self.nonlinearities],
            "p": self.p, "Q": self.Q, "D": self.depth, "W": self.W, "R": self.R,
        }

    @staticmethod
    def from_dict(d: dict) -> "Architecture":
        return Architecture(
            input_dim=d["input_dim"],
            layer_sizes=tuple(d["layer_sizes"]),
            weight_index=tuple(np.array(a, dtype=int) for a in d["sharing"]["weights"]),
            bias_index=tuple(np.array(a, dtype=int) for a in d["sharing"]["biases"]),
            nonlinearities=tuple(tuple(n) for n in d["nonlinearities"]),
            p=d["p"], W=d["W"], R=d["R"],
        )


def feedforward(input_dim: int, hidden: Sequence[int], nonlin: str = "relu",
                output_nonlin: str = "identity", W: float = 1.0, R: float = 1.0,
                output_dim: int = 1) -> Architecture:
    """Plain chain architecture: each layer reads only its predecessor, no
    sharing (Q = 1), scalar output through ``output_nonlin``."""
    sizes = [*hidden, output_dim]
    widths = [input_dim, *sizes]
    weight_index, bias_index, nonlins = [], [], []
    counter = 0
    for j, size in enumerate(sizes):
        fan_in = sum(widths[: j + 1])
        wi = np.full((size, fan_in), -1, dtype=int)
        prev = widths[j]
        block = np.arange(counter, counter + size * prev).reshape(size, prev)
        counter += size * prev
        wi[:, fan_in - prev:] = block            # connect to previous layer only
        bi = np.arange(counter, counter + size)
        counter += size
        weight_index.append(wi)
        bias_index.append(bi)
        nonlins.append(tuple([output_nonlin if j == len(sizes) - 1 else nonlin] * size))
    return Architecture(input_dim=input_dim, layer_sizes=tuple(sizes),
                        weight_index=tuple(weight_index), bias_index=tuple(bias_index),
                        nonlinearities=tuple(nonlins), p=counter, W=W, R=R)


@dataclass
class NetFunction:
    """A network with its weights filled in; callable on points or batches."""

    arch: Architecture
    weight_matrices: list[np.ndarray]
    biases: list[np.ndarray]
    w: np.ndarray = field(repr=False, default=None)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return forward(self, X)


def materialize(arch: Architecture, w: np.ndarray) -> NetFunction:
    """Fill weight matrices and biases from the flat parameter vector per the
    tying maps; structural zeros stay exactly zero."""
    w = np.asarray(w, dtype=float)
    if w.shape != (arch.p,):
        raise ValueError(f"expected parameter vector of length {arch.p}, got {w.shape}")
    mats, biases = [], []
    padded = np.concatenate([w, [0.0]])          # index -1 picks up the zero
    for wi, bi in zip(arch.weight_index, arch.bias_index):
        mats.append(padded[wi])
        biases.append(padded[bi])
    return NetFunction(arch=arch, weight_matrices=mats, biases=biases, w=w.copy())


def _apply_nonlin(names: tuple[str, ...], Z: np.ndarray, prime: bool = False) -> np.ndarray:
    out = np.empty_like(Z)
    which = 1 if prime else 0
    for name in set(names):
        cols = [i for i, n in enumerate(names) if n == name]
        out[:, cols] = NONLINEARITIES[name][which](Z[:, cols])
    return out


def forward(netfn: NetFunction, x: np.ndarray) -> np.ndarray | float:
    """Standard layered evaluation with concatenated skip inputs.  A single
    point gives a scalar (or vector for wide outputs); a batch gives one row
    per point."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.shape[1] != netfn.arch.input_dim:
        raise ValueError(f"expected inputs of dimension {netfn.arch.input_dim}")
    acts = [X]
    for j in range(netfn.arch.depth):
        inp = np.concatenate(acts, axis=1)
        Z = inp @ netfn.weight_matrices[j].T + netfn.biases[j]
        acts.append(_apply_nonlin(netfn.arch.nonlinearities[j], Z))
    out = acts[-1]
    if out.shape[1] == 1:
        out = out[:, 0]
    return float(out[0]) if single and out.ndim == 1 else (out[0] if single else out)


def param_lip_J(arch: Architecture) -> float:
    """Worst-case parametrization Lipschitz constant R (W Q p)^D.

    Requires W >= 1; the closed form is only valid on the box [-W, W]^p with
    W at least 1.
    """
    if arch.W < 1.0:
        raise ValueError("param_lip_J requires the parameter bound W >= 1")
    if arch.R <= 0.0:
        raise ValueError("param_lip_J requires a positive covariate radius R")
    return arch.R * (arch.W * arch.Q * arch.p) ** arch.depth


def spectral_cap(arch: Architecture) -> float:
    """(W sqrt(p Q))^D, the a-priori cap on the spectral product for any
    parameter vector inside the box.  Floored at 1 because every factor of
    the spectral product is max(||W_j||, 1)."""
    return max((arch.W * math.sqrt(arch.p * arch.Q)) ** arch.depth, 1.0)


# ---------------------------------------------------------------------------
# gradients and training
# ---------------------------------------------------------------------------

def _forward_full(netfn: NetFunction, X: np.ndarray):
    acts = [X]
    zs = []
    for j in range(netfn.arch.depth):
        inp = np.concatenate(acts, axis=1)
        Z = inp @ netfn.weight_matrices[j].T + netfn.biases[j]
        zs.append(Z)
        acts.append(_apply_nonlin(netfn.arch.nonlinearities[j], Z))
    return acts, zs


def backprop_mse(netfn: NetFunction, X: np.ndarray, y: np.ndarray):
    """Exact gradient of mean((f(x_i) - y_i)^2) with respect to the flat
    parameter vector; shared entries accumulate.  Returns (grad, mse, preds)."""
    arch = netfn.arch
    n = X.shape[0]
    acts, zs = _forward_full(netfn, X)
    if acts[-1].shape[1] != 1:
        raise ValueError("mse training expects a scalar output layer")
    preds = acts[-1][:, 0]
    resid = preds - y
    mse = float(np.mean(resid * resid))
    grad_acts = [np.zeros_like(a) for a in acts]          # d loss / d activation
    grad_acts[-1][:, 0] = 2.0 * resid / n
    grad_w = np.zeros(arch.p)
    widths = [arch.input_dim, *arch.layer_sizes]
    offsets = np.cumsum([0, *widths])                     # segment bounds in concat
    for j in range(arch.depth - 1, -1, -1):
        delta = grad_acts[j + 1] * _apply_nonlin(arch.nonlinearities[j], zs[j], prime=True)
        inp = np.concatenate(acts[: j + 1], axis=1)
        gW = delta.T @ inp
        gb = delta.sum(axis=0)
        wi, bi = arch.weight_index[j], arch.bias_index[j]
        mask = wi >= 0
        np.add.at(grad_w, wi[mask], gW[mask])
        bmask = bi >= 0
        np.add.at(grad_w, bi[bmask], gb[bmask])
        dinp = delta @ netfn.weight_matrices[j]
        for i in range(j + 1):
            grad_acts[i] += dinp[:, offsets[i]:offsets[i + 1]]
    return grad_w, mse, preds


def init_params(arch: Architecture, seed: int) -> np.ndarray:
    """Per-entry uniform on [-1/sqrt(fan_in), 1/sqrt(fan_in)], assigned per
    parameter index at its first appearance (layers scanned in order)."""
    rng = np.random.default_rng(seed)
    w = np.zeros(arch.p)
    assigned = np.zeros(arch.p, dtype=bool)
    for j in range(arch.depth):
        wi, bi = arch.weight_index[j], arch.bias_index[j]
        fan_in = wi.shape[1]
        scale = 1.0 / math.sqrt(max(fan_in, 1))
        for arr in (wi, bi):
            idx = np.unique(arr[arr >= 0])
            fresh = idx[~assigned[idx]]
            w[fresh] = rng.uniform(-scale, scale, size=len(fresh))
            assigned[fresh] = True
    return np.clip(w, -arch.W, arch.W)


@dataclass
class TrainResult:
    w: np.ndarray
    trace: list[float]
    reached: bool
    steps: int


def train_to_threshold(arch: Architecture, ds: Dataset, target_mse: float,
                       lr: float = 0.1, max_steps: int = 1000, seed: int = 0,
                       clip_outputs: bool = False, project_box: bool = False,
                       w0: Optional[np.ndarray] = None) -> TrainResult:
    """Full-batch gradient descent on the squared loss until the (optionally
    clipped) training MSE drops to target_mse or max_steps elapse.

    Clipping to [-1, 1] is a final 1-Lipschitz stage applied to the stopping
    metric and trace only; gradients flow through the raw outputs, and every
    certified Lipschitz bound remains valid for the clipped function.  With
    ``project_box`` the parameters are projected back to [-W, W]^p after each
    step.  The loss trace records the metric before each step, so a dataset
    fit at initialization returns after 0 steps.
    """
    if not 0.0 < target_mse <= 1.0:
        raise ValueError("target_mse must lie in (0, 1]")
    w = init_params(arch, seed) if w0 is None else np.asarray(w0, dtype=float).copy()
    trace: list[float] = []
    steps = 0
    for step in range(max_steps + 1):
        netfn = materialize(arch, w)
        grad, raw_mse, preds = backprop_mse(netfn, ds.X, ds.y)
        if clip_outputs:
            clipped = np.clip(preds, -1.0, 1.0) - ds.y
            metric = float(np.mean(clipped * clipped))
        else:
            metric = raw_mse
        trace.append(metric)
        if raw_mse > 1e6 or not math.isfinite(raw_mse):
            raise TrainingDivergence(f"training diverged at step {step} (loss {raw_mse:.3g})",
                                     trace)
        if metric <= target_mse:
            return TrainResult(w=w, trace=trace, reached=True, steps=steps)
        if step == max_steps:
            break
        w = w - lr * grad
        if project_box:
            w = np.clip(w, -arch.W, arch.W)
        steps += 1
    return TrainResult(w=w, trace=trace, reached=False, steps=steps)


def save_loss_trace(trace: Sequence[float], path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss"])
        for i, loss in enumerate(trace):
            writer.writerow([i, repr(float(loss))])


# ---------------------------------------------------------------------------
# parametrization Lipschitz verification
# ---------------------------------------------------------------------------

def sample_ball(rng: np.random.Generator, m: int, d: int, radius: float) -> np.ndarray:
    """Uniform sample from the radius-R ball."""
    z = rng.standard_normal((m, d))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    radii = radius * rng.random(m) ** (1.0 / d)
    return z * radii[:, None]


@dataclass
class ParamLipReport:
    max_lhs: float
    rhs: float
    b_w1: float
    b_w2: float
    spectral_cap: float
    probes: int
    param_bound_ok: bool
    cap_ok: bool

    @property
    def passed(self) -> bool:
        return self.param_bound_ok and self.cap_ok


def check_param_lipschitz(arch: Architecture, w1: np.ndarray, w2: np.ndarray,
                          probes: int, seed: int) -> ParamLipReport:
    """Verify, on sampled inputs with ||x|| <= R, the parametrization bound

        |f_{w1}(x) - f_{w2}(x)| <= Bbar^2 Q R sqrt(p) ||w1 - w2||

    with Bbar = max(B(w1), B(w2)), and the a-priori spectral cap
    B(w) <= (W sqrt(p Q))^D for both parameter vectors."""
    rng = np.random.default_rng(seed)
    X = sample_ball(rng, probes, arch.input_dim, arch.R)
    f1, f2 = materialize(arch, w1), materialize(arch, w2)
    lhs = float(np.max(np.abs(np.atleast_1d(f1(X)) - np.atleast_1d(f2(X))))) if probes else 0.0
    b1 = spectral_product_bound(f1)
    b2 = spectral_product_bound(f2)
    bbar = max(b1, b2)
    dw = float(np.linalg.norm(np.asarray(w1, dtype=float) - np.asarray(w2, dtype=float)))
    rhs = bbar ** 2 * arch.Q * arch.R * math.sqrt(max(arch.p, 1)) * dw
    cap = spectral_cap(arch)
    tol = 1e-9 * max(rhs, 1.0)
    return ParamLipReport(
        max_lhs=lhs, rhs=rhs, b_w1=b1, b_w2=b2, spectral_cap=cap, probes=probes,
        param_bound_ok=lhs <= rhs + tol,
        cap_ok=(b1 <= cap * (1 + 1e-9)) and (b2 <= cap * (1 + 1e-9)))


def save_net_json(arch: Architecture, w: np.ndarray, path: str) -> None:
    payload = {"architecture": arch.to_dict(), "weights": [float(v) for v in w]}
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def load_net_json(path: str) -> tuple[Architecture, np.ndarray]:
    with open(path) as fh:
        payload = json.load(fh)
    return Architecture.from_dict(payload["architecture"]), np.array(payload["weights"])
