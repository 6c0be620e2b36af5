"""Flat `key = value` config files with dotted keys.

Example::

    # tradeoff sweep
    dist.kind = sphere
    dist.d = 256
    label.kind = pure_noise
    n = 100
    sweep.d_tilde = 32, 64, 128, 256
    seeds = 0, 1, 2

Values are parsed as int, float, bool, or string; comma-separated values
become lists.  Unknown keys are kept (callers decide what they need), but
malformed lines raise a ConfigError so typos never silently vanish.
"""

from __future__ import annotations

from typing import Any

from .isodist import (BUILTIN_TARGETS, AdditiveNoise, Component, ConfigurationError,
                      DistributionSpec, FlipNoise, LabelModel, PureNoise)


class ConfigError(ConfigurationError):
    """Malformed config file or missing/invalid keys (CLI exit code 2)."""


def _parse_scalar(text: str) -> Any:
    text = text.strip()
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def parse_config_text(text: str) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected `key = value`, got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if "," in value:
            out[key] = [_parse_scalar(v) for v in value.split(",") if v.strip()]
        else:
            out[key] = _parse_scalar(value)
    return out


def load_config(path: str) -> dict[str, Any]:
    try:
        with open(path) as fh:
            return parse_config_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def require(cfg: dict, key: str) -> Any:
    if key not in cfg:
        raise ConfigError(f"missing required config key {key!r}")
    return cfg[key]


def as_list(value) -> list:
    return list(value) if isinstance(value, list) else [value]


def distribution_from_config(cfg: dict) -> DistributionSpec:
    """Build a mixture from `dist.*` keys.  Single component:
    dist.kind/dist.d/dist.c.  Mixtures: comma lists in dist.kinds,
    dist.weights, and optional dist.cs."""
    d = int(require(cfg, "dist.d"))
    if "dist.kinds" in cfg:
        kinds = [str(k) for k in as_list(cfg["dist.kinds"])]
        weights = [float(w) for w in as_list(require(cfg, "dist.weights"))]
        if len(weights) != len(kinds):
            raise ConfigError("dist.kinds and dist.weights disagree on length")
        cs = [float(c) for c in as_list(cfg.get("dist.cs", [1.0] * len(kinds)))]
        comps = tuple(Component(kind=k, dim=d, c=c, weight=w)
                      for k, c, w in zip(kinds, cs, weights))
        return DistributionSpec(comps)
    kind = str(cfg.get("dist.kind", "sphere"))
    c = float(cfg.get("dist.c", 1.0))
    return DistributionSpec((Component(kind=kind, dim=d, c=c, weight=1.0),))


def label_model_from_config(cfg: dict) -> LabelModel:
    kind = str(cfg.get("label.kind", "pure_noise"))
    if kind == "pure_noise":
        return PureNoise()
    target_name = str(cfg.get("label.target", "sign_first_coordinate"))
    if target_name not in BUILTIN_TARGETS:
        raise ConfigError(f"unknown label target {target_name!r}; "
                          f"built-ins: {sorted(BUILTIN_TARGETS)}")
    target = BUILTIN_TARGETS[target_name]
    if kind == "flip_noise":
        return FlipNoise(target, float(require(cfg, "label.flip_prob")),
                         target_name=target_name)
    if kind == "additive_noise":
        scaled = lambda X: 0.5 * target(X)  # keep |g| + scale inside [-1, 1]
        return AdditiveNoise(scaled, float(require(cfg, "label.noise_scale")),
                             target_name=f"0.5*{target_name}")
    raise ConfigError(f"unknown label kind {kind!r}")
