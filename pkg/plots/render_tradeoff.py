"""Render tradeoff figures from `robustness-law-lab v1` sweep CSVs.

Reads only the versioned CSV contract (plus the optional JSON sidecar the
sweep writes next to it); nothing is recomputed from theory.  The figure
shows certified and empirical Lipschitz constants against parameter count on
log-log axes, one faint line per seed, a reference power law anchored at the
largest-p certified point, and the fitted slope annotated.  Output files are
replaced atomically.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from dataclasses import dataclass
from typing import Optional

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

CSV_VERSION_LINE = "# robustness-law-lab v1"
CSV_COLUMNS = ("p", "d_tilde", "min_sep", "train_mse", "lip_empirical",
               "lip_certified", "informal_bound", "theorem7_bound", "seed")


class CsvFormatError(ValueError):
    """Input does not follow the versioned sweep contract."""


@dataclass
class PlotSpec:
    input_csv: str
    output_image: str
    reference_slope: float = -0.5
    title: Optional[str] = None


def parse_tradeoff_csv(path: str) -> list[dict]:
    try:
        with open(path) as fh:
            lines = [ln.rstrip("\n") for ln in fh]
    except OSError as exc:
        raise CsvFormatError(f"cannot read {path}: {exc}") from exc
    if not lines or lines[0] != CSV_VERSION_LINE:
        raise CsvFormatError(f"{path}: missing version line {CSV_VERSION_LINE!r}")
    if len(lines) < 2 or tuple(lines[1].split(",")) != CSV_COLUMNS:
        raise CsvFormatError(f"{path}: unexpected column header")
    rows = []
    for lineno, ln in enumerate(lines[2:], start=3):
        if not ln:
            continue
        cells = ln.split(",")
        if len(cells) != len(CSV_COLUMNS):
            raise CsvFormatError(f"{path}:{lineno}: expected {len(CSV_COLUMNS)} cells")
        try:
            row = {name: float(cell) for name, cell in zip(CSV_COLUMNS, cells)}
        except ValueError as exc:
            raise CsvFormatError(f"{path}:{lineno}: {exc}") from exc
        row["p"] = int(row["p"])
        row["seed"] = int(row["seed"])
        rows.append(row)
    if not rows:
        raise CsvFormatError(f"{path}: no data rows")
    return rows


def sidecar_slope(path: str) -> Optional[dict]:
    sidecar = path + ".json"
    if not os.path.exists(sidecar):
        return None
    try:
        with open(sidecar) as fh:
            meta = json.load(fh)
    except (OSError, json.JSONDecodeError):
        return None
    fit = meta.get("slope_fit")
    if isinstance(fit, dict) and "slope" in fit:
        return fit
    return None


def ols_slope(rows: list[dict]) -> dict:
    x = np.log([r["p"] for r in rows])
    y = np.log([r["lip_certified"] for r in rows])
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    return {"slope": float(slope), "intercept": float(intercept),
            "r2": 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot}


def render_tradeoff(spec: PlotSpec) -> dict:
    """Write the figure; returns the slope annotation actually used."""
    rows = parse_tradeoff_csv(spec.input_csv)
    if len({r["p"] for r in rows}) < 3:
        raise CsvFormatError("need at least 3 distinct parameter counts to plot a tradeoff")
    fit = sidecar_slope(spec.input_csv) or ols_slope(rows)

    fig, ax = plt.subplots(figsize=(6.4, 4.8), dpi=120)
    seeds = sorted({r["seed"] for r in rows})
    for seed in seeds:
        line = sorted((r["p"], r["lip_certified"]) for r in rows if r["seed"] == seed)
        ax.plot([p for p, _ in line], [v for _, v in line],
                color="tab:blue", alpha=0.25, linewidth=0.8, zorder=1)
    ps = [r["p"] for r in rows]
    ax.scatter(ps, [r["lip_certified"] for r in rows], s=14, color="tab:blue",
               label="certified", zorder=3)
    ax.scatter(ps, [r["lip_empirical"] for r in rows], s=14, color="tab:orange",
               marker="x", label="empirical lower", zorder=3)

    # reference power law anchored at the largest-p certified point
    anchor_p = max(ps)
    anchor_v = max(r["lip_certified"] for r in rows if r["p"] == anchor_p)
    grid = np.geomspace(min(ps), max(ps), 50)
    ax.plot(grid, anchor_v * (grid / anchor_p) ** spec.reference_slope,
            linestyle="--", color="gray",
            label=f"reference slope {spec.reference_slope:g}", zorder=2)

    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("parameter count")
    ax.set_ylabel("Lipschitz constant")
    ax.annotate(f"fitted slope {fit['slope']:.2f}", xy=(0.04, 0.06),
                xycoords="axes fraction", fontsize=10)
    if spec.title:
        ax.set_title(spec.title)
    ax.legend(fontsize=8)
    fig.tight_layout()

    out_dir = os.path.dirname(os.path.abspath(spec.output_image)) or "."
    suffix = os.path.splitext(spec.output_image)[1] or ".png"
    fd, tmp = tempfile.mkstemp(suffix=suffix, dir=out_dir)
    os.close(fd)
    try:
        fig.savefig(tmp, metadata=_stable_metadata(suffix))
        os.replace(tmp, spec.output_image)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    finally:
        plt.close(fig)
    return fit


def _stable_metadata(suffix: str) -> dict:
    if suffix.lower() == ".svg":
        return {"Date": None}
    return {}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plots/render", description="render a tradeoff sweep CSV to an image")
    parser.add_argument("--in", dest="input_csv", required=True)
    parser.add_argument("--out", dest="output_image", required=True)
    parser.add_argument("--slope", type=float, default=-0.5,
                        help="reference line slope (default -0.5)")
    parser.add_argument("--title", default=None)
    args = parser.parse_args(argv)
    spec = PlotSpec(input_csv=args.input_csv, output_image=args.output_image,
                    reference_slope=args.slope, title=args.title)
    try:
        fit = render_tradeoff(spec)
    except CsvFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps({"out": spec.output_image, "slope": fit["slope"]}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
