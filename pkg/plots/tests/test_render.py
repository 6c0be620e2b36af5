import json
import os
import subprocess
import sys

import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from render_tradeoff import (CsvFormatError, PlotSpec, main, ols_slope,
                             parse_tradeoff_csv, render_tradeoff)

HEADER = "# robustness-law-lab v1"
COLUMNS = "p,d_tilde,min_sep,train_mse,lip_empirical,lip_certified,informal_bound,theorem7_bound,seed"


def make_row(p, lip, seed=0):
    return f"{p},{p // 10},1.0,0.0,{0.8 * lip},{lip},1.0,0.01,{seed}"


def synthetic_csv(tmp_path, exponent=-0.5, ps=(100, 400, 1600, 6400), seeds=(0, 1),
                  name="sweep.csv"):
    lines = [HEADER, COLUMNS]
    for seed in seeds:
        for p in ps:
            lines.append(make_row(p, p ** exponent, seed))
    path = tmp_path / name
    path.write_text("\n".join(lines) + "\n")
    return str(path)


GOLDEN_CSV = os.path.join(os.path.dirname(os.path.abspath(__file__)), "data",
                          "golden_sweep.csv")


def test_golden_csv_renders(tmp_path):
    out = str(tmp_path / "fig.png")
    fit = render_tradeoff(PlotSpec(input_csv=GOLDEN_CSV, output_image=out))
    assert os.path.exists(out)
    assert os.path.getsize(out) > 0
    # the golden sidecar carries the fit of the sweep it came from
    assert fit["r2"] >= 0.9


def test_golden_csv_cli_exit_zero(tmp_path):
    assert main(["--in", GOLDEN_CSV, "--out", str(tmp_path / "fig.png")]) == 0


def test_synthetic_power_law_renders(tmp_path):
    csv = synthetic_csv(tmp_path, ps=(100, 400, 1600, 6400), seeds=(0,))
    out = str(tmp_path / "fig.png")
    fit = render_tradeoff(PlotSpec(input_csv=csv, output_image=out))
    assert os.path.exists(out)
    assert os.path.getsize(out) > 0
    assert fit["slope"] == pytest.approx(-0.5, abs=1e-9)


def test_cli_exit_zero_and_slope_annotation(tmp_path, capsys):
    csv = synthetic_csv(tmp_path)
    out = str(tmp_path / "fig.svg")
    assert main(["--in", csv, "--out", out]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert abs(payload["slope"] - (-0.50)) <= 0.01
    assert os.path.exists(out)


def test_single_p_value_is_error(tmp_path, capsys):
    lines = [HEADER, COLUMNS, make_row(100, 1.0, 0), make_row(100, 1.1, 1)]
    path = tmp_path / "one.csv"
    path.write_text("\n".join(lines) + "\n")
    assert main(["--in", str(path), "--out", str(tmp_path / "x.png")]) == 1


def test_malformed_csv_is_error(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("p,lip\n1,2\n")
    assert main(["--in", str(bad), "--out", str(tmp_path / "x.png")]) == 1
    missing = str(tmp_path / "missing.csv")
    assert main(["--in", missing, "--out", str(tmp_path / "x.png")]) == 1
    truncated = tmp_path / "trunc.csv"
    truncated.write_text(HEADER + "\n" + COLUMNS + "\n1,2,3\n")
    with pytest.raises(CsvFormatError):
        parse_tradeoff_csv(str(truncated))


def test_sidecar_slope_preferred(tmp_path):
    csv = synthetic_csv(tmp_path)
    sidecar = csv + ".json"
    with open(sidecar, "w") as fh:
        json.dump({"slope_fit": {"slope": -0.4321, "intercept": 0.0, "r2": 0.99}}, fh)
    fit = render_tradeoff(PlotSpec(input_csv=csv, output_image=str(tmp_path / "f.png")))
    assert fit["slope"] == pytest.approx(-0.4321)


def test_ols_matches_exact_power_law(tmp_path):
    rows = parse_tradeoff_csv(synthetic_csv(tmp_path, exponent=-0.5))
    fit = ols_slope(rows)
    assert fit["slope"] == pytest.approx(-0.5, abs=1e-9)
    assert fit["r2"] == pytest.approx(1.0)


def test_overwrite_is_atomic_and_input_untouched(tmp_path):
    csv = synthetic_csv(tmp_path)
    before = open(csv).read()
    out = str(tmp_path / "fig.png")
    render_tradeoff(PlotSpec(input_csv=csv, output_image=out))
    first = open(out, "rb").read()
    render_tradeoff(PlotSpec(input_csv=csv, output_image=out, title="again"))
    second = open(out, "rb").read()
    assert open(csv).read() == before
    assert first and second


def test_executable_script_runs(tmp_path):
    csv = synthetic_csv(tmp_path)
    out = str(tmp_path / "fig.png")
    script = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))),
                          "render")
    proc = subprocess.run([sys.executable, script, "--in", csv, "--out", out],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert os.path.exists(out)
