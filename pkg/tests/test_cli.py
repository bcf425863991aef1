import hashlib
import json

import numpy as np
import pytest

from hcr.cli import PipelineConfig, main, run_pipeline


@pytest.fixture(scope="module")
def prices(tmp_path_factory):
    rng = np.random.default_rng(0)
    r = rng.laplace(0, 0.01, (1500, 3))
    r[:, 1] += 0.5 * r[:, 0]
    p = 100 * np.exp(np.cumsum(r, axis=0))
    path = tmp_path_factory.mktemp("data") / "prices.csv"
    lines = ["date,A,B,C"] + [f"d{i}," + ",".join(f"{v:.6f}" for v in row) for i, row in enumerate(p)]
    path.write_text("\n".join(lines) + "\n")
    return path


def test_run_writes_manifest(prices, tmp_path):
    out = tmp_path / "o"
    assert main(["run", "--input", str(prices), "--out", str(out), "--hcr-degrees", "2"]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["config"]["d"] == 4 and man["config"]["m"] == 4
    for name, digest in man["files"].items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
    for name in ("marginal.json", "coefficients.json", "predictions.csv", "evaluation_curves.csv"):
        assert name in man["files"]
    assert set(man["versions"]) >= {"numpy", "scipy", "hcr"}
    coeffs = json.loads((out / "coefficients.json").read_text())
    assert coeffs["entries"][0] == [[0, 0, 0, 0], 1.0]


def test_outputs_deterministic(prices, tmp_path):
    args = ["predict", "--input", str(prices), "--seed", "5"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    files = json.loads((tmp_path / "a" / "manifest.json").read_text())["files"]
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_check_is_noop(prices, tmp_path):
    out = tmp_path / "o"
    args = ["fit-marginal", "--input", str(prices), "--out", str(out)]
    assert main(args) == 0
    target = out / "marginal.json"
    stamp = target.stat().st_mtime_ns
    assert main(args + ["--check"]) == 0
    assert target.stat().st_mtime_ns == stamp
    target.write_text("{}")
    assert main(args + ["--check"]) == 0
    assert target.read_text() != "{}"


def test_config_file_and_override(prices, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"input": str(prices), "family": "gaussian", "d": 2, "m": 3,
                               "out": str(tmp_path / "o")}))
    assert main(["estimate", "--config", str(cfg), "--m", "2"]) == 0
    t = json.loads((tmp_path / "o" / "coefficients.json").read_text())
    assert t["degrees"] == [2, 2]
    assert json.loads((tmp_path / "o" / "marginal.json").read_text())["family"] == "gaussian"


def test_adapt_and_crossdeps(prices, tmp_path):
    assert main(["adapt", "--input", str(prices), "--out", str(tmp_path / "a"), "--d", "2",
                 "--m", "3", "--lam", "fast", "--time-degree", "3"]) == 0
    summary = json.loads((tmp_path / "a" / "adaptive_summary.json").read_text())
    assert summary["lam"] == 0.999 and summary["burn_in"] == 1000
    assert main(["crossdeps", "--input", str(prices), "--out", str(tmp_path / "c")]) == 0
    text = (tmp_path / "c" / "pair_matrix.csv").read_text().splitlines()
    assert text[0] == ",A,B,C" and float(text[1].split(",")[2]) > 0.3


def test_evaluate(prices, tmp_path):
    assert main(["evaluate", "--input", str(prices), "--out", str(tmp_path / "e"), "--hcr-degrees", "2"]) == 0
    ev = json.loads((tmp_path / "e" / "evaluation.json").read_text())
    assert set(ev) == {"gaussian", "arch01", "laplace", "epd", "epd+hcr2"}


def test_exit_codes(prices, tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert main(["run", "--input", str(empty), "--out", str(tmp_path / "x")]) == 3
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 2
    assert main(["run", "--input", str(prices), "--m", "13", "--out", str(tmp_path / "x")]) == 2
    assert main(["run", "--input", str(prices), "--family", "cauchy"]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"input": str(prices), "colour": 1}))
    assert main(["run", "--config", str(bad)]) == 2
    nonpos = tmp_path / "neg.csv"
    nonpos.write_text("1\n2\n-1\n3\n")
    assert main(["fit-marginal", "--input", str(nonpos), "--out", str(tmp_path / "x")]) == 3


def test_config_digest_changes():
    a = PipelineConfig(input="x")
    b = PipelineConfig(input="x", d=5)
    assert a.digest() != b.digest() and a.digest() == PipelineConfig(input="x").digest()
