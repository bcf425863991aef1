"""
Command line front end.

Every verb reads the same declarative JSON config (``--config``); each
config field also has a flag of the same name that overrides it.  Outputs
are plain CSV/JSON files in ``--out`` plus a ``manifest.json`` with content
hashes.

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import logging
import platform
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy

from . import __version__, marginals
from .adaptive import LAMBDA_PRESETS, fit_time_trend, run_adaptive
from .crossdeps import (
    PanelFrame,
    covariance_pca,
    eigen_to_json,
    eigendecompose,
    normalize_panel,
    pair_coeff_matrix,
    pair_trend_matrix,
)
from .errors import ConfigError, HCRError
from .estimate import (
    WindowSet,
    build_windows,
    estimate_coefficients,
    pairwise_only,
    prune,
    total_degree_at_most,
)
from .evalsuite import (
    CALIBRATIONS,
    coverage_curve,
    evaluate_models,
    log_likelihood_bits,
    make_calibration,
    sorted_prediction_curve,
)
from .ingest import ingest_csv
from .polybasis import MAX_DEGREE, build_basis
from .predict import Calibration, PredictionBatch, predict_windows

logger = logging.getLogger("hcr")

VERBS = ("fit-marginal", "normalize", "estimate", "predict", "calibrate", "adapt",
         "crossdeps", "evaluate", "run")


@dataclass
class PipelineConfig:
    input: str = ""
    columns: list = field(default_factory=list)
    log_returns: bool = True
    family: str = "laplace"
    d: int = 4
    m: int = 4
    degrees: list = field(default_factory=list)
    index_filter: str = "none"
    prune: float = 0.0
    calibration: str = "fixed"
    holdout: float = 0.0
    lam: float = LAMBDA_PRESETS["fast"]
    time_degree: int = 9
    stride: int = 10
    j1: int = 1
    j2: int = 1
    pca_q: int = 5
    evaluate: bool = True
    hcr_degrees: list = field(default_factory=lambda: [2, 9])
    eval_prune: float = 3.0
    eval_calibration: str = "clamp-mle"
    arch_form: str = "variance"
    sample_densities: int = 10
    plot_grid: int = 101
    out: str = "hcr-out"
    seed: int = 0
    threads: int = 1

    def validate(self):
        if not self.input:
            raise ConfigError("no input file given")
        if not Path(self.input).is_file():
            raise ConfigError(f"input file {self.input!r} does not exist")
        if self.family not in marginals.FAMILIES:
            raise ConfigError(f"family must be one of {marginals.FAMILIES}")
        if self.d < 1:
            raise ConfigError("d must be at least 1")
        degs = self.degrees or [self.m] * self.d
        if len(degs) != self.d:
            raise ConfigError(f"{len(degs)} degrees for d={self.d}")
        if any(not 0 <= int(v) <= MAX_DEGREE for v in degs + [self.time_degree]):
            raise ConfigError(f"degrees must lie in 0..{MAX_DEGREE}")
        if not 0.0 < self.lam < 1.0:
            raise ConfigError("lam must lie in (0, 1)")
        for name in ("calibration", "eval_calibration"):
            if getattr(self, name) not in CALIBRATIONS:
                raise ConfigError(f"{name} must be one of {CALIBRATIONS}")
        if not 0.0 <= self.holdout < 1.0:
            raise ConfigError("holdout must lie in [0, 1)")
        if self.prune < 0:
            raise ConfigError("prune must be nonnegative")
        if self.index_filter != "none" and self.index_filter != "pairwise" \
                and not self.index_filter.startswith("total:"):
            raise ConfigError("index_filter must be none, pairwise or total:D")

    @property
    def degree_list(self) -> list:
        return [int(v) for v in (self.degrees or [self.m] * self.d)]

    def digest(self) -> str:
        payload = json.dumps(dataclasses.asdict(self), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()


def _parse_bool(s):
    if isinstance(s, bool):
        return s
    if s.lower() in ("1", "true", "yes", "on"):
        return True
    if s.lower() in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {s!r}")


def _parse_lam(s):
    if isinstance(s, str) and s in LAMBDA_PRESETS:
        return LAMBDA_PRESETS[s]
    try:
        return float(s)
    except (TypeError, ValueError):
        raise argparse.ArgumentTypeError(f"lam must be a number or one of {sorted(LAMBDA_PRESETS)}")


def _default(f):
    return f.default if f.default is not dataclasses.MISSING else f.default_factory()


def _coerce(name, value):
    default = _default(next(f for f in dataclasses.fields(PipelineConfig) if f.name == name))
    try:
        if name == "lam":
            return _parse_lam(value)
        if isinstance(default, bool):
            return _parse_bool(value)
        if isinstance(default, list):
            if not isinstance(value, list):
                raise TypeError("expected a list")
            return [int(v) for v in value] if name in ("degrees", "hcr_degrees") else list(value)
        return type(default)(value)
    except (TypeError, ValueError, argparse.ArgumentTypeError) as exc:
        raise ConfigError(f"config field {name!r}: invalid value {value!r} ({exc})") from exc


def _add_config_flags(p: argparse.ArgumentParser):
    for f in dataclasses.fields(PipelineConfig):
        flag = "--" + f.name.replace("_", "-")
        default = _default(f)
        if f.name == "lam":
            p.add_argument(flag, dest=f.name, type=_parse_lam, default=None)
        elif isinstance(default, bool):
            p.add_argument(flag, dest=f.name, type=_parse_bool, default=None, metavar="BOOL")
        elif isinstance(default, list):
            p.add_argument(flag, dest=f.name, nargs="*", default=None)
        else:
            p.add_argument(flag, dest=f.name, type=type(default), default=None)


def load_config(args) -> PipelineConfig:
    cfg = PipelineConfig()
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config!r}: {exc}") from exc
        known = {f.name for f in dataclasses.fields(PipelineConfig)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = dataclasses.replace(cfg, **{k: _coerce(k, v) for k, v in data.items()})
    for f in dataclasses.fields(PipelineConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            setattr(cfg, f.name, _coerce(f.name, v))
    return cfg


# --- artifact writing -------------------------------------------------------

class Artifacts:
    def __init__(self, out: Path):
        self.out = out
        self.files: dict = {}
        out.mkdir(parents=True, exist_ok=True)

    def write_text(self, name: str, text: str):
        path = self.out / name
        path.write_text(text)
        self.files[name] = hashlib.sha256(text.encode()).hexdigest()
        logger.info("wrote %s", path)

    def write_json(self, name: str, obj):
        self.write_text(name, json.dumps(obj, indent=2, sort_keys=True) + "\n")

    def write_csv(self, name: str, header, rows):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
        self.write_text(name, buf.getvalue())


def _versions():
    return {"hcr": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _manifest_current(out: Path, cfg: PipelineConfig, verb: str) -> bool:
    path = out / "manifest.json"
    if not path.is_file():
        return False
    try:
        man = json.loads(path.read_text())
    except json.JSONDecodeError:
        return False
    if man.get("config_hash") != cfg.digest() or man.get("verb") != verb:
        return False
    if man.get("versions") != _versions():
        return False
    if man.get("input_hash") != _file_hash(Path(cfg.input)):
        return False
    for name, digest in man.get("files", {}).items():
        f = out / name
        if not f.is_file() or hashlib.sha256(f.read_bytes()).hexdigest() != digest:
            return False
    return True


def _file_hash(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# --- stages -----------------------------------------------------------------

def _returns(cfg: PipelineConfig):
    series = ingest_csv(cfg.input, cfg.columns or [0], panel=False)
    y = marginals.log_returns(series) if cfg.log_returns else series.values
    return series, y


def stage_marginal(cfg, art):
    series, y = _returns(cfg)
    model = marginals.fit(y, cfg.family)
    art.write_json("marginal.json", model.to_dict())
    logger.info("%s marginal: %s", cfg.family, model)
    return series, y, model


def stage_normalize(cfg, art):
    series, y, model = stage_marginal(cfg, art)
    xs = marginals.normalize(y, model, name=series.name)
    art.write_csv("normalized.csv", ["t", "y", "x"], zip(range(len(y)), y, xs.x))
    cov = coverage_curve(xs)
    art.write_csv("coverage.csv", ["i", "sorted_x"], enumerate(cov.sorted_values))
    return y, model, xs


def _index_filter(cfg):
    if cfg.index_filter == "pairwise":
        return pairwise_only()
    if cfg.index_filter.startswith("total:"):
        return total_degree_at_most(int(cfg.index_filter.split(":", 1)[1]))
    return None


def _split(cfg, w):
    if cfg.holdout <= 0:
        return w, w
    cut = int(round(w.n * (1.0 - cfg.holdout)))
    if cut < 1 or cut >= w.n:
        raise ConfigError("holdout leaves an empty train or test part")
    return WindowSet(w.vectors[:cut]), WindowSet(w.vectors[cut:])


def stage_estimate(cfg, art):
    y, model, xs = stage_normalize(cfg, art)
    basis = build_basis(max(cfg.degree_list))
    w = build_windows(xs, cfg.d)
    train, test = _split(cfg, w)
    t = estimate_coefficients(train, basis, cfg.degree_list, index_filter=_index_filter(cfg))
    if cfg.prune > 0:
        t = prune(t, cfg.prune)
    art.write_text("coefficients.json", t.to_json() + "\n")
    logger.info("%d coefficients from %d windows (%d pruned)", len(t), train.n, t.dropped)
    return y, model, xs, basis, w, train, test, t


def _prediction_rows(batch: PredictionBatch, w, offset, raw, cal):
    ctx = w.context
    for i in range(len(batch)):
        yield (offset + i, *ctx[i], raw[i], cal[i])


def stage_predict(cfg, art, calibrate=True):
    y, model, xs, basis, w, train, test, t = stage_estimate(cfg, art)
    fit_batch = predict_windows(t, basis, train)
    cal = make_calibration(cfg.calibration, fit_batch, basis) if calibrate else Calibration()
    art.write_json("calibration.json", cal.to_dict())
    batch = predict_windows(t, basis, test)
    raw = batch.density(basis)
    calibrated = batch.density(basis, cal=cal)
    offset = cfg.d - 1 + (w.n - test.n)
    art.write_csv("predictions.csv",
                  ["t", *[f"ctx{i}" for i in range(1, cfg.d)], "raw_density", "calibrated_density"],
                  _prediction_rows(batch, test, offset, raw, calibrated))
    srt, frac = sorted_prediction_curve(raw)
    art.write_csv("sorted_densities.csv", ["i", "raw_sorted", "calibrated_sorted"],
                  zip(range(len(srt)), srt, np.sort(calibrated)))
    rng = np.random.default_rng(cfg.seed)
    picks = np.sort(rng.integers(0, len(batch), size=min(cfg.sample_densities, len(batch))))
    grid = np.linspace(0.0, 1.0, cfg.plot_grid)
    rows = []
    for k in picks:
        p = batch[int(k)]
        dens = p.density(basis, cal)(grid)
        rows.extend((int(k) + offset, g, r, c) for g, r, c in zip(grid, p.raw(basis, grid), dens))
    art.write_csv("sample_densities.csv", ["t", "x", "raw", "calibrated"], rows)
    summary = {
        "windows": int(w.n),
        "scored": int(len(batch)),
        "coefficients": int(len(t)),
        "pruned": int(t.dropped),
        "noise_sigma": 1.0 / np.sqrt(train.n),
        "degenerate_contexts": batch.n_degenerate,
        "fraction_raw_below_1": frac,
        "mean_log2_calibrated": log_likelihood_bits(calibrated),
        "calibration": cal.to_dict(),
    }
    art.write_json("summary.json", summary)
    return summary


def stage_adapt(cfg, art):
    y, model, xs = stage_normalize(cfg, art)
    basis = build_basis(max(cfg.degree_list + [cfg.time_degree]))
    run = run_adaptive(xs, cfg.d, cfg.degree_list, cfg.lam, basis, stride=cfg.stride)
    first = [j for j in run.indices if np.count_nonzero(j[1:]) == 0][:4]
    art.write_csv("adaptive_snapshots.csv", ["t", *[f"j{i}" for i in range(1, cfg.d + 1)], "a"],
                  run.snapshot_rows(first))
    cal = Calibration()
    dens = run.predictions.density(basis, cal=cal)
    art.write_csv("adaptive_predictions.csv", ["t", "burn_in", "raw_density", "calibrated_density"],
                  zip(range(cfg.d - 1, cfg.d - 1 + len(dens)), run.burn_in.astype(int),
                      run.predictions.density(basis), dens))
    trend = fit_time_trend(xs, cfg.time_degree, basis, d=cfg.d, degrees=cfg.degree_list)
    art.write_text("trend.json", trend.tensor.to_json() + "\n")
    post = ~run.burn_in
    summary = {"lam": cfg.lam, "burn_in": int(run.burn_in.sum()),
               "degenerate_contexts": run.predictions.n_degenerate,
               "mean_log2_after_burn_in": log_likelihood_bits(dens[post]) if post.any() else None}
    art.write_json("adaptive_summary.json", summary)
    return summary


def stage_crossdeps(cfg, art):
    panel = ingest_csv(cfg.input, cfg.columns or None, panel=True)
    if panel.k < 2:
        raise ConfigError("cross dependencies need at least two series")
    returns = PanelFrame(panel.names, np.column_stack(
        [marginals.log_returns(panel.values[:, i]) if cfg.log_returns else panel.values[:, i]
         for i in range(panel.k)]))
    normed = normalize_panel(returns, cfg.family, log_returns=False, threads=cfg.threads)
    art.write_json("marginals.json", {n: m.to_dict() for n, m in zip(normed.names, normed.models)})
    basis = build_basis(max(cfg.j1, cfg.j2, 1))
    pm = pair_coeff_matrix(normed, cfg.j1, cfg.j2, basis)
    tm = pair_trend_matrix(normed, cfg.j1, cfg.j2, basis)
    art.write_text("pair_matrix.csv", pm.to_csv())
    art.write_text("pair_trend.csv", tm.to_csv())
    if cfg.j1 == cfg.j2:
        vals, vecs = eigendecompose(pm)
        art.write_text("pair_eigen.json", eigen_to_json(vals, vecs) + "\n")
    cov, corr, vals, vecs = covariance_pca(returns, cfg.pca_q)
    for name, mat in (("covariance.csv", cov), ("correlation.csv", corr)):
        art.write_text(name, _matrix_csv(panel.names, mat))
    art.write_text("pca.json", eigen_to_json(vals, vecs) + "\n")
    return {"series": panel.k, "n": returns.n}


def _matrix_csv(names, mat):
    lines = ["," + ",".join(names)]
    lines += [n + "," + ",".join(repr(float(v)) for v in row) for n, row in zip(names, mat)]
    return "\n".join(lines) + "\n"


def stage_evaluate(cfg, art):
    _, y = _returns(cfg)
    reports = evaluate_models(y, cfg.hcr_degrees, prune_threshold=cfg.eval_prune,
                              calibration=cfg.eval_calibration, arch_form=cfg.arch_form)
    art.write_json("evaluation.json", {k: r.to_dict() for k, r in reports.items()})
    n = min(len(r.coverage_curve) for r in reports.values())
    names = list(reports)
    art.write_csv("evaluation_curves.csv",
                  ["i", *[f"{k}_coverage" for k in names], *[f"{k}_sorted_density" for k in names]],
                  ([i, *[reports[k].coverage_curve[i] for k in names],
                    *[reports[k].sorted_density_curve[i] for k in names]] for i in range(n)))
    return {k: r.mean_log2_density for k, r in reports.items()}


def run_pipeline(cfg: PipelineConfig, verb: str = "run", check: bool = False) -> dict:
    """Run ``verb`` and write its artifacts plus ``manifest.json``."""
    cfg.validate()
    out = Path(cfg.out)
    if check and _manifest_current(out, cfg, verb):
        logger.info("outputs in %s are up to date", out)
        return json.loads((out / "manifest.json").read_text())
    art = Artifacts(out)
    if verb == "fit-marginal":
        stage_marginal(cfg, art)
        result = {}
    elif verb == "normalize":
        stage_normalize(cfg, art)
        result = {}
    elif verb == "estimate":
        stage_estimate(cfg, art)
        result = {}
    elif verb in ("predict", "calibrate"):
        result = stage_predict(cfg, art, calibrate=True)
    elif verb == "adapt":
        result = stage_adapt(cfg, art)
    elif verb == "crossdeps":
        result = stage_crossdeps(cfg, art)
    elif verb == "evaluate":
        result = stage_evaluate(cfg, art)
    elif verb == "run":
        result = stage_predict(cfg, art)
        if cfg.evaluate:
            result["evaluation"] = stage_evaluate(cfg, art)
    else:
        raise ConfigError(f"unknown verb {verb!r}")
    manifest = {
        "verb": verb,
        "config": dataclasses.asdict(cfg),
        "config_hash": cfg.digest(),
        "input_hash": _file_hash(Path(cfg.input)),
        "versions": _versions(),
        "files": dict(sorted(art.files.items())),
        "result": result,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=float) + "\n")
    return manifest


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hcr", description="Hierarchical correlation reconstruction for time series")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in VERBS:
        p = sub.add_parser(verb)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--check", action="store_true",
                       help="do nothing if the manifest in --out matches this config and its files")
        p.add_argument("-v", "--verbose", action="store_true")
        _add_config_flags(p)
    return parser


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        manifest = run_pipeline(cfg, args.verb, check=args.check)
    except HCRError as exc:
        print(f"hcr {args.verb}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (TypeError, ValueError) as exc:
        print(f"hcr {args.verb}: numeric failure: {exc}", file=sys.stderr)
        return 4
    print(json.dumps({"out": cfg.out, "files": sorted(manifest["files"])}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
