"""Batch command-line front end.

Every subcommand reads a JSON run configuration, writes its artifacts
atomically into the output directory and records them in ``manifest.json``.
Exit codes: 0 success, 2 configuration error, 3 data error, 4 estimation
failure; failures also print a JSON object to stderr.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import platform
import sys
import tempfile
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Callable

import jsonschema
import numpy as np
from filelock import FileLock

from . import __version__
from .errors import (
    ConflictNetError,
    EstimationError,
    MetricError,
    ModelSpecError,
    PanelError,
    PreconditionError,
)
from .estimate import DEFAULT_TOL, bootstrap_fit, coefficients_csv, fit_logistic
from .evaluate import (
    DEFAULT_STRATUM_CAP,
    closure_csv,
    closure_probabilities,
    influence_scan,
    ks_two_sample,
    per_year_scores,
    pooled_score,
    predict_ties,
    scores_csv,
)
from .netdata import (
    PanelDeriveConfig,
    export_panel,
    generate_synthetic_panel,
    ingest_panel,
    prepare_networks,
)
from .simulate import SamplerConfig, goodness_of_fit
from .stats import ModelSpec, build_design_matrix, yearly_feature_counts

COMMANDS = ("fit", "gof", "predict", "closure", "influence", "synth", "features")
EXIT_CONFIG, EXIT_DATA, EXIT_ESTIMATION = 2, 3, 4
MANIFEST = "manifest.json"
LOCK = ".conflictnet.lock"

DEFAULT_INFLUENCE_MODEL = [
    {"term": "edges"},
    {"term": "dyad_cov", "name": "contiguity"},
    {"term": "dyad_cov", "name": "cap_ratio"},
    {"term": "dyad_cov", "name": "cinc_high"},
    {"term": "dyad_cov", "name": "alliance"},
    {"term": "year_cov", "name": "ln_states"},
    {"term": "dyad_cov", "name": "peace_years"},
    {"term": "dyad_cov", "name": "peace_years_sq"},
    {"term": "dyad_cov", "name": "peace_years_cu"},
    {"term": "weak_link"},
]


class ConfigError(ConflictNetError):
    """The run configuration is invalid; ``path`` names the offending field."""

    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(message)


def load_schema() -> dict:
    return json.loads((resources.files("conflictnet") / "data" / "config.schema.json").read_text())


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    raw: dict
    base_dir: Path
    out_dir: Path

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    def section(self, name: str) -> dict:
        return self.raw.get(name, {})

    def path(self, key: str) -> Path:
        if "data" not in self.raw:
            raise ConfigError("this command needs a 'data' section", "data")
        p = Path(self.raw["data"][key])
        p = p if p.is_absolute() else self.base_dir / p
        if not p.is_file():
            raise ConfigError(f"file not found: {p}", f"data.{key}")
        return p

    def model(self, override: Any = None, where: str = "model") -> ModelSpec:
        spec = override if override is not None else self.raw.get("model")
        if spec is None:
            raise ConfigError("a model specification is required", where)
        try:
            return ModelSpec.coerce(spec)
        except ModelSpecError as exc:
            raise ConfigError(str(exc), where) from None

    def derive(self) -> PanelDeriveConfig:
        return PanelDeriveConfig(**self.section("derive"))

    @property
    def network(self) -> str:
        return self.raw.get("network", "all_mid")

    def estimation(self) -> dict:
        e = self.section("estimation")
        return {"n_boot": e.get("n_boot", 500), "tol": e.get("tol", DEFAULT_TOL), "max_iter": e.get("max_iter", 100)}

    def sampler(self) -> SamplerConfig:
        s = dict(self.section("sampler"))
        s.setdefault("n_draws", 200)
        return SamplerConfig(seed=self.seed, **s)

    def canonical(self) -> str:
        return json.dumps(self.raw, sort_keys=True, separators=(",", ":"))


def _field_path(err: jsonschema.ValidationError) -> str:
    return ".".join(str(p) for p in err.absolute_path) or "(root)"


def load_config(path, *, seed: int | None = None, out: str | None = None) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}", "(file)") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}", "(file)") from None
    if isinstance(raw, dict) and seed is not None:
        raw = {**raw, "seed": seed}
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(raw), key=lambda e: (list(e.absolute_path), e.message))
    if errors:
        err = errors[0]
        raise ConfigError(err.message, _field_path(err))
    split = raw.get("split", {})
    overlap = sorted(set(split.get("train_years", [])) & set(split.get("test_years", [])))
    if overlap:
        raise ConfigError(f"train and test years overlap: {overlap}", "split.test_years")
    derive = raw.get("derive", {})
    if derive.get("democracy_cut", 6) <= derive.get("autocracy_cut", -6):
        raise ConfigError("democracy_cut must exceed autocracy_cut", "derive.democracy_cut")
    base = path.resolve().parent
    target = out if out is not None else raw.get("output")
    if target is None:
        raise ConfigError("no output directory: pass --out or set 'output'", "output")
    out_dir = Path(target)
    out_dir = out_dir if out_dir.is_absolute() else (Path.cwd() if out is not None else base) / out_dir
    return RunConfig(raw, base, out_dir)


# ---------------------------------------------------------------------------
# artifact publishing
# ---------------------------------------------------------------------------


def atomic_write(path: Path, text: str) -> None:
    """Write ``text`` to a temporary sibling and rename it over ``path``."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _row_count(name: str, text: str) -> int:
    if name.endswith(".csv"):
        return max(sum(1 for _ in csv.reader(io.StringIO(text))) - 1, 0)
    return 1


class Publisher:
    """Collects artifacts for one command and writes them plus the manifest entry."""

    def __init__(self, cfg: RunConfig, command: str):
        self.cfg = cfg
        self.command = command
        self.artifacts: dict[str, str] = {}
        self.seeds: dict[str, int] = {"run": cfg.seed}
        if "synth" in cfg.raw:
            self.seeds["synth"] = int(cfg.raw["synth"].get("seed", cfg.seed))
        self.inputs: dict[str, str] = {}

    def add(self, name: str, text: str) -> None:
        self.artifacts[name] = text

    def input_file(self, key: str, path: Path) -> None:
        self.inputs[key] = _sha256(path.read_bytes())

    def publish(self) -> None:
        out = self.cfg.out_dir
        for name, text in self.artifacts.items():
            atomic_write(out / name, text)
        manifest_path = out / MANIFEST
        manifest = json.loads(manifest_path.read_text()) if manifest_path.exists() else {}
        manifest.setdefault("runs", {})[self.command] = {
            "config_sha256": _sha256(self.cfg.canonical().encode()),
            "seeds": self.seeds,
            "inputs": dict(sorted(self.inputs.items())),
            "artifacts": {
                name: {"sha256": _sha256(text.encode()), "rows": _row_count(name, text)}
                for name, text in sorted(self.artifacts.items())
            },
        }
        manifest["versions"] = versions()
        manifest["runs"] = dict(sorted(manifest["runs"].items()))
        atomic_write(manifest_path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def versions() -> dict[str, str]:
    import numba
    import scipy

    return {
        "conflictnet": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
    }


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _networks(cfg: RunConfig, pub: Publisher):
    nodes, dyads = cfg.path("nodes"), cfg.path("dyads")
    pub.input_file("nodes", nodes)
    pub.input_file("dyads", dyads)
    panel = ingest_panel(nodes, dyads, cfg.derive())
    return prepare_networks(panel, cfg.derive())


def _years(panel, years, where):
    if years is None:
        return list(panel.years)
    missing = [y for y in years if y not in panel.years]
    if missing:
        raise ConfigError(f"years not in panel: {missing}", where)
    return list(years)


def _point_fit(cfg: RunConfig, panel, model, years):
    est = cfg.estimation()
    return fit_logistic(build_design_matrix(panel, model, years), est["tol"], est["max_iter"])


def cmd_fit(cfg: RunConfig, pub: Publisher, threads: int) -> None:
    panel = _networks(cfg, pub)[cfg.network]
    model = cfg.model()
    years = _years(panel, cfg.section("split").get("train_years"), "split.train_years")
    est = cfg.estimation()
    if est["n_boot"] > 0:
        fit = bootstrap_fit(
            panel, model, est["n_boot"], cfg.seed, years=years, tol=est["tol"], max_iter=est["max_iter"], threads=threads
        )
    else:
        fit = _point_fit(cfg, panel, model, years)
    meta = fit.metadata()
    meta["network"] = cfg.network
    pub.add("coefficients.csv", coefficients_csv(fit))
    pub.add("fit.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")


def cmd_gof(cfg: RunConfig, pub: Publisher, threads: int) -> None:
    panel = _networks(cfg, pub)[cfg.network]
    model = cfg.model()
    train = _years(panel, cfg.section("split").get("train_years"), "split.train_years")
    fit = _point_fit(cfg, panel, model, train)
    gof = cfg.section("gof")
    terms = cfg.model(gof["terms"], "gof.terms") if "terms" in gof else None
    years = _years(panel, gof.get("years", train), "gof.years")
    report = goodness_of_fit(fit, panel, model, terms, cfg.sampler(), years)
    pub.add("gof.csv", report.to_csv())


def cmd_predict(cfg: RunConfig, pub: Publisher, threads: int) -> None:
    split = cfg.section("split")
    if "test_years" not in split:
        raise ConfigError("predict needs split.test_years", "split.test_years")
    panel = _networks(cfg, pub)[cfg.network]
    model = cfg.model()
    test = _years(panel, split["test_years"], "split.test_years")
    default_train = [y for y in panel.years if y not in set(test)]
    train = _years(panel, split.get("train_years", default_train), "split.train_years")
    fit = _point_fit(cfg, panel, model, train)
    preds = predict_ties(fit, model, panel, test)
    pub.add("predictions.csv", preds.to_csv())
    pub.add("scores.csv", scores_csv([*per_year_scores(preds), pooled_score(preds)]))


def cmd_closure(cfg: RunConfig, pub: Publisher, threads: int) -> None:
    nets = _networks(cfg, pub)
    sec = cfg.section("closure")
    model = cfg.model(sec.get("model"), "closure.model")
    cap = sec.get("cap", DEFAULT_STRATUM_CAP)
    dists = []
    for name in sec.get("networks", ["all_mid", "fatal"]):
        panel = nets[name]
        years = _years(panel, cfg.section("split").get("train_years"), "split.train_years")
        fit = _point_fit(cfg, panel, model, years)
        dists.append(closure_probabilities(fit, model, panel.subset(years), name, cap))
    pub.add("closure.csv", closure_csv(dists))
    if len(dists) == 2 and all(len(d.pooled()) for d in dists):
        pub.add("ks.json", ks_two_sample(dists[0].pooled(), dists[1].pooled()).to_json())


def cmd_influence(cfg: RunConfig, pub: Publisher, threads: int) -> None:
    sec = cfg.section("influence")
    panel = _networks(cfg, pub)[sec.get("network", "fatal")]
    model = cfg.model(sec.get("model", DEFAULT_INFLUENCE_MODEL), "influence.model")
    target = sec.get("target", "weak_link")
    if target not in model.names:
        raise ConfigError(f"target term {target!r} is not in the influence model", "influence.target")
    est = cfg.estimation()
    report = influence_scan(panel, model, target, tol=est["tol"], max_iter=est["max_iter"], threads=threads)
    pub.add("influence.csv", report.to_csv())


def cmd_synth(cfg: RunConfig, pub: Publisher, threads: int) -> None:
    sec = cfg.section("synth")
    if not sec:
        raise ConfigError("synth needs a 'synth' section", "synth")
    model = cfg.model(sec.get("model"), "synth.model")
    unknown = sorted(set(sec["theta"]) - set(model.names))
    if unknown:
        raise ConfigError(f"theta names terms not in the model: {unknown}", "synth.theta")
    theta = {name: float(sec["theta"].get(name, 0.0)) for name in model.names}
    seed = pub.seeds["synth"]
    panel = generate_synthetic_panel(
        sec["n_nodes"],
        sec["n_years"],
        theta,
        model,
        seed,
        start_year=sec.get("start_year", 1),
        regime_mix=tuple(sec.get("regime_mix", (0.4, 0.2, 0.4))),
        config=cfg.derive(),
    )
    with tempfile.TemporaryDirectory() as tmp:
        export_panel(panel, Path(tmp) / "nodes.csv", Path(tmp) / "dyads.csv")
        pub.add("nodes.csv", (Path(tmp) / "nodes.csv").read_text())
        pub.add("dyads.csv", (Path(tmp) / "dyads.csv").read_text())
    pub.add("synth.json", json.dumps({"seed": seed, "model": model.to_json(), "theta": theta}, indent=2, sort_keys=True) + "\n")


def cmd_features(cfg: RunConfig, pub: Publisher, threads: int) -> None:
    nets = _networks(cfg, pub)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["network", "year", "feature", "count"])
    for name in ("all_mid", "fatal"):
        for year, feature, count in yearly_feature_counts(nets[name]):
            w.writerow([name, year, feature, count])
    pub.add("features.csv", buf.getvalue())


HANDLERS: dict[str, Callable[[RunConfig, Publisher, int], None]] = {
    "fit": cmd_fit,
    "gof": cmd_gof,
    "predict": cmd_predict,
    "closure": cmd_closure,
    "influence": cmd_influence,
    "synth": cmd_synth,
    "features": cmd_features,
}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _fail(code: int, kind: str, exc: Exception, path: str | None = None) -> int:
    payload = {"error": kind, "exit_code": code, "message": str(exc), "type": type(exc).__name__}
    if path is not None:
        payload["path"] = path
    line = getattr(exc, "line", None)
    if line is not None:
        payload["line"] = line
    sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="conflictnet", description="Regime-typed conflict network analyses.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="path to the JSON run configuration")
    parser.add_argument("--out", help="output directory (overrides the config's 'output')")
    parser.add_argument("--seed", type=int, help="seed (overrides the config's 'seed')")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for bootstrap and influence refits")
    return parser


def execute(command: str, config_path, *, out=None, seed=None, threads: int = 1) -> int:
    """Run one command; returns the process exit status."""
    if seed is not None and seed < 0:
        return _fail(EXIT_CONFIG, "config", ConfigError("seed must be non-negative", "seed"), "seed")
    try:
        cfg = load_config(config_path, seed=seed, out=out)
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        with FileLock(str(cfg.out_dir / LOCK)):
            pub = Publisher(cfg, command)
            HANDLERS[command](cfg, pub, max(1, threads))
            pub.publish()
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", exc, exc.path)
    except (ModelSpecError, PreconditionError) as exc:
        return _fail(EXIT_CONFIG, "config", exc)
    except PanelError as exc:
        return _fail(EXIT_DATA, "data", exc)
    except (EstimationError, MetricError) as exc:
        return _fail(EXIT_ESTIMATION, "estimation", exc)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return execute(args.command, args.config, out=args.out, seed=args.seed, threads=args.threads)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
