"""Command-line driver for scenario runs.

Every subcommand works on one output directory::

    config.json             resolved configuration
    true_states.json        simulated states at the four reference points
    data_<point>.jsonl      tomography records
    mle_<point>.json        maximum-likelihood states
    ensemble_<point>.json   posterior ensembles
    analysis.json           analyzed quantities (input of ``report``)
    report.<fmt>            rendered report

``--env all`` runs the four environments into sub-directories and renders a
combined report in the parent directory.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .inference import MLEResult, PosteriorEnsemble, load_mle, save_mle
from .measurement import Dataset
from .qstate import DensityOperator, operator_from_json, operator_to_json
from .report import FORMATS, render_report
from .scenarios import (
    POINTS,
    ConfigError,
    NumericalError,
    PointSummary,
    ScenarioConfig,
    ScenarioReport,
    analyze,
    reconstruct,
    simulate_datasets,
    true_states,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
ALL_ENVS = ("id", "deph", "decor", "reset")
log = logging.getLogger("irrevqed")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON file with ScenarioConfig fields")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--env", choices=ALL_ENVS + ("all",), help="environment (overrides the config)")
    common.add_argument("--shots", type=int, help="shots per reference point (overrides the config)")
    common.add_argument("--out", type=Path, help="output directory (overrides the config)")
    common.add_argument("--format", choices=FORMATS, help="report format (default: all three)")
    common.add_argument("--ideal", action="store_true",
                        help="evaluate quantities on the true states, skipping tomography")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="irrevqed", description="Entropy production of atom-cavity cycles.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in [("simulate", "true states and tomography datasets"),
                        ("estimate", "MLE and posterior sampling from dataset files"),
                        ("analyze", "entropic quantities from ensembles"),
                        ("report", "render analysis.json as csv/json/svg"),
                        ("run", "simulate, estimate, analyze and report")]:
        sub.add_parser(name, parents=[common], help=help_)
    return p


def _config(args) -> ScenarioConfig:
    cfg = ScenarioConfig.load(args.config) if args.config else ScenarioConfig()
    kw = {}
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.env is not None and args.env != "all":
        kw["environment"] = args.env
    if args.shots is not None:
        kw["shots"] = args.shots
    if args.out is not None:
        kw["output_dir"] = str(args.out)
    try:
        return replace(cfg, **kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _environment_configs(args) -> list[ScenarioConfig]:
    cfg = _config(args)
    if args.env != "all":
        return [cfg]
    root = Path(cfg.output_dir)
    return [replace(cfg, environment=e, output_dir=str(root / e)) for e in ALL_ENVS]


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _read_json(path: Path):
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"missing input file {path}; run the earlier stage first") from None


def _stored_config(out: Path) -> ScenarioConfig:
    return ScenarioConfig.from_json(_read_json(out / "config.json"))


def do_simulate(cfg: ScenarioConfig, ideal: bool) -> None:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "config.json", cfg.to_json())
    states = true_states(cfg.environment, cfg.imperfections, cfg.dephasing_basis, cfg.effects.cavity_dim)
    _write_json(out / "true_states.json", {k: operator_to_json(v) for k, v in states.items()})
    if ideal:
        return
    for name, ds in simulate_datasets(cfg, states).items():
        (out / f"data_{name}.jsonl").write_text(ds.to_jsonl(), encoding="utf-8")


def do_estimate(out: Path) -> None:
    cfg = _stored_config(out)
    for name in POINTS:
        text = (out / f"data_{name}.jsonl")
        if not text.exists():
            raise ConfigError(f"missing dataset {text}")
        ds = Dataset.from_jsonl(text.read_text(encoding="utf-8"))
        log.info("reconstructing %s", name)
        mle, ens = reconstruct(cfg, name, ds)
        _write_json(out / f"mle_{name}.json", save_mle(mle))
        (out / f"ensemble_{name}.json").write_text(ens.dumps() + "\n", encoding="utf-8")


def _load_points(out: Path, ideal: bool) -> dict[str, PointSummary]:
    truths = _read_json(out / "true_states.json")
    points = {}
    for name in POINTS:
        p = PointSummary(operator_from_json(truths[name], DensityOperator, check=False))
        if not ideal:
            m = _read_json(out / f"mle_{name}.json")
            p.mle = MLEResult(load_mle(m), m["log_likelihood"], m["iterations"], m["converged"], [])
            p.ensemble = PosteriorEnsemble.from_json(_read_json(out / f"ensemble_{name}.json"))
        points[name] = p
    return points


def do_analyze(out: Path, ideal: bool) -> ScenarioReport:
    cfg = _stored_config(out)
    report = analyze(cfg, _load_points(out, ideal), ideal=ideal)
    _write_json(out / "analysis.json", report.to_json())
    return report


def do_report(out: Path, fmt: str | None, reports=None) -> None:
    if reports is None:
        reports = [ScenarioReport.from_json(_read_json(out / "analysis.json"))]
    for f in (FORMATS if fmt is None else (fmt,)):
        render_report(reports, f, out / f"report.{f}")


def _run_one(command: str, cfg: ScenarioConfig, args) -> ScenarioReport | None:
    out = Path(cfg.output_dir)
    if command in ("simulate", "run"):
        do_simulate(cfg, args.ideal)
    if command == "estimate" or (command == "run" and not args.ideal):
        do_estimate(out)
    if command in ("analyze", "run"):
        return do_analyze(out, args.ideal)
    if command == "report":
        return ScenarioReport.from_json(_read_json(out / "analysis.json"))
    return None


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        configs = _environment_configs(args)
        reports = [_run_one(args.command, cfg, args) for cfg in configs]
        if args.command in ("report", "run"):
            if len(configs) == 1:
                do_report(Path(configs[0].output_dir), args.format, reports)
            else:
                root = Path(_config(args).output_dir)
                do_report(root, args.format, reports)
        if any(r is not None and r.partial for r in reports):
            return EXIT_NUMERICAL
    except ConfigError as exc:
        print(f"irrevqed: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"irrevqed: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (KeyError, ValueError) as exc:
        print(f"irrevqed: invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def main_exit() -> None:
    """Console-script entry point."""
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
