"""Command-line entry point: entropy estimation, training runs, reports.

Exit codes are a stable contract: 0 success, 2 usage or configuration
problems, 3 numerical failure (divergence).  Run directories are named
from the configuration hash, and every artifact except the timing
sidecar is byte-reproducible for identical inputs.  The environment
variable ``ELOSS_EPSILON`` overrides the neighbor-distance clamp.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .analysis import (Curve, anomaly_report, max_metric, mavp_abs,
                       mavp_literal, svg_line_plot)
from .config import ConfigError, ExperimentConfig, load_experiment_config
from .datasets import make_dataset
from .entropy import SampleMatrix, entropy_kl
from .network import load_checkpoint, save_checkpoint
from .training import build_net, train

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3


def _env_epsilon() -> float | None:
    raw = os.environ.get("ELOSS_EPSILON")
    if raw is None:
        return None
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad ELOSS_EPSILON value {raw!r}") from exc


def cmd_entropy(args) -> int:
    try:
        samples = SampleMatrix.from_csv(args.csv_path)
    except (OSError, ValueError) as exc:
        print(f"error: cannot read samples: {exc}", file=sys.stderr)
        return EXIT_USAGE
    epsilon = _env_epsilon()
    kwargs = {} if epsilon is None else {"epsilon": epsilon}
    try:
        est = entropy_kl(samples, k=args.k, **kwargs)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    record = {"value": est.value, "k": est.k, "n": est.n, "d": est.d,
              "clamped_count": est.clamped_count}
    if args.json:
        print(json.dumps(record, sort_keys=True))
    else:
        print(f"H(X,k={est.k}) = {est.value:.6f} nats  "
              f"(n={est.n}, d={est.d}, clamped={est.clamped_count})")
    return EXIT_OK


def run_experiment(cfg: ExperimentConfig, out_root: Path) -> tuple[Path, str]:
    """Train per config and persist all run artifacts; returns (dir, status)."""
    run_dir = out_root / f"run-{cfg.config_hash()}"
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.json").write_text(cfg.to_json())

    data = make_dataset(cfg.dataset["name"], seed=cfg.dataset["seed"],
                        sizes=cfg.split_sizes())
    tc = cfg.train_config()
    env_eps = _env_epsilon()
    if env_eps is not None:
        tc = replace(tc, epsilon=env_eps)
    net = build_net(tc, data, blocks=cfg.model["blocks"], width=cfg.model["width"],
                    layers_per_block=cfg.model["layers_per_block"])
    log = train(net, data, tc)

    log.write_jsonl(run_dir / "runlog.jsonl")
    log.write_csv(run_dir / "runlog.csv")
    log.write_curve_csv(run_dir / "curve.csv")
    log.write_timing(run_dir / "timing.json")
    save_checkpoint(net, run_dir / "ckpt.json")
    return run_dir, log.status


def _train_one(payload) -> tuple[str, str]:
    cfg_dict, out_root, seed = payload
    from .config import parse_experiment_config

    cfg = parse_experiment_config(cfg_dict)
    if seed is not None:
        cfg = _override_seed(cfg, seed)
    run_dir, status = run_experiment(cfg, Path(out_root))
    return str(run_dir), status


def _override_seed(cfg: ExperimentConfig, seed: int) -> ExperimentConfig:
    doc = cfg.to_dict()
    doc["train"]["seed"] = seed
    doc["dataset"]["seed"] = seed
    from .config import parse_experiment_config

    return parse_experiment_config(doc)


def cmd_train(args) -> int:
    out_root = Path(args.out)
    jobs = []
    for path in args.config:
        cfg = load_experiment_config(path)
        if args.seed is not None:
            cfg = _override_seed(cfg, args.seed)
        jobs.append((cfg.to_dict(), str(out_root), None))

    results = []
    if args.parallel > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.parallel) as pool:
            results = list(pool.map(_train_one, jobs))
    else:
        results = [_train_one(job) for job in jobs]

    worst = EXIT_OK
    for run_dir, status in results:
        line = {"run_dir": run_dir, "status": status}
        print(json.dumps(line) if args.json else f"{run_dir}: {status}")
        if status == "diverged":
            worst = EXIT_NUMERICAL
    return worst


def _load_run(run_dir: Path) -> dict:
    config_path = run_dir / "config.json"
    curve_path = run_dir / "curve.csv"
    if not config_path.exists() or not curve_path.exists():
        raise FileNotFoundError(f"{run_dir} is missing run artifacts")
    cfg = load_experiment_config(config_path)
    return {"dir": run_dir, "config": cfg, "curve": Curve.from_csv(curve_path)}


def _report_curves(runs: list[dict], out_dir: Path, as_json: bool) -> int:
    rows = []
    for run in runs:
        label = run["dir"].name
        curve = run["curve"]
        rows.append((label, max_metric(curve), mavp_abs(curve), mavp_literal(curve)))
    lines = ["run,max,mavp_abs,mavp_literal"]
    lines += [f"{label},{mx!r},{ma!r},{ml!r}" for label, mx, ma, ml in rows]
    if len(rows) == 2:
        lines.append(f"delta,{rows[1][1] - rows[0][1]!r},"
                     f"{rows[1][2] - rows[0][2]!r},{rows[1][3] - rows[0][3]!r}")
    (out_dir / "curves.csv").write_text("\n".join(lines) + "\n")
    svg = svg_line_plot({run["dir"].name: run["curve"] for run in runs},
                        title="validation metric")
    (out_dir / "curves.svg").write_text(svg)
    _emit(out_dir, ["curves.csv", "curves.svg"], as_json)
    return EXIT_OK


def _report_anomaly(runs: list[dict], out_dir: Path, as_json: bool) -> int:
    run = runs[0]
    cfg: ExperimentConfig = run["config"]
    specs = cfg.noise_specs()
    if not specs:
        raise ConfigError("anomaly report needs a non-empty 'noise' section")
    data = make_dataset(cfg.dataset["name"], seed=cfg.dataset["seed"],
                        sizes=cfg.split_sizes())
    tc = cfg.train_config()
    net = build_net(tc, data, blocks=cfg.model["blocks"], width=cfg.model["width"],
                    layers_per_block=cfg.model["layers_per_block"])
    load_checkpoint(net, run["dir"] / "ckpt.json")
    report = anomaly_report(net, data, specs, k=tc.k, epsilon=tc.epsilon,
                            split=cfg.analysis["split"],
                            batch_size=cfg.analysis["batch_size"])
    (out_dir / "anomaly.csv").write_text(report.to_csv())
    (out_dir / "anomaly.json").write_text(report.to_json() + "\n")
    metric_curve = Curve.from_values([r.mean_eloss_metric for r in report.rows])
    conf_curve = Curve.from_values([r.mean_confidence for r in report.rows])
    svg = svg_line_plot({"eloss_metric": metric_curve, "confidence": conf_curve},
                        title="per-condition means (0 = clean)")
    (out_dir / "anomaly.svg").write_text(svg)
    _emit(out_dir, ["anomaly.csv", "anomaly.json", "anomaly.svg"], as_json)
    return EXIT_OK


def _report_sweep(runs: list[dict], out_dir: Path, as_json: bool) -> int:
    rows = []
    for run in runs:
        cfg: ExperimentConfig = run["config"]
        timing = json.loads((run["dir"] / "timing.json").read_text())
        rows.append((cfg.train["eloss_coverage"],
                     run["curve"].values[-1],
                     max_metric(run["curve"]),
                     1000.0 * timing["step_seconds_median"]))
    rows.sort(key=lambda r: r[0])
    lines = ["coverage,final_metric,max_metric,step_ms"]
    lines += [f"{c},{fin!r},{mx!r},{ms!r}" for c, fin, mx, ms in rows]
    (out_dir / "sweep.csv").write_text("\n".join(lines) + "\n")
    svg = svg_line_plot(
        {"final_metric": Curve(steps=tuple(r[0] for r in rows),
                               values=tuple(r[1] for r in rows))},
        title="metric vs coverage")
    (out_dir / "sweep.svg").write_text(svg)
    _emit(out_dir, ["sweep.csv", "sweep.svg"], as_json)
    return EXIT_OK


def _emit(out_dir: Path, names: list[str], as_json: bool):
    if as_json:
        print(json.dumps({"out_dir": str(out_dir), "files": names}))
    else:
        for name in names:
            print(out_dir / name)


def cmd_report(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    runs = [_load_run(Path(d)) for d in args.run_dirs]
    if args.mode == "curves":
        return _report_curves(runs, out_dir, args.json)
    if args.mode == "anomaly":
        return _report_anomaly(runs, out_dir, args.json)
    return _report_sweep(runs, out_dir, args.json)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eloss",
        description="k-NN layer-entropy toolkit: estimation, training, reports")
    sub = parser.add_subparsers(dest="command", required=True)

    p_ent = sub.add_parser("entropy", help="estimate entropy of CSV samples")
    p_ent.add_argument("csv_path")
    p_ent.add_argument("-k", type=int, default=1, help="neighbor order (default 1)")
    p_ent.add_argument("--json", action="store_true")
    p_ent.set_defaults(fn=cmd_entropy)

    p_tr = sub.add_parser("train", help="run training from experiment configs")
    p_tr.add_argument("--config", action="append", required=True,
                      help="experiment config path (repeatable)")
    p_tr.add_argument("--seed", type=int, default=None,
                      help="override dataset and train seeds")
    p_tr.add_argument("--out", default="runs")
    p_tr.add_argument("--json", action="store_true")
    p_tr.add_argument("--parallel", type=int, default=1)
    p_tr.set_defaults(fn=cmd_train)

    p_rep = sub.add_parser("report", help="build tables and plots from run dirs")
    p_rep.add_argument("mode", choices=("curves", "anomaly", "sweep"))
    p_rep.add_argument("run_dirs", nargs="+")
    p_rep.add_argument("--out", default="report")
    p_rep.add_argument("--json", action="store_true")
    p_rep.set_defaults(fn=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
