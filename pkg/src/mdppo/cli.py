"""Command line entry point: ``mdppo run | sweep | plot``."""

from __future__ import annotations

import argparse
import glob
import json
import logging
import sys
from pathlib import Path

from .config import RunConfig
from .errors import ConfigError, TrainingError
from .harness import DEFAULT_GRID, emit_plot_data, sweep
from .objectives import RATIO_ALIASES
from .trainer import run, summarize


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file of flat 'section.key' settings")
    p.add_argument("--algo", choices=["ppo", "mdppo", "mdpposc"])
    p.add_argument("--ratio", choices=sorted(RATIO_ALIASES))
    p.add_argument("--regime", choices=["separate", "shared"])
    p.add_argument("--n-policies", type=int)
    p.add_argument("--agents-per-policy", type=int)
    p.add_argument("--env", choices=["roller-dense", "roller-sparse"])
    p.add_argument("--seed", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--label", help="run label used in metrics records")
    p.add_argument("--early-stop", action="store_true",
                   help="stop once every policy reaches the success target")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any flat config key, e.g. --set loss.entropy_coef=0")


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except ValueError:
        return raw


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    over: dict = {}
    if args.algo:
        over["trainer.algorithm"] = args.algo
        if args.algo == "ppo" and args.n_policies is None:
            over["trainer.n_policies"] = 1
    if args.ratio:
        over["loss.ratio_form"] = RATIO_ALIASES[args.ratio]
        over["loss.clip_epsilon"] = None
    if args.regime:
        over["trainer.network_regime"] = args.regime
    if args.n_policies is not None:
        over["trainer.n_policies"] = args.n_policies
    if args.agents_per_policy is not None:
        over["trainer.agents_per_policy"] = args.agents_per_policy
    if args.env:
        over["env.variant"] = args.env
    if args.seed is not None:
        over["seed"] = args.seed
    if args.iterations is not None:
        over["trainer.iterations"] = args.iterations
    if args.early_stop:
        over["trainer.early_stop"] = True
    if args.label:
        over["run_label"] = args.label
    elif not args.config:
        over["run_label"] = args.algo or cfg.trainer.algorithm
    for item in args.set:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        over[key] = _parse_value(raw)
    if getattr(args, "out", None):
        over["output_dir"] = args.out
    return cfg.replace(**over)


def _grid(text: str) -> list[tuple[int, int]]:
    cells = []
    for part in text.split(","):
        n, _, m = part.lower().partition("x")
        cells.append((int(n), int(m)))
    return cells


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mdppo", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="train one configuration")
    _add_run_flags(p_run)
    p_run.add_argument("--out", help="output directory (required unless set in --config)")

    p_sweep = sub.add_parser("sweep", help="one run per (N, M) cell and seed")
    _add_run_flags(p_sweep)
    p_sweep.add_argument("--out", required=True)
    p_sweep.add_argument("--grid", type=_grid, default=list(DEFAULT_GRID),
                         help="comma-separated NxM cells, default 1x20,2x10,4x5,5x4,10x2,20x1")
    p_sweep.add_argument("--seeds", type=lambda s: [int(x) for x in s.split(",")], default=[0, 1, 2])
    p_sweep.add_argument("--allow-any-total", action="store_true",
                         help="permit cells with N*M != 20")
    p_sweep.add_argument("--parallel-cells", type=int, default=1)
    p_sweep.add_argument("--cpu-budget", type=int)

    p_plot = sub.add_parser("plot", help="emit mean/min/max curve tables from metrics files")
    p_plot.add_argument("metrics", nargs="*", help="metrics.jsonl files or glob patterns")
    p_plot.add_argument("--out", required=True)
    p_plot.add_argument("--metric", default="success_rate")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    if args.command == "plot":
        files = [f for pat in args.metrics for f in (sorted(glob.glob(pat)) or [pat])]
        try:
            written = emit_plot_data(files, args.out, args.metric)
        except (ConfigError, OSError) as exc:
            print(f"mdppo plot: {exc}", file=sys.stderr)
            return 1
        for p in written:
            print(p)
        return 0

    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        parser.error(str(exc))
    if cfg.output_dir is None:
        parser.error("--out is required (or set output_dir in the config file)")

    if args.command == "run":
        try:
            result = run(cfg)
        except TrainingError as exc:
            print(f"mdppo run: training aborted: {exc}", file=sys.stderr)
            return 3
        s = summarize(result)
        print(f"{cfg.run_label}: {s['iterations_run']} iterations, final success {s['final_success']}")
        print(f"artifacts in {Path(cfg.output_dir)}")
        return 0

    try:
        results = sweep(cfg, args.grid, args.seeds, args.out, args.allow_any_total,
                        args.parallel_cells, args.cpu_budget)
    except ConfigError as exc:
        parser.error(str(exc))
    failed = [r for r in results if r.error]
    print(f"{len(results)} runs, {len(failed)} failed; summary in {Path(args.out) / 'summary.tsv'}")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
