"""Experiment sweeps and curve-data emission on top of :mod:`mdppo.trainer`."""

from __future__ import annotations

import json
import logging
import math
import os
import traceback
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .config import RunConfig
from .errors import ConfigError
from .trainer import run, summarize

log = logging.getLogger(__name__)

TOTAL_AGENTS = 20
DEFAULT_GRID = tuple((n, TOTAL_AGENTS // n) for n in (1, 2, 4, 5, 10, 20))


@dataclass
class CellResult:
    label: str
    n_policies: int
    agents_per_policy: int
    seed: int
    out_dir: str
    summary: dict | None
    error: str | None = None


def cell_config(base: RunConfig, n: int, m: int, seed: int, out_root: Path) -> RunConfig:
    label = f"{base.run_label}-n{n}m{m}"
    algo = base.trainer.algorithm
    if algo == "ppo" and n != 1:
        algo = "mdppo"
    return base.replace(**{
        "trainer.algorithm": algo,
        "trainer.n_policies": n,
        "trainer.agents_per_policy": m,
        "seed": seed,
        "run_label": label,
        "output_dir": str(out_root / label / f"seed{seed}"),
    })


def _run_cell(cfg: RunConfig) -> CellResult:
    t = cfg.trainer
    try:
        result = run(cfg)
        return CellResult(cfg.run_label, t.n_policies, t.agents_per_policy, cfg.seed,
                          cfg.output_dir, summarize(result))
    except Exception as exc:  # noqa: BLE001 - one bad cell must not sink the sweep
        log.error("cell %s seed %d failed: %s", cfg.run_label, cfg.seed, exc)
        Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)
        Path(cfg.output_dir, "error.txt").write_text(traceback.format_exc())
        return CellResult(cfg.run_label, t.n_policies, t.agents_per_policy, cfg.seed,
                          cfg.output_dir, None, f"{type(exc).__name__}: {exc}")


def sweep(
    base: RunConfig,
    grid: Sequence[tuple[int, int]] = DEFAULT_GRID,
    seeds: Sequence[int] = (0, 1, 2),
    out_dir: str | Path = "sweep",
    allow_any_total: bool = False,
    parallel_cells: int = 1,
    cpu_budget: int | None = None,
) -> list[CellResult]:
    """One independent run per (N, M) cell and seed, under a shared output directory."""
    if not allow_any_total:
        bad = [(n, m) for n, m in grid if n * m != TOTAL_AGENTS]
        if bad:
            raise ConfigError(f"grid cells {bad} do not keep N*M = {TOTAL_AGENTS}")
    if parallel_cells > 1:
        budget = cpu_budget if cpu_budget is not None else (os.cpu_count() or 1)
        if parallel_cells * base.trainer.workers > budget:
            raise ConfigError(
                f"{parallel_cells} parallel cells x {base.trainer.workers} workers exceeds "
                f"the CPU budget of {budget}"
            )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    configs = [cell_config(base, n, m, s, out) for n, m in grid for s in seeds]
    if parallel_cells > 1:
        with ProcessPoolExecutor(max_workers=parallel_cells) as ex:
            results = list(ex.map(_run_cell, configs))
    else:
        results = [_run_cell(c) for c in configs]
    write_sweep_summary(results, out / "summary.tsv")
    (out / "cells.json").write_text(json.dumps([r.__dict__ for r in results], indent=2))
    return results


def aggregate_cells(results: Iterable[CellResult]) -> dict[str, dict]:
    """Mean/min/max of every policy's final success rate, per cell."""
    cells: dict[str, dict] = {}
    for r in results:
        c = cells.setdefault(r.label, {"n": r.n_policies, "m": r.agents_per_policy,
                                       "finals": [], "runs": 0, "failed": 0})
        c["runs"] += 1
        if r.summary is None:
            c["failed"] += 1
        else:
            c["finals"].extend(r.summary["final_success"])
    for c in cells.values():
        f = c.pop("finals")
        c["mean"] = sum(f) / len(f) if f else math.nan
        c["min"] = min(f) if f else math.nan
        c["max"] = max(f) if f else math.nan
    return cells


def write_sweep_summary(results: Sequence[CellResult], path: Path) -> None:
    rows = ["cell\tn_policies\tagents_per_policy\truns\tfailed\tmean_final_success\tmin\tmax"]
    for label, c in aggregate_cells(results).items():
        rows.append(f"{label}\t{c['n']}\t{c['m']}\t{c['runs']}\t{c['failed']}\t"
                    f"{c['mean']!r}\t{c['min']!r}\t{c['max']!r}")
    path.write_text("\n".join(rows) + "\n")


def read_metrics(paths: Iterable[str | Path]) -> list[dict]:
    records = []
    for p in paths:
        with open(p) as fh:
            for line in fh:
                line = line.strip()
                if line:
                    records.append(json.loads(line))
    return records


def curve_table(records: Iterable[dict], metric: str = "success_rate") -> dict[str, list[tuple]]:
    """Per label: rows of (iteration, mean, min, max) over every policy and run."""
    groups: dict[str, dict[int, list[float]]] = defaultdict(lambda: defaultdict(list))
    for rec in records:
        v = rec.get(metric)
        if v is None:
            continue
        groups[rec["run_label"]][rec["iteration"]].append(float(v))
    out = {}
    for label, by_iter in groups.items():
        out[label] = [
            (it, sum(vs) / len(vs), min(vs), max(vs)) for it, vs in sorted(by_iter.items())
        ]
    return out


def emit_plot_data(metrics_files: Sequence[str | Path], out_dir: str | Path,
                   metric: str = "success_rate") -> list[Path]:
    """Write one ``<label>.tsv`` per curve with columns iteration, mean, min, max."""
    if not metrics_files:
        raise ConfigError("no metrics files given")
    table = curve_table(read_metrics(metrics_files), metric)
    if not table:
        raise ConfigError(f"metrics files contain no {metric!r} values")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for label, rows in table.items():
        path = out / f"{label}.tsv"
        lines = ["iteration\tmean\tmin\tmax"] + [f"{i}\t{a!r}\t{b!r}\t{c!r}" for i, a, b, c in rows]
        path.write_text("\n".join(lines) + "\n")
        written.append(path)
    return written
