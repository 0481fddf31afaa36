"""
Mixed distributed training on the roller task
=============================================

Five policies, four agents each, share their complete and best incomplete
trajectories every iteration.  A single-policy baseline with the same 20
agents runs for comparison, and both curves are written as tab-separated
tables ready for any plotting tool.

Runs take a minute or two on a laptop.
"""

import tempfile
from pathlib import Path

from mdppo.config import RunConfig
from mdppo.harness import emit_plot_data
from mdppo.trainer import run, summarize

out = Path(tempfile.mkdtemp(prefix="mdppo-demo-"))

base = RunConfig().replace(**{"trainer.iterations": 60, "seed": 0})

mixed = base.replace(**{"trainer.algorithm": "mdppo", "trainer.n_policies": 5,
                        "trainer.agents_per_policy": 4, "run_label": "mdppo"})
single = base.replace(**{"trainer.algorithm": "ppo", "trainer.n_policies": 1,
                         "trainer.agents_per_policy": 20, "run_label": "ppo"})

for cfg in (mixed, single):
    result = run(cfg, output_dir=out / cfg.run_label)
    s = summarize(result)
    print(cfg.run_label, "final success per policy:", [round(x, 2) for x in s["final_success"]])
    print(cfg.run_label, "iterations to 90%:", s["iterations_to_success"])

# mean / best / worst success per iteration, one file per run label
tables = emit_plot_data([out / "mdppo" / "metrics.jsonl", out / "ppo" / "metrics.jsonl"], out / "curves")
for path in tables:
    rows = path.read_text().splitlines()
    print(path.name, "->", rows[0], "|", rows[-1])
