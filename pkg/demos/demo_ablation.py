"""
One-factor ablations
====================

Each grid cell changes one thing relative to the base configuration:
the active losses, the layer count, a dropped relation, and so on.
The same runner backs the ``hinrep ablate`` command.
"""

import tempfile
from pathlib import Path

from hinrep.ablation import parse_grid, run_grid, summarize_runs, write_summary
from hinrep.data_io import SynthConfig, gen_synthetic, write_dataset
from hinrep.training import TrainConfig

work = Path(tempfile.mkdtemp())
data = work / "synthetic.json"
write_dataset(data, *gen_synthetic(SynthConfig(n_legislators=40, n_states=8, n_governors=8, seed=3)))

# loss combinations and depth; values after '=' override the axis defaults
cells = parse_grid("loss;layers=0,1,2;drop_rel=R1,R2")
print(len(cells), "cells:", [f"{c.axis}={c.value}" for c in cells])

config = TrainConfig(d_hidden=32, max_epochs=30)
runs = run_grid(str(data), config, cells, seeds=[0, 1], workers=1)
rows = summarize_runs(runs, cells)
for row in rows:
    print(f"{row['axis']:>9s} {row['value']:>9s}  acc {row['accuracy_mean']:.3f} "
          f"+/- {row['accuracy_std']:.3f}  consistency {row['consistency_mean']:.3f}")

write_summary(work / "ablation.csv", rows)
print((work / "ablation.csv").read_text().splitlines()[0])
