#!/usr/bin/env python3
"""A miniature version of the optimization-horizon study: sweep N over the
roundabout scenario with a handful of seeds per cell and plot the result.

The full study (50 runs per cell, all the grids) runs through the CLI, e.g.

    crossplan sweep --scenario src/crossplan/data/roundabout.json \
        --param N --values 1,2,3,5 --dt 0.5 --runs 50 --jobs 2 --out n.csv
"""

import os

from crossplan.fixtures import fixture_path
from crossplan.simulation import load_scenario
from crossplan.sweep import SweepConfig, emit_csv, emit_svg, run_sweep

scenario = load_scenario(fixture_path("roundabout.json"))
config = SweepConfig(
    scenario=scenario,
    grid={"N": [1, 5]},
    dts=(0.5,),
    runs_per_cell=4,
    seed_base=0,
    jobs=os.cpu_count() or 1,
)
cells = run_sweep(config)

print(emit_csv(cells).decode())
for cell in cells:
    name, value = cell.params[0]
    print(f"N={value}: mean reward {cell.mean_reward:8.0f}  "
          f"crashes {cell.crash_count}/{cell.runs}  "
          f"mean runtime {cell.mean_runtime:.1f} s")

with open("sweep_horizon.svg", "wb") as fh:
    fh.write(emit_svg(cells))
print("wrote sweep_horizon.svg")
