#!/usr/bin/env python3
"""Run one closed-loop roundabout crossing at the default settings and print
the ego's yield-and-go behavior step by step."""

import time

from crossplan.domain import DomainParams, desired_velocity
from crossplan.fixtures import fixture_path
from crossplan.simulation import load_scenario, run_simulation
from crossplan.solver import SolverConfig

scenario = load_scenario(fixture_path("roundabout.json"))
config = SolverConfig()        # N=5, 3000 episodes, 300 particles, c=20000
params = DomainParams()

t0 = time.perf_counter()
result = run_simulation(scenario, config, params, dt=0.5, seed=0)
elapsed = time.perf_counter() - t0

print(f"crashed={result.crashed}  reached_goal={result.reached_goal}  "
      f"steps={result.steps}")
print(f"normalized reward: {result.normalized_reward:.0f}")
print(f"wall time: {elapsed:.1f} s "
      f"({result.wall_runtime / (result.steps * 0.5) * 100:.0f}% of realtime)")

print("\n  t     action   p      v    v_des")
for k, action, p, v in result.action_log:
    if k % 2 == 0:
        vd = desired_velocity(p, scenario.ego_path, scenario.paths,
                              params.rewards)
        print(f"{k * 0.5:5.1f}   {action:+5.1f} {p:7.2f} {v:5.2f} {vd:6.2f}")
