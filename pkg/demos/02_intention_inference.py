#!/usr/bin/env python3
"""Watch the path-intention posterior sharpen as a vehicle commits to a turn.

A vehicle drives the west-to-south turn of the threeway junction; while it is
still on the shared approach lane, the straight-east and turn-south
hypotheses are indistinguishable, and the posterior splits.  Once it bends
into the turn, the distribution collapses onto the true route.
"""

import numpy as np

from crossplan.domain import intention_distribution
from crossplan.fixtures import fixture_path
from crossplan.simulation import load_scenario

scenario = load_scenario(fixture_path("threeway.json"))
paths = scenario.paths
truth = ("in_w", "ws", "out_s")
labels = [" -> ".join(r) for r in paths.routes]

vehicle = scenario.vehicles[0]
print(f"{'t':>5s}  {'position':>18s}   posterior over routes")
for t in np.arange(0.0, vehicle.times[-1], 1.0):
    row = vehicle.interpolate(t)
    probs = intention_distribution(row[0:2], row[4:6], paths)
    top = np.argsort(probs)[::-1][:3]
    shown = ", ".join(f"{labels[i]}: {probs[i]:.2f}" for i in top
                      if probs[i] > 0.01)
    print(f"{t:5.1f}  ({row[0]:7.2f},{row[1]:7.2f})   {shown}")

true_idx = labels.index(" -> ".join(truth))
final = intention_distribution(vehicle.samples[-1][0:2],
                               vehicle.samples[-1][4:6], paths)
print(f"\nfinal mass on the true route: {final[true_idx]:.3f}")
