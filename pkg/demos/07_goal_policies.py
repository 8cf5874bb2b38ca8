#!/usr/bin/env python3
"""Goal reaching with the three correction policies and the data baseline.

Four ways to drive the plant tip to a target:

* policy A keeps the simulation-trained inverse model and shifts its target
  by the Gaussian-process error estimate,
* policy B retrains the inverse model on gap-corrected simulator data and
  commands the real target directly,
* policy C runs B far from the goal and hands over to A inside a switching
  radius,
* the baseline abandons the simulator and trains only on plant data.

This script shows the fixed-point iteration that computes A's shifted target,
then scores all four on a shared goal suite, closed loop against open loop.
"""

import numpy as np

from _shared import build_stack
from spinerobot.control import (PolicyConfig, evaluation_targets,
                                fixed_point_targets, goal_reaching_eval)
from spinerobot.twin import make_twin_plant

stack = build_stack()
params, config = stack["params"], stack["config"]

cfg_a = PolicyConfig("A", params=params, gpr=stack["gpr"],
                     inverse_a=stack["inverse_sim"])
cfg_b = PolicyConfig("B", params=params, inverse_b=stack["inverse_b"])
cfg_c = PolicyConfig("C", params=params, gpr=stack["gpr"],
                     inverse_a=stack["inverse_sim"],
                     inverse_b=stack["inverse_b"])
cfg_pi = PolicyConfig("real-baseline", params=params,
                      inverse_b=stack["baseline"])

print("=== 1. the shifted-target fixed point behind policy A ===")
targets = evaluation_targets(params, config, n=10, seed=0)
tgt = targets[0]
fp = fixed_point_targets(cfg_a, np.array([0.0, 0.0, 0.21]), tgt)
print(f"  real target {np.round(tgt * 1e3, 2)} mm")
for k, it in enumerate(fp.iterates):
    print(f"  iterate {k}: {np.round(it * 1e3, 3)} mm")
print(f"  converged={fp.converged} in {fp.iterations} iteration(s); the "
      f"error estimate settles at {np.round(fp.e_gp * 1e3, 3)} mm")

print()
print("=== 2. ten shared goals, closed loop ===")
plant = make_twin_plant(params, config)
rows = []
for name, cfg in (("A", cfg_a), ("B", cfg_b), ("C", cfg_c),
                  ("baseline", cfg_pi)):
    stats = goal_reaching_eval(cfg, plant, targets=targets, seed=0)
    rows.append((name, stats))
    print(f"  {name:8s}: mean {stats['mean'] * 1e3:6.2f} mm, "
          f"std {stats['std'] * 1e3:5.2f} mm, failures {stats['n_fail']}")

print()
print("=== 3. the same goals, open loop ===")
for name, cfg in (("A", cfg_a), ("B", cfg_b), ("baseline", cfg_pi)):
    stats = goal_reaching_eval(cfg, plant, targets=targets, seed=0,
                               mode="open-loop")
    print(f"  {name:8s}: mean {stats['mean'] * 1e3:6.2f} mm, "
          f"std {stats['std'] * 1e3:5.2f} mm")
print("  one-shot commands land millimeters-to-centimeters off; feedback")
print("  through the same models closes most of that gap.")

print()
print("=== 4. where policy C spends its time ===")
log = rows[2][1]["logs"][0]
print(f"  first trial branches: {''.join(log.branches)}")
print("  C takes its B branch only while the observed error sits outside")
print("  the switching radius; near the goal the live error estimate of")
print("  the A branch does the fine work.")
