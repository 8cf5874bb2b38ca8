#!/usr/bin/env python3
"""Goal reaching with an extra 20 g mass hung from the tip.

None of the models ever saw a loaded plant: the load bends the rod away
from everything they learned, and closed-loop feedback has to absorb the
difference.  This script scores the three correction policies and the
plant-data baseline on the same goals with and without the load.
"""

from _shared import build_stack
from spinerobot.control import (PolicyConfig, evaluation_targets,
                                goal_reaching_eval, tip_load_eval)
from spinerobot.twin import make_twin_plant

stack = build_stack()
params, config = stack["params"], stack["config"]

configs = {
    "A": PolicyConfig("A", params=params, gpr=stack["gpr"],
                      inverse_a=stack["inverse_sim"]),
    "B": PolicyConfig("B", params=params, inverse_b=stack["inverse_b"]),
    "C": PolicyConfig("C", params=params, gpr=stack["gpr"],
                      inverse_a=stack["inverse_sim"],
                      inverse_b=stack["inverse_b"]),
    "baseline": PolicyConfig("real-baseline", params=params,
                             inverse_b=stack["baseline"]),
}

targets = evaluation_targets(params, config, n=8, seed=3)
plant = make_twin_plant(params, config)

print("=== closed-loop goal error, unloaded vs 20 g tip load ===")
print(f"  {'policy':8s} {'unloaded':>12s} {'loaded':>12s}")
for name, cfg in configs.items():
    plain = goal_reaching_eval(cfg, plant, targets=targets, seed=0)
    loaded = tip_load_eval(cfg, params, config, targets, tip_mass=0.020,
                           seed=0)
    print(f"  {name:8s} {plain['mean'] * 1e3:9.2f} mm "
          f"{loaded['mean'] * 1e3:9.2f} mm")

print()
print("  the load costs every policy an order of magnitude: it shifts the")
print("  whole workspace, and only the feedback loop fights back.  The")
print("  shifted-target policy A holds up best because its error estimate")
print("  keeps being refreshed by observations of the loaded plant.")
