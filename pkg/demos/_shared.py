"""Shared model stack for the controller demos.

Demos 07-10 all need the same trained pieces: a simulation-trained inverse
model, a ~100-point error model, the gap-corrected retrain, and a plant-data
baseline.  Building them takes a couple of minutes, so the first demo to run
writes everything to ``demos/output/stack/`` and the rest load from there.
Delete that directory to force a rebuild.
"""

from pathlib import Path

import numpy as np

from spinerobot.control import policy_b_build, train_real_baseline
from spinerobot.datagen import (Dataset, random_exploration, rollout,
                                sparse_subset)
from spinerobot.gpr import GprModel, fit
from spinerobot.params import RodParams
from spinerobot.rnn import RnnModel, TrainConfig, train
from spinerobot.twin import TwinConfig, make_sim_plant, make_twin_plant

OUT = Path(__file__).resolve().parent / "output"
STACK = OUT / "stack"

# below roughly 6000 samples / 400 epochs the learned inverse model is noisy
# enough that the closed loop can limit-cycle, so the demos train at least
# this much even though it costs a minute
N_SIM = 6000
N_POOL = 400
N_GPR = 100
N_REAL = 2000
TRAIN = TrainConfig(max_epochs=400, patience=40, seed=0)

_FILES = ("inverse_sim.json", "gpr.json", "inverse_b.json", "baseline.json",
          "sim_walk.csv", "paired_pool.csv", "real_walk.csv")


def build_stack() -> dict:
    """Return the demo model stack, building and caching it when missing."""
    STACK.mkdir(parents=True, exist_ok=True)
    params = RodParams()
    config = TwinConfig()
    paths = {name.split(".")[0]: STACK / name for name in _FILES}
    if not all(p.exists() for p in paths.values()):
        print("  [stack] building shared models, takes a couple minutes ...")
        sim_data = rollout(make_sim_plant(params),
                           random_exploration(params, N_SIM, seed=0))
        inverse_sim, _ = train(sim_data, "inverse", TRAIN)
        pool = rollout(make_twin_plant(params, config),
                       random_exploration(params, N_POOL, seed=2),
                       paired_sim=make_sim_plant(params))
        sub = sparse_subset(pool, N_GPR, seed=0)
        gpr = fit(np.hstack([sub.commands(), sub.sim_tips()]), sub.gaps(),
                  seed=0)
        inverse_b = policy_b_build(sim_data, gpr, TRAIN)
        real_data = rollout(make_twin_plant(params, config),
                            random_exploration(params, N_REAL, seed=1))
        baseline = train_real_baseline(real_data, None, TRAIN)
        sim_data.to_csv(paths["sim_walk"])
        pool.to_csv(paths["paired_pool"])
        real_data.to_csv(paths["real_walk"])
        inverse_sim.to_json(paths["inverse_sim"])
        gpr.to_json(paths["gpr"])
        inverse_b.to_json(paths["inverse_b"])
        baseline.to_json(paths["baseline"])
    return {
        "params": params,
        "config": config,
        "inverse_sim": RnnModel.from_json(paths["inverse_sim"]),
        "gpr": GprModel.from_json(paths["gpr"]),
        "inverse_b": RnnModel.from_json(paths["inverse_b"]),
        "baseline": RnnModel.from_json(paths["baseline"]),
        "sim_data": Dataset.from_csv(paths["sim_walk"]),
        "pool": Dataset.from_csv(paths["paired_pool"]),
        "real_data": Dataset.from_csv(paths["real_walk"]),
    }
