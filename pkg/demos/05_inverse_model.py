#!/usr/bin/env python3
"""Training the recurrent inverse model that turns targets into commands.

The controller's core is a single-recurrent-layer network mapping (current
tip, next target tip) to the four tendon lengths that produce that motion.
This script trains one on a modest simulated random walk, watches validation
error fall, checks the analytic gradients against finite differences, and
closes the loop once: command the predicted lengths and see where the
simulator actually lands.
"""

import numpy as np

from spinerobot.datagen import random_exploration, rollout
from spinerobot.params import RodParams, TendonCommand
from spinerobot.rnn import TrainConfig, gradient_check, train
from spinerobot.twin import make_sim_plant

params = RodParams()

print("=== 1. data: a 3000-step simulated random walk ===")
dataset = rollout(make_sim_plant(params),
                  random_exploration(params, 3000, seed=0))
print(f"  {len(dataset)} transitions, 80/20 train/validation split")

print()
print("=== 2. training (truncated backprop through time, Adam) ===")
config = TrainConfig(max_epochs=300, patience=40, seed=0)
model, history = train(dataset, "inverse", config)
marks = [0, len(history) // 4, len(history) // 2, len(history) - 1]
for i in marks:
    h = history[i]
    print(f"  epoch {h['epoch']:3d}  train mse {h['train_mse']:.3e}  "
          f"val MAE {h['val_mae'] * 1e3:.3f} mm")
best = min(h["val_mae"] for h in history)
print(f"  best validation MAE {best * 1e3:.3f} mm over {len(history)} epochs")

print()
print("=== 3. gradients agree with finite differences ===")
dev = gradient_check(model, dataset)
print(f"  max relative deviation {dev:.2e} (analytic backprop is exact)")

print()
print("=== 4. one closed prediction: ask for a motion, execute it ===")
plant = make_sim_plant(params)
plant.reset()
tip = plant.observe()
target = tip + np.array([0.004, -0.003, 0.0])
lengths, _ = model.predict(np.concatenate([tip, target]),
                           model.init_hidden())
plant.step(TendonCommand(lengths, [True] * 4))
landed = plant.observe()
print(f"  asked for tip {np.round(target * 1e3, 2)} mm")
print(f"  landed at     {np.round(landed * 1e3, 2)} mm "
      f"(miss {np.linalg.norm(landed - target) * 1e3:.2f} mm in one step)")
print("  single-step misses at this scale are what the closed-loop")
print("  policies grind away by re-predicting at 5 Hz.")
