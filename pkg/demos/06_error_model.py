#!/usr/bin/env python3
"""Fitting the Gaussian-process error model on ~100 plant samples.

Instead of learning the plant from scratch, the pipeline learns only how the
plant DIFFERS from the simulator: a per-axis Gaussian process maps (command,
simulated tip) to the tip error.  Around a hundred well-spread plant samples
suffice because the gap is smooth.  This script fits one, cross-validates it,
and shows the posterior variance growing away from the data.
"""

import numpy as np

from spinerobot.datagen import random_exploration, rollout, sparse_subset
from spinerobot.gpr import cross_validate, fit
from spinerobot.params import RodParams
from spinerobot.twin import TwinConfig, make_sim_plant, make_twin_plant

params = RodParams()
config = TwinConfig()

print("=== 1. a 400-point paired pool from the twin ===")
pool = rollout(make_twin_plant(params, config),
               random_exploration(params, 400, seed=2),
               paired_sim=make_sim_plant(params))
gaps = pool.gaps()
print(f"  gap to predict: mean |e| = {np.round(np.abs(gaps).mean(axis=0) * 1e3, 3)} mm")

print()
print("=== 2. fit on a spread 100-point subset ===")
sub = sparse_subset(pool, 100, seed=0)
model = fit(np.hstack([sub.commands(), sub.sim_tips()]), sub.gaps(), seed=0)
for i, h in enumerate(model.hypers):
    print(f"  axis {'xyz'[i]}: signal std {np.sqrt(h.signal_variance) * 1e3:.3f} mm, "
          f"noise std {np.sqrt(h.noise_variance) * 1e3:.3f} mm")

print()
print("=== 3. held-out accuracy ===")
X_all = np.hstack([pool.commands(), pool.sim_tips()])
pred = np.array([model.predict_mean(x) for x in X_all])
mae = np.abs(pred - gaps).mean()
print(f"  MAE over the full 400-point pool: {mae * 1e3:.4f} mm")
cv = cross_validate(X_all, gaps, folds=10, seed=0)
print(f"  10-fold CV on the pool itself:    {cv['aggregate'] * 1e3:.4f} mm")

print()
print("=== 4. the variance knows where the data is ===")
x_near = X_all[0]
x_far = x_near + np.array([0.05, 0.05, -0.05, -0.05, 0.1, 0.1, 0.1])
v_near = model.predict_variance(x_near)
v_far = model.predict_variance(x_far)
print(f"  posterior std near training data {np.sqrt(v_near).max() * 1e3:.4f} mm")
print(f"  posterior std far away           {np.sqrt(v_far).max() * 1e3:.4f} mm")
print("  far from data the prediction reverts to zero correction with the")
print("  full prior uncertainty, so the controller degrades gracefully.")
