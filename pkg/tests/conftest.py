"""Shared fixtures.

Heavy artifacts (long rollouts, trained networks, fitted error models) are
built once per session and cached on disk under ``tests/.cache`` so repeated
runs skip the rebuild.  Every builder is deterministic, so a cache hit and a
fresh build produce identical artifacts.

Deployed networks are selected by validation MAE across training seeds
{0, 1, 2}; the same rule applies to every network family so no policy gets
a hand-picked model.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from spinerobot.control import evaluation_grid
from spinerobot.datagen import (Dataset, generate_policy_b_dataset,
                                predefined_commands, random_exploration,
                                rollout, sparse_subset)
from spinerobot.gpr import GprModel
from spinerobot.gpr import fit as gpr_fit
from spinerobot.params import RodParams
from spinerobot.rnn import RnnModel, TrainConfig, train, validation_mae
from spinerobot.twin import TwinConfig, make_sim_plant, make_twin_plant

CACHE = Path(__file__).parent / ".cache"
WALK_SEED = 7
TRAIN_SEEDS = (0, 1, 2)


@pytest.fixture(scope="session")
def params() -> RodParams:
    return RodParams()


@pytest.fixture(scope="session")
def twin_config() -> TwinConfig:
    return TwinConfig()


def _cached_dataset(name: str, build) -> Dataset:
    CACHE.mkdir(exist_ok=True)
    path = CACHE / name
    if path.exists():
        return Dataset.from_csv(path)
    ds = build()
    ds.to_csv(path)
    return ds


def _cached_model(name: str, build) -> RnnModel:
    CACHE.mkdir(exist_ok=True)
    path = CACHE / name
    if path.exists():
        return RnnModel.from_json(path)
    model = build()
    model.to_json(path)
    return model


@pytest.fixture(scope="session")
def sim10k(params) -> Dataset:
    return _cached_dataset("sim10k.csv", lambda: rollout(
        make_sim_plant(params),
        random_exploration(params, 10000, seed=WALK_SEED)))


@pytest.fixture(scope="session")
def real10k(params, twin_config) -> Dataset:
    return _cached_dataset("real10k.csv", lambda: rollout(
        make_twin_plant(params, twin_config),
        random_exploration(params, 10000, seed=WALK_SEED)))


@pytest.fixture(scope="session")
def gpr_pool(params, twin_config) -> Dataset:
    return _cached_dataset("gpr_pool.csv", lambda: rollout(
        make_twin_plant(params, twin_config),
        predefined_commands(params, n=1000),
        paired_sim=make_sim_plant(params)))


@pytest.fixture(scope="session")
def gpr100(gpr_pool) -> GprModel:
    CACHE.mkdir(exist_ok=True)
    path = CACHE / "gpr100.json"
    if path.exists():
        return GprModel.from_json(path)
    sub = sparse_subset(gpr_pool, 100, seed=0)
    model = gpr_fit(np.hstack([sub.commands(), sub.sim_tips()]), sub.gaps(),
                    seed=0)
    model.to_json(path)
    return model


@pytest.fixture(scope="session")
def corrected10k(sim10k, gpr100) -> Dataset:
    return _cached_dataset(
        "corrected10k.csv", lambda: generate_policy_b_dataset(sim10k, gpr100))


@pytest.fixture(scope="session")
def eval_grid(params, twin_config) -> np.ndarray:
    CACHE.mkdir(exist_ok=True)
    path = CACHE / "eval_grid.npy"
    if path.exists():
        return np.load(path)
    _, grid = evaluation_grid(params, twin_config)
    np.save(path, grid)
    return grid


def _select_net(family: str, dataset: Dataset) -> RnnModel:
    """Deploy the seed with the best sequential validation MAE."""
    best, best_mae = None, np.inf
    for seed in TRAIN_SEEDS:
        model = _cached_model(
            f"{family}_s{seed}.json",
            lambda: train(dataset, "inverse", TrainConfig(seed=seed))[0])
        mae = validation_mae(model, dataset)
        if mae < best_mae:
            best, best_mae = model, mae
    return best


@pytest.fixture(scope="session")
def inverse_sim(sim10k) -> RnnModel:
    return _select_net("inverse_sim", sim10k)


@pytest.fixture(scope="session")
def inverse_b(corrected10k) -> RnnModel:
    return _select_net("inverse_b", corrected10k)


@pytest.fixture(scope="session")
def pi_real_10k(real10k) -> RnnModel:
    return _select_net("pi_real_10k", real10k)


@pytest.fixture(scope="session")
def pi_real_2k(real10k) -> RnnModel:
    from dataclasses import replace
    prefix = replace(real10k, samples=real10k.samples[:2000])
    return _select_net("pi_real_2k", prefix)


@pytest.fixture(scope="session")
def forward_sim(sim10k) -> RnnModel:
    return _cached_model(
        "forward_sim_s0.json",
        lambda: train(sim10k, "forward", TrainConfig(seed=0))[0])
