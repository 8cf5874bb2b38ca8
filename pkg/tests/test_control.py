"""Control policies and evaluation harnesses against the twin plant."""

import csv

import numpy as np
import pytest

from spinerobot.control import (ControllerState, PathStalledError,
                                PolicyConfig, evaluation_targets,
                                fixed_point_targets, goal_reaching_eval,
                                path_track, path_waypoints, policy_a_command,
                                policy_c_step, run_goal, sweep_to_csv,
                                tip_load_eval, train_real_baseline)
from spinerobot.datagen import MAX_STEP_M, generate_policy_b_dataset, sparse_subset
from spinerobot.gpr import GprHyper, GprModel
from spinerobot.params import TendonCommand
from spinerobot.rnn import TrainConfig, validation_mae
from spinerobot.twin import TwinConfig, make_twin_plant


class _ConstGpr:
    """Stub error model returning one fixed error vector everywhere."""

    def __init__(self, c):
        self.c = np.asarray(c, dtype=float)

    def predict_mean(self, x):
        return self.c.copy()


@pytest.fixture(scope="module")
def zero_gpr(gpr_pool) -> GprModel:
    sub = sparse_subset(gpr_pool, 100, seed=0)
    X = np.hstack([sub.commands(), sub.sim_tips()])
    return GprModel(X, np.zeros((100, 3)),
                    [GprHyper(1e-4, np.ones(7), 1e-6)] * 3)


@pytest.fixture(scope="module")
def cfg_a(params, gpr100, inverse_sim) -> PolicyConfig:
    return PolicyConfig("A", params=params, gpr=gpr100, inverse_a=inverse_sim)


@pytest.fixture(scope="module")
def targets50(params, twin_config, eval_grid) -> np.ndarray:
    return evaluation_targets(params, twin_config, n=50, seed=0,
                              grid=eval_grid)


@pytest.fixture(scope="module")
def identity_a_stats(params, zero_gpr, inverse_sim, targets50) -> dict:
    """Policy A with no gap anywhere: the controller's intrinsic accuracy."""
    cfg = PolicyConfig("A", params=params, gpr=zero_gpr,
                       inverse_a=inverse_sim)
    plant = make_twin_plant(params, TwinConfig.identity())
    return goal_reaching_eval(cfg, plant, targets=targets50, seed=0)


# -- configuration guards ----------------------------------------------------

def test_policy_config_validation(params, gpr100, inverse_sim, inverse_b,
                                  forward_sim):
    with pytest.raises(ValueError):
        PolicyConfig("D", params=params)
    with pytest.raises(ValueError):
        PolicyConfig("A", params=params, inverse_a=inverse_sim)  # no gpr
    with pytest.raises(ValueError):
        PolicyConfig("B", params=params)  # no inverse_b
    with pytest.raises(ValueError):
        PolicyConfig("C", params=params, gpr=gpr100, inverse_a=inverse_sim)
    with pytest.raises(ValueError):
        PolicyConfig("A", params=params, gpr=gpr100, inverse_a=inverse_sim,
                     e_c=0.0)
    with pytest.raises(ValueError):
        PolicyConfig("A", params=params, gpr=gpr100, inverse_a=forward_sim)
    PolicyConfig("real-baseline", params=params, inverse_b=inverse_b)


# -- fixed-point target shifting ----------------------------------------------

def test_fixed_point_zero_gap_single_iteration(params, zero_gpr, inverse_sim):
    cfg = PolicyConfig("A", params=params, gpr=zero_gpr,
                       inverse_a=inverse_sim)
    target = np.array([-0.02, 0.003, 0.21])
    res = fixed_point_targets(cfg, np.array([-0.021, 0.0, 0.213]), target)
    assert res.converged and res.iterations == 1
    assert np.array_equal(res.x_s_target, target)
    assert np.array_equal(res.e_gp, np.zeros(3))


def test_fixed_point_constant_error_field(params, inverse_sim):
    c = np.array([0.004, -0.003, 0.002])
    cfg = PolicyConfig("A", params=params, gpr=_ConstGpr(c),
                       inverse_a=inverse_sim)
    target = np.array([-0.02, 0.003, 0.21])
    res = fixed_point_targets(cfg, np.array([-0.021, 0.0, 0.213]), target)
    assert res.converged and res.iterations == 2
    assert np.array_equal(res.x_s_target, target + c)
    assert np.array_equal(res.iterates[-1], res.iterates[-2])


def test_fixed_point_contracts_on_target_suite(cfg_a, params, twin_config,
                                               targets50):
    plant = make_twin_plant(params, twin_config)
    plant.reset()
    x0 = plant.observe()
    contracting = 0
    for tgt in targets50:
        res = fixed_point_targets(cfg_a, x0, tgt)
        assert res.converged
        assert res.iterations <= cfg_a.max_fixed_point_iters
        deltas = np.linalg.norm(np.diff(res.iterates, axis=0), axis=1)
        if len(deltas) < 2 or np.all(np.diff(deltas) < 0):
            contracting += 1
    assert contracting >= 0.9 * len(targets50)


def test_policy_a_zero_gap_first_call(params, zero_gpr, inverse_sim):
    cfg = PolicyConfig("A", params=params, gpr=zero_gpr,
                       inverse_a=inverse_sim)
    target = np.array([-0.025, 0.004, 0.208])
    cmd, e_gp, x_st = policy_a_command(cfg, np.array([-0.021, 0.0, 0.213]),
                                       target)
    assert isinstance(cmd, TendonCommand)
    cmd.validate(params)
    assert np.array_equal(e_gp, np.zeros(3))
    assert np.array_equal(x_st, target)


# -- goal reaching -------------------------------------------------------------

def test_run_goal_mode_guards(cfg_a, params, twin_config, gpr100, inverse_sim,
                              inverse_b):
    plant = make_twin_plant(params, twin_config)
    with pytest.raises(ValueError):
        run_goal(cfg_a, np.zeros(3), plant, mode="drift")
    cfg_c = PolicyConfig("C", params=params, gpr=gpr100,
                         inverse_a=inverse_sim, inverse_b=inverse_b)
    with pytest.raises(ValueError):
        run_goal(cfg_c, np.zeros(3), plant, mode="open-loop")


def test_rest_goal_settles_to_noise_floor(cfg_a, params, twin_config):
    plant = make_twin_plant(params, twin_config)
    plant.reset()
    rest_tip = plant.tip_true.copy()
    log = run_goal(cfg_a, rest_tip, plant, mode="closed-loop")
    assert log.converged
    assert log.final_error <= 3.0 * twin_config.sensor_noise_sigma


def test_identity_twin_goal_suite(identity_a_stats):
    assert identity_a_stats["n_fail"] == 0
    assert len(identity_a_stats["errors"]) == 50
    assert identity_a_stats["mean"] <= 0.005


def test_commands_respect_limits(identity_a_stats, params):
    rest = params.total_length
    lo, hi = params.min_tendon_length(), params.max_tendon_length()
    for log in identity_a_stats["logs"]:
        cmds = log.commands
        assert np.all(cmds >= lo - 1e-12) and np.all(cmds <= hi + 1e-12)
        # antagonist pairs stay on the constant-sum manifold
        assert np.max(np.abs(cmds[:, 0] + cmds[:, 2] - 2 * rest)) <= 1e-12
        assert np.max(np.abs(cmds[:, 1] + cmds[:, 3] - 2 * rest)) <= 1e-12
        prev = np.full(4, rest)
        for row in cmds:
            assert np.max(np.abs(row - prev)) <= MAX_STEP_M + 1e-12
            prev = row


def test_goal_eval_deterministic(cfg_a, params, twin_config, targets50):
    s1 = goal_reaching_eval(cfg_a, make_twin_plant(params, twin_config),
                            targets=targets50[:3], seed=4)
    s2 = goal_reaching_eval(cfg_a, make_twin_plant(params, twin_config),
                            targets=targets50[:3], seed=4)
    assert np.array_equal(s1["errors"], s2["errors"])
    for l1, l2 in zip(s1["logs"], s2["logs"]):
        assert np.array_equal(l1.commands, l2.commands)
        assert np.array_equal(l1.tips, l2.tips)


def test_goal_eval_requires_targets(cfg_a, params, twin_config):
    with pytest.raises(ValueError):
        goal_reaching_eval(cfg_a, make_twin_plant(params, twin_config))


def test_monotone_trial_timestamps(cfg_a, params, twin_config, targets50):
    plant = make_twin_plant(params, twin_config)
    log = run_goal(cfg_a, targets50[0], plant, mode="closed-loop")
    assert np.all(np.diff(log.times) > 0)
    assert log.final_error == pytest.approx(
        float(np.linalg.norm(log.tips[-1] - log.target)), abs=0)


# -- policy C branching ---------------------------------------------------------

def test_policy_c_branch_thresholds(params, gpr100, inverse_sim, inverse_b,
                                    targets50):
    cfg = PolicyConfig("C", params=params, gpr=gpr100,
                       inverse_a=inverse_sim, inverse_b=inverse_b)
    tgt = targets50[0]
    for err, expected in ((0.010, "A"), (0.020, "B")):
        state = ControllerState(cfg, tgt)
        state.observe(tgt + np.array([err, 0.0, 0.0]))
        _, branch = policy_c_step(cfg, state)
        assert branch == expected


def test_policy_c_requires_observation(params, gpr100, inverse_sim, inverse_b):
    cfg = PolicyConfig("C", params=params, gpr=gpr100,
                       inverse_a=inverse_sim, inverse_b=inverse_b)
    with pytest.raises(ValueError):
        policy_c_step(cfg, ControllerState(cfg, np.zeros(3)))


def test_zero_gap_policy_c_stays_on_a_when_close(params, zero_gpr,
                                                 inverse_sim, targets50):
    # with no gap the fallback branch may only fire during the approach,
    # while the observed error still exceeds e_c; every trial must finish
    # under policy A with the goal met
    cfg = PolicyConfig("C", params=params, gpr=zero_gpr,
                       inverse_a=inverse_sim, inverse_b=inverse_sim)
    plant = make_twin_plant(params, TwinConfig.identity())
    stats = goal_reaching_eval(cfg, plant, targets=targets50, seed=0)
    assert stats["n_fail"] == 0
    for log in stats["logs"]:
        errs = np.linalg.norm(log.tips - log.target, axis=1)
        for s in range(1, log.steps):
            if log.branches[s] == "B":
                assert errs[s - 1] > cfg.e_c
        assert log.branches[-1] == "A"
        assert log.final_error <= cfg.e_c


# -- policy B ----------------------------------------------------------------

def test_policy_b_zero_gap_matches_sim_training(sim10k, zero_gpr, inverse_sim):
    # a zero error model corrects nothing, so the retraining dataset is the
    # sim data itself and the sim-trained model scores identically on it
    corrected = generate_policy_b_dataset(sim10k, zero_gpr)
    mae_corrected = validation_mae(inverse_sim, corrected)
    mae_sim = validation_mae(inverse_sim, sim10k)
    assert mae_corrected == pytest.approx(mae_sim, rel=1e-9)


def test_policy_b_validation_gate(inverse_b, corrected10k):
    assert validation_mae(inverse_b, corrected10k) <= 0.003


def test_real_baseline_prefix(real10k):
    quick = TrainConfig(max_epochs=5, patience=4)
    model = train_real_baseline(real10k, 500, quick)
    assert model.direction == "inverse"
    with pytest.raises(ValueError):
        train_real_baseline(real10k, len(real10k) + 1, quick)


# -- evaluation grid -----------------------------------------------------------

def test_evaluation_grid_properties(eval_grid, params):
    assert eval_grid.shape == (960, 3)
    assert len(np.unique(np.round(eval_grid, 12), axis=0)) == 960
    assert np.all(np.linalg.norm(eval_grid, axis=1) <= params.total_length)


def test_evaluation_targets_drawn_from_grid(params, twin_config, eval_grid):
    targets = evaluation_targets(params, twin_config, n=50, seed=0,
                                 grid=eval_grid)
    assert targets.shape == (50, 3)
    assert len(np.unique(targets, axis=0)) == 50
    grid_set = {tuple(row) for row in eval_grid}
    assert all(tuple(t) in grid_set for t in targets)
    with pytest.raises(ValueError):
        evaluation_targets(params, twin_config, n=961, grid=eval_grid)


# -- tip load ------------------------------------------------------------------

def test_zero_load_matches_plain_eval(params, zero_gpr, inverse_sim,
                                      targets50):
    tc = TwinConfig.identity()
    cfg = PolicyConfig("A", params=params, gpr=zero_gpr,
                       inverse_a=inverse_sim)
    plain = goal_reaching_eval(cfg, make_twin_plant(params, tc),
                               targets=targets50[:3], seed=0)
    loaded = tip_load_eval(cfg, params, tc, targets50[:3], tip_mass=0.0,
                           seed=0)
    assert np.array_equal(plain["errors"], loaded["errors"])


def test_tip_load_degrades_accuracy(cfg_a, params, twin_config, targets50):
    unloaded = goal_reaching_eval(cfg_a, make_twin_plant(params, twin_config),
                                  targets=targets50[:5], seed=0)
    loaded = tip_load_eval(cfg_a, params, twin_config, targets50[:5], seed=0)
    assert loaded["mean"] > unloaded["mean"]


# -- path tracking --------------------------------------------------------------

def test_single_rest_waypoint_completes_immediately(cfg_a, params,
                                                    twin_config):
    plant = make_twin_plant(params, twin_config)
    plant.reset()
    rest_tip = plant.tip_true.copy()
    result = path_track(cfg_a, rest_tip[None, :], plant)
    assert result.completed
    assert result.completion_steps <= 3


def test_path_stall_carries_partial_result(cfg_a, params, twin_config):
    plant = make_twin_plant(params, twin_config)
    with pytest.raises(PathStalledError) as exc:
        path_track(cfg_a, np.array([[0.5, 0.5, 0.5]]), plant)
    result = exc.value.result
    assert not result.completed
    assert result.waypoints_reached == 0
    assert result.completion_steps == 50
    assert result.trajectory.shape == (50, 3)
    assert len(result.lateral_errors) == 50


def test_path_waypoints_closed_loop(params, twin_config):
    wps = path_waypoints(params, twin_config, n=33)
    assert wps.shape == (33, 3)
    np.testing.assert_allclose(wps[0], wps[-1], atol=1e-5)
    assert np.all(np.linalg.norm(wps, axis=1) <= params.total_length)


def test_path_waypoint_validation(cfg_a, params, twin_config):
    plant = make_twin_plant(params, twin_config)
    with pytest.raises(ValueError):
        path_track(cfg_a, np.zeros((3, 2)), plant)
    with pytest.raises(ValueError):
        path_track(cfg_a, np.zeros((0, 3)), plant)


# -- CSV exports ---------------------------------------------------------------

def test_trial_log_csv(tmp_path, cfg_a, params, twin_config, targets50):
    plant = make_twin_plant(params, twin_config)
    log = run_goal(cfg_a, targets50[1], plant, mode="closed-loop")
    path = tmp_path / "trial.csv"
    log.to_csv(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "L1", "L2", "L3", "L4",
                       "tip_x", "tip_y", "tip_z",
                       "tgt_x", "tgt_y", "tgt_z",
                       "stx", "sty", "stz", "egx", "egy", "egz", "branch"]
    assert len(rows) == log.steps + 1
    assert all(row[17] in ("A", "B") for row in rows[1:])


def test_sweep_csv(tmp_path):
    result = {"gpr_curve": [{"curve": "gpr", "size": 50, "mean": 0.011,
                             "std": 0.002, "n_fail": 0}],
              "real_curve": [{"curve": "real", "size": 500, "mean": 0.02,
                              "std": 0.004, "n_fail": 1}]}
    path = tmp_path / "sweep.csv"
    sweep_to_csv(result, path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["curve", "size", "mean", "std", "n_fail"]
    assert rows[1][:2] == ["gpr", "50"] and rows[2][:2] == ["real", "500"]
    assert float(rows[1][2]) == 0.011 and int(rows[2][4]) == 1
