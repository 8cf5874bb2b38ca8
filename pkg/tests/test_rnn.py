"""Recurrent tip-motion models: exact wiring, training, and quality gates."""

import numpy as np
import pytest

from spinerobot.datagen import Dataset, Sample
from spinerobot.params import TendonCommand
from spinerobot.rnn import (HIDDEN_DIM, RnnModel, TrainConfig,
                            TrainingDivergedError, gradient_check, train,
                            validation_mae)


def _synthetic_dataset(n: int = 200, seed: int = 3, constant_step: bool = False,
                       **dataset_kw) -> Dataset:
    """A fake motion-capture record for unit-scale training tests.

    The default variant drives an antagonist-pair lattice walk with a fixed
    linear command-to-step map, so both model directions are learnable; the
    constant variant repeats one displacement regardless of the command.
    """
    rng = np.random.default_rng(seed)
    if constant_step:
        tips = np.array([0.0, 0.0, 0.2]) + rng.uniform(-0.01, 0.01, (n, 3))
        cmds = 0.22 + rng.uniform(-0.01, 0.01, (n, 4))
        steps = np.tile([0.001, -0.002, 0.0005], (n, 1))
    else:
        ab = rng.uniform(-0.01, 0.01, (n, 2))
        cmds = 0.22 + np.column_stack([ab[:, 0], ab[:, 1], -ab[:, 0], -ab[:, 1]])
        steps = np.column_stack([0.3 * ab[:, 0], 0.3 * ab[:, 1],
                                 0.05 * (ab[:, 0] + ab[:, 1])])
        tips = (np.array([0.0, 0.0, 0.2])
                + np.vstack([np.zeros(3), np.cumsum(steps[:-1], axis=0)]))
    samples = [Sample(u=TendonCommand(cmds[i], [True] * 4), x=tips[i],
                      x_next=tips[i] + steps[i], p_sim=tips[i] + steps[i])
               for i in range(n)]
    return Dataset(samples=samples, **dataset_kw)


def _manual_model(direction: str, rng: np.random.Generator | None = None,
                  **overrides) -> RnnModel:
    """A model with explicit weights so outputs can be computed by hand."""
    din, dout = (7, 3) if direction == "forward" else (6, 4)
    fill = (lambda s: rng.uniform(-0.3, 0.3, s)) if rng is not None else np.zeros
    kw = dict(direction=direction,
              w_ih=fill((HIDDEN_DIM, din)), w_hh=fill((HIDDEN_DIM, HIDDEN_DIM)),
              b_h=fill(HIDDEN_DIM), w_ho=fill((dout, HIDDEN_DIM)),
              b_o=fill(dout),
              in_mean=np.zeros(din), in_std=np.ones(din),
              out_mean=np.zeros(dout), out_std=np.ones(dout))
    kw.update(overrides)
    return RnnModel(**kw)


# -- configuration and construction guards --------------------------------

def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(max_epochs=50, patience=50)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        TrainConfig(lr_decay=0.0)
    with pytest.raises(ValueError):
        TrainConfig(lr_decay=1.0001)
    with pytest.raises(ValueError):
        TrainConfig(trunc_len=0)
    with pytest.raises(ValueError):
        TrainConfig(n_streams=0)
    TrainConfig(lr_decay=1.0)  # boundary value is allowed


def test_model_construction_guards():
    with pytest.raises(ValueError):
        _manual_model("sideways")
    with pytest.raises(ValueError):
        _manual_model("forward", w_ih=np.zeros((HIDDEN_DIM, 6)))
    with pytest.raises(ValueError):
        _manual_model("inverse", w_ho=np.zeros((3, HIDDEN_DIM)))
    with pytest.raises(ValueError):
        _manual_model("forward", in_std=np.zeros(7))
    with pytest.raises(ValueError):
        _manual_model("forward", b_o=np.array([np.nan, 0.0, 0.0]))


def test_train_input_validation():
    ds = _synthetic_dataset(n=200)
    with pytest.raises(ValueError):
        train(ds, "sideways")
    with pytest.raises(ValueError):
        train(_synthetic_dataset(n=50), "forward")


# -- predict wiring, verified against hand-computed values ----------------

def test_forward_predict_adds_current_tip():
    # all-zero weights reduce the readout to out_mean; the forward map must
    # then return exactly out_mean + current tip
    m = _manual_model("forward", out_mean=np.array([0.01, 0.02, 0.03]))
    x = np.array([0.22, 0.22, 0.22, 0.22, 0.005, -0.004, 0.21])
    y, h = m.predict(x, m.init_hidden())
    assert np.array_equal(y, np.array([0.01, 0.02, 0.03]) + x[4:7])
    assert np.array_equal(h, np.zeros(HIDDEN_DIM))


def test_predict_bias_path_hand_computed():
    rng = np.random.default_rng(11)
    for direction in ("forward", "inverse"):
        m = _manual_model(direction, rng=rng,
                          in_mean=rng.uniform(-0.1, 0.1, 7 if direction == "forward" else 6),
                          out_mean=rng.uniform(-0.1, 0.1, 3 if direction == "forward" else 4),
                          out_std=rng.uniform(0.5, 2.0, 3 if direction == "forward" else 4))
        # feeding exactly in_mean zeroes the normalized input, so the cell
        # reduces to tanh(b_h) and the full output is hand-computable
        x = m.in_mean.copy()
        if direction == "inverse":
            # re-expression maps (tip, next) to (tip, next - tip); pick a
            # raw input whose re-expressed form equals in_mean
            x = np.concatenate([m.in_mean[0:3], m.in_mean[0:3] + m.in_mean[3:6]])
        y, h = m.predict(x, m.init_hidden())
        h_hand = np.tanh(m.b_h)
        y_hand = (h_hand @ m.w_ho.T + m.b_o) * m.out_std + m.out_mean
        if direction == "forward":
            y_hand = y_hand + x[4:7]
        np.testing.assert_allclose(h, h_hand, rtol=0, atol=1e-15)
        np.testing.assert_allclose(y, y_hand, rtol=0, atol=1e-15)


def test_inverse_conditions_on_tip_displacement():
    # weights reading only the re-expressed displacement slots must make the
    # prediction invariant to rigid translation of (tip, next tip)
    rng = np.random.default_rng(4)
    w_ih = np.zeros((HIDDEN_DIM, 6))
    w_ih[:, 3:6] = rng.uniform(-1.0, 1.0, (HIDDEN_DIM, 3))
    m = _manual_model("inverse", w_ih=w_ih,
                      w_ho=rng.uniform(-0.5, 0.5, (4, HIDDEN_DIM)))
    d = np.array([0.002, -0.001, 0.0005])
    tip_a = np.array([0.0, 0.0, 0.20])
    tip_b = np.array([0.01, -0.02, 0.21])
    y_a, _ = m.predict(np.concatenate([tip_a, tip_a + d]), m.init_hidden())
    y_b, _ = m.predict(np.concatenate([tip_b, tip_b + d]), m.init_hidden())
    np.testing.assert_allclose(y_a, y_b, rtol=0, atol=1e-15)


def test_predict_is_pure():
    rng = np.random.default_rng(9)
    m = _manual_model("inverse", rng=rng)
    x = rng.uniform(-0.01, 0.01, 6)
    x_orig = x.copy()
    h0 = rng.uniform(-0.5, 0.5, HIDDEN_DIM)
    h0_orig = h0.copy()
    y1, h1 = m.predict(x, h0)
    y2, h2 = m.predict(x, h0)
    assert np.array_equal(y1, y2) and np.array_equal(h1, h2)
    assert np.array_equal(x, x_orig) and np.array_equal(h0, h0_orig)


def test_predict_rejects_wrong_input_dim():
    m = _manual_model("forward")
    with pytest.raises(ValueError):
        m.predict(np.zeros(6), m.init_hidden())


def test_batched_predict_matches_per_row():
    rng = np.random.default_rng(21)
    m = _manual_model("forward", rng=rng)
    X = rng.uniform(-0.02, 0.02, (5, 7))
    H = rng.uniform(-0.5, 0.5, (5, HIDDEN_DIM))
    Yb, Hb = m.predict(X, H)
    assert Yb.shape == (5, 3) and Hb.shape == (5, HIDDEN_DIM)
    for i in range(5):
        y, h = m.predict(X[i], H[i])
        np.testing.assert_allclose(Yb[i], y, rtol=0, atol=1e-15)
        np.testing.assert_allclose(Hb[i], h, rtol=0, atol=1e-15)


def test_predict_sequence_threads_hidden():
    rng = np.random.default_rng(13)
    m = _manual_model("inverse", rng=rng)
    xs = rng.uniform(-0.01, 0.01, (8, 6))
    seq = m.predict_sequence(xs)
    h = m.init_hidden()
    for t in range(8):
        y, h = m.predict(xs[t], h)
        np.testing.assert_allclose(seq[t], y, rtol=0, atol=1e-15)


def test_output_perturbation_bounded_by_weight_norms():
    # tanh is 1-Lipschitz, so |dy| <= max(out_std) * s(w_ho) * s(w_ih)
    # * s(M) / min(in_std) * |dx| with M the input re-expression; violating
    # this bound would mean the normalization wiring is broken
    rng = np.random.default_rng(17)
    m = _manual_model("inverse", rng=rng,
                      in_std=rng.uniform(0.5, 2.0, 6),
                      out_std=rng.uniform(0.5, 2.0, 4))
    M = np.block([[np.eye(3), np.zeros((3, 3))], [-np.eye(3), np.eye(3)]])
    lip = (m.out_std.max() * np.linalg.norm(m.w_ho, 2)
           * np.linalg.norm(m.w_ih, 2) * np.linalg.norm(M, 2) / m.in_std.min())
    h = rng.uniform(-0.5, 0.5, HIDDEN_DIM)
    for _ in range(50):
        x = rng.uniform(-0.05, 0.05, 6)
        dx = rng.uniform(-1e-3, 1e-3, 6)
        y0, _ = m.predict(x, h)
        y1, _ = m.predict(x + dx, h)
        assert np.linalg.norm(y1 - y0) <= lip * np.linalg.norm(dx) + 1e-15


# -- training behaviour ----------------------------------------------------

def test_learns_constant_step_quickly():
    ds = _synthetic_dataset(constant_step=True)
    cfg = TrainConfig(max_epochs=300, patience=299, learning_rate=0.02,
                      trunc_len=16, n_streams=1, seed=0)
    model, history = train(ds, "forward", cfg)
    assert len(history) <= 300
    assert validation_mae(model, ds) <= 1e-3


def test_training_reduces_validation_error():
    ds = _synthetic_dataset()
    cfg = TrainConfig(max_epochs=60, patience=59, learning_rate=0.01,
                      trunc_len=16, n_streams=1, seed=1)
    model, history = train(ds, "inverse", cfg)
    assert min(h["val_mae"] for h in history) < 0.5 * history[0]["val_mae"]
    assert all(np.isfinite(h["train_mse"]) for h in history)


def test_returned_weights_are_validation_best():
    # with one stream and no per-pair reset the training-time validation
    # metric coincides with the deployment metric, so the returned model
    # must reproduce the best score in the history exactly
    ds = _synthetic_dataset()
    cfg = TrainConfig(max_epochs=40, patience=39, learning_rate=0.01,
                      trunc_len=16, n_streams=1, seed=1)
    model, history = train(ds, "inverse", cfg)
    best = min(h["val_mae"] for h in history)
    assert validation_mae(model, ds) == pytest.approx(best, abs=1e-12)


def test_training_is_deterministic():
    ds = _synthetic_dataset()
    cfg = TrainConfig(max_epochs=15, patience=10, learning_rate=0.01, seed=5)
    m_a, h_a = train(ds, "inverse", cfg)
    m_b, h_b = train(ds, "inverse", cfg)
    for w in ("w_ih", "w_hh", "b_h", "w_ho", "b_o", "in_mean", "in_std",
              "out_mean", "out_std"):
        assert np.array_equal(getattr(m_a, w), getattr(m_b, w))
    assert h_a == h_b
    m_c, _ = train(ds, "inverse", TrainConfig(max_epochs=15, patience=10,
                                              learning_rate=0.01, seed=6))
    assert not np.array_equal(m_a.w_ih, m_c.w_ih)


def test_divergence_reported_with_history():
    # a step size past the overflow threshold blows the readout weights up
    # within one window; the error must carry the history gathered so far
    ds = _synthetic_dataset()
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(TrainingDivergedError) as exc:
            train(ds, "inverse", TrainConfig(learning_rate=1e155,
                                             max_epochs=20, patience=10,
                                             seed=0))
    assert isinstance(exc.value.history, list)


def test_normalization_comes_from_train_split_only():
    ds = _synthetic_dataset()
    cfg = TrainConfig(max_epochs=3, patience=2, learning_rate=0.01, seed=0)
    model, _ = train(ds, "forward", cfg)
    train_ds, _ = ds.split()
    X = np.hstack([train_ds.commands(), train_ds.tips()])
    Y = train_ds.next_tips() - train_ds.tips()
    np.testing.assert_allclose(model.in_mean, X.mean(axis=0), atol=1e-15)
    np.testing.assert_allclose(model.in_std, X.std(axis=0), atol=1e-15)
    np.testing.assert_allclose(model.out_mean, Y.mean(axis=0), atol=1e-15)


# -- analytic gradients ----------------------------------------------------

def test_gradients_match_finite_differences():
    ds = _synthetic_dataset()
    cfg = TrainConfig(max_epochs=10, patience=5, learning_rate=0.01, seed=1)
    trained, _ = train(ds, "inverse", cfg)
    assert gradient_check(trained, ds, n_samples=16) <= 1e-4
    rng = np.random.default_rng(8)
    fresh = _manual_model("inverse", rng=rng)
    assert gradient_check(fresh, ds, n_samples=16) <= 1e-4


def test_gradient_check_needs_samples():
    with pytest.raises(ValueError):
        gradient_check(_manual_model("inverse"), _synthetic_dataset(n=5))


# -- serialization ---------------------------------------------------------

def test_json_round_trip(tmp_path):
    rng = np.random.default_rng(30)
    m = _manual_model("inverse", rng=rng,
                      in_mean=rng.uniform(-0.1, 0.1, 6),
                      in_std=rng.uniform(0.5, 2.0, 6),
                      out_mean=rng.uniform(-0.1, 0.1, 4),
                      out_std=rng.uniform(0.5, 2.0, 4))
    path = tmp_path / "model.json"
    m.to_json(path)
    back = RnnModel.from_json(path)
    assert back.direction == m.direction and back.seed == m.seed
    for w in ("w_ih", "w_hh", "b_h", "w_ho", "b_o", "in_mean", "in_std",
              "out_mean", "out_std"):
        np.testing.assert_allclose(getattr(back, w), getattr(m, w),
                                   rtol=0, atol=0)
    x = rng.uniform(-0.01, 0.01, 6)
    y0, _ = m.predict(x, m.init_hidden())
    y1, _ = back.predict(x, back.init_hidden())
    assert np.array_equal(y0, y1)


# -- validation metric ------------------------------------------------------

def test_validation_mae_requires_validation_samples():
    ds = _synthetic_dataset(n=10, split_ratio=0.99)
    assert len(ds.split()[1]) == 0
    with pytest.raises(ValueError):
        validation_mae(_manual_model("inverse"), ds)


def test_validation_mae_zero_for_exact_model():
    # a zero-weight forward model with out_mean equal to the constant step
    # reproduces every next tip exactly
    ds = _synthetic_dataset(constant_step=True)
    m = _manual_model("forward", out_mean=np.array([0.001, -0.002, 0.0005]))
    assert validation_mae(m, ds) <= 1e-15


# -- deployed model quality -------------------------------------------------

def test_deployed_nets_meet_quality_gate(inverse_sim, forward_sim, sim10k):
    assert validation_mae(inverse_sim, sim10k) <= 0.003
    assert validation_mae(forward_sim, sim10k) <= 0.003


def test_deployed_inverse_round_trip(inverse_sim, forward_sim, sim10k):
    # inverse command for an observed transition, replayed through the
    # forward model, should land closer to the requested next tip than
    # standing still would
    _, val = sim10k.split()
    tips, nexts = val.tips(), val.next_tips()
    h_inv = inverse_sim.init_hidden()
    h_fwd = forward_sim.init_hidden()
    errs = []
    for i in range(200):
        u, h_inv = inverse_sim.predict(
            np.concatenate([tips[i], nexts[i]]), h_inv)
        y, h_fwd = forward_sim.predict(
            np.concatenate([u, tips[i]]), h_fwd)
        errs.append(np.linalg.norm(y - nexts[i]))
    baseline = np.linalg.norm(nexts[:200] - tips[:200], axis=1).mean()
    assert np.mean(errs) <= 0.75 * baseline
    assert np.mean(errs) <= 0.005
