"""Small recurrent network for the tip-motion maps, trained from scratch.

One tanh recurrent layer of 30 units with a linear readout covers both
directions: forward (command, tip) -> next tip and inverse (tip, next tip)
-> command.  Training is truncated backpropagation through time over
contiguous windows with Adam updates; all arithmetic is plain numpy in a
fixed order, so a seed pins the result exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datagen import Dataset

HIDDEN_DIM = 30

_DIRECTIONS = {
    "forward": (7, 3),   # (4 lengths + tip) -> next tip
    "inverse": (6, 4),   # (tip, next tip) -> 4 lengths
}


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; carries the history up to the failure."""

    def __init__(self, message: str, history: list):
        super().__init__(message)
        self.history = history


@dataclass
class TrainConfig:
    max_epochs: int = 800
    patience: int = 60
    learning_rate: float = 5e-4
    lr_decay: float = 0.998
    trunc_len: int = 32
    n_streams: int = 8
    seed: int = 0
    reset_per_pair: bool = False

    def __post_init__(self):
        if self.patience >= self.max_epochs:
            raise ValueError("patience must be smaller than max_epochs")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ValueError("lr_decay must be in (0, 1]")
        if self.trunc_len < 1 or self.n_streams < 1:
            raise ValueError("trunc_len and n_streams must be >= 1")


@dataclass
class RnnModel:
    """Weights plus the normalization frozen at training time.

    ``predict`` consumes raw (metric) inputs and returns raw outputs; the
    hidden state is threaded by the caller so a trajectory can be scored
    step by step.
    """

    direction: str
    w_ih: np.ndarray
    w_hh: np.ndarray
    b_h: np.ndarray
    w_ho: np.ndarray
    b_o: np.ndarray
    in_mean: np.ndarray
    in_std: np.ndarray
    out_mean: np.ndarray
    out_std: np.ndarray
    seed: int = 0

    def __post_init__(self):
        if self.direction not in _DIRECTIONS:
            raise ValueError(f"unknown direction {self.direction!r}")
        din, dout = _DIRECTIONS[self.direction]
        if self.w_ih.shape != (HIDDEN_DIM, din) or self.w_hh.shape != (HIDDEN_DIM, HIDDEN_DIM):
            raise ValueError("recurrent weight shapes inconsistent with direction")
        if self.w_ho.shape != (dout, HIDDEN_DIM):
            raise ValueError("readout shape inconsistent with direction")
        if np.any(self.in_std <= 0) or np.any(self.out_std <= 0):
            raise ValueError("normalization stds must be positive")
        for w in (self.w_ih, self.w_hh, self.b_h, self.w_ho, self.b_o):
            if not np.all(np.isfinite(w)):
                raise ValueError("weights must be finite")

    @property
    def input_dim(self) -> int:
        return _DIRECTIONS[self.direction][0]

    @property
    def output_dim(self) -> int:
        return _DIRECTIONS[self.direction][1]

    def init_hidden(self, batch: int | None = None) -> np.ndarray:
        return np.zeros(HIDDEN_DIM) if batch is None else np.zeros((batch, HIDDEN_DIM))

    def predict(self, x: np.ndarray, hidden: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """One recurrent cell evaluation plus linear readout, denormalized.

        The forward readout is trained on the tip displacement over one
        control period (millimeter scale, far better conditioned than the
        absolute position), so the current tip from the input is added back
        here to return the next tip position.  Inverse inputs are
        re-expressed as (tip, tip displacement) before normalization for
        the same reason.
        """
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.input_dim:
            raise ValueError(f"expected input dim {self.input_dim}, got {x.shape[-1]}")
        if self.direction == "inverse":
            x = np.concatenate([x[..., 0:3], x[..., 3:6] - x[..., 0:3]], axis=-1)
        xn = (x - self.in_mean) / self.in_std
        h = np.tanh(xn @ self.w_ih.T + hidden @ self.w_hh.T + self.b_h)
        y = h @ self.w_ho.T + self.b_o
        y = y * self.out_std + self.out_mean
        if self.direction == "forward":
            y = y + x[..., 4:7]
        return y, h

    def predict_sequence(self, xs: np.ndarray) -> np.ndarray:
        """Run a whole (T, input_dim) sequence from a zero hidden state."""
        h = self.init_hidden()
        out = np.empty((len(xs), self.output_dim))
        for t, x in enumerate(np.asarray(xs, dtype=float)):
            out[t], h = self.predict(x, h)
        return out

    # serialization ------------------------------------------------------
    def to_json(self, path: str | Path) -> None:
        doc = {
            "direction": self.direction,
            "hidden_dim": HIDDEN_DIM,
            "input_dim": self.input_dim,
            "output_dim": self.output_dim,
            "seed": self.seed,
        }
        for name in ("w_ih", "w_hh", "b_h", "w_ho", "b_o",
                     "in_mean", "in_std", "out_mean", "out_std"):
            doc[name] = getattr(self, name).tolist()
        Path(path).write_text(json.dumps(doc))

    @classmethod
    def from_json(cls, path: str | Path) -> "RnnModel":
        doc = json.loads(Path(path).read_text())
        kw = {name: np.array(doc[name], dtype=float)
              for name in ("w_ih", "w_hh", "b_h", "w_ho", "b_o",
                           "in_mean", "in_std", "out_mean", "out_std")}
        return cls(direction=doc["direction"], seed=doc["seed"], **kw)


def _dataset_arrays(dataset: Dataset, direction: str) -> tuple[np.ndarray, np.ndarray]:
    # forward targets are per-step displacements; predict() adds the tip back
    if direction == "forward":
        X = np.hstack([dataset.commands(), dataset.tips()])
        Y = dataset.next_tips() - dataset.tips()
    else:
        # the actuation signal lives in the tip displacement, so feed that
        # instead of two nearly identical absolute positions
        X = np.hstack([dataset.tips(), dataset.next_tips() - dataset.tips()])
        Y = dataset.commands()
    return X, Y


def _norm_stats(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = A.mean(axis=0)
    std = A.std(axis=0)
    std[std < 1e-12] = 1.0  # constant columns pass through unscaled
    return mean, std


def _streams(X: np.ndarray, Y: np.ndarray, n: int):
    """Split the sequence into n contiguous streams stacked on a batch axis.

    Hidden state threads within each stream; the n - 1 cut points are the
    only places recurrence is broken (besides window truncation).
    """
    T = len(X) // n
    if T == 0:
        n, T = 1, len(X)
    Xs = np.stack([X[i * T:(i + 1) * T] for i in range(n)], axis=1)
    Ys = np.stack([Y[i * T:(i + 1) * T] for i in range(n)], axis=1)
    return Xs, Ys  # (T, n, d)


class _Adam:
    def __init__(self, shapes, lr):
        self.lr = lr
        self.t = 0
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]

    def step(self, params, grads):
        if max(np.abs(g).max() for g in grads) < 1e-12:
            return  # numerically converged; the eps ratio would amplify noise
        self.t += 1
        b1, b2, eps = 0.9, 0.999, 1e-8
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + eps)


def _window_loss_and_grads(params, X, Y, h0):
    """MSE over one (T, B, d) window and its analytic gradients.

    The initial hidden state is treated as a constant (truncation
    boundary).  Returns (loss, grads, final hidden state).
    """
    w_ih, w_hh, b_h, w_ho, b_o = params
    T, B = X.shape[0], X.shape[1]
    hs = np.empty((T, B, HIDDEN_DIM))
    h = h0
    for t in range(T):
        h = np.tanh(X[t] @ w_ih.T + h @ w_hh.T + b_h)
        hs[t] = h
    yhat = hs @ w_ho.T + b_o
    diff = yhat - Y
    loss = float(np.mean(diff * diff))
    dy = (2.0 / diff.size) * diff
    g_who = np.einsum("tbo,tbh->oh", dy, hs)
    g_bo = dy.sum(axis=(0, 1))
    g_wih = np.zeros_like(w_ih)
    g_whh = np.zeros_like(w_hh)
    g_bh = np.zeros_like(b_h)
    dh_next = np.zeros((B, HIDDEN_DIM))
    for t in range(T - 1, -1, -1):
        dh = dy[t] @ w_ho + dh_next
        da = dh * (1.0 - hs[t] * hs[t])
        g_wih += da.T @ X[t]
        h_prev = hs[t - 1] if t > 0 else h0
        g_whh += da.T @ h_prev
        g_bh += da.sum(axis=0)
        dh_next = da @ w_hh
    return loss, [g_wih, g_whh, g_bh, g_who, g_bo], hs[-1]


def _init_params(din: int, dout: int, rng: np.random.Generator):
    def glorot(rows, cols):
        a = np.sqrt(6.0 / (rows + cols))
        return rng.uniform(-a, a, size=(rows, cols))

    return [glorot(HIDDEN_DIM, din), glorot(HIDDEN_DIM, HIDDEN_DIM),
            np.zeros(HIDDEN_DIM), glorot(dout, HIDDEN_DIM), np.zeros(dout)]


def _val_mae(params, Xn, Y_raw, out_mean, out_std, n_streams, reset_per_pair):
    w_ih, w_hh, b_h, w_ho, b_o = params
    Xs, _ = _streams(Xn, Xn[:, :1], n_streams)
    T, B = Xs.shape[0], Xs.shape[1]
    preds = np.empty((T, B, len(out_mean)))
    h = np.zeros((B, HIDDEN_DIM))
    for t in range(T):
        if reset_per_pair:
            h = np.zeros((B, HIDDEN_DIM))
        h = np.tanh(Xs[t] @ w_ih.T + h @ w_hh.T + b_h)
        preds[t] = h @ w_ho.T + b_o
    flat = preds.transpose(1, 0, 2).reshape(T * B, -1) * out_std + out_mean
    used = Y_raw[: T * B]
    # streams were stacked row-major: stream i covers [i*T, (i+1)*T)
    ref = np.concatenate([used[i * T:(i + 1) * T] for i in range(B)])
    return float(np.mean(np.abs(flat - ref)))


def train(dataset: Dataset, direction: str, config: TrainConfig | None = None
          ) -> tuple[RnnModel, list]:
    """Fit one direction of the tip-motion map with early stopping.

    Returns the weights with the best validation MAE (meters, denormalized)
    seen during training together with the per-epoch history.  Training is
    deterministic for a fixed config seed and dataset.
    """
    if direction not in _DIRECTIONS:
        raise ValueError(f"unknown direction {direction!r}")
    if len(dataset) < 100:
        raise ValueError("training needs at least 100 samples")
    cfg = config if config is not None else TrainConfig()
    din, dout = _DIRECTIONS[direction]

    train_ds, val_ds = dataset.split()
    Xtr, Ytr = _dataset_arrays(train_ds, direction)
    Xva, Yva = _dataset_arrays(val_ds, direction)
    in_mean, in_std = _norm_stats(Xtr)
    out_mean, out_std = _norm_stats(Ytr)
    Xtr_n = (Xtr - in_mean) / in_std
    Ytr_n = (Ytr - out_mean) / out_std
    Xva_n = (Xva - in_mean) / in_std

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([cfg.seed, 407])))
    params = _init_params(din, dout, rng)
    opt = _Adam([p.shape for p in params], cfg.learning_rate)
    Xs, Ys = _streams(Xtr_n, Ytr_n, cfg.n_streams)
    T = Xs.shape[0]

    history = []
    best_mae = np.inf
    best_params = [p.copy() for p in params]
    best_epoch = 0
    for epoch in range(cfg.max_epochs):
        h = np.zeros((Xs.shape[1], HIDDEN_DIM))
        ep_loss = 0.0
        n_win = 0
        for start in range(0, T, cfg.trunc_len):
            stop = min(start + cfg.trunc_len, T)
            if cfg.reset_per_pair:
                h = np.zeros_like(h)
            loss, grads, h = _window_loss_and_grads(
                params, Xs[start:stop], Ys[start:stop], h)
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"loss became non-finite at epoch {epoch}", history)
            opt.step(params, grads)
            ep_loss += loss
            n_win += 1
        opt.lr *= cfg.lr_decay
        mae = _val_mae(params, Xva_n, Yva, out_mean, out_std,
                       cfg.n_streams, cfg.reset_per_pair)
        history.append({"epoch": epoch, "train_mse": ep_loss / n_win, "val_mae": mae})
        if mae < best_mae:
            best_mae = mae
            best_params = [p.copy() for p in params]
            best_epoch = epoch
        elif epoch - best_epoch >= cfg.patience:
            break

    model = RnnModel(direction=direction,
                     w_ih=best_params[0], w_hh=best_params[1], b_h=best_params[2],
                     w_ho=best_params[3], b_o=best_params[4],
                     in_mean=in_mean, in_std=in_std,
                     out_mean=out_mean, out_std=out_std, seed=cfg.seed)
    return model, history


def validation_mae(model: RnnModel, dataset: Dataset) -> float:
    """MAE of step-by-step predictions over the dataset's validation tail.

    The hidden state threads through the tail in recording order, matching
    deployment, so scores are comparable across models regardless of their
    training batch layout.  This is the metric for selecting among models
    trained with different seeds.
    """
    _, val = dataset.split()
    if len(val) == 0:
        raise ValueError("dataset has an empty validation split")
    if model.direction == "forward":
        X = np.hstack([val.commands(), val.tips()])
        Y = val.next_tips()
    else:
        X = np.hstack([val.tips(), val.next_tips()])
        Y = val.commands()
    h = model.init_hidden()
    errs = np.empty(len(X))
    for i, x in enumerate(X):
        y, h = model.predict(x, h)
        errs[i] = np.abs(y - Y[i]).mean()
    return float(errs.mean())


def gradient_check(model: RnnModel, dataset: Dataset, n_samples: int = 32) -> float:
    """Max relative deviation of analytic vs central-difference gradients.

    Evaluates one training window on the model's own weights; the finite
    difference step is 1e-5 on the normalized scale.
    """
    if len(dataset) < 10:
        raise ValueError("gradient check needs at least 10 samples")
    X, Y = _dataset_arrays(dataset, model.direction)
    n = min(n_samples, len(X))
    Xn = ((X[:n] - model.in_mean) / model.in_std)[:, None, :]
    Yn = ((Y[:n] - model.out_mean) / model.out_std)[:, None, :]
    params = [model.w_ih.copy(), model.w_hh.copy(), model.b_h.copy(),
              model.w_ho.copy(), model.b_o.copy()]
    h0 = np.zeros((1, HIDDEN_DIM))
    _, grads, _ = _window_loss_and_grads(params, Xn, Yn, h0)

    step = 1e-5
    worst = 0.0
    for p, g in zip(params, grads):
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            lp, _, _ = _window_loss_and_grads(params, Xn, Yn, h0)
            flat[i] = orig - step
            lm, _, _ = _window_loss_and_grads(params, Xn, Yn, h0)
            flat[i] = orig
            num = (lp - lm) / (2.0 * step)
            # the floor keeps difference-cancellation noise on near-zero
            # components from masquerading as analytic error
            denom = max(abs(num) + abs(gflat[i]), 1e-6)
            worst = max(worst, abs(num - gflat[i]) / denom)
    return worst
