"""Exact Gaussian process regression for the simulator-to-plant tip error.

Targets are the per-axis differences e = p_sim - p_exp observed on rollout
data, regressed on (4 tendon lengths, simulated tip) with a squared
exponential kernel and one independent GP per output axis.  Inputs are
standardized per dimension before kernel evaluation, so length scales are
reported in standardized units.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.optimize import minimize

INPUT_DIM = 7
OUTPUT_DIM = 3
_JITTER = 1e-10
_LOG_BOUNDS = (-40.0, 12.0)


@dataclass(frozen=True)
class GprHyper:
    """Kernel hyperparameters for one output axis.

    ``length_scales`` apply to standardized inputs; the variances are in
    squared meters of the (unstandardized) target.
    """

    signal_variance: float
    length_scales: np.ndarray
    noise_variance: float

    def __post_init__(self):
        object.__setattr__(self, "length_scales",
                           np.asarray(self.length_scales, dtype=float))
        if self.length_scales.shape != (INPUT_DIM,):
            raise ValueError(f"expected {INPUT_DIM} length scales")
        if (self.signal_variance <= 0 or self.noise_variance <= 0
                or not np.all(self.length_scales > 0)):
            raise ValueError("hyperparameters must be strictly positive")


def se_kernel(x: np.ndarray, x2: np.ndarray, hyper: GprHyper) -> float:
    """Squared exponential covariance between two (raw-scale) 7-vectors."""
    d = (np.asarray(x, dtype=float) - np.asarray(x2, dtype=float))
    return float(hyper.signal_variance
                 * np.exp(-0.5 * np.sum((d / hyper.length_scales) ** 2)))


def _sqdist(A: np.ndarray, B: np.ndarray, ls: np.ndarray) -> np.ndarray:
    As, Bs = A / ls, B / ls
    # ||a-b||^2 = ||a||^2 + ||b||^2 - 2 a.b, floored against round-off
    d2 = (np.sum(As**2, axis=1)[:, None] + np.sum(Bs**2, axis=1)[None, :]
          - 2.0 * (As @ Bs.T))
    return np.maximum(d2, 0.0)


def _kernel_matrix(A: np.ndarray, B: np.ndarray, hyper: GprHyper) -> np.ndarray:
    return hyper.signal_variance * np.exp(-0.5 * _sqdist(A, B, hyper.length_scales))


class GprModel:
    """Fitted per-axis GPs sharing one standardized input set.

    Instances are immutable once constructed; predictions only read the
    stored factorizations, so they are safe to share across threads.
    """

    def __init__(self, X: np.ndarray, Y: np.ndarray, hypers: list[GprHyper],
                 seed: int = 0):
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        if X.ndim != 2 or X.shape[1] != INPUT_DIM:
            raise ValueError(f"X must be N x {INPUT_DIM}")
        if Y.shape != (len(X), OUTPUT_DIM):
            raise ValueError(f"Y must be N x {OUTPUT_DIM}")
        if len(X) < 1:
            raise ValueError("need at least one training point")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise ValueError("training rows must be finite")
        if len(hypers) != OUTPUT_DIM:
            raise ValueError(f"need one hyperparameter set per output axis")
        self.X = X
        self.Y = Y
        self.hypers = list(hypers)
        self.seed = seed
        self.in_mean = X.mean(axis=0)
        std = X.std(axis=0)
        std[std < 1e-12] = 1.0
        self.in_std = std
        self._Xs = (X - self.in_mean) / self.in_std
        self._factors = []
        self._betas = []
        for axis, hyper in enumerate(self.hypers):
            K = _kernel_matrix(self._Xs, self._Xs, hyper)
            K[np.diag_indices_from(K)] += hyper.noise_variance
            try:
                factor = cho_factor(K, lower=True)
            except LinAlgError:
                K[np.diag_indices_from(K)] += _JITTER
                try:
                    factor = cho_factor(K, lower=True)
                except LinAlgError as exc:
                    raise LinAlgError(
                        f"kernel matrix for axis {axis} is not positive "
                        "definite (duplicate inputs with near-zero noise "
                        "variance?); increase noise_variance or add jitter"
                    ) from exc
            self._factors.append(factor)
            self._betas.append(cho_solve(factor, Y[:, axis]))

    def _cross(self, x: np.ndarray, hyper: GprHyper) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        if pts.shape[1] != INPUT_DIM:
            raise ValueError(f"query points must have {INPUT_DIM} features")
        pts = (pts - self.in_mean) / self.in_std
        return _kernel_matrix(self._Xs, pts, hyper), single

    def predict_mean(self, x: np.ndarray) -> np.ndarray:
        """Posterior mean error at one 7-vector or a batch of them."""
        out = None
        for axis, hyper in enumerate(self.hypers):
            k, single = self._cross(x, hyper)
            if out is None:
                out = np.empty((k.shape[1], OUTPUT_DIM))
            out[:, axis] = k.T @ self._betas[axis]
        return out[0] if single else out

    def predict_variance(self, x: np.ndarray) -> np.ndarray:
        """Posterior variance per axis, clamped at zero against round-off."""
        out = None
        for axis, hyper in enumerate(self.hypers):
            k, single = self._cross(x, hyper)
            if out is None:
                out = np.empty((k.shape[1], OUTPUT_DIM))
            v = hyper.signal_variance - np.sum(k * cho_solve(self._factors[axis], k),
                                               axis=0)
            out[:, axis] = np.maximum(v, 0.0)
        return out[0] if single else out

    # serialization ------------------------------------------------------
    def to_json(self, path: str | Path) -> None:
        doc = {
            "X": self.X.tolist(),
            "Y": self.Y.tolist(),
            "seed": self.seed,
            "hypers": [
                {"signal_variance": h.signal_variance,
                 "length_scales": h.length_scales.tolist(),
                 "noise_variance": h.noise_variance}
                for h in self.hypers
            ],
        }
        Path(path).write_text(json.dumps(doc))

    @classmethod
    def from_json(cls, path: str | Path) -> "GprModel":
        doc = json.loads(Path(path).read_text())
        hypers = [GprHyper(h["signal_variance"], h["length_scales"],
                           h["noise_variance"]) for h in doc["hypers"]]
        return cls(np.array(doc["X"]), np.array(doc["Y"]), hypers,
                   seed=doc["seed"])


def fit(X: np.ndarray, Y: np.ndarray,
        hyper: GprHyper | list[GprHyper] | None = None,
        seed: int = 0) -> GprModel:
    """Fit per-axis GPs; optimizes hyperparameters when none are given.

    A single ``GprHyper`` is shared across the three axes; a list gives
    each axis its own.
    """
    if hyper is None:
        hypers = optimize_hyper(X, Y, seed=seed)
    elif isinstance(hyper, GprHyper):
        hypers = [hyper] * OUTPUT_DIM
    else:
        hypers = list(hyper)
    return GprModel(X, Y, hypers, seed=seed)


def _heuristic_hyper(Xs: np.ndarray, y: np.ndarray) -> GprHyper:
    """Median-distance length scales with variance split 99/1 signal/noise."""
    n = len(Xs)
    idx = np.arange(min(n, 500))
    ls = np.empty(INPUT_DIM)
    for d in range(INPUT_DIM):
        diff = np.abs(Xs[idx, None, d] - Xs[None, idx, d])
        med = np.median(diff[np.triu_indices(len(idx), k=1)])
        ls[d] = med if med > 1e-6 else 1.0
    var = max(float(np.var(y)), 1e-12)
    return GprHyper(0.99 * var, ls, 0.01 * var)


def _neg_lml_and_grad(theta: np.ndarray, Xs: np.ndarray,
                      y: np.ndarray) -> tuple[float, np.ndarray]:
    """Negative log marginal likelihood and its gradient in log-hypers."""
    n = len(Xs)
    sv, ls, nv = np.exp(theta[0]), np.exp(theta[1:8]), np.exp(theta[8])
    D2 = _sqdist(Xs, Xs, ls)
    R = np.exp(-0.5 * D2)
    K = sv * R
    K[np.diag_indices_from(K)] += nv
    try:
        factor = cho_factor(K, lower=True)
    except LinAlgError:
        return np.inf, np.zeros_like(theta)
    alpha = cho_solve(factor, y)
    nll = (0.5 * float(y @ alpha) + np.log(np.diag(factor[0])).sum()
           + 0.5 * n * np.log(2.0 * np.pi))
    # d(nll)/dtheta = -1/2 (alpha^T dK alpha - tr(K^-1 dK))
    Kinv = cho_solve(factor, np.eye(n))
    W = np.outer(alpha, alpha) - Kinv
    grad = np.empty_like(theta)
    dK = sv * R
    grad[0] = -0.5 * float(np.sum(W * dK))
    for d in range(INPUT_DIM):
        diff2 = (Xs[:, None, d] - Xs[None, :, d]) ** 2 / ls[d] ** 2
        grad[1 + d] = -0.5 * float(np.sum(W * (sv * R * diff2)))
    grad[8] = -0.5 * nv * float(np.trace(W))
    return nll, grad


def optimize_hyper(X: np.ndarray, Y: np.ndarray, seed: int = 0,
                   n_starts: int = 3) -> list[GprHyper]:
    """Maximize the log marginal likelihood per axis on log-hyperparameters.

    Multi-start L-BFGS from the median-distance heuristic and seeded
    perturbations of it; if every start fails, the heuristic itself is
    returned with a warning.

    When points sit far apart relative to the fitted length scales the
    kernel is effectively diagonal and signal variance is indistinguishable
    from noise, so the optimizer drifts into a signal-heavy corner on pure
    noise (chance correlations gain about half a nat per free parameter).
    A fit must therefore beat the all-noise explanation by 9 nats (twice
    that expected gain) or the variance is attributed to noise.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if len(X) < 20:
        raise ValueError("hyperparameter optimization needs at least 20 points")
    mean, std = X.mean(axis=0), X.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)
    Xs = (X - mean) / std
    rng = np.random.default_rng(seed)
    bounds = [_LOG_BOUNDS] * 9
    out = []
    for axis in range(OUTPUT_DIM):
        y = Y[:, axis]
        h0 = _heuristic_hyper(Xs, y)
        theta0 = np.concatenate(([np.log(h0.signal_variance)],
                                 np.log(h0.length_scales),
                                 [np.log(h0.noise_variance)]))
        starts = [theta0]
        for _ in range(n_starts - 1):
            starts.append(theta0 + rng.normal(0.0, 1.0, size=9))
        best_nll, best_theta = np.inf, None
        for theta in starts:
            res = minimize(_neg_lml_and_grad, theta, args=(Xs, y),
                           jac=True, method="L-BFGS-B", bounds=bounds)
            if np.isfinite(res.fun) and res.fun < best_nll:
                best_nll, best_theta = res.fun, res.x
        if best_theta is None:
            warnings.warn(f"axis {axis}: all optimizer starts failed, "
                          "falling back to the median-distance heuristic")
            out.append(h0)
            continue
        var = max(float(np.var(y)), 1e-18)
        null = GprHyper(1e-9 * var, h0.length_scales, var)
        theta_null = np.concatenate(([np.log(null.signal_variance)],
                                     np.log(null.length_scales),
                                     [np.log(null.noise_variance)]))
        if best_nll > _neg_lml_and_grad(theta_null, Xs, y)[0] - 9.0:
            out.append(null)
        else:
            out.append(GprHyper(float(np.exp(best_theta[0])),
                                np.exp(best_theta[1:8]),
                                float(np.exp(best_theta[8]))))
    return out


def cross_validate(X: np.ndarray, Y: np.ndarray, folds: int = 10,
                   seed: int = 0) -> dict:
    """Shuffled k-fold CV refitting the posterior per fold.

    Hyperparameters are optimized once on the full set (refitting them per
    fold would change what is being validated: the model actually used
    downstream).  Returns mean absolute error per axis and pooled.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if folds < 2:
        raise ValueError("folds must be >= 2")
    if len(X) < folds:
        raise ValueError("need at least one point per fold")
    hypers = optimize_hyper(X, Y, seed=seed)
    idx = np.random.default_rng(seed).permutation(len(X))
    abs_err = np.empty_like(Y)
    for f in range(folds):
        test = idx[f::folds]
        train = np.setdiff1d(idx, test)
        model = GprModel(X[train], Y[train], hypers, seed=seed)
        abs_err[test] = np.abs(model.predict_mean(X[test]) - Y[test])
    per_axis = abs_err.mean(axis=0)
    return {"per_axis": per_axis, "aggregate": float(per_axis.mean())}
