"""Young's modulus recovery from (command, tip position) observations.

A desk-scale version of the bench identification procedure: hold tendon
lengths, optionally hang a known mass from the tip, record where the tip
settles, and pick the modulus whose static model best explains the record.
Poisson's ratio stays fixed; the shear modulus follows E through
G = E / (2 (1 + nu)) at every trial point.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .params import RodParams, TendonCommand
from .rod import ShootingError, shoot_static, warm_guess

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


class CalibrationError(RuntimeError):
    """No convergent interior minimum; carries the probed (E, rms) curve."""

    def __init__(self, message: str, curve: list[tuple[float, float]]):
        super().__init__(message)
        self.curve = curve


@dataclass
class CalibrationProblem:
    """Observations plus the modulus search interval.

    Each observation is (command, measured tip 3-vector, tip-load mass kg).
    """

    observations: list
    search_interval: tuple[float, float] = (1e8, 1e11)
    poissons_ratio: float = 0.3897

    def __post_init__(self):
        if len(self.observations) < 3:
            raise ValueError("calibration needs at least 3 observations")
        lo, hi = self.search_interval
        if not (0 < lo < hi < np.inf):
            raise ValueError("search interval must be positive and bounded")

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["L1", "L2", "L3", "L4", "tip_x", "tip_y", "tip_z", "load_kg"])
            for cmd, tip, load in self.observations:
                writer.writerow([f"{v:.17g}" for v in cmd.lengths]
                                + [f"{v:.17g}" for v in tip] + [f"{load:.17g}"])

    @classmethod
    def from_csv(cls, path: str | Path, **kw) -> "CalibrationProblem":
        obs = []
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                lengths = [float(row[f"L{i}"]) for i in range(1, 5)]
                tip = np.array([float(row["tip_x"]), float(row["tip_y"]), float(row["tip_z"])])
                load = float(row.get("load_kg") or 0.0)
                obs.append((TendonCommand(lengths, [True] * 4), tip, load))
        return cls(observations=obs, **kw)


def generate_observations(params: RodParams, *, n_obs: int = 12,
                          noise_sigma: float = 0.0, seed: int = 0) -> list:
    """Static bench protocol: a spread of bends, each under several tip loads.

    Used to manufacture observations from a chosen plant (the nominal model
    for self-consistency checks, a perturbed one for twin calibration).
    """
    rest = params.total_length
    bends = [
        np.array([0.0, 0.0, 0.0, 0.0]),
        np.array([-0.006, 0.0, 0.0, 0.0]),
        np.array([0.0, -0.006, 0.0, -0.002]),
        np.array([0.0, 0.0, -0.007, 0.0]),
        np.array([-0.003, -0.003, 0.0, 0.0]),
        np.array([-0.002, -0.002, -0.002, -0.002]),
    ]
    loads = [0.0, 0.010, 0.020]
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 911])))
    obs = []
    i = 0
    while len(obs) < n_obs:
        cmd = TendonCommand(rest + bends[i % len(bends)], [True] * 4)
        load = loads[(i // len(bends)) % len(loads)]
        result = shoot_static(params, cmd, tip_mass=load, mode="clamp")
        tip = result.state.tip + noise_sigma * rng.standard_normal(3)
        obs.append((cmd, tip, load))
        i += 1
    return obs


def _rms_tip_error(problem: CalibrationProblem, params: RodParams, E: float,
                   guesses: list) -> float:
    trial = params.with_updates(youngs_modulus=E, poissons_ratio=problem.poissons_ratio)
    sq = 0.0
    for idx, (cmd, tip, load) in enumerate(problem.observations):
        try:
            result = shoot_static(trial, cmd, tip_mass=load, mode="clamp",
                                  guess=guesses[idx])
        except ShootingError:
            try:
                result = shoot_static(trial, cmd, tip_mass=load, mode="clamp")
            except ShootingError:
                return np.inf
        guesses[idx] = warm_guess(result, cmd)
        sq += float(np.sum((result.state.tip - tip) ** 2))
    return np.sqrt(sq / len(problem.observations))


def calibrate_youngs_modulus(problem: CalibrationProblem,
                             params: RodParams) -> tuple[float, float]:
    """Golden-section search on log E, refined by one quadratic interpolation.

    Returns (E, rms tip error).  The returned E is the argmin over every
    probed point, so the minimizer certificate holds on the sampled grid by
    construction.  Raises CalibrationError when the best probe sits at the
    edge of the searched bracket (no interior minimum).
    """
    lo, hi = problem.search_interval
    a, b = np.log10(lo), np.log10(hi)
    guesses = [None] * len(problem.observations)
    probes: list[tuple[float, float]] = []

    def f(logE: float) -> float:
        rms = _rms_tip_error(problem, params, 10.0 ** logE, guesses)
        probes.append((logE, rms))
        return rms

    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    if not (np.isfinite(f1) or np.isfinite(f2)):
        raise CalibrationError("objective not computable anywhere in the interval",
                               [(10.0 ** l, r) for l, r in probes])
    while (b - a) > 4e-4:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = f(x2)

    # quadratic refinement through the three best probes
    finite = [(l, r) for l, r in probes if np.isfinite(r)]
    finite.sort(key=lambda p: p[1])
    if len(finite) >= 3:
        (l0, r0), (l1, r1), (l2, r2) = finite[:3]
        denom = (l0 - l1) * (l0 - l2) * (l1 - l2)
        if abs(denom) > 1e-18:
            aa = (l2 * (r1 - r0) + l1 * (r0 - r2) + l0 * (r2 - r1)) / denom
            bb = (l2 * l2 * (r0 - r1) + l1 * l1 * (r2 - r0) + l0 * l0 * (r1 - r2)) / denom
            if aa > 0:
                vertex = -bb / (2.0 * aa)
                if np.log10(problem.search_interval[0]) < vertex < np.log10(problem.search_interval[1]):
                    f(vertex)

    finite = [(l, r) for l, r in probes if np.isfinite(r)]
    if not finite:
        raise CalibrationError("no convergent probe in the interval",
                               [(10.0 ** l, r) for l, r in probes])
    best_log, best_rms = min(finite, key=lambda p: p[1])
    log_lo, log_hi = sorted(l for l, _ in finite)[0], sorted(l for l, _ in finite)[-1]
    span = np.log10(problem.search_interval[1]) - np.log10(problem.search_interval[0])
    if best_log <= log_lo + 1e-12 and best_log - np.log10(problem.search_interval[0]) < 0.05 * span:
        raise CalibrationError("minimum pinned at the lower bracket edge",
                               [(10.0 ** l, r) for l, r in probes])
    if best_log >= log_hi - 1e-12 and np.log10(problem.search_interval[1]) - best_log < 0.05 * span:
        raise CalibrationError("minimum pinned at the upper bracket edge",
                               [(10.0 ** l, r) for l, r in probes])
    return 10.0 ** best_log, best_rms
