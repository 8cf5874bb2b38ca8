"""Perturbed-physics stand-in for the real robot.

The twin runs the same Cosserat simulator with a softer modulus, a tilted
gravity vector, a more compliant spine and (optionally) a tip mass, plus
additive Gaussian noise on tip observations.  The systematic part of the
resulting sim-to-twin gap is what the error regression has to learn; the
noise makes "real" data cost something.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .config import section
from .params import RodParams, TendonCommand
from .rod import RodState, ShootingError, shoot_static, step_dynamic, warm_guess


@dataclass
class TwinConfig:
    """Perturbation knobs for the twin plant.

    All scales multiply the nominal value; the tilt rotates gravity about
    the +y axis.  Noise applies to observations only, never to internal
    state, so the plant stays deterministic modulo the observation stream.
    """

    e_scale: float = 0.85
    gravity_tilt: float = 0.05
    c_spine_scale: float = 1.3
    tip_mass: float = 0.0
    sensor_noise_sigma: float = 2.5e-4
    rng_seed: int = 0

    def __post_init__(self):
        if self.e_scale <= 0 or self.c_spine_scale <= 0:
            raise ValueError("perturbation scales must be positive")
        if self.sensor_noise_sigma < 0 or self.tip_mass < 0:
            raise ValueError("noise and tip mass must be non-negative")

    @classmethod
    def identity(cls, **kw) -> "TwinConfig":
        base = dict(e_scale=1.0, gravity_tilt=0.0, c_spine_scale=1.0,
                    tip_mass=0.0, sensor_noise_sigma=0.0)
        base.update(kw)
        return cls(**base)

    def to_dict(self) -> dict:
        return {
            "twin.e_scale": self.e_scale,
            "twin.gravity_tilt": self.gravity_tilt,
            "twin.c_spine_scale": self.c_spine_scale,
            "twin.tip_mass": self.tip_mass,
            "twin.sensor_noise_sigma": self.sensor_noise_sigma,
            "twin.rng_seed": self.rng_seed,
        }

    @classmethod
    def from_dict(cls, cfg: dict) -> "TwinConfig":
        tw = section(cfg, "twin")
        kw = {k: tw[k] for k in ("e_scale", "gravity_tilt", "c_spine_scale",
                                 "tip_mass", "sensor_noise_sigma", "rng_seed") if k in tw}
        return cls(**kw)


def perturbed_params(base: RodParams, config: TwinConfig) -> RodParams:
    """Nominal parameters with the twin's perturbations applied."""
    c, s = np.cos(config.gravity_tilt), np.sin(config.gravity_tilt)
    g = base.gravity
    tilted = np.array([c * g[0] + s * g[2], g[1], -s * g[0] + c * g[2]])
    return base.with_updates(
        youngs_modulus=base.youngs_modulus * config.e_scale,
        c_spine=base.c_spine * config.c_spine_scale,
        gravity=tilted,
    )


def _observation_noise(seed: int, step_index: int, sigma: float) -> np.ndarray:
    if sigma == 0.0:
        return np.zeros(3)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, step_index])))
    return sigma * rng.standard_normal(3)


class Plant:
    """A rod plus its evolving state, stepped at the control rate.

    Commands are executed in complementarity mode: an actuated tendon whose
    command exceeds its geometric path simply goes slack instead of failing,
    which is how a real length-controlled actuator behaves.
    """

    def __init__(self, params: RodParams, *, tip_mass: float = 0.0,
                 noise_sigma: float = 0.0, seed: int = 0):
        self.params = params
        self.tip_mass = tip_mass
        self.noise_sigma = noise_sigma
        self.seed = seed
        self.state: RodState | None = None
        self._step_index = 0
        self.reset()

    def reset(self, seed: int | None = None) -> RodState:
        """Return to the settled rest state (free sag, no actuated tendons)."""
        if seed is not None:
            self.seed = seed
        self._step_index = 0
        result = shoot_static(self.params, TendonCommand.rest(self.params),
                              tip_mass=self.tip_mass, mode="clamp")
        self.state = result.state
        return self.state

    def step(self, command: TendonCommand) -> RodState:
        self.state = step_dynamic(self.params, self.state, command,
                                  tip_mass=self.tip_mass, mode="clamp")
        self._step_index += 1
        return self.state

    @property
    def tip_true(self) -> np.ndarray:
        return self.state.tip.copy()

    def observe(self) -> np.ndarray:
        return self.state.tip + _observation_noise(self.seed, self._step_index, self.noise_sigma)

    def effective_lengths(self, command: TendonCommand) -> np.ndarray:
        """Tendon lengths realized by the last step.

        Taut actuated tendons hold the commanded value; slack or free
        tendons follow their geometric path length.
        """
        eff = self.state.path_lengths.copy()
        taut = command.actuated_mask & (self.state.tau > 1e-9)
        eff[taut] = command.lengths[taut]
        return eff


def make_sim_plant(params: RodParams) -> Plant:
    return Plant(params)


def make_twin_plant(params: RodParams, config: TwinConfig) -> Plant:
    return Plant(perturbed_params(params, config), tip_mass=config.tip_mass,
                 noise_sigma=config.sensor_noise_sigma, seed=config.rng_seed)


def twin_observe(config: TwinConfig, command: TendonCommand, state: RodState,
                 params: RodParams | None = None) -> tuple[np.ndarray, RodState]:
    """Step the perturbed simulator one control period, return noisy tip.

    Functional form of ``Plant.step`` + ``Plant.observe``: deterministic
    given the config seed and the state's time stamp (the noise stream is
    indexed by step number).
    """
    base = params if params is not None else RodParams()
    twin = perturbed_params(base, config)
    new_state = step_dynamic(twin, state, command, tip_mass=config.tip_mass, mode="clamp")
    step_index = int(round(new_state.t / twin.dt))
    tip = new_state.tip + _observation_noise(config.rng_seed, step_index,
                                             config.sensor_noise_sigma)
    return tip, new_state


def _settled_tip(params: RodParams, cmd: TendonCommand, tip_mass: float,
                 guess: np.ndarray | None) -> tuple[np.ndarray, np.ndarray]:
    try:
        if guess is not None:
            result = shoot_static(params, cmd, tip_mass=tip_mass, mode="clamp",
                                  guess=guess)
        else:
            raise ShootingError("cold start")
    except ShootingError:
        result = shoot_static(params, cmd, tip_mass=tip_mass, mode="clamp")
    return result.state.tip, warm_guess(result, cmd)


def workspace_gap_report(config: TwinConfig, commands: list[TendonCommand],
                         params: RodParams | None = None) -> dict:
    """Per-axis statistics of |p_sim - p_twin| over settled workspace points.

    Each command is solved to static equilibrium on the nominal and on the
    perturbed plant (a workspace comparison, deliberately free of transient
    effects); the twin side carries its usual observation noise.  Requires
    at least 100 commands for meaningful statistics.
    """
    if len(commands) < 100:
        raise ValueError("need at least 100 commands for a gap report")
    base = params if params is not None else RodParams()
    twin = perturbed_params(base, config)
    g_sim = g_twin = None
    prev = None
    gaps = np.empty((len(commands), 3))
    for i, cmd in enumerate(commands):
        # warm-start only along genuinely continuous sequences
        if prev is not None and (
                not np.array_equal(cmd.actuated_mask, prev.actuated_mask)
                or np.max(np.abs(cmd.lengths - prev.lengths)) > 0.005):
            g_sim = g_twin = None
        prev = cmd
        tip_sim, g_sim = _settled_tip(base, cmd, 0.0, g_sim)
        tip_twin, g_twin = _settled_tip(twin, cmd, config.tip_mass, g_twin)
        noise = _observation_noise(config.rng_seed, i, config.sensor_noise_sigma)
        gaps[i] = np.abs(tip_sim - (tip_twin + noise))
    return {
        "mean": gaps.mean(axis=0),
        "max": gaps.max(axis=0),
        "rms": np.sqrt((gaps ** 2).mean(axis=0)),
        "n": len(commands),
    }
