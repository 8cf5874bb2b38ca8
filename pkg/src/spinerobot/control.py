"""Goal-reaching and path-tracking controllers over the learned models.

Three related policies share one 5 Hz feedback loop.  Policy A drives the
simulation-trained inverse model and corrects the sim-to-real gap through
the error model: the regressed error shifts both the commanded target and
the position feedback into the simulated workspace, and the shifted target
is refined by fixed-point iteration.  Policy B retrains the inverse model
on gap-corrected data and runs it directly in the real workspace.  Policy
C runs A but falls back to B's command wherever the position error says
the simulation is untrustworthy.  A baseline trained only on plant data
("real-baseline") closes the loop the same way as B.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .datagen import (MAX_STEP_M, Dataset, generate_policy_b_dataset,
                      predefined_commands, sparse_subset)
from .gpr import GprModel
from .gpr import fit as gpr_fit
from .params import RodParams, TendonCommand
from .rnn import RnnModel, TrainConfig, train
from .rod import ShootingError, shoot_static, warm_guess
from .twin import Plant, TwinConfig, make_twin_plant, perturbed_params

_POLICIES = ("A", "B", "C", "real-baseline")
_SETTLE_SPEED = 1e-4
_OPEN_LOOP_SETTLE_STEPS = 25
_LOCK_AGREE_TOL = 1e-4
_WAYPOINT_TOL = 0.01
_STALL_STEPS = 50


class PathStalledError(RuntimeError):
    """No waypoint progress for too long; carries the partial result."""

    def __init__(self, message: str, result: "PathResult"):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True)
class PolicyConfig:
    """Everything a policy needs to turn observations into commands.

    ``inverse_a`` is the simulation-trained model (policies A and C);
    ``inverse_b`` is a model operating directly in the real workspace: the
    gap-corrected retrain for policies B and C, or the plant-data model for
    the real-baseline.
    """

    policy: str
    params: RodParams = field(default_factory=RodParams)
    gpr: GprModel | None = None
    inverse_a: RnnModel | None = None
    inverse_b: RnnModel | None = None
    e_c: float = 0.015
    fixed_point_tol: float = 0.001
    max_fixed_point_iters: int = 20
    max_control_steps: int = 100
    control_rate: float = 5.0

    def __post_init__(self):
        if self.policy not in _POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}")
        if self.e_c <= 0 or self.fixed_point_tol <= 0:
            raise ValueError("e_c and fixed_point_tol must be positive")
        if self.max_fixed_point_iters < 1 or self.max_control_steps < 1:
            raise ValueError("iteration caps must be >= 1")
        if self.control_rate <= 0:
            raise ValueError("control_rate must be positive")
        needs_a = self.policy in ("A", "C")
        needs_b = self.policy in ("B", "C", "real-baseline")
        if needs_a and (self.gpr is None or self.inverse_a is None):
            raise ValueError(f"policy {self.policy} requires gpr and inverse_a")
        if needs_b and self.inverse_b is None:
            raise ValueError(f"policy {self.policy} requires inverse_b")
        for model, direction in ((self.inverse_a, "inverse"),
                                 (self.inverse_b, "inverse")):
            if model is not None and model.direction != direction:
                raise ValueError("policy models must be inverse-direction")


class ControllerState:
    """Mutable per-trial state: recurrent threads, travel base, iterates."""

    def __init__(self, cfg: PolicyConfig, target: np.ndarray):
        self.cfg = cfg
        self.target = np.asarray(target, dtype=float)
        self.h_a = cfg.inverse_a.init_hidden() if cfg.inverse_a else None
        self.h_b = cfg.inverse_b.init_hidden() if cfg.inverse_b else None
        self.prev_lengths = np.full(4, cfg.params.total_length)
        self.e_gp = np.zeros(3)
        self.x_s_target = self.target.copy()
        self.x_current: np.ndarray | None = None
        self.branch = "A" if cfg.policy in ("A", "C") else "B"
        self.lock_a = False
        self.switch_streak = 0

    def observe(self, x: np.ndarray) -> None:
        self.x_current = np.asarray(x, dtype=float)


def _clamp_lengths(params: RodParams, lengths: np.ndarray,
                   prev: np.ndarray | None = None) -> np.ndarray:
    """Project a raw network output onto a feasible antagonistic command.

    Every learned map is trained on commands where opposing tendons move
    antagonistically (constant pair sums), so raw outputs off that plane
    are extrapolation; the least-squares projection keeps the closed loop
    on the manifold the models know.  Pair displacements are then limited
    to the feasible range and to one actuator step from the previous
    command.
    """
    rest = params.total_length
    a = 0.5 * (lengths[2] - lengths[0])
    b = 0.5 * (lengths[3] - lengths[1])
    amax = min(params.max_tendon_length() - rest,
               rest - params.min_tendon_length())
    disp = np.clip([a, b], -amax, amax)
    if prev is not None:
        prev_disp = 0.5 * np.array([prev[2] - prev[0], prev[3] - prev[1]])
        disp = np.clip(disp, prev_disp - MAX_STEP_M, prev_disp + MAX_STEP_M)
    return np.array([rest - disp[0], rest - disp[1],
                     rest + disp[0], rest + disp[1]])


def _branch_a(cfg: PolicyConfig, state: ControllerState,
              x_current: np.ndarray) -> np.ndarray:
    """One simulated-workspace iterate: command plus error-model update."""
    x_st = state.target + state.e_gp
    x_sim_current = x_current + state.e_gp
    raw, state.h_a = cfg.inverse_a.predict(
        np.concatenate([x_sim_current, x_st]), state.h_a)
    lengths = _clamp_lengths(cfg.params, raw, state.prev_lengths)
    state.e_gp = cfg.gpr.predict_mean(np.concatenate([lengths, x_st]))
    state.x_s_target = state.target + state.e_gp
    return lengths


def _branch_b(cfg: PolicyConfig, state: ControllerState,
              x_current: np.ndarray) -> np.ndarray:
    raw, state.h_b = cfg.inverse_b.predict(
        np.concatenate([x_current, state.target]), state.h_b)
    return _clamp_lengths(cfg.params, raw, state.prev_lengths)


def policy_a_command(cfg: PolicyConfig, x_current_real: np.ndarray,
                     x_real_target: np.ndarray, e_gp: np.ndarray | None = None,
                     state: ControllerState | None = None
                     ) -> tuple[TendonCommand, np.ndarray, np.ndarray]:
    """One policy-A update: command now, refined error estimate for later.

    The prior error estimate shifts both the target and the position
    feedback into the simulated workspace; the command computed there is
    then used to re-query the error model at the shifted target, which is
    the fixed-point update of the shifted target itself.
    """
    if state is None:
        state = ControllerState(cfg, x_real_target)
    if e_gp is not None:
        state.e_gp = np.asarray(e_gp, dtype=float)
        state.x_s_target = state.target + state.e_gp
    lengths = _branch_a(cfg, state, np.asarray(x_current_real, dtype=float))
    state.prev_lengths = lengths
    return (TendonCommand(lengths, [True] * 4), state.e_gp.copy(),
            state.x_s_target.copy())


def policy_c_step(cfg: PolicyConfig, state: ControllerState
                  ) -> tuple[TendonCommand, str]:
    """Hybrid step: A's command unless the position error distrusts it.

    Both branch models advance every step so either can take over with a
    warm recurrent state.  If the branch flips on three consecutive steps
    while the two commands agree to within 1e-4 m per tendon, the choice
    is locked to A: the models have converged on the same output and
    further switching is pure oscillation.
    """
    if state.x_current is None:
        raise ValueError("state has no observation; call state.observe first")
    x = state.x_current
    lengths_a = _branch_a(cfg, state, x)
    lengths_b = _branch_b(cfg, state, x)
    desired = "B" if np.linalg.norm(x - state.target) > cfg.e_c else "A"
    if state.lock_a:
        chosen = "A"
    else:
        if desired != state.branch:
            state.switch_streak += 1
        else:
            state.switch_streak = 0
        if (state.switch_streak >= 3
                and np.max(np.abs(lengths_a - lengths_b)) < _LOCK_AGREE_TOL):
            state.lock_a = True
            chosen = "A"
        else:
            chosen = desired
    state.branch = chosen
    lengths = lengths_a if chosen == "A" else lengths_b
    state.prev_lengths = lengths
    return TendonCommand(lengths, [True] * 4), chosen


@dataclass
class FixedPointResult:
    x_s_target: np.ndarray
    e_gp: np.ndarray
    iterations: int
    converged: bool
    iterates: np.ndarray


def fixed_point_targets(cfg: PolicyConfig, x_current: np.ndarray,
                        x_real_target: np.ndarray) -> FixedPointResult:
    """Iterate the shifted-target update at a frozen observation.

    Used to initialize open-loop commands: the recurrent state is held
    fixed (nothing is actually commanded during the iteration) and only
    the error estimate evolves, so the iteration is a pure map on the
    shifted target.
    """
    x_current = np.asarray(x_current, dtype=float)
    target = np.asarray(x_real_target, dtype=float)
    h0 = cfg.inverse_a.init_hidden()
    e_gp = np.zeros(3)
    x_st = target.copy()
    iterates = [x_st.copy()]
    converged = False
    iterations = cfg.max_fixed_point_iters
    for k in range(cfg.max_fixed_point_iters):
        raw, _ = cfg.inverse_a.predict(
            np.concatenate([x_current + e_gp, x_st]), h0)
        lengths = _clamp_lengths(cfg.params, raw)
        e_gp = cfg.gpr.predict_mean(np.concatenate([lengths, x_st]))
        x_new = target + e_gp
        delta = float(np.linalg.norm(x_new - x_st))
        x_st = x_new
        iterates.append(x_st.copy())
        if delta <= cfg.fixed_point_tol:
            iterations = k + 1
            converged = True
            break
    return FixedPointResult(x_st, e_gp, iterations, converged,
                            np.array(iterates))


@dataclass
class TrialLog:
    """Complete record of one goal trial at the control rate."""

    policy: str
    mode: str
    target: np.ndarray
    times: np.ndarray
    commands: np.ndarray
    tips: np.ndarray
    x_s_targets: np.ndarray
    e_gps: np.ndarray
    branches: list
    final_error: float
    steps: int
    converged: bool
    fp_iterations: int
    fp_converged: bool

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "L1", "L2", "L3", "L4",
                        "tip_x", "tip_y", "tip_z",
                        "tgt_x", "tgt_y", "tgt_z",
                        "stx", "sty", "stz", "egx", "egy", "egz", "branch"])
            for i in range(self.steps):
                row = ([f"{self.times[i]:.17g}"]
                       + [f"{v:.17g}" for v in self.commands[i]]
                       + [f"{v:.17g}" for v in self.tips[i]]
                       + [f"{v:.17g}" for v in self.target]
                       + [f"{v:.17g}" for v in self.x_s_targets[i]]
                       + [f"{v:.17g}" for v in self.e_gps[i]]
                       + [self.branches[i]])
                w.writerow(row)


class _TrialRecorder:
    def __init__(self, cfg: PolicyConfig):
        self.dt = 1.0 / cfg.control_rate
        self.times, self.commands, self.tips = [], [], []
        self.x_s_targets, self.e_gps, self.branches = [], [], []

    def add(self, step: int, cmd: TendonCommand, tip: np.ndarray,
            x_st: np.ndarray, e_gp: np.ndarray, branch: str) -> None:
        self.times.append(step * self.dt)
        self.commands.append(np.array(cmd.lengths))
        self.tips.append(np.array(tip))
        self.x_s_targets.append(np.array(x_st))
        self.e_gps.append(np.array(e_gp))
        self.branches.append(branch)

    def log(self, cfg: PolicyConfig, mode: str, target: np.ndarray,
            final_error: float, converged: bool, fp_iterations: int,
            fp_converged: bool) -> TrialLog:
        return TrialLog(policy=cfg.policy, mode=mode,
                        target=np.asarray(target, dtype=float),
                        times=np.array(self.times),
                        commands=np.array(self.commands),
                        tips=np.array(self.tips),
                        x_s_targets=np.array(self.x_s_targets),
                        e_gps=np.array(self.e_gps),
                        branches=self.branches,
                        final_error=final_error, steps=len(self.times),
                        converged=converged, fp_iterations=fp_iterations,
                        fp_converged=fp_converged)


def _emit(cfg: PolicyConfig, state: ControllerState) -> tuple[TendonCommand, str]:
    if cfg.policy == "C":
        return policy_c_step(cfg, state)
    if cfg.policy == "A":
        lengths = _branch_a(cfg, state, state.x_current)
    else:
        lengths = _branch_b(cfg, state, state.x_current)
    state.prev_lengths = lengths
    branch = "A" if cfg.policy == "A" else "B"
    return TendonCommand(lengths, [True] * 4), branch


def run_goal(cfg: PolicyConfig, target: np.ndarray, plant: Plant,
             mode: str = "closed-loop") -> TrialLog:
    """Drive the plant to one target and score the final observed error.

    Open loop computes a single command from the rest observation (policy
    A first converging its shifted target by fixed-point iteration) and
    holds it for a fixed settle horizon.  Closed loop re-commands at the
    control rate until the shifted target stops moving and the plant
    settles, or the step budget runs out; the final error is always the
    observed distance to the target.  A plant failure mid-trial truncates
    the log with converged = False.
    """
    if mode not in ("open-loop", "closed-loop"):
        raise ValueError(f"unknown mode {mode!r}")
    if cfg.policy == "C" and mode == "open-loop":
        raise ValueError("policy C needs position feedback; closed-loop only")
    target = np.asarray(target, dtype=float)
    plant.reset()
    state = ControllerState(cfg, target)
    rec = _TrialRecorder(cfg)

    if mode == "open-loop":
        x0 = plant.observe()
        state.observe(x0)
        fp_iterations, fp_converged = 1, True
        if cfg.policy == "A":
            fp = fixed_point_targets(cfg, x0, target)
            fp_iterations, fp_converged = fp.iterations, fp.converged
            state.e_gp = fp.e_gp
            state.x_s_target = fp.x_s_target
        cmd, _ = _emit(cfg, state)
        converged = fp_converged
        try:
            for s in range(_OPEN_LOOP_SETTLE_STEPS):
                plant.step(cmd)
                rec.add(s, cmd, plant.observe(), state.x_s_target,
                        state.e_gp, state.branch)
        except ShootingError:
            converged = False
        tip = rec.tips[-1] if rec.tips else x0
        return rec.log(cfg, mode, target,
                       float(np.linalg.norm(tip - target)), converged,
                       fp_iterations, fp_converged)

    fp_iterations, fp_converged = cfg.max_fixed_point_iters, False
    converged = False
    prev_true_tip = plant.state.tip.copy()
    x_st_prev = state.x_s_target.copy()
    last_obs = plant.observe()
    failed = False
    for s in range(cfg.max_control_steps):
        state.observe(last_obs)
        cmd, branch = _emit(cfg, state)
        try:
            plant.step(cmd)
        except ShootingError:
            failed = True
            break
        last_obs = plant.observe()
        rec.add(s, cmd, last_obs, state.x_s_target, state.e_gp, branch)
        delta_st = float(np.linalg.norm(state.x_s_target - x_st_prev))
        x_st_prev = state.x_s_target.copy()
        if not fp_converged and delta_st <= cfg.fixed_point_tol:
            fp_iterations, fp_converged = s + 1, True
        true_tip = plant.state.tip
        speed = (float(np.linalg.norm(true_tip - prev_true_tip))
                 * cfg.control_rate)
        prev_true_tip = true_tip.copy()
        if fp_converged and delta_st <= cfg.fixed_point_tol and s > 0 \
                and speed < _SETTLE_SPEED:
            converged = True
            break
    tip = rec.tips[-1] if rec.tips else last_obs
    return rec.log(cfg, "closed-loop", target,
                   float(np.linalg.norm(tip - target)),
                   converged and not failed, fp_iterations, fp_converged)


def _settled_tips(params: RodParams, commands: list[TendonCommand],
                  tip_mass: float = 0.0) -> np.ndarray:
    """Static tip positions along a continuous command sweep."""
    tips = np.empty((len(commands), 3))
    guess = None
    prev = None
    for i, cmd in enumerate(commands):
        if prev is not None and np.max(np.abs(cmd.lengths - prev.lengths)) > 0.005:
            guess = None
        prev = cmd
        try:
            if guess is None:
                raise ShootingError("cold start")
            result = shoot_static(params, cmd, tip_mass=tip_mass,
                                  mode="clamp", guess=guess)
        except ShootingError:
            result = shoot_static(params, cmd, tip_mass=tip_mass, mode="clamp")
        guess = warm_guess(result, cmd)
        tips[i] = result.state.tip
    return tips


def evaluation_grid(params: RodParams, config: TwinConfig,
                    side: int = 31, span: float = 0.0115
                    ) -> tuple[list[TendonCommand], np.ndarray]:
    """Equally spaced reachable positions of the plant workspace.

    A serpentine lattice of pair displacements (the rest command dropped)
    is solved to static equilibrium on the perturbed plant; the span is
    chosen slightly inside the error-model training lattice so no
    evaluation point coincides with a training point.
    """
    cmds = predefined_commands(params, n=side * side, span=span)
    rest = params.total_length
    keep = [c for c in cmds if np.max(np.abs(c.lengths - rest)) > 1e-12]
    tips = _settled_tips(perturbed_params(params, config), keep)
    return keep, tips


def evaluation_targets(params: RodParams, config: TwinConfig, n: int = 50,
                       seed: int = 0, grid: np.ndarray | None = None
                       ) -> np.ndarray:
    """Draw a goal suite from the evaluation grid without replacement."""
    if grid is None:
        _, grid = evaluation_grid(params, config)
    if n > len(grid):
        raise ValueError(f"requested {n} targets from a grid of {len(grid)}")
    idx = np.random.default_rng(seed).choice(len(grid), size=n, replace=False)
    return grid[idx]


def goal_reaching_eval(cfg: PolicyConfig, plant: Plant,
                       targets: np.ndarray | None = None, n_targets: int = 50,
                       seed: int = 0, mode: str = "closed-loop") -> dict:
    """Run one goal trial per target and aggregate the final errors.

    Plant failures are counted and excluded from the statistics; each
    trial gets its own observation-noise stream so trials are independent
    yet reproducible.
    """
    if targets is None:
        raise ValueError("pass targets from evaluation_targets; building the "
                         "grid implicitly would hide its cost")
    targets = np.asarray(targets, dtype=float)
    errors, logs = [], []
    n_fail = 0
    for i, tgt in enumerate(targets):
        plant.reset(seed=seed * 100003 + i)
        try:
            log = run_goal(cfg, tgt, plant, mode=mode)
        except ShootingError:
            n_fail += 1
            continue
        errors.append(log.final_error)
        logs.append(log)
    errors = np.array(errors)
    return {"mean": float(errors.mean()) if len(errors) else np.nan,
            "std": float(errors.std()) if len(errors) else np.nan,
            "errors": errors, "n_fail": n_fail, "logs": logs}


def policy_b_build(sim_dataset: Dataset, gpr: GprModel,
                   train_config: TrainConfig | None = None) -> RnnModel:
    """Retrain the inverse model on gap-corrected simulator data."""
    corrected = generate_policy_b_dataset(sim_dataset, gpr)
    model, _ = train(corrected, "inverse", train_config)
    return model


def train_real_baseline(real_dataset: Dataset, size: int | None = None,
                        train_config: TrainConfig | None = None) -> RnnModel:
    """Train the inverse model directly on (a prefix of) plant data.

    The prefix keeps the recording contiguous, matching how data would
    accumulate on hardware.
    """
    if size is not None:
        if size > len(real_dataset):
            raise ValueError(f"size {size} exceeds dataset {len(real_dataset)}")
        real_dataset = replace(real_dataset,
                               samples=real_dataset.samples[:size])
    model, _ = train(real_dataset, "inverse", train_config)
    return model


def data_efficiency_sweep(params: RodParams, config: TwinConfig,
                          sim_dataset: Dataset, gpr_pool: Dataset,
                          real_dataset: Dataset, inverse_sim: RnnModel,
                          targets: np.ndarray,
                          sizes_gpr: tuple = (50, 100, 200, 400, 600, 800, 1000),
                          sizes_real: tuple = (500, 1000, 2000, 3000, 5000,
                                               7500, 10000),
                          seed: int = 0,
                          train_config: TrainConfig | None = None) -> dict:
    """Goal error versus plant-data usage for policy A and the baseline.

    Curve 1 fixes the simulation-trained inverse model and fits the error
    model on spread subsets of the 1000-point pool; curve 2 retrains the
    baseline on growing prefixes of a long plant recording.  Both curves
    share the same target suite.
    """
    plant = make_twin_plant(params, config)
    gpr_curve, real_curve = [], []
    for size in sizes_gpr:
        sub = sparse_subset(gpr_pool, size, seed=seed)
        X = np.hstack([sub.commands(), sub.sim_tips()])
        model = gpr_fit(X, sub.gaps(), seed=seed)
        cfg = PolicyConfig("A", params=params, gpr=model,
                           inverse_a=inverse_sim)
        stats = goal_reaching_eval(cfg, plant, targets=targets, seed=seed)
        gpr_curve.append({"curve": "gpr", "size": size,
                          "mean": stats["mean"], "std": stats["std"],
                          "n_fail": stats["n_fail"]})
    for size in sizes_real:
        baseline = train_real_baseline(real_dataset, size, train_config)
        cfg = PolicyConfig("real-baseline", params=params, inverse_b=baseline)
        stats = goal_reaching_eval(cfg, plant, targets=targets, seed=seed)
        real_curve.append({"curve": "real", "size": size,
                           "mean": stats["mean"], "std": stats["std"],
                           "n_fail": stats["n_fail"]})
    return {"gpr_curve": gpr_curve, "real_curve": real_curve}


def sweep_to_csv(result: dict, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["curve", "size", "mean", "std", "n_fail"])
        for row in result["gpr_curve"] + result["real_curve"]:
            w.writerow([row["curve"], row["size"], f"{row['mean']:.17g}",
                        f"{row['std']:.17g}", row["n_fail"]])


def tip_load_eval(cfg: PolicyConfig, params: RodParams, config: TwinConfig,
                  targets: np.ndarray, tip_mass: float = 0.020,
                  seed: int = 0, mode: str = "closed-loop") -> dict:
    """Goal-reaching statistics with an extra mass hung from the tip.

    The models stay as trained without the load; the mismatch between the
    learned dynamics and the loaded plant is the condition under test.
    """
    loaded = Plant(perturbed_params(params, config), tip_mass=tip_mass,
                   noise_sigma=config.sensor_noise_sigma, seed=config.rng_seed)
    return goal_reaching_eval(cfg, loaded, targets=targets, seed=seed,
                              mode=mode)


@dataclass
class PathResult:
    trajectory: np.ndarray
    lateral_errors: np.ndarray
    waypoints_reached: int
    completion_steps: int
    completed: bool
    branches: list


def path_waypoints(params: RodParams, config: TwinConfig, n: int = 33,
                   radius: float = 0.008) -> np.ndarray:
    """A closed loop of reachable plant positions for tracking runs.

    Commands trace a circle in pair-displacement space; the waypoints are
    the corresponding settled plant tips, so the path is realizable by
    construction.
    """
    rest = params.total_length
    theta = np.linspace(0.0, 2.0 * np.pi, n)
    cmds = []
    for t in theta:
        a, b = radius * np.cos(t), radius * np.sin(t)
        cmds.append(TendonCommand([rest - a, rest - b, rest + a, rest + b],
                                  [True] * 4))
    return _settled_tips(perturbed_params(params, config), cmds)


def _point_segment_distance(p: np.ndarray, a: np.ndarray,
                            b: np.ndarray) -> float:
    ab = b - a
    denom = float(ab @ ab)
    t = 0.0 if denom == 0.0 else np.clip(float((p - a) @ ab) / denom, 0.0, 1.0)
    return float(np.linalg.norm(p - (a + t * ab)))


def path_track(cfg: PolicyConfig, waypoints: np.ndarray,
               plant: Plant) -> PathResult:
    """Track the linearly interpolated waypoint path in closed loop.

    The active waypoint advances once the observed tip closes to within
    0.01 m; the lateral error series is the distance to the segment
    currently tracked.  Fifty steps without any advance raises a stall
    with the partial result attached.
    """
    waypoints = np.asarray(waypoints, dtype=float)
    if waypoints.ndim != 2 or waypoints.shape[1] != 3 or len(waypoints) < 1:
        raise ValueError("waypoints must be an (n, 3) array")
    plant.reset()
    x = plant.observe()
    state = ControllerState(cfg, waypoints[0])
    trajectory, lateral, branches = [], [], []
    wp = 0
    steps = 0
    since_advance = 0
    prev_wp_pos = x.copy()
    max_steps = cfg.max_control_steps * len(waypoints)
    while wp < len(waypoints) and steps < max_steps:
        state.target = waypoints[wp]
        state.observe(x)
        cmd, branch = _emit(cfg, state)
        try:
            plant.step(cmd)
        except ShootingError:
            break
        x = plant.observe()
        steps += 1
        since_advance += 1
        trajectory.append(x.copy())
        branches.append(branch)
        lateral.append(_point_segment_distance(x, prev_wp_pos, waypoints[wp]))
        if np.linalg.norm(x - waypoints[wp]) <= _WAYPOINT_TOL:
            prev_wp_pos = waypoints[wp].copy()
            wp += 1
            since_advance = 0
        elif since_advance >= _STALL_STEPS:
            result = PathResult(np.array(trajectory), np.array(lateral),
                                wp, steps, False, branches)
            raise PathStalledError(
                f"no waypoint progress in {_STALL_STEPS} steps "
                f"(reached {wp}/{len(waypoints)})", result)
    return PathResult(np.array(trajectory), np.array(lateral), wp, steps,
                      wp >= len(waypoints), branches)
