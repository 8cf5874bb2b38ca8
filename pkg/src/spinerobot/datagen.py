"""Exploration traces, plant rollouts, and dataset plumbing.

Data comes from stepping a plant at the control rate through a continuous
command sequence and recording (command, tip, next tip) triples, mirroring
a motion-capture session.  Rollouts on the perturbed plant also carry the
nominal simulator's tip under the same commands, which is the regression
target for the error model.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.cluster.vq import kmeans2

from .params import RodParams, TendonCommand
from .rod import ShootingError
from .twin import Plant

MAX_STEP_M = 0.003


@dataclass(frozen=True)
class Sample:
    """One recorded control period: command, tip before, tip after.

    ``p_sim`` is the nominal simulator's tip under the identical command
    history (equal to ``x_next`` for data recorded on the simulator itself).
    """

    u: TendonCommand
    x: np.ndarray
    x_next: np.ndarray
    p_sim: np.ndarray
    source: str = "sim"

    def __post_init__(self):
        if self.source not in ("sim", "twin", "gpr-generated"):
            raise ValueError(f"unknown sample source {self.source!r}")
        for v in (self.x, self.x_next, self.p_sim):
            if not np.all(np.isfinite(v)):
                raise ValueError("sample positions must be finite")


@dataclass
class Dataset:
    """An ordered record of samples with a contiguous train/validation split.

    The split keeps the recording order (first ``split_ratio`` of the steps
    train, the rest validate) so recurrent models see unbroken sequences.
    """

    samples: list = field(default_factory=list)
    split_ratio: float = 0.7
    seed: int = 0
    failure_index: int | None = None

    def __post_init__(self):
        if not 0.0 < self.split_ratio < 1.0:
            raise ValueError("split_ratio must be in (0, 1)")

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, i):
        return self.samples[i]

    def split(self) -> tuple["Dataset", "Dataset"]:
        cut = int(round(self.split_ratio * len(self.samples)))
        return (replace(self, samples=self.samples[:cut]),
                replace(self, samples=self.samples[cut:]))

    # column views -----------------------------------------------------
    def commands(self) -> np.ndarray:
        return np.array([s.u.lengths for s in self.samples])

    def tips(self) -> np.ndarray:
        return np.array([s.x for s in self.samples])

    def next_tips(self) -> np.ndarray:
        return np.array([s.x_next for s in self.samples])

    def sim_tips(self) -> np.ndarray:
        return np.array([s.p_sim for s in self.samples])

    def gaps(self) -> np.ndarray:
        """Per-sample simulator-minus-plant tip error (the regression target)."""
        return self.sim_tips() - self.next_tips()

    # file format --------------------------------------------------------
    _HEADER = ["step", "L1", "L2", "L3", "L4", "x", "y", "z",
               "x_next", "y_next", "z_next", "sim_x", "sim_y", "sim_z", "source"]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self._HEADER)
            for i, s in enumerate(self.samples):
                floats = [*s.u.lengths, *s.x, *s.x_next, *s.p_sim]
                w.writerow([i] + [f"{v:.17g}" for v in floats] + [s.source])

    @classmethod
    def from_csv(cls, path: str | Path, **kw) -> "Dataset":
        samples = []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != cls._HEADER:
                raise ValueError(f"unexpected dataset header {header!r}")
            for row in reader:
                vals = [float(v) for v in row[1:14]]
                samples.append(Sample(
                    u=TendonCommand(np.array(vals[0:4]), [True] * 4),
                    x=np.array(vals[4:7]),
                    x_next=np.array(vals[7:10]),
                    p_sim=np.array(vals[10:13]),
                    source=row[14],
                ))
        return cls(samples=samples, **kw)


_AXIS_PAIRS = ((0, 2), (1, 3))  # antagonistic tendon pairs per bending axis


def random_exploration(params: RodParams, n_steps: int,
                       seed: int = 0) -> list[TendonCommand]:
    """Continuous random walk over tendon lengths, starting from rest.

    Each step actuates the two tendons of one bending axis: the agonist
    shortens while its antagonist pays out the same amount (at most 3 mm,
    clamped to the feasible range), the way an antagonistic pair moves on
    the hardware.  Opposite tendon lengths therefore always sum to twice
    the rest length, and no tendon is left trailing slack.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    rng = np.random.default_rng(seed)
    lo, hi = params.min_tendon_length(), params.max_tendon_length()
    lengths = np.full(4, params.total_length)
    out = []
    for _ in range(n_steps):
        a, b = _AXIS_PAIRS[rng.integers(2)]
        delta = rng.uniform(-MAX_STEP_M, MAX_STEP_M)
        delta = np.clip(delta, lo - lengths[a], hi - lengths[a])
        delta = np.clip(delta, lengths[b] - hi, lengths[b] - lo)
        lengths = lengths.copy()
        lengths[a] += delta
        lengths[b] -= delta
        out.append(TendonCommand(lengths, [True] * 4))
    return out


def predefined_commands(params: RodParams, n: int = 1000,
                        span: float = 0.012) -> list[TendonCommand]:
    """Serpentine lattice sweep over the two antagonistic tendon pairs.

    Lattice coordinate a displaces the first axis pair (tendon 1 shortens
    by a while tendon 3 pays out a, negative a reversing the roles) and b
    does the same for tendons 2/4, covering the bending workspace on a
    regular grid.  The serpentine ordering keeps consecutive commands
    adjacent, so a plant can sweep the set continuously.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    side = int(np.ceil(np.sqrt(n)))
    vals = np.linspace(-span, span, side) if side > 1 else np.array([span])
    rest = params.total_length
    if rest - span < params.min_tendon_length():
        raise ValueError("span exceeds the feasible shortening range")
    if rest + span > params.max_tendon_length():
        raise ValueError("span exceeds the feasible lengthening range")
    cmds = []
    for i, a in enumerate(vals):
        row = vals if i % 2 == 0 else vals[::-1]
        for b in row:
            lengths = np.array([rest - a, rest - b, rest + a, rest + b])
            cmds.append(TendonCommand(lengths, [True] * 4))
            if len(cmds) == n:
                return cmds
    return cmds


def rollout(plant: Plant, commands: list[TendonCommand], *,
            paired_sim: Plant | None = None) -> Dataset:
    """Step a plant at the control rate through a command sequence.

    Records one sample per command.  When ``paired_sim`` is given (data
    collection on the perturbed plant), it is stepped through the identical
    commands and its tip fills the ``p_sim`` column; the sample source is
    then "twin".  A convergence failure stops the rollout early and is
    reported through ``Dataset.failure_index``.
    """
    plant.reset()
    if paired_sim is not None:
        paired_sim.reset()
    source = "sim" if paired_sim is None else "twin"
    samples = []
    failure = None
    x = plant.observe()
    for i, cmd in enumerate(commands):
        try:
            plant.step(cmd)
            if paired_sim is not None:
                paired_sim.step(cmd)
        except ShootingError:
            failure = i
            break
        x_next = plant.observe()
        p_sim = paired_sim.tip_true if paired_sim is not None else x_next
        samples.append(Sample(u=cmd, x=x, x_next=x_next,
                              p_sim=np.array(p_sim), source=source))
        x = x_next
    return Dataset(samples=samples, failure_index=failure)


def sparse_subset(pool: Dataset, k: int, seed: int = 0) -> Dataset:
    """Pick k samples spread over the pool's spatial extent.

    Partitions the realized tip positions into k clusters (k-means, fixed
    seed, 50 iterations) and keeps one random member of each, so the subset
    retains the overall shape of the covered workspace.  Clusters that come
    back empty are refilled with the points farthest from the current picks,
    keeping the result at exactly k samples.
    """
    if k > len(pool):
        raise ValueError(f"k={k} exceeds pool size {len(pool)}")
    if k == len(pool):
        return replace(pool, samples=list(pool.samples))
    tips = pool.next_tips()
    rng = np.random.default_rng(seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # empty clusters are refilled below
        _, labels = kmeans2(tips, k, iter=50, minit="++", seed=rng, missing="warn")
    chosen = []
    for c in range(k):
        members = np.flatnonzero(labels == c)
        if members.size:
            chosen.append(int(rng.choice(members)))
    if len(chosen) < k:
        taken = np.zeros(len(pool), dtype=bool)
        taken[chosen] = True
        d = np.full(len(pool), np.inf)
        for idx in chosen:
            d = np.minimum(d, np.linalg.norm(tips - tips[idx], axis=1))
        while len(chosen) < k:
            far = int(np.argmax(np.where(taken, -np.inf, d)))
            chosen.append(far)
            taken[far] = True
            d = np.minimum(d, np.linalg.norm(tips - tips[far], axis=1))
    chosen.sort()
    return replace(pool, samples=[pool.samples[i] for i in chosen])


def generate_policy_b_dataset(sim_data: Dataset, gpr) -> Dataset:
    """Correct a simulator rollout into approximated plant data.

    Every recorded tip is replaced by the simulator tip minus the learned
    error at (command, simulator tip); the chain structure x_next[i] ==
    x[i+1] is preserved by shifting the corrected tips one step.
    """
    if len(sim_data) == 0:
        return replace(sim_data, samples=[])
    U = sim_data.commands()
    P = sim_data.sim_tips()
    err = gpr.predict_mean(np.hstack([U, P]))
    corrected = P - err
    samples = []
    for i, s in enumerate(sim_data.samples):
        x = s.x if i == 0 else corrected[i - 1]
        samples.append(Sample(u=s.u, x=np.array(x), x_next=corrected[i],
                              p_sim=np.array(s.p_sim), source="gpr-generated"))
    return replace(sim_data, samples=samples)
