"""Physical and numerical parameters of the tendon-driven rod.

The robot is a single elastic spine of total length ``total_length`` carrying
``n_sections`` compressible sections, actuated by four tendons routed through
disks at fixed offsets from the backbone.  Tendon *lengths* are the control
input; tendon tensions are solved for.  All quantities are SI.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .config import append_config, dump_config, load_config, section

# Feasible tendon-length box, as a fraction of the straight rest length.
LENGTH_MARGIN = 0.15

# Tendon routing radius used by the default offsets.
_TENDON_RADIUS = 0.015


def _default_offsets() -> np.ndarray:
    r = _TENDON_RADIUS
    return np.array(
        [[r, 0.0, 0.0], [0.0, r, 0.0], [-r, 0.0, 0.0], [0.0, -r, 0.0]]
    )


@dataclass
class RodParams:
    """Geometry, material and discretization of the rod.

    ``shear_modulus`` is always recomputed from ``youngs_modulus`` and
    ``poissons_ratio`` so that calibration of E propagates consistently.
    The equivalent circular cross section (radius ~1.6 mm) reproduces the
    overall bending stiffness of the spine-and-disks assembly; disk
    thickness is folded into the section spacing so the whole arclength
    ``total_length`` is elastic.
    """

    total_length: float = 0.22
    n_sections: int = 11
    section_length: float = 0.01
    nodes_per_section: int = 24
    youngs_modulus: float = 2.33e9
    poissons_ratio: float = 0.3897
    cross_section_area: float = 8.042e-6
    second_moment_x: float = 5.147e-12
    second_moment_y: float = 5.147e-12
    polar_moment: float = 1.0294e-11
    density: float = 1200.0
    gravity: np.ndarray = field(default_factory=lambda: np.array([-9.81, 0.0, 0.0]))
    tendon_offsets: np.ndarray = field(default_factory=_default_offsets)
    c_spine: float = 2.0e-4
    saturation_force: float = 20.0
    b_se: np.ndarray = field(default_factory=lambda: np.array([0.1, 0.1, 0.1]))
    b_bt: np.ndarray = field(default_factory=lambda: np.array([5e-5, 5e-5, 5e-5]))
    dt: float = 0.2
    compression_mode: str = "per-section"

    def __post_init__(self):
        self.gravity = np.asarray(self.gravity, dtype=float)
        self.tendon_offsets = np.asarray(self.tendon_offsets, dtype=float).reshape(4, 3)
        self.b_se = np.asarray(self.b_se, dtype=float)
        self.b_bt = np.asarray(self.b_bt, dtype=float)
        self.validate()

    # -- derived quantities -------------------------------------------------

    @property
    def shear_modulus(self) -> float:
        return self.youngs_modulus / (2.0 * (1.0 + self.poissons_ratio))

    @property
    def n_nodes(self) -> int:
        return self.n_sections * self.nodes_per_section + 1

    @property
    def ds0(self) -> float:
        """Uncompressed grid step (section span / nodes per section)."""
        return self.total_length / (self.n_sections * self.nodes_per_section)

    @property
    def kse_diag(self) -> np.ndarray:
        """Shear/extension stiffness diagonal [GA, GA, EA]."""
        G, E, A = self.shear_modulus, self.youngs_modulus, self.cross_section_area
        return np.array([G * A, G * A, E * A])

    @property
    def kbt_diag(self) -> np.ndarray:
        """Bending/torsion stiffness diagonal [EIx, EIy, GJ]."""
        E, G = self.youngs_modulus, self.shear_modulus
        return np.array([E * self.second_moment_x, E * self.second_moment_y, G * self.polar_moment])

    @property
    def rho_j_diag(self) -> np.ndarray:
        rho = self.density
        return rho * np.array([self.second_moment_x, self.second_moment_y, self.polar_moment])

    def min_tendon_length(self) -> float:
        return (1.0 - LENGTH_MARGIN) * self.total_length

    def max_tendon_length(self) -> float:
        return (1.0 + LENGTH_MARGIN) * self.total_length

    # -- validation ---------------------------------------------------------

    def validate(self) -> None:
        if self.total_length <= 0 or self.n_sections < 1 or self.nodes_per_section < 2:
            raise ValueError("rod geometry must be positive")
        allowance = self.total_length - self.n_sections * self.section_length
        if allowance < 0:
            raise ValueError(
                f"sections ({self.n_sections} x {self.section_length}) exceed total length {self.total_length}"
            )
        if self.youngs_modulus <= 0 or self.cross_section_area <= 0:
            raise ValueError("stiffness parameters must be positive")
        if min(self.second_moment_x, self.second_moment_y, self.polar_moment) <= 0:
            raise ValueError("second moments must be positive")
        if not -1.0 < self.poissons_ratio < 0.5:
            raise ValueError("poissons_ratio out of range")
        if self.c_spine < 0 or self.saturation_force <= 0:
            raise ValueError("compression law parameters out of range")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.compression_mode not in ("per-section", "per-point"):
            raise ValueError(f"unknown compression_mode {self.compression_mode!r}")

    # -- config file io -----------------------------------------------------

    _SCALARS = (
        "total_length", "n_sections", "section_length", "nodes_per_section",
        "youngs_modulus", "poissons_ratio", "cross_section_area",
        "second_moment_x", "second_moment_y", "polar_moment", "density",
        "c_spine", "saturation_force", "dt", "compression_mode",
    )

    def to_dict(self) -> dict:
        out = {f"rod.{name}": getattr(self, name) for name in self._SCALARS}
        out["rod.gravity"] = tuple(self.gravity)
        out["rod.b_se"] = tuple(self.b_se)
        out["rod.b_bt"] = tuple(self.b_bt)
        for i in range(4):
            out[f"rod.tendon_offset_{i}"] = tuple(self.tendon_offsets[i])
        return out

    @classmethod
    def from_dict(cls, cfg: dict) -> "RodParams":
        rod = section(cfg, "rod")
        kw = {}
        for name in cls._SCALARS:
            if name in rod:
                kw[name] = rod[name]
        for name in ("gravity", "b_se", "b_bt"):
            if name in rod:
                kw[name] = np.asarray(rod[name], dtype=float)
        offs = [rod.get(f"tendon_offset_{i}") for i in range(4)]
        if all(o is not None for o in offs):
            kw["tendon_offsets"] = np.asarray(offs, dtype=float)
        return cls(**kw)

    def save(self, path: str | Path, header: str | None = None) -> None:
        dump_config(self.to_dict(), path, header=header or "rod parameters (SI units)")

    @classmethod
    def load(cls, path: str | Path) -> "RodParams":
        return cls.from_dict(load_config(path))

    def with_updates(self, **kw) -> "RodParams":
        return replace(self, **kw)


def append_calibrated_modulus(path: str | Path, youngs_modulus: float, rms_error: float) -> None:
    """Record a calibrated Young's modulus at the end of a config file."""
    append_config(
        {"rod.youngs_modulus": float(youngs_modulus)},
        path,
        comment=f"calibrated, rms tip error {rms_error:.6e} m",
    )


@dataclass
class TendonCommand:
    """Commanded tendon lengths plus the mask of actively driven tendons.

    Non-actuated tendons are free (zero tension); their entries in
    ``lengths`` are informational.  Actuated tendons are driven to the
    commanded length whenever that keeps them taut.
    """

    lengths: np.ndarray
    actuated_mask: np.ndarray

    def __post_init__(self):
        self.lengths = np.asarray(self.lengths, dtype=float).reshape(4)
        self.actuated_mask = np.asarray(self.actuated_mask, dtype=bool).reshape(4)

    @property
    def actuated_indices(self) -> np.ndarray:
        return np.flatnonzero(self.actuated_mask)

    def validate(self, params: RodParams) -> None:
        lo, hi = params.min_tendon_length(), params.max_tendon_length()
        if np.any(self.lengths < lo) or np.any(self.lengths > hi):
            raise ValueError(
                f"tendon lengths {self.lengths} outside feasible box [{lo:.4f}, {hi:.4f}]"
            )

    @classmethod
    def rest(cls, params: RodParams, actuated: tuple = ()) -> "TendonCommand":
        mask = np.zeros(4, dtype=bool)
        for i in actuated:
            mask[i] = True
        return cls(np.full(4, params.total_length), mask)
