"""Cosserat rod model of a tendon-driven robot with a compressible spine.

State fields along the arclength grid: position ``p``, orientation ``R``
(body-to-world), linear strain ``v`` (rest value [0, 0, 1]), curvature/twist
``u``, linear velocity ``q`` and angular velocity ``w`` (both body frame).

Two mechanisms distinguish this rod from a classic inextensible backbone:

* the spine shortens locally in proportion to the internal force magnitude,
  saturating at a force cap, which is applied by shrinking the integration
  step of each grid interval;
* the four routing tendons are commanded by *length*.  Their tensions are
  unknowns of a shooting problem whose residuals are the tip force/moment
  balance plus one path-length (or complementarity) condition per actuated
  tendon.

Dynamics use the implicit BDF2 semi-discretization in time: time derivatives
are replaced by ``y_t = c0 y + y_h`` with history ``y_h`` built from the two
previous grids, which turns every time step into a spatial boundary value
problem with the same structure as the static one.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .params import RodParams, TendonCommand

VSTAR = np.array([0.0, 0.0, 1.0])

# Unknown-vector scaling: xi = [dv/SC_V, u/SC_U, tau/SC_TAU].
_SC_V = 0.1
_SC_U = 10.0
_SC_TAU = 5.0

# Shooting iteration limits.
MAX_ITERATIONS = 200
_STALL_TOL = 1e-11
_FD_STEP = 1e-6
_FB_EPS = 1e-12


class ShootingError(RuntimeError):
    """Base class for boundary value solver failures."""


class ConvergenceError(ShootingError):
    pass


class SlackTendonError(ShootingError):
    pass


class OverCompressionError(ShootingError):
    pass


# ---------------------------------------------------------------------------
# Elementary model pieces (kept as plain functions so they can be tested and
# reasoned about in isolation).
# ---------------------------------------------------------------------------

def internal_force(R: np.ndarray, v: np.ndarray, k_se: np.ndarray,
                   v_star: np.ndarray = VSTAR) -> np.ndarray:
    """Internal force n = R K_se (v - v*), mapped to the world frame by R.

    ``k_se`` may be a 3x3 stiffness matrix or its diagonal.  The norm is
    frame independent, which is what the compression law consumes.
    """
    R = np.asarray(R, dtype=float)
    v = np.asarray(v, dtype=float)
    if not (np.all(np.isfinite(R)) and np.all(np.isfinite(v))):
        raise ValueError("non-finite input to internal_force")
    k_se = np.asarray(k_se, dtype=float)
    dv = v - v_star
    body = k_se @ dv if k_se.ndim == 2 else k_se * dv
    return R @ body


def spine_compression(n_mag: float, c_spine: float, saturation: float) -> float:
    """Compressed length of one section under internal force magnitude.

    l_c = c_spine * min(n_mag, saturation).  Above the cap the compression
    plateaus, which bounds the per-section shortening.
    """
    if not np.isfinite(n_mag) or n_mag < 0:
        raise ValueError("force magnitude must be finite and non-negative")
    return c_spine * min(n_mag, saturation)


def tendon_path_length(state: "RodState", tendon: int, params: RodParams) -> float:
    """Polyline length of a tendon routed at a fixed offset from the backbone."""
    if not 0 <= tendon < 4:
        raise IndexError(f"tendon index {tendon} out of range")
    r = params.tendon_offsets[tendon]
    pts = state.p + state.R @ r
    return float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))


# ---------------------------------------------------------------------------
# Spatial integration kernel.
# ---------------------------------------------------------------------------

@njit(cache=True)
def _solve6(A, b):
    """Gaussian elimination with partial pivoting for the 6x6 node system."""
    M = A.copy()
    x = b.copy()
    for col in range(6):
        piv = col
        big = abs(M[col, col])
        for r in range(col + 1, 6):
            m = abs(M[r, col])
            if m > big:
                big = m
                piv = r
        if big == 0.0:
            return x, False
        if piv != col:
            for c in range(col, 6):
                tmp = M[col, c]
                M[col, c] = M[piv, c]
                M[piv, c] = tmp
            tmp = x[col]
            x[col] = x[piv]
            x[piv] = tmp
        inv = 1.0 / M[col, col]
        for r in range(col + 1, 6):
            f = M[r, col] * inv
            if f != 0.0:
                for c in range(col + 1, 6):
                    M[r, c] -= f * M[col, c]
                x[r] -= f * x[col]
    for r in range(5, -1, -1):
        s = x[r]
        for c in range(r + 1, 6):
            s -= M[r, c] * x[c]
        x[r] = s / M[r, r]
    return x, True


@njit(cache=True)
def _sweep(v0, u0, tau, N, ds0, kse, kbt, bse, bbt, rhoA, rhoJ, grav, r_off,
           c_spine, sat, comp_div, c0, v_h, u_h, q_h, w_h, vs_h, us_h):
    """Single explicit-Euler sweep from base to tip.

    Returns the full node grids plus per-node spatial derivatives of (v, u)
    (needed as BDF2 history), the compressed steps ds, the four tendon path
    lengths, and a success flag (False when a step collapses to ds <= 0).
    """
    p = np.zeros((N, 3))
    Rm = np.zeros((N, 3, 3))
    v = np.zeros((N, 3))
    u = np.zeros((N, 3))
    q = np.zeros((N, 3))
    w = np.zeros((N, 3))
    vs = np.zeros((N, 3))
    us = np.zeros((N, 3))
    ds = np.zeros(N)
    plen = np.zeros(4)
    attach = np.zeros((4, 3))

    for a in range(3):
        Rm[0, a, a] = 1.0
        v[0, a] = v0[a]
        u[0, a] = u0[a]
    for i in range(4):
        for a in range(3):
            attach[i, a] = r_off[i, a]  # base frame is identity at origin

    LHS = np.zeros((6, 6))
    rhs = np.zeros(6)
    gx, gy, gz = grav[0], grav[1], grav[2]

    for k in range(N - 1):
        v0x, v0y, v0z = v[k, 0], v[k, 1], v[k, 2]
        u0x, u0y, u0z = u[k, 0], u[k, 1], u[k, 2]
        q0x, q0y, q0z = q[k, 0], q[k, 1], q[k, 2]
        w0x, w0y, w0z = w[k, 0], w[k, 1], w[k, 2]

        # elastic internal force and the compressed grid step
        nex = kse[0] * v0x
        ney = kse[1] * v0y
        nez = kse[2] * (v0z - 1.0)
        nmag = np.sqrt(nex * nex + ney * ney + nez * nez)
        fmag = nmag if nmag < sat else sat
        dsk = ds0 - c_spine * fmag / comp_div
        if dsk <= 0.0:
            return p, Rm, v, u, q, w, vs, us, ds, plen, False
        ds[k] = dsk

        # BDF2 time-derivative surrogates
        vtx = c0 * v0x + v_h[k, 0]
        vty = c0 * v0y + v_h[k, 1]
        vtz = c0 * v0z + v_h[k, 2]
        utx = c0 * u0x + u_h[k, 0]
        uty = c0 * u0y + u_h[k, 1]
        utz = c0 * u0z + u_h[k, 2]
        qtx = c0 * q0x + q_h[k, 0]
        qty = c0 * q0y + q_h[k, 1]
        qtz = c0 * q0z + q_h[k, 2]
        wtx = c0 * w0x + w_h[k, 0]
        wty = c0 * w0y + w_h[k, 1]
        wtz = c0 * w0z + w_h[k, 2]

        # internal loads including strain-rate damping
        nbx = nex + bse[0] * vtx
        nby = ney + bse[1] * vty
        nbz = nez + bse[2] * vtz
        mbx = kbt[0] * u0x + bbt[0] * utx
        mby = kbt[1] * u0y + bbt[1] * uty
        mbz = kbt[2] * u0z + bbt[2] * utz

        for r in range(6):
            rhs[r] = 0.0
            for c in range(6):
                LHS[r, c] = 0.0

        # distributed tendon loads: per-tendon rank-deficient coupling blocks
        for i in range(4):
            ti = tau[i]
            if ti == 0.0:
                continue
            rx, ry, rz = r_off[i, 0], r_off[i, 1], r_off[i, 2]
            pbx = u0y * rz - u0z * ry + v0x
            pby = u0z * rx - u0x * rz + v0y
            pbz = u0x * ry - u0y * rx + v0z
            pbn2 = pbx * pbx + pby * pby + pbz * pbz
            pbn = np.sqrt(pbn2)
            coef = ti / (pbn2 * pbn)
            a00 = coef * (pbn2 - pbx * pbx)
            a01 = -coef * pbx * pby
            a02 = -coef * pbx * pbz
            a11 = coef * (pbn2 - pby * pby)
            a12 = -coef * pby * pbz
            a22 = coef * (pbn2 - pbz * pbz)
            # B = hat(r) A, G = B^T, H = -B hat(r)
            b00 = -rz * a01 + ry * a02
            b01 = -rz * a11 + ry * a12
            b02 = -rz * a12 + ry * a22
            b10 = rz * a00 - rx * a02
            b11 = rz * a01 - rx * a12
            b12 = rz * a02 - rx * a22
            b20 = -ry * a00 + rx * a01
            b21 = -ry * a01 + rx * a11
            b22 = -ry * a02 + rx * a12
            h00 = -b01 * rz + b02 * ry
            h01 = b00 * rz - b02 * rx
            h02 = -b00 * ry + b01 * rx
            h10 = -b11 * rz + b12 * ry
            h11 = b10 * rz - b12 * rx
            h12 = -b10 * ry + b11 * rx
            h20 = -b21 * rz + b22 * ry
            h21 = b20 * rz - b22 * rx
            h22 = -b20 * ry + b21 * rx
            # a_i = A (u x pb), b_i = r x a_i
            cpx = u0y * pbz - u0z * pby
            cpy = u0z * pbx - u0x * pbz
            cpz = u0x * pby - u0y * pbx
            aix = a00 * cpx + a01 * cpy + a02 * cpz
            aiy = a01 * cpx + a11 * cpy + a12 * cpz
            aiz = a02 * cpx + a12 * cpy + a22 * cpz
            bix = ry * aiz - rz * aiy
            biy = rz * aix - rx * aiz
            biz = rx * aiy - ry * aix

            LHS[0, 0] += a00
            LHS[0, 1] += a01
            LHS[0, 2] += a02
            LHS[1, 0] += a01
            LHS[1, 1] += a11
            LHS[1, 2] += a12
            LHS[2, 0] += a02
            LHS[2, 1] += a12
            LHS[2, 2] += a22
            LHS[0, 3] += b00
            LHS[0, 4] += b10
            LHS[0, 5] += b20
            LHS[1, 3] += b01
            LHS[1, 4] += b11
            LHS[1, 5] += b21
            LHS[2, 3] += b02
            LHS[2, 4] += b12
            LHS[2, 5] += b22
            LHS[3, 0] += b00
            LHS[3, 1] += b01
            LHS[3, 2] += b02
            LHS[4, 0] += b10
            LHS[4, 1] += b11
            LHS[4, 2] += b12
            LHS[5, 0] += b20
            LHS[5, 1] += b21
            LHS[5, 2] += b22
            LHS[3, 3] += h00
            LHS[3, 4] += h01
            LHS[3, 5] += h02
            LHS[4, 3] += h10
            LHS[4, 4] += h11
            LHS[4, 5] += h12
            LHS[5, 3] += h20
            LHS[5, 4] += h21
            LHS[5, 5] += h22
            rhs[0] -= aix
            rhs[1] -= aiy
            rhs[2] -= aiz
            rhs[3] -= bix
            rhs[4] -= biy
            rhs[5] -= biz

        LHS[0, 0] += kse[0] + c0 * bse[0]
        LHS[1, 1] += kse[1] + c0 * bse[1]
        LHS[2, 2] += kse[2] + c0 * bse[2]
        LHS[3, 3] += kbt[0] + c0 * bbt[0]
        LHS[4, 4] += kbt[1] + c0 * bbt[1]
        LHS[5, 5] += kbt[2] + c0 * bbt[2]

        # gravity in the body frame: R^T (rhoA g)
        fgx = rhoA * (Rm[k, 0, 0] * gx + Rm[k, 1, 0] * gy + Rm[k, 2, 0] * gz)
        fgy = rhoA * (Rm[k, 0, 1] * gx + Rm[k, 1, 1] * gy + Rm[k, 2, 1] * gz)
        fgz = rhoA * (Rm[k, 0, 2] * gx + Rm[k, 1, 2] * gy + Rm[k, 2, 2] * gz)

        rhs[0] += rhoA * (w0y * q0z - w0z * q0y + qtx) - (u0y * nbz - u0z * nby) - fgx - bse[0] * vs_h[k, 0]
        rhs[1] += rhoA * (w0z * q0x - w0x * q0z + qty) - (u0z * nbx - u0x * nbz) - fgy - bse[1] * vs_h[k, 1]
        rhs[2] += rhoA * (w0x * q0y - w0y * q0x + qtz) - (u0x * nby - u0y * nbx) - fgz - bse[2] * vs_h[k, 2]
        jwx = rhoJ[0] * w0x
        jwy = rhoJ[1] * w0y
        jwz = rhoJ[2] * w0z
        rhs[3] += (w0y * jwz - w0z * jwy) + rhoJ[0] * wtx - (u0y * mbz - u0z * mby) \
            - (v0y * nbz - v0z * nby) - bbt[0] * us_h[k, 0]
        rhs[4] += (w0z * jwx - w0x * jwz) + rhoJ[1] * wty - (u0z * mbx - u0x * mbz) \
            - (v0z * nbx - v0x * nbz) - bbt[1] * us_h[k, 1]
        rhs[5] += (w0x * jwy - w0y * jwx) + rhoJ[2] * wtz - (u0x * mby - u0y * mbx) \
            - (v0x * nby - v0y * nbx) - bbt[2] * us_h[k, 2]

        sol, solved = _solve6(LHS, rhs)
        if not solved:
            return p, Rm, v, u, q, w, vs, us, ds, plen, False
        for a in range(3):
            vs[k, a] = sol[a]
            us[k, a] = sol[3 + a]

        qsx = vtx + (w0y * v0z - w0z * v0y) - (u0y * q0z - u0z * q0y)
        qsy = vty + (w0z * v0x - w0x * v0z) - (u0z * q0x - u0x * q0z)
        qsz = vtz + (w0x * v0y - w0y * v0x) - (u0x * q0y - u0y * q0x)
        wsx = utx - (u0y * w0z - u0z * w0y)
        wsy = uty - (u0z * w0x - u0x * w0z)
        wsz = utz - (u0x * w0y - u0y * w0x)

        # advance pose: p' = R v, R' = R hat(u), then re-orthonormalize
        rvx = Rm[k, 0, 0] * v0x + Rm[k, 0, 1] * v0y + Rm[k, 0, 2] * v0z
        rvy = Rm[k, 1, 0] * v0x + Rm[k, 1, 1] * v0y + Rm[k, 1, 2] * v0z
        rvz = Rm[k, 2, 0] * v0x + Rm[k, 2, 1] * v0y + Rm[k, 2, 2] * v0z
        p[k + 1, 0] = p[k, 0] + dsk * rvx
        p[k + 1, 1] = p[k, 1] + dsk * rvy
        p[k + 1, 2] = p[k, 2] + dsk * rvz

        d = dsk
        e00, e01, e02 = 1.0, -d * u0z, d * u0y
        e10, e11, e12 = d * u0z, 1.0, -d * u0x
        e20, e21, e22 = -d * u0y, d * u0x, 1.0
        t00 = Rm[k, 0, 0] * e00 + Rm[k, 0, 1] * e10 + Rm[k, 0, 2] * e20
        t01 = Rm[k, 0, 0] * e01 + Rm[k, 0, 1] * e11 + Rm[k, 0, 2] * e21
        t02 = Rm[k, 0, 0] * e02 + Rm[k, 0, 1] * e12 + Rm[k, 0, 2] * e22
        t10 = Rm[k, 1, 0] * e00 + Rm[k, 1, 1] * e10 + Rm[k, 1, 2] * e20
        t11 = Rm[k, 1, 0] * e01 + Rm[k, 1, 1] * e11 + Rm[k, 1, 2] * e21
        t12 = Rm[k, 1, 0] * e02 + Rm[k, 1, 1] * e12 + Rm[k, 1, 2] * e22
        t20 = Rm[k, 2, 0] * e00 + Rm[k, 2, 1] * e10 + Rm[k, 2, 2] * e20
        t21 = Rm[k, 2, 0] * e01 + Rm[k, 2, 1] * e11 + Rm[k, 2, 2] * e21
        t22 = Rm[k, 2, 0] * e02 + Rm[k, 2, 1] * e12 + Rm[k, 2, 2] * e22
        # one orthogonality polish step: R <- R (1.5 I - 0.5 R^T R)
        s00 = t00 * t00 + t10 * t10 + t20 * t20
        s01 = t00 * t01 + t10 * t11 + t20 * t21
        s02 = t00 * t02 + t10 * t12 + t20 * t22
        s11 = t01 * t01 + t11 * t11 + t21 * t21
        s12 = t01 * t02 + t11 * t12 + t21 * t22
        s22 = t02 * t02 + t12 * t12 + t22 * t22
        f00 = 1.5 - 0.5 * s00
        f01 = -0.5 * s01
        f02 = -0.5 * s02
        f11 = 1.5 - 0.5 * s11
        f12 = -0.5 * s12
        f22 = 1.5 - 0.5 * s22
        Rm[k + 1, 0, 0] = t00 * f00 + t01 * f01 + t02 * f02
        Rm[k + 1, 0, 1] = t00 * f01 + t01 * f11 + t02 * f12
        Rm[k + 1, 0, 2] = t00 * f02 + t01 * f12 + t02 * f22
        Rm[k + 1, 1, 0] = t10 * f00 + t11 * f01 + t12 * f02
        Rm[k + 1, 1, 1] = t10 * f01 + t11 * f11 + t12 * f12
        Rm[k + 1, 1, 2] = t10 * f02 + t11 * f12 + t12 * f22
        Rm[k + 1, 2, 0] = t20 * f00 + t21 * f01 + t22 * f02
        Rm[k + 1, 2, 1] = t20 * f01 + t21 * f11 + t22 * f12
        Rm[k + 1, 2, 2] = t20 * f02 + t21 * f12 + t22 * f22

        v[k + 1, 0] = v0x + dsk * sol[0]
        v[k + 1, 1] = v0y + dsk * sol[1]
        v[k + 1, 2] = v0z + dsk * sol[2]
        u[k + 1, 0] = u0x + dsk * sol[3]
        u[k + 1, 1] = u0y + dsk * sol[4]
        u[k + 1, 2] = u0z + dsk * sol[5]
        q[k + 1, 0] = q0x + dsk * qsx
        q[k + 1, 1] = q0y + dsk * qsy
        q[k + 1, 2] = q0z + dsk * qsz
        w[k + 1, 0] = w0x + dsk * wsx
        w[k + 1, 1] = w0y + dsk * wsy
        w[k + 1, 2] = w0z + dsk * wsz

        # tendon path polylines through the advanced frame
        for i in range(4):
            rx, ry, rz = r_off[i, 0], r_off[i, 1], r_off[i, 2]
            axn = p[k + 1, 0] + Rm[k + 1, 0, 0] * rx + Rm[k + 1, 0, 1] * ry + Rm[k + 1, 0, 2] * rz
            ayn = p[k + 1, 1] + Rm[k + 1, 1, 0] * rx + Rm[k + 1, 1, 1] * ry + Rm[k + 1, 1, 2] * rz
            azn = p[k + 1, 2] + Rm[k + 1, 2, 0] * rx + Rm[k + 1, 2, 1] * ry + Rm[k + 1, 2, 2] * rz
            dx = axn - attach[i, 0]
            dy = ayn - attach[i, 1]
            dz = azn - attach[i, 2]
            plen[i] += np.sqrt(dx * dx + dy * dy + dz * dz)
            attach[i, 0] = axn
            attach[i, 1] = ayn
            attach[i, 2] = azn

    return p, Rm, v, u, q, w, vs, us, ds, plen, True


# ---------------------------------------------------------------------------
# Rod state.
# ---------------------------------------------------------------------------

_CSV_HEADER = (
    "k,s,ds,px,py,pz,r00,r01,r02,r10,r11,r12,r20,r21,r22,"
    "vx,vy,vz,ux,uy,uz,qx,qy,qz,wx,wy,wz"
)


@dataclass
class RodState:
    """Full discretized rod state at one time instant.

    ``ds[k]`` is the compressed step leaving node k (``ds[-1]`` is zero by
    convention, there is no step after the tip).  The ``*_prev`` grids hold
    the previous time level so a BDF2 step can be formed; at a steady state
    they equal the current grids.
    """

    t: float
    p: np.ndarray
    R: np.ndarray
    v: np.ndarray
    u: np.ndarray
    q: np.ndarray
    w: np.ndarray
    ds: np.ndarray
    v_s: np.ndarray
    u_s: np.ndarray
    tau: np.ndarray
    path_lengths: np.ndarray
    v_prev: np.ndarray = None
    u_prev: np.ndarray = None
    q_prev: np.ndarray = None
    w_prev: np.ndarray = None
    v_s_prev: np.ndarray = None
    u_s_prev: np.ndarray = None
    residual_norm: float = np.nan
    iterations: int = 0
    converged: bool = True

    def __post_init__(self):
        for name in ("v", "u", "q", "w", "v_s", "u_s"):
            if getattr(self, name + "_prev") is None:
                setattr(self, name + "_prev", getattr(self, name).copy())

    @property
    def n_nodes(self) -> int:
        return self.p.shape[0]

    @property
    def tip(self) -> np.ndarray:
        return self.p[-1]

    @property
    def arclength(self) -> np.ndarray:
        s = np.zeros(self.n_nodes)
        np.cumsum(self.ds[:-1], out=s[1:])
        return s

    @property
    def total_length(self) -> float:
        return float(np.sum(self.ds))

    def tip_speed(self) -> float:
        """Magnitude of the tip linear velocity (body frame magnitude)."""
        return float(np.linalg.norm(self.q[-1]))

    def to_csv(self, path: str | Path | io.TextIOBase) -> None:
        s = self.arclength
        rows = np.column_stack([
            np.arange(self.n_nodes, dtype=float), s, self.ds,
            self.p, self.R.reshape(self.n_nodes, 9),
            self.v, self.u, self.q, self.w,
        ])
        if isinstance(path, io.TextIOBase):
            np.savetxt(path, rows, fmt="%.17g", delimiter=",", header=_CSV_HEADER, comments="")
        else:
            with open(path, "w") as fh:
                np.savetxt(fh, rows, fmt="%.17g", delimiter=",", header=_CSV_HEADER, comments="")

    @classmethod
    def from_csv(cls, path: str | Path, params: RodParams | None = None, t: float = 0.0) -> "RodState":
        rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if rows.shape[1] != 27:
            raise ValueError(f"expected 27 columns, got {rows.shape[1]}")
        n = rows.shape[0]
        state = cls(
            t=t,
            p=rows[:, 3:6].copy(),
            R=rows[:, 6:15].reshape(n, 3, 3).copy(),
            v=rows[:, 15:18].copy(),
            u=rows[:, 18:21].copy(),
            q=rows[:, 21:24].copy(),
            w=rows[:, 24:27].copy(),
            ds=rows[:, 2].copy(),
            v_s=np.zeros((n, 3)),
            u_s=np.zeros((n, 3)),
            tau=np.zeros(4),
            path_lengths=np.zeros(4),
        )
        if params is not None:
            state.path_lengths = np.array(
                [tendon_path_length(state, i, params) for i in range(4)]
            )
        return state


@dataclass
class ShootingResult:
    state: RodState
    tensions: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool


# ---------------------------------------------------------------------------
# Residual assembly and the damped Newton solver.
# ---------------------------------------------------------------------------

class _RodContext:
    """Plain-array snapshot of RodParams for the kernel plus scratch history."""

    def __init__(self, params: RodParams):
        self.params = params
        self.N = params.n_nodes
        self.ds0 = params.ds0
        self.kse = params.kse_diag
        self.kbt = params.kbt_diag
        self.bse = params.b_se.astype(float)
        self.bbt = params.b_bt.astype(float)
        self.rhoA = params.density * params.cross_section_area
        self.rhoJ = params.rho_j_diag
        self.grav = params.gravity.astype(float)
        self.r_off = params.tendon_offsets.astype(float)
        self.comp_div = float(params.nodes_per_section) if params.compression_mode == "per-section" else 1.0
        self.tau_scale = params.kbt_diag[0] / params.total_length ** 2
        zeros = np.zeros((self.N, 3))
        self.v_h = zeros.copy()
        self.u_h = zeros.copy()
        self.q_h = zeros.copy()
        self.w_h = zeros.copy()
        self.vs_h = zeros.copy()
        self.us_h = zeros.copy()
        self.c0 = 0.0

    def set_history(self, state: RodState, dt: float) -> None:
        c1 = -2.0 / dt
        c2 = 0.5 / dt
        self.c0 = 1.5 / dt
        self.v_h = c1 * state.v + c2 * state.v_prev
        self.u_h = c1 * state.u + c2 * state.u_prev
        self.q_h = c1 * state.q + c2 * state.q_prev
        self.w_h = c1 * state.w + c2 * state.w_prev
        self.vs_h = c1 * state.v_s + c2 * state.v_s_prev
        self.us_h = c1 * state.u_s + c2 * state.u_s_prev

    def run(self, v0, u0, tau):
        return _sweep(
            v0, u0, tau, self.N, self.ds0, self.kse, self.kbt, self.bse,
            self.bbt, self.rhoA, self.rhoJ, self.grav, self.r_off,
            self.params.c_spine, self.params.saturation_force, self.comp_div,
            self.c0, self.v_h, self.u_h, self.q_h, self.w_h, self.vs_h, self.us_h,
        )


def _cross3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # np.cross spends most of its time on axis bookkeeping for these tiny
    # operands, so spell the product out
    ax, ay, az = a[..., 0], a[..., 1], a[..., 2]
    bx, by, bz = b[..., 0], b[..., 1], b[..., 2]
    return np.stack((ay * bz - az * by, az * bx - ax * bz, ax * by - ay * bx), axis=-1)


def _unpack_xi(xi: np.ndarray, act_idx: np.ndarray):
    v0 = VSTAR + _SC_V * xi[0:3]
    u0 = _SC_U * xi[3:6]
    tau = np.zeros(4)
    tau[act_idx] = _SC_TAU * xi[6:]
    return v0, u0, tau


def _make_residual(ctx: _RodContext, cmd: np.ndarray, act_idx: np.ndarray, tip_mass: float,
                   mu: float | None = None):
    """Build the shooting residual for the unknowns [base strain, base
    curvature, actuated tensions].

    With ``mu=None`` every actuated tendon contributes a hard path-length
    row (strict mode).  With a smoothing width ``mu`` the row is instead the
    smoothed Fischer-Burmeister function of (tension, length surplus), whose
    root enforces tension >= 0, path <= command, and their product ~ mu^2;
    that is the complementarity condition of a tendon that can pull but not
    push (clamp mode).
    """
    params = ctx.params
    EA = params.youngs_modulus * params.cross_section_area
    EI = params.youngs_modulus * params.second_moment_x
    L1 = params.total_length
    m_res = 6 + len(act_idx)
    r_act = ctx.r_off[act_idx]
    cmd_act = cmd[act_idx]
    mg = tip_mass * ctx.grav
    mu2 = None if mu is None else 2.0 * mu * mu

    def residual(xi: np.ndarray):
        v0, u0, tau = _unpack_xi(xi, act_idx)
        p, Rm, v, u, q, w, vs, us, ds, plen, ok = ctx.run(v0, u0, tau)
        if not ok:
            return None, None
        v_tip, u_tip = v[-1], u[-1]
        # internal loads at the tip, including strain-rate damping
        vt_tip = ctx.c0 * v_tip + ctx.v_h[-1]
        ut_tip = ctx.c0 * u_tip + ctx.u_h[-1]
        nb = ctx.kse * (v_tip - VSTAR) + ctx.bse * vt_tip
        mb = ctx.kbt * u_tip + ctx.bbt * ut_tip
        tau_act = _SC_TAU * xi[6:]
        with np.errstate(all="ignore"):
            t_dir = _cross3(u_tip, r_act) + v_tip
            t_dir /= np.sqrt(np.einsum("ij,ij->i", t_dir, t_dir))[:, None]
            fsum = tau_act @ t_dir
            msum = tau_act @ _cross3(r_act, t_dir)
            f_ext = Rm[-1].T @ mg
            res = np.empty(m_res)
            res[0:3] = (nb + fsum - f_ext) / EA
            res[3:6] = (mb + msum) * L1 / EI
            if mu2 is None:
                res[6:] = (plen[act_idx] - cmd_act) / L1
            else:
                a = xi[6:]
                b = (cmd_act - plen[act_idx]) / _GAP_SCALE
                res[6:] = a + b - np.sqrt(a * a + b * b + mu2)
        if not np.isfinite(res).all():
            return np.full(m_res, np.inf), None
        arrays = (p, Rm, v, u, q, w, vs, us, ds, plen, tau)
        return res, arrays

    return residual


def _norm(r: np.ndarray) -> float:
    n = float(np.linalg.norm(r))
    return n if np.isfinite(n) else np.inf


def _newton(residual, xi0: np.ndarray, tol: float, max_iter: int = MAX_ITERATIONS):
    xi = np.asarray(xi0, dtype=float).copy()
    r, arrays = residual(xi)
    if r is None:
        raise OverCompressionError("initial guess collapses a grid step (ds <= 0)")
    nr = _norm(r)
    iterations = 0
    n = xi.size
    nr_anchor, anchor_iter = nr, 0
    central = False

    def jacobian():
        J = np.empty((r.size, n))
        for j in range(n):
            xj = xi.copy()
            xj[j] += _FD_STEP
            rj, _ = residual(xj)
            if rj is None or not np.all(np.isfinite(rj)):
                xj[j] -= 2.0 * _FD_STEP
                rj, _ = residual(xj)
                if rj is None or not np.all(np.isfinite(rj)):
                    raise OverCompressionError("finite-difference probe fails on both sides")
                J[:, j] = (r - rj) / _FD_STEP
            elif central:
                xj[j] -= 2.0 * _FD_STEP
                rm, _ = residual(xj)
                if rm is None or not np.all(np.isfinite(rm)):
                    J[:, j] = (rj - r) / _FD_STEP
                else:
                    J[:, j] = (rj - rm) / (2.0 * _FD_STEP)
            else:
                J[:, j] = (rj - r) / _FD_STEP
        return J

    J = None
    fresh = False
    while iterations < max_iter and np.isfinite(nr) and nr > _STALL_TOL:
        iterations += 1
        nr_enter = nr
        if J is None:
            J = jacobian()
            fresh = True
        xi_prev, r_prev = xi, r
        alpha_used = 0.0
        def try_step(dxi, alpha_min):
            nonlocal xi, r, arrays, nr, alpha_used
            if not np.all(np.isfinite(dxi)):
                return False
            alpha = 1.0
            while alpha >= alpha_min:
                trial = xi + alpha * dxi
                rt, at = residual(trial)
                if rt is not None:
                    nrt = _norm(rt)
                    if nrt < nr:
                        xi, r, arrays, nr = trial, rt, at, nrt
                        alpha_used = alpha
                        return True
                alpha *= 0.5
            return False

        # minimum-norm step via truncated SVD: symmetric commands leave a
        # tension redistribution null space, and plain solve() would push the
        # iterate along it toward large mixed-sign tensions
        dxi = np.linalg.lstsq(J, -r, rcond=1e-10)[0]
        improved = try_step(dxi, 1.0 / 1024.0)
        if not improved and not fresh:
            # the secant-updated Jacobian went stale; rebuild before escalating
            J = jacobian()
            fresh = True
            dxi = np.linalg.lstsq(J, -r, rcond=1e-10)[0]
            improved = try_step(dxi, 1.0 / 1024.0)
        if not improved and not central:
            # forward differences carry O(h) column error, which worst-case
            # conditioning (~1e9) turns into a stall floor near 1e-5; redo
            # this iteration with central differences and keep them
            central = True
            J = jacobian()
            fresh = True
            dxi = np.linalg.lstsq(J, -r, rcond=1e-10)[0]
            improved = try_step(dxi, 1.0 / 1024.0)
        if not improved:
            # mild damping only; heavily damped steps follow the gradient of
            # |r|^2 and can drag the iterate into a non-root local minimum
            JtJ = J.T @ J
            Jtr = J.T @ r
            diag = np.diag(JtJ).copy()
            diag[diag <= 0] = 1.0
            for lam in (1e-7, 1e-4):
                dxi = np.linalg.solve(JtJ + lam * np.diag(diag), -Jtr)
                if try_step(dxi, 1.0 / 64.0):
                    improved = True
                    break
        if not improved:
            break
        # after an undamped accepted step, carry the Jacobian forward with a
        # Broyden secant update (one residual per iteration instead of 12+
        # FD sweeps); any damping signals the local model is off, so rebuild
        s = xi - xi_prev
        ss = float(s @ s)
        if alpha_used == 1.0 and nr < 0.9 * nr_enter and ss > 0.0:
            J = J + np.outer((r - r_prev - J @ s) / ss, s)
            fresh = False
        else:
            J = None
        if not central and nr > 0.5 * nr_enter and nr < 1e-2:
            central = True  # weak progress in the endgame: sharpen the Jacobian
            J = None
        if nr < 0.999 * nr_anchor:
            nr_anchor, anchor_iter = nr, iterations
        elif iterations - anchor_iter >= 10:
            break  # ten iterations without meaningful progress
    return xi, r, arrays, nr, iterations


def _state_from_arrays(arrays, t: float, prev: RodState | None, residual_norm: float,
                       iterations: int) -> RodState:
    p, Rm, v, u, q, w, vs, us, ds, plen, tau = arrays
    # project each frame onto the nearest rotation; the sweep's quaternion
    # updates drift at the 1e-8 level over a strongly bent rod
    uu, _, vt = np.linalg.svd(Rm)
    Rm = uu @ vt
    kw = {}
    if prev is not None:
        kw = dict(v_prev=prev.v.copy(), u_prev=prev.u.copy(), q_prev=prev.q.copy(),
                  w_prev=prev.w.copy(), v_s_prev=prev.v_s.copy(), u_s_prev=prev.u_s.copy())
    return RodState(
        t=t, p=p, R=Rm, v=v, u=u, q=q, w=w, ds=ds, v_s=vs, u_s=us,
        tau=tau.copy(), path_lengths=plen.copy(),
        residual_norm=residual_norm, iterations=iterations, **kw,
    )


def integrate_rod_spatial(params: RodParams, v0: np.ndarray, u0: np.ndarray,
                          command: TendonCommand | None = None,
                          tensions: np.ndarray | None = None) -> RodState:
    """Integrate the static rod once from given base strain/curvature.

    ``tensions`` holds one value per actuated tendon of ``command`` (or, if
    ``command`` is None, all four tendons).  No boundary condition is
    enforced; this is the inner sweep of the shooting method exposed for
    analysis and testing.
    """
    tau = np.zeros(4)
    if tensions is not None:
        t = np.asarray(tensions, dtype=float)
        if np.any(t < 0):
            raise ValueError("tensions must be non-negative")
        if command is None:
            tau[:] = t
        else:
            tau[command.actuated_indices] = t
    ctx = _RodContext(params)
    arrays = ctx.run(np.asarray(v0, dtype=float), np.asarray(u0, dtype=float), tau)
    *out, ok = arrays
    if not ok:
        raise OverCompressionError(
            "compression collapsed a grid step; lower tensions or use per-section mode"
        )
    return _state_from_arrays(tuple(out) + (tau,), 0.0, None, np.nan, 0)


_SLACK_TOL_N = 1e-9      # tensions below this report as exactly slack
_GAP_SCALE = 0.005       # length-surplus scale in the complementarity rows, m
_MU_LADDER = (1e-4, 1e-5)
_MU_FINAL = 1e-5


def _solve_bvp(ctx: _RodContext, command: TendonCommand, tip_mass: float,
               mode: str, tol: float, base_guess: np.ndarray,
               tau_guess: np.ndarray, warm: bool = False,
               max_iter: int = MAX_ITERATIONS):
    """Solve the shooting problem for one command.

    ``strict`` mode pins every actuated tendon to its commanded length and
    raises SlackTendonError if that takes a negative tension.  ``clamp``
    mode solves the complementarity system instead, walking the smoothing
    width down a ladder so that cold starts converge; a warm start tries
    the tightest width first.  Returns (arrays | None, residual_norm,
    iterations).
    """
    act_idx = np.asarray(command.actuated_indices, dtype=int)
    xi0 = np.concatenate([base_guess, tau_guess[act_idx] / _SC_TAU])

    def try_newton(res_fn, xi_start):
        # a collapsed grid step inside an iterate just means this attempt
        # wandered into over-compression; report it as a failed solve
        try:
            return _newton(res_fn, xi_start, tol, max_iter)
        except OverCompressionError:
            return xi_start, None, None, np.inf, 1

    if mode == "strict":
        residual = _make_residual(ctx, command.lengths, act_idx, tip_mass)
        xi, r, arrays, nr, iters = try_newton(residual, xi0)
        if nr > tol:
            return None, nr, iters
        tau = arrays[10]
        if np.any(tau[act_idx] < -1e-8):
            # compression depends on |n|, so the push solution just found may
            # mirror a physical pull solution; seed Newton with the mirrored
            # base strain as well, else it falls back into the same basin
            xi_flip = xi.copy()
            xi_flip[0:6] = -xi[0:6]
            xi_flip[6:] = np.abs(tau[act_idx]) / _SC_TAU
            _, _, arrays2, nr2, it2 = try_newton(residual, xi_flip)
            iters += it2
            if nr2 <= tol and not np.any(arrays2[10][act_idx] < -1e-8):
                return arrays2, nr2, iters
            raise SlackTendonError(
                f"command requires negative tension {tau[act_idx]}; tendon would go slack"
            )
        return arrays, nr, iters

    total_iters = 0
    ladder = (_MU_FINAL,) if warm else _MU_LADDER
    for attempt in range(2):
        xi = xi0.copy()
        arrays, nr = None, np.inf
        for mu in ladder:
            residual = _make_residual(ctx, command.lengths, act_idx, tip_mass, mu=mu)
            xi, r, arrays, nr, iters = try_newton(residual, xi)
            total_iters += iters
            if nr > tol:
                arrays = None
                break
        if arrays is not None or not warm:
            break
        ladder = _MU_LADDER  # warm single-width solve failed; walk the ladder
    if arrays is None:
        return None, nr, total_iters
    tau = arrays[10].copy()
    if np.any(tau[act_idx] < -1e-5):
        return None, max(nr, 1e-5), total_iters
    tau[act_idx] = np.where(tau[act_idx] < _SLACK_TOL_N, 0.0, tau[act_idx])
    arrays = arrays[:10] + (tau,)
    return arrays, nr, total_iters


def _relax_to_static(params: RodParams, ctx: _RodContext, command: TendonCommand,
                     tip_mass: float, tol: float):
    """Reach a stubborn static solution through the dynamics.

    Starting from the free-hang equilibrium, the command is ramped in over
    many implicit time steps (each one a small, mass-regularised
    continuation problem), held until the tip stops moving, and the result
    polished with the static solver.  Returns (arrays, nr, iters) or None.
    """
    rest_cmd = TendonCommand(np.full(4, params.total_length), command.actuated_mask)
    tau_guess = np.zeros(4)
    tau_guess[command.actuated_indices] = 0.05
    arrays, nr, total = _solve_bvp(
        ctx, rest_cmd, tip_mass, "clamp", tol, np.zeros(6), tau_guess)
    if arrays is None:
        return None
    state = _state_from_arrays(arrays, 0.0, None, nr, 0)
    n_ramp = 60
    try:
        for k in range(400):
            lam = min((k + 1) / n_ramp, 1.0)
            sub = TendonCommand(
                rest_cmd.lengths + lam * (command.lengths - rest_cmd.lengths),
                command.actuated_mask)
            state = step_dynamic(params, state, sub, tip_mass=tip_mass, mode="clamp")
            total += state.iterations
            if k >= n_ramp and state.tip_speed() < 1e-5:
                break
    except (ConvergenceError, OverCompressionError):
        return None
    base_guess = np.empty(6)
    base_guess[0:3] = (state.v[0] - VSTAR) / _SC_V
    base_guess[3:6] = state.u[0] / _SC_U
    arrays, nr, it = _solve_bvp(
        ctx, command, tip_mass, "clamp", tol, base_guess,
        np.maximum(state.tau, 0.0), warm=True)
    if arrays is None:
        return None
    return arrays, nr, total + it


def warm_guess(result: ShootingResult, command: TendonCommand) -> np.ndarray:
    """Pack a converged result into the ``guess`` layout of shoot_static.

    Useful when solving a sequence of nearby commands: seeding each solve
    from the previous equilibrium typically cuts the iteration count by an
    order of magnitude.  The command's actuated set selects which tensions
    enter the guess.
    """
    st = result.state
    return np.concatenate([
        (st.v[0] - VSTAR) / _SC_V,
        st.u[0] / _SC_U,
        result.tensions[command.actuated_indices] / _SC_TAU,
    ])


def shoot_static(params: RodParams, command: TendonCommand, *, tip_mass: float = 0.0,
                 mode: str = "strict", guess: np.ndarray | None = None,
                 tol: float = 1e-6) -> ShootingResult:
    """Solve the static boundary value problem for a tendon-length command.

    The unknowns are the base strain/curvature and one tension per actuated
    tendon; residuals are the tip force and moment balance plus one
    path-length condition per taut tendon.  ``strict`` mode keeps every
    actuated tendon length-constrained and raises ``SlackTendonError`` if
    that requires pushing; ``clamp`` mode lets tendons go slack, which is
    how a physical length-controlled actuator behaves.
    """
    if mode not in ("strict", "clamp"):
        raise ValueError(f"unknown mode {mode!r}")
    command.validate(params)
    ctx = _RodContext(params)
    act_idx = command.actuated_indices
    # a compression balance estimate: the spine shortens by roughly
    # c_spine * total tension per section, so the mean commanded shortening
    # fixes the tension sum; distribute it by per-tendon shortening
    tau_phys4 = np.zeros(4)
    if len(act_idx) > 0:
        short = np.maximum(params.total_length - command.lengths[act_idx], 0.0)
        tau_total = float(np.mean(short)) / (params.c_spine * params.n_sections)
        weights = (short + 5e-4) / float(np.sum(short) + 5e-4 * len(act_idx))
        tau_phys4[act_idx] = np.maximum(tau_total * weights, 0.05)

    if guess is None:
        base_guess = np.zeros(6)
        tau_guess = tau_phys4
    else:
        g = np.asarray(guess, dtype=float)
        base_guess = g[0:6].copy()
        tau_guess = np.zeros(4)
        tau_guess[act_idx] = g[6:] * _SC_TAU

    cap = MAX_ITERATIONS if guess is not None else 25
    arrays, nr, iterations = _solve_bvp(
        ctx, command, tip_mass, mode, tol, base_guess, tau_guess, max_iter=cap)

    if arrays is None and guess is None:
        half = np.zeros(4)
        half[act_idx] = 0.5
        if np.max(np.abs(half - tau_phys4)) > 0.05:
            arrays, nr, it = _solve_bvp(
                ctx, command, tip_mass, mode, tol, np.zeros(6), half, max_iter=25)
            iterations += it

    if arrays is None and guess is None:
        # homotopy on the commanded lengths, warm-starting each stage; a
        # failing stage gets one retry from a light-tension start
        rest = np.full(4, params.total_length)
        base_guess = np.zeros(6)
        tau_guess = 0.25 * tau_phys4
        for lam in (0.25, 0.5, 0.75, 1.0):
            sub = TendonCommand(rest + lam * (command.lengths - rest), command.actuated_mask)
            arrays, nr, it = _solve_bvp(
                ctx, sub, tip_mass, mode, tol, base_guess, tau_guess, max_iter=45)
            iterations += it
            if arrays is None:
                light = np.zeros(4)
                light[act_idx] = 0.05
                arrays, nr, it = _solve_bvp(
                    ctx, sub, tip_mass, mode, tol, np.zeros(6), light, max_iter=45)
                iterations += it
            if arrays is None:
                break
            base_guess[0:3] = (arrays[2][0] - VSTAR) / _SC_V
            base_guess[3:6] = arrays[3][0] / _SC_U
            tau_guess = arrays[10].copy()

    if arrays is None and guess is None and mode == "clamp":
        res = _relax_to_static(params, ctx, command, tip_mass, tol)
        if res is not None:
            arrays, nr, it = res
            iterations += it

    if arrays is None:
        raise ConvergenceError(
            f"shooting stalled at residual {nr:.3e} after {iterations} iterations"
        )
    tau = arrays[10]
    state = _state_from_arrays(arrays, 0.0, None, nr, iterations)
    return ShootingResult(state=state, tensions=tau.copy(), residual_norm=nr,
                          iterations=iterations, converged=bool(nr <= tol))


def step_dynamic(params: RodParams, state: RodState, command: TendonCommand, *,
                 tip_mass: float = 0.0, mode: str = "clamp", dt: float | None = None,
                 tol: float = 1e-6) -> RodState:
    """Advance the rod one implicit time step under a tendon-length command.

    The previous state supplies the BDF2 history; the returned state has
    ``t`` advanced by ``dt`` and keeps the old grids as its history level.
    The solve is warm-started from the previous base unknowns and tensions.
    """
    if mode not in ("strict", "clamp"):
        raise ValueError(f"unknown mode {mode!r}")
    command.validate(params)
    h = params.dt if dt is None else dt
    if h <= 0:
        raise ValueError("dt must be positive")
    ctx = _RodContext(params)
    ctx.set_history(state, h)
    act_idx = command.actuated_indices
    base_guess = np.empty(6)
    base_guess[0:3] = (state.v[0] - VSTAR) / _SC_V
    base_guess[3:6] = state.u[0] / _SC_U
    tau_guess = np.maximum(state.tau, 0.0)
    arrays, nr, iterations = _solve_bvp(
        ctx, command, tip_mass, mode, tol, base_guess, tau_guess, warm=True)
    if arrays is None:
        raise ConvergenceError(
            f"dynamic step stalled at residual {nr:.3e} after {iterations} iterations"
        )
    new = _state_from_arrays(arrays, state.t + h, state, nr, iterations)
    new.converged = bool(nr <= tol)
    return new


def settle(params: RodParams, state: RodState, command: TendonCommand, *,
           tip_mass: float = 0.0, max_steps: int = 200, speed_tol: float = 1e-5,
           mode: str = "clamp") -> RodState:
    """Step the dynamics under a held command until the tip stops moving."""
    for _ in range(max_steps):
        state = step_dynamic(params, state, command, tip_mass=tip_mass, mode=mode)
        if state.tip_speed() < speed_tol:
            break
    return state
