"""Bloch dynamics of a single spin under a constant control pulse.

In normalized units the magnetization vector X = (x, y, z) obeys

    dx/dt = -delta * y + (1 + alpha) * u_y * z
    dy/dt =  delta * x - (1 + alpha) * u_x * z
    dz/dt =  (1 + alpha) * u_x * y - (1 + alpha) * u_y * x

where (u_x, u_y) are the control amplitudes, delta the common resonance
offset, and alpha the per-spin scaling of the control field. The right-hand
side is X' = omega x X with the constant angular-velocity vector

    omega = ((1 + alpha) * u_x, (1 + alpha) * u_y, delta),

so the exact flow is a rotation about omega by the angle |omega| * t_f.
All spins start at the north pole (0, 0, 1); only the transverse (x, y)
components are observable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ControlPulse",
    "AlphaGrid",
    "NORTH_POLE",
    "generator",
    "propagate",
    "propagate_transverse",
    "propagate_grid",
    "rk4_propagate",
    "pulse_admissible",
]

# Rotation angles below this are treated as zero (axis is undefined at 0).
_ANGLE_FLOOR = 1e-14

NORTH_POLE = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class ControlPulse:
    """Constant control: amplitudes (u_x, u_y) applied for a duration t_f."""

    u_x: float
    u_y: float
    t_f: float

    def __post_init__(self):
        if self.t_f < 0:
            raise ValueError(f"pulse duration must be nonnegative, got {self.t_f}")


@dataclass(frozen=True)
class AlphaGrid:
    """Discretized inhomogeneity values alpha_l plus the shared offset delta.

    The alphas must be strictly increasing; they enumerate the spin
    subgroups whose probability weights are to be identified.
    """

    alphas: np.ndarray
    delta: float

    def __post_init__(self):
        alphas = np.atleast_1d(np.asarray(self.alphas, dtype=float))
        if alphas.size == 0:
            raise ValueError("alpha grid must be nonempty")
        if alphas.size > 1 and not np.all(np.diff(alphas) > 0):
            raise ValueError("alpha values must be strictly increasing")
        object.__setattr__(self, "alphas", alphas)

    @property
    def size(self) -> int:
        return self.alphas.size


def pulse_admissible(pulse: ControlPulse, u_m: float, t_f_max: float | None = None,
                     tol: float = 1e-12) -> bool:
    """Check membership of the admissible set |u_x|, |u_y| <= u_m (and t_f bound)."""
    ok = abs(pulse.u_x) <= u_m + tol and abs(pulse.u_y) <= u_m + tol
    if t_f_max is not None:
        ok = ok and -tol <= pulse.t_f <= t_f_max + tol
    return ok


def generator(pulse: ControlPulse, alpha: float, delta: float) -> np.ndarray:
    """Skew-symmetric generator Omega of the dynamics, X' = Omega @ X.

    Omega is the cross-product matrix of omega = ((1+alpha)u_x,
    (1+alpha)u_y, delta); Omega.T == -Omega exactly, which is what makes
    the flow norm-preserving.
    """
    gx = (1.0 + alpha) * pulse.u_x
    gy = (1.0 + alpha) * pulse.u_y
    return np.array([
        [0.0, -delta, gy],
        [delta, 0.0, -gx],
        [-gy, gx, 0.0],
    ])


def _omega_axes(pulse: ControlPulse, alphas: np.ndarray, delta: float):
    """Rotation vectors omega_l for every alpha_l, shape (K, 3)."""
    scale = 1.0 + alphas
    w = np.empty(alphas.shape + (3,))
    w[..., 0] = scale * pulse.u_x
    w[..., 1] = scale * pulse.u_y
    w[..., 2] = delta
    return w


def _rotate(w: np.ndarray, t_f: float, v0: np.ndarray) -> np.ndarray:
    """Apply exp(t_f * [w]_x) to v0 by the axis-angle (Rodrigues) formula.

    Vectorized over leading axes of ``w``; ``v0`` is a single 3-vector.
    Rows with rotation angle below the floor return v0 unchanged.
    """
    speed = np.linalg.norm(w, axis=-1)
    theta = speed * t_f
    safe = np.where(speed > 0.0, speed, 1.0)
    axis = w / safe[..., None]
    ct = np.cos(theta)[..., None]
    st = np.sin(theta)[..., None]
    dot = (axis @ v0)[..., None]
    rotated = v0 * ct + np.cross(axis, v0) * st + axis * dot * (1.0 - ct)
    return np.where(theta[..., None] < _ANGLE_FLOOR, v0, rotated)


def propagate(pulse: ControlPulse, alpha: float, delta: float,
              x0: np.ndarray = NORTH_POLE) -> np.ndarray:
    """Exact state at time t_f: the axis-angle rotation applied to x0.

    The control is constant, so the flow is a single rotation; there is no
    time-stepping error and the norm of x0 is conserved to round-off.
    """
    x0 = np.asarray(x0, dtype=float)
    w = _omega_axes(pulse, np.asarray(alpha, dtype=float), delta)
    return _rotate(w, pulse.t_f, x0)


def propagate_transverse(pulse: ControlPulse, alpha: float, delta: float) -> np.ndarray:
    """Transverse reading (x, y) at time t_f, starting from the north pole."""
    return propagate(pulse, alpha, delta)[..., :2]


def propagate_grid(pulse: ControlPulse, grid: AlphaGrid) -> np.ndarray:
    """Transverse readings for every alpha_l of the grid, shape (K, 2).

    Row l equals propagate_transverse(pulse, alpha_l, delta); this is the
    per-subgroup response entering the ensemble measurement model. The
    axis-angle formula is specialized to the north-pole start here
    because this call dominates the design loops:

        x = sin(theta) n_y + n_x n_z (1 - cos(theta))
        y = -sin(theta) n_x + n_y n_z (1 - cos(theta))

    with n the unit rotation axis (the cos(theta) x0 term has no
    transverse part).
    """
    scale = 1.0 + grid.alphas
    wx = scale * pulse.u_x
    wy = scale * pulse.u_y
    wz = grid.delta
    speed = np.sqrt(wx * wx + wy * wy + wz * wz)
    theta = speed * pulse.t_f
    safe = np.where(speed > 0.0, speed, 1.0)
    ct = np.cos(theta)
    st_over = np.sin(theta) / safe
    vers_z = (1.0 - ct) * wz / (safe * safe)
    out = np.empty((grid.size, 2))
    out[:, 0] = st_over * wy + wx * vers_z
    out[:, 1] = -st_over * wx + wy * vers_z
    out[theta < _ANGLE_FLOOR] = 0.0
    return out


def rk4_propagate(pulse: ControlPulse, alpha: float, delta: float,
                  x0: np.ndarray = NORTH_POLE, step: float = 1e-3) -> np.ndarray:
    """Classical fixed-step RK4 integration of the component equations.

    Independent cross-check for :func:`propagate`: the right-hand side is
    written out component by component, not assembled from the generator
    matrix. Global error is O(step^4) with constant ~ t_f * |omega|^5 / 120.
    """
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")
    x, y, z = (float(v) for v in np.asarray(x0, dtype=float))
    if pulse.t_f == 0.0:
        return np.array([x, y, z])
    n = max(1, math.ceil(pulse.t_f / step))
    h = pulse.t_f / n
    gx = (1.0 + alpha) * pulse.u_x
    gy = (1.0 + alpha) * pulse.u_y
    d = delta
    h2 = 0.5 * h
    h6 = h / 6.0
    for _ in range(n):
        k1x = -d * y + gy * z
        k1y = d * x - gx * z
        k1z = gx * y - gy * x
        ax, ay, az = x + h2 * k1x, y + h2 * k1y, z + h2 * k1z
        k2x = -d * ay + gy * az
        k2y = d * ax - gx * az
        k2z = gx * ay - gy * ax
        bx, by, bz = x + h2 * k2x, y + h2 * k2y, z + h2 * k2z
        k3x = -d * by + gy * bz
        k3y = d * bx - gx * bz
        k3z = gx * by - gy * bx
        cx, cy, cz = x + h * k3x, y + h * k3y, z + h * k3z
        k4x = -d * cy + gy * cz
        k4y = d * cx - gx * cz
        k4z = gx * cy - gy * cx
        x += h6 * (k1x + 2.0 * (k2x + k3x) + k4x)
        y += h6 * (k1y + 2.0 * (k2y + k3y) + k4y)
        z += h6 * (k1z + 2.0 * (k2z + k3z) + k4z)
    return np.array([x, y, z])
