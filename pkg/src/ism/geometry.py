"""Exact 3-vector algebra for the spin dynamics.

All routines accept single vectors of shape (3,) or stacks of shape (N, 3)
and broadcast over the leading axis.  The rotation helper integrates
dv/dt = omega ^ v exactly (Rodrigues), which is what keeps |v| = v a
structural identity of the time steppers instead of an approximation.
"""

from __future__ import annotations

import numpy as np

Vec3 = np.ndarray   # shape (3,) or (N, 3)
Mat3 = np.ndarray   # shape (3, 3)

# below this rotation angle the sin/cos factors switch to series to avoid
# any cancellation in 1 - cos
_SMALL_ANGLE = 1e-4


def vec3(x: float, y: float, z: float) -> Vec3:
    return np.array([x, y, z], dtype=float)


def norm(a: Vec3) -> np.ndarray:
    """Euclidean norm along the last axis."""
    return np.sqrt(np.sum(a * a, axis=-1))


def dot(a: Vec3, b: Vec3) -> np.ndarray:
    return np.sum(a * b, axis=-1)


def cross(a: Vec3, b: Vec3) -> Vec3:
    """a ^ b, written out componentwise so every caller shares one expression."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = np.empty(np.broadcast_shapes(a.shape, b.shape), dtype=float)
    out[..., 0] = a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1]
    out[..., 1] = a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2]
    out[..., 2] = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    return out


def omega_matrix(u: Vec3) -> Mat3:
    """Skew matrix with Omega(u) @ b == cross(b, u) for every b.

    Sign pinned by the unit tests: row layout [[0, u3, -u2], [-u3, 0, u1],
    [u2, -u1, 0]], so trace(Omega.T @ Omega) = 2|u|^2.
    """
    u = np.asarray(u, dtype=float)
    u1, u2, u3 = u
    return np.array([[0.0, u3, -u2],
                     [-u3, 0.0, u1],
                     [u2, -u1, 0.0]])


def tangent_project(v: Vec3, a: Vec3) -> Vec3:
    """(Id - vhat x vhat) a : component of a orthogonal to v.

    Raises ValueError on a zero v (degenerate velocity).
    """
    v = np.asarray(v, dtype=float)
    a = np.asarray(a, dtype=float)
    n2 = np.sum(v * v, axis=-1)
    if np.any(n2 == 0.0):
        raise ValueError("degenerate velocity: tangent projection undefined for |v| = 0")
    coef = np.sum(v * a, axis=-1) / n2
    return a - coef[..., None] * v


def _sin_cos_factors(theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return (sin(theta), 1 - cos(theta)) with a series branch for small angles."""
    theta = np.asarray(theta, dtype=float)
    small = np.abs(theta) < _SMALL_ANGLE
    s = np.where(small, theta * (1.0 - theta * theta / 6.0), np.sin(theta))
    t2 = theta * theta
    omc = np.where(small, t2 * (0.5 - t2 / 24.0), 1.0 - np.cos(theta))
    return s, omc


def rotate_about(v: Vec3, omega: Vec3, dt: float) -> Vec3:
    """Exactly integrate dv/dt = omega ^ v over dt.

    The result is v rotated about the axis omega-hat by the angle |omega| dt
    (right-hand rule: omega = +z e3 turns +x into +y).  |result| is
    renormalized to |v| (one multiply), and result . omega = v . omega up to
    rounding.  omega = 0 returns v unchanged.
    """
    v = np.asarray(v, dtype=float)
    omega = np.asarray(omega, dtype=float)
    w = norm(omega)
    theta = w * dt
    s, omc = _sin_cos_factors(theta)
    # guard the axis division; rows with w == 0 contribute nothing anyway
    safe_w = np.where(w == 0.0, 1.0, w)
    axis = omega / safe_w[..., None]
    wxv = cross(axis, v)
    wwxv = cross(axis, wxv)
    out = v + s[..., None] * wxv + omc[..., None] * wwxv
    # renormalize so the constraint |v| = const is structural
    n_old = norm(v)
    n_new = norm(out)
    safe_n = np.where(n_new == 0.0, 1.0, n_new)
    return out * (n_old / safe_n)[..., None]


def displacement_arc(v: Vec3, omega: Vec3, dt: float) -> Vec3:
    """Integral of the rotating velocity: int_0^dt R(omega, tau) v dtau.

    Used by the exact-arc position update; reduces to v*dt when omega = 0.
    """
    v = np.asarray(v, dtype=float)
    omega = np.asarray(omega, dtype=float)
    w = norm(omega)
    theta = w * dt
    s, omc = _sin_cos_factors(theta)
    safe_w = np.where(w == 0.0, 1.0, w)
    axis = omega / safe_w[..., None]
    wxv = cross(axis, v)
    wwxv = cross(axis, wxv)
    # int cos = sin(theta)/w ; int sin = (1-cos(theta))/w
    return v * dt + (omc / safe_w)[..., None] * wxv + (dt - s / safe_w)[..., None] * wwxv
