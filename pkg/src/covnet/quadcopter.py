"""14-state quadcopter and its input-state feedback linearisation.

State layout: ``[x, y, z, vx, vy, vz, phi, theta, psi, phi', theta', psi', p, p']``
with p the thrust magnitude. Inputs ``u = [p'', phi'', theta'', psi'']``.
Translational acceleration is ``(p / m) b(phi, theta, psi) - g e_z`` with the
thrust direction ``b``. Differentiating twice more gives

    r'''' = (1/m) [b, p J] u + (2 p'/m) J w + (p/m) H[w, w]

(J, H first and second derivatives of b with respect to the angles, w the
angle rates), while psi'' = u4. The 4x4 map ``M1`` and drift ``M2`` below
are this relation; ``u = M1^-1 ([v, u_psi] - M2)`` makes ``r'''' = v``.

All functions broadcast over leading axes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import TeamSimulator
from .errors import InvalidInputError, SingularityError

GRAVITY = 9.81
COND_LIMIT = 1e8
DEFAULT_YAW_GAINS = (2.0, 1.0)


@dataclass(frozen=True)
class QuadParams:
    m: float = 1.0
    g: float = GRAVITY

    def __post_init__(self):
        if not self.m > 0:
            raise InvalidInputError("mass must be positive")


@dataclass
class QuadState:
    r: np.ndarray
    rdot: np.ndarray
    angles: np.ndarray
    rates: np.ndarray
    p: float
    pdot: float

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.r, self.rdot, self.angles, self.rates, [self.p, self.pdot]]).astype(float)

    @classmethod
    def from_vector(cls, x):
        x = np.asarray(x, dtype=float)
        return cls(x[0:3], x[3:6], x[6:9], x[9:12], float(x[12]), float(x[13]))

    @classmethod
    def hover(cls, r, params: QuadParams = QuadParams(), psi: float = 0.0):
        return cls(np.asarray(r, dtype=float), np.zeros(3), np.array([0.0, 0.0, psi]),
                   np.zeros(3), params.m * params.g, 0.0)


def thrust_direction(phi, theta, psi):
    sf, cf = np.sin(phi), np.cos(phi)
    st, ct = np.sin(theta), np.cos(theta)
    ss, cs = np.sin(psi), np.cos(psi)
    return np.stack([sf * ss + cf * cs * st,
                     cf * ss * st - sf * cs,
                     cf * ct], axis=-1)


def thrust_jacobian(phi, theta, psi):
    """(..., 3, 3): column a is d b / d angle_a."""
    sf, cf = np.sin(phi), np.cos(phi)
    st, ct = np.sin(theta), np.cos(theta)
    ss, cs = np.sin(psi), np.cos(psi)
    z = np.zeros_like(sf * st)
    d_phi = np.stack([cf * ss - sf * cs * st, -sf * ss * st - cf * cs, -sf * ct], axis=-1)
    d_theta = np.stack([cf * cs * ct, cf * ss * ct, -cf * st], axis=-1)
    d_psi = np.stack([sf * cs - cf * ss * st, cf * cs * st + sf * ss, z], axis=-1)
    return np.stack([d_phi, d_theta, d_psi], axis=-1)


def thrust_hessian(phi, theta, psi):
    """(..., 3, 3, 3): [c, a, b] = d^2 b_c / d angle_a d angle_b."""
    sf, cf = np.sin(phi), np.cos(phi)
    st, ct = np.sin(theta), np.cos(theta)
    ss, cs = np.sin(psi), np.cos(psi)
    z = np.zeros_like(sf * st)
    b = thrust_direction(phi, theta, psi)
    ff = -b
    tt = np.stack([-cf * cs * st, -cf * ss * st, -cf * ct], axis=-1)
    pp = np.stack([-b[..., 0], -b[..., 1], z], axis=-1)
    ft = np.stack([-sf * cs * ct, -sf * ss * ct, sf * st], axis=-1)
    fp = np.stack([cf * cs + sf * ss * st, cf * ss - sf * cs * st, z], axis=-1)
    tp = np.stack([-cf * ss * ct, cf * cs * ct, z], axis=-1)
    rows = [[ff, ft, fp], [ft, tt, tp], [fp, tp, pp]]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def _split(x):
    x = np.asarray(x, dtype=float)
    return (x[..., 0:3], x[..., 3:6], x[..., 6], x[..., 7], x[..., 8], x[..., 9:12],
            x[..., 12], x[..., 13])


def quad_derivative(x, u, params: QuadParams = QuadParams()):
    """``F(x) + G(x) u``."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    _, rdot, phi, theta, psi, rates, p, pdot = _split(x)
    acc = (p / params.m)[..., None] * thrust_direction(phi, theta, psi)
    acc[..., 2] -= params.g
    dx = np.empty_like(x)
    dx[..., 0:3] = rdot
    dx[..., 3:6] = acc
    dx[..., 6:9] = rates
    dx[..., 9:12] = u[..., 1:4]
    dx[..., 12] = pdot
    dx[..., 13] = u[..., 0]
    return dx


def flat_outputs(x, params: QuadParams = QuadParams()):
    """Position and its first three derivatives, (..., 4, 3), plus psi and psi'."""
    r, rdot, phi, theta, psi, rates, p, pdot = _split(x)
    m = params.m
    b = thrust_direction(phi, theta, psi)
    J = thrust_jacobian(phi, theta, psi)
    acc = (p / m)[..., None] * b
    acc[..., 2] -= params.g
    jerk = (pdot / m)[..., None] * b + (p / m)[..., None] * np.einsum("...ca,...a->...c", J, rates)
    return np.stack([r, rdot, acc, jerk], axis=-2), psi, rates[..., 2]


def linearization_maps(x, params: QuadParams = QuadParams()):
    """``M1`` (..., 4, 4) and ``M2`` (..., 4) with ``[r'''', psi''] = M1 u + M2``."""
    _, _, phi, theta, psi, rates, p, pdot = _split(x)
    m = params.m
    b = thrust_direction(phi, theta, psi)
    J = thrust_jacobian(phi, theta, psi)
    H = thrust_hessian(phi, theta, psi)
    shape = np.shape(p)
    M1 = np.zeros(shape + (4, 4))
    M1[..., 0:3, 0] = b / m
    M1[..., 0:3, 1:4] = (p / m)[..., None, None] * J
    M1[..., 3, 3] = 1.0
    M2 = np.zeros(shape + (4,))
    M2[..., 0:3] = ((2.0 * pdot / m)[..., None] * np.einsum("...ca,...a->...c", J, rates)
                    + (p / m)[..., None] * np.einsum("...cab,...a,...b->...c", H, rates, rates))
    return M1, M2


def yaw_control(psi, psi_dot, k5: float = DEFAULT_YAW_GAINS[0], k6: float = DEFAULT_YAW_GAINS[1]):
    return -k5 * np.asarray(psi_dot) - k6 * np.asarray(psi)


def linearizing_input(x, v, u_psi, params: QuadParams = QuadParams()):
    """Input that makes ``r'''' = v`` and ``psi'' = u_psi``."""
    M1, M2 = linearization_maps(x, params)
    cond = np.linalg.cond(M1)
    if np.any(~np.isfinite(cond) | (cond > COND_LIMIT)):
        raise SingularityError(f"linearisation singular (condition number {np.max(cond):.3g})")
    rhs = np.concatenate([np.asarray(v, dtype=float),
                          np.asarray(u_psi, dtype=float)[..., None]], axis=-1) - M2
    return np.linalg.solve(M1, rhs[..., None])[..., 0]


def state_from_flat(s, psi=0.0, psi_dot=0.0, params: QuadParams = QuadParams()):
    """Quadcopter state(s) reproducing position derivatives ``s`` (..., 4, 3)."""
    s = np.asarray(s, dtype=float)
    psi = np.broadcast_to(np.asarray(psi, dtype=float), s.shape[:-2])
    psi_dot = np.broadcast_to(np.asarray(psi_dot, dtype=float), s.shape[:-2])
    m = params.m
    f = m * s[..., 2, :]
    f[..., 2] += m * params.g
    p = np.linalg.norm(f, axis=-1)
    if np.any(p <= 0):
        raise SingularityError("zero thrust: the requested acceleration is free fall")
    b = f / p[..., None]
    cs, ss = np.cos(psi), np.sin(psi)
    bx = cs * b[..., 0] + ss * b[..., 1]
    by = -ss * b[..., 0] + cs * b[..., 1]
    phi = -np.arcsin(np.clip(by, -1.0, 1.0))
    theta = np.arctan2(bx, b[..., 2])
    J = thrust_jacobian(phi, theta, psi)
    A = np.stack([b / m, (p / m)[..., None] * J[..., 0], (p / m)[..., None] * J[..., 1]], axis=-1)
    rhs = s[..., 3, :] - (p / m * psi_dot)[..., None] * J[..., 2]
    sol = np.linalg.solve(A, rhs[..., None])[..., 0]
    x = np.zeros(s.shape[:-2] + (14,))
    x[..., 0:3] = s[..., 0, :]
    x[..., 3:6] = s[..., 1, :]
    x[..., 6], x[..., 7], x[..., 8] = phi, theta, psi
    x[..., 9], x[..., 10], x[..., 11] = sol[..., 1], sol[..., 2], psi_dot
    x[..., 12], x[..., 13] = p, sol[..., 0]
    return x


def rk4(f, x, dt, nsteps):
    for _ in range(nsteps):
        k1 = f(x)
        k2 = f(x + 0.5 * dt * k1)
        k3 = f(x + 0.5 * dt * k2)
        k4 = f(x + dt * k3)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x


def closed_loop_derivative(v_fn, params: QuadParams = QuadParams(), yaw_gains=DEFAULT_YAW_GAINS):
    """Vector field of the quadcopter under the linearising input.

    ``v_fn(flat, x)`` returns the commanded fourth derivative of position.
    """
    def f(x):
        flat, psi, psi_dot = flat_outputs(x, params)
        v = v_fn(flat, x)
        u = linearizing_input(x, v, yaw_control(psi, psi_dot, *yaw_gains), params)
        return quad_derivative(x, u, params)
    return f


class QuadcopterTeamSimulator(TeamSimulator):
    """Team simulator in which each agent is the full 14-state quadcopter.

    The outer loop is unchanged; only integration differs. ``state``
    (N, 4, 3) is kept in sync with the quadcopters' flat outputs.
    """

    def __init__(self, *args, params: QuadParams = QuadParams(), yaw_gains=DEFAULT_YAW_GAINS,
                 initial_yaw=0.0, **kw):
        super().__init__(*args, **kw)
        self.params = params
        self.yaw_gains = tuple(yaw_gains)
        self.quad = state_from_flat(self.state, psi=initial_yaw, params=params)

    def _v(self, flat, x):
        r = flat[:, 0, :]
        rid = self.ref.copy()
        fol = ~self.is_leader
        rid[fol] = np.einsum("fk,fkc->fc", self._w_full[fol], r[np.maximum(self.nbr[fol], 0)])
        g = self.gains.as_array()
        return (-g[:, 0:1] * flat[:, 3] - g[:, 1:2] * flat[:, 2] - g[:, 2:3] * flat[:, 1]
                + g[:, 3:4] * (rid - r))

    def _integrate(self, nsteps: int):
        f = closed_loop_derivative(self._v, self.params, self.yaw_gains)
        self.quad = rk4(f, self.quad, self.dt, nsteps)
        self.state = flat_outputs(self.quad, self.params)[0]
