"""Numpy implementations of the hot kernels (reference path)."""
import numpy as np


def hull_membership(maps, planes, aff_tol, targets, eps_mem, planar):
    """Boolean (F, nd) matrix: target d inside closed simplex f."""
    h = np.column_stack([targets, np.ones(len(targets))])
    sigma = np.einsum("fkc,dc->fdk", maps, h)
    inside = np.all(sigma >= -eps_mem, axis=2)
    if planar:
        inside &= np.abs(planes @ h.T) <= aff_tol[:, None]
    return inside


def hull_stats(maps, planes, aff_tol, targets, intensity, eps_mem, planar):
    """Per simplex: target count, sum of intensity*position, intensity sum."""
    inside = hull_membership(maps, planes, aff_tol, targets, eps_mem, planar)
    counts = inside.sum(axis=1).astype(np.int64)
    wi = inside * intensity[None, :]
    return counts, wi @ targets, wi.sum(axis=1)


def _input_matrix(nbr, w, n_agents):
    W = np.zeros((n_agents, n_agents))
    rows, cols = np.nonzero(nbr >= 0)
    np.add.at(W, (rows, nbr[rows, cols]), w[rows, cols])
    return W


def _deriv(s, W, ref, gains):
    r, r1, r2, r3 = s[:, 0], s[:, 1], s[:, 2], s[:, 3]
    rid = W @ r + ref
    v = (-gains[:, 0:1] * r3 - gains[:, 1:2] * r2 - gains[:, 2:3] * r1
         + gains[:, 3:4] * (rid - r))
    return np.stack([r1, r2, r3, v], axis=1)


def rk4_advance(state, nbr, w, ref, is_leader, gains, dt, nsteps):
    """Advance the quadruple-integrator team `nsteps` RK4 steps.

    state (N, 4, 3) holds r and its first three derivatives. Leaders track
    ``ref``; followers track ``sum_j w[i, j] * r[nbr[i, j]]``.
    """
    s = np.array(state, dtype=float)
    W = _input_matrix(nbr, w, len(s))
    W[is_leader] = 0.0
    ref_eff = np.where(is_leader[:, None], ref, 0.0)
    half = 0.5 * dt
    # a blown-up state is reported by the caller's finiteness check
    with np.errstate(invalid="ignore", over="ignore"):
        for _ in range(nsteps):
            k1 = _deriv(s, W, ref_eff, gains)
            k2 = _deriv(s + half * k1, W, ref_eff, gains)
            k3 = _deriv(s + half * k2, W, ref_eff, gains)
            k4 = _deriv(s + dt * k3, W, ref_eff, gains)
            s = s + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return s
