"""Forward mass-centric training of the coverage network.

Desired plan: layer by layer, every follower's desired position is the
centroid of the targets inside the hull of its in-neighbours' desired
positions, and its desired weights are the barycentric coordinates of that
position. At run time each follower re-solves its weights from the actual
in-neighbour positions with a small equality-constrained least-squares
problem (positivity enforced by an active-set pass).
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import (AssumptionViolation, DegenerateSimplexError, IncompleteWeightsError,
                     InvalidInputError, OutOfPlaneError, RuntimeDegeneracyError)
from .geometry import (AFFINE_RTOL, MEMBERSHIP_EPS, Simplex, affine_maps, as_point3,
                       barycentric_coords, contains_many, weighted_centroid)
from .network import LayeredNetwork
from .targets import TargetSet

WEIGHT_EPS = 1e-6
CENTROID_MODES = ("eq17", "intensity_normalized")


class StaleWeights(AssumptionViolation):
    """No target inside the actual in-neighbour hull; keep the previous weights."""


def _centroid(points, intensity, mode):
    if mode == "eq17":
        return weighted_centroid(points, intensity)
    if mode == "intensity_normalized":
        return weighted_centroid(points, intensity) * len(points) / float(np.sum(intensity))
    raise InvalidInputError(f"centroid_mode must be one of {CENTROID_MODES}")


def assign_desired_positions(net: LayeredNetwork, leaders_p: dict, ts: TargetSet,
                             centroid_mode: str = "eq17") -> dict:
    """Desired positions for every agent, leaders included, in forward order."""
    missing = [i for i in net.leaders if i not in leaders_p]
    if missing:
        raise InvalidInputError(f"no desired position for leaders {missing}")
    p = {i: as_point3(leaders_p[i]) for i in net.leaders}
    for i in net.followers:
        nb = net.in_nbrs[i]
        try:
            hull = Simplex([p[j] for j in nb])
        except DegenerateSimplexError:
            raise AssumptionViolation(f"in-neighbours {nb} of follower {i} are degenerate",
                                      agent=i) from None
        idx = np.flatnonzero(contains_many(hull, ts.positions))
        if idx.size == 0:
            raise AssumptionViolation(
                f"no target inside the desired hull of follower {i}; "
                "regenerate the target set (regenerate_gaussian) or densify it", agent=i)
        p[i] = _centroid(ts.positions[idx], ts.intensity[idx], centroid_mode)
    return dict(sorted(p.items()))


def desired_weights(net: LayeredNetwork, p: dict):
    """Barycentric desired weights and the desired weight matrix."""
    varpi = {}
    for i in net.followers:
        nb = net.in_nbrs[i]
        try:
            s = Simplex([p[j] for j in nb])
        except DegenerateSimplexError:
            raise AssumptionViolation(f"in-neighbour simplex of follower {i} is degenerate",
                                      agent=i) from None
        try:
            sigma = barycentric_coords(s, p[i]).sigma
        except OutOfPlaneError as exc:
            raise OutOfPlaneError(f"follower {i}: {exc}") from None
        for j, w in zip(nb, sigma):
            varpi[(i, j)] = float(w)
    return varpi, build_weight_matrix(net, varpi)


def build_weight_matrix(net: LayeredNetwork, weights: dict) -> np.ndarray:
    """N x N matrix: -1 on the diagonal, follower rows carry their weights."""
    L = -np.eye(net.N)
    missing = []
    for i in net.followers:
        for j in net.in_nbrs[i]:
            if (i, j) not in weights:
                missing.append((i, j))
                continue
            L[i - 1, j - 1] = weights[(i, j)]
    if missing:
        raise IncompleteWeightsError(f"missing weights for edges {missing[:5]}"
                                     + ("..." if len(missing) > 5 else ""))
    return L


@dataclass(eq=False)
class DesiredPlan:
    p: dict
    varpi: dict
    Lbar: np.ndarray

    @classmethod
    def build(cls, net, leaders_p, ts, centroid_mode="eq17"):
        p = assign_desired_positions(net, leaders_p, ts, centroid_mode)
        varpi, Lbar = desired_weights(net, p)
        return cls(p, varpi, Lbar)

    def positions_array(self, N: int) -> np.ndarray:
        return np.array([self.p[i] for i in range(1, N + 1)])

    def to_dict(self):
        return {
            "positions": {str(i): [float(c) for c in v] for i, v in sorted(self.p.items())},
            "varpi": [[i, j, w] for (i, j), w in sorted(self.varpi.items())],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, doc, net: LayeredNetwork | None = None):
        p = {int(k): np.array(v, dtype=float) for k, v in doc["positions"].items()}
        varpi = {(int(i), int(j)): float(w) for i, j, w in doc["varpi"]}
        if net is not None:
            Lbar = build_weight_matrix(net, varpi)
        else:
            N = max(p)
            Lbar = -np.eye(N)
            for (i, j), w in varpi.items():
                Lbar[i - 1, j - 1] = w
        return cls(p, varpi, Lbar)


# ----------------------------------------------------------- runtime QP

def kkt_solve(R, c):
    """Unclamped ``min ||R w - c||^2  s.t.  sum(w) = 1``.

    R is (m, k) with one in-neighbour position per column. Coordinates are
    shifted to the columns' mean first; the objective is translation
    invariant under the sum constraint. Returns (w, multiplier).
    """
    R = np.asarray(R, dtype=float)
    o = R.mean(axis=1)
    Rs, cs = R - o[:, None], np.asarray(c, dtype=float) - o
    k = R.shape[1]
    K = np.zeros((k + 1, k + 1))
    K[:k, :k] = 2.0 * Rs.T @ Rs
    K[:k, k] = K[k, :k] = 1.0
    rhs = np.append(2.0 * Rs.T @ cs, 1.0)
    sol = np.linalg.solve(K, rhs)
    return sol[:k], sol[k]


def kkt_residual(R, c, w, lam) -> float:
    R = np.asarray(R, dtype=float)
    o = R.mean(axis=1)
    Rs, cs = R - o[:, None], np.asarray(c, dtype=float) - o
    stat = 2.0 * Rs.T @ (Rs @ w - cs) + lam
    return float(max(np.abs(stat).max(), abs(w.sum() - 1.0)))


def _objective(R, c, w):
    r = R @ w - c
    return float(r @ r)


def clamped_qp(R, c, eps_w: float = WEIGHT_EPS):
    """``min ||R w - c||^2`` over ``{sum(w) = 1, w >= eps_w}``.

    Enumerates free sets; with at most four variables this is exact.
    """
    R = np.asarray(R, dtype=float)
    c = np.asarray(c, dtype=float)
    k = R.shape[1]
    best, best_obj = None, np.inf
    for size in range(k, 0, -1):
        for free in itertools.combinations(range(k), size):
            fixed = [j for j in range(k) if j not in free]
            w = np.full(k, eps_w)
            budget = 1.0 - eps_w * len(fixed)
            if size == 1:
                w[free[0]] = budget
            else:
                shift = eps_w * R[:, fixed].sum(axis=1) if fixed else 0.0
                try:
                    wf, _ = kkt_solve(R[:, free] * budget, c - shift)
                except np.linalg.LinAlgError:
                    continue
                w[list(free)] = wf * budget
            if np.all(w >= eps_w * (1.0 - 1e-9)):
                obj = _objective(R, c, w)
                if best is None or obj < best_obj - 1e-15 * max(1.0, best_obj):
                    best, best_obj = w, obj
    return best


def solve_weights(R, c, eps_w: float = WEIGHT_EPS) -> np.ndarray:
    w, _ = kkt_solve(R, c)
    if np.all(w >= eps_w):
        return w
    return clamped_qp(R, c, eps_w)


def actual_centroid(in_neighbor_actual, ts: TargetSet, centroid_mode="eq17"):
    """Centroid of the targets inside the hull of the actual in-neighbour
    positions, or None when that hull holds no target."""
    try:
        hull = Simplex(in_neighbor_actual)
    except DegenerateSimplexError as exc:
        raise RuntimeDegeneracyError(f"in-neighbour hull degenerate: {exc}") from None
    idx = np.flatnonzero(contains_many(hull, ts.positions))
    if idx.size == 0:
        return None
    return _centroid(ts.positions[idx], ts.intensity[idx], centroid_mode)


def runtime_weights(in_neighbor_actual, ts: TargetSet, centroid_mode: str = "eq17",
                    eps_w: float = WEIGHT_EPS) -> np.ndarray:
    """Weights for one follower at one instant.

    Raises StaleWeights when no target is inside the actual hull.
    """
    pts = np.asarray(in_neighbor_actual, dtype=float)
    c = actual_centroid(pts, ts, centroid_mode)
    if c is None:
        raise StaleWeights("no target inside the actual in-neighbour hull")
    return solve_weights(pts.T, c, eps_w)


class RuntimeWeightSolver:
    """Batched runtime weights for every follower of a network."""

    def __init__(self, net: LayeredNetwork, ts: TargetSet, centroid_mode: str = "eq17",
                 eps_w: float = WEIGHT_EPS):
        if centroid_mode not in CENTROID_MODES:
            raise InvalidInputError(f"centroid_mode must be one of {CENTROID_MODES}")
        self.net = net
        self.ts = ts
        self.mode = centroid_mode
        self.eps_w = eps_w
        self.followers = np.array(net.followers, dtype=np.int64)
        self.nbr = np.array([net.in_nbrs[i] for i in net.followers], dtype=np.int64).reshape(
            len(self.followers), net.n + 1)
        self.planar = net.n == 2

    def centroids(self, positions):
        """(F, 3) centroids and a (F,) mask of followers with an empty hull."""
        verts = positions[self.nbr - 1]  # (F, k, 3)
        maps, planes, diam, ok = affine_maps(verts)
        if not np.all(ok):
            bad = self.followers[~ok].tolist()
            raise RuntimeDegeneracyError(f"actual in-neighbour hulls of followers {bad} are degenerate")
        counts, wsum, isum = kernels.hull_stats(maps, planes, AFFINE_RTOL * diam,
                                                self.ts.positions, self.ts.intensity,
                                                MEMBERSHIP_EPS, self.planar)
        empty = counts == 0
        denom = np.where(empty, 1, counts if self.mode == "eq17" else isum)
        return wsum / denom[:, None], empty

    def update(self, positions, previous):
        """New (F, k) weights; followers with an empty hull keep `previous`."""
        positions = np.asarray(positions, dtype=float)
        cent, empty = self.centroids(positions)
        verts = positions[self.nbr - 1]
        o = verts.mean(axis=1, keepdims=True)
        Rs = verts - o  # (F, k, 3), rows are shifted in-neighbour positions
        cs = cent - o[:, 0, :]
        F, k = self.nbr.shape
        K = np.zeros((F, k + 1, k + 1))
        K[:, :k, :k] = 2.0 * np.einsum("fac,fbc->fab", Rs, Rs)
        K[:, :k, k] = K[:, k, :k] = 1.0
        rhs = np.zeros((F, k + 1))
        rhs[:, :k] = 2.0 * np.einsum("fac,fc->fa", Rs, cs)
        rhs[:, k] = 1.0
        w = np.linalg.solve(K, rhs[..., None])[:, :k, 0]
        for f in np.flatnonzero(np.any(w < self.eps_w, axis=1) & ~empty):
            w[f] = clamped_qp(verts[f].T, cent[f], self.eps_w)
        w[empty] = previous[empty]
        return w, empty
