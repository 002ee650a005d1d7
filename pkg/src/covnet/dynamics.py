"""Quadruple-integrator team dynamics.

Every agent obeys ``r'''' = v`` with
``v = -k1 r''' - k2 r'' - k3 r' + k4 (r_id - r)``; leaders track their fixed
desired position, followers a convex combination of their in-neighbours'
actual positions. Team state arrays have shape (N, 4, 3): position and its
first three derivatives, agent ``i`` in row ``i - 1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import (ConstraintError, DivergenceError, InvalidInputError, ShapeError)
from .geometry import as_point3
from .network import LayeredNetwork
from .targets import TargetSet
from .training import WEIGHT_EPS, RuntimeWeightSolver

DEFAULT_GAINS = (4.0, 6.0, 4.0, 1.0)
STABILITY_MARGIN = 1e-9


@dataclass
class AgentState:
    r: np.ndarray
    r1: np.ndarray
    r2: np.ndarray
    r3: np.ndarray

    def __post_init__(self):
        for name in ("r", "r1", "r2", "r3"):
            v = np.asarray(getattr(self, name), dtype=float).reshape(3)
            if not np.all(np.isfinite(v)):
                raise InvalidInputError(f"state component {name} is not finite")
            setattr(self, name, v)

    @classmethod
    def at_rest(cls, r):
        z = np.zeros(3)
        return cls(as_point3(r), z, z, z)

    def as_array(self):
        return np.stack([self.r, self.r1, self.r2, self.r3])


def is_hurwitz_quartic(k1, k2, k3, k4) -> bool:
    """Routh-Hurwitz test for ``s^4 + k1 s^3 + k2 s^2 + k3 s + k4``."""
    return bool(k1 > 0 and k4 > 0 and k1 * k2 - k3 > 0
                and k3 * (k1 * k2 - k3) - k1 * k1 * k4 > 0)


@dataclass(eq=False)
class GainSet:
    """Per-agent gains; ``K_j = diag(k_j)``."""

    k1: np.ndarray
    k2: np.ndarray
    k3: np.ndarray
    k4: np.ndarray
    check: bool = True

    def __post_init__(self):
        arrs = [np.atleast_1d(np.asarray(getattr(self, f"k{j}"), dtype=float)) for j in (1, 2, 3, 4)]
        n = max(len(a) for a in arrs)
        arrs = [np.broadcast_to(a, (n,)).copy() for a in arrs]
        self.k1, self.k2, self.k3, self.k4 = arrs
        if self.check:
            bad = np.flatnonzero(~self.hurwitz()) + 1
            if bad.size:
                raise InvalidInputError(f"gains of agents {bad.tolist()} are not Hurwitz")

    @classmethod
    def uniform(cls, N: int, k=DEFAULT_GAINS, check: bool = True):
        return cls(*(np.full(N, float(kj)) for kj in k), check=check)

    def __len__(self):
        return len(self.k1)

    def hurwitz(self) -> np.ndarray:
        return np.array([is_hurwitz_quartic(*g) for g in self.as_array()], dtype=bool)

    def as_array(self) -> np.ndarray:
        return np.column_stack([self.k1, self.k2, self.k3, self.k4])

    def row(self, i: int):
        return tuple(float(x) for x in self.as_array()[i - 1])


def control_input(s: AgentState, r_id, g) -> np.ndarray:
    k1, k2, k3, k4 = g
    return -k1 * s.r3 - k2 * s.r2 - k3 * s.r1 + k4 * (as_point3(r_id) - s.r)


def neuron_input(i: int, net: LayeredNetwork, positions, weights: dict, leaders_p: dict):
    """Leaders: their desired position. Followers: weighted in-neighbour positions."""
    if net.is_leader(i):
        return as_point3(leaders_p[i])
    positions = np.asarray(positions, dtype=float)
    if positions.ndim == 3:
        positions = positions[:, 0, :]
    nb = net.in_nbrs[i]
    w = np.array([weights[(i, j)] for j in nb])
    if abs(w.sum() - 1.0) > 1e-6:
        raise ConstraintError(f"weights of follower {i} sum to {w.sum():.9g}, not 1")
    return w @ positions[np.array(nb) - 1]


# ----------------------------------------------------- collective system

@dataclass(eq=False)
class CollectiveSystem:
    A: np.ndarray
    B: np.ndarray
    L: np.ndarray
    gains: GainSet
    leaders: tuple

    @property
    def N(self) -> int:
        return self.L.shape[0]


def leader_selector(N: int, leaders) -> np.ndarray:
    L0 = np.zeros((N, len(leaders)))
    for k, i in enumerate(leaders):
        L0[i - 1, k] = 1.0
    return L0


def assemble_collective(Lmat, gains: GainSet, N_B: int, leaders=None) -> CollectiveSystem:
    """State matrix A (12N x 12N) and input matrix B (12N x 12(N_B+1)).

    The stacked state is ``[Y, Y', Y'', Y''']`` with ``Y = vec([r_1..r_N]^T)``:
    all x components, then all y, then all z. B's input is
    ``[R_L, R_L', R_L'', R_L''']`` for the leaders' desired positions.
    `leaders` defaults to agents 1..N_B+1.
    """
    L = np.asarray(Lmat, dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise ShapeError(f"weight matrix must be square, got {L.shape}")
    N = L.shape[0]
    if len(gains) != N:
        raise ShapeError(f"{len(gains)} gain rows for {N} agents")
    if leaders is None:
        leaders = tuple(range(1, N_B + 2))
    if len(leaders) != N_B + 1 or max(leaders) > N:
        raise ShapeError("leader set does not match N_B + 1 agents of the network")
    I3 = np.eye(3)
    K1, K2, K3, K4 = (np.diag(k) for k in (gains.k1, gains.k2, gains.k3, gains.k4))
    n3 = 3 * N
    A = np.zeros((4 * n3, 4 * n3))
    for a in range(3):
        A[a * n3:(a + 1) * n3, (a + 1) * n3:(a + 2) * n3] = np.eye(n3)
    bottom = slice(3 * n3, 4 * n3)
    A[bottom, 0:n3] = np.kron(I3, K4 @ L)
    A[bottom, n3:2 * n3] = -np.kron(I3, K3)
    A[bottom, 2 * n3:3 * n3] = -np.kron(I3, K2)
    A[bottom, 3 * n3:4 * n3] = -np.kron(I3, K1)
    L0 = leader_selector(N, leaders)
    nl = 3 * len(leaders)
    B = np.zeros((4 * n3, 4 * nl))
    for a, K in enumerate((K4, K3, K2, K1)):
        B[bottom, a * nl:(a + 1) * nl] = np.kron(I3, K @ L0)
    return CollectiveSystem(A, B, L, gains, tuple(leaders))


def state_to_vector(state) -> np.ndarray:
    """(N, 4, 3) team state -> stacked ``[Y, Y', Y'', Y''']``."""
    s = np.asarray(state, dtype=float)
    return np.transpose(s, (1, 2, 0)).reshape(-1)


def vector_to_state(x, N: int) -> np.ndarray:
    return np.transpose(np.asarray(x, dtype=float).reshape(4, 3, N), (2, 0, 1)).copy()


def leader_input_vector(leaders_p: dict, leaders) -> np.ndarray:
    RL = np.array([as_point3(leaders_p[i]) for i in leaders])
    return np.concatenate([RL.T.reshape(-1), np.zeros(9 * len(leaders))])


@dataclass
class StabilityReport:
    eigenvalues: np.ndarray
    max_real: float
    stable: bool
    method: str
    max_real_dense: float = field(default=float("nan"))

    def to_dict(self):
        ev = sorted(self.eigenvalues, key=lambda z: (round(z.real, 12), round(z.imag, 12)))
        return {
            "stable": self.stable,
            "max_real": self.max_real,
            "max_real_dense": self.max_real_dense,
            "method": self.method,
            "n_eigenvalues": len(ev),
            "distinct_eigenvalues": _distinct(ev),
        }


def _distinct(ev, tol=1e-9):
    out = []
    for z in ev:
        for d in out:
            if abs(complex(d[0], d[1]) - z) <= tol:
                d[2] += 1
                break
        else:
            out.append([float(z.real), float(z.imag), 1])
    return out


def merge_clusters(roots, rtol: float = 1e-3) -> np.ndarray:
    """Replace each cluster of nearby roots by the cluster mean.

    A root of multiplicity m comes back from an eigen-solver smeared over a
    ring of radius ~eps**(1/m); the ring's mean is accurate to ~eps.
    """
    roots = np.asarray(roots, dtype=complex)
    n = len(roots)
    label = np.arange(n)
    scale = 1.0 + np.abs(roots)
    for a in range(n):
        for b in range(a + 1, n):
            if abs(roots[a] - roots[b]) <= rtol * min(scale[a], scale[b]):
                la, lb = label[a], label[b]
                label[label == lb] = la
    out = roots.copy()
    for lab in np.unique(label):
        members = label == lab
        out[members] = roots[members].mean()
    return out


def _feedforward_order(L):
    """Topological order of the off-diagonal dependency graph, or None if cyclic."""
    N = L.shape[0]
    deps = [set(np.flatnonzero(L[i]).tolist()) - {i} for i in range(N)]
    order, placed = [], set()
    while len(order) < N:
        ready = [i for i in range(N) if i not in placed and deps[i] <= placed]
        if not ready:
            return None
        order.extend(ready)
        placed.update(ready)
    return order


def quartic_roots(k1, k2, k3, k4) -> np.ndarray:
    return merge_clusters(np.roots([1.0, k1, k2, k3, k4]))


def stability_report(cs: CollectiveSystem, margin: float = STABILITY_MARGIN,
                     dense: bool = True) -> StabilityReport:
    """Eigenvalues of A and a stability flag (max real part < -margin).

    When the weight matrix is triangular up to a permutation (feedforward
    network) the characteristic polynomial of A factors into one quartic per
    agent, ``s^4 + k1 s^3 + k2 s^2 + k3 s - k4 L_ii``, each appearing three
    times; those roots are used. Otherwise A is eigen-solved directly.
    Either way clustered roots are merged (see :func:`merge_clusters`).
    """
    L = cs.L
    g = cs.gains.as_array()
    raw = np.linalg.eigvals(cs.A) if dense or _feedforward_order(L) is None else None
    max_dense = float(raw.real.max()) if raw is not None else float("nan")
    if _feedforward_order(L) is not None:
        ev = []
        for i in range(cs.N):
            k1, k2, k3, k4 = g[i]
            ev.extend(np.tile(quartic_roots(k1, k2, k3, -k4 * L[i, i]), 3))
        ev = np.array(ev)
        method = "feedforward-factorization"
    else:
        ev = merge_clusters(raw)
        method = "dense-eigensolve"
    max_real = float(ev.real.max())
    return StabilityReport(ev, max_real, bool(max_real < -margin), method, max_dense)


# -------------------------------------------------------------- stepping

def affine_placement(positions: dict, scale: float = 1.0, rotation: float = 0.0,
                     translation=(0.0, 0.0, 0.0), center=None) -> dict:
    """Scale and rotate (about z) around `center`, then translate."""
    ids = sorted(positions)
    P = np.array([as_point3(positions[i]) for i in ids])
    c = P.mean(axis=0) if center is None else as_point3(center)
    cs, sn = np.cos(rotation), np.sin(rotation)
    Rz = np.array([[cs, -sn, 0.0], [sn, cs, 0.0], [0.0, 0.0, 1.0]])
    Q = (P - c) @ (scale * Rz).T + c + as_point3(translation)
    return {i: Q[k] for k, i in enumerate(ids)}


def initial_state(positions: dict, N: int) -> np.ndarray:
    s = np.zeros((N, 4, 3))
    for i in range(1, N + 1):
        s[i - 1, 0] = as_point3(positions[i])
    return s


class TeamSimulator:
    """Owns the team state and steps it forward.

    Runtime weights are refreshed every `weight_update_every` steps from the
    actual positions; a follower whose actual hull holds no target keeps its
    previous weights. Passing `frozen_weights` (a (i, j) -> w map) disables
    the refresh.
    """

    def __init__(self, net: LayeredNetwork, leaders_p: dict, ts: TargetSet, gains: GainSet,
                 state, dt: float = 1e-3, weight_update_every: int = 10,
                 centroid_mode: str = "eq17", frozen_weights: dict | None = None,
                 eps_w: float = WEIGHT_EPS, initial_weights: dict | None = None):
        if dt <= 0:
            raise InvalidInputError("dt must be positive")
        if weight_update_every < 1:
            raise InvalidInputError("weight_update_every must be at least 1")
        self.net = net
        self.N = net.N
        self.dt = float(dt)
        self.every = int(weight_update_every)
        self.gains = gains
        self.state = np.array(state, dtype=float).reshape(self.N, 4, 3)
        self.t = 0.0
        self.steps = 0
        self.solver = RuntimeWeightSolver(net, ts, centroid_mode, eps_w)
        F, k = self.solver.nbr.shape
        self.frozen = frozen_weights is not None
        start = frozen_weights if self.frozen else initial_weights
        if start is None:
            self.weights = np.full((F, k), 1.0 / k)
        else:
            self.weights = np.array([[start[(i, j)] for j in net.in_nbrs[i]]
                                     for i in net.followers]).reshape(F, k)
        self.stale = np.zeros(F, dtype=bool)
        self.is_leader = np.array([net.is_leader(i) for i in range(1, self.N + 1)])
        self.ref = np.zeros((self.N, 3))
        for i in net.leaders:
            self.ref[i - 1] = as_point3(leaders_p[i])
        self.nbr = -np.ones((self.N, k), dtype=np.int64)
        self.nbr[self.solver.followers - 1] = self.solver.nbr - 1
        self._w_full = np.zeros((self.N, k))
        self._sync_weights()
        self._fresh = False

    def _sync_weights(self):
        self._w_full[self.solver.followers - 1] = self.weights

    def refresh_weights(self):
        if self.frozen:
            return
        self.weights, self.stale = self.solver.update(self.state[:, 0, :], self.weights)
        self._sync_weights()

    def weight_map(self) -> dict:
        out = {}
        for f, i in enumerate(self.net.followers):
            for k, j in enumerate(self.net.in_nbrs[i]):
                out[(i, j)] = float(self.weights[f, k])
        return out

    def inputs(self) -> np.ndarray:
        """Current neuron inputs r_id, (N, 3)."""
        r = self.state[:, 0, :]
        rid = self.ref.copy()
        fol = ~self.is_leader
        rid[fol] = np.einsum("fk,fkc->fc", self._w_full[fol], r[np.maximum(self.nbr[fol], 0)])
        return rid

    def _integrate(self, nsteps: int):
        self.state = kernels.rk4_advance(self.state, self.nbr, self._w_full, self.ref,
                                         self.is_leader, self.gains.as_array(), self.dt, nsteps)

    def prepare(self):
        """Refresh weights if the current step is on the refresh cadence."""
        if self.steps % self.every == 0 and not self._fresh:
            self.refresh_weights()
            self._fresh = True

    def advance(self, nsteps: int):
        """Take `nsteps` steps, refreshing weights on the configured cadence."""
        done = 0
        while done < nsteps:
            self.prepare()
            chunk = min(self.every - self.steps % self.every, nsteps - done)
            self._integrate(chunk)
            self.steps += chunk
            done += chunk
            self.t = self.steps * self.dt
            self._fresh = False
            if not np.all(np.isfinite(self.state)):
                raise DivergenceError("non-finite team state", t=self.t)

    def step(self):
        self.advance(1)
        return self.state


def step(states, net: LayeredNetwork, ts: TargetSet, gains: GainSet, dt: float,
         leaders_p: dict, weights: dict | None = None, centroid_mode: str = "eq17"):
    """One RK4 step with weights re-solved from the current positions.

    Returns ``(new_states, weights)``; `weights` (a (i, j) -> w map) is the
    fallback for followers whose actual hull is empty.
    """
    sim = TeamSimulator(net, leaders_p, ts, gains, states, dt, 1, centroid_mode,
                        initial_weights=weights)
    sim.advance(1)
    return sim.state, sim.weight_map()
