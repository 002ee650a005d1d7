"""Communication graph -> layered coverage network.

Agents are integers 1..N. Boundary leaders are listed in cyclic order, the
core leader sits inside their polytope and every other agent is a follower
that reads the positions of exactly ``n + 1`` in-neighbours. Followers are
placed in the earliest layer that follows all of their in-neighbours; an
agent carried into a later interior layer is a pass-through neuron and is
kept implicit (agent id + layer index).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (ArityError, CorePlacementError, CyclicDependencyError,
                     DegenerateLeadersError, DegenerateSimplexError, InvalidInputError,
                     NetworkError)
from .geometry import AFFINE_RTOL, Simplex, affine_rank, as_point3, as_points3


@dataclass(frozen=True)
class CommGraph:
    """Directed graph; an edge (j, i) means agent i reads agent j's position."""

    N: int
    edges: tuple

    def __post_init__(self):
        edges = tuple((int(j), int(i)) for j, i in self.edges)
        seen = set()
        for j, i in edges:
            if j == i:
                raise InvalidInputError(f"self-loop on agent {i}")
            if not (1 <= j <= self.N and 1 <= i <= self.N):
                raise InvalidInputError(f"edge ({j}, {i}) references an agent outside 1..{self.N}")
            if (j, i) in seen:
                raise InvalidInputError(f"duplicate edge ({j}, {i})")
            seen.add((j, i))
        object.__setattr__(self, "edges", edges)

    @property
    def agents(self):
        return range(1, self.N + 1)

    @property
    def in_neighbors(self) -> dict:
        nb = {i: [] for i in self.agents}
        for j, i in self.edges:
            nb[i].append(j)
        return {i: tuple(v) for i, v in nb.items()}


@dataclass(frozen=True, eq=False)
class LayeredNetwork:
    graph: CommGraph
    boundary: tuple
    core: int
    n: int
    layer_of: dict
    in_nbrs: dict = field(repr=False)

    @property
    def N(self) -> int:
        return self.graph.N

    @property
    def M(self) -> int:
        return max(self.layer_of.values())

    @property
    def leaders(self) -> tuple:
        return tuple(self.boundary) + (self.core,)

    @property
    def followers(self) -> tuple:
        """Followers in forward order (layer, then id)."""
        return tuple(sorted((i for i in self.graph.agents if self.layer_of[i] > 0),
                            key=lambda i: (self.layer_of[i], i)))

    def new_set(self, l: int) -> frozenset:
        """Agents first placed in layer `l`."""
        return frozenset(i for i, k in self.layer_of.items() if k == l)

    def layer_set(self, l: int) -> frozenset:
        """Neurons of layer `l`: the new agents, plus carried-forward ones on interior layers."""
        if l < 0 or l > self.M:
            raise IndexError(l)
        if l == 0 or l == self.M:
            return self.new_set(l)
        return self.layer_set(l - 1) | self.new_set(l)

    def layer_sets(self) -> list:
        return [self.layer_set(l) for l in range(self.M + 1)]

    def in_neurons(self, i: int, l: int) -> tuple:
        """In-neighbour neurons of neuron `i` at layer `l`."""
        if i not in self.layer_set(l):
            raise KeyError(f"agent {i} has no neuron in layer {l}")
        if l == 0:
            return ()
        if self.layer_of[i] == l:
            return self.in_nbrs[i]
        return (i,)

    def is_leader(self, i: int) -> bool:
        return self.layer_of[i] == 0


def build_layers(g: CommGraph, boundary, core: int, n: int,
                 check_arity: bool = True) -> LayeredNetwork:
    """Assign every follower to the first layer after all its in-neighbours.

    Raises CyclicDependencyError when some followers can never be placed and,
    with `check_arity`, ArityError when a follower does not have exactly
    ``n + 1`` in-neighbours or a leader has any.
    """
    if n not in (2, 3):
        raise InvalidInputError("configuration dimension n must be 2 or 3")
    boundary = tuple(int(b) for b in boundary)
    core = int(core)
    leaders = set(boundary) | {core}
    if len(leaders) != len(boundary) + 1:
        raise InvalidInputError("boundary and core ids must be distinct")
    if not leaders <= set(g.agents):
        raise InvalidInputError("leader id outside 1..N")
    nbrs = g.in_neighbors
    if check_arity:
        bad_leaders = sorted(i for i in leaders if nbrs[i])
        if bad_leaders:
            raise ArityError(f"leaders {bad_leaders} have in-neighbours")
        bad = sorted(i for i in g.agents if i not in leaders and len(nbrs[i]) != n + 1)
        if bad:
            raise ArityError(f"followers {bad} do not have exactly {n + 1} in-neighbours")

    layer = {i: 0 for i in leaders}
    pending = [i for i in g.agents if i not in leaders]
    for _ in range(g.N + 1):
        if not pending:
            break
        progressed = []
        for i in pending:
            if all(j in layer for j in nbrs[i]):
                layer[i] = 1 + max((layer[j] for j in nbrs[i]), default=0)
                progressed.append(i)
        if not progressed:
            break
        pending = [i for i in pending if i not in layer]
    if pending:
        raise CyclicDependencyError(f"followers {sorted(pending)} depend on each other cyclically")
    return LayeredNetwork(g, boundary, core, n, dict(sorted(layer.items())), nbrs)


# ---------------------------------------------------------------- polytope

@dataclass(frozen=True)
class LeadingPolytope:
    """Simplex cells (boundary ids..., core id) sharing the core leader."""

    cells: tuple

    @property
    def N_L(self) -> int:
        return len(self.cells)


def _plane_frame(points):
    origin = points.mean(axis=0)
    _, _, vt = np.linalg.svd(points - origin)
    return origin, vt[:2], vt[2]


def decompose_leading_polytope(boundary, positions, core: int, n: int) -> LeadingPolytope:
    """Split the leaders' polytope into n-simplices that all share the core.

    For n = 2 this is the fan from the core over the cyclic boundary order;
    for n = 3 each convex-hull facet of the boundary is joined to the core.
    """
    boundary = [int(b) for b in boundary]
    bpos = as_points3([positions[b] for b in boundary])
    cpos = as_point3(positions[core])
    if len(boundary) < n + 1 or affine_rank(bpos) != n:
        raise DegenerateLeadersError(
            f"boundary leaders span rank {affine_rank(bpos) if len(bpos) > 1 else 0}, need {n}")
    diam = float(np.max(np.linalg.norm(bpos[:, None] - bpos[None], axis=-1)))

    if n == 2:
        origin, frame, normal = _plane_frame(bpos)
        if abs((cpos - origin) @ normal) > AFFINE_RTOL * diam:
            raise CorePlacementError("core leader is off the boundary leaders' plane")
        b2 = (bpos - origin) @ frame.T
        c2 = (cpos - origin) @ frame.T
        k = len(boundary)
        areas, angles = [], 0.0
        for a in range(k):
            p, q = b2[a] - c2, b2[(a + 1) % k] - c2
            areas.append(p[0] * q[1] - p[1] * q[0])
            angles += math.atan2(p[0] * q[1] - p[1] * q[0], p @ q)
        areas = np.array(areas)
        tol = 1e-12 * diam**2
        if not (np.all(areas > tol) or np.all(areas < -tol)) or abs(abs(angles) - 2 * math.pi) > 1e-6:
            raise CorePlacementError("core leader is not strictly inside the boundary polygon")
        cells = tuple((boundary[a], boundary[(a + 1) % k], core) for a in range(k))
    else:
        from scipy.spatial import ConvexHull

        hull = ConvexHull(bpos)
        eq = hull.equations
        if not np.all(eq[:, :3] @ cpos + eq[:, 3] < -1e-12 * diam):
            raise CorePlacementError("core leader is not strictly inside the boundary polyhedron")
        cells = tuple(tuple(boundary[v] for v in simp) + (core,) for simp in hull.simplices)

    for cell in cells:
        try:
            Simplex([positions[c] for c in cell])
        except DegenerateSimplexError:
            raise DegenerateLeadersError(f"leading cell {cell} is degenerate") from None
    return LeadingPolytope(cells)


# -------------------------------------------------------------- validation

@dataclass
class Check:
    name: str
    passed: bool
    agents: list = field(default_factory=list)
    detail: str = ""

    def to_dict(self):
        return {"name": self.name, "passed": self.passed, "agents": list(self.agents),
                "detail": self.detail}


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self):
        out = {"passed": self.passed, "checks": [c.to_dict() for c in self.checks]}
        out.update(self.extra)
        return out

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, **kw)


def validate_network(net: LayeredNetwork, positions: dict) -> ValidationReport:
    """Check leader rank, leading-cell ranks, follower arity and the rank of
    every follower's in-neighbour simplex at `positions`."""
    rep = ValidationReport()
    n = net.n
    nbrs = net.in_nbrs

    bpos = [positions[b] for b in net.boundary if b in positions]
    rank = affine_rank(bpos) if len(bpos) >= 2 else 0
    rep.checks.append(Check("leader_rank", len(bpos) == len(net.boundary) and rank == n,
                            [] if rank == n else list(net.boundary),
                            f"boundary rank {rank}, required {n}"))

    try:
        poly = decompose_leading_polytope(net.boundary, positions, net.core, n)
        rep.checks.append(Check("leading_cells", True, [], f"{poly.N_L} cells"))
    except (NetworkError, KeyError) as exc:
        rep.checks.append(Check("leading_cells", False, list(net.leaders), str(exc)))

    bad = [i for i in net.followers if len(nbrs[i]) != n + 1]
    bad += [i for i in net.leaders if nbrs[i]]
    rep.checks.append(Check("follower_arity", not bad, sorted(bad),
                            f"followers need {n + 1} in-neighbours, leaders none"))

    bad, missing = [], []
    for i in net.followers:
        if len(nbrs[i]) != n + 1:
            continue
        if not all(j in positions for j in nbrs[i]):
            missing.append(i)
            continue
        if affine_rank([positions[j] for j in nbrs[i]]) != n:
            bad.append(i)
    detail = f"in-neighbour simplex rank must be {n}"
    if missing:
        detail += f"; unchecked (no positions): {missing}"
    rep.checks.append(Check("in_neighbor_rank", not bad, bad, detail))

    fwd = [i for i in net.followers
           if any(net.layer_of[j] >= net.layer_of[i] for j in nbrs[i])]
    rep.checks.append(Check("feedforward", not fwd, fwd, "in-neighbours precede their follower"))
    return rep


# ----------------------------------------------------------------- graph IO

def load_graph(path):
    """Read ``{"n", "boundary", "core", "edges"}`` JSON; returns (graph, boundary, core, n)."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    for key in ("n", "boundary", "core", "edges"):
        if key not in doc:
            raise InvalidInputError(f"{path}: missing key {key!r}")
    edges = [tuple(e) for e in doc["edges"]]
    ids = set(doc["boundary"]) | {doc["core"]} | {a for e in edges for a in e}
    N = int(doc.get("N", max(ids)))
    if ids != set(range(1, N + 1)):
        raise InvalidInputError(f"{path}: agent ids must be exactly 1..{N}")
    return CommGraph(N, tuple(edges)), tuple(doc["boundary"]), int(doc["core"]), int(doc["n"])


def save_graph(path, graph: CommGraph, boundary, core, n) -> None:
    doc = {"n": n, "boundary": list(boundary), "core": core,
           "edges": [list(e) for e in graph.edges]}
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


# --------------------------------------------------------------- generator

@dataclass(frozen=True, eq=False)
class FanNetwork:
    graph: CommGraph
    boundary: tuple
    core: int
    n: int
    leader_positions: dict
    reference_positions: dict
    triangles: dict  # follower -> (a, b, c) parent triangle


def fan_network(n_boundary: int, depth: int, radius: float = 12.0,
                center=(0.0, 0.0, 0.0), phase: float | None = None) -> FanNetwork:
    """Planar network from recursive subdivision of a regular leader polygon.

    Boundary leaders 1..n_boundary lie on a regular polygon (one edge
    horizontal by default) and the core n_boundary + 1 at its centre. Each
    fan cell (b_k, b_k+1, core) receives one follower; every triangle
    (a, b, c) holding a follower f spawns children in (f, a, b), (f, b, c),
    (f, c, a), down to `depth` follower layers. Ids are assigned per cell in
    breadth-first order. ``fan_network(5, 2)`` gives the 26-agent, 3-layer
    network and ``fan_network(4, 3)`` the 57-agent, 4-layer one.
    """
    if n_boundary < 3:
        raise InvalidInputError("need at least 3 boundary leaders")
    if depth < 0:
        raise InvalidInputError("depth must be non-negative")
    if radius <= 0:
        raise InvalidInputError("radius must be positive")
    center = as_point3(center)
    if phase is None:
        phase = -math.pi / 2 + math.pi / n_boundary
    pos = {}
    for k in range(n_boundary):
        a = phase + 2 * math.pi * k / n_boundary
        pos[k + 1] = center + radius * np.array([math.cos(a), math.sin(a), 0.0])
    core = n_boundary + 1
    pos[core] = center.copy()
    boundary = tuple(range(1, n_boundary + 1))

    edges, tris = [], {}
    next_id = core + 1
    for k in range(n_boundary):
        if depth == 0:
            break
        frontier = [(boundary[k], boundary[(k + 1) % n_boundary], core)]
        for _ in range(depth):
            children = []
            for tri in frontier:
                f = next_id
                next_id += 1
                tris[f] = tri
                pos[f] = np.mean([pos[v] for v in tri], axis=0)
                edges.extend((v, f) for v in tri)
                a, b, c = tri
                children.extend([(f, a, b), (f, b, c), (f, c, a)])
            frontier = children
    g = CommGraph(next_id - 1, tuple(edges))
    leaders = {i: pos[i] for i in boundary + (core,)}
    return FanNetwork(g, boundary, core, 2, leaders, pos, tris)


def reference_configuration(net: LayeredNetwork, leader_positions: dict) -> dict:
    """Place each follower at the mean of its in-neighbours, layer by layer."""
    pos = {i: as_point3(leader_positions[i]) for i in net.leaders}
    for i in net.followers:
        pos[i] = np.mean([pos[j] for j in net.in_nbrs[i]], axis=0)
    return pos
