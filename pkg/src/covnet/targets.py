"""Discrete target sets: generation, CSV I/O, Gaussian regeneration and
partitioning over simplex cells."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .errors import EmptyRegenerationError, InvalidInputError, TargetFileError
from .geometry import MEMBERSHIP_EPS, AFFINE_RTOL, Simplex, affine_maps, as_points3

SHAPES = ("ellipse", "multi_circle", "triangle")

DEFAULT_REGIONS = {
    "ellipse": {"center": [0.0, 0.0], "axes": [8.0, 5.0], "angle": 0.0},
    "multi_circle": {"circles": [[[-4.0, -3.0], 3.5], [[4.5, -2.0], 3.0], [[0.0, 4.0], 3.0]]},
    "triangle": {"vertices": [[-8.0, -6.5], [8.0, -6.5], [0.0, 7.5]]},
}


@dataclass(frozen=True, eq=False)
class TargetSet:
    """Target positions (n_d, 3) and intensities in (0, 1]."""

    positions: np.ndarray
    intensity: np.ndarray

    def __post_init__(self):
        pos = as_points3(self.positions)
        inten = np.asarray(self.intensity, dtype=float).reshape(-1)
        if len(pos) == 0:
            raise InvalidInputError("a target set needs at least one point")
        if inten.shape != (len(pos),):
            raise InvalidInputError("one intensity per target is required")
        if not np.all((inten > 0.0) & (inten <= 1.0)):
            raise InvalidInputError("intensities must lie in (0, 1]")
        pos.setflags(write=False)
        inten.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "intensity", inten)

    @property
    def n_d(self) -> int:
        return len(self.positions)

    def __len__(self):
        return self.n_d

    def subset(self, idx) -> "TargetSet":
        idx = np.asarray(idx, dtype=int)
        return TargetSet(self.positions[idx], self.intensity[idx])


def canonical_shape(shape: str) -> str:
    s = shape.lower().replace("-", "_")
    if s == "multicircle":
        s = "multi_circle"
    if s not in SHAPES:
        raise InvalidInputError(f"unknown shape {shape!r}; choose from {SHAPES}")
    return s


def _sample_ellipse(rng, count, center, axes, angle):
    a, b = axes
    if a <= 0 or b <= 0:
        raise InvalidInputError("ellipse semi-axes must be positive")
    rad = np.sqrt(rng.random(count))
    th = 2.0 * np.pi * rng.random(count)
    local = np.column_stack([a * rad * np.cos(th), b * rad * np.sin(th)])
    c, s = math.cos(angle), math.sin(angle)
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.asarray(center, dtype=float)


def _sample_multi_circle(rng, count, circles):
    centers = np.array([c for c, _ in circles], dtype=float).reshape(-1, 2)
    radii = np.array([r for _, r in circles], dtype=float)
    if len(radii) == 0 or np.any(radii <= 0):
        raise InvalidInputError("multi_circle needs circles with positive radii")
    lo = (centers - radii[:, None]).min(axis=0)
    hi = (centers + radii[:, None]).max(axis=0)
    out = []
    # rejection from the bounding box keeps the density uniform over the union
    while sum(len(o) for o in out) < count:
        cand = lo + (hi - lo) * rng.random((2 * count, 2))
        d2 = ((cand[:, None, :] - centers[None]) ** 2).sum(-1)
        out.append(cand[np.any(d2 <= radii**2, axis=1)])
    return np.concatenate(out)[:count]


def _sample_triangle(rng, count, vertices):
    v = np.asarray(vertices, dtype=float).reshape(3, 2)
    area2 = (v[1, 0] - v[0, 0]) * (v[2, 1] - v[0, 1]) - (v[1, 1] - v[0, 1]) * (v[2, 0] - v[0, 0])
    if abs(area2) <= 1e-12 * max(1.0, np.abs(v).max()) ** 2:
        raise InvalidInputError("triangle vertices are collinear")
    u = rng.random((count, 2))
    flip = u.sum(axis=1) > 1.0
    u[flip] = 1.0 - u[flip]
    return v[0] + u[:, :1] * (v[1] - v[0]) + u[:, 1:] * (v[2] - v[0])


def generate_shape(shape: str, count: int, region_params: dict | None = None,
                   seed: int = 0, z: float = 0.0, intensity: float = 1.0) -> TargetSet:
    """Sample `count` points uniformly inside a planar shape at height `z`."""
    shape = canonical_shape(shape)
    if count < 1:
        raise InvalidInputError("count must be at least 1")
    params = dict(DEFAULT_REGIONS[shape])
    params.update(region_params or {})
    rng = np.random.default_rng(seed)
    if shape == "ellipse":
        xy = _sample_ellipse(rng, count, params["center"], params["axes"], params.get("angle", 0.0))
    elif shape == "multi_circle":
        xy = _sample_multi_circle(rng, count, params["circles"])
    else:
        xy = _sample_triangle(rng, count, params["vertices"])
    pos = np.column_stack([xy, np.full(count, float(z))])
    return TargetSet(pos, np.full(count, float(intensity)))


def _stack_cells(cells):
    vertices = np.stack([c.vertices for c in cells])
    maps, planes, diam, _ = affine_maps(vertices)
    return maps, planes, AFFINE_RTOL * diam, vertices.shape[1] == 3


def membership(ts: TargetSet, cells) -> np.ndarray:
    """Boolean (len(cells), n_d) closed-hull membership matrix."""
    cells = list(cells)
    if not cells:
        return np.zeros((0, ts.n_d), dtype=bool)
    maps, planes, tol, planar = _stack_cells(cells)
    return kernels.hull_membership(maps, planes, tol, ts.positions, MEMBERSHIP_EPS, planar)


def partition_targets(ts: TargetSet, cells: dict) -> dict:
    """Indices of targets inside each agent's simplex.

    Targets on a shared face are listed under every cell that touches them.
    """
    agents = list(cells)
    inside = membership(ts, [cells[a] for a in agents])
    return {a: np.flatnonzero(inside[k]).tolist() for k, a in enumerate(agents)}


def _domain_grid(domain, step):
    verts = np.concatenate([c.vertices for c in domain])
    planar = domain[0].dim == 2
    if planar:
        origin = verts.mean(axis=0)
        _, _, vt = np.linalg.svd(verts - origin)
        frame = vt[:2]
    else:
        origin = np.zeros(3)
        frame = np.eye(3)
    local = (verts - origin) @ frame.T
    lo, hi = local.min(axis=0), local.max(axis=0)
    axes = []
    for a, b in zip(lo, hi):
        k = int(math.floor((b - a) / step + 1e-9))
        start = a + 0.5 * ((b - a) - k * step)  # centred grid
        axes.append(start + step * np.arange(k + 1))
    mesh = np.meshgrid(*axes, indexing="ij")
    pts_local = np.column_stack([m.ravel() for m in mesh])
    return origin + pts_local @ frame


def _mixture_density(points, means, weights, cov, chunk=4096):
    dens = np.zeros(len(points))
    shared = cov.ndim == 2
    if shared:
        prec = np.linalg.inv(cov)
        norm = 1.0 / math.sqrt((2 * math.pi) ** 3 * np.linalg.det(cov))
    for s in range(0, len(points), chunk):
        p = points[s:s + chunk]
        acc = np.zeros(len(p))
        for i, (m, w) in enumerate(zip(means, weights)):
            d = p - m
            if shared:
                q, nrm = np.einsum("ki,ij,kj->k", d, prec, d), norm
            else:
                q = np.einsum("ki,ij,kj->k", d, np.linalg.inv(cov[i]), d)
                nrm = 1.0 / math.sqrt((2 * math.pi) ** 3 * np.linalg.det(cov[i]))
            acc += w * nrm * np.exp(-0.5 * q)
        dens[s:s + chunk] = acc
    return dens


def _check_cov(cov):
    cov = np.asarray(cov, dtype=float)
    mats = cov if cov.ndim == 3 else cov[None]
    if mats.shape[1:] != (3, 3):
        raise InvalidInputError("covariances must be 3x3")
    if not np.allclose(mats, np.transpose(mats, (0, 2, 1)), atol=1e-12, rtol=0):
        raise InvalidInputError("covariance is not symmetric")
    if np.any(np.linalg.eigvalsh(mats) <= 0):
        raise InvalidInputError("covariance is not positive definite")
    return cov


def regenerate_gaussian(ts: TargetSet, domain, grid_step: float | None = None,
                        threshold: float | None = None, cov=None,
                        rel_threshold: float = 0.05) -> TargetSet:
    """Resample a sparse target set on a uniform grid over the domain.

    Each target contributes an intensity-weighted Gaussian; grid points inside
    the union of `domain` simplices whose mixture density reaches `threshold`
    are kept, with intensity = density / max density. `threshold` defaults
    to ``rel_threshold`` times the in-domain peak; `cov` defaults to an
    isotropic covariance with standard deviation ``2 * grid_step``.
    """
    domain = list(domain)
    if not domain:
        raise InvalidInputError("regeneration domain is empty")
    verts = np.concatenate([c.vertices for c in domain])
    diam = float(np.linalg.norm(verts.max(axis=0) - verts.min(axis=0)))
    if grid_step is None:
        grid_step = diam / 100.0
    if grid_step <= 0:
        raise InvalidInputError("grid_step must be positive")
    if threshold is not None and threshold <= 0:
        raise InvalidInputError("threshold must be positive")
    if cov is None:
        cov = (2.0 * grid_step) ** 2 * np.eye(3)
    cov = _check_cov(cov)

    grid = _domain_grid(domain, grid_step)
    maps, planes, tol, planar = _stack_cells(domain)
    inside = kernels.hull_membership(maps, planes, tol, grid, MEMBERSHIP_EPS, planar).any(axis=0)
    grid = grid[inside]
    if len(grid) == 0:
        raise EmptyRegenerationError("no grid point falls inside the domain")

    # canonical summation order makes the result independent of input order
    order = np.lexsort((ts.positions[:, 2], ts.positions[:, 1], ts.positions[:, 0], ts.intensity))
    if cov.ndim == 3:
        cov = cov[order]
    dens = _mixture_density(grid, ts.positions[order], ts.intensity[order], cov)
    if threshold is None:
        threshold = rel_threshold * float(dens.max())
    keep = dens >= threshold
    if not np.any(keep) or float(dens.max()) <= 0.0:
        raise EmptyRegenerationError(f"no grid point reaches density {threshold:.3g}")
    d = dens[keep]
    return TargetSet(grid[keep], d / d.max())


def save_targets(ts: TargetSet, path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "z", "intensity"])
        for (x, y, z), t in zip(ts.positions, ts.intensity):
            w.writerow([repr(float(x)), repr(float(y)), repr(float(z)), repr(float(t))])


def load_targets(path) -> TargetSet:
    path = Path(path)
    rows = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["x", "y", "z", "intensity"]:
            raise TargetFileError("header must be x,y,z,intensity", line=1)
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise TargetFileError(f"expected 4 fields, got {len(row)}", line=line)
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise TargetFileError(f"unparseable number in {row!r}", line=line) from None
            if not all(math.isfinite(v) for v in vals):
                raise TargetFileError("non-finite value", line=line)
            if not 0.0 < vals[3] <= 1.0:
                raise TargetFileError(f"intensity {vals[3]} outside (0, 1]", line=line)
            rows.append(vals)
    if not rows:
        raise TargetFileError("file holds no targets", line=2)
    arr = np.array(rows)
    return TargetSet(arr[:, :3], arr[:, 3])
