"""Simplex geometry: affine rank, barycentric coordinates, closed-hull
membership and the count-normalised weighted centroid.

Every point lives in R^3. A 2-simplex (triangle) may sit in any plane of
R^3; its barycentric coordinates are computed in the plane's own 2-D frame
and queries off that plane are rejected.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSimplexError, EmptySetError, InvalidInputError, OutOfPlaneError

RANK_RTOL = 1e-8
MEMBERSHIP_EPS = 1e-9
AFFINE_RTOL = 1e-6


def as_point3(q) -> np.ndarray:
    """Return `q` as a float 3-vector; 2-vectors get z = 0."""
    q = np.asarray(q, dtype=float).reshape(-1)
    if q.shape == (2,):
        q = np.array([q[0], q[1], 0.0])
    if q.shape != (3,):
        raise InvalidInputError(f"expected a 2- or 3-vector, got shape {q.shape}")
    if not np.all(np.isfinite(q)):
        raise InvalidInputError("point has non-finite coordinates")
    return q


def as_points3(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(1, -1)
    if pts.ndim != 2 or pts.shape[1] not in (2, 3):
        raise InvalidInputError(f"expected an (k, 3) point array, got shape {pts.shape}")
    if pts.shape[1] == 2:
        pts = np.column_stack([pts, np.zeros(len(pts))])
    if not np.all(np.isfinite(pts)):
        raise InvalidInputError("points have non-finite coordinates")
    return pts


def affine_rank(points, tol: float | None = None) -> int:
    """Rank of the difference matrix ``[p2 - p1, ..., pk - p1]``.

    Singular values at or below `tol` count as zero. The default threshold
    is ``1e-8`` times the largest singular value.
    """
    pts = as_points3(points)
    if len(pts) < 2:
        raise InvalidInputError("affine_rank needs at least 2 points")
    diffs = (pts[1:] - pts[0]).T
    sv = np.linalg.svd(diffs, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    if tol is None:
        tol = RANK_RTOL * sv[0]
    return int(np.sum(sv > tol))


def affine_maps(vertices):
    """Batched affine maps from R^3 to barycentric coordinates.

    Parameters
    ----------
    vertices : array (F, n+1, 3)
        F simplices of dimension n (2 or 3).

    Returns
    -------
    maps : array (F, n+1, 4)
        ``sigma = maps[f] @ [q, 1]``.
    planes : array (F, 4)
        Unit normal and offset of the supporting plane (``planes[f] @ [q, 1]``
        is the signed distance) for n = 2; zero rows for n = 3.
    diameters : array (F,)
    ok : bool array (F,)
        False where the simplex fails the rank test.
    """
    v = np.asarray(vertices, dtype=float)
    if v.ndim == 2:
        v = v[None]
    F, k, _ = v.shape
    n = k - 1
    if n not in (2, 3):
        raise InvalidInputError(f"simplex dimension must be 2 or 3, got {n}")
    v0 = v[:, 0, :]
    edges = v[:, 1:, :] - v0[:, None, :]  # (F, n, 3)
    sv = np.linalg.svd(edges, compute_uv=False)  # (F, n)
    ok = sv[:, -1] > RANK_RTOL * sv[:, 0]
    diff = v[:, :, None, :] - v[:, None, :, :]
    diameters = np.sqrt((diff**2).sum(-1)).reshape(F, k * k).max(axis=1, initial=0.0)

    maps = np.zeros((F, k, 4))
    planes = np.zeros((F, 4))
    good = np.flatnonzero(ok)
    if good.size:
        e = edges[good]
        if n == 3:
            # rows of inv(T) with T = [e1 e2 e3] as columns
            coef = np.linalg.inv(np.transpose(e, (0, 2, 1)))  # (G, 3, 3)
        else:
            a, b = e[:, 0, :], e[:, 1, :]
            nrm = np.cross(a, b)
            nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
            u1 = a / np.linalg.norm(a, axis=1, keepdims=True)
            u2 = np.cross(nrm, u1)
            frame = np.stack([u1, u2], axis=1)  # (G, 2, 3)
            T = np.einsum("gic,gjc->gij", frame, e)  # local coords of edges as columns
            coef = np.linalg.inv(T) @ frame  # (G, 2, 3)
            planes[good, :3] = nrm
            planes[good, 3] = -np.einsum("gc,gc->g", nrm, v0[good])
        off = -np.einsum("gic,gc->gi", coef, v0[good])
        maps[good, 1:, :3] = coef
        maps[good, 1:, 3] = off
        maps[good, 0, :3] = -coef.sum(axis=1)
        maps[good, 0, 3] = 1.0 - off.sum(axis=1)
    return maps, planes, diameters, ok


@dataclass(frozen=True)
class Barycentric:
    sigma: np.ndarray
    inside: bool


@dataclass(frozen=True, eq=False)
class Simplex:
    """An n-simplex (n = 2 or 3) given by its n+1 vertices in R^3."""

    vertices: np.ndarray
    _map: np.ndarray = field(init=False, repr=False)
    _plane: np.ndarray = field(init=False, repr=False)
    diameter: float = field(init=False)

    def __post_init__(self):
        v = as_points3(self.vertices)
        if len(v) not in (3, 4):
            raise InvalidInputError(f"a simplex needs 3 or 4 vertices, got {len(v)}")
        maps, planes, diam, ok = affine_maps(v[None])
        if not ok[0]:
            raise DegenerateSimplexError(
                f"vertices span rank {affine_rank(v)} < {len(v) - 1}")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "_map", maps[0])
        object.__setattr__(self, "_plane", planes[0])
        object.__setattr__(self, "diameter", float(diam[0]))

    @property
    def dim(self) -> int:
        return len(self.vertices) - 1

    def plane_distance(self, q) -> float:
        if self.dim == 3:
            return 0.0
        q = as_point3(q)
        return float(abs(self._plane[:3] @ q + self._plane[3]))


def barycentric_coords(s: Simplex, q) -> Barycentric:
    """Barycentric coordinates of `q` in `s`.

    For a triangle, `q` is projected into the triangle's plane; a query
    farther than ``1e-6 * diameter`` from the plane raises OutOfPlaneError.
    """
    q = as_point3(q)
    if s.dim == 2:
        dist = s.plane_distance(q)
        if dist > AFFINE_RTOL * s.diameter:
            raise OutOfPlaneError(f"query is {dist:.3g} off the simplex plane")
    sigma = s._map @ np.append(q, 1.0)
    return Barycentric(sigma, bool(np.all(sigma >= -MEMBERSHIP_EPS)))


def simplex_contains(s: Simplex, q) -> bool:
    """Closed-hull membership; off-plane queries return False."""
    try:
        return barycentric_coords(s, q).inside
    except OutOfPlaneError:
        return False


def contains_many(s: Simplex, points) -> np.ndarray:
    """Vectorised :func:`simplex_contains` over an (k, 3) array."""
    pts = as_points3(points)
    h = np.column_stack([pts, np.ones(len(pts))])
    inside = np.all(h @ s._map.T >= -MEMBERSHIP_EPS, axis=1)
    if s.dim == 2:
        inside &= np.abs(h @ s._plane) <= AFFINE_RTOL * s.diameter
    return inside


def weighted_centroid(points, weights) -> np.ndarray:
    """``sum(w_h * d_h) / len(points)``.

    The divisor is the number of points, not the weight total.
    """
    pts = as_points3(points) if len(points) else np.empty((0, 3))
    w = np.asarray(weights, dtype=float).reshape(-1)
    if len(pts) == 0:
        raise EmptySetError("weighted centroid of an empty point set")
    if w.shape != (len(pts),):
        raise InvalidInputError("points and weights differ in length")
    if not np.all(np.isfinite(w)):
        raise InvalidInputError("weights must be finite")
    return (w[:, None] * pts).sum(axis=0) / len(pts)
