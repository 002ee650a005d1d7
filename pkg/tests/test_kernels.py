"""The compiled kernels and the numpy fallback must agree."""
import numpy as np
import pytest

from covnet import kernels
from covnet._ext import fallback
from covnet.geometry import AFFINE_RTOL, MEMBERSHIP_EPS, affine_maps

compiled = pytest.importorskip("covnet._ext._kernels")


def _cells(rng, F, planar):
    if planar:
        v = np.concatenate([rng.uniform(-5, 5, (F, 3, 2)), np.zeros((F, 3, 1))], axis=2)
    else:
        v = rng.uniform(-5, 5, (F, 4, 3))
    maps, planes, diam, ok = affine_maps(v)
    return maps[ok], planes[ok], AFFINE_RTOL * diam[ok]


@pytest.mark.parametrize("planar", [True, False])
def test_hull_kernels_agree(rng, planar):
    maps, planes, tol = _cells(rng, 40, planar)
    pts = rng.uniform(-6, 6, (700, 3))
    if planar:
        pts[:, 2] = 0.0
        pts[::7, 2] = 1e-3
    inten = rng.uniform(0.1, 1.0, 700)
    a = compiled.hull_membership(maps, planes, tol, pts, MEMBERSHIP_EPS, planar)
    b = fallback.hull_membership(maps, planes, tol, pts, MEMBERSHIP_EPS, planar)
    assert np.array_equal(np.asarray(a, bool), b)
    ca, wa, ia = compiled.hull_stats(maps, planes, tol, pts, inten, MEMBERSHIP_EPS, planar)
    cb, wb, ib = fallback.hull_stats(maps, planes, tol, pts, inten, MEMBERSHIP_EPS, planar)
    assert np.array_equal(ca, cb)
    assert np.allclose(wa, wb, rtol=1e-12, atol=1e-12)
    assert np.allclose(ia, ib, rtol=1e-12, atol=1e-12)


def test_rk4_kernels_agree(rng):
    N, K = 12, 3
    state = rng.normal(size=(N, 4, 3))
    is_leader = np.zeros(N, bool)
    is_leader[:4] = True
    nbr = -np.ones((N, K), dtype=np.int64)
    w = np.zeros((N, K))
    for i in range(4, N):
        nbr[i] = rng.choice(i, K, replace=False)
        w[i] = rng.dirichlet(np.ones(K))
    ref = rng.normal(size=(N, 3))
    gains = np.tile([4.0, 6.0, 4.0, 1.0], (N, 1))
    a = compiled.rk4_advance(state, nbr, w, ref, is_leader, gains, 1e-2, 50)
    b = fallback.rk4_advance(state, nbr, w, ref, is_leader, gains, 1e-2, 50)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12)


def test_backend_selection():
    assert kernels.BACKEND in ("cython", "python")
    if kernels.BACKEND == "cython":
        assert kernels.rk4_advance is compiled.rk4_advance
