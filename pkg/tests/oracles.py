"""Reference implementations used only by the tests.

They avoid the package's code paths: membership by orientation signs,
barycentric coordinates by Cramer's rule, QP by brute-force grid search,
linear dynamics by the matrix exponential.
"""
import numpy as np
from scipy.linalg import expm


def _det2(a, b):
    return a[0] * b[1] - a[1] * b[0]


def halfplane_inside_2d(tri, q, eps=1e-9):
    """Closed membership by orientation signs, with a relative slack."""
    a, b, c = (np.asarray(v, dtype=float)[:2] for v in tri)
    q = np.asarray(q, dtype=float)[:2]
    area = _det2(b - a, c - a)
    s = np.sign(area)
    d1 = s * _det2(b - a, q - a) / abs(area)
    d2 = s * _det2(c - b, q - b) / abs(area)
    d3 = s * _det2(a - c, q - c) / abs(area)
    return min(d1, d2, d3) >= -eps


def cramer_barycentric_2d(tri, q):
    a, b, c = (np.asarray(v, dtype=float)[:2] for v in tri)
    q = np.asarray(q, dtype=float)[:2]
    area = _det2(b - a, c - a)
    la = _det2(b - q, c - q) / area
    lb = _det2(c - q, a - q) / area
    return np.array([la, lb, 1.0 - la - lb])


def cramer_barycentric_3d(tet, q):
    v = [np.asarray(x, dtype=float) for x in tet]
    q = np.asarray(q, dtype=float)
    vol = np.linalg.det(np.array([v[1] - v[0], v[2] - v[0], v[3] - v[0]]))
    out = []
    for k in range(4):
        w = list(v)
        w[k] = q
        out.append(np.linalg.det(np.array([w[1] - w[0], w[2] - w[0], w[3] - w[0]])) / vol)
    return np.array(out)


def simplex_grid(k, step):
    """All points of the (k-1)-simplex on a grid of the given step."""
    n = int(round(1.0 / step))
    if k == 3:
        i, j = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
        keep = i + j <= n
        i, j = i[keep], j[keep]
        return np.column_stack([i, j, n - i - j]) / n
    if k == 2:
        i = np.arange(n + 1)
        return np.column_stack([i, n - i]) / n
    raise ValueError("grid oracle supports k = 2 or 3")


def grid_qp(R, c, step=1e-3, grid=None):
    """Brute-force ``min ||R w - c||^2`` over the weight simplex."""
    R = np.asarray(R, dtype=float)
    if grid is None:
        grid = simplex_grid(R.shape[1], step)
    res = grid @ R.T - np.asarray(c, dtype=float)
    obj = np.einsum("ij,ij->i", res, res)
    k = int(np.argmin(obj))
    return grid[k], float(obj[k])


def linear_solution(A, B, x0, u, t):
    """Exact ``x(t)`` of ``x' = A x + B u`` with constant u (augmented expm)."""
    n, m = B.shape
    M = np.zeros((n + m, n + m))
    M[:n, :n] = A
    M[:n, n:] = B
    E = expm(M * t)
    return E[:n, :n] @ x0 + E[:n, n:] @ u


def fd_fourth_derivative(flat_acc_fn, x0, h):
    """Fourth derivative of position from the second difference of the
    acceleration, ``flat_acc_fn(t)`` evaluated at t in {-h, 0, h}."""
    return (flat_acc_fn(h) - 2.0 * flat_acc_fn(0.0) + flat_acc_fn(-h)) / h ** 2
