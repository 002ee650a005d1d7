"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from covnet._ext import fallback
from covnet.geometry import AFFINE_RTOL, MEMBERSHIP_EPS, affine_maps
from covnet.network import build_layers, fan_network, reference_configuration
from covnet.targets import generate_shape

try:
    from covnet._ext import _kernels as compiled
except ImportError:
    compiled = None


def hull_case(n_cells=52, n_targets=500, seed=0):
    rng = np.random.default_rng(seed)
    v = np.concatenate([rng.uniform(-10, 10, (n_cells, 3, 2)), np.zeros((n_cells, 3, 1))], axis=2)
    maps, planes, diam, ok = affine_maps(v)
    ts = generate_shape("ellipse", n_targets, seed=seed)
    return (maps[ok], planes[ok], AFFINE_RTOL * diam[ok], ts.positions, ts.intensity,
            MEMBERSHIP_EPS, True)


def rk4_case(n_boundary=4, depth=3):
    fan = fan_network(n_boundary, depth)
    net = build_layers(fan.graph, fan.boundary, fan.core, fan.n)
    N = net.N
    ref_pos = reference_configuration(net, fan.leader_positions)
    state = np.zeros((N, 4, 3))
    for i in range(1, N + 1):
        state[i - 1, 0] = ref_pos[i] * 0.9
    nbr = -np.ones((N, 3), dtype=np.int64)
    w = np.zeros((N, 3))
    for i in net.followers:
        nbr[i - 1] = np.array(net.in_nbrs[i]) - 1
        w[i - 1] = 1 / 3
    ref = np.zeros((N, 3))
    is_leader = np.zeros(N, bool)
    for i in net.leaders:
        ref[i - 1] = fan.leader_positions[i]
        is_leader[i - 1] = True
    gains = np.tile([4.0, 6.0, 4.0, 1.0], (N, 1))
    return state, nbr, w, ref, is_leader, gains, 1e-3, 10


def bench(name, fn, args, repeat):
    number = 20
    t = min(timeit.repeat(lambda: fn(*args), number=number, repeat=repeat)) / number
    return name, t


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    hc = hull_case()
    hm = hc[:4] + hc[5:]
    rc = rk4_case()
    rows = []
    for label, mod in (("python", fallback), ("cython", compiled)):
        if mod is None:
            print("compiled extension not built; only the fallback is timed")
            continue
        rows.append((label,) + bench("hull_membership", mod.hull_membership, hm, args.repeat))
        rows.append((label,) + bench("hull_stats", mod.hull_stats, hc, args.repeat))
        rows.append((label,) + bench("rk4_advance x10", mod.rk4_advance, rc, args.repeat))
    print(f"{'backend':8s} {'kernel':18s} {'time/call':>12s}")
    for label, name, t in rows:
        print(f"{label:8s} {name:18s} {t * 1e6:10.1f} us")
    if compiled is not None:
        by = {(l, n): t for l, n, t in rows}
        for n in ("hull_membership", "hull_stats", "rk4_advance x10"):
            print(f"speed-up {n}: {by[('python', n)] / by[('cython', n)]:.1f}x")


if __name__ == "__main__":
    main()
