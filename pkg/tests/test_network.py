import json

import numpy as np
import pytest

from covnet.errors import (ArityError, CorePlacementError, CyclicDependencyError,
                           DegenerateLeadersError, InvalidInputError)
from covnet.network import (CommGraph, build_layers, decompose_leading_polytope, fan_network,
                            load_graph, reference_configuration, save_graph, validate_network)


def test_26_agent_layers(net26):
    assert net26.N == 26
    assert net26.M == 2
    assert net26.leaders == (1, 2, 3, 4, 5, 6)
    assert net26.new_set(1) == {7, 11, 15, 19, 23}
    assert net26.layer_set(2) == {8, 9, 10, 12, 13, 14, 16, 17, 18, 20, 21, 22, 24, 25, 26}
    assert net26.layer_set(1) == set(range(1, 8)) | {11, 15, 19, 23}
    assert all(len(net26.in_nbrs[i]) == 3 for i in net26.followers)


def test_57_agent_layers(net57):
    assert net57.N == 57
    assert net57.M == 3
    assert [len(net57.new_set(l)) for l in range(4)] == [5, 4, 12, 36]
    assert len(net57.followers) == 52
    assert set(net57.in_nbrs[41]) == {34, 5, 32}


def test_pass_through_neurons(net26):
    assert net26.in_neurons(3, 1) == (3,)
    assert set(net26.in_neurons(7, 1)) == {1, 2, 6}
    assert net26.in_neurons(1, 0) == ()
    with pytest.raises(KeyError):
        net26.in_neurons(8, 1)


def test_followers_are_in_forward_order(net26):
    seen = set(net26.leaders)
    for i in net26.followers:
        assert set(net26.in_nbrs[i]) <= seen
        seen.add(i)


def test_cycle_detected():
    g = CommGraph(6, ((1, 5), (2, 5), (6, 5), (5, 6), (1, 6), (2, 6)))
    with pytest.raises(CyclicDependencyError):
        build_layers(g, (1, 2, 3), 4, 2, check_arity=False)


def test_arity_errors():
    g = CommGraph(5, ((1, 5), (2, 5)))
    with pytest.raises(ArityError):
        build_layers(g, (1, 2, 3), 4, 2)
    g = CommGraph(5, ((5, 1), (1, 5), (2, 5), (3, 5)))
    with pytest.raises(ArityError):
        build_layers(g, (1, 2, 3), 4, 2)


def test_bad_edges():
    with pytest.raises(InvalidInputError):
        CommGraph(3, ((1, 1),))
    with pytest.raises(InvalidInputError):
        CommGraph(3, ((1, 4),))
    with pytest.raises(InvalidInputError):
        CommGraph(3, ((1, 2), (1, 2)))


def test_fan_decomposition(fan26):
    poly = decompose_leading_polytope(fan26.boundary, fan26.leader_positions, fan26.core, 2)
    assert poly.N_L == 5
    assert poly.cells[0] == (1, 2, 6)


def test_core_outside_rejected(fan26):
    pos = dict(fan26.leader_positions)
    pos[6] = np.array([30.0, 0.0, 0.0])
    with pytest.raises(CorePlacementError):
        decompose_leading_polytope(fan26.boundary, pos, 6, 2)
    pos[6] = np.array([0.0, 0.0, 1.0])
    with pytest.raises(CorePlacementError):
        decompose_leading_polytope(fan26.boundary, pos, 6, 2)


def test_collinear_leaders_rejected():
    pos = {1: [0, 0, 0], 2: [1, 0, 0], 3: [2, 0, 0], 4: [1, 0, 0]}
    with pytest.raises(DegenerateLeadersError):
        decompose_leading_polytope((1, 2, 3), pos, 4, 2)


def test_3d_decomposition():
    cube = {i + 1: np.array(p, float) for i, p in enumerate(
        [(x, y, z) for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)])}
    cube[9] = np.array([0.1, 0.0, -0.2])
    poly = decompose_leading_polytope(tuple(range(1, 9)), cube, 9, 3)
    assert poly.N_L == 12
    assert all(c[-1] == 9 and len(c) == 4 for c in poly.cells)


def test_validation_report(fan26, net26):
    ref = reference_configuration(net26, fan26.leader_positions)
    rep = validate_network(net26, ref)
    assert rep.passed
    doc = json.loads(rep.to_json())
    assert {c["name"] for c in doc["checks"]} >= {"leader_rank", "leading_cells",
                                                  "follower_arity", "in_neighbor_rank"}
    bad = dict(ref)
    bad[7] = (ref[1] + ref[2]) / 2
    bad[8] = (ref[1] + ref[2]) / 2 + (ref[1] - ref[2])
    rep = validate_network(net26, bad)
    assert not rep.passed
    assert 8 in rep.check("in_neighbor_rank").agents


def test_graph_round_trip(tmp_path, fan26):
    path = tmp_path / "g.json"
    save_graph(path, fan26.graph, fan26.boundary, fan26.core, fan26.n)
    g, boundary, core, n = load_graph(path)
    assert g.edges == fan26.graph.edges
    assert (boundary, core, n) == (fan26.boundary, fan26.core, 2)


def test_graph_file_errors(tmp_path):
    p = tmp_path / "g.json"
    p.write_text("{\n  \"n\": 2,\n")
    with pytest.raises(InvalidInputError, match="line"):
        load_graph(p)
    p.write_text(json.dumps({"n": 2, "boundary": [1, 2, 3], "core": 4}))
    with pytest.raises(InvalidInputError, match="edges"):
        load_graph(p)
    p.write_text(json.dumps({"n": 2, "boundary": [1, 2, 3], "core": 4, "edges": [[1, 6]]}))
    with pytest.raises(InvalidInputError):
        load_graph(p)


@pytest.mark.parametrize("nb, depth, size", [(3, 0, 4), (3, 1, 7), (6, 2, 31), (4, 3, 57)])
def test_fan_sizes(nb, depth, size):
    fan = fan_network(nb, depth)
    net = build_layers(fan.graph, fan.boundary, fan.core, fan.n)
    assert net.N == size
    assert net.M == depth
    assert validate_network(net, fan.reference_positions).passed


def _area(a, b, c):
    return 0.5 * abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))


def test_square_fan_has_four_cells():
    pos = {1: [-1, -1, 0], 2: [1, -1, 0], 3: [1, 1, 0], 4: [-1, 1, 0], 5: [0.2, 0.1, 0]}
    assert decompose_leading_polytope((1, 2, 3, 4), pos, 5, 2).N_L == 4


def test_pentagon_cells_are_congruent(fan26):
    lp = fan26.leader_positions
    poly = decompose_leading_polytope(fan26.boundary, lp, fan26.core, 2)
    areas = [_area(*(lp[v] for v in cell)) for cell in poly.cells]
    # regular polygon area: (n / 2) r^2 sin(2 pi / n)
    assert np.allclose(areas, areas[0])
    assert sum(areas) == pytest.approx(2.5 * 144 * np.sin(2 * np.pi / 5))


def test_arity_failure_names_follower(fan26):
    edges = tuple(e for e in fan26.graph.edges if e != (6, 7))
    net = build_layers(CommGraph(26, edges), fan26.boundary, fan26.core, 2, check_arity=False)
    rep = validate_network(net, fan26.reference_positions)
    assert rep.check("follower_arity").agents == [7]


def test_sparsity_pattern_matches_edges(net26, plan26):
    from covnet.training import build_weight_matrix

    L = build_weight_matrix(net26, plan26.varpi)
    off = {(i + 1, j + 1) for i, j in zip(*np.nonzero(L)) if i != j}
    assert off == {(i, j) for j, i in net26.graph.edges}


def test_single_leader_network():
    from covnet.training import build_weight_matrix

    net = build_layers(CommGraph(1, ()), (), 1, 2)
    assert net.M == 0
    assert build_weight_matrix(net, {}).tolist() == [[-1.0]]
