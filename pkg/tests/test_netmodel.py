import json
import math
from collections import deque

import pytest
from hypothesis import given, settings, strategies as st

from mpcqkd import netmodel
from mpcqkd.errors import InvalidInput, ParseError, SchemaVersionError
from mpcqkd.netmodel import CscEdge, DemandSet, InstanceSpec, Network


def bfs_connected(net):
    adj = {i: set() for i in range(net.n_nodes)}
    for u, v, _ in net.c2c_edges:
        adj[u].add(v)
        adj[v].add(u)
    seen, todo = {0}, deque([0])
    while todo:
        for v in adj[todo.popleft()] - seen:
            seen.add(v)
            todo.append(v)
    return len(seen) == net.n_nodes


def brute_csc(net):
    """Every (u, p, v) with u < v and links u-p, p-v, by scanning all triples."""
    links = {(u, v) for u, v, _ in net.c2c_edges}
    links |= {(v, u) for u, v in links}
    return {(u, p, v) for u in range(net.n_nodes) for p in range(net.n_nodes)
            for v in range(u + 1, net.n_nodes)
            if p not in (u, v) and (u, p) in links and (p, v) in links}


def test_generate_ten_nodes_has_fifteen_edges_and_is_connected():
    net = netmodel.generate_network(InstanceSpec(n_nodes=10, edge_factor=1.5, seed=7))
    assert len(net.c2c_edges) == 15
    assert bfs_connected(net)


def test_generation_is_byte_deterministic():
    spec = InstanceSpec(n_nodes=10, edge_factor=1.5, seed=7)
    a = netmodel.dumps(netmodel.generate_network(spec))
    b = netmodel.dumps(netmodel.generate_network(spec))
    assert a == b


def test_three_node_path_has_single_csc_edge():
    net = Network(3, ((0, 1, 10.0), (1, 2, 20.0)))
    assert [e.key for e in net.csc_edges] == [(0, 1, 2)]
    assert net.csc_edges[0].len_up_km == 10.0 and net.csc_edges[0].len_pv_km == 20.0


def test_triangle_csc_edges():
    net = Network(3, ((0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)))
    assert {e.key for e in net.csc_edges} == {(0, 1, 2), (0, 2, 1), (1, 0, 2)}


def test_star_csc_edges_all_through_center():
    net = Network(4, ((0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0)))
    assert len(net.csc_edges) == 3
    assert all(e.p == 0 for e in net.csc_edges)


def test_single_edge_has_no_csc():
    assert Network(2, ((0, 1, 5.0),)).csc_edges == ()


@pytest.mark.parametrize("edges, msg", [
    (((0, 0, 1.0),), "self-loop"),
    (((0, 1, 1.0), (1, 0, 2.0)), "duplicate"),
    (((0, 1, -1.0),), "positive"),
    (((0, 5, 1.0),), "unknown node"),
])
def test_network_rejects_bad_edges(edges, msg):
    with pytest.raises(InvalidInput, match=msg):
        Network(3, edges)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(3, 14), factor=st.floats(1.0, 2.5), seed=st.integers(0, 2**64 - 1))
def test_generated_networks_connected_with_exact_edge_count(n, factor, seed):
    spec = InstanceSpec(n_nodes=n, edge_factor=factor, seed=seed)
    if not n - 1 <= spec.n_edges <= n * (n - 1) // 2:
        with pytest.raises(InvalidInput):
            netmodel.generate_network(spec)
        return
    net = netmodel.generate_network(spec)
    assert len(net.c2c_edges) == spec.n_edges == int(math.floor(factor * n + 0.5))
    assert bfs_connected(net)
    lo, hi = spec.length_range_km
    assert all(lo <= L <= hi for _, _, L in net.c2c_edges)
    # csc set is exactly the derivable one, and its lengths come from the links
    assert {e.key for e in net.csc_edges} == brute_csc(net)
    for e in net.csc_edges:
        assert e.len_up_km == net.length(e.u, e.p) and e.len_pv_km == net.length(e.p, e.v)
    assert netmodel.enumerate_csc(n, net.c2c_edges) == list(net.csc_edges)
    degs = [net.degree(p) for p in range(n)]
    assert len(net.csc_edges) == sum(d * (d - 1) // 2 for d in degs)


def test_edge_count_infeasible_rejected():
    with pytest.raises(InvalidInput):
        netmodel.generate_network(InstanceSpec(n_nodes=4, edge_factor=0.5))
    with pytest.raises(InvalidInput):
        netmodel.generate_network(InstanceSpec(n_nodes=4, edge_factor=3.0))


def test_demands_fifteen_nodes():
    spec = InstanceSpec(n_nodes=15, seed=3)
    net = netmodel.generate_network(spec)
    dem = netmodel.generate_demands(net, spec)
    sources = {s for s, _ in dem.pairs()}
    assert len(sources) == 5
    for s in sources:
        assert len([t for a, t in dem.pairs() if a == s]) == 3
    assert len(dem) == 15
    assert all(100 <= d <= 300 for _, d in dem.items())
    assert all(s != t for s, t in dem.pairs())
    assert netmodel.generate_demands(net, spec) == dem


def test_demand_validation():
    with pytest.raises(InvalidInput):
        DemandSet({(1, 1): 5.0})
    with pytest.raises(InvalidInput):
        DemandSet({(0, 1): 0.0})


@pytest.mark.parametrize("n, expected", [(10, (8, 4)), (2, (0, 0)), (5, (3, 1))])
def test_linear_strong_relay_counts(n, expected):
    assert netmodel.linear_strong_relay_counts(n) == expected


def test_linear_strong_relay_counts_rejects_short_chain():
    with pytest.raises(InvalidInput):
        netmodel.linear_strong_relay_counts(1)


def test_roundtrip_is_bytewise_identity(tmp_path):
    spec = InstanceSpec(n_nodes=8, seed=11)
    net = netmodel.generate_network(spec)
    dem = netmodel.generate_demands(net, spec)
    path = tmp_path / "net.json"
    netmodel.save(path, net, dem, seed=11)
    text = path.read_text()
    net2, dem2, seed = netmodel.load(path)
    assert (net2, dem2, seed) == (net, dem, 11)
    assert netmodel.dumps(net2, dem2, seed) == text


def test_missing_nodes_key_is_named():
    doc = json.loads(netmodel.dumps(Network(2, ((0, 1, 1.0),))))
    del doc["nodes"]
    with pytest.raises(ParseError, match="nodes"):
        netmodel.from_document(doc)


def test_unknown_schema_version():
    doc = json.loads(netmodel.dumps(Network(2, ((0, 1, 1.0),))))
    doc["version"] = 99
    with pytest.raises(SchemaVersionError, match="version"):
        netmodel.from_document(doc)


def test_malformed_json_reports_location():
    with pytest.raises(ParseError) as info:
        netmodel.loads('{"version": 1,')
    assert "line 1" in info.value.location


def test_csc_edge_orientations():
    e = CscEdge(0, 1, 2, 1.0, 2.0)
    assert e.oriented() == ((0, 1, 2), (2, 1, 0))
