import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from conftest import AuctionBuilder, addr, mint, paid, sale, stream, transfer
from nftforensics import _kernels
from nftforensics.graphs import UserGraph, build_graphs, scc, wcc, write_edge_list

KERNELS = [pytest.param(_kernels.numpy_kernels, id="numpy")]
if _kernels.numba_kernels is not None:
    KERNELS.append(pytest.param(_kernels.numba_kernels, id="numba"))


@pytest.fixture(params=KERNELS)
def kernels(request, monkeypatch):
    monkeypatch.setattr(_kernels, "active", request.param)
    return request.param


def graph(n, edges):
    names = [f"n{i:02d}" for i in range(n)]
    return UserGraph.from_pairs("test", [(names[a], names[b]) for a, b in edges], nodes=names), names


def as_index_partition(ci, names):
    pos = {u: i for i, u in enumerate(names)}
    return {frozenset(pos[u] for u in m) for m in ci.members}


def random_digraph(rng, max_nodes=12, max_edges=30):
    n = rng.randint(1, max_nodes)
    m = rng.randint(0, max_edges)
    return n, [(rng.randrange(n), rng.randrange(n)) for _ in range(m)]


# ------------------------------------------------------------------- build

def test_empty_stream_gives_empty_graphs():
    g = build_graphs(stream())
    assert len(g.sales) == len(g.payments) == len(g.transfers) == len(g.bids.edges) == 0


def test_edge_counting_contract():
    b = AuctionBuilder()
    bid = b.bid("x", 5)
    evs = [sale("a", "b", 1), sale("b", "c", 2), paid("a", "c", 3), transfer("c", "a", 4), b.events[0], bid]
    g = build_graphs(stream(evs))
    assert (len(g.sales), len(g.payments), len(g.transfers)) == (2, 1, 1)
    assert [e[2] for e in g.bids.edges] == ["auction", "bid"]


def test_bid_graph_is_bipartite():
    b = AuctionBuilder()
    b.bid("x", 2)
    b.cancel("x", 2)
    b.bid("y", 3)
    b.win("y", 3)
    g = build_graphs(stream(b.end().events)).bids
    assert {e[0] for e in g.edges} <= set(g.users)
    assert {e[1] for e in g.edges} <= set(g.assets)
    assert not set(g.users) & set(g.assets)
    assert sorted(e[2] for e in g.edges) == ["auction", "bid", "bid", "cancel_bid", "win"]


def test_mint_and_auction_end_make_no_edges():
    g = build_graphs(stream(mint("a", 1), AuctionBuilder().end().events[1:]))
    assert len(g.sales) == len(g.payments) == len(g.transfers) == len(g.bids.edges) == 0


def test_multiplicity_of_parallel_sales():
    g = build_graphs(stream([sale("u1", "u2", t) for t in range(10)])).sales
    assert g.multiplicity(addr("u1"), addr("u2")) == 10
    assert g.multiplicity(addr("u2"), addr("u1")) == 0


# ------------------------------------------------------------- components

def test_two_cycle_is_one_scc(kernels):
    g, names = graph(2, [(0, 1), (1, 0)])
    assert scc(g).partition() == {frozenset(names)}


def test_chain_is_singletons(kernels):
    g, names = graph(3, [(0, 1), (1, 2)])
    assert len(scc(g)) == 3


def test_wcc_ignores_direction(kernels):
    g, names = graph(3, [(0, 1), (2, 1)])
    assert wcc(g).partition() == {frozenset(names)}


def test_wcc_isolated_nodes(kernels):
    g, names = graph(2, [])
    assert len(wcc(g)) == 2


def test_random_digraphs_match_oracles(kernels):
    rng = random.Random(7)
    for _ in range(300):
        n, edges = random_digraph(rng)
        g, names = graph(n, edges)
        assert as_index_partition(scc(g), names) == oracles.scc_partition(n, edges)
        assert as_index_partition(wcc(g), names) == oracles.wcc_partition(n, edges)


def test_hub_exclusion_removes_high_degree_nodes(kernels):
    # hub 0 connects 1..5; 6-7 linked directly
    edges = [(0, i) for i in range(1, 6)] + [(6, 7)]
    g, names = graph(8, edges)
    ci = wcc(g, hub_degree=4)
    assert ci.excluded == (names[0],)
    assert ci.component_of(names[0]) is None
    assert len(ci) == 6
    assert wcc(g, hub_degree=5).excluded == ()


def test_hub_degree_counts_distinct_neighbours():
    g, names = graph(3, [(0, 1)] * 5 + [(1, 0), (0, 0)])
    assert g.undirected_degree().tolist() == [1, 1, 0]


def test_component_ids_follow_smallest_member(kernels):
    g, names = graph(4, [(3, 2), (2, 3), (1, 0)])
    ci = wcc(g)
    assert ci.members == ((names[0], names[1]), (names[2], names[3]))


def test_pair_multiplicity_inside_scc():
    g, names = graph(3, [(0, 1), (0, 1), (1, 0), (1, 2)])
    ci = scc(g)
    assert ci.pair_multiplicity == {(names[0], names[1]): 2, (names[1], names[0]): 1}


def test_kernel_paths_agree_on_random_inputs():
    if _kernels.numba_kernels is None:
        pytest.skip("numba unavailable")
    rng = np.random.default_rng(3)
    for _ in range(50):
        n = int(rng.integers(1, 60))
        m = int(rng.integers(0, 150))
        src, dst = rng.integers(0, n, m), rng.integers(0, n, m)
        keep = rng.random(n) > 0.1
        assert np.array_equal(_kernels.numpy_kernels.wcc_labels(n, src, dst, keep),
                              _kernels.numba_kernels.wcc_labels(n, src, dst, keep))
        g = UserGraph.from_pairs("t", list(zip(src.tolist(), dst.tolist())), nodes=range(n))
        indptr, idx = g.csr()
        a = np.asarray(_kernels.numpy_kernels.scc_labels(n, indptr, idx))
        b = np.asarray(_kernels.numba_kernels.scc_labels(n, indptr, idx))
        assert {frozenset(np.flatnonzero(a == v)) for v in set(a)} == \
               {frozenset(np.flatnonzero(b == v)) for v in set(b)}


# -------------------------------------------------------------- properties

edge_lists = st.integers(1, 10).flatmap(
    lambda n: st.tuples(st.just(n), st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=25)))


@given(edge_lists)
def test_scc_refines_wcc(ne):
    n, edges = ne
    g, _ = graph(n, edges)
    s, w = scc(g), wcc(g)
    for m in s.members:
        assert len({w.component_of(u) for u in m}) == 1


@given(edge_lists, st.tuples(st.integers(0, 9), st.integers(0, 9)))
def test_adding_edge_is_monotone(ne, extra):
    n, edges = ne
    a, b = extra[0] % n, extra[1] % n
    g1, _ = graph(n, edges)
    g2, _ = graph(n, edges + [(a, b)])
    assert len(wcc(g2)) <= len(wcc(g1))
    p2 = scc(g2)
    for m in scc(g1).members:
        assert len({p2.component_of(u) for u in m}) == 1


@given(edge_lists, st.randoms(use_true_random=False))
def test_components_independent_of_insertion_order(ne, rnd):
    n, edges = ne
    names = [f"n{i:02d}" for i in range(n)]
    shuffled_edges = edges[:]
    rnd.shuffle(shuffled_edges)
    shuffled_nodes = names[:]
    rnd.shuffle(shuffled_nodes)
    g1 = UserGraph.from_pairs("t", [(names[a], names[b]) for a, b in edges], nodes=names)
    g2 = UserGraph.from_pairs("t", [(names[a], names[b]) for a, b in shuffled_edges], nodes=shuffled_nodes)
    assert scc(g1).members == scc(g2).members
    assert wcc(g1).members == wcc(g2).members


def test_write_edge_list(tmp_path):
    g = build_graphs(stream(sale("a", "b", 1), sale("b", "a", 2)))
    path = tmp_path / "gs.tsv"
    write_edge_list(g.sales, path)
    rows = path.read_text().splitlines()
    assert len(rows) == 2
    assert rows[0].split("\t")[:2] == [addr("a"), addr("b")]
