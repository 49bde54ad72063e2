import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcbound import cts
from mcbound.cts import parse
from mcbound.errors import InconsistentCertificate, NoBound
from mcbound.mcgraph import NONSTRICT, STRICT, McGraph, Multipath, logical_closure, n_satisfiable, src, tgt
from mcbound.rbound import (
    ASCENDING,
    DESCENDING,
    ConsistentSet,
    LevelPartition,
    build_witness_multipath,
    consistent_at,
    degree_table,
    emit_ranking,
    eta,
    max_degree,
    rb_exists,
    rbd,
    truncate,
    verify_certificate,
)
from mcbound.termination import prepare

from oracles import arc_list

DEGREES = {
    "fig1": {"f": 1},
    "fig2": {"w": 2, "b": 2},
    "fig3": {"w": 1, "i": 1},
    "fig4": {"start": 0, "W": 1},
    "min": {"W": 1},
    "path_sensitive2": {"A": 0, "B": 1, "C": 1},
}


@pytest.mark.parametrize("name", sorted(DEGREES))
def test_degree_tables(name):
    table = degree_table(cts.load(f"fixtures/{name}.cts"))
    assert {p: r.degree for p, r in table.items()} == DEGREES[name]


def test_ackermann_has_no_bound():
    c = cts.load("fixtures/ackermann.cts")
    assert not rb_exists(c, "ack")
    with pytest.raises(NoBound):
        max_degree(c, "ack")
    assert degree_table(c) == {"ack": None}


def test_unknown_point():
    with pytest.raises(KeyError):
        max_degree(cts.load("fixtures/fig1.cts"), "nowhere")


@pytest.mark.parametrize(
    "name, point, text",
    [
        ("fig1", "f", "<(x.y - $min)>"),
        ("fig2", "w", "<(i - $min), (j - $min)>"),
        ("path_sensitive2", "B", "<($max - x)>"),
    ],
)
def test_rankings(name, point, text):
    assert str(max_degree(cts.load(f"fixtures/{name}.cts"), point).ranking) == text


def test_rbd_is_monotone_in_k():
    an = prepare(cts.load("fixtures/fig2.cts"))
    assert [rbd(an, "w", k) for k in range(0, 5)] == [True, True, True, False, False]


def test_truncation_keeps_consistency():
    r = max_degree(cts.load("fixtures/fig2.cts"), "w")
    for k in range(1, r.degree + 1):
        lp, cs = truncate(r.partition, r.certificate, k)
        assert lp.depth == k
        verify_certificate(lp, cs)
    with pytest.raises(ValueError):
        truncate(r.partition, r.certificate, r.degree + 1)


def test_level_partition_validation():
    LevelPartition(3, ((1, 1), (2, 3)), (1, 2), (-1, -1, 1)).validate()
    for bad in [
        LevelPartition(3, ((1, 1), (3, 3)), (1, 2), (-1, -1, 1)),
        LevelPartition(3, ((1, 1), (2, 3)), (1, 1), (-1, -1, 1)),
        LevelPartition(3, ((1, 1), (2, 3)), (1, 3), (-1, -1, 1)),
        LevelPartition(3, ((1, 3),), (1,), (-1, 0, 1)),
    ]:
        with pytest.raises(InconsistentCertificate):
            bad.validate()


def test_from_levels_groups_runs():
    lp = LevelPartition.from_levels([2, 2, 1, 2], [-1] * 4)
    assert lp.intervals == ((1, 2), (3, 3), (4, 4)) and lp.levels == (2, 1, 2)


def _mc(n, arcs):
    return logical_closure(McGraph.from_arcs("f", "f", n, n, arcs))


def test_consistency_conditions():
    lp = LevelPartition(2, ((1, 1), (2, 2)), (1, 2), (DESCENDING, DESCENDING))
    inner = _mc(2, [(src(1), tgt(1), STRICT), (src(2), tgt(2), NONSTRICT)])
    outer_reset = _mc(2, [(src(2), tgt(2), STRICT)])
    assert consistent_at(inner, lp, 1)
    assert not consistent_at(inner, lp, 2)  # nothing strict at level 2
    assert consistent_at(outer_reset, lp, 2)  # x1 disconnected below
    assert not consistent_at(_mc(2, [(src(1), tgt(1), STRICT), (src(2), tgt(2), STRICT)]), lp, 2)
    up = LevelPartition(1, ((1, 1),), (1,), (ASCENDING,))
    assert consistent_at(_mc(1, [(tgt(1), src(1), STRICT)]), up, 1)
    assert not consistent_at(_mc(1, [(src(1), tgt(1), STRICT)]), up, 1)


def test_ranking_check_rejects_non_decreasing_component():
    lp = LevelPartition(1, ((1, 1),), (1,), (DESCENDING,))
    with pytest.raises(InconsistentCertificate):
        emit_ranking(lp, ("x",), ConsistentSet((_mc(1, [(src(1), tgt(1), NONSTRICT)]),), ((),)))
    r = emit_ranking(lp, ("x",), ConsistentSet((_mc(1, [(src(1), tgt(1), STRICT)]),), (("t",),)))
    assert str(r) == "<(x - $min)>"


def test_eta():
    assert [eta(t, 2, 3) for t in range(1, 8)] == [1, 2, 1, 3, 1, 2, 1]
    assert [eta(t, 3, 2) for t in range(1, 9)] == [1, 1, 2, 1, 1, 2, 1, 1]
    assert eta(8, 2, 2) == 2


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 200), st.integers(2, 5), st.integers(1, 4))
def test_eta_matches_definition(t, b, depth):
    expect = max(h for h in range(1, depth + 1) if t % b ** (h - 1) == 0)
    assert eta(t, b, depth) == expect


@pytest.mark.parametrize("name, point", [("fig1", "f"), ("fig2", "w"), ("fig3", "i"), ("min", "W")])
def test_witness_multipath_lengths(name, point):
    r = max_degree(cts.load(f"fixtures/{name}.cts"), point)
    n = r.partition.n
    for big_n in (n, 2 * n, 4 * n):
        m = build_witness_multipath(r.partition, r.certificate, big_n)
        assert len(m) == (big_n // n) ** r.degree - 1
        if len(m):
            assert n_satisfiable(m, big_n, (0, n), (0, 1))


def test_witness_multipath_rejects_small_n():
    r = max_degree(cts.load("fixtures/fig1.cts"), "f")
    with pytest.raises(ValueError):
        build_witness_multipath(r.partition, r.certificate, r.partition.n - 1)


def _brute_n_satisfiable(m, big_n):
    """Some run of ``m`` with x1 = 0 and x3 = N at the start, all values in [0, N]."""
    layer = {v for v in itertools.product(range(big_n + 1), repeat=3) if v[0] == 0 and v[2] == big_n}
    for g in m.steps:
        arcs = arc_list(g)
        layer = {
            b
            for a in layer
            for b in itertools.product(range(big_n + 1), repeat=3)
            if all(((a + b)[u] > (a + b)[v]) if s else ((a + b)[u] >= (a + b)[v]) for u, v, s in arcs)
        }
    return bool(layer)


def test_witness_multipath_small_certificate_against_brute_force():
    # x2 descends strictly between the constants x1 = min and x3 = max
    lp = LevelPartition(3, ((1, 3),), (1,), (DESCENDING,) * 3)
    g = McGraph.from_arcs(
        "f", "f", 3, 3,
        [(src(1), tgt(1), NONSTRICT), (tgt(1), src(1), NONSTRICT),
         (src(3), tgt(3), NONSTRICT), (tgt(3), src(3), NONSTRICT),
         (src(2), tgt(2), STRICT), (src(3), src(2), STRICT), (src(2), src(1), STRICT),
         (tgt(3), tgt(2), STRICT), (tgt(2), tgt(1), STRICT)],
    )
    cs = ConsistentSet((logical_closure(g),), (("t",),))
    assert len(build_witness_multipath(lp, cs, 3)) == 0
    for big_n in (6, 9, 12):
        m = build_witness_multipath(lp, cs, big_n)
        assert len(m) == big_n // 3 - 1
        assert _brute_n_satisfiable(m, big_n)
    # the same descent repeated N - 1 times cannot fit
    too_long = Multipath.of([logical_closure(g)] * 5)
    assert not _brute_n_satisfiable(too_long, 6)
    assert not n_satisfiable(too_long, 6, (0, 3), (0, 1))


def test_empty_system_degree_zero():
    assert max_degree(parse("point f(x) initial\n"), "f").degree == 0


def test_variants_reported():
    r = max_degree(cts.load("fixtures/fig2.cts"), "w")
    assert r.variants and r.witness_point.startswith("w@")
    assert max(v.degree for v in r.variants) == r.degree
