import pytest

from mcbound import cts
from mcbound.closure import (
    check_fixpoint,
    compute_closure,
    idempotents_at,
    is_idempotent,
    replay,
    restrict,
    strongly_connected,
)
from mcbound.cts import instrument, parse
from mcbound.elaborate import elaborate
from mcbound.errors import Explosion
from mcbound.mcgraph import NONSTRICT, STRICT, McGraph, compose, is_satisfiable, src, tgt


def _ec(name):
    return elaborate(instrument(cts.load(f"fixtures/{name}.cts")))


@pytest.mark.parametrize("name", ["fig1", "fig3", "min"])
@pytest.mark.parametrize("scc_local", [False, True])
def test_closure_is_a_fixpoint(name, scc_local):
    cs = compute_closure(_ec(name), scc_local=scc_local)
    assert len(cs) > 0
    assert check_fixpoint(cs) is None


@pytest.mark.parametrize("name", ["fig1", "fig3", "min"])
def test_witnesses_replay(name):
    ec = _ec(name)
    cs = compute_closure(ec)
    for e in cs:
        assert replay(ec, e.witness).key == e.mc.key
        assert is_satisfiable(e.mc)


def test_witnesses_are_shortest():
    ec = _ec("fig3")
    cs = compute_closure(ec)
    by_len = {}
    for e in cs:
        by_len.setdefault(len(e.witness), set()).add(e.mc.key)
    # brute force: every multipath of length k collapses to something already
    # witnessed by a path of length <= k
    out = {}
    for t in ec.cts.transitions:
        out.setdefault(t.source, []).append(t.label)
    frontier = [(l,) for ls in out.values() for l in ls]
    known = set()
    for k in range(1, 4):
        nxt = []
        for path in frontier:
            g = replay(ec, path)
            if not is_satisfiable(g):
                continue
            if g.key not in known:
                assert g.key in by_len.get(k, set())
            known.add(g.key)
            nxt.extend(path + (l,) for l in out.get(g.target, ()))
        frontier = nxt
        assert {key for key in by_len.get(k, set())} <= known


def test_scc_local_keeps_cyclic_elements():
    ec = _ec("fig2")
    full = compute_closure(ec)
    local = compute_closure(ec, scc_local=True)
    cyc_full = {e.mc.key for e in full if e.mc.is_cyclic}
    cyc_local = {e.mc.key for e in local if e.mc.is_cyclic}
    assert cyc_full == cyc_local
    assert len(local) < len(full)


def test_closure_cap():
    with pytest.raises(Explosion):
        compute_closure(_ec("fig2"), max_elements=20)


def test_strongly_connected():
    c = parse(
        "point a(x) initial\npoint b(x)\npoint c(x)\n"
        "trans t1: a -> b: x > x'\ntrans t2: b -> a: x > x'\ntrans t3: b -> c: x > x'\n"
    )
    scc = strongly_connected(c)
    assert scc["a"] == scc["b"] != scc["c"]


def test_strongly_connected_chain_all_distinct():
    c = parse("point a(x) initial\npoint b(x)\npoint c(x)\ntrans t1: a -> b: x > x'\ntrans t2: b -> c: x > x'\n")
    assert len(set(strongly_connected(c).values())) == 3


def test_idempotence():
    g = McGraph.from_arcs("f", "f", 1, 1, [(src(1), tgt(1), STRICT)])
    assert is_idempotent(g)
    swap = McGraph.from_arcs("f", "f", 2, 2, [(src(1), tgt(2), STRICT), (src(2), tgt(1), STRICT)])
    assert not is_idempotent(swap)
    assert is_idempotent(compose(swap, swap))
    across = McGraph.from_arcs("f", "g", 1, 1, [(src(1), tgt(1), STRICT)])
    assert not is_idempotent(across)


def test_idempotents_at_loop_header():
    ec = _ec("fig1")
    cs = compute_closure(ec, scc_local=True)
    for pid in ec.points:
        for e in idempotents_at(cs, pid):
            assert compose(e.mc, e.mc).key == e.mc.key


def test_restrict():
    g = McGraph.from_arcs(
        "f", "f", 3, 3, [(src(1), tgt(1), STRICT), (src(3), tgt(3), NONSTRICT), (src(1), src(2), STRICT)]
    )
    r = restrict(g, [1, 3])
    assert r.n_src == r.n_dst == 2
    assert r.relation(src(1), tgt(1)) is STRICT
    assert r.relation(src(2), tgt(2)) is NONSTRICT
    assert r.relation(src(1), src(2)) is None
