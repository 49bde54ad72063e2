import itertools
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcbound import cts
from mcbound.cts import (
    MAX_VAR,
    MIN_VAR,
    concrete_step,
    instrument,
    parse,
    render,
    satisfied_by,
    saturate_invariants,
)
from mcbound.errors import (
    ArityMismatch,
    CtsSyntaxError,
    UnknownPoint,
    UnknownTransition,
    UnsatisfiableInvariant,
)
from mcbound.mcgraph import NONSTRICT, STRICT, logical_closure, src, tgt

from oracles import arc_list, holds

FIXTURES = sorted(Path("fixtures").glob("*.cts"))


def test_fig1_parses_to_one_point_and_one_loop():
    text = Path("fixtures/fig1.cts").read_text()
    c = parse(text)
    assert len(c.points) == 1 and len(c.transitions) == 1
    t = c.transitions[0]
    assert (t.source, t.target) == ("f", "f")
    body = [line for line in text.splitlines() if line.startswith("trans")][0].split(":", 2)[2]
    assert len(body.split(",")) == 4
    g = t.graph
    assert g.relation(src(1), src(3)) is STRICT
    assert g.relation(src(2), tgt(1)) is NONSTRICT and g.relation(tgt(1), src(2)) is NONSTRICT
    assert g.relation(src(1), tgt(2)) is STRICT
    assert g.relation(src(3), tgt(3)) is NONSTRICT and g.relation(tgt(3), src(3)) is NONSTRICT


def test_point_without_transitions():
    c = parse("point f(x) initial\n")
    assert c.transitions == ()


def test_fig2_same_sugar_expands():
    c = cts.load("fixtures/fig2.cts")
    g = c.transition("t2").graph
    p = c.point("b")
    N, zero, i, j = (p.index(v) for v in ("N", "0", "i", "j"))
    assert g.relation(src(j), tgt(j)) is STRICT
    for v in (N, zero, i):
        assert g.relation(src(v), tgt(v)) is NONSTRICT and g.relation(tgt(v), src(v)) is NONSTRICT


@pytest.mark.parametrize(
    "text, error",
    [
        ("point f(x) initial\ntrans t: f -> g: x > x'\n", UnknownPoint),
        ("point f(x) initial\ntrans t: f -> f: y > x'\n", CtsSyntaxError),
        ("point f(x)\n", CtsSyntaxError),
        ("point f(x,y) initial\ninvariant f: x > y, y > x\n", UnsatisfiableInvariant),
        ("point f(x) initial\nbogus\n", CtsSyntaxError),
        ("point f(x) initial\ninvariant f: x > x'\n", CtsSyntaxError),
        ("point f(x) initial\ntrans t: f -> f: x >> x'\n", CtsSyntaxError),
        ("point f(x) initial\ntrans t: f -> f: x > x'\ntrans t: f -> f: x > x'\n", CtsSyntaxError),
        ("point f() initial\n", ArityMismatch),
    ],
)
def test_parse_errors(text, error):
    with pytest.raises(error):
        parse(text)


def test_syntax_error_carries_position():
    with pytest.raises(CtsSyntaxError) as e:
        parse("point f(x) initial\ntrans t: f -> f: x >> x'\n")
    assert e.value.line == 2 and e.value.column > 1


@pytest.mark.parametrize("path", FIXTURES, ids=lambda p: p.stem)
def test_render_parse_round_trip(path):
    c = cts.load(path)
    text = render(c)
    again = parse(text)
    assert render(again) == text
    for a, b in zip(c.transitions, again.transitions):
        assert logical_closure(a.graph).key == logical_closure(b.graph).key


def test_render_uses_single_spaces_and_sorted_relations():
    c = parse("point f(a,b) initial\ntrans t: f -> f:   b' < a ,a>b\n")
    assert render(c) == "point f(a,b) initial\ntrans t: f -> f: a > b, a > b'\n"


# -- saturation --------------------------------------------------------------


def test_saturation_without_invariants_only_closes():
    c = cts.load("fixtures/ackermann.cts")
    s = saturate_invariants(c)
    assert [t.label for t in s.transitions] == [t.label for t in c.transitions]
    for a, b in zip(c.transitions, s.transitions):
        assert logical_closure(a.graph).key == b.graph.key
    assert not s.warnings


def test_saturation_drops_unsatisfiable_transition_with_warning():
    c = parse(
        "point f(x1,x2) initial\n"
        "invariant f: x1 < x2\n"
        "trans t: f -> f: x2 <= x1', x1' <= x1\n"
        "trans u: f -> f: x1 = x1'\n"
    )
    s = saturate_invariants(c)
    assert [t.label for t in s.transitions] == ["u"]
    assert any("t" in w and "dropped" in w for w in s.warnings)


def _pairs(g, domain):
    vals = list(itertools.product(domain, repeat=g.n_src))
    out = set()
    for a in vals:
        for b in itertools.product(domain, repeat=g.n_dst):
            if holds(a + b, arc_list(g)):
                out.add((a, b))
    return out


def _inv_ok(p, values):
    return all(values[i - 1] > values[j - 1] if s is STRICT else values[i - 1] >= values[j - 1] for i, j, s in p.invariant)


@pytest.mark.parametrize("name", ["fig2", "fig3", "min"])
def test_saturation_keeps_satisfying_pairs(name):
    # restricted to invariant-respecting states, the transition relation is unchanged
    c = cts.load(f"fixtures/{name}.cts")
    s = saturate_invariants(c)
    by_id = c.point_map
    domain = range(3)
    for t in c.transitions:
        kept = {u.label: u for u in s.transitions}.get(t.label)
        before = {
            (a, b)
            for a, b in _pairs(t.graph, domain)
            if _inv_ok(by_id[t.source], a) and _inv_ok(by_id[t.target], b)
        }
        after = _pairs(kept.graph, domain) if kept else set()
        assert before == after


# -- instrumentation ---------------------------------------------------------


def test_instrument_adds_two_variables_everywhere():
    c = cts.load("fixtures/fig2.cts")
    ic = instrument(c).cts
    for p in c.points:
        q = ic.point(p.id)
        assert q.arity == p.arity + 2
        assert q.var_names[-2:] == (MAX_VAR, MIN_VAR)
        assert not q.initial
    assert [p.id for p in ic.initial] == ["$init"]


def test_instrument_without_transitions_copies_initial_points():
    c = parse("point a(x) initial\npoint b(x,y) initial\npoint c(x)\n")
    ic = instrument(c).cts
    assert sorted(t.label for t in ic.transitions) == ["init->a", "init->b"]


def test_instrument_fig2_initial_invariant():
    ic = instrument(cts.load("fixtures/fig2.cts"))
    f0 = ic.cts.point(ic.init_point)
    inv = logical_closure(f0.invariant_graph())
    mx, mn = f0.index(MAX_VAR), f0.index(MIN_VAR)
    for name in ("N", "0", "i", "j"):
        v = f0.index(name)
        assert inv.relation(src(mx), src(v)) is NONSTRICT
        assert inv.relation(src(v), src(mn)) is NONSTRICT


def test_instrument_keeps_extremes_constant():
    ic = instrument(cts.load("fixtures/fig3.cts"))
    for t in ic.cts.transitions:
        g = t.graph
        for a, b in ((g.n_src - 1, g.n_dst - 1), (g.n_src, g.n_dst)):
            assert g.relation(src(a), tgt(b)) is NONSTRICT and g.relation(tgt(b), src(a)) is NONSTRICT


def _runs(c, starts, domain, length):
    """All label sequences of exactly ``length`` steps from the given states."""
    frontier = {(s, ()) for s in starts}
    for _ in range(length):
        nxt = set()
        for state, labels in frontier:
            for t in c.outgoing(state[0]):
                for succ in concrete_step(c, state, t.label, domain):
                    nxt.add((succ, labels + (t.label,)))
        frontier = nxt
    return {(s[0], s[1], labels) for s, labels in frontier}


@pytest.mark.parametrize("name", ["fig1", "fig3"])
def test_instrument_preserves_runs(name):
    c = cts.load(f"fixtures/{name}.cts")
    ic = instrument(c)
    domain = range(3)
    init = [(p.id, v) for p in c.initial for v in itertools.product(domain, repeat=p.arity)]
    for length in (1, 2):
        plain = _runs(c, init, domain, length)
        lifted = set()
        for v in itertools.product(domain, repeat=ic.original_arity):
            start = (ic.init_point, v + (max(v), min(v)))
            for pid, values, labels in _runs(ic.cts, [start], domain, length + 1):
                assert values[-2:] == (max(v), min(v))
                lifted.add((pid, values[:-2], labels[1:]))
        assert plain == lifted


# -- concrete semantics ------------------------------------------------------


def test_concrete_step_identity():
    c = parse("point f(x,y) initial\ntrans t: f -> f: same(x,y)\n")
    assert concrete_step(c, ("f", (1, 2)), "t", range(4)) == {("f", (1, 2))}


def test_concrete_step_fig1():
    c = cts.load("fixtures/fig1.cts")
    out = concrete_step(c, ("f", (3, 2, 0)), "t1", range(4))
    assert out == {("f", (2, 0, 0)), ("f", (2, 1, 0)), ("f", (2, 2, 0))}


def test_concrete_step_blocked_guard():
    c = cts.load("fixtures/fig1.cts")
    assert concrete_step(c, ("f", (1, 1, 1)), "t1", range(4)) == set()


def test_concrete_step_unknown_label():
    c = cts.load("fixtures/fig1.cts")
    with pytest.raises(UnknownTransition):
        concrete_step(c, ("f", (1, 1, 1)), "nope", range(4))


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(["fig1", "fig2", "fig3", "ackermann"]), st.data())
def test_concrete_step_matches_filter(name, data):
    c = cts.load(f"fixtures/{name}.cts")
    t = data.draw(st.sampled_from(c.transitions))
    n = c.point(t.source).arity
    values = tuple(data.draw(st.lists(st.integers(0, 3), min_size=n, max_size=n)))
    m = c.point(t.target).arity
    expected = {
        (t.target, b) for b in itertools.product(range(4), repeat=m) if satisfied_by(t.graph, values, b)
    }
    assert concrete_step(c, (t.source, values), t.label, range(4)) == expected
