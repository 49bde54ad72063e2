"""Termination and bounded termination via idempotent closure elements."""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

from .closure import (
    DEFAULT_MAX_ELEMENTS,
    ClosureElement,
    ClosureSet,
    compute_closure,
    idempotents_at,
    is_idempotent,
    replay,
    restrict,
)
from .cts import Cts, InstrumentedCts, instrument, saturate_invariants
from .elaborate import ElaboratedCts, bounded_variables, elaborate
from .errors import Explosion, NotIdempotent
from .mcgraph import NONSTRICT, STRICT, McGraph, Side, VarNode, logical_closure, src, tgt


@dataclass(frozen=True)
class Analysis:
    """Every artifact of the pipeline saturate -> instrument -> elaborate -> closure."""

    original: Cts
    instrumented: InstrumentedCts
    elaborated: ElaboratedCts
    bounded: dict[str, frozenset[int]]
    closure: ClosureSet

    @property
    def max_arity(self) -> int:
        return max(p.arity for p in self.elaborated.points.values())

    @property
    def point_count(self) -> int:
        return len(self.elaborated.points)


def prepare(
    c: Cts,
    max_points: int | None = None,
    max_elements: int = DEFAULT_MAX_ELEMENTS,
) -> Analysis:
    return _prepare(c, max_points, max_elements)


@lru_cache(maxsize=16)
def _prepare(c: Cts, max_points: int | None, max_elements: int) -> Analysis:
    ic, ec = _elaborated(c, max_points)
    cs = compute_closure(ec, max_elements, scc_local=True)
    return Analysis(c, ic, ec, bounded_variables(ec), cs)


def clear_caches() -> None:
    """Forget memoised analyses, e.g. before timing one from scratch."""
    _prepare.cache_clear()
    _elaborated.cache_clear()


@lru_cache(maxsize=16)
def _elaborated(c: Cts, max_points: int | None) -> tuple[InstrumentedCts, ElaboratedCts]:
    ic = instrument(saturate_invariants(c))
    ic = InstrumentedCts(
        saturate_invariants(ic.cts), ic.max_index, ic.min_index, ic.init_point, ic.original_arity
    )
    return ic, elaborate(ic, max_points)


# ---------------------------------------------------------------------------
# per-loop test


def omega_satisfiable(
    g: McGraph,
    bounded_down: Iterable[int] = (),
    bounded_up: Iterable[int] = (),
    check: bool = True,
) -> bool:
    """Whether the infinite power g g g ... of an idempotent ``g`` has an integer solution.

    It has none exactly when some thread is squeezed: a non-increasing
    thread i sits at or above a non-decreasing thread j and one of the two
    moves strictly, or a strictly moving thread runs into its known bound.
    """
    g = logical_closure(g)
    if check and not is_idempotent(g):
        raise NotIdempotent(f"{g.source} -> {g.target} is not idempotent")
    return _collision(g, frozenset(bounded_down), frozenset(bounded_up)) is None


def _collision(g: McGraph, bounded_down: frozenset[int], bounded_up: frozenset[int]):
    if bounded_down or bounded_up:
        g = _with_bounds(g, bounded_down, bounded_up)
    g = _stationary(g)
    n = g.n_src
    down = [g.relation(src(i), tgt(i)) for i in range(1, n + 1)]
    up = [g.relation(tgt(i), src(i)) for i in range(1, n + 1)]
    for i in range(n):
        if down[i] is None:
            continue
        for j in range(n):
            if up[j] is None or (down[i] is not STRICT and up[j] is not STRICT):
                continue
            if i == j or g.relation(src(i + 1), src(j + 1)) is not None:
                return ("squeeze", i + 1, j + 1)
    return None


def _stationary(g: McGraph) -> McGraph:
    """Close ``g`` under copying arcs inside one layer to the other layer.

    Every inner layer of the infinite power is the target of one copy and the
    source of the next, and dropping the first layer keeps a solution one.
    """
    while True:
        arcs = [(a.tail, a.head, a.strictness) for a in g.iter_arcs()]
        mirror = [
            (VarNode(Side(1 - u.side), u.index), VarNode(Side(1 - v.side), v.index), s)
            for u, v, s in arcs
            if u.side == v.side
        ]
        h = logical_closure(McGraph.from_arcs(g.source, g.target, g.n_src, g.n_dst, arcs + mirror))
        if h.key == g.key:
            return h
        g = h


def _with_bounds(g: McGraph, bounded_down: frozenset[int], bounded_up: frozenset[int]) -> McGraph:
    """Append a constant floor below ``bounded_down`` and a constant ceiling above ``bounded_up``."""
    n = g.n_src
    floor, ceil = n + 1, n + 2
    arcs = [(a.tail, a.head, a.strictness) for a in g.iter_arcs()]
    for c in (floor, ceil):
        arcs += [(src(c), tgt(c), NONSTRICT), (tgt(c), src(c), NONSTRICT)]
    for i in bounded_down:
        arcs += [(src(i), src(floor), NONSTRICT), (tgt(i), tgt(floor), NONSTRICT)]
    for i in bounded_up:
        arcs += [(src(ceil), src(i), NONSTRICT), (tgt(ceil), tgt(i), NONSTRICT)]
    return logical_closure(McGraph.from_arcs(g.source, g.target, n + 2, n + 2, arcs))


def linear_solution(
    g: McGraph,
    bounded_down: Iterable[int] = (),
    bounded_up: Iterable[int] = (),
    rates: Sequence[int] = (-1, 0, 1),
) -> tuple[tuple[int, ...], tuple[int, ...]] | None:
    """Search a solution sigma[t, i] = b_i + t * r_i of the infinite power of ``g``.

    Returns ``(b, r)`` or None. Any answer is a genuine witness of
    omega-satisfiability (it is checked for every arc over all t >= 0).
    """
    g = logical_closure(g)
    n = g.n_src
    bd, bu = set(bounded_down), set(bounded_up)
    arcs = [
        (a.tail.side, a.tail.index - 1, a.head.side, a.head.index - 1, 1 if a.strictness is STRICT else 0)
        for a in g.iter_arcs()
    ]
    for r in itertools.product(rates, repeat=n):
        if any(r[i - 1] < 0 for i in bd) or any(r[i - 1] > 0 for i in bu):
            continue
        # sigma[t+s,i] - sigma[t+s',j] >= w for all t >= 0
        #   slope r_i - r_j >= 0 and  b_j - b_i <= s*r_i - s'*r_j - w
        if any(r[i] < r[j] for _, i, _, j, _ in arcs):
            continue
        edges = [(i, j, s * r[i] - s2 * r[j] - w) for s, i, s2, j, w in arcs]
        b = _potentials(n, edges)
        if b is not None:
            return tuple(b), tuple(r)
    return None


def find_linear_solution(
    g: McGraph,
    bounded_down: Iterable[int] = (),
    bounded_up: Iterable[int] = (),
) -> tuple[tuple[int, ...], tuple[int, ...]] | None:
    """``linear_solution`` over the rate sets {-R, 0, R} for R = 1 .. n + 1.

    A chain of k strictly descending variables interleaved across steps needs
    a common rate of about k, hence the range.
    """
    for scale in range(1, g.n_src + 2):
        found = linear_solution(g, bounded_down, bounded_up, (-scale, 0, scale))
        if found is not None:
            return found
    return None


def _potentials(n: int, edges: list[tuple[int, int, int]]) -> list[int] | None:
    """Bellman-Ford for b_j - b_i <= c on edges (i, j, c); None on a negative cycle."""
    dist = [0] * n
    for _ in range(n):
        changed = False
        for i, j, c in edges:
            if dist[i] + c < dist[j]:
                dist[j] = dist[i] + c
                changed = True
        if not changed:
            return dist
    return None if any(dist[i] + c < dist[j] for i, j, c in edges) else dist


def check_linear_solution(g: McGraph, b: Sequence[int], r: Sequence[int], horizon: int = 8) -> bool:
    g = logical_closure(g)
    for t in range(horizon):
        for a in g.iter_arcs():
            u = b[a.tail.index - 1] + (t + a.tail.side) * r[a.tail.index - 1]
            v = b[a.head.index - 1] + (t + a.head.side) * r[a.head.index - 1]
            if u < v or (a.strictness is STRICT and u == v):
                return False
    return True


def unrolling_diverges(g: McGraph, k: int | None = None) -> bool:
    """Evidence of unsatisfiability: distances among layer 0/1 nodes keep dropping.

    Compares min-weight distances inside g^K and g^2K; a strict cycle in
    either also counts.
    """
    from .mcgraph import NegativeCycle, Multipath, distance_matrix

    g = logical_closure(g)
    n = g.n_src
    k = k or 2 * n + 2
    try:
        d1 = distance_matrix(Multipath.of([g] * k))
        d2 = distance_matrix(Multipath.of([g] * (2 * k)))
    except NegativeCycle:
        return True
    # nodes of layers 0 and 1 occupy the first 2n ids in both unrollings
    return bool((d2[: 2 * n, : 2 * n] < d1[: 2 * n, : 2 * n]).any())


# ---------------------------------------------------------------------------
# decisions


@dataclass(frozen=True)
class Witness:
    """An access path H from the initial point and a cycle L whose omega-power is satisfiable."""

    point: str
    prefix: tuple[str, ...]
    cycle: tuple[str, ...]
    prefix_origin: tuple[str, ...]
    cycle_origin: tuple[str, ...]
    mc: McGraph
    restricted: McGraph
    kept: tuple[int, ...]


@dataclass(frozen=True)
class TerminationVerdict:
    terminating: bool
    bounded_terminating: bool
    witness: Witness | None = None
    height_note: str = ""
    elaborated_points: int = 0
    max_arity: int = 0
    warnings: tuple[str, ...] = field(default=(), compare=False)


def decide_termination(c: Cts | Analysis, **caps) -> bool:
    return decide_bounded_termination(c, **caps).terminating


def decide_bounded_termination(c: Cts | Analysis, **caps) -> TerminationVerdict:
    if isinstance(c, Analysis):
        an = c
    else:
        try:
            an = prepare(c, **caps)
        except Explosion as e:
            if e.what != "closure elements":
                raise
            return _early_verdict(c, e, **caps)
    plain = _find_loop(an, restricted=False)
    bounded = _find_loop(an, restricted=True)
    return _verdict(an, plain is None, bounded)


def _verdict(an: Analysis, terminating: bool, bounded) -> TerminationVerdict:
    n = an.max_arity
    note = f"O((max x_I - min x_I)^{n}) with {an.point_count} elaborated points"
    return TerminationVerdict(
        terminating,
        bounded is None,
        None if bounded is None else build_witness(an, *bounded),
        note if bounded is None else "",
        an.point_count,
        n,
        an.elaborated.cts.warnings,
    )


def _early_verdict(
    c: Cts, cause: Explosion, max_points: int | None = None, max_elements: int = DEFAULT_MAX_ELEMENTS
) -> TerminationVerdict:
    """Negative answers need only one bad loop, so a capped closure can still settle them.

    The closure is rebuilt breadth-first and stops at the first idempotent
    whose infinite power is satisfiable. A positive answer needs the whole
    closure, so ``cause`` is re-raised when the cap arrives first.
    """
    ic, ec = _elaborated(c, max_points)
    bounded_vars = bounded_variables(ec)
    found: dict[str, tuple[str, ClosureElement, tuple[int, ...]]] = {}

    def stop(e: ClosureElement) -> bool:
        g = e.mc
        if not is_idempotent(g):
            return False
        pid = g.source
        kept = tuple(sorted(bounded_vars[pid]))
        if "bounded" not in found and omega_satisfiable(restrict(g, kept)):
            found["bounded"] = (pid, e, kept)
        # dropping variables only removes constraints, so a plain loop is also a bounded one
        if omega_satisfiable(g, check=False):
            found["plain"] = (pid, e, tuple(range(1, g.n_src + 1)))
        return "plain" in found

    try:
        cs = compute_closure(ec, max_elements, scc_local=True, stop=stop)
    except Explosion:
        # the same search as before, so it never completes; a bounded loop alone leaves termination open
        raise cause from None
    return _verdict(Analysis(c, ic, ec, bounded_vars, cs), False, found["bounded"])


def _find_loop(an: Analysis, restricted: bool) -> tuple[str, ClosureElement, tuple[int, ...]] | None:
    for pid in sorted(an.elaborated.points):
        arity = an.elaborated.points[pid].arity
        kept = tuple(sorted(an.bounded[pid])) if restricted else tuple(range(1, arity + 1))
        for e in sorted(idempotents_at(an.closure, pid), key=lambda e: (len(e.witness), e.witness)):
            g = restrict(e.mc, kept) if restricted else e.mc
            if omega_satisfiable(g):
                return pid, e, kept
    return None


def access_path(ec: ElaboratedCts, target: str) -> tuple[str, ...]:
    """Shortest transition-label path from an initial point to ``target`` (BFS)."""
    start = [p.id for p in ec.cts.initial]
    prev: dict[str, tuple[str, str] | None] = {p: None for p in start}
    queue = deque(start)
    out: dict[str, list] = {}
    for t in ec.cts.transitions:
        out.setdefault(t.source, []).append(t)
    while queue:
        p = queue.popleft()
        if p == target:
            break
        for t in out.get(p, ()):
            if t.target not in prev:
                prev[t.target] = (p, t.label)
                queue.append(t.target)
    if target not in prev:
        raise KeyError(f"{target} is unreachable")
    labels = []
    p = target
    while prev[p] is not None:
        p, label = prev[p]
        labels.append(label)
    return tuple(reversed(labels))


def build_witness(an: Analysis, pid: str, e: ClosureElement, kept: tuple[int, ...]) -> Witness:
    ec = an.elaborated
    prefix = access_path(ec, pid)
    return Witness(
        pid,
        prefix,
        e.witness,
        tuple(ec.origin_label[l] for l in prefix),
        tuple(ec.origin_label[l] for l in e.witness),
        e.mc,
        restrict(e.mc, kept),
        kept,
    )


def check_witness(an: Analysis | Cts, w: Witness, max_points: int | None = None) -> list[str]:
    """Mechanical re-check of a witness; returns the list of problems (empty if valid).

    A bare system is elaborated afresh, which avoids building its closure.
    """
    problems = []
    if isinstance(an, Analysis):
        ec, bounded = an.elaborated, an.bounded
    else:
        ec = _elaborated(an, max_points)[1]
        bounded = bounded_variables(ec)
    by_label = {t.label: t for t in ec.cts.transitions}
    here = {p.id for p in ec.cts.initial}
    for label in w.prefix:
        t = by_label.get(label)
        if t is None or t.source not in here:
            problems.append(f"prefix step {label} does not continue the path")
            break
        here = {t.target}
    if w.point not in here:
        problems.append("prefix does not reach the cycle point")
    g = replay(ec, w.cycle)
    if g.key != logical_closure(w.mc).key:
        problems.append("cycle witness does not collapse to the stored MC")
    if g.source != w.point or g.target != w.point:
        problems.append("cycle is not a loop at the witness point")
    if not is_idempotent(g):
        problems.append("cycle collapse is not idempotent")
    if w.point in bounded and not bounded[w.point] <= set(w.kept):
        problems.append("restriction drops a bounded variable")
    r = restrict(g, w.kept)
    if not omega_satisfiable(r, check=False):
        problems.append("restricted cycle is not omega-satisfiable")
    elif find_linear_solution(r) is None:
        problems.append("no explicit infinite solution found for the restricted cycle")
    return problems
