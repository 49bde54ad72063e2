"""Full elaboration: split every flow point into totally ordered, coalesced variants."""

from __future__ import annotations

import os
from collections import deque
from dataclasses import dataclass
from typing import Iterator, Sequence

from .cts import Cts, FlowPoint, InstrumentedCts, Transition
from .errors import Explosion, NotInstrumented
from .mcgraph import (
    STRICT,
    McGraph,
    Strictness,
    is_satisfiable,
    logical_closure,
    quotient,
    src,
    tgt,
)

DEFAULT_MAX_POINTS = 50_000
ENV_MAX_POINTS = "MCBOUND_MAX_ELAB"

# An order is a tuple of classes listed from smallest to largest value; each
# class is a sorted tuple of 1-based original indices.
Order = tuple[tuple[int, ...], ...]


@dataclass(frozen=True)
class ElaboratedPoint:
    id: str
    origin: str
    order: Order

    @property
    def arity(self) -> int:
        return len(self.order)

    def psi(self, i: int) -> int:
        """1-based class index of original variable ``i``."""
        for c, members in enumerate(self.order, start=1):
            if i in members:
                return c
        raise IndexError(i)


@dataclass(frozen=True)
class ElaboratedCts:
    cts: Cts
    points: dict[str, ElaboratedPoint]
    origin_label: dict[str, str]
    source: InstrumentedCts | None = None

    def point(self, pid: str) -> ElaboratedPoint:
        return self.points[pid]

    def variants(self, origin: str) -> list[ElaboratedPoint]:
        return [p for p in self.points.values() if p.origin == origin]


def default_cap() -> int:
    raw = os.environ.get(ENV_MAX_POINTS)
    return int(raw) if raw else DEFAULT_MAX_POINTS


def _chain(k: int) -> list[tuple[int, int, Strictness]]:
    return [(c + 1, c, STRICT) for c in range(1, k)]


def _signature(p: FlowPoint, order: Order) -> str:
    return "<".join(".".join(p.var_names[i - 1] for i in cls) for cls in order)


def weak_orders(
    n: int,
    ge: Sequence[int],
    gt: Sequence[int],
) -> Iterator[Order]:
    """Weak orders of ``n`` variables agreeing with the pairwise relations ``ge``/``gt``.

    ``ge[a] >> b & 1`` means x_{a+1} >= x_{b+1}; ``gt`` marks the strict ones.
    Only pairwise consistency is checked here.
    """
    classes: list[list[int]] = []

    def fits(v: int, pos: int, new_class: bool) -> bool:
        for c, cls in enumerate(classes):
            for u in cls:
                if new_class:
                    # classes at index >= pos end up above v
                    if c >= pos and ge[v] >> u & 1:
                        return False
                    if c < pos and ge[u] >> v & 1:
                        return False
                elif c > pos and ge[v] >> u & 1:
                    return False
                elif c < pos and ge[u] >> v & 1:
                    return False
                elif c == pos and (gt[v] >> u & 1 or gt[u] >> v & 1):
                    return False
        return True

    def rec(v: int) -> Iterator[Order]:
        if v == n:
            yield tuple(tuple(sorted(i + 1 for i in cls)) for cls in classes)
            return
        for pos in range(len(classes) + 1):
            if fits(v, pos, True):
                classes.insert(pos, [v])
                yield from rec(v + 1)
                classes.pop(pos)
        for pos in range(len(classes)):
            if fits(v, pos, False):
                classes[pos].append(v)
                yield from rec(v + 1)
                classes[pos].pop()

    yield from rec(0)


def _pairwise(g: McGraph, side_offset: int, n: int) -> tuple[list[int], list[int]]:
    ge, gt = [], []
    mask = (1 << n) - 1
    for a in range(n):
        ge.append((g.ge[side_offset + a] >> side_offset) & mask)
        gt.append((g.gt[side_offset + a] >> side_offset) & mask)
    return ge, gt


def _class_map(order: Order, n: int) -> list[int]:
    out = [0] * n
    for c, members in enumerate(order, start=1):
        for i in members:
            out[i - 1] = c
    return out


def _merge_sources(g: McGraph, order: Order) -> McGraph:
    """Rename source variables to their classes and add the strict ascending chain."""
    k = len(order)
    chain = [(c, c - 1, True) for c in range(1, k)]
    return quotient(g, _class_map(order, g.n_src), range(1, g.n_dst + 1), k, g.n_dst, chain)


def _merge_targets(g: McGraph, order: Order) -> McGraph:
    k = len(order)
    chain = [(g.n_src + c, g.n_src + c - 1, True) for c in range(1, k)]
    return quotient(g, range(1, g.n_src + 1), _class_map(order, g.n_dst), g.n_src, k, chain)


def elaborate(
    ic: InstrumentedCts | Cts,
    max_points: int | None = None,
) -> ElaboratedCts:
    """Reachable part of the full elaboration, built by a worklist from the initial seeds."""
    base = ic.cts if isinstance(ic, InstrumentedCts) else ic
    cap = default_cap() if max_points is None else max_points
    by_id = base.point_map

    registry: dict[tuple[str, Order], ElaboratedPoint] = {}
    used_ids: set[str] = set()
    queue: deque[ElaboratedPoint] = deque()
    transitions: list[Transition] = []
    origin_label: dict[str, str] = {}

    def register(origin: str, order: Order) -> ElaboratedPoint:
        key = (origin, order)
        if key in registry:
            return registry[key]
        if len(registry) >= cap:
            raise Explosion("elaborated points", cap, f"while expanding {origin}")
        pid = f"{origin}@{_signature(by_id[origin], order)}"
        while pid in used_ids:
            pid += "'"
        used_ids.add(pid)
        ep = ElaboratedPoint(pid, origin, order)
        registry[key] = ep
        queue.append(ep)
        return ep

    initial_ids = set()
    for p in base.initial:
        inv = McGraph.from_arcs(
            p.id, p.id, p.arity, 0, [(src(i), src(j), s) for i, j, s in p.invariant]
        )
        inv = logical_closure(inv)
        ge, gt = _pairwise(inv, 0, p.arity)
        for order in weak_orders(p.arity, ge, gt):
            if is_satisfiable(_merge_sources(inv, order)):
                initial_ids.add(register(p.id, order).id)

    while queue:
        ep = queue.popleft()
        for t in base.outgoing(ep.origin):
            h = _merge_sources(logical_closure(t.graph), ep.order)
            if not is_satisfiable(h):
                continue
            target = by_id[t.target]
            ge, gt = _pairwise(h, h.n_src, target.arity)
            for order in weak_orders(target.arity, ge, gt):
                g2 = _merge_targets(h, order)
                if not is_satisfiable(g2):
                    continue
                dst = register(t.target, order)
                label = f"{t.label}[{ep.id}>{dst.id}]"
                transitions.append(Transition(label, g2.with_points(ep.id, dst.id)))
                origin_label[label] = t.label

    points = []
    for ep in registry.values():
        p = by_id[ep.origin]
        names = tuple(".".join(p.var_names[i - 1] for i in cls) for cls in ep.order)
        points.append(
            FlowPoint(
                ep.id,
                ep.arity,
                names,
                frozenset(_chain(ep.arity)),
                ep.id in initial_ids,
            )
        )
    out = Cts(tuple(points), tuple(transitions), base.warnings)
    return ElaboratedCts(
        out,
        {ep.id: ep for ep in registry.values()},
        origin_label,
        ic if isinstance(ic, InstrumentedCts) else None,
    )


def bounded_variables(ec: ElaboratedCts) -> dict[str, frozenset[int]]:
    """Per elaborated point, the class indices sandwiched between x_min and x_max."""
    if ec.source is None:
        raise NotInstrumented("bounded variables need an instrumented system")
    out = {}
    for pid, ep in ec.points.items():
        hi = ep.psi(ec.source.max_index[ep.origin])
        lo = ep.psi(ec.source.min_index[ep.origin])
        out[pid] = frozenset(range(lo, hi + 1))
    return out


def check_downward_closure(
    source: ElaboratedCts | Sequence[McGraph],
) -> tuple[bool, tuple[str, int, int, int] | None]:
    """Every x_i ≻ x_j' must come with an at least as strict x_i ≻ x_k' for all k < j."""
    graphs = (
        [(t.label, t.graph) for t in source.cts.transitions]
        if isinstance(source, ElaboratedCts)
        else [(str(i), g) for i, g in enumerate(source)]
    )
    for label, g in graphs:
        for i in range(1, g.n_src + 1):
            for j in range(1, g.n_dst + 1):
                b = g.relation(src(i), tgt(j))
                if b is None:
                    continue
                for k in range(1, j):
                    d = g.relation(src(i), tgt(k))
                    if d is None or (b is STRICT and d is not STRICT):
                        return False, (label, i, j, k)
    return True, None
