"""Composition closure of an elaborated system, with shortest witnesses."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .cts import Cts
from .elaborate import ElaboratedCts
from .errors import Explosion
from .mcgraph import McGraph, compose, is_satisfiable, logical_closure
from .mcgraph import restrict as _restrict

DEFAULT_MAX_ELEMENTS = 200_000


@dataclass(frozen=True)
class ClosureElement:
    mc: McGraph
    witness: tuple[str, ...]


@dataclass
class ClosureSet:
    elements: dict[tuple, ClosureElement] = field(default_factory=dict)
    scc_of: dict[str, int] = field(default_factory=dict)
    complete: bool = True

    def __len__(self) -> int:
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements.values())

    def __contains__(self, g: McGraph) -> bool:
        return g.key in self.elements

    def get(self, g: McGraph) -> ClosureElement | None:
        return self.elements.get(g.key)

    def between(self, source: str, target: str) -> list[ClosureElement]:
        return [e for e in self if e.mc.source == source and e.mc.target == target]


def strongly_connected(c: Cts) -> dict[str, int]:
    """Component number per point (iterative Tarjan); numbers follow discovery order."""
    succ: dict[str, list[str]] = {p.id: [] for p in c.points}
    for t in c.transitions:
        succ[t.source].append(t.target)
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    comp: dict[str, int] = {}
    counter = 0
    for root in succ:
        if root in index:
            continue
        work = [(root, iter(succ[root]))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(succ[w])))
                    advanced = True
                    break
                if w in on_stack:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                u = work[-1][0]
                low[u] = min(low[u], low[v])
            if low[v] == index[v]:
                number = len(set(comp.values()))
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp[w] = number
                    if w == v:
                        break
    return comp


def compute_closure(
    ec: ElaboratedCts | Cts,
    max_elements: int = DEFAULT_MAX_ELEMENTS,
    scc_local: bool = False,
    stop: Callable[[ClosureElement], bool] | None = None,
) -> ClosureSet:
    """Least compose-closed set containing every transition, built breadth-first.

    Elements are extended on the right by single transitions only; by
    associativity that reaches every collapse, and BFS order keeps witnesses
    shortest. With ``scc_local`` only multipaths inside one strongly connected
    component are considered, which preserves every cyclic element.
    ``stop`` sees each new element; once it returns true the search ends
    early and the result is marked incomplete.
    """
    c = ec.cts if isinstance(ec, ElaboratedCts) else ec
    scc = strongly_connected(c)
    out: dict[str, list] = {p.id: [] for p in c.points}
    for t in c.transitions:
        if scc_local and scc[t.source] != scc[t.target]:
            continue
        out[t.source].append((t.label, logical_closure(t.graph)))
    cs = ClosureSet(scc_of=scc)
    queue: deque[ClosureElement] = deque()

    def add(g: McGraph, witness: tuple[str, ...]) -> None:
        if g.key in cs.elements or not cs.complete:
            return
        if len(cs.elements) >= max_elements:
            raise Explosion("closure elements", max_elements, f"at {g.source} -> {g.target}")
        e = ClosureElement(g, witness)
        cs.elements[g.key] = e
        queue.append(e)
        if stop is not None and cs.complete and stop(e):
            cs.complete = False

    for pid in out:
        for label, g in out[pid]:
            if is_satisfiable(g):
                add(g, (label,))
    while queue and cs.complete:
        e = queue.popleft()
        for label, g in out[e.mc.target]:
            h = compose(e.mc, g)
            if is_satisfiable(h):
                add(h, e.witness + (label,))
    return cs


def is_idempotent(g: McGraph) -> bool:
    return g.is_cyclic and compose(g, g).key == logical_closure(g).key


def idempotents_at(cs: ClosureSet, f: str) -> list[ClosureElement]:
    return [e for e in cs.between(f, f) if is_idempotent(e.mc)]


def restrict(mc: McGraph, keep_src: Iterable[int], keep_dst: Iterable[int] | None = None) -> McGraph:
    """Induced MC on the kept 1-based indices; ``keep_dst`` defaults to ``keep_src``."""
    keep_src = sorted(keep_src)
    keep_dst = keep_src if keep_dst is None else sorted(keep_dst)
    return _restrict(mc, keep_src, keep_dst)


def check_fixpoint(cs: ClosureSet) -> tuple[ClosureElement, ClosureElement] | None:
    """First composable pair whose satisfiable composition is missing, if any."""
    by_source: dict[str, list[ClosureElement]] = {}
    for e in cs:
        by_source.setdefault(e.mc.source, []).append(e)
    for a in cs:
        for b in by_source.get(a.mc.target, ()):
            h = compose(a.mc, b.mc)
            if is_satisfiable(h) and h.key not in cs.elements:
                return a, b
    return None


def replay(ec: ElaboratedCts | Cts, labels: Sequence[str]) -> McGraph:
    """Collapse of the multipath named by a witness."""
    c = ec.cts if isinstance(ec, ElaboratedCts) else ec
    by_label = {t.label: t.graph for t in c.transitions}
    acc = logical_closure(by_label[labels[0]])
    for label in labels[1:]:
        acc = compose(acc, by_label[label])
    return acc
