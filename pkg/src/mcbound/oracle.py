"""Brute-force ground truth over finite value domains."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .cts import Cts, saturate_invariants
from .errors import DegenerateSamples, StateExplosion
from .mcgraph import McGraph, logical_closure

State = tuple[str, tuple[int, ...]]


@dataclass(frozen=True)
class OracleConfig:
    n: int
    pad: int | None = None
    max_states: int = 2_000_000

    def __post_init__(self) -> None:
        if self.n < 0 or (self.pad is not None and self.pad < 0):
            raise ValueError("N and pad must be non-negative")

    @property
    def margin(self) -> int:
        return 2 * self.n if self.pad is None else self.pad

    @property
    def domain(self) -> tuple[int, int]:
        return -self.margin, self.n + self.margin


@dataclass(frozen=True)
class OracleResult:
    cyclic: bool
    height: float
    visits: dict[str, float]
    trace: tuple[State, ...] = ()
    states: int = 0


class _Compiled:
    """A closed MC split into source guards, target bounds and target-target constraints."""

    def __init__(self, g: McGraph) -> None:
        g = logical_closure(g)
        n, m = g.n_src, g.n_dst
        self.target = g.target
        self.ok = not any(g.gt[u] >> u & 1 for u in range(g.size))
        self.guards = []
        self.lower: list[list[tuple[int, int]]] = [[] for _ in range(m)]
        self.upper: list[list[tuple[int, int]]] = [[] for _ in range(m)]
        self.pairs: list[list[tuple[int, int, int]]] = [[] for _ in range(m)]
        for a in range(g.size):
            for b in range(g.size):
                if a == b or not g.ge[a] >> b & 1:
                    continue
                s = g.gt[a] >> b & 1
                if a < n and b < n:
                    self.guards.append((a, b, s))
                elif a < n:  # x_a >= x_j' + s
                    self.upper[b - n].append((a, s))
                elif b < n:  # x_j' >= x_b + s
                    self.lower[a - n].append((b, s))
                else:
                    j, k = a - n, b - n
                    self.pairs[max(j, k)].append((j, k, s))
        self.m = m

    def successors(self, values: Sequence[int], lo: int, hi: int) -> Iterator[tuple[int, ...]]:
        if not self.ok:
            return
        for a, b, s in self.guards:
            if values[a] < values[b] + s:
                return
        los, his = [], []
        for j in range(self.m):
            low = max([lo] + [values[b] + s for b, s in self.lower[j]])
            high = min([hi] + [values[a] - s for a, s in self.upper[j]])
            if low > high:
                return
            los.append(low)
            his.append(high)
        out = [0] * self.m
        pairs = self.pairs

        def rec(j: int) -> Iterator[tuple[int, ...]]:
            if j == self.m:
                yield tuple(out)
                return
            for v in range(los[j], his[j] + 1):
                out[j] = v
                if all(out[a] >= out[b] + s for a, b, s in pairs[j]):
                    yield from rec(j + 1)

        yield from rec(0)


def _initial_states(c: Cts, lo: int, hi: int) -> list[State]:
    out = []
    for p in sorted(c.initial, key=lambda p: p.id):
        for values in itertools.product(range(lo, hi + 1), repeat=p.arity):
            if all(values[i - 1] >= values[j - 1] + (s.weight == -1) for i, j, s in p.invariant):
                out.append((p.id, values))
    return out


def _search(
    c: Cts,
    roots: Sequence[State],
    lo: int,
    hi: int,
    max_states: int,
) -> OracleResult:
    """Longest runs and per-point maximal visit counts from ``roots`` inside [lo, hi]."""
    c = saturate_invariants(c)
    points = sorted(p.id for p in c.points)
    pindex = {p: k for k, p in enumerate(points)}
    moves: dict[str, list[_Compiled]] = {p: [] for p in points}
    for t in sorted(c.transitions, key=lambda t: t.label):
        moves[t.source].append(_Compiled(t.graph))

    def succ(state: State) -> list[State]:
        pid, values = state
        out = []
        for comp in moves[pid]:
            for v in comp.successors(values, lo, hi):
                out.append((comp.target, v))
        return out

    # iterative DFS; colour 1 = on stack, 2 = finished
    colour: dict[State, int] = {}
    height: dict[State, int] = {}
    visits: dict[State, tuple[int, ...]] = {}
    best_next: dict[State, State | None] = {}
    zero = (0,) * len(points)
    for root in roots:
        if root in colour:
            continue
        colour[root] = 1
        stack = [(root, succ(root), [0])]
        while stack:
            state, children, pos = stack[-1]
            if pos[0] < len(children):
                nxt = children[pos[0]]
                pos[0] += 1
                seen = colour.get(nxt)
                if seen == 1:
                    cycle = [s for s, _, _ in stack] + [nxt]
                    visits_inf = {p: math.inf for p in points}
                    return OracleResult(True, math.inf, visits_inf, tuple(cycle), len(colour))
                if seen is None:
                    if len(colour) >= max_states:
                        raise StateExplosion(max_states, f"domain [{lo}, {hi}]")
                    colour[nxt] = 1
                    stack.append((nxt, succ(nxt), [0]))
                continue
            stack.pop()
            colour[state] = 2
            h, vec, arg = 0, zero, None
            for s2 in children:
                if height[s2] + 1 > h:
                    h, arg = height[s2] + 1, s2
                vec = tuple(max(a, b) for a, b in zip(vec, visits[s2]))
            here = list(vec)
            here[pindex[state[0]]] += 1
            height[state] = h
            visits[state] = tuple(here)
            best_next[state] = arg
    if not roots:
        return OracleResult(False, 0, {p: 0 for p in points}, (), 0)
    start = max(roots, key=lambda s: (height[s], s))
    trace = [start]
    while best_next[trace[-1]] is not None:
        trace.append(best_next[trace[-1]])
    per_point = {p: max(visits[r][k] for r in roots) for p, k in pindex.items()}
    return OracleResult(False, max(height[r] for r in roots), per_point, tuple(trace), len(colour))


def explore(c: Cts, cfg: OracleConfig) -> OracleResult:
    """Exhaustive runs from every initial state with values in [0, N].

    This is the instrumented semantics with x_min = 0 and x_max = N pinned;
    later values may range over [-pad, N + pad].
    """
    lo, hi = cfg.domain
    roots = _initial_states(saturate_invariants(c), 0, cfg.n)
    return _search(c, roots, lo, hi, cfg.max_states)


def fit_degree(samples: Sequence[tuple[float, float]]) -> tuple[float, float]:
    """Least-squares slope of log(count) against log(N) on the top half of the samples.

    Returns ``(slope, max_residual)``.
    """
    if len(samples) < 3:
        raise DegenerateSamples("at least three samples are needed")
    ns = [n for n, _ in samples]
    if any(b <= a for a, b in zip(ns, ns[1:])) or ns[0] <= 0:
        raise DegenerateSamples("N values must be positive and increasing")
    if any(not (cnt >= 1) or math.isinf(cnt) for _, cnt in samples):
        raise DegenerateSamples("counts must be finite and at least 1")
    top = samples[len(samples) // 2 :]
    x = np.log([n for n, _ in top])
    y = np.log([cnt for _, cnt in top])
    slope, intercept = np.polyfit(x, y, 1)
    residual = float(np.max(np.abs(y - (slope * x + intercept))))
    return float(slope), residual


@dataclass(frozen=True)
class Evidence:
    lengths: tuple[float, ...]
    growing: bool
    saturated: bool
    cyclic: bool = False


def check_unboundedness(
    c: Cts,
    initial: State,
    domains: Sequence[int | tuple[int, int]],
    max_states: int = 2_000_000,
) -> Evidence:
    """Longest run from one fixed initial state as the value domain grows.

    A plain integer D stands for the domain [0, D].
    """
    lengths = []
    cyclic = False
    for d in domains:
        lo, hi = (0, d) if isinstance(d, int) else d
        r = _search(c, [(initial[0], tuple(initial[1]))], lo, hi, max_states)
        cyclic |= r.cyclic
        lengths.append(r.height)
    growing = len(lengths) >= 3 and all(b > a for a, b in zip(lengths, lengths[1:]))
    saturated = len(lengths) >= 2 and lengths[-1] == lengths[-2] and not cyclic
    return Evidence(tuple(lengths), growing, saturated, cyclic)


def visit_samples(c: Cts, point: str, ns: Sequence[int], pad: int | None = None) -> list[tuple[int, float]]:
    return [(n, explore(c, OracleConfig(n, pad)).visits[point]) for n in ns]
