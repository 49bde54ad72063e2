"""Constraint transition systems: model, text format, invariants, instrumentation."""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Sequence

from .errors import (
    ArityMismatch,
    CtsSyntaxError,
    UnknownPoint,
    UnknownTransition,
    UnsatisfiableInvariant,
)
from .mcgraph import (
    NONSTRICT,
    STRICT,
    McGraph,
    Strictness,
    VarNode,
    is_satisfiable,
    logical_closure,
    render_relations,
    src,
    tgt,
)

MAX_VAR = "$max"
MIN_VAR = "$min"
INIT_POINT = "$init"

# invariant atoms are (i, j, strictness): x_i ≻ x_j, 1-based
InvariantArc = tuple[int, int, Strictness]


@dataclass(frozen=True)
class FlowPoint:
    id: str
    arity: int
    var_names: tuple[str, ...]
    invariant: frozenset[InvariantArc] = frozenset()
    initial: bool = False

    def invariant_graph(self) -> McGraph:
        """The invariant as an MC on the source side only (no target variables)."""
        arcs = [(src(i), src(j), s) for i, j, s in self.invariant]
        return McGraph.from_arcs(self.id, self.id, self.arity, 0, arcs)

    def index(self, name: str) -> int:
        try:
            return self.var_names.index(name) + 1
        except ValueError:
            raise UnknownPoint(f"point {self.id} has no variable {name!r}") from None


@dataclass(frozen=True)
class Transition:
    label: str
    graph: McGraph

    @property
    def source(self) -> str:
        return self.graph.source

    @property
    def target(self) -> str:
        return self.graph.target


@dataclass(frozen=True)
class Cts:
    points: tuple[FlowPoint, ...]
    transitions: tuple[Transition, ...]
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        ids = [p.id for p in self.points]
        if len(set(ids)) != len(ids):
            raise CtsSyntaxError("duplicate flow point")
        by_id = {p.id: p for p in self.points}
        labels = set()
        for t in self.transitions:
            if t.label in labels:
                raise CtsSyntaxError(f"duplicate transition label {t.label!r}")
            labels.add(t.label)
            for end in (t.source, t.target):
                if end not in by_id:
                    raise UnknownPoint(f"transition {t.label} mentions unknown point {end!r}")
            if t.graph.n_src != by_id[t.source].arity or t.graph.n_dst != by_id[t.target].arity:
                raise ArityMismatch(f"transition {t.label} does not match point arities")

    @property
    def point_map(self) -> dict[str, FlowPoint]:
        return {p.id: p for p in self.points}

    def point(self, pid: str) -> FlowPoint:
        for p in self.points:
            if p.id == pid:
                return p
        raise UnknownPoint(pid)

    @property
    def initial(self) -> tuple[FlowPoint, ...]:
        return tuple(p for p in self.points if p.initial)

    def transition(self, label: str) -> Transition:
        for t in self.transitions:
            if t.label == label:
                return t
        raise UnknownTransition(label)

    def outgoing(self, pid: str) -> list[Transition]:
        return [t for t in self.transitions if t.source == pid]

    @property
    def max_arity(self) -> int:
        return max((p.arity for p in self.points), default=0)


@dataclass(frozen=True)
class InstrumentedCts:
    cts: Cts
    max_index: dict[str, int]
    min_index: dict[str, int]
    init_point: str = INIT_POINT
    original_arity: int = 0


# ---------------------------------------------------------------------------
# text format

_NAME = r"[A-Za-z0-9_.$]+"
_POINT = r"[^\s(),:]+"
_REL = re.compile(rf"\s*({_NAME})('?)\s*(<=|>=|<|>|=)\s*({_NAME})('?)\s*$")
_SAME = re.compile(r"\s*same\s*\(([^)]*)\)\s*$", re.IGNORECASE)
_POINT_LINE = re.compile(rf"point\s+({_POINT})\s*\(([^)]*)\)\s*(initial)?\s*$")
_INV_LINE = re.compile(rf"invariant\s+({_POINT})\s*:(.*)$")
_TRANS_LINE = re.compile(rf"trans\s+({_POINT})\s*:\s*({_POINT})\s*->\s*({_POINT})\s*:?(.*)$")


def _split_atoms(text: str) -> list[tuple[str, int]]:
    """Split on top-level commas, keeping column offsets."""
    out, depth, start = [], 0, 0
    for i, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == "," and depth == 0:
            out.append((text[start:i], start))
            start = i + 1
    out.append((text[start:], start))
    return [(a, c) for a, c in out if a.strip()]


def _atom_arcs(
    atom: str,
    resolve,
    allow_primes: bool,
    line: int,
    col: int,
) -> list[tuple[VarNode, VarNode, Strictness]]:
    same = _SAME.match(atom)
    if same:
        if not allow_primes:
            raise CtsSyntaxError("same(...) is only meaningful in transitions", line, col)
        arcs = []
        for name in (n.strip() for n in same.group(1).split(",")):
            if not name:
                continue
            a, b = resolve(name, False, col), resolve(name, True, col)
            arcs += [(a, b, NONSTRICT), (b, a, NONSTRICT)]
        return arcs
    rel = _REL.match(atom)
    if not rel:
        raise CtsSyntaxError(f"cannot parse relation {atom.strip()!r}", line, col + 1)
    left, lp, op, right, rp = rel.groups()
    if (lp or rp) and not allow_primes:
        raise CtsSyntaxError("primed variable in an invariant", line, col + 1)
    a, b = resolve(left, bool(lp), col), resolve(right, bool(rp), col)
    if op in ("<", "<="):
        a, b = b, a
    if op == "=":
        return [(a, b, NONSTRICT), (b, a, NONSTRICT)]
    return [(a, b, STRICT if op in ("<", ">") else NONSTRICT)]


def parse(text: str) -> Cts:
    points: dict[str, FlowPoint] = {}
    invariants: dict[str, list[InvariantArc]] = {}
    raw_trans: list[tuple[str, str, str, list[tuple[VarNode, VarNode, Strictness]]]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        stripped = line.strip()
        if not stripped:
            continue
        indent = len(line) - len(line.lstrip())
        if stripped.startswith("point"):
            m = _POINT_LINE.match(stripped)
            if not m:
                raise CtsSyntaxError("malformed point declaration", lineno, indent + 1)
            pid, names, initial = m.groups()
            var_names = tuple(n.strip() for n in names.split(",") if n.strip())
            if not var_names:
                raise ArityMismatch(f"line {lineno}: point {pid} needs at least one variable")
            if len(set(var_names)) != len(var_names):
                raise CtsSyntaxError(f"duplicate variable in point {pid}", lineno, indent + 1)
            for n in var_names:
                if not re.fullmatch(_NAME, n):
                    raise CtsSyntaxError(f"bad variable name {n!r}", lineno, indent + 1)
            if pid in points:
                raise CtsSyntaxError(f"point {pid} declared twice", lineno, indent + 1)
            points[pid] = FlowPoint(pid, len(var_names), var_names, initial=bool(initial))
        elif stripped.startswith("invariant"):
            m = _INV_LINE.match(stripped)
            if not m:
                raise CtsSyntaxError("malformed invariant", lineno, indent + 1)
            pid, body = m.groups()
            if pid not in points:
                raise UnknownPoint(f"line {lineno}: unknown point {pid!r}")
            p = points[pid]

            def resolve(name, primed, col, p=p, lineno=lineno):
                if name not in p.var_names:
                    raise CtsSyntaxError(f"unknown variable {name!r} at {p.id}", lineno, col + 1)
                return src(p.index(name))

            offset = indent + stripped.index(":") + 1
            for atom, col in _split_atoms(body):
                for a, b, s in _atom_arcs(atom, resolve, False, lineno, offset + col):
                    invariants.setdefault(pid, []).append((a.index, b.index, s))
        elif stripped.startswith("trans"):
            m = _TRANS_LINE.match(stripped)
            if not m:
                raise CtsSyntaxError("malformed transition", lineno, indent + 1)
            label, s_id, t_id, body = m.groups()
            for pid in (s_id, t_id):
                if pid not in points:
                    raise UnknownPoint(f"line {lineno}: unknown point {pid!r}")
            sp, tp = points[s_id], points[t_id]

            def resolve(name, primed, col, sp=sp, tp=tp, lineno=lineno):
                p = tp if primed else sp
                if name not in p.var_names:
                    raise CtsSyntaxError(f"unknown variable {name!r} at {p.id}", lineno, col + 1)
                return tgt(p.index(name)) if primed else src(p.index(name))

            offset = indent + len(stripped) - len(body)
            arcs = []
            for atom, col in _split_atoms(body):
                arcs += _atom_arcs(atom, resolve, True, lineno, offset + col)
            raw_trans.append((label, s_id, t_id, arcs))
        else:
            raise CtsSyntaxError(f"unknown directive {stripped.split()[0]!r}", lineno, indent + 1)
    if not points:
        raise CtsSyntaxError("no flow points declared")
    final = []
    for p in points.values():
        q = replace(p, invariant=frozenset(invariants.get(p.id, ())))
        if not is_satisfiable(q.invariant_graph()):
            raise UnsatisfiableInvariant(f"invariant of {p.id} is unsatisfiable")
        final.append(q)
    if not any(p.initial for p in final):
        raise CtsSyntaxError("no initial flow point")
    by_id = {p.id: p for p in final}
    transitions = tuple(
        Transition(
            label,
            McGraph.from_arcs(s, t, by_id[s].arity, by_id[t].arity, arcs),
        )
        for label, s, t, arcs in raw_trans
    )
    return Cts(tuple(final), transitions)


def render(c: Cts) -> str:
    lines = []
    for p in c.points:
        head = f"point {p.id}({','.join(p.var_names)})"
        lines.append(head + (" initial" if p.initial else ""))
    for p in c.points:
        if p.invariant:
            atoms = render_relations(p.invariant_graph(), p.var_names)
            lines.append(f"invariant {p.id}: {', '.join(atoms)}")
    by_id = c.point_map
    for t in c.transitions:
        atoms = render_relations(
            t.graph, by_id[t.source].var_names, by_id[t.target].var_names
        )
        lines.append(f"trans {t.label}: {t.source} -> {t.target}: {', '.join(atoms)}".rstrip(": "))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# transforms


def _with_invariants(g: McGraph, inv_src: Iterable[InvariantArc], inv_dst: Iterable[InvariantArc]) -> McGraph:
    arcs = list(g.iter_arcs())
    arcs += [(src(i), src(j), s) for i, j, s in inv_src]
    arcs += [(tgt(i), tgt(j), s) for i, j, s in inv_dst]
    return McGraph.from_arcs(g.source, g.target, g.n_src, g.n_dst, arcs)


def saturate_invariants(c: Cts) -> Cts:
    """Push each point's invariant into every incident MC and close; drop unsatisfiable MCs."""
    by_id = c.point_map
    kept, warnings = [], list(c.warnings)
    for t in c.transitions:
        g = logical_closure(
            _with_invariants(t.graph, by_id[t.source].invariant, by_id[t.target].invariant)
        )
        if is_satisfiable(g):
            kept.append(Transition(t.label, g))
        else:
            warnings.append(f"transition {t.label} ({t.source} -> {t.target}) is unsatisfiable; dropped")
    return Cts(c.points, tuple(kept), tuple(warnings))


def instrument(c: Cts) -> InstrumentedCts:
    """Add x_max/x_min companions everywhere and a fresh initial point feeding the old ones."""
    init_arity = max(p.arity for p in c.initial)
    template = next(p for p in c.initial if p.arity == init_arity)
    points = []
    max_index, min_index = {}, {}
    for p in c.points:
        n = p.arity
        points.append(
            FlowPoint(p.id, n + 2, p.var_names + (MAX_VAR, MIN_VAR), p.invariant, False)
        )
        max_index[p.id], min_index[p.id] = n + 1, n + 2
    init_inv = set()
    for j in range(1, init_arity + 1):
        init_inv.add((init_arity + 1, j, NONSTRICT))
        init_inv.add((j, init_arity + 2, NONSTRICT))
    init_id = INIT_POINT
    while init_id in {p.id for p in c.points}:
        init_id += "_"
    f0 = FlowPoint(
        init_id,
        init_arity + 2,
        template.var_names + (MAX_VAR, MIN_VAR),
        frozenset(init_inv),
        True,
    )
    max_index[init_id], min_index[init_id] = init_arity + 1, init_arity + 2
    points.insert(0, f0)

    def keep_extremes(g: McGraph, n_src: int, n_dst: int, arcs: list) -> McGraph:
        for a, b in ((n_src + 1, n_dst + 1), (n_src + 2, n_dst + 2)):
            arcs += [(src(a), tgt(b), NONSTRICT), (tgt(b), src(a), NONSTRICT)]
        return McGraph.from_arcs(g.source, g.target, n_src + 2, n_dst + 2, arcs)

    transitions = []
    labels = {t.label for t in c.transitions}
    for p in c.initial:
        label = f"init->{p.id}"
        while label in labels:
            label += "_"
        arcs = []
        for i in range(1, p.arity + 1):
            arcs += [(src(i), tgt(i), NONSTRICT), (tgt(i), src(i), NONSTRICT)]
        arcs += [(src(i), src(j), s) for i, j, s in init_inv]
        base = McGraph(init_id, p.id, init_arity, p.arity, (), ())
        transitions.append(Transition(label, keep_extremes(base, init_arity, p.arity, arcs)))
    by_id = c.point_map
    for t in c.transitions:
        g = t.graph
        arcs = list(g.iter_arcs())
        ns, nd = by_id[t.source].arity, by_id[t.target].arity
        transitions.append(Transition(t.label, keep_extremes(g, ns, nd, arcs)))
    inst = Cts(tuple(points), tuple(transitions), c.warnings)
    return InstrumentedCts(inst, max_index, min_index, init_id, init_arity)


def concrete_step(
    c: Cts,
    state: tuple[str, tuple[int, ...]],
    label: str,
    domain: Sequence[int],
) -> set[tuple[str, tuple[int, ...]]]:
    """All successors of ``state`` under the labelled MC with values drawn from ``domain``."""
    t = c.transition(label)
    pid, values = state
    if pid != t.source:
        return set()
    return {(t.target, succ) for succ in successors(t.graph, values, domain)}


def successors(g: McGraph, values: Sequence[int], domain: Sequence[int]) -> Iterator[tuple[int, ...]]:
    """Enumerate target valuations in ``domain`` satisfying ``g`` from source ``values``."""
    g = logical_closure(g)
    n, m = g.n_src, g.n_dst
    if not is_satisfiable(g):
        return
    # guards among source variables
    for a in range(n):
        for b in range(n):
            if g.ge[a] >> b & 1:
                strict = g.gt[a] >> b & 1
                if values[a] < values[b] or (strict and values[a] == values[b]):
                    return
    lo_d, hi_d = min(domain), max(domain)
    lo = [lo_d] * m
    hi = [hi_d] * m
    for j in range(m):
        v = n + j
        for a in range(n):
            if g.ge[a] >> v & 1:  # x_a ≻ x_j'
                hi[j] = min(hi[j], values[a] - (g.gt[a] >> v & 1))
            if g.ge[v] >> a & 1:  # x_j' ≻ x_a
                lo[j] = max(lo[j], values[a] + (g.gt[v] >> a & 1))
    if any(l > h for l, h in zip(lo, hi)):
        return
    allowed = set(domain)
    pairs = [
        (j, k, g.gt[n + j] >> (n + k) & 1)
        for j in range(m)
        for k in range(m)
        if j != k and g.ge[n + j] >> (n + k) & 1
    ]
    yield from _assign_targets(m, lo, hi, allowed, pairs)


def _assign_targets(m, lo, hi, allowed, pairs):
    later = [[] for _ in range(m)]  # constraints checked once both ends are assigned
    for j, k, strict in pairs:
        later[max(j, k)].append((j, k, strict))
    vals = [0] * m

    def rec(j):
        if j == m:
            yield tuple(vals)
            return
        for x in range(lo[j], hi[j] + 1):
            if x not in allowed:
                continue
            vals[j] = x
            ok = True
            for a, b, strict in later[j]:
                if vals[a] < vals[b] or (strict and vals[a] == vals[b]):
                    ok = False
                    break
            if ok:
                yield from rec(j + 1)

    yield from rec(0)


def satisfied_by(g: McGraph, before: Sequence[int], after: Sequence[int]) -> bool:
    values = list(before) + list(after)
    for a in range(g.size):
        row, strict = g.ge[a], g.gt[a]
        for b in range(g.size):
            if row >> b & 1:
                if values[a] < values[b] or (strict >> b & 1 and values[a] == values[b]):
                    return False
    return True


def load(path) -> Cts:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())
