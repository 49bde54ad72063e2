"""Monotonicity-constraint graphs, multipaths and their algebra.

An MC over a source point of arity ``n`` and a target point of arity ``m`` is
stored as two adjacency bit-matrices over the nodes ``0..n-1`` (source
variables) and ``n..n+m-1`` (target variables): ``ge[u]`` has bit ``v`` set
when ``u >= v`` is asserted (strict arcs included) and ``gt[u]`` has bit ``v``
set when ``u > v`` is asserted.  Storing a strict arc in both masks is what
makes "the strictest relation wins" the normal form.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import InconsistentRestriction, MismatchedPoints, NegativeCycle


class Strictness(enum.Enum):
    STRICT = ">"
    NONSTRICT = ">="

    def then(self, other: Strictness) -> Strictness:
        if self is Strictness.STRICT or other is Strictness.STRICT:
            return Strictness.STRICT
        return Strictness.NONSTRICT

    @property
    def weight(self) -> int:
        return -1 if self is Strictness.STRICT else 0


STRICT = Strictness.STRICT
NONSTRICT = Strictness.NONSTRICT


class Side(enum.IntEnum):
    SOURCE = 0
    TARGET = 1


@dataclass(frozen=True, order=True)
class VarNode:
    side: Side
    index: int  # 1-based

    def __str__(self) -> str:
        return f"x{self.index}" + ("'" if self.side is Side.TARGET else "")


def src(i: int) -> VarNode:
    return VarNode(Side.SOURCE, i)


def tgt(i: int) -> VarNode:
    return VarNode(Side.TARGET, i)


@dataclass(frozen=True, order=True)
class Arc:
    tail: VarNode
    head: VarNode
    strictness: Strictness = field(compare=False)

    @property
    def strict(self) -> bool:
        return self.strictness is Strictness.STRICT


# ---------------------------------------------------------------------------
# bit-matrix kernels


def _warshall(ge: list[int], gt: list[int], pivots: Iterable[int]) -> None:
    """Transitive closure with strictness propagation, restricted to ``pivots``.

    Paths whose intermediate nodes all lie in ``pivots`` are summarised.
    """
    size = len(ge)
    for k in pivots:
        bit = 1 << k
        gek = ge[k]
        gtk = gt[k]
        for u in range(size):
            row = ge[u]
            if row & bit:
                if gt[u] & bit:
                    ge[u] = row | gek
                    gt[u] |= gek
                else:
                    ge[u] = row | gek
                    gt[u] |= gtk


def _drop_trivial_loops(ge: list[int], gt: list[int]) -> None:
    for u in range(len(ge)):
        bit = 1 << u
        if not gt[u] & bit:
            ge[u] &= ~bit


def _has_strict_loop(gt: Sequence[int]) -> bool:
    return any(row >> u & 1 for u, row in enumerate(gt))


@dataclass(frozen=True)
class McGraph:
    """A monotonicity constraint ``source -> target``."""

    source: str
    target: str
    n_src: int
    n_dst: int
    ge: tuple[int, ...]
    gt: tuple[int, ...]
    closed: bool = field(default=False, compare=False, repr=False)

    # -- construction -----------------------------------------------------

    @classmethod
    def from_arcs(
        cls,
        source: str,
        target: str,
        n_src: int,
        n_dst: int,
        arcs: Iterable[tuple[VarNode, VarNode, Strictness] | Arc],
    ) -> McGraph:
        size = n_src + n_dst
        ge = [0] * size
        gt = [0] * size
        for arc in arcs:
            if isinstance(arc, Arc):
                u, v, s = arc.tail, arc.head, arc.strictness
            else:
                u, v, s = arc
            a = _node_id(u, n_src, n_dst)
            b = _node_id(v, n_src, n_dst)
            ge[a] |= 1 << b
            if s is Strictness.STRICT:
                gt[a] |= 1 << b
        _drop_trivial_loops(ge, gt)
        return cls(source, target, n_src, n_dst, tuple(ge), tuple(gt))

    @classmethod
    def identity(cls, point: str, arity: int) -> McGraph:
        arcs = []
        for i in range(1, arity + 1):
            arcs.append((src(i), tgt(i), NONSTRICT))
            arcs.append((tgt(i), src(i), NONSTRICT))
        return logical_closure(cls.from_arcs(point, point, arity, arity, arcs))

    @classmethod
    def unsatisfiable(cls, source: str, target: str, n_src: int, n_dst: int) -> McGraph:
        size = n_src + n_dst
        full = (1 << size) - 1
        return cls(source, target, n_src, n_dst, (full,) * size, (full,) * size, True)

    # -- queries ----------------------------------------------------------

    @property
    def size(self) -> int:
        return self.n_src + self.n_dst

    def node(self, i: int) -> VarNode:
        return src(i + 1) if i < self.n_src else tgt(i - self.n_src + 1)

    def node_id(self, v: VarNode) -> int:
        return _node_id(v, self.n_src, self.n_dst)

    def relation(self, u: VarNode, v: VarNode) -> Strictness | None:
        a, b = self.node_id(u), self.node_id(v)
        if self.gt[a] >> b & 1:
            return STRICT
        if self.ge[a] >> b & 1:
            return NONSTRICT
        return None

    def related(self, u: VarNode, v: VarNode) -> bool:
        return self.relation(u, v) is not None or self.relation(v, u) is not None

    @property
    def arcs(self) -> frozenset[Arc]:
        return frozenset(self.iter_arcs())

    def iter_arcs(self) -> Iterator[Arc]:
        for a in range(self.size):
            row = self.ge[a]
            strict = self.gt[a]
            b = 0
            while row:
                if row & 1:
                    yield Arc(
                        self.node(a),
                        self.node(b),
                        STRICT if strict >> b & 1 else NONSTRICT,
                    )
                row >>= 1
                b += 1

    def sorted_arcs(self) -> list[Arc]:
        return sorted(self.iter_arcs())

    @property
    def key(self) -> tuple:
        """Canonical identity: endpoints plus the arc masks."""
        return (self.source, self.target, self.n_src, self.n_dst, self.ge, self.gt)

    @property
    def is_cyclic(self) -> bool:
        return self.source == self.target

    def with_points(self, source: str, target: str) -> McGraph:
        return McGraph(source, target, self.n_src, self.n_dst, self.ge, self.gt, self.closed)

    def in_situ(self, i: int) -> tuple[Strictness | None, Strictness | None]:
        """Relations ``(x_i ≻ x_i', x_i' ≻ x_i)`` for 1-based ``i``."""
        return self.relation(src(i), tgt(i)), self.relation(tgt(i), src(i))

    def render(
        self,
        src_names: Sequence[str] | None = None,
        dst_names: Sequence[str] | None = None,
    ) -> str:
        return ", ".join(render_relations(self, src_names, dst_names))

    def __str__(self) -> str:
        return self.render()


def _node_id(v: VarNode, n_src: int, n_dst: int) -> int:
    if v.side is Side.SOURCE:
        if not 1 <= v.index <= n_src:
            raise IndexError(f"{v} outside source arity {n_src}")
        return v.index - 1
    if not 1 <= v.index <= n_dst:
        raise IndexError(f"{v} outside target arity {n_dst}")
    return n_src + v.index - 1


def render_relations(
    g: McGraph,
    src_names: Sequence[str] | None = None,
    dst_names: Sequence[str] | None = None,
) -> list[str]:
    """Relation atoms in canonical order, with mutual ``>=`` pairs re-sugared to ``=``."""

    def name(v: VarNode) -> str:
        if v.side is Side.SOURCE:
            return src_names[v.index - 1] if src_names else f"x{v.index}"
        return (dst_names[v.index - 1] if dst_names else f"x{v.index}") + "'"

    out = []
    for arc in g.sorted_arcs():
        u, v = arc.tail, arc.head
        back = g.relation(v, u)
        if arc.strictness is NONSTRICT and back is NONSTRICT:
            if u < v:
                out.append(f"{name(u)} = {name(v)}")
            continue
        out.append(f"{name(u)} {arc.strictness.value} {name(v)}")
    return out


# ---------------------------------------------------------------------------
# single-graph operations


def logical_closure(g: McGraph) -> McGraph:
    if g.closed:
        return g
    ge, gt = list(g.ge), list(g.gt)
    _warshall(ge, gt, range(g.size))
    if _has_strict_loop(gt):
        return McGraph.unsatisfiable(g.source, g.target, g.n_src, g.n_dst)
    _drop_trivial_loops(ge, gt)
    return McGraph(g.source, g.target, g.n_src, g.n_dst, tuple(ge), tuple(gt), True)


def is_satisfiable(g: McGraph | Multipath) -> bool:
    """True iff there is no cycle through a strict arc."""
    if isinstance(g, Multipath):
        ge, gt = g.bit_graph()
        _warshall(ge, gt, range(len(ge)))
        return not _has_strict_loop(gt)
    return not _has_strict_loop(logical_closure(g).gt)


def compose(g1: McGraph, g2: McGraph) -> McGraph:
    """``g1 ; g2``: the relations between outer layers implied by some middle state."""
    if g1.target != g2.source or g1.n_dst != g2.n_src:
        raise MismatchedPoints(
            f"cannot compose {g1.source}->{g1.target} with {g2.source}->{g2.target}"
        )
    n, k, m = g1.n_src, g1.n_dst, g2.n_dst
    size = n + k + m
    ge = list(g1.ge) + [0] * m
    gt = list(g1.gt) + [0] * m
    for u in range(k + m):
        ge[u + n] |= g2.ge[u] << n
        gt[u + n] |= g2.gt[u] << n
    # Between two closed graphs every new path changes graph at a middle node.
    pivots = range(n, n + k) if g1.closed and g2.closed else range(size)
    _warshall(ge, gt, pivots)
    if _has_strict_loop(gt):
        return McGraph.unsatisfiable(g1.source, g2.target, n, m)
    low = (1 << n) - 1
    shift = n + k

    def project(row: int) -> int:
        return (row & low) | ((row >> shift) << n)

    outer = list(range(n)) + list(range(shift, size))
    pge = [project(ge[u]) for u in outer]
    pgt = [project(gt[u]) for u in outer]
    _drop_trivial_loops(pge, pgt)
    return McGraph(g1.source, g2.target, n, m, tuple(pge), tuple(pgt), True)


def restrict(g: McGraph, keep_src: Sequence[int], keep_dst: Sequence[int]) -> McGraph:
    """Induced subgraph on the kept 1-based indices, renumbered in order, re-closed."""
    g = logical_closure(g)
    old = [i - 1 for i in keep_src] + [g.n_src + j - 1 for j in keep_dst]
    ns, nd = len(keep_src), len(keep_dst)
    ge = []
    gt = []
    for a in old:
        row_ge = row_gt = 0
        for new_b, b in enumerate(old):
            if g.ge[a] >> b & 1:
                row_ge |= 1 << new_b
            if g.gt[a] >> b & 1:
                row_gt |= 1 << new_b
        ge.append(row_ge)
        gt.append(row_gt)
    return logical_closure(McGraph(g.source, g.target, ns, nd, tuple(ge), tuple(gt)))


def quotient(
    g: McGraph,
    src_map: Sequence[int],
    dst_map: Sequence[int],
    n_src: int,
    n_dst: int,
    extra: Iterable[tuple[int, int, bool]] = (),
) -> McGraph:
    """Merge nodes: source ``i`` becomes source ``src_map[i-1]``, likewise for targets.

    ``extra`` adds raw arcs ``(a, b, strict)`` over the new 0-based node ids.
    The result is logically closed (or the canonical unsatisfiable graph).
    """
    new_id = [m - 1 for m in src_map] + [n_src + m - 1 for m in dst_map]
    size = n_src + n_dst
    ge = [0] * size
    gt = [0] * size

    def remap(row: int) -> int:
        out = 0
        b = 0
        while row:
            if row & 1:
                out |= 1 << new_id[b]
            row >>= 1
            b += 1
        return out

    for a in range(g.size):
        if g.ge[a]:
            ge[new_id[a]] |= remap(g.ge[a])
        if g.gt[a]:
            gt[new_id[a]] |= remap(g.gt[a])
    for a, b, strict in extra:
        ge[a] |= 1 << b
        if strict:
            gt[a] |= 1 << b
    if _has_strict_loop(gt):
        return McGraph.unsatisfiable(g.source, g.target, n_src, n_dst)
    _drop_trivial_loops(ge, gt)
    return logical_closure(McGraph(g.source, g.target, n_src, n_dst, tuple(ge), tuple(gt)))


# ---------------------------------------------------------------------------
# multipaths

Node = tuple[int, int]  # (time coordinate t, 1-based variable index)


@dataclass(frozen=True)
class Multipath:
    points: tuple[str, ...]
    steps: tuple[McGraph, ...]
    arities: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.points) != len(self.steps) + 1 or len(self.arities) != len(self.points):
            raise MismatchedPoints("multipath needs one more point than steps")
        for t, g in enumerate(self.steps):
            if (g.source, g.target) != (self.points[t], self.points[t + 1]):
                raise MismatchedPoints(f"step {t + 1} does not connect {self.points[t]}")
            if (g.n_src, g.n_dst) != (self.arities[t], self.arities[t + 1]):
                raise MismatchedPoints(f"step {t + 1} has inconsistent arities")

    @classmethod
    def of(cls, steps: Sequence[McGraph]) -> Multipath:
        if not steps:
            raise MismatchedPoints("use Multipath.empty for a length-0 multipath")
        points = (steps[0].source,) + tuple(g.target for g in steps)
        arities = (steps[0].n_src,) + tuple(g.n_dst for g in steps)
        return cls(points, tuple(steps), arities)

    @classmethod
    def empty(cls, point: str, arity: int) -> Multipath:
        return cls((point,), (), (arity,))

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def offsets(self) -> list[int]:
        out, acc = [], 0
        for a in self.arities:
            out.append(acc)
            acc += a
        return out

    @property
    def size(self) -> int:
        return sum(self.arities)

    def nodes(self) -> list[Node]:
        return [(t, i) for t, a in enumerate(self.arities) for i in range(1, a + 1)]

    def node_id(self, node: Node) -> int:
        t, i = node
        if not 1 <= i <= self.arities[t]:
            raise IndexError(f"x[{t},{i}] outside arity {self.arities[t]}")
        return self.offsets[t] + i - 1

    def arcs(self) -> Iterator[tuple[Node, Node, Strictness]]:
        for t, g in enumerate(self.steps):
            for arc in g.iter_arcs():
                yield _layer(arc.tail, t), _layer(arc.head, t), arc.strictness

    def bit_graph(self) -> tuple[list[int], list[int]]:
        size = self.size
        ge = [0] * size
        gt = [0] * size
        for u, v, s in self.arcs():
            a, b = self.node_id(u), self.node_id(v)
            ge[a] |= 1 << b
            if s is STRICT:
                gt[a] |= 1 << b
        return ge, gt

    def weight_matrix(self) -> np.ndarray:
        """Dense min-weight matrix of single arcs (0 non-strict, -1 strict, +inf none)."""
        size = self.size
        w = np.full((size, size), np.inf)
        np.fill_diagonal(w, 0.0)
        for u, v, s in self.arcs():
            a, b = self.node_id(u), self.node_id(v)
            w[a, b] = min(w[a, b], s.weight)
        return w


def _layer(v: VarNode, t: int) -> Node:
    return (t + v.side, v.index)


def collapse(m: Multipath) -> McGraph:
    if not m.steps:
        raise MismatchedPoints("collapse needs a multipath of length >= 1")
    acc = logical_closure(m.steps[0])
    for g in m.steps[1:]:
        acc = compose(acc, logical_closure(g))
    return acc


def distance_matrix(m: Multipath) -> np.ndarray:
    """All-pairs minimum path weights; raises NegativeCycle on a strict cycle."""
    d = m.weight_matrix()
    for k in range(d.shape[0]):
        d = np.minimum(d, d[:, k : k + 1] + d[k : k + 1, :])
    if d.size and (np.diagonal(d) < 0).any():
        raise NegativeCycle("multipath contains a strict cycle")
    return d


def min_weight_path(m: Multipath, start: Node, end: Node) -> float:
    d = distance_matrix(m)
    return float(d[m.node_id(start), m.node_id(end)])


def n_satisfiable(m: Multipath, n: int, max_node: Node, min_node: Node) -> bool:
    """Satisfiable with x_max pinned to N and x_min pinned to 0."""
    try:
        d = distance_matrix(m)
    except NegativeCycle:
        return False
    top, bot = m.node_id(max_node), m.node_id(min_node)
    return bool(d[top, bot] >= -n and d[bot, top] >= n)


def n_assignment(m: Multipath, n: int, max_node: Node, min_node: Node) -> dict[Node, int]:
    """The constructive witness for N-satisfiability: x_min = 0, x_max = N."""
    d = distance_matrix(m)
    top, bot = m.node_id(max_node), m.node_id(min_node)
    if d[top, bot] < -n:
        raise NegativeCycle(f"x_max to x_min path of weight {d[top, bot]:.0f} < -{n}")
    if d[bot, top] < n:
        raise NegativeCycle(f"x_min to x_max path of weight {d[bot, top]:.0f} < {n}")
    sigma: dict[Node, int | None] = {v: None for v in m.nodes()}
    ids = {v: m.node_id(v) for v in m.nodes()}
    for v, a in ids.items():
        if d[a, bot] == 0 and d[bot, a] == 0:
            sigma[v] = 0
        elif d[top, a] < np.inf and d[a, bot] < np.inf:
            sigma[v] = n + int(d[top, a])
    return extend_assignment(m, sigma, distances=d)


def satisfies(m: Multipath, sigma: Mapping[Node, int | None]) -> bool:
    """B-restricted semantics: ``None`` satisfies every relation."""
    for u, v, s in m.arcs():
        a, b = sigma.get(u), sigma.get(v)
        if a is None or b is None:
            continue
        if a < b or (s is STRICT and a == b):
            return False
    return True


def extend_assignment(
    m: Multipath,
    sigma: Mapping[Node, int | None],
    distances: np.ndarray | None = None,
) -> dict[Node, int]:
    """Extend a partial assignment to a total one by alternating down/up layers."""
    d = distance_matrix(m) if distances is None else distances
    nodes = m.nodes()
    ids = [m.node_id(v) for v in nodes]
    value: dict[int, int] = {}
    for v, a in zip(nodes, ids):
        if sigma.get(v) is not None:
            value[a] = int(sigma[v])
    assigned = sorted(value)
    for a in assigned:
        for b in assigned:
            if a != b and d[a, b] < np.inf and value[b] > value[a] + d[a, b]:
                raise InconsistentRestriction(
                    f"{nodes[ids.index(a)]} and {nodes[ids.index(b)]} violate the multipath"
                )
    done = set(assigned)
    pending = set(ids) - done
    while True:
        # down layer: everything reachable from the assigned set
        down = [v for v in sorted(pending) if any(d[u, v] < np.inf for u in done)]
        new = {v: min(value[u] + d[u, v] for u in done if d[u, v] < np.inf) for v in down}
        value.update({v: int(x) for v, x in new.items()})
        done |= set(down)
        pending -= set(down)
        # up layer: everything that reaches the assigned set
        up = [u for u in sorted(pending) if any(d[u, v] < np.inf for v in done)]
        new = {u: max(value[v] - d[u, v] for v in done if d[u, v] < np.inf) for u in up}
        value.update({u: int(x) for u, x in new.items()})
        done |= set(up)
        pending -= set(up)
        if not down and not up:
            break
    # unconnected remainder: a potential over its own min-weight distances
    rest = sorted(pending)
    for v in rest:
        value[v] = int(min(d[u, v] for u in rest if d[u, v] < np.inf))
    return {v: value[a] for v, a in zip(nodes, ids)}
