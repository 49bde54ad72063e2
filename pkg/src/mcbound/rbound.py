"""Reachability bounds: existence, exact polynomial degree, and certificates."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

from .closure import ClosureSet, is_idempotent, restrict
from .cts import Cts
from .errors import CertificateViolation, InconsistentCertificate, NoBound
from .mcgraph import NONSTRICT, STRICT, McGraph, Multipath, n_satisfiable
from .termination import Analysis, omega_satisfiable, prepare

DESCENDING = -1
ASCENDING = 1


@dataclass(frozen=True)
class LevelPartition:
    """Intervals of consecutive indices with levels, plus a direction per variable.

    Direction -1 means the variable is measured by x - x_min (it descends);
    +1 means x_max - x (it ascends).
    """

    n: int
    intervals: tuple[tuple[int, int], ...]
    levels: tuple[int, ...]
    directions: tuple[int, ...]

    @property
    def depth(self) -> int:
        return max(self.levels, default=0)

    def level(self, i: int) -> int:
        for (lo, hi), lev in zip(self.intervals, self.levels):
            if lo <= i <= hi:
                return lev
        raise IndexError(i)

    def validate(self) -> None:
        expect = 1
        for lo, hi in self.intervals:
            if lo != expect or hi < lo:
                raise InconsistentCertificate("intervals must cover 1..n consecutively")
            expect = hi + 1
        if expect != self.n + 1:
            raise InconsistentCertificate("intervals must cover 1..n")
        if any(a == b for a, b in zip(self.levels, self.levels[1:])):
            raise InconsistentCertificate("adjacent intervals share a level")
        if set(range(1, self.depth + 1)) - set(self.levels):
            raise InconsistentCertificate("some level has no interval")
        if len(self.directions) != self.n or set(self.directions) - {-1, 1}:
            raise InconsistentCertificate("one direction of -1 or +1 per variable")

    @classmethod
    def from_levels(cls, level_of: Sequence[int], directions: Sequence[int]) -> LevelPartition:
        intervals, levels = [], []
        for i, lev in enumerate(level_of, start=1):
            if levels and levels[-1] == lev:
                intervals[-1] = (intervals[-1][0], i)
            else:
                intervals.append((i, i))
                levels.append(lev)
        return cls(len(level_of), tuple(intervals), tuple(levels), tuple(directions))


@dataclass(frozen=True)
class ConsistentSet:
    """``graphs[h-1]`` is the MC active at level h; witnesses are closure label paths."""

    graphs: tuple[McGraph, ...]
    witnesses: tuple[tuple[str, ...], ...]


@dataclass(frozen=True)
class Ranking:
    components: tuple[str, ...]

    def __str__(self) -> str:
        return "<" + ", ".join(self.components) + ">"


@dataclass(frozen=True)
class RbReport:
    point: str
    exists: bool
    degree: int | None
    partition: LevelPartition | None = None
    certificate: ConsistentSet | None = None
    ranking: Ranking | None = None
    names: tuple[str, ...] = ()
    variants: tuple[RbReport, ...] = field(default=(), compare=False)
    witness_point: str | None = None

    @property
    def bound(self) -> str:
        return f"Theta(N^{self.degree})" if self.exists else "none"


# ---------------------------------------------------------------------------
# closure at a point


def closure_at(
    cs: ClosureSet, f: str, bounded: Sequence[int] | frozenset[int]
) -> list[tuple[McGraph, tuple[str, ...]]]:
    """Cyclic elements at ``f`` restricted to ``bounded``, deduplicated, shortest witness first."""
    keep = sorted(bounded)
    seen: dict[tuple, tuple[McGraph, tuple[str, ...]]] = {}
    for e in sorted(cs.between(f, f), key=lambda e: (len(e.witness), e.witness)):
        g = restrict(e.mc, keep)
        seen.setdefault(g.key, (g, e.witness))
    return list(seen.values())


def _analysis(c: Cts | Analysis) -> Analysis:
    return c if isinstance(c, Analysis) else prepare(c)


def _variants(an: Analysis, point: str) -> list[str]:
    if point in an.elaborated.points:
        return [point]
    ids = sorted(p.id for p in an.elaborated.variants(point))
    if not ids:
        if point in an.instrumented.cts.point_map:
            return []
        raise KeyError(f"unknown point {point!r}")
    return ids


def rb_exists(c: Cts | Analysis, point: str) -> bool:
    an = _analysis(c)
    return all(_exists_at(an, pid) for pid in _variants(an, point))


def _exists_at(an: Analysis, pid: str) -> bool:
    for g, _ in closure_at(an.closure, pid, an.bounded[pid]):
        if is_idempotent(g) and omega_satisfiable(g, check=False):
            return False
    return True


# ---------------------------------------------------------------------------
# degree search


def _profile(g: McGraph, directions: Sequence[int]) -> tuple[int, int] | None:
    """(related mask, strict mask) of in-situ arcs if all agree with ``directions``."""
    related = strict = 0
    for i in range(1, g.n_src + 1):
        down, up = g.in_situ(i)
        if down is None and up is None:
            continue
        rel = down if directions[i - 1] == DESCENDING else up
        if rel is None:
            return None
        related |= 1 << (i - 1)
        if rel is STRICT:
            strict |= 1 << (i - 1)
    return related, strict


def _longest_chain(
    graphs: Sequence[tuple[McGraph, tuple[str, ...]]], directions: Sequence[int]
) -> list[int]:
    """Indices of graphs G_1, G_2, ... forming the longest consistent chain."""
    profiles = []
    for idx, (g, _) in enumerate(graphs):
        p = _profile(g, directions)
        if p is not None and p[1]:
            profiles.append((p[0], p[1], idx))
    # G_{h+1} must relate a strict subset of G_h's variables and none of G_h's strict ones
    profiles.sort(key=lambda p: bin(p[0]).count("1"))
    best: dict[int, list[int]] = {}
    for k, (rel, strict, idx) in enumerate(profiles):
        chain = [idx]
        for k2 in range(k):
            rel2, _, idx2 = profiles[k2]
            if rel2 & ~rel or rel2 == rel or rel2 & strict:
                continue
            if len(best[k2]) + 1 > len(chain):
                chain = [idx] + best[k2]
        best[k] = chain
    return max(best.values(), key=len, default=[])


def _search(
    graphs: Sequence[tuple[McGraph, tuple[str, ...]]], n: int
) -> tuple[int, LevelPartition | None, ConsistentSet | None]:
    best_len, best = 0, None
    for directions in itertools.product((DESCENDING, ASCENDING), repeat=n):
        chain = _longest_chain(graphs, directions)
        if len(chain) > best_len:
            best_len, best = len(chain), (directions, chain)
            if best_len == n:
                break
    if best is None:
        return 0, None, None
    directions, chain = best
    level_of = [0] * n
    for h, idx in enumerate(chain, start=1):
        g = graphs[idx][0]
        rel, _ = _profile(g, directions)
        for i in range(n):
            if rel >> i & 1:
                level_of[i] = h
    lp = LevelPartition.from_levels(level_of, directions)
    cert = ConsistentSet(
        tuple(graphs[i][0] for i in chain), tuple(graphs[i][1] for i in chain)
    )
    return best_len, lp, cert


def consistent_at(g: McGraph, lp: LevelPartition, h: int) -> bool:
    """Still above h, active at h, disconnected below h, checked arc by arc."""
    active = False
    for i in range(1, lp.n + 1):
        lev = lp.level(i)
        down, up = g.in_situ(i)
        rel = down if lp.directions[i - 1] == DESCENDING else up
        if lev < h:
            if down is not None or up is not None:
                return False
        elif rel is None or (lev > h and rel is STRICT):
            return False
        elif lev == h:
            active |= rel is STRICT
    return active


def truncate(lp: LevelPartition, cs: ConsistentSet, k: int) -> tuple[LevelPartition, ConsistentSet]:
    """A depth-k certificate from a deeper one: levels above k fold into level k."""
    if not 0 < k <= lp.depth:
        raise ValueError(k)
    level_of = [min(lp.level(i), k) for i in range(1, lp.n + 1)]
    return (
        LevelPartition.from_levels(level_of, lp.directions),
        ConsistentSet(cs.graphs[:k], cs.witnesses[:k]),
    )


def verify_certificate(lp: LevelPartition, cs: ConsistentSet) -> None:
    lp.validate()
    if len(cs.graphs) != lp.depth:
        raise InconsistentCertificate("one MC per level is required")
    for h, g in enumerate(cs.graphs, start=1):
        if g.n_src != lp.n or not consistent_at(g, lp, h):
            raise InconsistentCertificate(f"MC for level {h} is not consistent with the partition")


def rbd(c: Cts | Analysis, point: str, k: int) -> bool:
    """Whether the visits to ``point`` are in Omega(N^k)."""
    if k <= 0:
        return True
    report = max_degree(c, point)
    if report.degree >= k and report.partition is not None:
        # degree is monotone: a deeper certificate folds into one of depth k
        verify_certificate(*truncate(report.partition, report.certificate, k))
    return report.degree >= k


def max_degree(c: Cts | Analysis, point: str) -> RbReport:
    """Largest L with a consistent set of depth L; per origin point, the max over its variants."""
    an = _analysis(c)
    reports = []
    for pid in _variants(an, point):
        reports.append(_degree_at(an, pid))
    if not reports:
        return RbReport(point, True, 0)
    if any(not r.exists for r in reports):
        raise NoBound(f"visits to {point} are not bounded by any function of N")
    top = max(reports, key=lambda r: r.degree)
    if len(reports) == 1 and reports[0].point == point:
        return top
    return RbReport(
        point,
        True,
        top.degree,
        top.partition,
        top.certificate,
        top.ranking,
        top.names,
        tuple(reports),
        top.point,
    )


def _degree_at(an: Analysis, pid: str) -> RbReport:
    keep = sorted(an.bounded[pid])
    names = tuple(an.elaborated.cts.point(pid).var_names[i - 1] for i in keep)
    if not _exists_at(an, pid):
        return RbReport(pid, False, None, names=names)
    graphs = closure_at(an.closure, pid, keep)
    degree, lp, cert = _search(graphs, len(keep))
    if lp is None:
        return RbReport(pid, True, 0, names=names, witness_point=pid)
    verify_certificate(lp, cert)
    return RbReport(pid, True, degree, lp, cert, emit_ranking(lp, names, cert), names, (), pid)


def degree_table(c: Cts | Analysis) -> dict[str, RbReport | None]:
    """Per original flow point: the report, or None when no bound exists."""
    an = _analysis(c)
    out = {}
    for p in an.original.points:
        try:
            out[p.id] = max_degree(an, p.id)
        except NoBound:
            out[p.id] = None
    return out


# ---------------------------------------------------------------------------
# certificates


def emit_ranking(
    lp: LevelPartition,
    names: Sequence[str] | None = None,
    cs: ConsistentSet | None = None,
    max_name: str = "$max",
    min_name: str = "$min",
) -> Ranking:
    """Lexicographic tuple <rho_L, ..., rho_1>; with ``cs`` the decrease is checked first."""
    if cs is not None:
        verify_certificate(lp, cs)
        for h, g in enumerate(cs.graphs, start=1):
            _check_decrease(g, lp, h)
    names = names or tuple(f"x{i}" for i in range(1, lp.n + 1))
    # terms that never change contribute nothing
    constant = {
        i
        for i in range(1, lp.n + 1)
        if {max_name, min_name} & set(names[i - 1].split("."))
        or (cs is not None and all(g.in_situ(i) == (NONSTRICT, NONSTRICT) for g in cs.graphs))
    }
    comps = []
    for h in range(lp.depth, 0, -1):
        terms = []
        for i in range(1, lp.n + 1):
            if lp.level(i) != h or i in constant:
                continue
            if lp.directions[i - 1] == DESCENDING:
                terms.append(f"({names[i - 1]} - {min_name})")
            else:
                terms.append(f"({max_name} - {names[i - 1]})")
        comps.append(" + ".join(terms))
    return Ranking(tuple(comps))


def _check_decrease(g: McGraph, lp: LevelPartition, h: int) -> None:
    """Component h must drop strictly and higher components must not grow under ``g``."""
    for level in range(h, lp.depth + 1):
        strict = False
        for i in range(1, lp.n + 1):
            if lp.level(i) != level:
                continue
            down, up = g.in_situ(i)
            rel = down if lp.directions[i - 1] == DESCENDING else up
            if rel is None:
                raise InconsistentCertificate(f"component {level} may grow at x{i}")
            strict |= rel is STRICT
        if level == h and not strict:
            raise InconsistentCertificate(f"component {h} does not strictly decrease")


def eta(t: int, b: int, depth: int) -> int:
    """Largest h <= depth with b^(h-1) dividing t."""
    h = 1
    while h < depth and t % (b**h) == 0:
        h += 1
    return h


def build_witness_multipath(
    lp: LevelPartition, cs: ConsistentSet, n_param: int
) -> Multipath:
    """The multipath G_eta(1) ... G_eta(b^L - 1) with b = floor(N/n); it must be N-satisfiable."""
    n = lp.n
    if n_param < n:
        raise ValueError(f"N = {n_param} is smaller than the {n} bounded variables")
    verify_certificate(lp, cs)
    b = n_param // n
    depth = lp.depth
    length = b**depth - 1
    point = cs.graphs[0].source
    if length == 0:
        m = Multipath.empty(point, n)
    else:
        m = Multipath.of([cs.graphs[eta(t, b, depth) - 1] for t in range(1, length + 1)])
    if not n_satisfiable(m, n_param, (0, n), (0, 1)):
        raise CertificateViolation(f"witness multipath of length {length} is not {n_param}-satisfiable")
    return m
