"""A small first-order string language: parser, stack-measuring interpreter, MC abstraction.

Concrete syntax, one clause per ``;``::

    # optional directives
    entry f;  alphabet 0 1;  variant 2;

    f(eps, eps) = 1;
    f(0:x1, 0:x2) = f(x1, x2);
    f(x1, ?) = g(x1, eps) ? h(1:x1, x1), f(eps, eps);
    g(x1, x2) = let y = f(x1, x2) in h(y, 0:0:x2);

Parameter patterns at position i are ``eps``, ``x<i>``, ``a:x<i>`` or ``?``.
Actual parameters are ``eps``, ``a``, ``x<j>``, ``a:x<j>``, ``b:a:x<j>`` and,
in the second call of a ``let``, ``y``. Symbols are single digits.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Sequence, Union

from .cts import Cts, FlowPoint, Transition
from .errors import ArityMismatch, FuelExhausted, SfplSyntaxError, VariantViolation
from .mcgraph import NONSTRICT, STRICT, McGraph, src, tgt

ZERO_VAR = "0"


# ---------------------------------------------------------------------------
# syntax


@dataclass(frozen=True)
class Pattern:
    """``kind`` is 'eps', 'var' or 'cons'; ``?`` parses as an anonymous 'var'."""

    kind: str
    index: int
    symbol: str = ""
    wildcard: bool = False

    def __str__(self) -> str:
        if self.kind == "eps":
            return "eps"
        if self.wildcard:
            return "?"
        var = f"x{self.index}"
        return f"{self.symbol}:{var}" if self.kind == "cons" else var


@dataclass(frozen=True)
class Actual:
    """``prefix`` symbols consed onto variable ``var`` (0 = none, -1 = the let-bound y)."""

    prefix: str
    var: int

    def mentions(self) -> int | None:
        return self.var if self.var > 0 else None

    def __str__(self) -> str:
        if self.var == 0:
            return self.prefix or "eps"
        base = "y" if self.var < 0 else f"x{self.var}"
        return "".join(f"{a}:" for a in self.prefix) + base


@dataclass(frozen=True)
class Call:
    function: str
    args: tuple[Actual, ...]
    label: str = ""

    def __str__(self) -> str:
        return f"{self.function}({', '.join(map(str, self.args))})"


@dataclass(frozen=True)
class Simple:
    value: Actual


@dataclass(frozen=True)
class Tail:
    call: Call


@dataclass(frozen=True)
class Conditional:
    test: Call
    then: Call
    otherwise: Call


@dataclass(frozen=True)
class Let:
    bound: Call
    body: Call


Expr = Union[Simple, Tail, Conditional, Let]


def calls_of(e: Expr) -> tuple[Call, ...]:
    if isinstance(e, Simple):
        return ()
    if isinstance(e, Tail):
        return (e.call,)
    if isinstance(e, Conditional):
        return (e.test, e.then, e.otherwise)
    return (e.bound, e.body)


def _variant_of(e: Expr) -> int:
    return 3 if isinstance(e, Let) else 2 if isinstance(e, Conditional) else 1


@dataclass(frozen=True)
class Clause:
    function: str
    patterns: tuple[Pattern, ...]
    body: Expr
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class SfplProgram:
    clauses: tuple[Clause, ...]
    entry: str
    arity: int
    alphabet: frozenset[str]
    variant: int
    warnings: tuple[str, ...] = field(default=(), compare=False)

    @property
    def functions(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for c in self.clauses:
            seen.setdefault(c.function)
        return tuple(seen)

    def clauses_of(self, f: str) -> tuple[Clause, ...]:
        return tuple(c for c in self.clauses if c.function == f)


_TOKEN = re.compile(
    r"\s*(?:(?P<comment>#[^\n]*)|(?P<name>[A-Za-z_][A-Za-z0-9_]*)|(?P<sym>[0-9])"
    r"|(?P<eps>ε)|(?P<punct>[(),:;=?]))"
)


class _Tokens:
    def __init__(self, text: str) -> None:
        self.items: list[tuple[str, str, int, int]] = []
        pos, line, line_start = 0, 1, 0
        while True:
            while pos < len(text) and text[pos].isspace():
                if text[pos] == "\n":
                    line, line_start = line + 1, pos + 1
                pos += 1
            if pos >= len(text):
                break
            m = _TOKEN.match(text, pos)
            if not m or m.end() == pos:
                raise SfplSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
            kind = m.lastgroup
            value = m.group(kind)
            col = m.start(kind) - line_start + 1
            pos = m.end()
            if kind == "comment":
                continue
            if kind == "eps" or (kind == "name" and value == "eps"):
                kind, value = "eps", "eps"
            self.items.append((kind, value, line, col))
        self.i = 0

    def peek(self, ahead: int = 0) -> tuple[str, str, int, int]:
        j = self.i + ahead
        return self.items[j] if j < len(self.items) else ("end", "", 0, 0)

    def next(self) -> tuple[str, str, int, int]:
        tok = self.peek()
        self.i += 1
        return tok

    def expect(self, value: str) -> tuple[str, str, int, int]:
        tok = self.next()
        if tok[1] != value or tok[0] not in ("punct", "name"):
            self.fail(f"expected {value!r}", tok)
        return tok

    @staticmethod
    def fail(msg: str, tok: tuple[str, str, int, int]) -> None:
        found = tok[1] or "end of input"
        raise SfplSyntaxError(f"{msg}, found {found!r}", tok[2], tok[3])


_VAR = re.compile(r"x([1-9][0-9]*)$")
_KEYWORDS = {"let", "in", "y", "entry", "alphabet", "variant"}


def parse_sfpl(text: str) -> SfplProgram:
    toks = _Tokens(text)
    entry = None
    alphabet: set[str] | None = None
    declared = None
    clauses: list[Clause] = []
    while toks.peek()[0] != "end":
        kind, value, line, col = toks.peek()
        if kind == "name" and value in ("entry", "alphabet", "variant") and toks.peek(1)[1] != "(":
            toks.next()
            if value == "entry":
                entry = _function_name(toks)
            elif value == "alphabet":
                alphabet = set()
                while toks.peek()[0] == "sym":
                    alphabet.add(toks.next()[1])
            else:
                tok = toks.next()
                if tok[0] != "sym" or tok[1] not in "123":
                    toks.fail("variant must be 1, 2 or 3", tok)
                declared = int(tok[1])
            toks.expect(";")
            continue
        clauses.append(_clause(toks))
    if not clauses:
        raise SfplSyntaxError("program defines no function, so it has no entry point")
    arity = len(clauses[0].patterns)
    for c in clauses:
        if len(c.patterns) != arity:
            raise ArityMismatch(f"line {c.line}: {c.function} has {len(c.patterns)} parameters, expected {arity}")
        for call in calls_of(c.body):
            if len(call.args) != arity:
                raise ArityMismatch(f"line {c.line}: call {call} has {len(call.args)} arguments, expected {arity}")
    defined = {c.function for c in clauses}
    for c in clauses:
        for call in calls_of(c.body):
            if call.function not in defined:
                raise SfplSyntaxError(f"call to undefined function {call.function!r}", c.line)
    entry = entry or clauses[0].function
    if entry not in defined:
        raise SfplSyntaxError(f"entry function {entry!r} is not defined")
    variant = max(_variant_of(c.body) for c in clauses)
    if declared is not None:
        if variant > declared:
            raise VariantViolation(f"program needs variant {variant} but declares {declared}")
        variant = declared
    used = set()
    for c in clauses:
        for p in c.patterns:
            used.update(p.symbol)
        for call in calls_of(c.body):
            for a in call.args:
                used.update(a.prefix)
        if isinstance(c.body, Simple):
            used.update(c.body.value.prefix)
    if alphabet is None:
        alphabet = used | {"0", "1"}
    elif not used <= alphabet:
        raise SfplSyntaxError(f"symbols {sorted(used - alphabet)} are outside the declared alphabet")
    # labels: f.<clause number>.<call number>, both 1-based
    numbered = []
    counter: dict[str, int] = {}
    for c in clauses:
        k = counter[c.function] = counter.get(c.function, 0) + 1
        numbered.append(_label_calls(c, f"{c.function}.{k}"))
    warnings = tuple(
        f"{c.function}.{i + 1}: two-symbol actual {a} contributes no constraint"
        for c in clauses
        for i, call in enumerate(calls_of(c.body))
        for a in call.args
        if len(a.prefix) >= 2 and a.var > 0
    )
    return SfplProgram(tuple(numbered), entry, arity, frozenset(alphabet), variant, warnings)


def _label_calls(c: Clause, stem: str) -> Clause:
    e = c.body
    label = lambda call, k: Call(call.function, call.args, f"{stem}.{k}")  # noqa: E731
    if isinstance(e, Tail):
        e = Tail(label(e.call, 1))
    elif isinstance(e, Conditional):
        e = Conditional(label(e.test, 1), label(e.then, 2), label(e.otherwise, 3))
    elif isinstance(e, Let):
        e = Let(label(e.bound, 1), label(e.body, 2))
    return Clause(c.function, c.patterns, e, c.line)


def _function_name(toks: _Tokens) -> str:
    tok = toks.next()
    if tok[0] != "name" or tok[1] in _KEYWORDS or _VAR.match(tok[1]):
        toks.fail("expected a function name", tok)
    return tok[1]


def _clause(toks: _Tokens) -> Clause:
    line = toks.peek()[2]
    name = _function_name(toks)
    toks.expect("(")
    patterns = []
    while True:
        patterns.append(_pattern(toks, len(patterns) + 1))
        tok = toks.next()
        if tok[1] == ")":
            break
        if tok[1] != ",":
            toks.fail("expected ',' or ')'", tok)
    toks.expect("=")
    body = _expr(toks)
    toks.expect(";")
    return Clause(name, tuple(patterns), body, line)


def _pattern(toks: _Tokens, position: int) -> Pattern:
    tok = toks.next()
    if tok[0] == "eps":
        return Pattern("eps", position)
    if tok[1] == "?":
        return Pattern("var", position, wildcard=True)
    if tok[0] == "sym":
        toks.expect(":")
        var = toks.next()
        _positional(toks, var, position)
        return Pattern("cons", position, tok[1])
    if tok[0] == "name":
        _positional(toks, tok, position)
        return Pattern("var", position)
    toks.fail("expected a parameter pattern", tok)
    raise AssertionError


def _positional(toks: _Tokens, tok, position: int) -> None:
    m = _VAR.match(tok[1]) if tok[0] == "name" else None
    if not m:
        toks.fail(f"expected x{position}", tok)
    if int(m.group(1)) != position:
        toks.fail(f"parameter {position} must be named x{position}", tok)


def _expr(toks: _Tokens) -> Expr:
    kind, value, _, _ = toks.peek()
    if kind == "name" and value == "let":
        toks.next()
        y = toks.next()
        if y[1] != "y":
            toks.fail("expected y", y)
        toks.expect("=")
        bound = _call(toks, allow_y=False)
        toks.expect("in")
        return Let(bound, _call(toks, allow_y=True))
    if kind == "name" and toks.peek(1)[1] == "(" and value not in _KEYWORDS:
        first = _call(toks, allow_y=False)
        if toks.peek()[1] == "?":
            toks.next()
            then = _call(toks, allow_y=False)
            toks.expect(",")
            return Conditional(first, then, _call(toks, allow_y=False))
        return Tail(first)
    return Simple(_actual(toks, allow_y=False))


def _call(toks: _Tokens, allow_y: bool) -> Call:
    name = _function_name(toks)
    toks.expect("(")
    args = []
    while True:
        args.append(_actual(toks, allow_y))
        tok = toks.next()
        if tok[1] == ")":
            break
        if tok[1] != ",":
            toks.fail("expected ',' or ')'", tok)
    return Call(name, tuple(args))


def _actual(toks: _Tokens, allow_y: bool) -> Actual:
    prefix = ""
    while toks.peek()[0] == "sym":
        sym = toks.next()[1]
        if toks.peek()[1] != ":":
            if prefix:
                toks.fail("expected ':'", toks.peek())
            return Actual(sym, 0)
        toks.next()
        prefix += sym
        if len(prefix) > 2:
            toks.fail("at most two symbols may be consed onto a variable", toks.peek())
    tok = toks.next()
    if tok[0] == "eps" and not prefix:
        return Actual("", 0)
    if tok[0] == "name" and tok[1] == "y":
        if not allow_y:
            toks.fail("y is only bound in the body of a let", tok)
        return Actual(prefix, -1)
    m = _VAR.match(tok[1]) if tok[0] == "name" else None
    if not m:
        toks.fail("expected an actual parameter", tok)
    return Actual(prefix, int(m.group(1)))


def render_sfpl(p: SfplProgram) -> str:
    out = [] if p.entry == p.clauses[0].function else [f"entry {p.entry};"]
    for c in p.clauses:
        head = f"{c.function}({', '.join(map(str, c.patterns))})"
        e = c.body
        if isinstance(e, Simple):
            body = str(e.value)
        elif isinstance(e, Tail):
            body = str(e.call)
        elif isinstance(e, Conditional):
            body = f"{e.test} ? {e.then}, {e.otherwise}"
        else:
            body = f"let y = {e.bound} in {e.body}"
        out.append(f"{head} = {body};")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# interpreter

HALT = None  # result of a run that hit a call with no matching clause


@dataclass(frozen=True)
class CallRecord:
    """One call edge: caller frame, callee frame and the abstract transition it instantiates."""

    label: str
    caller: str
    caller_args: tuple[str, ...]
    callee: str
    callee_args: tuple[str, ...]
    depth: int


@dataclass(frozen=True)
class RunResult:
    value: str | None
    max_stack: int
    calls: int
    trace: tuple[CallRecord, ...] = ()

    @property
    def halted(self) -> bool:
        return self.value is None


def _match(c: Clause, args: Sequence[str]) -> bool:
    for p, a in zip(c.patterns, args):
        if p.kind == "eps" and a:
            return False
        if p.kind == "cons" and (not a or a[0] != p.symbol):
            return False
    return True


def _binding(c: Clause, args: Sequence[str]) -> list[str]:
    return [a[1:] if p.kind == "cons" else a for p, a in zip(c.patterns, args)]


def _value(a: Actual, env: Sequence[str], y: str | None) -> str:
    if a.var == 0:
        return a.prefix
    base = y if a.var < 0 else env[a.var - 1]
    return a.prefix + (base or "")


@dataclass
class _Frame:
    function: str
    args: tuple[str, ...]
    clause: Clause | None = None
    env: list[str] = field(default_factory=list)
    stage: int = 0
    y: str | None = None


def interpret(
    p: SfplProgram, args: Sequence[str], fuel: int = 100_000, record: bool = False
) -> RunResult:
    """Evaluate the entry function with an explicit call stack.

    Every call, tail calls included, pushes a frame; ``fuel`` caps the number
    of calls. The result value is None (HALT) when no clause matches.
    """
    args = tuple(args)
    if len(args) != p.arity:
        raise ArityMismatch(f"expected {p.arity} arguments, got {len(args)}")
    for s in args:
        bad = set(s) - p.alphabet
        if bad:
            raise ValueError(f"symbols {sorted(bad)} are outside the alphabet")
    clauses = {f: p.clauses_of(f) for f in p.functions}
    calls = 0
    trace: list[CallRecord] = []

    def push(stack: list[_Frame], f: str, values: tuple[str, ...], label: str) -> None:
        nonlocal calls
        if calls >= fuel:
            raise FuelExhausted(f"fuel of {fuel} calls exhausted")
        calls += 1
        if record and stack:
            top = stack[-1]
            trace.append(CallRecord(label, top.function, top.args, f, values, len(stack)))
        stack.append(_Frame(f, values))

    stack: list[_Frame] = []
    push(stack, p.entry, args, "")
    height = 1
    returned: str | None = None
    while stack:
        height = max(height, len(stack))
        fr = stack[-1]
        if fr.clause is None:
            fr.clause = next((c for c in clauses[fr.function] if _match(c, fr.args)), None)
            if fr.clause is None:
                return RunResult(HALT, height, calls, tuple(trace))
            fr.env = _binding(fr.clause, fr.args)
        e = fr.clause.body

        def call(c: Call) -> None:
            push(stack, c.function, tuple(_value(a, fr.env, fr.y) for a in c.args), c.label)

        if fr.stage == 0:
            fr.stage = 1
            if isinstance(e, Simple):
                returned = _value(e.value, fr.env, None)
                stack.pop()
            elif isinstance(e, Tail):
                call(e.call)
            elif isinstance(e, Conditional):
                call(e.test)
            else:
                call(e.bound)
            continue
        # a callee just returned ``returned``
        if fr.stage == 1 and isinstance(e, Conditional):
            fr.stage = 2
            call(e.then if returned else e.otherwise)
        elif fr.stage == 1 and isinstance(e, Let):
            fr.stage = 2
            fr.y = returned
            call(e.body)
        else:
            stack.pop()
    return RunResult(returned, height, calls, tuple(trace))


# ---------------------------------------------------------------------------
# abstraction


def _relation(alpha: Pattern, beta: Actual, i: int) -> tuple[str, object] | None:
    """Relation between x_i (pattern ``alpha``) and x_j' (actual ``beta``) as (direction, strictness).

    Direction '>=' means x_i ≻ x_j'; '=' means both ways non-strict.
    """
    if beta.var < 0 or len(beta.prefix) >= 2:
        return None
    mentions = beta.var if beta.var > 0 else None
    if alpha.kind == "eps":
        if mentions is None and not beta.prefix:
            return ("=", NONSTRICT)
        return None
    if alpha.kind == "var":
        if mentions is None and not beta.prefix:
            return (">=", NONSTRICT)
        if mentions == i and not beta.prefix:
            return ("=", NONSTRICT)
        return None
    # a:x_i
    if mentions is None:
        return (">=", STRICT) if not beta.prefix else (">=", NONSTRICT)
    if mentions == i:
        return (">=", STRICT) if not beta.prefix else ("=", NONSTRICT)
    return None


def transition_graph(p: SfplProgram, clause: Clause, call: Call, nonneg: bool = True) -> McGraph:
    n = p.arity
    arcs = []
    for i, alpha in enumerate(clause.patterns, start=1):
        for j, beta in enumerate(call.args, start=1):
            rel = _relation(alpha, beta, i)
            if rel is None:
                continue
            kind, s = rel
            arcs.append((src(i), tgt(j), s))
            if kind == "=":
                arcs.append((tgt(j), src(i), NONSTRICT))
    if nonneg:
        z = n + 1
        arcs += [(src(z), tgt(z), NONSTRICT), (tgt(z), src(z), NONSTRICT)]
        arcs += [(tgt(j), tgt(z), NONSTRICT) for j in range(1, n + 1)]
        arcs += [(src(i), src(z), NONSTRICT) for i in range(1, n + 1)]
    m = n + 1 if nonneg else n
    return McGraph.from_arcs(clause.function, call.function, m, m, arcs)


def abstract(p: SfplProgram, nonneg: bool = True) -> Cts:
    """One flow point per function, one transition per call occurrence.

    String values are abstracted by their lengths. With ``nonneg`` (the
    default) each point also carries a constant ``0`` and the invariant that
    every length is at least 0; without it the lengths range over all integers
    and nothing stops an abstract variable from decreasing forever.
    """
    names = tuple(f"x{i}" for i in range(1, p.arity + 1))
    if nonneg:
        names += (ZERO_VAR,)
    z = p.arity + 1
    inv = frozenset((i, z, NONSTRICT) for i in range(1, p.arity + 1)) if nonneg else frozenset()
    points = tuple(FlowPoint(f, len(names), names, inv, f == p.entry) for f in p.functions)
    transitions = tuple(
        Transition(call.label, transition_graph(p, c, call, nonneg))
        for c in p.clauses
        for call in calls_of(c.body)
    )
    return Cts(points, transitions, p.warnings)


def abstract_state(p: SfplProgram, args: Sequence[str], nonneg: bool = True) -> tuple[int, ...]:
    values = tuple(len(a) for a in args)
    return values + (0,) if nonneg else values


def call_chains(run: RunResult) -> Iterator[tuple[CallRecord, ...]]:
    """Maximal nested call chains of a recorded run (each one is a path through the stack)."""
    chain: list[CallRecord] = []
    for rec in run.trace:
        if chain and rec.depth <= chain[-1].depth:
            yield tuple(chain)
            del chain[rec.depth - 1 :]
        chain.append(rec)
    if chain:
        yield tuple(chain)


def load_sfpl(path) -> SfplProgram:
    with open(path, encoding="utf-8") as fh:
        return parse_sfpl(fh.read())
