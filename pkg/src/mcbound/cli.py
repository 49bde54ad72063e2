"""Command line front end.

Exit codes: 0 affirmative or ok, 1 negative verdict, 2 usage or input error,
3 resource cap hit.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import cts as cts_mod
from . import sfpl
from .closure import DEFAULT_MAX_ELEMENTS
from .errors import Explosion, McBoundError, MissingFixture, NoBound
from .mcgraph import render_relations
from .oracle import OracleConfig, explore, fit_degree
from .rbound import degree_table, max_degree, rbd
from .termination import Analysis, decide_bounded_termination, prepare

OK, NEGATIVE, USAGE, CAP = 0, 1, 2, 3


class _Out:
    def __init__(self, fmt: str, stream) -> None:
        self.json = fmt == "json-lines"
        self.stream = stream

    def text(self, line: str = "") -> None:
        if not self.json:
            print(line, file=self.stream)

    def record(self, obj: dict) -> None:
        if self.json:
            print(json.dumps(obj, sort_keys=True), file=self.stream)


def load_system(path: str) -> cts_mod.Cts:
    """A .sfpl file is abstracted on the fly; anything else is read as CTS text."""
    if str(path).endswith(".sfpl"):
        return sfpl.abstract(sfpl.load_sfpl(path))
    return cts_mod.load(path)


def _analysis(args) -> Analysis:
    return prepare(load_system(args.file), args.max_elab_points, args.max_closure)


def _yes(flag: bool) -> str:
    return "YES" if flag else "NO"


# ---------------------------------------------------------------------------
# subcommands


def cmd_parse(args, out: _Out) -> int:
    c = load_system(args.file)
    out.text(cts_mod.render(c).rstrip("\n"))
    for w in c.warnings:
        out.text(f"warning: {w}")
    out.record(
        {
            "command": "parse",
            "points": len(c.points),
            "transitions": len(c.transitions),
            "warnings": list(c.warnings),
        }
    )
    return OK


def cmd_terminates(args, out: _Out) -> int:
    v = decide_bounded_termination(_analysis(args))
    out.text(f"terminates: {_yes(v.terminating)}")
    out.record({"command": "terminates", "terminates": v.terminating})
    return OK if v.terminating else NEGATIVE


def _witness_lines(an: Analysis, v) -> list[str]:
    w = v.witness
    names = an.elaborated.cts.point(w.point).var_names
    kept = [names[i - 1] for i in w.kept]
    return [
        f"witness point: {w.point}",
        f"  H: {' '.join(w.prefix_origin) or '(empty)'}",
        f"  L: {' '.join(w.cycle_origin)}",
        f"  H (elaborated): {' '.join(w.prefix) or '(empty)'}",
        f"  L (elaborated): {' '.join(w.cycle)}",
        f"  kept variables: {', '.join(kept) or '(none)'}",
        f"  loop MC: {', '.join(render_relations(w.restricted, kept, kept)) or '(no relations)'}",
    ]


def cmd_bounded(args, out: _Out) -> int:
    an = _analysis(args)
    v = decide_bounded_termination(an)
    out.text(f"bounded: {_yes(v.bounded_terminating)}")
    rec = {"command": "bounded", "bounded": v.bounded_terminating, "terminates": v.terminating}
    if v.bounded_terminating:
        out.text(f"height: {v.height_note}")
        rec["height"] = v.height_note
    elif v.witness is not None:
        for line in _witness_lines(an, v):
            out.text(line)
        w = v.witness
        rec["witness"] = {
            "point": w.point,
            "prefix": list(w.prefix_origin),
            "cycle": list(w.cycle_origin),
            "prefixElaborated": list(w.prefix),
            "cycleElaborated": list(w.cycle),
        }
    for warning in v.warnings:
        out.text(f"warning: {warning}")
    out.record(rec)
    return OK if v.bounded_terminating else NEGATIVE


def _degree_record(point: str, report) -> dict:
    return {
        "point": point,
        "degree": None if report is None else report.degree,
        "certificateRef": None if report is None else report.witness_point,
    }


def cmd_rb(args, out: _Out) -> int:
    if args.degree is not None and args.point is None:
        raise _Usage("--degree requires --point")
    an = _analysis(args)
    if args.point is None:
        table = degree_table(an)
        for pid in sorted(table):
            r = table[pid]
            out.text(f"{pid}: {'no bound' if r is None else f'degree {r.degree}'}")
            out.record(_degree_record(pid, r))
        return OK if all(r is not None for r in table.values()) else NEGATIVE
    an.original.point(args.point)
    if args.degree is not None:
        try:
            holds = rbd(an, args.point, args.degree)
        except NoBound:
            holds = True  # no bound at all: every polynomial lower bound holds
        out.text(f"rbd({args.point}, {args.degree}): {_yes(holds)}")
        out.record({"point": args.point, "degree": args.degree, "holds": holds, "certificateRef": None})
        return OK if holds else NEGATIVE
    try:
        r = max_degree(an, args.point)
    except NoBound:
        out.text(f"point: {args.point}")
        out.text("degree: none (no bound)")
        out.record(_degree_record(args.point, None))
        return NEGATIVE
    out.text(f"point: {args.point}")
    out.text(f"degree: {r.degree}")
    out.text(f"bound: {r.bound}")
    if r.witness_point:
        out.text(f"certificate: {r.witness_point}")
    out.record(_degree_record(args.point, r))
    return OK


def cmd_rank(args, out: _Out) -> int:
    an = _analysis(args)
    points = [args.point] if args.point else sorted(p.id for p in an.original.points)
    status = OK
    for pid in points:
        an.original.point(pid)
        try:
            r = max_degree(an, pid)
        except NoBound:
            out.text(f"{pid}: no ranking (no bound)")
            out.record({"point": pid, "degree": None, "certificateRef": None, "ranking": None})
            status = NEGATIVE
            continue
        ranking = str(r.ranking) if r.ranking is not None else "<>"
        where = f" at {r.witness_point}" if r.witness_point else ""
        out.text(f"{pid}: {ranking}{where}")
        out.record({"point": pid, "degree": r.degree, "certificateRef": r.witness_point, "ranking": ranking})
    return status


def cmd_dump_closure(args, out: _Out) -> int:
    an = _analysis(args)
    ec = an.elaborated
    rows = []
    for e in an.closure:
        g = e.mc
        if args.point and ec.points[g.source].origin != args.point:
            continue
        names_s = ec.cts.point(g.source).var_names
        names_t = ec.cts.point(g.target).var_names
        rel = ", ".join(render_relations(g, names_s, names_t))
        rows.append((g.source, g.target, len(e.witness), e.witness, rel))
    rows.sort()
    for s, t, _, witness, rel in rows:
        out.text(f"{s} -> {t}: {rel or '(no relations)'}    via {' '.join(witness)}")
        out.record({"source": s, "target": t, "relations": rel, "witness": list(witness)})
    out.text(f"{len(rows)} elements")
    return OK


def _fmt(x: float) -> str:
    return "inf" if math.isinf(x) else str(int(x))


def cmd_oracle(args, out: _Out) -> int:
    c = load_system(args.file)
    if args.point is not None:
        c.point(args.point)
    if args.fit:
        ns = [int(s) for s in args.fit.split(",") if s]
        samples = []
        for n in ns:
            r = explore(c, OracleConfig(n, args.pad, args.max_states))
            count = r.height if args.point is None else r.visits[args.point]
            samples.append((n, count))
        what = "height" if args.point is None else f"visits to {args.point}"
        out.text(f"samples ({what}):")
        for n, count in samples:
            out.text(f"  N={n}: {_fmt(count)}")
        if any(math.isinf(cnt) for _, cnt in samples):
            out.text("fit: not available (cycle found)")
            out.record({"command": "oracle", "samples": [[n, None] for n, _ in samples], "cyclic": True})
            return NEGATIVE
        slope, residual = fit_degree(samples)
        out.text(f"fit: slope {slope:.3f}, max residual {residual:.3g}")
        if args.csv:
            with open(args.csv, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh)
                w.writerow(["N", "count"])
                w.writerows(samples)
        out.record(
            {"command": "oracle", "samples": [list(s) for s in samples], "slope": slope, "residual": residual}
        )
        return OK
    if args.N is None:
        raise _Usage("oracle needs --N or --fit")
    cfg = OracleConfig(args.N, args.pad, args.max_states)
    r = explore(c, cfg)
    lo, hi = cfg.domain
    out.text(f"domain: [{lo}, {hi}]")
    out.text(f"states: {r.states}")
    out.text(f"cyclic: {_yes(r.cyclic)}")
    out.text(f"height: {_fmt(r.height)}")
    for pid in sorted(r.visits):
        if args.point is None or pid == args.point:
            out.text(f"visits {pid}: {_fmt(r.visits[pid])}")
    out.text("trace: " + " ".join(f"{p}{list(v)}" for p, v in r.trace[:50]) + (" ..." if len(r.trace) > 50 else ""))
    out.record(
        {
            "command": "oracle",
            "N": args.N,
            "cyclic": r.cyclic,
            "height": None if r.cyclic else r.height,
            "visits": {p: (None if math.isinf(v) else v) for p, v in sorted(r.visits.items())},
        }
    )
    return NEGATIVE if r.cyclic else OK


def cmd_abstract_sfpl(args, out: _Out) -> int:
    p = sfpl.load_sfpl(args.file)
    c = sfpl.abstract(p)
    out.text(cts_mod.render(c).rstrip("\n"))
    for w in c.warnings:
        out.text(f"# warning: {w}")
    out.record({"command": "abstract-sfpl", "cts": cts_mod.render(c), "variant": p.variant})
    return OK


def _sfpl_arg(s: str) -> str:
    return "" if s in ("eps", "ε") else s


def cmd_run_sfpl(args, out: _Out) -> int:
    p = sfpl.load_sfpl(args.file)
    values = [_sfpl_arg(s.strip()) for s in args.args.split(",")] if args.args is not None else []
    r = sfpl.interpret(p, values, args.fuel)
    shown = "HALT" if r.halted else (r.value or "eps")
    out.text(f"result: {shown}")
    out.text(f"max stack height: {r.max_stack}")
    out.text(f"calls: {r.calls}")
    out.record({"command": "run-sfpl", "result": None if r.halted else r.value, "maxStack": r.max_stack, "calls": r.calls})
    return OK


# ---------------------------------------------------------------------------
# corpus


@dataclass(frozen=True)
class CorpusRow:
    fixture: str
    expected: str
    actual: str
    status: str

    @property
    def ok(self) -> bool:
        return self.status in ("PASS", "EXPECTED-FAIL-PASS")


def _summary(terminates, bounded, degrees) -> str:
    deg = ",".join(f"{p}={'none' if d is None else d}" for p, d in sorted(degrees.items()))
    return f"T={_yes(terminates)} B={_yes(bounded)} {deg}".rstrip()


def _run_fixture(path: str, max_points: int | None) -> CorpusRow:
    name = Path(path).name
    sidecar = Path(path).with_suffix(".expect.json")
    try:
        exp = json.loads(sidecar.read_text(encoding="utf-8"))
        expected = _summary(exp["terminates"], exp["bounded"], exp.get("degrees", {}))
    except (OSError, ValueError, KeyError) as e:
        return CorpusRow(name, "?", f"bad sidecar: {e}", "ERROR")
    try:
        an = prepare(load_system(path), max_points)
        v = decide_bounded_termination(an)
        table = degree_table(an)
        degrees = {p: (None if r is None else r.degree) for p, r in table.items() if p in exp.get("degrees", table)}
        actual = _summary(v.terminating, v.bounded_terminating, degrees)
    except Explosion as e:
        return CorpusRow(name, expected, f"cap hit: {e}", "ERROR")
    except (McBoundError, OSError, ValueError) as e:
        return CorpusRow(name, expected, f"error: {e}", "ERROR")
    match = actual == expected
    if exp.get("expected_fail"):
        status = "EXPECTED-FAIL-PASS" if match else "EXPECTED-FAIL-MISMATCH"
    else:
        status = "PASS" if match else "FAIL"
    return CorpusRow(name, expected, actual, status)


def run_corpus(directory: str, max_points: int | None = None, jobs: int | None = None) -> list[CorpusRow]:
    d = Path(directory)
    if not d.is_dir():
        raise MissingFixture(f"{directory} is not a directory")
    files = sorted(
        str(p) for p in d.iterdir() if p.suffix in (".cts", ".sfpl") and p.is_file()
    )
    for f in files:
        if not Path(f).with_suffix(".expect.json").exists():
            raise MissingFixture(f"{f} has no expected-verdict sidecar")
    if not files:
        return []
    jobs = jobs or min(len(files), os.cpu_count() or 1)
    if jobs <= 1:
        rows = [_run_fixture(f, max_points) for f in files]
    else:
        with ProcessPoolExecutor(jobs) as pool:
            rows = list(pool.map(_run_fixture, files, [max_points] * len(files)))
    return sorted(rows, key=lambda r: r.fixture)


def cmd_corpus(args, out: _Out) -> int:
    rows = run_corpus(args.file, args.max_elab_points, args.jobs)
    width = max([len(r.fixture) for r in rows] + [7])
    out.text(f"{'fixture':<{width}}  {'status':<18}  expected | actual")
    for r in rows:
        out.text(f"{r.fixture:<{width}}  {r.status:<18}  {r.expected} | {r.actual}")
        out.record({"fixture": r.fixture, "expected": r.expected, "actual": r.actual, "status": r.status})
    bad = sum(not r.ok for r in rows)
    out.text(f"{len(rows) - bad}/{len(rows)} as expected")
    return OK if bad == 0 else NEGATIVE


# ---------------------------------------------------------------------------
# wiring


class _Usage(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("text", "json-lines"), default="text")
    common.add_argument(
        "--max-elab-points",
        type=int,
        default=None,
        help="cap on elaborated flow points (default: $MCBOUND_MAX_ELAB or 50000)",
    )
    common.add_argument("--max-closure", type=int, default=DEFAULT_MAX_ELEMENTS, help="cap on closure elements")

    p = argparse.ArgumentParser(prog="mcbound", description="Bounded termination and reachability bounds for MC systems.")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text):
        sp = sub.add_parser(name, parents=[common], help=help_text)
        sp.add_argument("file")
        sp.set_defaults(fn=fn)
        return sp

    add("parse", cmd_parse, "validate a system and print it in canonical form")
    add("terminates", cmd_terminates, "decide termination")
    add("bounded", cmd_bounded, "decide bounded termination; print a witness loop if not")
    sp = add("rb", cmd_rb, "degree of the reachability bound")
    sp.add_argument("--point")
    sp.add_argument("--degree", type=int)
    sp = add("rank", cmd_rank, "lexicographic ranking expressions from the bound certificate")
    sp.add_argument("--point")
    sp = add("dump-closure", cmd_dump_closure, "list the closure set with witnesses")
    sp.add_argument("--point")
    sp = add("oracle", cmd_oracle, "exhaustive finite-domain exploration")
    sp.add_argument("--N", type=int)
    sp.add_argument("--pad", type=int)
    sp.add_argument("--point")
    sp.add_argument("--fit", help="comma-separated N values; fits log count against log N")
    sp.add_argument("--csv", help="write the (N, count) samples to this file")
    sp.add_argument("--max-states", type=int, default=2_000_000)
    add("abstract-sfpl", cmd_abstract_sfpl, "print the MC abstraction of an SFPL program")
    sp = add("run-sfpl", cmd_run_sfpl, "run an SFPL program")
    sp.add_argument("--args", help="comma-separated argument strings; eps for the empty string")
    sp.add_argument("--fuel", type=int, default=100_000)
    sp = add("corpus", cmd_corpus, "run every fixture in a directory against its .expect.json sidecar")
    sp.add_argument("--jobs", type=int)
    return p


def main(argv: Sequence[str] | None = None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    out = _Out(args.format, stdout)
    try:
        return args.fn(args, out)
    except _Usage as e:
        print(f"mcbound: error: {e}", file=stderr)
        return USAGE
    except Explosion as e:
        print(f"mcbound: cap hit: {e}", file=stderr)
        return CAP
    except (McBoundError, OSError, ValueError) as e:
        print(f"mcbound: error: {e}", file=stderr)
        return USAGE


def run(argv: Sequence[str]) -> tuple[int, str, str]:
    """Run the CLI in-process and capture its output."""
    o, e = io.StringIO(), io.StringIO()
    code = main(argv, o, e)
    return code, o.getvalue(), e.getvalue()


if __name__ == "__main__":
    sys.exit(main())
