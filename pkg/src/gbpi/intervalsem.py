"""Interval-trace reduction and the super-/subadditive bound measures.

Terms run on traces of intervals; undecided guards take both branches
with the weight multiplied by [0,1], so the reduction is a
nondeterministic relation and one trace can produce several
outcomes.  Lower bounds sum min-weights of outcomes whose value is
certainly inside the query set (outcomes tainted by an undecided
guard have min-weight 0); upper bounds sum sup-weights of outcomes
that may intersect it, with stuck-at-sample or over-budget branches
degrading to the unbounded default outcome.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

from gmpy2 import mpq

from . import intervals as iv
from .intervals import INF, NINF, Interval
from .prims import lift_eval, registry_lookup
from .symexec import _inject, is_ground_value, is_sym_value
from .syntax import (
    App,
    Fix,
    IfLeqZero,
    Lambda,
    Lit,
    LitInterval,
    Prim,
    Sample,
    Score,
    Term,
    Var,
    subst,
)

IntervalTrace = Tuple[Interval, ...]

DEFAULT_OUTCOME = (iv.TOP, iv.NONNEG)


def make_trace(entries) -> IntervalTrace:
    out = []
    for e in entries:
        box = e if isinstance(e, Interval) else Interval(*e)
        if not (0 <= box.lo and box.hi <= 1):
            raise ValueError(f"trace entry {box} outside [0,1]")
        out.append(box)
    return tuple(out)


def volume(trace: IntervalTrace):
    v = mpq(1)
    for box in trace:
        v *= box.hi - box.lo
    return v


def compatible(t1: IntervalTrace, t2: IntervalTrace) -> bool:
    """Almost disjoint at some shared index."""
    return any(a.almost_disjoint(b) for a, b in zip(t1, t2))


class IncompatibleTraces(Exception):
    pass


class NotCertifiablyExhaustive(Exception):
    pass


def check_compatible(traces: Sequence[IntervalTrace]):
    ts = list(traces)
    for i in range(len(ts)):
        for j in range(i + 1, len(ts)):
            if not compatible(ts[i], ts[j]):
                raise IncompatibleTraces(
                    f"traces {i} and {j} are not compatible: "
                    f"{ts[i]} vs {ts[j]}"
                )


def check_exhaustive(traces: Sequence[IntervalTrace]):
    """Structural certificate: the set forms a prefix tree in which the
    children of every node tile [0,1]."""

    def tile(intervals) -> bool:
        cells = sorted(set(intervals), key=lambda b: (b.lo, b.hi))
        if not cells or cells[0].lo != 0 or cells[-1].hi != 1:
            return False
        for a, b in zip(cells, cells[1:]):
            if a.hi != b.lo:
                return False
        return True

    def go(suffixes):
        leaves = [s for s in suffixes if len(s) == 0]
        if leaves:
            if len(suffixes) != len(leaves):
                raise NotCertifiablyExhaustive(
                    "a trace extends another trace in the set"
                )
            if len(leaves) != 1:
                raise NotCertifiablyExhaustive("duplicate traces")
            return
        groups: dict = {}
        for s in suffixes:
            groups.setdefault(s[0], []).append(s[1:])
        if not tile(groups.keys()):
            raise NotCertifiablyExhaustive(
                "first coordinates do not tile [0,1] "
                f"at some node: {sorted(groups.keys(), key=lambda b: (b.lo, b.hi))}"
            )
        for rest in groups.values():
            go(rest)

    ts = list(traces)
    if not ts:
        raise NotCertifiablyExhaustive("empty trace set")
    go(ts)


# --- interval reduction ---

@dataclass(frozen=True)
class IConfig:
    term: Term
    trace: IntervalTrace
    pos: int
    weight: Interval
    tainted: bool = False  # an undecided guard was taken on this branch


@dataclass
class IRunOutcome:
    outcomes: List[Tuple[Interval, Interval, bool]]  # (value, weight, tainted)
    over_approx: bool  # some branch stuck at sample / exceeded budget

    def results(self):
        if self.over_approx:
            return self.outcomes + [(iv.TOP, iv.NONNEG, True)]
        return list(self.outcomes)


def istep(c: IConfig) -> List[IConfig]:
    """Successor configurations; empty when the branch is dead."""

    def go(t: Term):
        # alternatives: (term', consumed, weight multiplier or None, tainted)
        match t:
            case App(fn, arg):
                if not is_sym_value(fn):
                    return [(App(f2, arg), k, w, b) for f2, k, w, b in go(fn)]
                if not is_sym_value(arg):
                    return [(App(fn, a2), k, w, b) for a2, k, w, b in go(arg)]
                if isinstance(fn, Lambda):
                    return [(subst(fn.body, fn.param, arg), 0, None, False)]
                if isinstance(fn, Fix):
                    body = subst(fn.body, fn.param, arg)
                    return [(subst(body, fn.self_name, fn), 0, None, False)]
                raise ValueError("application of a non-function")
            case IfLeqZero(g, th, el):
                if not is_sym_value(g):
                    return [(IfLeqZero(g2, th, el), k, w, b) for g2, k, w, b in go(g)]
                assert isinstance(g, LitInterval), "interval machine guard"
                box = g.interval
                if box.hi <= 0:
                    return [(th, 0, None, False)]
                if box.lo > 0:
                    return [(el, 0, None, False)]
                # undecided: both branches, weight scaled by [0,1]
                return [(th, 0, iv.UNIT, True), (el, 0, iv.UNIT, True)]
            case Prim(op, args):
                for i, a in enumerate(args):
                    if not is_sym_value(a):
                        return [
                            (Prim(op, args[:i] + (a2,) + args[i + 1:]), k, w, b)
                            for a2, k, w, b in go(a)
                        ]
                desc = registry_lookup(op)
                folded = lift_eval(desc, [a.interval for a in args])
                return [(LitInterval(folded), 0, None, False)]
            case Sample():
                if c.pos >= len(c.trace):
                    raise _TraceExhausted
                return [(LitInterval(c.trace[c.pos]), 1, None, False)]
            case Score(arg):
                if not is_sym_value(arg):
                    return [(Score(a2), k, w, b) for a2, k, w, b in go(arg)]
                assert isinstance(arg, LitInterval)
                box = arg.interval
                if box.hi < 0:
                    return []  # every refinement is stuck with weight 0
                restricted = iv.meet(box, iv.NONNEG)
                lit = LitInterval(restricted)
                return [(lit, 0, restricted, False)]
            case Var(name):
                raise ValueError(f"free variable '{name}'")
        raise AssertionError(f"no redex in {t!r}")

    if is_sym_value(c.term):
        return []
    alts = go(c.term)
    out = []
    for term, consumed, wmul, taint in alts:
        w = c.weight if wmul is None else iv.imul(c.weight, wmul)
        out.append(IConfig(term, c.trace, c.pos + consumed, w, c.tainted or taint))
    return out


class _TraceExhausted(Exception):
    pass


def irun(p: Term, trace, budget: int = 100_000) -> IRunOutcome:
    """Exhaustive exploration of the nondeterministic interval reduction."""
    t = make_trace(trace)
    init = IConfig(_inject(p), t, 0, iv.ONE)
    stack = [(init, 0)]
    outcomes: List[Tuple[Interval, Interval, bool]] = []
    over = False
    while stack:
        c, steps = stack.pop()
        if steps > budget:
            over = True
            continue
        if is_sym_value(c.term):
            # only expected for ground terminal values in this machine
            if isinstance(c.term, LitInterval) and c.pos == len(c.trace):
                outcomes.append((c.term.interval, c.weight, c.tainted))
            # value with leftover trace: no refinement consumes the trace
            # exactly, so the branch carries no mass
            continue
        try:
            succs = istep(c)
        except _TraceExhausted:
            # refinements of longer traces may continue and terminate
            over = True
            continue
        for s in succs:
            stack.append((s, steps + 1))
    return IRunOutcome(outcomes, over)


# --- bound measures over trace sets ---

def _value_in(value: Interval, U: Interval) -> bool:
    return U.contains_interval(value)

def _value_meets(value: Interval, U: Interval) -> bool:
    return value.intersects(U)


def lower_bound(p: Term, traces, U: Interval, budget: int = 100_000):
    """Superadditive lower bound on the measure of U over a compatible set."""
    ts = [make_trace(t) for t in traces]
    check_compatible(ts)
    total = mpq(0)
    for t in ts:
        vol = volume(t)
        if vol == 0:
            continue
        for value, weight, tainted in irun(p, t, budget).outcomes:
            if tainted:
                continue  # min weight is 0 on both-branch outcomes
            if _value_in(value, U):
                total += vol * weight.lo
    return total


def upper_bound(p: Term, traces, U: Interval, budget: int = 100_000):
    """Subadditive upper bound over a certifiably exhaustive set; may be inf."""
    ts = [make_trace(t) for t in traces]
    check_exhaustive(ts)
    total = mpq(0)
    for t in ts:
        vol = volume(t)
        if vol == 0:
            continue
        res = irun(p, t, budget)
        for value, weight, _ in res.results():
            if _value_meets(value, U):
                if iv.is_inf(weight.hi):
                    return INF
                total += vol * weight.hi
    return total
