"""Concrete trace semantics and the likelihood-weighted sampling oracle.

`run_on_trace` is the reference small-step machine: it consumes a
fixed trace, accumulates the score weight exactly, and requires the
trace to be used up completely.  The importance-sampling oracle uses
an equivalent big-step environment evaluator (float or rational
arithmetic) because the substitution machine is too slow for 1e5-run
estimates.
"""

from __future__ import annotations

import math
import random
import sys
from dataclasses import dataclass
from typing import List, Optional, Tuple

from gmpy2 import mpq

from .intervals import Interval
from .prims import registry_lookup
from .syntax import (
    App,
    Fix,
    IfLeqZero,
    Lambda,
    Lit,
    Prim,
    Sample,
    Score,
    Term,
    Var,
    subst,
)

DEFAULT_STEP_BUDGET = 1_000_000


@dataclass
class Config:
    term: Term
    trace: Tuple
    pos: int
    weight: object  # nonnegative mpq

    @property
    def residual(self):
        return self.trace[self.pos:]


@dataclass
class Terminated:
    value: object
    weight: object


@dataclass
class Stuck:
    reason: str


@dataclass
class TraceMismatch:
    reason: str


@dataclass
class BudgetExhausted:
    steps: int


RunResult = object


def is_value(t: Term) -> bool:
    return isinstance(t, (Lit, Lambda, Fix))


class _StuckStep(Exception):
    def __init__(self, reason):
        self.reason = reason


def step(c: Config) -> Optional[Config]:
    """One CbV reduction step; None if c.term is a value; _StuckStep otherwise."""
    term, trace, pos, weight = c.term, c.trace, c.pos, c.weight

    def go(t: Term) -> Term:
        nonlocal pos, weight
        match t:
            case App(fn, arg):
                if not is_value(fn):
                    return App(go(fn), arg)
                if not is_value(arg):
                    return App(fn, go(arg))
                if isinstance(fn, Lambda):
                    return subst(fn.body, fn.param, arg)
                if isinstance(fn, Fix):
                    body = subst(fn.body, fn.param, arg)
                    return subst(body, fn.self_name, fn)
                raise _StuckStep("application of a non-function")
            case IfLeqZero(g, th, el):
                if not is_value(g):
                    return IfLeqZero(go(g), th, el)
                if not isinstance(g, Lit):
                    raise _StuckStep("non-numeric guard")
                return th if g.value <= 0 else el
            case Prim(op, args):
                for i, a in enumerate(args):
                    if not is_value(a):
                        return Prim(op, args[:i] + (go(a),) + args[i + 1:])
                if not all(isinstance(a, Lit) for a in args):
                    raise _StuckStep("non-numeric primitive argument")
                desc = registry_lookup(op)
                return Lit(desc.concrete_eval(*[a.value for a in args]))
            case Sample():
                if pos >= len(trace):
                    raise _StuckStep("sample: trace exhausted")
                v = trace[pos]
                pos += 1
                return Lit(v)
            case Score(arg):
                if not is_value(arg):
                    return Score(go(arg))
                if not isinstance(arg, Lit):
                    raise _StuckStep("score of a non-number")
                if arg.value < 0:
                    raise _StuckStep("negative score")
                weight = weight * arg.value
                return arg
            case Var(name):
                raise _StuckStep(f"free variable '{name}'")
        raise _StuckStep(f"no rule applies to {t!r}")

    if is_value(term):
        return None
    new_term = go(term)
    return Config(new_term, trace, pos, weight)


def run_on_trace(p: Term, trace, budget: int = DEFAULT_STEP_BUDGET) -> RunResult:
    """Iterate the small-step machine on a fixed trace.

    Terminated(r, w) iff the program reduces to a literal with the
    trace consumed exactly.
    """
    entries = tuple(mpq(x) for x in trace)
    for x in entries:
        if not 0 <= x <= 1:
            raise ValueError(f"trace entry {x} outside [0,1]")
    c = Config(p, entries, 0, mpq(1))
    for steps in range(budget):
        try:
            nxt = step(c)
        except _StuckStep as e:
            if "trace exhausted" in e.reason:
                return TraceMismatch(e.reason)
            return Stuck(e.reason)
        if nxt is None:
            if c.pos != len(entries):
                return TraceMismatch("trace not fully consumed")
            if isinstance(c.term, Lit):
                return Terminated(c.term.value, c.weight)
            return Stuck("program value is not a number")
        c = nxt
    return BudgetExhausted(budget)


# --- fast big-step evaluator (oracle) ---

class _Dead(Exception):
    """Run cannot terminate with positive weight (negative score, etc.)."""


class _OutOfSteps(Exception):
    pass


class _Closure:
    __slots__ = ("param", "body", "env")

    def __init__(self, param, body, env):
        self.param = param
        self.body = body
        self.env = env


class _FixClosure:
    __slots__ = ("node", "env")

    def __init__(self, node, env):
        self.node = node
        self.env = env


class _EvalState:
    __slots__ = ("draw", "used", "weight", "steps", "budget", "numeric")

    def __init__(self, draw, budget, numeric):
        self.draw = draw
        self.used = []
        self.weight = 1.0 if numeric == "float" else mpq(1)
        self.steps = 0
        self.budget = budget
        self.numeric = numeric


def _eval(term: Term, env: dict, st: _EvalState):
    st.steps += 1
    if st.steps > st.budget:
        raise _OutOfSteps
    match term:
        case Lit(v):
            return float(v) if st.numeric == "float" else v
        case Var(name):
            return env[name]
        case Lambda(param, _, body):
            return _Closure(param, body, env)
        case Fix(_, _, _, _):
            return _FixClosure(term, env)
        case Sample():
            v = st.draw()
            st.used.append(v)
            return v
        case App(fn, arg):
            f = _eval(fn, env, st)
            a = _eval(arg, env, st)
            if isinstance(f, _Closure):
                return _eval(f.body, {**f.env, f.param: a}, st)
            if isinstance(f, _FixClosure):
                node = f.node
                inner = {**f.env, node.param: a, node.self_name: f}
                return _eval(node.body, inner, st)
            raise _Dead("application of a non-function")
        case IfLeqZero(g, th, el):
            gv = _eval(g, env, st)
            return _eval(th if gv <= 0 else el, env, st)
        case Prim(op, args):
            desc = registry_lookup(op)
            vals = [_eval(a, env, st) for a in args]
            if st.numeric == "float":
                return _float_prim(op, desc, vals)
            return desc.concrete_eval(*vals)
        case Score(arg):
            v = _eval(arg, env, st)
            if v < 0:
                raise _Dead("negative score")
            st.weight = st.weight * v
            return v
    raise _Dead(f"cannot evaluate {term!r}")


def _float_prim(op: str, desc, vals):
    if op == "add":
        return vals[0] + vals[1]
    if op == "sub":
        return vals[0] - vals[1]
    if op == "mul":
        return vals[0] * vals[1]
    if op == "neg":
        return -vals[0]
    if op == "abs":
        return abs(vals[0])
    if op == "min":
        return min(vals)
    if op == "max":
        return max(vals)
    if op == "exp":
        return math.exp(min(vals[0], 700.0))
    if op == "sigmoid":
        x = vals[0]
        if x >= 0:
            return 1.0 / (1.0 + math.exp(-min(x, 700.0)))
        e = math.exp(max(x, -700.0))
        return e / (1.0 + e)
    if op.startswith("pdf_normal("):
        mu, sigma = (float(q) for q in _pdf_params(op))
        z = (vals[0] - mu) / sigma
        return math.exp(-0.5 * z * z) / (sigma * math.sqrt(2 * math.pi))
    if op.startswith("pdf_uniform("):
        a, b = (float(q) for q in _pdf_params(op))
        return 1.0 / (b - a) if a <= vals[0] <= b else 0.0
    # fall back to the exact evaluator
    return float(desc.concrete_eval(*[mpq(v) for v in vals]))


def _pdf_params(op: str):
    from .parser import parse_decimal

    inner = op[op.index("(") + 1 : op.rindex(")")]
    return [parse_decimal(s) for s in inner.split(",")]


def eval_on_trace_fast(
    p: Term, trace, budget: int = 100_000, numeric: str = "rational"
):
    """Big-step run on a fixed trace; agrees with run_on_trace when it
    terminates.  Returns Terminated / TraceMismatch / Stuck / BudgetExhausted."""
    entries = list(trace)
    it = iter(entries)

    class _Exhausted(Exception):
        pass

    def draw():
        try:
            return next(it)
        except StopIteration:
            raise _Exhausted

    st = _EvalState(draw, budget, numeric)
    old = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old, 200_000))
    try:
        v = _eval(p, {}, st)
    except _Exhausted:
        return TraceMismatch("sample: trace exhausted")
    except _Dead as e:
        return Stuck(str(e))
    except _OutOfSteps:
        return BudgetExhausted(budget)
    except RecursionError:
        return BudgetExhausted(budget)
    finally:
        sys.setrecursionlimit(old)
    if len(st.used) != len(entries):
        return TraceMismatch("trace not fully consumed")
    return Terminated(v, st.weight)


def _run_chunk(p: Term, seed, lo: int, hi: int, budget: int):
    out = []
    for i in range(lo, hi):
        rng = random.Random((seed, i))
        st = _EvalState(rng.random, budget, "float")
        try:
            v = _eval(p, {}, st)
            out.append((v, st.weight, len(st.used)))
        except (_Dead, _OutOfSteps, RecursionError):
            # truncated / dead runs contribute weight 0 (biases downward)
            out.append((math.nan, 0.0, 0))
    return out


def importance_sample(p: Term, seed: int, n: int, budget: int = 20_000):
    """n likelihood-weighted runs, drawing trace entries lazily.

    Deterministic given seed regardless of worker count: run i always
    uses random.Random((seed, i)).
    """
    import os

    old = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old, 200_000))
    try:
        workers = int(os.environ.get("GBPI_THREADS", "1"))
        chunk = 8192
        bounds = [(lo, min(lo + chunk, n)) for lo in range(0, n, chunk)]
        if workers > 1 and len(bounds) > 1:
            import concurrent.futures as cf

            with cf.ProcessPoolExecutor(max_workers=workers) as ex:
                parts = list(
                    ex.map(_run_chunk, *zip(*[(p, seed, lo, hi, budget) for lo, hi in bounds]))
                )
        else:
            parts = [_run_chunk(p, seed, lo, hi, budget) for lo, hi in bounds]
    finally:
        sys.setrecursionlimit(old)
    out = []
    truncated = 0
    for part in parts:
        for v, w, used in part:
            if w == 0.0 and math.isnan(v):
                truncated += 1
            out.append((v, w))
    return out, truncated


def estimate_measure(p: Term, U: Interval, n: int, seed: int, budget: int = 20_000):
    """Monte Carlo estimate of the unnormalized measure of U with stderr."""
    samples, _ = importance_sample(p, seed, n, budget)
    lo, hi = float(U.lo), float(U.hi)
    total = 0.0
    total_sq = 0.0
    for v, w in samples:
        x = w if (w > 0 and lo <= v <= hi) else 0.0
        total += x
        total_sq += x * x
    mean = total / n
    var = max(total_sq / n - mean * mean, 0.0)
    return mean, math.sqrt(var / n)
