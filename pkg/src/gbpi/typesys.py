"""Weight-aware interval types: constraint generation and solving.

Types refine both the return value and the accumulated score weight
of terminating executions.  Inference generates constraints over
interval variables from a syntax-directed skeleton and solves them
with a FIFO worklist; endpoint widening (after a delay of two growing
updates per variable) forces termination on feedback cycles.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from gmpy2 import mpq

from . import intervals as iv
from .intervals import BOTTOM, Interval, is_bottom
from .prims import lift_eval, registry_lookup
from .syntax import (
    App,
    Fix,
    IfLeqZero,
    Lambda,
    Lit,
    LitInterval,
    Prim,
    Sample,
    SampleVar,
    Score,
    Term,
    Var,
)


# --- concrete weighted types ---

@dataclass(frozen=True)
class WeightedType:
    value: object  # Interval | BOTTOM | ArrowType
    weight: object  # Interval | BOTTOM

    def __repr__(self):
        return f"<{self.value!r}, {self.weight!r}>"


@dataclass(frozen=True)
class ArrowType:
    dom: object  # Interval | BOTTOM | ArrowType
    cod: WeightedType

    def __repr__(self):
        return f"({self.dom!r} -> {self.cod!r})"


# --- symbolic types ---

@dataclass(frozen=True)
class SVar:
    """Interval variable."""

    index: int

    def __repr__(self):
        return f"v{self.index}"


@dataclass(frozen=True)
class SArrow:
    dom: object  # SVar | SArrow
    cod: "SWeighted"


@dataclass(frozen=True)
class SWeighted:
    value: object  # SVar | SArrow
    weight: SVar


# --- constraints ---

@dataclass(frozen=True)
class CEq:
    """var == constant interval"""

    var: SVar
    interval: Interval


@dataclass(frozen=True)
class CSub:
    """lhs flows into rhs (interval inclusion after decomposition)"""

    lhs: SVar
    rhs: SVar


@dataclass(frozen=True)
class CFun:
    """var == op(args); op is a registry primitive, 'product', or 'clamppos'"""

    var: SVar
    op: str
    args: Tuple[SVar, ...]


Constraint = object


class ConstraintGen:
    """Syntax-directed constraint generation (pre-order fresh numbering)."""

    def __init__(self):
        self.counter = 0
        self.constraints: List[Constraint] = []
        # Fix node id -> its symbolic arrow type (for approxFix and --print-types)
        self.fix_types: Dict[int, SArrow] = {}
        # weight-position variables live in [0, inf); widening respects that
        self.weight_vars: set = set()

    def fresh(self) -> SVar:
        self.counter += 1
        return SVar(self.counter)

    def fresh_w(self) -> SVar:
        v = self.fresh()
        self.weight_vars.add(v)
        return v

    def fresh_of(self, simple) -> object:
        from .syntax import TArrow, TReal

        if isinstance(simple, TReal):
            return self.fresh()
        return SArrow(self.fresh_of(simple.dom), SWeighted(self.fresh_of(simple.cod), self.fresh_w()))

    def emit(self, c: Constraint):
        self.constraints.append(c)

    def sub(self, lhs, rhs):
        """Decompose a subtype constraint into interval-variable constraints."""
        if isinstance(lhs, SVar) and isinstance(rhs, SVar):
            self.emit(CSub(lhs, rhs))
            return
        # arrows: contravariant domain, covariant codomain
        assert isinstance(lhs, SArrow) and isinstance(rhs, SArrow)
        self.sub(rhs.dom, lhs.dom)
        self.sub(lhs.cod.value, rhs.cod.value)
        self.emit(CSub(lhs.cod.weight, rhs.cod.weight))

    def gen(self, term: Term, env: dict) -> SWeighted:
        match term:
            case Var(name):
                w = self.fresh_w()
                self.emit(CEq(w, iv.ONE))
                return SWeighted(env[name], w)
            case Lit(v):
                n, w = self.fresh(), self.fresh_w()
                self.emit(CEq(n, Interval(v, v)))
                self.emit(CEq(w, iv.ONE))
                return SWeighted(n, w)
            case LitInterval(box):
                n, w = self.fresh(), self.fresh_w()
                self.emit(CEq(n, box))
                self.emit(CEq(w, iv.ONE))
                return SWeighted(n, w)
            case Sample() | SampleVar(_):
                n, w = self.fresh(), self.fresh_w()
                self.emit(CEq(n, iv.UNIT))
                self.emit(CEq(w, iv.ONE))
                return SWeighted(n, w)
            case Lambda(param, pty, body):
                k = self.fresh_of(pty)
                w = self.fresh_w()
                inner = self.gen(body, {**env, param: k})
                self.emit(CEq(w, iv.ONE))
                return SWeighted(SArrow(k, inner), w)
            case Fix(fname, param, fty, body):
                k = self.fresh_of(fty.dom)
                k1 = self.fresh_of(fty.cod)
                nu1 = self.fresh_w()
                w = self.fresh_w()
                phi = SArrow(k, SWeighted(k1, nu1))
                inner = self.gen(body, {**env, fname: phi, param: k})
                self.emit(CEq(w, iv.ONE))
                # feedback: the body's result flows back into the assumed codomain
                self.sub(inner.value, k1)
                self.emit(CSub(inner.weight, nu1))
                arrow = SArrow(k, inner)
                self.fix_types[id(term)] = arrow
                return SWeighted(arrow, w)
            case App(fn, arg):
                f = self.gen(fn, env)
                a = self.gen(arg, env)
                assert isinstance(f.value, SArrow)
                self.sub(a.value, f.value.dom)
                w = self.fresh_w()
                self.emit(
                    CFun(w, "product", (f.weight, a.weight, f.value.cod.weight))
                )
                return SWeighted(f.value.cod.value, w)
            case IfLeqZero(g, th, el):
                gt = self.gen(g, env)
                tt = self.gen(th, env)
                et = self.gen(el, env)
                res = self.fresh_like(tt.value)
                branch_w = self.fresh_w()
                w = self.fresh_w()
                self.sub(tt.value, res)
                self.sub(et.value, res)
                self.emit(CSub(tt.weight, branch_w))
                self.emit(CSub(et.weight, branch_w))
                self.emit(CFun(w, "product", (gt.weight, branch_w)))
                return SWeighted(res, w)
            case Prim(op, args):
                parts = [self.gen(a, env) for a in args]
                n, w = self.fresh(), self.fresh_w()
                self.emit(CFun(n, op, tuple(p.value for p in parts)))
                self.emit(CFun(w, "product", tuple(p.weight for p in parts)))
                return SWeighted(n, w)
            case Score(arg):
                a = self.gen(arg, env)
                clamped = self.fresh()
                w = self.fresh_w()
                # the scored value is restricted to [0, inf) before it both
                # becomes the result and multiplies the weight
                self.emit(CFun(clamped, "clamppos", (a.value,)))
                self.emit(CFun(w, "product", (a.weight, clamped)))
                return SWeighted(clamped, w)
        raise AssertionError(f"constraint gen: {term!r}")

    def fresh_like(self, skel) -> object:
        if isinstance(skel, SVar):
            return self.fresh()
        return SArrow(self.fresh_like(skel.dom), SWeighted(self.fresh_like(skel.cod.value), self.fresh_w()))


def generate_constraints(term: Term, env: Optional[dict] = None):
    """Returns (symbolic weighted type, constraints, generator)."""
    g = ConstraintGen()
    result = g.gen(term, env or {})
    return result, g.constraints, g


# --- solving ---

WIDEN_DELAY = 2


class Assignment:
    def __init__(self, nonneg_vars=frozenset()):
        self.values: Dict[SVar, object] = {}
        self.grow_count: Dict[SVar, int] = {}
        self.nonneg_vars = nonneg_vars

    def get(self, v: SVar):
        return self.values.get(v, BOTTOM)

    def update(self, v: SVar, incoming) -> bool:
        """Join incoming into v, widening after the delay; True if changed."""
        old = self.get(v)
        joined = iv.join(old, incoming)
        if joined == old or (not is_bottom(old) and iv.leq(joined, old)):
            return False
        count = self.grow_count.get(v, 0) + 1
        self.grow_count[v] = count
        if count > WIDEN_DELAY and not is_bottom(old):
            new = iv.widen(old, joined)
        else:
            new = joined
        if v in self.nonneg_vars:
            # weights are nonnegative by construction
            clamped = iv.meet(new, iv.NONNEG)
            new = clamped if not is_bottom(clamped) else new
        self.values[v] = new
        return True


def _eval_cfun(op: str, args: List[object]):
    if any(is_bottom(a) for a in args):
        return BOTTOM
    if op == "product":
        acc = iv.ONE
        for a in args:
            acc = iv.imul(acc, a)
        return acc
    if op == "clamppos":
        return iv.meet(args[0], iv.NONNEG)
    desc = registry_lookup(op)
    return lift_eval(desc, args)


def solve(constraints: List[Constraint], nonneg_vars=frozenset()) -> Assignment:
    """FIFO worklist seeded with equality constraints."""
    A = Assignment(nonneg_vars)
    # index constraints by the variables they read
    dependents: Dict[SVar, List[int]] = {}

    def add_dep(v: SVar, idx: int):
        dependents.setdefault(v, []).append(idx)

    for i, c in enumerate(constraints):
        if isinstance(c, CSub):
            add_dep(c.lhs, i)
        elif isinstance(c, CFun):
            for a in c.args:
                add_dep(a, i)

    from collections import deque

    eq_first = [i for i, c in enumerate(constraints) if isinstance(c, CEq)]
    rest = [i for i, c in enumerate(constraints) if not isinstance(c, CEq)]
    work = deque(eq_first + rest)
    in_queue = set(work)

    rounds = 0
    limit = 200 * (len(constraints) + 1)
    while work:
        rounds += 1
        if rounds > limit:
            raise RuntimeError("constraint solver exceeded its step bound")
        i = work.popleft()
        in_queue.discard(i)
        c = constraints[i]
        if isinstance(c, CEq):
            changed = A.update(c.var, c.interval)
            target = c.var
        elif isinstance(c, CSub):
            val = A.get(c.lhs)
            changed = False if is_bottom(val) else A.update(c.rhs, val)
            target = c.rhs
        else:
            val = _eval_cfun(c.op, [A.get(a) for a in c.args])
            changed = False if is_bottom(val) else A.update(c.var, val)
            target = c.var
        if changed:
            for j in dependents.get(target, ()):
                if j not in in_queue:
                    work.append(j)
                    in_queue.add(j)
    return A


def satisfies(constraints: List[Constraint], A: Assignment) -> bool:
    """Direct re-evaluation check that A solves every constraint."""
    for c in constraints:
        if isinstance(c, CEq):
            if not iv.leq(c.interval, A.get(c.var)):
                return False
        elif isinstance(c, CSub):
            if not iv.leq(A.get(c.lhs), A.get(c.rhs)):
                return False
        else:
            val = _eval_cfun(c.op, [A.get(a) for a in c.args])
            if not iv.leq(val, A.get(c.var)):
                return False
    return True


def concretize(skel, A: Assignment):
    if isinstance(skel, SVar):
        return A.get(skel)
    if isinstance(skel, SArrow):
        return ArrowType(concretize(skel.dom, A), concretize(skel.cod, A))
    assert isinstance(skel, SWeighted)
    return WeightedType(concretize(skel.value, A), A.get(skel.weight))


def infer_type(term: Term) -> WeightedType:
    """Solved weighted type of a closed (possibly symbolic) term."""
    skel, constraints, g = generate_constraints(term)
    A = solve(constraints, frozenset(g.weight_vars))
    return concretize(skel, A)


def infer_with_fix_types(term: Term):
    """Weighted type of the whole term plus each fixpoint subterm's arrow type.

    Fixpoint types are read from the same solved derivation, so their
    domains reflect the call sites inside the term.
    """
    skel, constraints, g = generate_constraints(term)
    A = solve(constraints, frozenset(g.weight_vars))
    fix_types = {nid: concretize(arrow, A) for nid, arrow in g.fix_types.items()}
    return concretize(skel, A), fix_types


def type_to_str(t) -> str:
    if is_bottom(t):
        return "_|_"
    if isinstance(t, Interval):
        return repr(t)
    if isinstance(t, ArrowType):
        return f"{type_to_str(t.dom)} -> {type_to_str(t.cod)}"
    assert isinstance(t, WeightedType)
    return f"<{type_to_str(t.value)}, {type_to_str(t.weight)}>"
