"""Abstract syntax, simple types, and the simple type checker.

Core terms are produced by the parser; the symbolic machine extends
them with sample variables and interval literals (which double as the
interval machine's values).  All nodes are immutable and shareable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

from .intervals import Interval


# --- simple types ---

class SimpleType:
    pass


@dataclass(frozen=True)
class TReal(SimpleType):
    def __repr__(self):
        return "R"


@dataclass(frozen=True)
class TArrow(SimpleType):
    dom: SimpleType
    cod: SimpleType

    def __repr__(self):
        d = f"({self.dom!r})" if isinstance(self.dom, TArrow) else repr(self.dom)
        return f"{d} -> {self.cod!r}"


REAL = TReal()


# --- terms ---

class Term:
    __slots__ = ()


@dataclass(frozen=True)
class Var(Term):
    name: str


@dataclass(frozen=True)
class Lit(Term):
    value: object  # exact rational (mpq)

    def __repr__(self):
        return f"Lit({self.value})"


@dataclass(frozen=True)
class Lambda(Term):
    param: str
    param_type: SimpleType
    body: Term


@dataclass(frozen=True)
class Fix(Term):
    self_name: str
    param: str
    fn_type: TArrow  # annotation for the whole fixpoint
    body: Term


@dataclass(frozen=True)
class App(Term):
    fn: Term
    arg: Term


@dataclass(frozen=True)
class IfLeqZero(Term):
    guard: Term
    then: Term
    orelse: Term


@dataclass(frozen=True)
class Prim(Term):
    op: str  # registry id, e.g. "add" or "pdf_normal(1.1,0.1)"
    args: Tuple[Term, ...]


@dataclass(frozen=True)
class Sample(Term):
    pass


@dataclass(frozen=True)
class Score(Term):
    arg: Term


# symbolic / interval extensions

@dataclass(frozen=True)
class SampleVar(Term):
    index: int  # 1-based

    def __repr__(self):
        return f"a{self.index}"


@dataclass(frozen=True)
class LitInterval(Term):
    interval: Interval

    def __repr__(self):
        return f"Lit{self.interval!r}"


SAMPLE = Sample()


class TypeError_(Exception):
    """Simple-type error (distinct from Python's TypeError)."""


class UnboundVariable(TypeError_):
    pass


def typecheck_simple(term: Term, env: Optional[dict] = None) -> SimpleType:
    """Unique simple type of a term; raises TypeError_ on ill-typed input."""
    from .prims import registry_lookup

    env = env or {}
    match term:
        case Var(name):
            if name not in env:
                raise UnboundVariable(f"unbound identifier '{name}'")
            return env[name]
        case Lit(_) | Sample() | SampleVar(_) | LitInterval(_):
            return REAL
        case Lambda(param, pty, body):
            cod = typecheck_simple(body, {**env, param: pty})
            return TArrow(pty, cod)
        case Fix(self_name, param, fty, body):
            inner = {**env, self_name: fty, param: fty.dom}
            cod = typecheck_simple(body, inner)
            if cod != fty.cod:
                raise TypeError_(
                    f"fix body has type {cod!r}, annotation says {fty.cod!r}"
                )
            return fty
        case App(fn, arg):
            fn_ty = typecheck_simple(fn, env)
            arg_ty = typecheck_simple(arg, env)
            if not isinstance(fn_ty, TArrow):
                raise TypeError_(f"cannot apply non-function of type {fn_ty!r}")
            if fn_ty.dom != arg_ty:
                raise TypeError_(
                    f"argument type {arg_ty!r} does not match {fn_ty.dom!r}"
                )
            return fn_ty.cod
        case IfLeqZero(guard, then, orelse):
            if typecheck_simple(guard, env) != REAL:
                raise TypeError_("if guard must have type R")
            t1 = typecheck_simple(then, env)
            t2 = typecheck_simple(orelse, env)
            if t1 != t2:
                raise TypeError_(f"branch types differ: {t1!r} vs {t2!r}")
            return t1
        case Prim(op, args):
            desc = registry_lookup(op)
            if len(args) != desc.arity:
                raise TypeError_(
                    f"primitive '{op}' expects {desc.arity} args, got {len(args)}"
                )
            for a in args:
                if typecheck_simple(a, env) != REAL:
                    raise TypeError_(f"primitive '{op}' takes R arguments")
            return REAL
        case Score(arg):
            if typecheck_simple(arg, env) != REAL:
                raise TypeError_("score argument must have type R")
            return REAL
    raise TypeError_(f"unhandled term {term!r}")


def free_vars(term: Term, bound=frozenset()):
    match term:
        case Var(name):
            return set() if name in bound else {name}
        case Lambda(param, _, body):
            return free_vars(body, bound | {param})
        case Fix(self_name, param, _, body):
            return free_vars(body, bound | {self_name, param})
        case App(fn, arg):
            return free_vars(fn, bound) | free_vars(arg, bound)
        case IfLeqZero(g, t, e):
            return free_vars(g, bound) | free_vars(t, bound) | free_vars(e, bound)
        case Prim(_, args):
            out = set()
            for a in args:
                out |= free_vars(a, bound)
            return out
        case Score(arg):
            return free_vars(arg, bound)
    return set()


def subst(term: Term, name: str, value: Term) -> Term:
    """Substitute a closed value for a free variable."""
    match term:
        case Var(n):
            return value if n == name else term
        case Lit(_) | Sample() | SampleVar(_) | LitInterval(_):
            return term
        case Lambda(param, pty, body):
            if param == name:
                return term
            return Lambda(param, pty, subst(body, name, value))
        case Fix(self_name, param, fty, body):
            if name in (self_name, param):
                return term
            return Fix(self_name, param, fty, subst(body, name, value))
        case App(fn, arg):
            return App(subst(fn, name, value), subst(arg, name, value))
        case IfLeqZero(g, t, e):
            return IfLeqZero(
                subst(g, name, value), subst(t, name, value), subst(e, name, value)
            )
        case Prim(op, args):
            return Prim(op, tuple(subst(a, name, value) for a in args))
        case Score(arg):
            return Score(subst(arg, name, value))
    raise AssertionError(f"subst: {term!r}")


def contains_fix(term: Term) -> bool:
    match term:
        case Fix(_, _, _, _):
            return True
        case Lambda(_, _, body) | Score(body):
            return contains_fix(body)
        case App(fn, arg):
            return contains_fix(fn) or contains_fix(arg)
        case IfLeqZero(g, t, e):
            return contains_fix(g) or contains_fix(t) or contains_fix(e)
        case Prim(_, args):
            return any(contains_fix(a) for a in args)
    return False


def type_to_str(ty: SimpleType) -> str:
    if isinstance(ty, TReal):
        return "R"
    d = type_to_str(ty.dom)
    if isinstance(ty.dom, TArrow):
        d = f"({d})"
    return f"{d} -> {type_to_str(ty.cod)}"


def pretty(term: Term) -> str:
    """Render a core term in the concrete grammar."""

    def num(q) -> str:
        from .intervals import fmt_endpoint

        s = fmt_endpoint(q)
        return s

    def atom(t: Term) -> str:
        match t:
            case Var(n):
                return n
            case Lit(v):
                return num(v)
            case Sample():
                return "sample"
            case SampleVar(i):
                return f"<a{i}>"
            case LitInterval(iv):
                return f"<{iv!r}>"
            case Prim(op, args):
                if "(" in op:  # pdf family: print the 3-arg surface form
                    fam = op[: op.index("(")]
                    params = op[op.index("(") + 1 : -1]
                    return f"{fam}({params}, {', '.join(go(a) for a in args)})"
                return f"{op}({', '.join(go(a) for a in args)})"
            case Score(arg):
                return f"score({go(arg)})"
            case _:
                return f"({go(t)})"

    def app(t: Term) -> str:
        if isinstance(t, App):
            return f"{app(t.fn)} {atom(t.arg)}"
        return atom(t)

    def go(t: Term) -> str:
        match t:
            case Lambda(p, pty, body):
                return f"fun ({p} : {type_to_str(pty)}) -> {go(body)}"
            case Fix(f, x, fty, body):
                return (
                    f"fix {f} ({x} : {type_to_str(fty.dom)}) : "
                    f"{type_to_str(fty.cod)} -> {go(body)}"
                )
            case IfLeqZero(g, th, el):
                return f"if {go(g)} <= 0 then {go(th)} else {go(el)}"
            case _:
                return app(t)

    return go(term)
