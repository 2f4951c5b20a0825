"""Stochastic symbolic execution and fixpoint over-approximation.

Samples become fresh sample variables, conditionals fork, and score
values are recorded as path factors.  The explorer is a worklist with
a per-config depth: configs that still contain fixpoints past the
depth limit have every fixpoint subterm replaced by a constant
function built from its inferred weighted interval type, after which
reduction is strongly normalizing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

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
    TArrow,
    TReal,
    Var,
    contains_fix,
    subst,
)

RELATIONS = ("<=", "<", ">", ">=")


@dataclass(frozen=True)
class SymConstraint:
    """value <rel> threshold, with the value a ground symbolic term."""

    value: Term
    rel: str
    threshold: object  # mpq

    def __repr__(self):
        from .syntax import pretty

        return f"{pretty(self.value)} {self.rel} {self.threshold}"


@dataclass(frozen=True)
class SymConfig:
    term: Term
    n: int
    constraints: Tuple[SymConstraint, ...]
    scores: Tuple[Term, ...]


@dataclass(frozen=True)
class SymPath:
    value: Term
    n: int
    constraints: Tuple[SymConstraint, ...]
    scores: Tuple[Term, ...]

    def __repr__(self):
        from .syntax import pretty

        cs = ", ".join(repr(c) for c in self.constraints)
        ws = ", ".join(pretty(w) for w in self.scores)
        return f"<{pretty(self.value)} | n={self.n} | {{{cs}}} | {{{ws}}}>"


class ExplorationBudgetExceeded(Exception):
    pass


def is_ground_value(t: Term) -> bool:
    """Ground symbolic values: sample vars, interval literals, delayed prims."""
    match t:
        case SampleVar(_) | LitInterval(_):
            return True
        case Prim(_, args):
            return all(is_ground_value(a) for a in args)
    return False


def is_sym_value(t: Term) -> bool:
    """Machine values: an all-literal primitive application is a redex
    (it folds via interval lifting), not a value."""
    if isinstance(t, (Lambda, Fix)):
        return True
    match t:
        case SampleVar(_) | LitInterval(_):
            return True
        case Prim(_, args):
            return all(is_sym_value(a) for a in args) and not all(
                isinstance(a, LitInterval) for a in args
            )
    return False


def _inject(t: Term) -> Term:
    """Replace concrete literals by point intervals."""
    match t:
        case Lit(v):
            return LitInterval(Interval(v, v))
        case Lambda(p, ty, b):
            return Lambda(p, ty, _inject(b))
        case Fix(f, x, ty, b):
            return Fix(f, x, ty, _inject(b))
        case App(f, a):
            return App(_inject(f), _inject(a))
        case IfLeqZero(g, th, el):
            return IfLeqZero(_inject(g), _inject(th), _inject(el))
        case Prim(op, args):
            return Prim(op, tuple(_inject(a) for a in args))
        case Score(a):
            return Score(_inject(a))
    return t


def value_enclosure(t: Term) -> Interval:
    """Interval enclosure of a ground symbolic value over the full sample box."""
    match t:
        case LitInterval(box):
            return box
        case SampleVar(_):
            return iv.UNIT
        case Prim(op, args):
            desc = registry_lookup(op)
            return lift_eval(desc, [value_enclosure(a) for a in args])
    raise ValueError(f"not a ground value: {t!r}")


def sym_step(c: SymConfig) -> List[SymConfig]:
    """Successors of a symbolic configuration (empty when dead)."""

    def go(t: Term):
        """Alternatives for the CbV redex inside t: (term', n', cs, ws)."""
        match t:
            case App(fn, arg):
                if not is_sym_value(fn):
                    return [(App(f2, arg), n, cs, ws) for f2, n, cs, ws in go(fn)]
                if not is_sym_value(arg):
                    return [(App(fn, a2), n, cs, ws) for a2, n, cs, ws in go(arg)]
                if isinstance(fn, Lambda):
                    return [(subst(fn.body, fn.param, arg), c.n, (), ())]
                if isinstance(fn, Fix):
                    body = subst(fn.body, fn.param, arg)
                    return [(subst(body, fn.self_name, fn), c.n, (), ())]
                raise ValueError("application of a non-function")
            case IfLeqZero(g, th, el):
                if not is_sym_value(g):
                    return [
                        (IfLeqZero(g2, th, el), n, cs, ws) for g2, n, cs, ws in go(g)
                    ]
                if isinstance(g, LitInterval):
                    # decidable literal guards take one branch only
                    box = g.interval
                    alts = []
                    if box.lo <= 0:
                        alts.append((th, c.n, (SymConstraint(g, "<=", mpq(0)),), ()))
                    if box.hi > 0:
                        alts.append((el, c.n, (SymConstraint(g, ">", mpq(0)),), ()))
                    return alts
                return [
                    (th, c.n, (SymConstraint(g, "<=", mpq(0)),), ()),
                    (el, c.n, (SymConstraint(g, ">", mpq(0)),), ()),
                ]
            case Prim(op, args):
                for i, a in enumerate(args):
                    if not is_sym_value(a):
                        return [
                            (Prim(op, args[:i] + (a2,) + args[i + 1:]), n, cs, ws)
                            for a2, n, cs, ws in go(a)
                        ]
                # all values and all literal: fold via interval lifting
                desc = registry_lookup(op)
                folded = lift_eval(desc, [a.interval for a in args])
                return [(LitInterval(folded), c.n, (), ())]
            case Sample():
                return [(SampleVar(c.n + 1), c.n + 1, (), ())]
            case Score(arg):
                if not is_sym_value(arg):
                    return [(Score(a2), n, cs, ws) for a2, n, cs, ws in go(arg)]
                if not is_ground_value(arg):
                    raise ValueError("score of a non-number")
                if isinstance(arg, LitInterval):
                    box = arg.interval
                    if box.hi < 0:
                        return []  # inadmissible on every refinement
                    if box == iv.ONE:
                        return [(arg, c.n, (), ())]  # identity factor
                return [(arg, c.n, (SymConstraint(arg, ">=", mpq(0)),), (arg,))]
            case Var(name):
                raise ValueError(f"free variable '{name}'")
        raise AssertionError(f"no redex in {t!r}")

    if is_sym_value(c.term):
        return []
    return [
        SymConfig(term, n, c.constraints + cs, c.scores + ws)
        for term, n, cs, ws in go(c.term)
    ]


def explore(
    p: Term,
    depth_limit: int,
    path_cap: int = 200_000,
    iteration_cap: int = 5_000_000,
) -> Tuple[List[SymPath], bool]:
    """Worklist path enumeration with approxFix past the depth limit.

    Returns (paths, approx_fired).
    """
    from collections import deque

    init = SymConfig(_inject(p), 0, (), ())
    work = deque([(init, 0)])
    paths: List[SymPath] = []
    approx_fired = False
    iters = 0
    while work:
        iters += 1
        if iters > iteration_cap:
            raise ExplorationBudgetExceeded(
                f"symbolic exploration exceeded {iteration_cap} iterations"
            )
        cfg, depth = work.popleft()
        if is_sym_value(cfg.term):
            if not is_ground_value(cfg.term):
                raise ValueError("program reduced to a function value")
            paths.append(SymPath(cfg.term, cfg.n, cfg.constraints, cfg.scores))
            if len(paths) > path_cap:
                raise ExplorationBudgetExceeded(
                    f"more than {path_cap} symbolic paths"
                )
            continue
        if depth <= depth_limit or not contains_fix(cfg.term):
            for nxt in sym_step(cfg):
                work.append((nxt, depth + 1))
        else:
            work.append((approx_fix(cfg), depth))
            approx_fired = True
    return paths, approx_fired


# --- approxFix ---

def _skeleton_term(wt) -> Term:
    """Term of a weighted type: score the weight bound, return the value bound."""
    from .typesys import ArrowType, WeightedType

    assert isinstance(wt, WeightedType)
    if is_bottom(wt.weight) or is_bottom(wt.value):
        # provably no terminating execution: weight zero kills the branch
        body: Term = LitInterval(iv.TOP)
        weight_iv = iv.ZERO
        value_term = body
    else:
        weight_iv = wt.weight
        value_term = _value_skeleton(wt.value)
    seq_body = value_term
    scored = Score(LitInterval(weight_iv))
    # score(w); value  ==  (fun _ -> value) (score w)
    return App(Lambda("_", TReal(), seq_body), scored)


def _value_skeleton(v) -> Term:
    from .typesys import ArrowType

    if is_bottom(v):
        return LitInterval(iv.TOP)
    if isinstance(v, Interval):
        return LitInterval(v)
    assert isinstance(v, ArrowType)
    return Lambda("_", _dom_simple_type(v.dom), _skeleton_term(v.cod))


def _dom_simple_type(dom):
    from .typesys import ArrowType

    if isinstance(dom, ArrowType):
        return TArrow(_dom_simple_type(dom.dom), TReal())
    return TReal()


def approx_fix(cfg: SymConfig) -> SymConfig:
    """Replace every fixpoint subterm by a constant function built from
    its weighted interval type; the result contains no Fix nodes."""
    from .typesys import ArrowType, infer_with_fix_types

    _, fix_types = infer_with_fix_types(cfg.term)

    def replace(t: Term) -> Term:
        match t:
            case Fix(_, _, fty, _):
                arrow = fix_types.get(id(t))
                if arrow is None:
                    # identical subterm elsewhere in the tree: re-infer alone
                    _, local = infer_with_fix_types(t)
                    arrow = local[id(t)]
                assert isinstance(arrow, ArrowType)
                return Lambda("_", fty.dom, _skeleton_term(arrow.cod))
            case Lambda(p, ty, b):
                return Lambda(p, ty, replace(b))
            case App(f, a):
                return App(replace(f), replace(a))
            case IfLeqZero(g, th, el):
                return IfLeqZero(replace(g), replace(th), replace(el))
            case Prim(op, args):
                return Prim(op, tuple(replace(a) for a in args))
            case Score(a):
                return Score(replace(a))
        return t

    new_term = replace(cfg.term)
    assert not contains_fix(new_term)
    return SymConfig(new_term, cfg.n, cfg.constraints, cfg.scores)
