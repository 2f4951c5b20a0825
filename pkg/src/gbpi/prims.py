"""Primitive-function registry.

Each primitive carries a concrete evaluator on exact rationals, an
interval evaluator that encloses it (tightest for the shipped set), a
linearity tag, and, for unary densities, a monotone-piece
decomposition.  Parameterized families (pdf_normal, pdf_uniform) are
instantiated on lookup and cached.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

from gmpy2 import mpq

from . import intervals as iv
from .intervals import INF, NINF, Interval


class UnknownPrimitive(Exception):
    pass


@dataclass(frozen=True)
class PrimDescriptor:
    name: str
    arity: int
    concrete_eval: Callable
    interval_eval: Callable
    linear: bool
    # for unary pdfs: ((domain interval, "inc" | "dec"), ...)
    monotone_pieces: Optional[Tuple] = None
    # True when the range is provably within [0, inf)
    nonnegative: bool = False


def _mk_simple():
    out = {}

    def q2(f):
        return lambda a, b: f(a, b)

    out["add"] = PrimDescriptor(
        "add", 2, lambda a, b: a + b, iv.iadd, linear=True
    )
    out["sub"] = PrimDescriptor(
        "sub", 2, lambda a, b: a - b, iv.isub, linear=True
    )
    out["mul"] = PrimDescriptor(
        "mul", 2, lambda a, b: a * b, iv.imul, linear=False
    )
    out["neg"] = PrimDescriptor("neg", 1, lambda a: -a, iv.ineg, linear=True)
    out["abs"] = PrimDescriptor(
        "abs", 1, abs, iv.iabs, linear=False, nonnegative=True
    )
    out["min"] = PrimDescriptor("min", 2, min, iv.imin, linear=False)
    out["max"] = PrimDescriptor("max", 2, max, iv.imax, linear=False)
    out["exp"] = PrimDescriptor(
        "exp",
        1,
        iv.exp_point,
        iv.iexp,
        linear=False,
        monotone_pieces=((Interval(NINF, INF), "inc"),),
        nonnegative=True,
    )
    out["sigmoid"] = PrimDescriptor(
        "sigmoid",
        1,
        iv.sigmoid_point,
        iv.isigmoid,
        linear=False,
        monotone_pieces=((Interval(NINF, INF), "inc"),),
        nonnegative=True,
    )
    return out


_SIMPLE = _mk_simple()
_CACHE: dict = {}

_FAMILY_RE = re.compile(r"^([a-z_]+)\(([^)]*)\)$")


def _parse_params(raw: str):
    from .parser import parse_decimal

    parts = [p.strip() for p in raw.split(",")]
    return [parse_decimal(p) for p in parts]


def registry_lookup(prim_id: str) -> PrimDescriptor:
    if prim_id in _SIMPLE:
        return _SIMPLE[prim_id]
    if prim_id in _CACHE:
        return _CACHE[prim_id]
    m = _FAMILY_RE.match(prim_id)
    if not m:
        raise UnknownPrimitive(f"unknown primitive '{prim_id}'")
    family, raw = m.group(1), m.group(2)
    try:
        params = _parse_params(raw)
    except Exception:
        raise UnknownPrimitive(f"malformed parameters in '{prim_id}'")
    if family == "pdf_normal":
        if len(params) != 2 or params[1] <= 0:
            raise UnknownPrimitive(
                f"pdf_normal needs (mean, positive stddev): '{prim_id}'"
            )
        mu, sigma = params
        desc = PrimDescriptor(
            prim_id,
            1,
            lambda x, mu=mu, sigma=sigma: iv.normal_pdf_point(mu, sigma, x),
            lambda b, mu=mu, sigma=sigma: iv.inormal_pdf(mu, sigma, b),
            linear=False,
            monotone_pieces=(
                (Interval(NINF, mu), "inc"),
                (Interval(mu, INF), "dec"),
            ),
            nonnegative=True,
        )
    elif family == "pdf_uniform":
        if len(params) != 2 or params[0] >= params[1]:
            raise UnknownPrimitive(
                f"pdf_uniform needs (lo, hi) with lo < hi: '{prim_id}'"
            )
        a, b = params
        desc = PrimDescriptor(
            prim_id,
            1,
            lambda x, a=a, b=b: iv.uniform_pdf_point(a, b, x),
            lambda box, a=a, b=b: iv.iuniform_pdf(a, b, box),
            linear=False,
            monotone_pieces=(
                (Interval(NINF, a), "inc"),
                (Interval(a, b), "inc"),
                (Interval(b, INF), "dec"),
            ),
            nonnegative=True,
        )
    else:
        raise UnknownPrimitive(f"unknown primitive '{prim_id}'")
    _CACHE[prim_id] = desc
    return desc


def lift_eval(desc: PrimDescriptor, args) -> Interval:
    """Interval lifting of a primitive; tightest for the shipped registry."""
    if len(args) != desc.arity:
        raise ValueError(f"{desc.name} expects {desc.arity} args")
    return desc.interval_eval(*args)


def is_known_primitive(prim_id: str) -> bool:
    try:
        registry_lookup(prim_id)
        return True
    except UnknownPrimitive:
        return False
