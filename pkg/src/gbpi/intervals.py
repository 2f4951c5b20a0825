"""Closed extended-real intervals with exact rational endpoints.

Finite endpoints are gmpy2.mpq; infinities are the Python floats
inf/-inf (gmpy2 compares mpq against them natively).  All arithmetic
on rational endpoints is exact; transcendental endpoints (exp,
sigmoid, normal pdf) are enclosed via directed mpfr rounding and
converted back to exact rationals, so every interval produced here is
a true enclosure.
"""

from __future__ import annotations

import gmpy2
from gmpy2 import mpq, mpfr

INF = float("inf")
NINF = float("-inf")

# mpfr precision for transcendental enclosures
_PREC = 60

_CTX_DOWN = gmpy2.context(precision=_PREC, round=gmpy2.RoundDown)
_CTX_UP = gmpy2.context(precision=_PREC, round=gmpy2.RoundUp)
_CTX_F_DOWN = gmpy2.context(precision=53, round=gmpy2.RoundDown)
_CTX_F_UP = gmpy2.context(precision=53, round=gmpy2.RoundUp)

Ext = object  # mpq | float infinity


def is_inf(x) -> bool:
    return isinstance(x, float) and (x == INF or x == NINF)


def as_endpoint(x) -> Ext:
    """Coerce to an exact endpoint: mpq for finite values, float for ±inf."""
    if isinstance(x, float):
        if x != x:
            raise ValueError("NaN endpoint")
        if x == INF or x == NINF:
            return x
        return mpq(x)
    if isinstance(x, mpq):
        return x
    return mpq(x)


def ext_neg(x) -> Ext:
    if is_inf(x):
        return -x
    return -x


def ext_add(x, y) -> Ext:
    if is_inf(x) or is_inf(y):
        if x == INF or y == INF:
            if x == NINF or y == NINF:
                raise ArithmeticError("inf + -inf")
            return INF
        return NINF
    return x + y


def ext_sub(x, y) -> Ext:
    return ext_add(x, ext_neg(y))


def ext_mul(x, y) -> Ext:
    # 0 * inf = 0: weights of measure-zero branches must not poison sums
    if is_inf(x) or is_inf(y):
        if x == 0 or y == 0:
            return mpq(0)
        pos = (x > 0) == (y > 0)
        return INF if pos else NINF
    return x * y


def ext_to_float(x, up: bool) -> float:
    """Render an endpoint as a double, rounding outward in the given direction."""
    if is_inf(x):
        return x
    ctx = _CTX_F_UP if up else _CTX_F_DOWN
    with ctx:
        return float(mpfr(x))


class Interval:
    """Closed interval [lo, hi] with lo <= hi."""

    __slots__ = ("lo", "hi")

    def __init__(self, lo, hi=None):
        lo = as_endpoint(lo)
        hi = lo if hi is None else as_endpoint(hi)
        if not lo <= hi:
            raise ValueError(f"invalid interval [{lo}, {hi}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def __setattr__(self, *a):
        raise AttributeError("Interval is immutable")

    def __eq__(self, other):
        return (
            isinstance(other, Interval)
            and self.lo == other.lo
            and self.hi == other.hi
        )

    def __hash__(self):
        return hash(("iv", self.lo, self.hi))

    def __repr__(self):
        return f"[{fmt_endpoint(self.lo)}, {fmt_endpoint(self.hi)}]"

    def __contains__(self, x):
        return self.lo <= x <= self.hi

    def is_point(self) -> bool:
        return self.lo == self.hi

    def width(self):
        return ext_sub(self.hi, self.lo)

    def contains_interval(self, other: "Interval") -> bool:
        return self.lo <= other.lo and other.hi <= self.hi

    def intersects(self, other: "Interval") -> bool:
        return self.lo <= other.hi and other.lo <= self.hi

    def almost_disjoint(self, other: "Interval") -> bool:
        return self.hi <= other.lo or other.hi <= self.lo

    def outward(self) -> tuple:
        """Float rendering: lo rounds toward -inf, hi toward +inf."""
        return (ext_to_float(self.lo, up=False), ext_to_float(self.hi, up=True))


def fmt_endpoint(x) -> str:
    if is_inf(x):
        return "inf" if x > 0 else "-inf"
    f = float(x)
    if mpq(f) == x:
        return repr(f)
    return f"{x.numerator}/{x.denominator}"


TOP = Interval(NINF, INF)
UNIT = Interval(0, 1)
NONNEG = Interval(0, INF)
ONE = Interval(1, 1)
ZERO = Interval(0, 0)


class _Bottom:
    """Bottom of the interval lattice (empty interval)."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "Bottom"

    def __hash__(self):
        return hash("gbpi-bottom")


BOTTOM = _Bottom()


def is_bottom(x) -> bool:
    return x is BOTTOM


# --- lattice operations (arguments are Interval or BOTTOM) ---

def join(a, b):
    if is_bottom(a):
        return b
    if is_bottom(b):
        return a
    return Interval(min(a.lo, b.lo), max(a.hi, b.hi))


def meet(a, b):
    if is_bottom(a) or is_bottom(b):
        return BOTTOM
    lo = max(a.lo, b.lo)
    hi = min(a.hi, b.hi)
    if lo > hi:
        return BOTTOM
    return Interval(lo, hi)


def leq(a, b) -> bool:
    """Interval inclusion; BOTTOM is least."""
    if is_bottom(a):
        return True
    if is_bottom(b):
        return False
    return b.lo <= a.lo and a.hi <= b.hi


def widen(a, b):
    """Endpoint widening: a bound that grew jumps straight to infinity."""
    if is_bottom(a):
        return b
    if is_bottom(b):
        return a
    lo_ok = a.lo <= b.lo
    hi_ok = b.hi <= a.hi
    if lo_ok and hi_ok:
        return a
    if lo_ok:
        return Interval(a.lo, INF)
    if hi_ok:
        return Interval(NINF, a.hi)
    return TOP


# --- interval arithmetic ---

def iadd(a: Interval, b: Interval) -> Interval:
    return Interval(ext_add(a.lo, b.lo), ext_add(a.hi, b.hi))


def isub(a: Interval, b: Interval) -> Interval:
    return Interval(ext_sub(a.lo, b.hi), ext_sub(a.hi, b.lo))


def ineg(a: Interval) -> Interval:
    return Interval(ext_neg(a.hi), ext_neg(a.lo))


def imul(a: Interval, b: Interval) -> Interval:
    prods = [
        ext_mul(a.lo, b.lo),
        ext_mul(a.lo, b.hi),
        ext_mul(a.hi, b.lo),
        ext_mul(a.hi, b.hi),
    ]
    return Interval(min(prods), max(prods))


def iabs(a: Interval) -> Interval:
    if a.lo <= 0 <= a.hi:
        return Interval(0, max(ext_neg(a.lo), a.hi))
    lo, hi = (ext_neg(a.lo), ext_neg(a.hi)) if a.hi < 0 else (a.lo, a.hi)
    return Interval(min(lo, hi), max(lo, hi))


def imin(a: Interval, b: Interval) -> Interval:
    return Interval(min(a.lo, b.lo), min(a.hi, b.hi))


def imax(a: Interval, b: Interval) -> Interval:
    return Interval(max(a.lo, b.lo), max(a.hi, b.hi))


def iscale(c, a: Interval) -> Interval:
    """Multiply by an exact rational scalar."""
    c = as_endpoint(c)
    if c >= 0:
        return Interval(ext_mul(c, a.lo), ext_mul(c, a.hi))
    return Interval(ext_mul(c, a.hi), ext_mul(c, a.lo))


# --- directed transcendental enclosures ---

def _exp_dir(x, up: bool):
    """Rational bound on e^x in the given direction; x is an endpoint."""
    if is_inf(x):
        if x > 0:
            return INF
        return mpq(0)
    ctx = _CTX_UP if up else _CTX_DOWN
    with ctx:
        r = gmpy2.exp(mpfr(x))
    q = mpq(r)
    # exp is positive; directed rounding can hit 0 only from below
    if not up and q < 0:
        q = mpq(0)
    return q


def exp_down(x):
    return _exp_dir(x, up=False)


def exp_up(x):
    return _exp_dir(x, up=True)


def exp_point(x):
    """Rational value for e^x inside [exp_down(x), exp_up(x)]."""
    lo, hi = exp_down(x), exp_up(x)
    if is_inf(hi):
        return hi
    return (lo + hi) / 2


def iexp(a: Interval) -> Interval:
    return Interval(exp_down(a.lo), exp_up(a.hi))


def _sigmoid_dir(x, up: bool):
    if is_inf(x):
        return mpq(1) if x > 0 else mpq(0)
    # 1/(1+exp(-x)): for an upper bound, use a lower bound of the denominator
    e = _exp_dir(ext_neg(x), up=not up)
    denom = 1 + e
    q = 1 / denom
    if up:
        return min(q, mpq(1))
    return max(q, mpq(0))


def sigmoid_down(x):
    return _sigmoid_dir(x, up=False)


def sigmoid_up(x):
    return _sigmoid_dir(x, up=True)


def sigmoid_point(x):
    lo, hi = sigmoid_down(x), sigmoid_up(x)
    return (lo + hi) / 2


def isigmoid(a: Interval) -> Interval:
    return Interval(sigmoid_down(a.lo), sigmoid_up(a.hi))


def sqrt2pi_bounds():
    with _CTX_DOWN:
        lo = gmpy2.sqrt(2 * gmpy2.const_pi())
    with _CTX_UP:
        hi = gmpy2.sqrt(2 * gmpy2.const_pi())
    return mpq(lo), mpq(hi)


_SQRT2PI_DOWN, _SQRT2PI_UP = sqrt2pi_bounds()


def normal_pdf_coeff(sigma):
    """Enclosure of 1/(sigma*sqrt(2*pi)) for exact rational sigma > 0."""
    lo = 1 / (sigma * _SQRT2PI_UP)
    hi = 1 / (sigma * _SQRT2PI_DOWN)
    return lo, hi


def normal_pdf_dir(mu, sigma, x, up: bool):
    """Directed rational bound on the Normal(mu, sigma) density at x."""
    if is_inf(x):
        return mpq(0)
    c_lo, c_hi = normal_pdf_coeff(sigma)
    expo = -((x - mu) ** 2) / (2 * sigma * sigma)  # exact rational
    e = _exp_dir(expo, up)
    return (c_hi if up else c_lo) * e


def normal_pdf_point(mu, sigma, x):
    if is_inf(x):
        return mpq(0)
    lo = normal_pdf_dir(mu, sigma, x, up=False)
    hi = normal_pdf_dir(mu, sigma, x, up=True)
    return (lo + hi) / 2


def inormal_pdf(mu, sigma, a: Interval) -> Interval:
    """Monotone-piece evaluation: increasing up to mu, decreasing after."""
    if a.hi <= mu:
        return Interval(
            normal_pdf_dir(mu, sigma, a.lo, False),
            normal_pdf_dir(mu, sigma, a.hi, True),
        )
    if a.lo >= mu:
        return Interval(
            normal_pdf_dir(mu, sigma, a.hi, False),
            normal_pdf_dir(mu, sigma, a.lo, True),
        )
    # mode inside the box
    lo = min(
        normal_pdf_dir(mu, sigma, a.lo, False),
        normal_pdf_dir(mu, sigma, a.hi, False),
    )
    return Interval(lo, normal_pdf_dir(mu, sigma, mu, True))


def uniform_pdf_point(a, b, x):
    if is_inf(x):
        return mpq(0)
    return 1 / (b - a) if a <= x <= b else mpq(0)


def iuniform_pdf(a, b, box: Interval) -> Interval:
    h = 1 / (b - a)
    if box.hi < a or box.lo > b:
        return ZERO
    if a <= box.lo and box.hi <= b:
        return Interval(h, h)
    return Interval(0, h)
