"""Per-path bound computation, aggregation, and normalization.

Each symbolic path is analyzed either by the linear backend (exact
polytope volumes with score values bracketed by boxes over their
linear subexpressions) or by the interval backend (a grid partition
of the sample box evaluated in interval arithmetic).  Bin, complement
and total masses are accumulated in exact rational arithmetic, so
results are independent of evaluation order.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from gmpy2 import mpq

from . import intervals as iv
from .intervals import INF, NINF, Interval, is_inf
from .geometry import (
    GeometryCapExceeded,
    HPolytope,
    LinExpr,
    NotLinear,
    lp_bound,
    volume,
)
from .prims import lift_eval, registry_lookup
from .symexec import SymPath, explore, value_enclosure
from .syntax import LitInterval, Prim, SampleVar, Term


# --- query intervals (bins and complement segments) ---

@dataclass(frozen=True)
class Bin:
    lo: object  # mpq or -inf
    hi: object  # mpq or +inf
    lo_open: bool = False
    hi_open: bool = False

    def __repr__(self):
        l = "(" if self.lo_open else "["
        r = ")" if self.hi_open else "]"
        return f"{l}{self.lo}, {self.hi}{r}"

    def is_empty(self) -> bool:
        if self.lo < self.hi:
            return False
        if self.lo > self.hi:
            return True
        return self.lo_open or self.hi_open

    def contains_point(self, x) -> bool:
        if x < self.lo or x > self.hi:
            return False
        if x == self.lo and self.lo_open:
            return False
        if x == self.hi and self.hi_open:
            return False
        return True


FULL_LINE = Bin(NINF, INF)


def bin_from_interval(u: Interval) -> Bin:
    return Bin(u.lo, u.hi)


def _enclosure_subset(v: Interval, b: Bin, ae: bool) -> bool:
    """[v.lo, v.hi] certainly inside b; with `ae`, boundary escapes are null."""
    if ae:
        return b.lo <= v.lo and v.hi <= b.hi
    lo_ok = v.lo > b.lo or (v.lo == b.lo and not b.lo_open)
    hi_ok = v.hi < b.hi or (v.hi == b.hi and not b.hi_open)
    return lo_ok and hi_ok


def _enclosure_meets(v: Interval, b: Bin, ae: bool) -> bool:
    """[v.lo, v.hi] may intersect b; with `ae`, point overlaps are null."""
    if ae:
        return v.hi > b.lo and v.lo < b.hi
    lo_ok = v.hi > b.lo or (v.hi == b.lo and not b.lo_open)
    hi_ok = v.lo < b.hi or (v.lo == b.hi and not b.hi_open)
    return lo_ok and hi_ok


def complement_segments(bins: Sequence[Bin]) -> List[Bin]:
    """Disjoint segments covering the real line outside the given bins."""
    ordered = sorted(bins, key=lambda b: (b.lo, b.hi))
    for a, b in zip(ordered, ordered[1:]):
        overlap_open = a.hi_open or b.lo_open
        if a.hi > b.lo or (a.hi == b.lo and not overlap_open):
            raise ValueError(f"bins {a} and {b} overlap")
    segs = []
    cur_lo, cur_lo_open = NINF, False
    for b in ordered:
        seg = Bin(cur_lo, b.lo, cur_lo_open, not b.lo_open)
        if not seg.is_empty():
            segs.append(seg)
        cur_lo, cur_lo_open = b.hi, not b.hi_open
    last = Bin(cur_lo, INF, cur_lo_open, False)
    if not last.is_empty():
        segs.append(last)
    return segs


# --- linear forms ---

def linearize(t: Term, n: int) -> Optional[LinExpr]:
    """Interval-linear form of a ground symbolic value, if it has one.

    Multiplication is linear only when one side is a point constant;
    a nondegenerate interval times a variable part is not.
    """
    match t:
        case SampleVar(i):
            coeffs = [mpq(0)] * n
            coeffs[i - 1] = mpq(1)
            return LinExpr(tuple(coeffs), iv.ZERO)
        case LitInterval(box):
            return LinExpr(tuple([mpq(0)] * n), box)
        case Prim("add", (a, b)):
            la, lb = linearize(a, n), linearize(b, n)
            if la is None or lb is None:
                return None
            return LinExpr(
                tuple(x + y for x, y in zip(la.coeffs, lb.coeffs)),
                iv.iadd(la.const, lb.const),
            )
        case Prim("sub", (a, b)):
            la, lb = linearize(a, n), linearize(b, n)
            if la is None or lb is None:
                return None
            return LinExpr(
                tuple(x - y for x, y in zip(la.coeffs, lb.coeffs)),
                iv.isub(la.const, lb.const),
            )
        case Prim("neg", (a,)):
            la = linearize(a, n)
            if la is None:
                return None
            return LinExpr(tuple(-x for x in la.coeffs), iv.ineg(la.const))
        case Prim("mul", (a, b)):
            la, lb = linearize(a, n), linearize(b, n)
            if la is None or lb is None:
                return None
            for lit, other in ((la, lb), (lb, la)):
                if lit.is_constant() and lit.const.is_point():
                    c = lit.const.lo
                    return LinExpr(
                        tuple(c * x for x in other.coeffs),
                        iv.iscale(c, other.const),
                    )
            if la.is_constant() and lb.is_constant():
                return LinExpr(la.coeffs, iv.imul(la.const, lb.const))
            return None
    return None


def _is_ae_eligible(le: Optional[LinExpr]) -> bool:
    """Nonconstant exact-linear values spread no mass on null boundaries."""
    return le is not None and le.is_exact() and not le.is_constant()


# --- score decomposition (nonlinear wrapper over linear subexpressions) ---

@dataclass
class ScoreFactor:
    prim: Optional[str]  # registry id, or None for the identity
    args: List[LinExpr]


def decompose_scores(scores: Sequence[Term], n: int) -> List[ScoreFactor]:
    """Each score value as f(Z1..Zm) with every Zj interval-linear."""
    out = []
    for w in scores:
        le = linearize(w, n)
        if le is not None:
            out.append(ScoreFactor(None, [le]))
            continue
        if isinstance(w, Prim):
            args = [linearize(a, n) for a in w.args]
            if all(a is not None for a in args):
                out.append(ScoreFactor(w.op, args))
                continue
        raise NotLinear(f"score value does not decompose: {w!r}")
    return out


def _factor_interval(f: ScoreFactor, arg_boxes: List[Interval]) -> Interval:
    if f.prim is None:
        return arg_boxes[0]
    desc = registry_lookup(f.prim)
    return lift_eval(desc, arg_boxes)


# --- constraint triage ---

@dataclass
class TriagedConstraint:
    value: Term
    rel: str
    threshold: object
    lin: Optional[LinExpr]
    ae: bool


def _constraint_certain(enc: Interval, rel: str, r) -> Optional[bool]:
    """True: holds for every value; False: fails for every value; None: mixed."""
    if rel == "<=":
        if enc.hi <= r:
            return True
        if enc.lo > r:
            return False
    elif rel == "<":
        if enc.hi < r:
            return True
        if enc.lo >= r:
            return False
    elif rel == ">=":
        if enc.lo >= r:
            return True
        if enc.hi < r:
            return False
    elif rel == ">":
        if enc.lo > r:
            return True
        if enc.hi <= r:
            return False
    return None


def _constraint_certain_ae(enc: Interval, rel: str, r, ae: bool) -> Optional[bool]:
    """Like _constraint_certain, but for atom-free values the strictness of
    the relation is immaterial (the boundary set is null)."""
    if not ae:
        return _constraint_certain(enc, rel, r)
    if rel in ("<=", "<"):
        if enc.hi <= r:
            return True
        if enc.lo >= r:
            return False
    else:
        if enc.lo >= r:
            return True
        if enc.hi <= r:
            return False
    return None


class PathDead(Exception):
    """Some constraint fails on the whole sample box."""


def triage_constraints(path: SymPath) -> List[TriagedConstraint]:
    """Drop constraints that hold everywhere; raise PathDead when one
    fails everywhere.  Remaining constraints carry their linear form."""
    out = []
    for c in path.constraints:
        enc = value_enclosure(c.value)
        cert = _constraint_certain(enc, c.rel, c.threshold)
        if cert is True:
            continue
        if cert is False:
            raise PathDead
        lin = linearize(c.value, path.n)
        out.append(TriagedConstraint(c.value, c.rel, c.threshold, lin, _is_ae_eligible(lin)))
    return out


# --- linear backend ---

def build_polytopes(path: SymPath, b: Bin):
    """(lb polytope, ub polytope) for a path and a query bin.

    Universally quantified interval constants tighten rows, existentially
    quantified ones relax them.  Raises NotLinear when some live
    constraint or the result value has no interval-linear form, and
    PathDead when a constraint is certainly violated.
    """
    n = path.n
    triaged = triage_constraints(path)
    p_lb = HPolytope(n)
    p_ub = HPolytope(n)
    for tc in triaged:
        if tc.lin is None:
            raise NotLinear(f"constraint value is not interval-linear: {tc.value!r}")
        w, const = tc.lin.coeffs, tc.lin.const
        r = tc.threshold
        strict = tc.rel in ("<", ">")
        neg_w = tuple(-x for x in w)
        if tc.rel in ("<=", "<"):
            p_lb.add(w, iv.ext_sub(r, const.hi), strict)
            p_ub.add(w, iv.ext_sub(r, const.lo), strict)
        else:
            p_lb.add(neg_w, iv.ext_sub(const.lo, r), strict)
            p_ub.add(neg_w, iv.ext_sub(const.hi, r), strict)
    vle = linearize(path.value, n)
    if vle is None:
        raise NotLinear(f"result value is not interval-linear: {path.value!r}")
    v, const = vle.coeffs, vle.const
    neg_v = tuple(-x for x in v)
    ae = _is_ae_eligible(vle)
    if not is_inf(b.lo):
        # lb: forall t. t >= lo ; ub: exists t. t >= lo
        p_lb.add(neg_v, iv.ext_sub(const.lo, b.lo), b.lo_open and not ae)
        p_ub.add(neg_v, iv.ext_sub(const.hi, b.lo), b.lo_open and not ae)
    if not is_inf(b.hi):
        p_lb.add(v, iv.ext_sub(b.hi, const.hi), b.hi_open and not ae)
        p_ub.add(v, iv.ext_sub(b.hi, const.lo), b.hi_open and not ae)
    return p_lb, p_ub


@dataclass
class PathBounds:
    lower: object  # nonnegative mpq
    upper: object  # nonnegative mpq or +inf
    method: str


def _nonneg(x):
    return x if is_inf(x) or x > 0 else mpq(0)


def _mesh_bounds(
    p: HPolytope,
    factors: List[ScoreFactor],
    splits: int,
    side: str,
    dim_cap: int,
    work_cap: int,
    work=None,
):
    """One side of Prop-6.6-style box splitting over a polytope."""
    if p.empty:
        return mpq(0)
    # distinct nonzero linear parts get a mesh dimension
    dims: Dict[Tuple, int] = {}
    for f in factors:
        for a in f.args:
            if not a.is_constant() and a.coeffs not in dims:
                dims[a.coeffs] = len(dims)
    exprs = list(dims.keys())

    def weight_from(boxes: List[Interval]):
        acc = iv.ONE
        for f in factors:
            arg_boxes = []
            for a in f.args:
                if a.is_constant():
                    arg_boxes.append(a.const)
                else:
                    rng = boxes[dims[a.coeffs]]
                    arg_boxes.append(iv.iadd(rng, a.const))
            fi = _factor_interval(f, arg_boxes)
            if side == "lb":
                fi = iv.meet(fi, iv.NONNEG)
                if iv.is_bottom(fi):
                    return None
            acc = iv.imul(acc, fi)
        return acc

    if not exprs:
        w = weight_from([])
        if w is None:
            return mpq(0)
        vol = volume(p, dim_cap, work_cap, work)
        if vol == 0:
            return mpq(0)
        bound = w.lo if side == "lb" else w.hi
        if is_inf(bound):
            return INF
        return _nonneg(bound) * vol

    ranges = []
    for coeffs in exprs:
        r = lp_bound(p, LinExpr(coeffs, iv.ZERO))
        if r is None:
            return mpq(0)
        lo, hi = r
        if is_inf(lo) or is_inf(hi):
            raise GeometryCapExceeded("unbounded score expression range")
        ranges.append((lo, hi))

    per_dim_chunks = []
    for lo, hi in ranges:
        if lo == hi:
            per_dim_chunks.append([Interval(lo, hi)])
            continue
        width = (hi - lo) / splits
        per_dim_chunks.append(
            [Interval(lo + i * width, lo + (i + 1) * width) for i in range(splits)]
        )

    total = mpq(0)
    for combo in itertools.product(*per_dim_chunks):
        w = weight_from(list(combo))
        if w is None:
            continue
        bound = w.lo if side == "lb" else w.hi
        bound = _nonneg(bound)
        if bound == 0:
            continue
        q = p.copy()
        for coeffs, box in zip(exprs, combo):
            if not box.is_point():
                q.add(coeffs, box.hi)
                q.add(tuple(-c for c in coeffs), -box.lo)
        vol = volume(q, dim_cap, work_cap, work)
        if vol == 0:
            continue
        if is_inf(bound):
            return INF
        total += bound * vol
    return total


def analyze_path_linear(
    path: SymPath,
    b: Bin,
    splits_expr: int,
    dim_cap: int = 10,
    work_cap: int = 400_000,
    work=None,
) -> PathBounds:
    """Linear backend: polytope volumes with score boxes (raises NotLinear
    or GeometryCapExceeded when inapplicable)."""
    try:
        p_lb, p_ub = build_polytopes(path, b)
    except PathDead:
        return PathBounds(mpq(0), mpq(0), "linear")
    factors = decompose_scores(path.scores, path.n)
    lower = _mesh_bounds(p_lb, factors, splits_expr, "lb", dim_cap, work_cap, work)
    upper = _mesh_bounds(p_ub, factors, splits_expr, "ub", dim_cap, work_cap, work)
    if not is_inf(upper) and not is_inf(lower) and lower > upper:
        lower = upper  # guard against pathological meshes; bounds stay sound
    return PathBounds(lower, upper, "linear")


# --- interval backend ---

def _eval_cell(t: Term, cell: List[Interval], cache: dict) -> Interval:
    key = id(t)
    hit = cache.get(key)
    if hit is not None:
        return hit
    match t:
        case SampleVar(i):
            res = cell[i - 1]
        case LitInterval(box):
            res = box
        case Prim(op, args):
            desc = registry_lookup(op)
            res = lift_eval(desc, [_eval_cell(a, cell, cache) for a in args])
        case _:
            raise ValueError(f"not a ground value: {t!r}")
    cache[key] = res
    return res


def _lin_eval(le: LinExpr, cell: List[Interval]) -> Interval:
    lo = le.const.lo
    hi = le.const.hi
    for c, box in zip(le.coeffs, cell):
        if c > 0:
            lo = iv.ext_add(lo, iv.ext_mul(c, box.lo))
            hi = iv.ext_add(hi, iv.ext_mul(c, box.hi))
        elif c < 0:
            lo = iv.ext_add(lo, iv.ext_mul(c, box.hi))
            hi = iv.ext_add(hi, iv.ext_mul(c, box.lo))
    return Interval(lo, hi)


def analyze_path_interval(
    path: SymPath,
    bins: Sequence[Bin],
    splits_var: int,
    cell_budget: int = 65_536,
) -> List[PathBounds]:
    """Interval backend: full grid partition of the sample box, one pass
    for all query bins.  Cells with undecided constraints contribute
    nothing to lower bounds and their full weight to upper bounds."""
    n = path.n
    try:
        triaged = triage_constraints(path)
    except PathDead:
        return [PathBounds(mpq(0), mpq(0), "interval") for _ in bins]

    k = max(1, min(splits_var, int(cell_budget ** (1.0 / n)) if n else 1))
    method = "typeonly" if (n > 0 and k == 1 and splits_var > 1) else "interval"

    value_lin = linearize(path.value, n)
    value_ae = _is_ae_eligible(value_lin)
    factor_lins = [linearize(w, n) for w in path.scores]

    cuts = [Interval(mpq(i, k), mpq(i + 1, k)) for i in range(k)]
    cell_vol = mpq(1, k ** n) if n else mpq(1)
    lows = [mpq(0) for _ in bins]
    ups: List[object] = [mpq(0) for _ in bins]

    for combo in itertools.product(range(k), repeat=n):
        cell = [cuts[i] for i in combo]
        cache: dict = {}
        alive = True
        all_true = True
        for tc in triaged:
            enc = (
                _lin_eval(tc.lin, cell)
                if tc.lin is not None
                else _eval_cell(tc.value, cell, cache)
            )
            cert = _constraint_certain_ae(enc, tc.rel, tc.threshold, tc.ae)
            if cert is False:
                alive = False
                break
            if cert is None:
                all_true = False
        if not alive:
            continue

        w_lo, w_hi = mpq(1), mpq(1)
        for wt, wlin in zip(path.scores, factor_lins):
            enc = (
                _lin_eval(wlin, cell)
                if wlin is not None
                else _eval_cell(wt, cell, cache)
            )
            flo = _nonneg(enc.lo)
            fhi = _nonneg(enc.hi)
            w_lo = iv.ext_mul(w_lo, flo)
            w_hi = iv.ext_mul(w_hi, fhi)

        venc = (
            _lin_eval(value_lin, cell)
            if value_lin is not None
            else _eval_cell(path.value, cell, cache)
        )

        for idx, b in enumerate(bins):
            if all_true and w_lo > 0 and _enclosure_subset(venc, b, value_ae):
                lows[idx] += cell_vol * w_lo
            if _enclosure_meets(venc, b, value_ae):
                if is_inf(w_hi):
                    ups[idx] = INF
                elif not is_inf(ups[idx]):
                    ups[idx] += cell_vol * w_hi
    return [
        PathBounds(lo, up, method) for lo, up in zip(lows, ups)
    ]


# --- aggregation and normalization ---

@dataclass
class BinBounds:
    bin: Bin
    lb: object
    ub: object
    norm_lb: Optional[object] = None
    norm_ub: Optional[object] = None


@dataclass
class BinnedBounds:
    bins: List[BinBounds]
    outside_lb: object
    outside_ub: object
    z_lb: object
    z_ub: object
    approx_fired: bool = False
    path_methods: Dict[str, int] = field(default_factory=dict)


@dataclass
class EngineConfig:
    depth: int = 2000
    splits_expr: int = 64
    splits_var: int = 16
    method: str = "auto"  # auto | interval | linear
    dim_cap: int = 10
    work_cap: int = 400_000
    cell_budget: int = 65_536
    path_cap: int = 200_000


def _add(a, b):
    if is_inf(a) or is_inf(b):
        return INF
    return a + b


def aggregate(p: Term, bins: Sequence[Bin], cfg: EngineConfig) -> BinnedBounds:
    """Explore, analyze every path against every bin and the complement,
    and assemble normalized histogram bounds."""
    paths, fired = explore(p, cfg.depth, cfg.path_cap)
    segments = complement_segments(bins)
    queries = list(bins) + segments
    nbins = len(bins)

    lows = [mpq(0)] * len(queries)
    ups: List[object] = [mpq(0)] * len(queries)
    methods: Dict[str, int] = {}

    for path in paths:
        results = None
        # spec dispatch: the linear backend applies up to the dimension cap
        if cfg.method in ("auto", "linear") and path.n <= cfg.dim_cap:
            work = [0]  # one geometry budget across all queries of this path
            try:
                results = [
                    analyze_path_linear(
                        path, q, cfg.splits_expr, cfg.dim_cap, cfg.work_cap,
                        work,
                    )
                    for q in queries
                ]
            except (NotLinear, GeometryCapExceeded):
                if cfg.method == "linear":
                    raise
                results = None
        elif cfg.method == "linear":
            raise GeometryCapExceeded(
                f"path with {path.n} sample variables exceeds the linear "
                f"dimension cap {cfg.dim_cap}"
            )
        if results is None:
            results = analyze_path_interval(
                path, queries, cfg.splits_var, cfg.cell_budget
            )
        tag = results[0].method if results else "linear"
        methods[tag] = methods.get(tag, 0) + 1
        for i, r in enumerate(results):
            lows[i] += r.lower
            ups[i] = _add(ups[i], r.upper)

    out_lb = sum(lows[nbins:], mpq(0))
    out_ub = mpq(0)
    for u in ups[nbins:]:
        out_ub = _add(out_ub, u)

    z_lb = sum(lows[:nbins], out_lb)
    z_ub = out_ub
    for u in ups[:nbins]:
        z_ub = _add(z_ub, u)

    bb = [BinBounds(b, lows[i], ups[i]) for i, b in enumerate(bins)]
    result = BinnedBounds(bb, out_lb, out_ub, z_lb, z_ub, fired, methods)
    normalize(result)
    return result


def normalize(r: BinnedBounds) -> BinnedBounds:
    """Sound normalized bounds from unnormalized ones.

    norm_lb(i) = lb_i / (lb_i + sum_{j != i} ub_j + ub_out)
    norm_ub(i) = min(1, ub_i / (ub_i + sum_{j != i} lb_j + lb_out)),
    with a zero denominator yielding 1.
    """
    lbs = [b.lb for b in r.bins] + [r.outside_lb]
    ubs = [b.ub for b in r.bins] + [r.outside_ub]
    sum_lb = sum(lbs, mpq(0))
    fin_sum_ub = sum((u for u in ubs if not is_inf(u)), mpq(0))
    n_inf = sum(1 for u in ubs if is_inf(u))
    for i, b in enumerate(r.bins):
        inf_others = n_inf - (1 if is_inf(b.ub) else 0)
        if inf_others:
            others_ub = INF
        else:
            others_ub = fin_sum_ub - (b.ub if not is_inf(b.ub) else mpq(0))
        denom_lb = _add(b.lb, others_ub)
        if is_inf(denom_lb) or denom_lb == 0:
            b.norm_lb = mpq(0)
        else:
            b.norm_lb = b.lb / denom_lb
        others_lb = sum_lb - b.lb
        denom_ub = _add(b.ub, others_lb)
        if is_inf(b.ub) or denom_ub == 0:
            b.norm_ub = mpq(1)
        else:
            b.norm_ub = min(mpq(1), b.ub / denom_ub)
    return r
