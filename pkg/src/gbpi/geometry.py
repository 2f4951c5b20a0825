"""Exact rational linear programming and polytope volume over sample space.

Polytopes live inside the unit box (one dimension per sample
variable).  The LP is a two-phase simplex with Bland's rule; volume
uses the divergence-theorem recursion over facets (substituting each
row as an equality and projecting out one coordinate), with
axis-aligned dimensions factored out first and redundant rows pruned
per level.  All arithmetic is exact; strict relations are recorded
but treated as non-strict wherever the discarded boundary is null.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

from gmpy2 import mpq

from .intervals import INF, NINF, Interval, is_inf


class NotLinear(Exception):
    pass


class GeometryCapExceeded(Exception):
    pass


@dataclass(frozen=True)
class LinExpr:
    """Interval-linear form: coeffs . alpha + [const.lo, const.hi]."""

    coeffs: Tuple  # rationals, length = ambient dimension
    const: Interval

    def is_exact(self) -> bool:
        return self.const.is_point() and not is_inf(self.const.lo)

    def is_constant(self) -> bool:
        return all(c == 0 for c in self.coeffs)


@dataclass(frozen=True)
class Row:
    """coeffs . x <= rhs (strict kept only for zero-coefficient decisions)."""

    coeffs: Tuple
    rhs: object  # mpq
    strict: bool = False


@dataclass
class HPolytope:
    """Conjunction of rows inside the implicit unit box [0,1]^dim."""

    dim: int
    rows: List[Row] = field(default_factory=list)
    empty: bool = False

    def add(self, coeffs, rhs, strict=False):
        if self.empty:
            return
        coeffs = tuple(mpq(c) for c in coeffs)
        if is_inf(rhs):
            if rhs > 0:
                return  # always satisfied
            self.empty = True
            return
        rhs = mpq(rhs)
        if all(c == 0 for c in coeffs):
            ok = 0 < rhs if strict else 0 <= rhs
            if not ok:
                self.empty = True
            return
        self.rows.append(Row(coeffs, rhs, strict))

    def all_rows(self) -> List[Row]:
        """Rows plus the unit-box constraints."""
        out = list(self.rows)
        for i in range(self.dim):
            e = [mpq(0)] * self.dim
            e[i] = mpq(1)
            out.append(Row(tuple(e), mpq(1)))
            e[i] = mpq(-1)
            out.append(Row(tuple(e), mpq(0)))
        return out

    def copy(self) -> "HPolytope":
        return HPolytope(self.dim, list(self.rows), self.empty)

    def satisfied_by(self, point) -> bool:
        """Exact membership check (strictness honored); box included."""
        if self.empty:
            return False
        if any(not 0 <= x <= 1 for x in point):
            return False
        for r in self.rows:
            lhs = sum(c * x for c, x in zip(r.coeffs, point))
            if r.strict:
                if not lhs < r.rhs:
                    return False
            elif not lhs <= r.rhs:
                return False
        return True


# --- exact two-phase simplex ---

def _simplex(rows: List[Row], c: Sequence, dim: int):
    """Maximize c.x over {x : rows}; None if infeasible, INF if unbounded."""
    m = len(rows)
    n = dim
    neg = [i for i in range(m) if rows[i].rhs < 0]
    n_art = len(neg)
    total = n + m + n_art
    T = [[mpq(0)] * (total + 1) for _ in range(m)]
    basis = [0] * m
    art_of = {}
    k = 0
    for i, r in enumerate(rows):
        sign = -1 if r.rhs < 0 else 1
        for j in range(n):
            T[i][j] = sign * r.coeffs[j]
        T[i][n + i] = mpq(sign)
        T[i][total] = sign * r.rhs
        if r.rhs < 0:
            col = n + m + k
            art_of[i] = col
            T[i][col] = mpq(1)
            basis[i] = col
            k += 1
        else:
            basis[i] = n + i

    def pivot(row, col):
        piv = T[row][col]
        T[row] = [v / piv for v in T[row]]
        prow = T[row]
        for r2 in range(m):
            if r2 != row and T[r2][col] != 0:
                f = T[r2][col]
                T[r2] = [a - f * b for a, b in zip(T[r2], prow)]
        basis[row] = col

    def optimize(cost, ncols):
        """cost: full-width objective (maximize). Returns False if unbounded."""
        while True:
            # canonicalize the cost row against the basis
            red = list(cost)
            for i2, bcol in enumerate(basis):
                if red[bcol] != 0:
                    f = red[bcol]
                    red = [a - f * b for a, b in zip(red, T[i2])]
            enter = next((j for j in range(ncols) if red[j] > 0), -1)
            if enter < 0:
                return True
            best = None
            for i2 in range(m):
                if T[i2][enter] > 0:
                    ratio = T[i2][total] / T[i2][enter]
                    if (
                        best is None
                        or ratio < best[0]
                        or (ratio == best[0] and basis[i2] < basis[best[1]])
                    ):
                        best = (ratio, i2)
            if best is None:
                return False
            pivot(best[1], enter)

    if n_art:
        cost1 = [mpq(0)] * (total + 1)
        for col in art_of.values():
            cost1[col] = mpq(-1)
        optimize(cost1, total)
        for i in range(m):
            if basis[i] in art_of.values() and T[i][total] != 0:
                return None  # infeasible
        for i in range(m):
            if basis[i] in art_of.values():
                j = next((j for j in range(n + m) if T[i][j] != 0), None)
                if j is not None:
                    pivot(i, j)

    cost2 = [mpq(0)] * (total + 1)
    for j in range(n):
        cost2[j] = mpq(c[j])
    if not optimize(cost2, n + m):
        return INF
    x = [mpq(0)] * n
    for i, bcol in enumerate(basis):
        if bcol < n:
            x[bcol] = T[i][total]
    return sum(mpq(cj) * xj for cj, xj in zip(c, x))


def lp_bound(p: HPolytope, e: LinExpr):
    """Exact [min, max] of the linear part of e over p; None when empty.

    Callers add e's interval constant afterwards.
    """
    if p.empty:
        return None
    rows = p.all_rows()
    hi = _simplex(rows, e.coeffs, p.dim)
    if hi is None:
        return None
    lo = _simplex(rows, [-c for c in e.coeffs], p.dim)
    lo = NINF if is_inf(lo) else -lo
    return (lo, hi)


def feasible(p: HPolytope) -> bool:
    if p.empty:
        return False
    if p.dim == 0:
        return True
    zero = LinExpr(tuple([mpq(0)] * p.dim), Interval(0, 0))
    return lp_bound(p, zero) is not None


# --- exact volume ---

def _normalize(coeffs, rhs):
    lead = next((c for c in coeffs if c != 0), None)
    if lead is None:
        return None
    s = abs(lead)
    return tuple(c / s for c in coeffs), rhs / s


def _dedupe_and_screen(rows, boxes):
    """Normalize, drop rows implied by the current per-dim boxes, keep the
    tightest among parallel rows.  Returns None when certainly empty."""
    seen = {}
    for coeffs, rhs in rows:
        norm = _normalize(coeffs, rhs)
        if norm is None:
            if rhs < 0:
                return None
            continue
        key, val = norm
        if key in seen:
            seen[key] = min(seen[key], val)
        else:
            seen[key] = val
    out = []
    for coeffs, rhs in seen.items():
        lo_sum = mpq(0)
        hi_sum = mpq(0)
        definite = True
        for c, (lo, hi) in zip(coeffs, boxes):
            if c == 0:
                continue
            if is_inf(lo) or is_inf(hi):
                definite = False
                break
            if c > 0:
                lo_sum += c * lo
                hi_sum += c * hi
            else:
                lo_sum += c * hi
                hi_sum += c * lo
        if definite:
            if lo_sum > rhs:
                return None  # infeasible over the box
            if hi_sum <= rhs:
                continue  # redundant over the box
        out.append((coeffs, rhs))
    return out


def _fold_axis(rows, boxes):
    """Move single-variable rows into the boxes; returns general rows."""
    general = []
    for coeffs, rhs in rows:
        nz = [j for j, c in enumerate(coeffs) if c != 0]
        if not nz:
            if rhs < 0:
                return None
            continue
        if len(nz) == 1:
            j = nz[0]
            c = coeffs[j]
            b = rhs / c
            lo, hi = boxes[j]
            if c > 0:
                boxes[j] = (lo, min(hi, b))
            else:
                boxes[j] = (max(lo, b), hi)
            if boxes[j][0] > boxes[j][1]:
                return None
        else:
            general.append((coeffs, rhs))
    return general


def _vol(rows, boxes, work, work_cap):
    """Volume of {x in product(boxes): rows}; substitution recursion."""
    work[0] += 1
    if work[0] > work_cap:
        raise GeometryCapExceeded("volume work cap exceeded")

    rows = _fold_axis(rows, boxes)
    if rows is None:
        return mpq(0)
    rows = _dedupe_and_screen(rows, boxes)
    if rows is None:
        return mpq(0)
    d = len(boxes)

    # dimensions no general row touches factor out as box lengths
    touched = set()
    for coeffs, _ in rows:
        touched.update(j for j, c in enumerate(coeffs) if c != 0)
    factor = mpq(1)
    keep = sorted(touched)
    for j in range(d):
        if j not in touched:
            lo, hi = boxes[j]
            if is_inf(lo) or is_inf(hi):
                raise GeometryCapExceeded("unbounded free dimension")
            factor *= hi - lo
    if factor == 0:
        return mpq(0)
    if not keep:
        return factor
    if len(keep) < d:
        remap_rows = [
            (tuple(coeffs[j] for j in keep), rhs) for coeffs, rhs in rows
        ]
        sub_boxes = [boxes[j] for j in keep]
        return factor * _vol(remap_rows, sub_boxes, work, work_cap)

    # full-dimensional recursion: treat box bounds as rows too
    full = list(rows)
    for j in range(d):
        e = [mpq(0)] * d
        e[j] = mpq(1)
        full.append((tuple(e), boxes[j][1]))
        e[j] = mpq(-1)
        full.append((tuple(e), -boxes[j][0]))

    if d == 1:
        lo, hi = NINF, INF
        for (c,), rhs in full:
            b = rhs / c
            if c > 0:
                hi = b if is_inf(hi) or b < hi else hi
            else:
                lo = b if is_inf(lo) or b > lo else lo
        length = hi - lo
        return max(length, mpq(0))

    # current per-dimension enclosure, for facet pre-screening
    enc = [(boxes[j][0], boxes[j][1]) for j in range(d)]

    total = mpq(0)
    for i, (coeffs, rhs) in enumerate(full):
        # skip facets whose hyperplane cannot touch the box
        lo_s = mpq(0)
        hi_s = mpq(0)
        for c, (blo, bhi) in zip(coeffs, enc):
            if c > 0:
                lo_s += c * blo
                hi_s += c * bhi
            elif c < 0:
                lo_s += c * bhi
                hi_s += c * blo
        if lo_s > rhs or hi_s < rhs:
            continue
        j = next(k for k, ck in enumerate(coeffs) if ck != 0)
        cj = coeffs[j]
        sub_rows = []
        for k2, (c2, r2) in enumerate(full):
            if k2 == i:
                continue
            f = c2[j] / cj
            new_c = tuple(c2[t] - f * coeffs[t] for t in range(d) if t != j)
            new_r = r2 - f * rhs
            sub_rows.append((new_c, new_r))
        wide = [(NINF, INF)] * (d - 1)
        face = _vol(sub_rows, wide, work, work_cap)
        if face != 0:
            total += rhs * face / abs(cj)
    return total / d


def volume(p: HPolytope, dim_cap: int = 10, work_cap: int = 400_000, work=None):
    """Exact Lebesgue volume of the closed polytope (0 if lower-dimensional).

    Raises GeometryCapExceeded past the dimension or work caps; callers
    fall back to the interval backend.  `work` lets callers share one
    budget across several volume computations.
    """
    if p.empty:
        return mpq(0)
    boxes = [(mpq(0), mpq(1))] * p.dim
    rows = [(r.coeffs, r.rhs) for r in p.rows]
    # count genuinely coupled dimensions against the cap
    folded = _fold_axis(list(rows), list(boxes))
    if folded is not None:
        coupled = set()
        for coeffs, _ in folded:
            coupled.update(j for j, c in enumerate(coeffs) if c != 0)
        if len(coupled) > dim_cap:
            raise GeometryCapExceeded(
                f"coupled dimension {len(coupled)} exceeds cap {dim_cap}"
            )
    if work is None:
        work = [0]
    return _vol(rows, list(boxes), work, work_cap)
