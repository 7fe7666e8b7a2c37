"""Degreewise homology of potential-zero matrix factorizations.

A factorization with potential zero is a 2-periodic complex.  Every variable
has positive even q-degree, so each q-degree slice of the free modules is a
finite dimensional Q-vector space and homology can be computed slice by slice
with exact rational linear algebra.  The differential is a graded map of
degree 4 (half the degree of the sl3 potential), so the slice complex at
degree d is

    (M_p)_{d-4} --d--> (M_{1-p})_d --d--> (M_p)_{d+4}.

All ranks and kernels are computed over Q with fractions; no floating point.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

from ..ring import Polynomial, Variable
from .core import MFError, MFHom, MatrixFactorization, PolyMatrix

DD = 4  # degree of the differential


# -- monomial slices ----------------------------------------------------------


@lru_cache(maxsize=None)
def _monomials(vars_key, degree):
    """All monomials (as ring Monomial tuples) of the given q-degree."""
    if degree < 0:
        return ()
    if degree == 0:
        return ((),)
    if not vars_key:
        return ()
    head = vars_key[0]
    rest = vars_key[1:]
    out = []
    w = head.qdegree
    e = 0
    while e * w <= degree:
        for tail in _monomials(rest, degree - e * w):
            out.append(((head, e),) + tail if e else tail)
        e += 1
    return tuple(out)


def ring_monomials(variables, degree):
    key = tuple(sorted(variables, key=lambda v: v.sort_key()))
    return _monomials(key, degree)


def slice_basis(m: MatrixFactorization, sector: int, degree: int):
    """Basis [(generator index, monomial)] of the degree slice of M_sector."""
    basis = m.basis0 if sector == 0 else m.basis1
    out = []
    for g, gdeg in enumerate(basis):
        for mono in ring_monomials(m.variables, degree - gdeg):
            out.append((g, mono))
    return out


def _mono_mul(m1, m2):
    if not m1:
        return m2
    if not m2:
        return m1
    acc = dict(m1)
    for v, e in m2:
        acc[v] = acc.get(v, 0) + e
    return tuple(sorted(acc.items(), key=lambda p: p[0].sort_key()))


def _apply_matrix_slice(mat: PolyMatrix, src_basis, tgt_index):
    """Columns (dict row -> Fraction) of the slice of a polynomial matrix."""
    by_col = {}
    for (i, j), p in mat.entries.items():
        by_col.setdefault(j, []).append((i, p))
    cols = []
    for (g, mono) in src_basis:
        col = {}
        for i, p in by_col.get(g, ()):
            for term, coeff in p.terms.items():
                key = (i, _mono_mul(mono, term))
                pos = tgt_index.get(key)
                if pos is None:
                    raise MFError("slice bookkeeping: image outside target slice")
                col[pos] = col.get(pos, Fraction(0)) + coeff
        cols.append({k: v for k, v in col.items() if v})
    return cols


# -- exact linear algebra ------------------------------------------------------


def _eliminate(col, pivots):
    """Reduce a sparse column against unit pivots; returns the residual."""
    col = dict(col)
    while col:
        r = min(col)
        if r not in pivots:
            return col, r
        c = col.pop(r)
        for rr, vv in pivots[r].items():
            if rr == r:
                continue
            s = col.get(rr, Fraction(0)) - c * vv
            if s:
                col[rr] = s
            else:
                col.pop(rr, None)
    return col, None


class _Eliminator:
    """Incremental sparse Gaussian elimination over Q."""

    def __init__(self):
        self.pivots = {}

    def add(self, col):
        """Insert a column; returns True when it increased the rank."""
        res, r = _eliminate(col, self.pivots)
        if r is None:
            return False
        c = res[r]
        self.pivots[r] = {rr: vv / c for rr, vv in res.items()}
        return True

    def contains(self, col):
        res, r = _eliminate(col, self.pivots)
        return r is None

    @property
    def rank(self):
        return len(self.pivots)


def rank_of(cols):
    e = _Eliminator()
    for col in cols:
        e.add(col)
    return e.rank


def kernel_basis(cols):
    """Kernel of the map sending basis vector j to cols[j]."""
    pivots = {}
    combos = {}
    kernel = []
    for j, col in enumerate(cols):
        col = dict(col)
        combo = {j: Fraction(1)}
        while col:
            r = min(col)
            if r not in pivots:
                break
            c = col.pop(r)
            pcol, pcombo = pivots[r], combos[r]
            for rr, vv in pcol.items():
                if rr == r:
                    continue
                s = col.get(rr, Fraction(0)) - c * vv
                if s:
                    col[rr] = s
                else:
                    col.pop(rr, None)
            for jj, vv in pcombo.items():
                s = combo.get(jj, Fraction(0)) - c * vv
                if s:
                    combo[jj] = s
                else:
                    combo.pop(jj, None)
        if col:
            r = min(col)
            c = col[r]
            pivots[r] = {rr: vv / c for rr, vv in col.items()}
            combos[r] = {jj: vv / c for jj, vv in combo.items()}
        else:
            kernel.append(combo)
    return kernel


# -- bigraded dimension tables -------------------------------------------------


@dataclass
class BigradedDims:
    """Dimensions per (parity, q-degree), valid up to the cutoff q_max."""

    table: dict = field(default_factory=dict)
    q_max: int = 0

    def set(self, parity, q, dim):
        if dim:
            self.table[(parity % 2, q)] = dim

    def get(self, parity, q):
        return self.table.get((parity % 2, q), 0)

    def total(self):
        return sum(self.table.values())

    def shift_q(self, k):
        return BigradedDims(
            {(p, q + k): v for (p, q), v in self.table.items()}, self.q_max + k
        )

    def shift_parity(self):
        return BigradedDims(
            {(1 - p, q): v for (p, q), v in self.table.items()}, self.q_max
        )

    def __add__(self, other):
        out = dict(self.table)
        for k, v in other.table.items():
            out[k] = out.get(k, 0) + v
        return BigradedDims(out, min(self.q_max, other.q_max))

    def restrict(self, q_max):
        return BigradedDims(
            {(p, q): v for (p, q), v in self.table.items() if q <= q_max}, q_max
        )

    def __eq__(self, other):
        if not isinstance(other, BigradedDims):
            return NotImplemented
        qm = min(self.q_max, other.q_max)
        return self.restrict(qm).table == other.restrict(qm).table

    def concentrated_parity(self):
        """The unique parity carrying homology, or None if mixed or empty."""
        parities = {p for (p, _q) in self.table}
        if len(parities) == 1:
            return parities.pop()
        return None

    def poincare(self) -> str:
        """Render as a polynomial in q and the parity marker s."""
        if not self.table:
            return "0"
        parts = []
        for (p, q), dim in sorted(self.table.items(), key=lambda kv: (kv[0][1], kv[0][0])):
            factors = []
            if dim != 1 or (p == 0 and q == 0):
                factors.append(str(dim))
            if p:
                factors.append("s")
            if q:
                factors.append(f"q^{q}" if q != 1 else "q")
            parts.append("*".join(factors) if factors else "1")
        return " + ".join(parts)

    def __repr__(self):
        return f"BigradedDims({self.poincare()}, q_max={self.q_max})"


# -- homology ------------------------------------------------------------------


def _differential(m: MatrixFactorization, sector: int) -> PolyMatrix:
    return m.d0 if sector == 0 else m.d1


def _slice_index(m, sector, degree):
    basis = slice_basis(m, sector, degree)
    return basis, {bm: i for i, bm in enumerate(basis)}


def _rank_cache_key(m, sector, degree):
    return (id(m), sector, degree)


class _MFSlices:
    """Cached slice data for one factorization."""

    def __init__(self, m: MatrixFactorization):
        if m.potential:
            raise MFError("homology needs potential zero")
        self.m = m
        self._rank = {}
        self._bases = {}

    def basis(self, sector, degree):
        key = (sector, degree)
        if key not in self._bases:
            b = slice_basis(self.m, sector, degree)
            self._bases[key] = (b, {bm: i for i, bm in enumerate(b)})
        return self._bases[key]

    def d_cols(self, sector, degree):
        """Slice of the differential out of (sector, degree)."""
        src, _ = self.basis(sector, degree)
        _, tgt_index = self.basis(1 - sector, degree + DD)
        return _apply_matrix_slice(_differential(self.m, sector), src, tgt_index)

    def d_rank(self, sector, degree):
        key = (sector, degree)
        if key not in self._rank:
            self._rank[key] = rank_of(self.d_cols(sector, degree))
        return self._rank[key]

    def min_degree(self):
        degs = self.m.basis0 + self.m.basis1
        return min(degs) if degs else 0


_slices_cache = {}


def _slices(m: MatrixFactorization) -> _MFSlices:
    s = _slices_cache.get(id(m))
    if s is None or s.m is not m:
        s = _MFSlices(m)
        _slices_cache[id(m)] = s
    return s


def homology_dims(m: MatrixFactorization, q_max: int) -> BigradedDims:
    """Homology dimensions over Q per (parity, q-degree) up to the cutoff."""
    sl = _slices(m)
    out = BigradedDims({}, q_max)
    q_min = sl.min_degree()
    for q in range(q_min, q_max + 1):
        for sector in (0, 1):
            n = len(sl.basis(sector, q)[0])
            if not n:
                continue
            dim = n - sl.d_rank(sector, q) - sl.d_rank(1 - sector, q - DD)
            if dim < 0:
                raise MFError("negative homology dimension: rank bookkeeping bug")
            out.set(sector, q, dim)
    return out


def _hom_slice_cols(f: MFHom, sector, degree):
    """Slice columns of the hom component out of (source sector, degree)."""
    src_m, tgt_m = f.source, f.target
    sl_s, sl_t = _slices(src_m), _slices(tgt_m)
    src, _ = sl_s.basis(sector, degree)
    tgt_sector = (sector + f.parity) % 2
    if f.qdeg is None:
        raise MFError("induced maps need a homogeneous homomorphism")
    _, tgt_index = sl_t.basis(tgt_sector, degree + f.qdeg)
    comp = f.f0 if sector == 0 else f.f1
    return _apply_matrix_slice(comp, src, tgt_index)


def _cycles(sl: _MFSlices, sector, degree):
    return kernel_basis(sl.d_cols(sector, degree))


def _boundary_eliminator(sl: _MFSlices, sector, degree):
    """Eliminator loaded with the boundaries inside (sector, degree)."""
    e = _Eliminator()
    for col in sl.d_cols(1 - sector, degree - DD):
        e.add(col)
    return e


def _combine(cols, combo):
    out = {}
    for j, c in combo.items():
        for r, v in cols[j].items():
            s = out.get(r, Fraction(0)) + c * v
            if s:
                out[r] = s
            else:
                out.pop(r, None)
    return out


def induced_map_dims(f: MFHom, q_max: int) -> BigradedDims:
    """Rank of the induced map on homology per (source parity, q-degree)."""
    sl_s, sl_t = _slices(f.source), _slices(f.target)
    out = BigradedDims({}, q_max)
    q_min = sl_s.min_degree()
    for q in range(q_min, q_max + 1):
        for sector in (0, 1):
            n = len(sl_s.basis(sector, q)[0])
            if not n:
                continue
            cycles = _cycles(sl_s, sector, q)
            if not cycles:
                continue
            fcols = _hom_slice_cols(f, sector, q)
            tgt_sector = (sector + f.parity) % 2
            elim = _boundary_eliminator(sl_t, tgt_sector, q + f.qdeg)
            rank = 0
            for combo in cycles:
                if elim.add(_combine(fcols, combo)):
                    rank += 1
            if rank:
                out.set(sector, q, rank)
    return out


def induces_zero(f: MFHom, q_max: int) -> bool:
    """True when f sends every homology class to zero, up to the cutoff."""
    return induced_map_dims(f, q_max).total() == 0


def induces_identity(f: MFHom, q_max: int) -> bool:
    """True when an endomorphism induces the identity on homology."""
    if f.parity % 2 != 0 or f.qdeg not in (0, None):
        return False
    sl = _slices(f.source)
    q_min = sl.min_degree()
    for q in range(q_min, q_max + 1):
        for sector in (0, 1):
            n = len(sl.basis(sector, q)[0])
            if not n:
                continue
            cycles = _cycles(sl, sector, q)
            if not cycles:
                continue
            fcols = _hom_slice_cols(f, sector, q)
            elim = _boundary_eliminator(sl, sector, q)
            for combo in cycles:
                image = _combine(fcols, combo)
                diff = dict(image)
                for j, c in combo.items():
                    s = diff.get(j, Fraction(0)) - c
                    if s:
                        diff[j] = s
                    else:
                        diff.pop(j, None)
                if not elim.contains(diff):
                    return False
    return True
