"""Matrix factorizations and their homomorphisms.

A matrix factorization of a potential W is a pair of free graded modules
M0, M1 with maps d0: M0 -> M1, d1: M1 -> M0 such that d1 d0 = W id and
d0 d1 = W id.  Everything here is exact: matrices of sparse polynomials,
symbolically validated.

Conventions (fixed once and used consistently everywhere):

* the differential is a graded map of degree ``ddeg`` (4 for the sl3
  potential, whose degree is 8);
* the tensor product differential is d(m (x) n) = (-1)^|n| dm (x) n + m (x) dn;
* the tensor product of homomorphisms carries the sign
  (f (x) g)|v (x) w> = (-1)^{|g||v|} |fv (x) gw>;
* the parity shift <1> turns (d0, d1) into (-d1, -d0) and swaps the modules;
* the dual has differentials (-(d1)^T, (d0)^T) and negated potential.
"""

from __future__ import annotations

from fractions import Fraction

from ..ring import Polynomial, RingError

_ZERO = Polynomial.zero()
_ONE = Polynomial.one()


class MFError(ValueError):
    """Validation failure in a factorization or homomorphism."""


def _coerce_poly(value):
    if isinstance(value, Polynomial):
        return value
    if isinstance(value, (int, Fraction)):
        return Polynomial.const(value)
    raise MFError(f"expected polynomial entry, got {value!r}")


class PolyMatrix:
    """Sparse matrix with Polynomial entries."""

    __slots__ = ("nrows", "ncols", "entries")

    def __init__(self, nrows, ncols, entries=None):
        self.nrows = nrows
        self.ncols = ncols
        clean = {}
        if entries:
            for (i, j), p in entries.items():
                p = _coerce_poly(p)
                if p:
                    if not (0 <= i < nrows and 0 <= j < ncols):
                        raise MFError(f"entry ({i},{j}) outside {nrows}x{ncols}")
                    clean[(i, j)] = p
        self.entries = clean

    @staticmethod
    def zeros(nrows, ncols):
        return PolyMatrix(nrows, ncols)

    @staticmethod
    def identity(n, scale=1):
        p = _coerce_poly(scale)
        return PolyMatrix(n, n, {(i, i): p for i in range(n)})

    @staticmethod
    def from_rows(rows):
        nrows = len(rows)
        ncols = len(rows[0]) if rows else 0
        entries = {}
        for i, row in enumerate(rows):
            if len(row) != ncols:
                raise MFError("ragged rows")
            for j, p in enumerate(row):
                p = _coerce_poly(p)
                if p:
                    entries[(i, j)] = p
        return PolyMatrix(nrows, ncols, entries)

    def __getitem__(self, key):
        return self.entries.get(key, _ZERO)

    def is_zero(self):
        return not self.entries

    def __eq__(self, other):
        if not isinstance(other, PolyMatrix):
            return NotImplemented
        return (
            self.nrows == other.nrows
            and self.ncols == other.ncols
            and self.entries == other.entries
        )

    def __add__(self, other):
        if (self.nrows, self.ncols) != (other.nrows, other.ncols):
            raise MFError("shape mismatch in matrix sum")
        out = dict(self.entries)
        for k, p in other.entries.items():
            s = out.get(k, _ZERO) + p
            if s:
                out[k] = s
            else:
                out.pop(k, None)
        m = PolyMatrix(self.nrows, self.ncols)
        m.entries = out
        return m

    def __neg__(self):
        m = PolyMatrix(self.nrows, self.ncols)
        m.entries = {k: -p for k, p in self.entries.items()}
        return m

    def __sub__(self, other):
        return self + (-other)

    def scale(self, factor):
        factor = _coerce_poly(factor)
        if not factor:
            return PolyMatrix(self.nrows, self.ncols)
        m = PolyMatrix(self.nrows, self.ncols)
        m.entries = {k: p * factor for k, p in self.entries.items()}
        return m

    def __matmul__(self, other):
        if self.ncols != other.nrows:
            raise MFError("shape mismatch in matrix product")
        by_row = {}
        for (i, j), p in self.entries.items():
            by_row.setdefault(i, []).append((j, p))
        by_col = {}
        for (j, k), q in other.entries.items():
            by_col.setdefault(j, []).append((k, q))
        acc = {}
        for i, row in by_row.items():
            for j, p in row:
                col = by_col.get(j)
                if not col:
                    continue
                for k, q in col:
                    s = acc.get((i, k), _ZERO) + p * q
                    if s:
                        acc[(i, k)] = s
                    else:
                        acc.pop((i, k), None)
        m = PolyMatrix(self.nrows, other.ncols)
        m.entries = acc
        return m

    def transpose(self):
        m = PolyMatrix(self.ncols, self.nrows)
        m.entries = {(j, i): p for (i, j), p in self.entries.items()}
        return m

    def map_entries(self, fn):
        m = PolyMatrix(self.nrows, self.ncols)
        out = {}
        for k, p in self.entries.items():
            q = fn(p)
            if q:
                out[k] = q
        m.entries = out
        return m

    def substitute(self, bindings):
        return self.map_entries(lambda p: p.substitute(bindings))

    @staticmethod
    def kron(a: "PolyMatrix", b: "PolyMatrix") -> "PolyMatrix":
        m = PolyMatrix(a.nrows * b.nrows, a.ncols * b.ncols)
        ent = {}
        for (i, j), p in a.entries.items():
            for (k, l), q in b.entries.items():
                ent[(i * b.nrows + k, j * b.ncols + l)] = p * q
        m.entries = ent
        return m

    @staticmethod
    def block(blocks) -> "PolyMatrix":
        """Assemble from a 2D list of PolyMatrix blocks (None for zero)."""
        row_heights = []
        for brow in blocks:
            h = None
            for blk in brow:
                if blk is not None:
                    h = blk.nrows
            row_heights.append(h)
        col_widths = []
        ncols_b = len(blocks[0])
        for j in range(ncols_b):
            w = None
            for brow in blocks:
                if brow[j] is not None:
                    w = brow[j].ncols
            col_widths.append(w)
        if any(h is None for h in row_heights) or any(w is None for w in col_widths):
            raise MFError("cannot infer block shapes")
        row_off = [0]
        for h in row_heights:
            row_off.append(row_off[-1] + h)
        col_off = [0]
        for w in col_widths:
            col_off.append(col_off[-1] + w)
        m = PolyMatrix(row_off[-1], col_off[-1])
        ent = {}
        for bi, brow in enumerate(blocks):
            for bj, blk in enumerate(brow):
                if blk is None:
                    continue
                if blk.nrows != row_heights[bi] or blk.ncols != col_widths[bj]:
                    raise MFError("inconsistent block shapes")
                for (i, j), p in blk.entries.items():
                    ent[(row_off[bi] + i, col_off[bj] + j)] = p
        m.entries = ent
        return m

    def __repr__(self):
        return f"PolyMatrix({self.nrows}x{self.ncols}, {len(self.entries)} entries)"

    def pretty(self):
        lines = []
        for i in range(self.nrows):
            lines.append(
                "[" + ", ".join(str(self[(i, j)]) for j in range(self.ncols)) + "]"
            )
        return "\n".join(lines)


class MatrixFactorization:
    """Two free graded modules with differentials squaring to the potential."""

    __slots__ = ("potential", "basis0", "basis1", "d0", "d1", "variables", "ddeg")

    def __init__(self, potential, basis0, basis1, d0, d1, variables, ddeg=4):
        self.potential = _coerce_poly(potential)
        self.basis0 = tuple(basis0)
        self.basis1 = tuple(basis1)
        self.d0 = d0
        self.d1 = d1
        self.variables = frozenset(variables)
        self.ddeg = ddeg
        if d0.nrows != len(self.basis1) or d0.ncols != len(self.basis0):
            raise MFError("d0 shape does not match bases")
        if d1.nrows != len(self.basis0) or d1.ncols != len(self.basis1):
            raise MFError("d1 shape does not match bases")

    @property
    def rank0(self):
        return len(self.basis0)

    @property
    def rank1(self):
        return len(self.basis1)

    def validate(self):
        """Check d1 d0 = W id, d0 d1 = W id and entrywise homogeneity.

        Raises MFError naming the first failing entry; returns None when ok.
        """
        w = self.potential
        sq0 = self.d1 @ self.d0
        for i in range(self.rank0):
            for j in range(self.rank0):
                expect = w if i == j else _ZERO
                if sq0[(i, j)] != expect:
                    raise MFError(f"d1*d0 fails at ({i},{j}): {sq0[(i, j)]}")
        sq1 = self.d0 @ self.d1
        for i in range(self.rank1):
            for j in range(self.rank1):
                expect = w if i == j else _ZERO
                if sq1[(i, j)] != expect:
                    raise MFError(f"d0*d1 fails at ({i},{j}): {sq1[(i, j)]}")
        if w and w.qdegree() != 2 * self.ddeg:
            raise MFError(
                f"potential degree {w.qdegree()} != 2*ddeg = {2 * self.ddeg}"
            )
        self._check_degrees(self.d0, self.basis0, self.basis1, "d0")
        self._check_degrees(self.d1, self.basis1, self.basis0, "d1")
        return None

    def _check_degrees(self, d, src, tgt, name):
        for (i, j), p in d.entries.items():
            want = self.ddeg + src[j] - tgt[i]
            if not p.is_homogeneous(want):
                raise MFError(
                    f"{name}[{i},{j}] not homogeneous of degree {want}: {p}"
                )

    def is_valid(self):
        try:
            self.validate()
            return True
        except (MFError, RingError):
            return False

    # -- functors -----------------------------------------------------------

    def shift_q(self, k):
        return MatrixFactorization(
            self.potential,
            tuple(d + k for d in self.basis0),
            tuple(d + k for d in self.basis1),
            self.d0,
            self.d1,
            self.variables,
            self.ddeg,
        )

    def shift_parity(self):
        return MatrixFactorization(
            self.potential,
            self.basis1,
            self.basis0,
            -self.d1,
            -self.d0,
            self.variables,
            self.ddeg,
        )

    def dual(self):
        return MatrixFactorization(
            -self.potential,
            tuple(-d for d in self.basis0),
            tuple(-d for d in self.basis1),
            -self.d1.transpose(),
            self.d0.transpose(),
            self.variables,
            self.ddeg,
        )

    def tensor(self, other: "MatrixFactorization") -> "MatrixFactorization":
        """Tensor product with d(m (x) n) = (-1)^|n| dm (x) n + m (x) dn.

        Basis layout: (M (x) N)_0 = M0 N0 ++ M1 N1 and
        (M (x) N)_1 = M1 N0 ++ M0 N1, each block row-major in (M index, N index).
        """
        if self.ddeg != other.ddeg:
            raise MFError("tensor factors must share the differential degree")
        i_n0 = PolyMatrix.identity(other.rank0)
        i_n1 = PolyMatrix.identity(other.rank1)
        i_m0 = PolyMatrix.identity(self.rank0)
        i_m1 = PolyMatrix.identity(self.rank1)
        d0 = PolyMatrix.block(
            [
                [PolyMatrix.kron(self.d0, i_n0), PolyMatrix.kron(i_m1, other.d1)],
                [PolyMatrix.kron(i_m0, other.d0), -PolyMatrix.kron(self.d1, i_n1)],
            ]
        )
        d1 = PolyMatrix.block(
            [
                [PolyMatrix.kron(self.d1, i_n0), PolyMatrix.kron(i_m0, other.d1)],
                [PolyMatrix.kron(i_m1, other.d0), -PolyMatrix.kron(self.d0, i_n1)],
            ]
        )
        basis0 = tuple(p + q for p in self.basis0 for q in other.basis0) + tuple(
            p + q for p in self.basis1 for q in other.basis1
        )
        basis1 = tuple(p + q for p in self.basis1 for q in other.basis0) + tuple(
            p + q for p in self.basis0 for q in other.basis1
        )
        return MatrixFactorization(
            self.potential + other.potential,
            basis0,
            basis1,
            d0,
            d1,
            self.variables | other.variables,
            self.ddeg,
        )

    def substitute(self, bindings, drop_vars=()):
        """Apply a ring substitution to potential and differentials."""
        variables = set(self.variables) - set(bindings) - set(drop_vars)
        for value in bindings.values():
            variables |= _coerce_poly(value).variables()
        return MatrixFactorization(
            self.potential.substitute(bindings),
            self.basis0,
            self.basis1,
            self.d0.substitute(bindings),
            self.d1.substitute(bindings),
            variables,
            self.ddeg,
        )

    def __repr__(self):
        return (
            f"MatrixFactorization(rank {self.rank0}+{self.rank1}, "
            f"potential {self.potential})"
        )


def unit_factorization(variables=()):
    """The factorization of the empty web: R -> 0 -> R (rank 1 + 0)."""
    return MatrixFactorization(
        _ZERO,
        (0,),
        (),
        PolyMatrix.zeros(0, 1),
        PolyMatrix.zeros(1, 0),
        variables,
    )


class MFHom:
    """A homomorphism of matrix factorizations with (Z/2Z, q) bidegree.

    Parity 0: f0: M0 -> N0, f1: M1 -> N1, commuting with the differentials.
    Parity 1: f0: M0 -> N1, f1: M1 -> N0, anticommuting (equivalently a
    parity-0 homomorphism into the parity shift of the target).
    """

    __slots__ = ("source", "target", "f0", "f1", "parity", "qdeg")

    def __init__(self, source, target, f0, f1, parity=0, qdeg=0):
        self.source = source
        self.target = target
        self.f0 = f0
        self.f1 = f1
        self.parity = parity % 2
        self.qdeg = qdeg
        t0 = target.rank0 if self.parity == 0 else target.rank1
        t1 = target.rank1 if self.parity == 0 else target.rank0
        if f0.nrows != t0 or f0.ncols != source.rank0:
            raise MFError("f0 shape mismatch")
        if f1.nrows != t1 or f1.ncols != source.rank1:
            raise MFError("f1 shape mismatch")

    def validate(self, check_degrees=True):
        m, n = self.source, self.target
        if self.parity == 0:
            lhs = n.d0 @ self.f0
            rhs = self.f1 @ m.d0
            if lhs != rhs:
                raise MFError("square d0 does not commute")
            lhs = n.d1 @ self.f1
            rhs = self.f0 @ m.d1
            if lhs != rhs:
                raise MFError("square d1 does not commute")
            tgt0, tgt1 = n.basis0, n.basis1
        else:
            if (n.d1 @ self.f0 + self.f1 @ m.d0).entries:
                raise MFError("odd square d0 does not anticommute")
            if (n.d0 @ self.f1 + self.f0 @ m.d1).entries:
                raise MFError("odd square d1 does not anticommute")
            tgt0, tgt1 = n.basis1, n.basis0
        if check_degrees and self.qdeg is not None:
            for f, src, tgt, name in (
                (self.f0, m.basis0, tgt0, "f0"),
                (self.f1, m.basis1, tgt1, "f1"),
            ):
                for (i, j), p in f.entries.items():
                    want = self.qdeg + src[j] - tgt[i]
                    if not p.is_homogeneous(want):
                        raise MFError(
                            f"{name}[{i},{j}] not homogeneous of degree {want}: {p}"
                        )
        return None

    def is_valid(self, check_degrees=True):
        try:
            self.validate(check_degrees)
            return True
        except (MFError, RingError):
            return False

    def __matmul__(self, other: "MFHom") -> "MFHom":
        """Composition self o other (other applied first)."""
        if other.target is not self.source:
            # allow structural equality, not only identity
            if not _same_shape(other.target, self.source):
                raise MFError("composition source/target mismatch")
        p_other = other.parity
        g0 = self.f0 if p_other == 0 else self.f1
        g1 = self.f1 if p_other == 0 else self.f0
        qdeg = None
        if self.qdeg is not None and other.qdeg is not None:
            qdeg = self.qdeg + other.qdeg
        return MFHom(
            other.source,
            self.target,
            g0 @ other.f0,
            g1 @ other.f1,
            self.parity + other.parity,
            qdeg,
        )

    def __add__(self, other: "MFHom") -> "MFHom":
        if self.parity != other.parity:
            raise MFError("cannot add homs of different parity")
        qdeg = self.qdeg if self.qdeg == other.qdeg else None
        return MFHom(
            self.source,
            self.target,
            self.f0 + other.f0,
            self.f1 + other.f1,
            self.parity,
            qdeg,
        )

    def __sub__(self, other: "MFHom") -> "MFHom":
        return self + other.scale(-1)

    def scale(self, factor) -> "MFHom":
        factor = _coerce_poly(factor)
        qdeg = self.qdeg
        if qdeg is not None and factor:
            qdeg += factor.qdegree() or 0
        return MFHom(
            self.source,
            self.target,
            self.f0.scale(factor),
            self.f1.scale(factor),
            self.parity,
            qdeg,
        )

    def __eq__(self, other):
        if not isinstance(other, MFHom):
            return NotImplemented
        return (
            self.parity == other.parity
            and self.f0 == other.f0
            and self.f1 == other.f1
        )

    def substitute(self, bindings):
        return MFHom(
            self.source,
            self.target,
            self.f0.substitute(bindings),
            self.f1.substitute(bindings),
            self.parity,
            self.qdeg,
        )

    def __repr__(self):
        return f"MFHom(parity {self.parity}, qdeg {self.qdeg})"


def _same_shape(m: MatrixFactorization, n: MatrixFactorization) -> bool:
    return (
        m.basis0 == n.basis0
        and m.basis1 == n.basis1
        and m.d0 == n.d0
        and m.d1 == n.d1
    )


def identity_hom(m: MatrixFactorization) -> MFHom:
    return MFHom(
        m,
        m,
        PolyMatrix.identity(m.rank0),
        PolyMatrix.identity(m.rank1),
        0,
        0,
    )


def multiplication_hom(m: MatrixFactorization, p) -> MFHom:
    """Multiplication by a homogeneous polynomial as an endomorphism."""
    p = _coerce_poly(p)
    return MFHom(
        m,
        m,
        PolyMatrix.identity(m.rank0, p),
        PolyMatrix.identity(m.rank1, p),
        0,
        p.qdegree() or 0,
    )


def zero_hom(m, n, parity=0, qdeg=0) -> MFHom:
    t0 = n.rank0 if parity % 2 == 0 else n.rank1
    t1 = n.rank1 if parity % 2 == 0 else n.rank0
    return MFHom(
        m, n, PolyMatrix.zeros(t0, m.rank0), PolyMatrix.zeros(t1, m.rank1), parity, qdeg
    )


def tensor_hom(f: MFHom, g: MFHom) -> MFHom:
    """Tensor product with the sign (f (x) g)|v w> = (-1)^{|g||v|} |fv gw>."""
    msrc = f.source.tensor(g.source)
    mtgt = f.target.tensor(g.target)
    pf, pg = f.parity, g.parity
    parity = (pf + pg) % 2

    def src_layout(w):
        if w == 0:
            return [(0, 0), (1, 1)]
        return [(1, 0), (0, 1)]

    def ranks(mf_, which):
        return (mf_.rank0, mf_.rank1)[which]

    def offsets(m_f, n_f, layout):
        offs = []
        pos = 0
        for (u, v) in layout:
            offs.append(pos)
            pos += ranks(m_f, u) * ranks(n_f, v)
        return offs

    comp = {}
    for w in (0, 1):
        tgt_w = (w + parity) % 2
        s_layout = src_layout(w)
        t_layout = src_layout(tgt_w)
        s_offs = offsets(f.source, g.source, s_layout)
        t_offs = offsets(f.target, g.target, t_layout)
        tgt_rank = sum(
            ranks(f.target, u) * ranks(g.target, v) for (u, v) in t_layout
        )
        src_rank = sum(
            ranks(f.source, u) * ranks(g.source, v) for (u, v) in s_layout
        )
        mat = PolyMatrix(tgt_rank, src_rank)
        ent = {}
        for sb, (u, v) in enumerate(s_layout):
            tu, tv = (u + pf) % 2, (v + pg) % 2
            tb = t_layout.index((tu, tv))
            fu = f.f0 if u == 0 else f.f1
            gv = g.f0 if v == 0 else g.f1
            blockm = PolyMatrix.kron(fu, gv)
            if pg % 2 == 1 and u == 1:
                blockm = -blockm
            for (i, j), p in blockm.entries.items():
                ent[(t_offs[tb] + i, s_offs[sb] + j)] = p
        mat.entries = ent
        comp[w] = mat
    qdeg = None
    if f.qdeg is not None and g.qdeg is not None:
        qdeg = f.qdeg + g.qdeg
    return MFHom(msrc, mtgt, comp[0], comp[1], parity, qdeg)


def coboundary(h0: PolyMatrix, h1: PolyMatrix, m: MatrixFactorization,
               n: MatrixFactorization) -> MFHom:
    """D of an odd element h = (h0: M0 -> N1, h1: M1 -> N0).

    Returns the parity-0 homomorphism Dh = d_N h + h d_M; anything of this
    shape is null-homotopic by construction.
    """
    f0 = n.d1 @ h0 + h1 @ m.d0
    f1 = n.d0 @ h1 + h0 @ m.d1
    return MFHom(m, n, f0, f1, 0, None)
