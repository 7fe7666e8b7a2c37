"""Koszul matrices: presentations of tensor products of rank-1 factorizations.

A Koszul matrix with rows (a_1, b_1), ..., (a_k, b_k) presents the tensor
product of the factorizations R -> a_i -> R{(deg b_i - deg a_i)/2} -> b_i -> R,
with potential sum a_i b_i.  Rows carry declared degrees so that zero entries
(which arise after substitutions) keep their grading.

The module basis is indexed by bit strings: bit t = 1 means the t-th row sits
in its odd generator.  Strings are ordered inside each parity sector by the
integer sum(beta_t * 2^t).  The differential moves bit t with the Koszul sign
(-1)^(number of set bits after t), matching the published matrices for the
two-row factorizations used downstream.

Row operations, row scaling, the parity/term switch and variable exclusion all
return the transformed matrix together with explicit witnesses, so that
endomorphisms can be transported onto reduced models and induced maps on
homology stay computable after reduction.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from ..ring import Polynomial, RingError
from .core import MFError, MFHom, MatrixFactorization, PolyMatrix

_ZERO = Polynomial.zero()

POTENTIAL_DEGREE = 8  # the sl3 potential p has q-degree 8 throughout
DIFFERENTIAL_DEGREE = POTENTIAL_DEGREE // 2


def _coerce(p):
    if isinstance(p, Polynomial):
        return p
    if isinstance(p, (int, Fraction)):
        return Polynomial.const(p)
    raise MFError(f"not a polynomial: {p!r}")


@dataclass(frozen=True)
class KoszulRow:
    a: Polynomial
    b: Polynomial
    dega: int
    degb: int

    def __post_init__(self):
        if self.dega + self.degb != POTENTIAL_DEGREE:
            raise MFError(
                f"row degrees {self.dega}+{self.degb} != {POTENTIAL_DEGREE}"
            )
        if self.a and not self.a.is_homogeneous(self.dega):
            raise MFError(f"left entry not homogeneous of degree {self.dega}: {self.a}")
        if self.b and not self.b.is_homogeneous(self.degb):
            raise MFError(f"right entry not homogeneous of degree {self.degb}: {self.b}")

    @property
    def shift(self):
        # q-shift of the odd generator of this row
        return (self.degb - self.dega) // 2

    def substituted(self, bindings):
        return KoszulRow(
            self.a.substitute(bindings),
            self.b.substitute(bindings),
            self.dega,
            self.degb,
        )


def _make_row(a, b, dega=None, degb=None) -> KoszulRow:
    a, b = _coerce(a), _coerce(b)
    if dega is None:
        if a:
            dega = a.qdegree()
        elif degb is not None:
            dega = POTENTIAL_DEGREE - degb
        elif b:
            dega = POTENTIAL_DEGREE - b.qdegree()
        else:
            raise MFError("cannot infer degrees of a zero row")
    if degb is None:
        degb = POTENTIAL_DEGREE - dega
    return KoszulRow(a, b, dega, degb)


class KoszulMatrix:
    """Rows (a_i, b_i) with an overall q-shift and parity shift.

    ``qshift`` and ``parity`` may be half-integers while unpaired 3-vertex
    factorizations are around; they must be integers by the time the
    factorization is materialized with :meth:`mf`.
    """

    def __init__(self, rows, qshift=0, parity=0, variables=None):
        self.rows = tuple(rows)
        self.qshift = Fraction(qshift)
        self.parity = Fraction(parity) % 2
        if variables is None:
            variables = set()
            for r in self.rows:
                variables |= r.a.variables() | r.b.variables()
        self.variables = frozenset(variables)
        self._mf = None

    @staticmethod
    def from_pairs(pairs, qshift=0, parity=0, variables=None, degrees=None):
        rows = []
        for idx, (a, b) in enumerate(pairs):
            dega = degb = None
            if degrees is not None:
                dega, degb = degrees[idx]
            rows.append(_make_row(a, b, dega, degb))
        return KoszulMatrix(rows, qshift, parity, variables)

    @property
    def nrows(self):
        return len(self.rows)

    def potential(self) -> Polynomial:
        w = _ZERO
        for r in self.rows:
            w = w + r.a * r.b
        return w

    def with_rows(self, rows, variables=None):
        return KoszulMatrix(
            rows, self.qshift, self.parity, variables or self.variables
        )

    def shift_q(self, k):
        return KoszulMatrix(self.rows, self.qshift + k, self.parity, self.variables)

    def shift_parity(self, amount=1):
        return KoszulMatrix(
            self.rows, self.qshift, self.parity + Fraction(amount), self.variables
        )

    def substituted(self, bindings, drop_vars=()):
        variables = set(self.variables) - set(bindings) - set(drop_vars)
        for v in bindings.values():
            variables |= _coerce(v).variables()
        return KoszulMatrix(
            [r.substituted(bindings) for r in self.rows],
            self.qshift,
            self.parity,
            variables,
        )

    def dual(self) -> "KoszulMatrix":
        """{a, b}* congruent to {a, -b}<k>{s_k}, s_k = sum deg a_i - 4k."""
        k = self.nrows
        s_k = sum(r.dega for r in self.rows) - DIFFERENTIAL_DEGREE * k
        rows = [KoszulRow(r.a, -r.b, r.dega, r.degb) for r in self.rows]
        return KoszulMatrix(
            rows, -self.qshift + s_k, self.parity + k, self.variables
        )

    # -- basis bookkeeping ---------------------------------------------------

    def strings(self, sector: int):
        """Bit strings of the given parity sector, in basis order."""
        pint = int(self.parity)
        out = [
            beta
            for beta in self._all_strings()
            if (sum(beta) + pint) % 2 == sector
        ]
        return out

    def _all_strings(self):
        k = self.nrows
        strs = [
            tuple((n >> t) & 1 for t in range(k)) for n in range(1 << k)
        ]
        strs.sort(key=lambda b: sum(bit << t for t, bit in enumerate(b)))
        return strs

    def string_index(self):
        """Map bit string -> (sector, position)."""
        idx = {}
        for sector in (0, 1):
            for pos, beta in enumerate(self.strings(sector)):
                idx[beta] = (sector, pos)
        return idx

    def string_degree(self, beta):
        d = self.qshift
        for t, bit in enumerate(beta):
            if bit:
                d += self.rows[t].shift
        return d

    def mf(self) -> MatrixFactorization:
        """Materialize the factorization (requires integral shifts)."""
        if self._mf is not None:
            return self._mf
        if self.qshift.denominator != 1 or self.parity.denominator != 1:
            raise MFError(
                f"fractional shifts {{{self.qshift}}}<{self.parity}> cannot be "
                "materialized; pair the vertices first"
            )
        pint = int(self.parity) % 2
        sign_all = -1 if pint else 1
        sector_strings = {0: self.strings(0), 1: self.strings(1)}
        index = {}
        for sector in (0, 1):
            for pos, beta in enumerate(sector_strings[sector]):
                index[beta] = (sector, pos)
        basis = {
            sector: tuple(int(self.string_degree(b)) for b in sector_strings[sector])
            for sector in (0, 1)
        }
        d = {0: {}, 1: {}}
        for sector in (0, 1):
            for pos, beta in enumerate(sector_strings[sector]):
                for t, row in enumerate(self.rows):
                    entry = row.a if beta[t] == 0 else row.b
                    if not entry:
                        continue
                    sign = -1 if sum(beta[t + 1:]) % 2 else 1
                    target = beta[:t] + (1 - beta[t],) + beta[t + 1:]
                    tsec, tpos = index[target]
                    coeff = entry * (sign * sign_all)
                    key = (tpos, pos)
                    prev = d[sector].get(key)
                    d[sector][key] = coeff if prev is None else prev + coeff
        n0, n1 = len(sector_strings[0]), len(sector_strings[1])
        d0 = PolyMatrix(n1, n0, d[0])
        d1 = PolyMatrix(n0, n1, d[1])
        self._mf = MatrixFactorization(
            self.potential(), basis[0], basis[1], d0, d1, self.variables
        )
        return self._mf

    def __repr__(self):
        rows = "; ".join(f"({r.a}, {r.b})" for r in self.rows)
        return f"KoszulMatrix[{rows}]{{{self.qshift}}}<{self.parity}>"


# -- local block homomorphisms ------------------------------------------------


def local_hom(src: KoszulMatrix, tgt: KoszulMatrix, slots, block, parity, qdeg,
              odd_block=None):
    """Build the homomorphism acting by ``block`` on the given row slots.

    ``block`` maps a local bit pattern to a list of (output pattern, coeff).
    Odd blocks (those flipping the local bit-sum parity, e.g. when the target
    matrix absorbs a parity shift into its bookkeeping) must act on a single
    slot or two adjacent slots; they pick up the Koszul sign
    (-1)^(number of set bits after the slots), matching the sign convention
    of the differential (this is the unique choice that makes the extensions
    chain maps here).
    """
    slots = tuple(slots)
    if odd_block is None:
        odd_block = parity % 2 == 1
    if odd_block:
        if len(slots) > 1 and slots != (slots[0], slots[0] + 1):
            raise MFError("odd local blocks need a single or adjacent slots")
    src_index = src.string_index()
    tgt_index = tgt.string_index()
    shapes = {
        0: (len(tgt.strings((0 + parity) % 2)), len(src.strings(0))),
        1: (len(tgt.strings((1 + parity) % 2)), len(src.strings(1))),
    }
    mats = {0: {}, 1: {}}
    for beta, (sector, pos) in src_index.items():
        local = tuple(beta[s] for s in slots)
        images = block.get(local)
        if not images:
            continue
        sign = 1
        if odd_block and sum(beta[max(slots) + 1:]) % 2:
            sign = -1
        for out_bits, coeff in images:
            coeff = _coerce(coeff)
            if not coeff:
                continue
            lst = list(beta)
            for s, bit in zip(slots, out_bits):
                lst[s] = bit
            tsec, tpos = tgt_index[tuple(lst)]
            if tsec != (sector + parity) % 2:
                raise MFError("block changes parity inconsistently")
            key = (tpos, pos)
            prev = mats[sector].get(key, _ZERO)
            val = prev + coeff * sign
            if val:
                mats[sector][key] = val
            else:
                mats[sector].pop(key, None)
    f0 = PolyMatrix(shapes[0][0], shapes[0][1], mats[0])
    f1 = PolyMatrix(shapes[1][0], shapes[1][1], mats[1])
    return MFHom(src.mf(), tgt.mf(), f0, f1, parity, qdeg)


def swap_rows(k: KoszulMatrix, i: int):
    """Exchange rows i and i+1; witness |.. b b' ..> -> (-1)^(b b') |.. b' b ..>."""
    rows = list(k.rows)
    rows[i], rows[i + 1] = rows[i + 1], rows[i]
    k2 = k.with_rows(rows)
    block = {
        (0, 0): [((0, 0), 1)],
        (1, 1): [((1, 1), -1)],
        (1, 0): [((0, 1), 1)],
        (0, 1): [((1, 0), 1)],
    }
    return k2, local_hom(k, k2, (i, i + 1), block, 0, 0)


def _adjacent_op(k: KoszulMatrix, i: int, lam: Polynomial, kind: str):
    """Row operation on adjacent rows (i, i+1) playing the roles (i, j)."""
    ri, rj = k.rows[i], k.rows[i + 1]
    lam = _coerce(lam)
    rows = list(k.rows)
    if kind == "type1":
        rows[i] = KoszulRow(ri.a - lam * rj.a, ri.b, ri.dega, ri.degb)
        rows[i + 1] = KoszulRow(rj.a, rj.b + lam * ri.b, rj.dega, rj.degb)
        block = {
            (0, 0): [((0, 0), 1)],
            (1, 1): [((1, 1), 1)],
            (1, 0): [((1, 0), 1)],
            (0, 1): [((1, 0), -lam), ((0, 1), 1)],
        }
    elif kind == "type2":
        rows[i] = KoszulRow(ri.a + lam * rj.b, ri.b, ri.dega, ri.degb)
        rows[i + 1] = KoszulRow(rj.a - lam * ri.b, rj.b, rj.dega, rj.degb)
        block = {
            (0, 0): [((0, 0), 1), ((1, 1), -lam)],
            (1, 1): [((1, 1), 1)],
            (1, 0): [((1, 0), 1)],
            (0, 1): [((0, 1), 1)],
        }
    else:  # pragma: no cover
        raise MFError(kind)
    k2 = k.with_rows(rows, k.variables | lam.variables())
    return k2, local_hom(k, k2, (i, i + 1), block, 0, 0)


def _move_adjacent(k: KoszulMatrix, i: int, j: int):
    """Swap rows until the original rows (i, j) sit at (pos, pos+1).

    Returns (k', pos, forward witnesses, inverse witnesses).
    """
    fwd, back = [], []
    cur = k
    # bring j just below i when j > i, or i just above j otherwise
    if j > i:
        for t in range(j - 1, i, -1):
            cur2, u = swap_rows(cur, t)
            fwd.append(u)
            back.append(swap_rows(cur2, t)[1])
            cur = cur2
        return cur, i, fwd, back
    # j < i: move row j downwards to position i-1
    for t in range(j, i - 1):
        cur2, u = swap_rows(cur, t)
        fwd.append(u)
        back.append(swap_rows(cur2, t)[1])
        cur = cur2
    return cur, i - 1, fwd, back


def _compose_chain(homs):
    out = None
    for h in homs:
        out = h if out is None else h @ out
    return out


def _general_op(k: KoszulMatrix, i: int, j: int, lam, kind: str):
    if i == j:
        raise MFError("row operation needs two distinct rows")
    if j == i + 1:
        return _adjacent_op(k, i, lam, kind)
    if j > i:
        cur, pos, fwd, back = _move_adjacent(k, i, j)
        k2_adj, op = _adjacent_op(cur, pos, lam, kind)
        # move the transformed row back to its original position
        undo_f, undo_b = [], []
        cur2 = k2_adj
        for t in range(pos + 1, j):
            cur3, u = swap_rows(cur2, t)
            undo_f.append(u)
            cur2 = cur3
        witness = _compose_chain(fwd + [op] + undo_f)
        return cur2, witness
    # i > j: roles (first=i, second=j) with row j above row i; bring row j
    # to position i-1, apply with swapped slot roles, then restore.
    cur, pos, fwd, back = _move_adjacent(k, i, j)
    # now row j sits at pos, row i at pos+1; adjacent op wants (i-role, j-role)
    ri, rj = cur.rows[pos + 1], cur.rows[pos]
    lam = _coerce(lam)
    rows = list(cur.rows)
    if kind == "type1":
        rows[pos + 1] = KoszulRow(ri.a - lam * rj.a, ri.b, ri.dega, ri.degb)
        rows[pos] = KoszulRow(rj.a, rj.b + lam * ri.b, rj.dega, rj.degb)
        block = {
            (0, 0): [((0, 0), 1)],
            (1, 1): [((1, 1), 1)],
            (0, 1): [((0, 1), 1)],
            (1, 0): [((0, 1), -lam), ((1, 0), 1)],
        }
    elif kind == "type2":
        rows[pos + 1] = KoszulRow(ri.a + lam * rj.b, ri.b, ri.dega, ri.degb)
        rows[pos] = KoszulRow(rj.a - lam * ri.b, rj.b, rj.dega, rj.degb)
        block = {
            (0, 0): [((0, 0), 1), ((1, 1), -lam)],
            (1, 1): [((1, 1), 1)],
            (1, 0): [((1, 0), 1)],
            (0, 1): [((0, 1), 1)],
        }
    else:  # pragma: no cover
        raise MFError(kind)
    k2_adj = cur.with_rows(rows, cur.variables | lam.variables())
    op = local_hom(cur, k2_adj, (pos, pos + 1), block, 0, 0)
    undo_f = []
    cur2 = k2_adj
    for t in range(pos - 1, j - 1, -1) if pos > j else []:
        cur3, u = swap_rows(cur2, t)
        undo_f.append(u)
        cur2 = cur3
    for t in range(pos, j, -1):
        cur3, u = swap_rows(cur2, t - 1)
        undo_f.append(u)
        cur2 = cur3
    witness = _compose_chain(fwd + [op] + undo_f)
    return cur2, witness


def row_op_type1(k: KoszulMatrix, i: int, j: int, lam):
    """[i,j]_lam: (a_i - lam a_j, b_i; a_j, b_j + lam b_i) with witness."""
    return _general_op(k, i, j, lam, "type1")


def row_op_type2(k: KoszulMatrix, i: int, j: int, lam):
    """[i,j]'_lam: (a_i + lam b_j, b_i; a_j - lam b_i, b_j) with witness."""
    return _general_op(k, i, j, lam, "type2")


def scale_row(k: KoszulMatrix, i: int, lam):
    """[i]_lam: (lam a_i, lam^{-1} b_i) for an invertible rational lam."""
    lam = Fraction(lam)
    if not lam:
        raise MFError("row scaling needs a nonzero rational")
    r = k.rows[i]
    rows = list(k.rows)
    rows[i] = KoszulRow(r.a * lam, r.b * (Fraction(1) / lam), r.dega, r.degb)
    k2 = k.with_rows(rows)
    block = {(0,): [((0,), 1)], (1,): [((1,), lam)]}
    return k2, local_hom(k, k2, (i,), block, 0, 0)


def switch_row(k: KoszulMatrix, i: int):
    """Trade a parity shift for switching the terms of row i with signs."""
    r = k.rows[i]
    rows = list(k.rows)
    rows[i] = KoszulRow(-r.b, -r.a, r.degb, r.dega)
    k2 = KoszulMatrix(rows, k.qshift + r.shift, k.parity + 1, k.variables)
    block = {(0,): [((1,), 1)], (1,): [((0,), 1)]}
    # sign (-1)^(bits after slot i), like the differential convention
    sign_block = {}
    sign_block.update(block)
    hom = _odd_single_slot_hom(k, k2, i, sign_block)
    return k2, hom


def _odd_single_slot_hom(src, tgt, slot, block):
    src_index = src.string_index()
    tgt_index = tgt.string_index()
    mats = {0: {}, 1: {}}
    for beta, (sector, pos) in src_index.items():
        local = (beta[slot],)
        for out_bits, coeff in block.get(local, ()):
            sign = -1 if sum(beta[slot + 1:]) % 2 else 1
            lst = list(beta)
            lst[slot] = out_bits[0]
            tsec, tpos = tgt_index[tuple(lst)]
            if tsec != sector:
                raise MFError("switch witness must preserve materialized parity")
            mats[sector][(tpos, pos)] = _coerce(coeff) * sign
    n = {s: len(src.strings(s)) for s in (0, 1)}
    m = {s: len(tgt.strings(s)) for s in (0, 1)}
    f0 = PolyMatrix(m[0], n[0], mats[0])
    f1 = PolyMatrix(m[1], n[1], mats[1])
    return MFHom(src.mf(), tgt.mf(), f0, f1, 0, 0)


# -- variable exclusion -------------------------------------------------------


class Exclusion:
    """One application of the excluding-variables move, with witnesses.

    The excluded row must be the last one and have right entry exactly
    x - s with s free of x; the potential may not involve x.  ``psi`` is an
    explicit section (a chain map splitting the projection), so homomorphisms
    can be transported onto the reduced factorization.
    """

    def __init__(self, src: KoszulMatrix, x, s, witness=True):
        r = src.rows[-1]
        expect = Polynomial.var(x) - s
        if r.b != expect:
            raise MFError("last row is not normalized to (a, x - s)")
        w = src.potential()
        if x in w.variables():
            raise MFError("potential involves the variable to exclude")
        self.src = src
        self.x = x
        self.s = s
        bindings = {x: s}
        rows = [row.substituted(bindings) for row in src.rows[:-1]]
        variables = (set(src.variables) - {x}) | s.variables()
        self.reduced = KoszulMatrix(rows, src.qshift, src.parity, variables)
        self._row_maps = None
        self._psi = None
        if witness:
            self._build_psi()

    def row_selection(self):
        """(sector -> list of (new_pos, old_pos)) for strings with last bit 0."""
        if self._row_maps is not None:
            return self._row_maps
        src_index = self.src.string_index()
        red_index = self.reduced.string_index()
        sel = {0: [], 1: []}
        for beta_hat, (rsec, rpos) in red_index.items():
            beta = beta_hat + (0,)
            ssec, spos = src_index[beta]
            if ssec != rsec:
                raise MFError("sector mismatch in exclusion")
            sel[rsec].append((rpos, spos))
        self._row_maps = sel
        return sel

    @property
    def psi(self) -> MFHom:
        if self._psi is None:
            self._build_psi()
        return self._psi

    def _build_psi(self):
        """psi(u) = u (x) e0 - (E u) (x) e1 with E = (d - d|_{x=s}) / (x - s)."""
        front = KoszulMatrix(
            self.src.rows[:-1], self.src.qshift, self.src.parity, self.src.variables
        )
        dfront = {0: front.mf().d0, 1: front.mf().d1}
        bindings = {self.x: self.s}

        def ediff(mat):
            def quot(p):
                return (p - p.substitute(bindings)).div_linear(self.x, self.s)

            return mat.map_entries(quot)

        e_mat = {0: ediff(dfront[0]), 1: ediff(dfront[1])}
        src_index = self.src.string_index()
        red_index = self.reduced.string_index()
        front_index = front.string_index()
        n_red = {s: len(self.reduced.strings(s)) for s in (0, 1)}
        n_src = {s: len(self.src.strings(s)) for s in (0, 1)}
        mats = {0: {}, 1: {}}
        # inclusion part: beta_hat -> (beta_hat, 0)
        for beta_hat, (sec, pos) in red_index.items():
            ssec, spos = src_index[beta_hat + (0,)]
            mats[sec][(spos, pos)] = Polynomial.one()
        # correction part: -E applied on the front factor, landing in last bit 1
        for beta_hat, (sec, pos) in red_index.items():
            fsec, fpos = front_index[beta_hat]
            emat = e_mat[fsec]
            for (ti, sj), p in emat.entries.items():
                if sj != fpos:
                    continue
                # ti indexes front strings of sector 1 - fsec
                tgt_beta = front.strings(1 - fsec)[ti] + (1,)
                tsec, tpos = src_index[tgt_beta]
                if tsec != sec:
                    raise MFError("parity bookkeeping broken in exclusion")
                prev = mats[sec].get((tpos, pos), _ZERO)
                val = prev - p
                if val:
                    mats[sec][(tpos, pos)] = val
                else:
                    mats[sec].pop((tpos, pos), None)
        f0 = PolyMatrix(n_src[0], n_red[0], mats[0])
        f1 = PolyMatrix(n_src[1], n_red[1], mats[1])
        self._psi = MFHom(self.reduced.mf(), self.src.mf(), f0, f1, 0, 0)

    def project_hom(self, f: MFHom) -> MFHom:
        """Phi o f for f: Z -> src.mf(): substitute entries, keep last-bit-0 rows."""
        sel = self.row_selection()
        bindings = {self.x: self.s}

        def build(mat, sector):
            out = {}
            for new_pos, old_pos in sel[sector]:
                for (i, j), p in mat.entries.items():
                    if i == old_pos:
                        q = p.substitute(bindings)
                        if q:
                            out[(new_pos, j)] = q
            n_new = len(sel[sector])
            return PolyMatrix(n_new, mat.ncols, out)

        sec0 = 0 if f.parity == 0 else 1
        sec1 = 1 - sec0
        return MFHom(
            f.source,
            self.reduced.mf(),
            build(f.f0, sec0),
            build(f.f1, sec1),
            f.parity,
            f.qdeg,
        )



class _IsoStep:
    """An invertible witnessed move K_i -> K_{i+1} inside a reduction."""

    __slots__ = ("forward", "backward", "target")

    def __init__(self, forward: MFHom, backward: MFHom, target: KoszulMatrix):
        self.forward = forward
        self.backward = backward
        self.target = target

    def project(self, f: MFHom) -> MFHom:
        return self.forward @ f

    def section(self) -> MFHom:
        return self.backward


class _ExclStep:
    __slots__ = ("excl", "target")

    def __init__(self, excl: Exclusion):
        self.excl = excl
        self.target = excl.reduced

    def project(self, f: MFHom) -> MFHom:
        return self.excl.project_hom(f)

    def section(self) -> MFHom:
        return self.excl.psi


class Reduction:
    """A composite of witnessed moves and exclusions applied to a Koszul matrix.

    ``transport_endo`` conjugates an endomorphism of the original factorization
    onto the reduced model (through the homotopy equivalence), so that induced
    maps on homology can be computed on small slices.  ``reduce_poly`` pushes a
    polynomial through the accumulated substitutions, which transports
    multiplication endomorphisms directly.
    """

    def __init__(self, original: KoszulMatrix, steps, witness: bool):
        self.original = original
        self.steps = steps
        self.witness = witness
        self.reduced = steps[-1].target if steps else original
        self.substitutions = [
            {st.excl.x: st.excl.s} for st in steps if isinstance(st, _ExclStep)
        ]
        self._section_cache = None

    def reduce_poly(self, p: Polynomial) -> Polynomial:
        for sub in self.substitutions:
            p = p.substitute(sub)
        return p

    def section(self) -> MFHom:
        """Chain map reduced.mf() -> original.mf() splitting the projection."""
        if not self.witness:
            raise MFError("reduction was built without witnesses")
        if self._section_cache is None and self.steps:
            out = None
            for st in self.steps:
                h = st.section()
                out = h if out is None else out @ h
            self._section_cache = out
        return self._section_cache

    def project(self, f: MFHom) -> MFHom:
        """Push a homomorphism Z -> original.mf() down to Z -> reduced.mf().

        Only valid when the differentials of Z do not involve the excluded
        variables (true in particular for Z = reduced.mf()).
        """
        if not self.witness:
            raise MFError("reduction was built without witnesses")
        for st in self.steps:
            f = st.project(f)
        return f

    def transport_endo(self, f: MFHom) -> MFHom:
        """Conjugate an endomorphism of original.mf() onto reduced.mf()."""
        if not self.steps:
            return f
        return self.project(f @ self.section())


def _normalize_row_for_exclusion(k, row, x, side, witness):
    """Rewrite row ``row`` so that its right entry is exactly x - s."""
    steps = []
    cur = k
    if side == "a":
        cur2, u = switch_row(cur, row)
        if witness:
            back = switch_row(cur2, row)[1]
            steps.append(_IsoStep(u, back, cur2))
        cur = cur2
    entry = cur.rows[row].b
    coeffs = entry.coeffs_in(x)
    if 1 not in coeffs or max(coeffs) != 1:
        raise MFError(f"entry is not linear in {x}")
    c = coeffs[1].as_rational()
    if not c:
        raise MFError(f"{x} does not occur linearly")
    if c != 1:
        cur2, u = scale_row(cur, row, c)
        if witness:
            back = scale_row(cur2, row, Fraction(1) / c)[1]
            steps.append(_IsoStep(u, back, cur2))
        cur = cur2
    s = -cur.rows[row].b.coeffs_in(x).get(0, _ZERO)
    return cur, s, steps


def _exclusion_steps(k, row, side, x, witness):
    cur, s, steps = _normalize_row_for_exclusion(k, row, x, side, witness)
    while row < cur.nrows - 1:
        cur2, u = swap_rows(cur, row)
        if witness:
            back = swap_rows(cur2, row)[1]
            steps.append(_IsoStep(u, back, cur2))
        cur = cur2
        row += 1
    excl = Exclusion(cur, x, s, witness=witness)
    steps.append(_ExclStep(excl))
    return steps


def exclude_variable(k: KoszulMatrix, row: int, x) -> KoszulMatrix:
    """Delete ``row`` (right entry linear in x, rational unit coefficient) and
    substitute the solved value of x everywhere; homotopy equivalent input."""
    steps = _exclusion_steps(k, row, "b", x, witness=False)
    return steps[-1].target


def _find_excludable(k: KoszulMatrix, protect):
    wvars = k.potential().variables()
    for r in range(k.nrows):
        for side in ("b", "a"):
            entry = k.rows[r].b if side == "b" else k.rows[r].a
            if not entry:
                continue
            for x in sorted(entry.variables(), key=lambda v: v.sort_key()):
                if x in protect or x in wvars:
                    continue
                coeffs = entry.coeffs_in(x)
                if 1 not in coeffs or max(coeffs) != 1:
                    continue
                try:
                    c = coeffs[1].as_rational()
                except RingError:
                    continue
                if c:
                    return r, side, x
    return None


def reduce_koszul(
    k: KoszulMatrix,
    witness: bool = False,
    protect=frozenset(),
    specialize=None,
) -> Reduction:
    """Exclude every variable occurring linearly with a rational coefficient.

    The scan is deterministic: rows in order, right entry before the left one,
    candidate variables in sort order.  Variables in ``protect`` or occurring
    in the potential are never excluded.  ``specialize`` substitutes
    parameters first (e.g. a = b = c = 0).
    """
    if specialize:
        k = k.substituted(specialize)
    original = k
    steps = []
    while True:
        found = _find_excludable(k, protect)
        if not found:
            break
        r, side, x = found
        steps.extend(_exclusion_steps(k, r, side, x, witness))
        k = steps[-1].target
    return Reduction(original, steps, witness)
