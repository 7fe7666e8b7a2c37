"""Trivalent webs, KR-webs and their Koszul matrix factorizations.

A web is an oriented trivalent graph in which every vertex is a source (+) or
a sink (-) of all three incident edges.  Edges are recorded through their
marks: an arc joins two consecutive marks, a vertex lists the marks nearest to
it.  A KR-web instead has oriented thin edges and unoriented thick edges with
two strands entering one endpoint and two leaving the other.

Each arc from mark u to mark w contributes the Koszul row
(pi_{wu}, x_w - x_u); a (+)-vertex with marks (x, y, z) and vertex id n
contributes rows (g_i, e_i - v_i){-3/2}<1/2> in the vertex variables
v_{n,1..3}, a (-)-vertex the rows (g_i, v_i - e_i) with the same shifts.
Fractional shifts are bookkept and only become integral once vertices are
paired, which is why a complete vertex identification is part of the
factorization data for closed webs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction

from .ring import (
    A,
    B,
    C,
    PARAM_A,
    PARAM_B,
    PARAM_C,
    Polynomial,
    RingError,
    Variable,
    X,
    divided_difference,
    edge,
    pi_xy,
    potential_p,
    vertex_var,
)
from .mf.core import MFError, MFHom, MatrixFactorization, PolyMatrix, identity_hom
from .mf.koszul import (
    KoszulMatrix,
    KoszulRow,
    Reduction,
    local_hom,
    reduce_koszul,
    row_op_type1,
    row_op_type2,
    scale_row,
    swap_rows,
    switch_row,
)
from .mf import homology as _hml


class WebError(ValueError):
    """Malformed web input."""


# -- the symmetric-function data of the 3-vertex -------------------------------


# scratch vertex ids reserved for formal slot variables
_SCRATCH, _SCRATCH2 = -101, -102


def _h_slots():
    """Formal slot variables (t1, t2, t3) of degrees 2, 4, 6."""
    return vertex_var(_SCRATCH, 1), vertex_var(_SCRATCH, 2), vertex_var(_SCRATCH, 3)


def h_polynomial():
    """The unique h with h(e1, e2, e3) = p(x) + p(y) + p(z)."""
    t1, t2, t3 = _h_slots()
    s1, s2, s3 = Polynomial.var(t1), Polynomial.var(t2), Polynomial.var(t3)
    p2 = s1 ** 2 - 2 * s2
    p3 = s1 ** 3 - 3 * s1 * s2 + 3 * s3
    p4 = s1 ** 4 - 4 * s1 ** 2 * s2 + 2 * s2 ** 2 + 4 * s1 * s3
    return p4 - Fraction(4, 3) * A * p3 - 2 * B * p2 - 4 * C * s1


def _slot_quotients():
    """Divided differences of h in each slot, as templates.

    Template i uses slot variable t_i for the "new" argument and a primed
    scratch variable for the "old" one; callers substitute both.
    """
    t1, t2, t3 = _h_slots()
    u1, u2, u3 = (vertex_var(_SCRATCH2, 1), vertex_var(_SCRATCH2, 2),
                  vertex_var(_SCRATCH2, 3))
    h = h_polynomial()
    g1 = divided_difference(h, t1, u1)
    g2 = divided_difference(h.substitute({t1: Polynomial.var(u1)}), t2, u2)
    g3 = divided_difference(
        h.substitute({t1: Polynomial.var(u1), t2: Polynomial.var(u2)}), t3, u3
    )
    return (t1, u1, t2, u2, t3, u3), (g1, g2, g3)


_SLOTS, _GTEMPLATES = None, None


def g_factors(news, olds):
    """The three quotient polynomials g_i(news | olds).

    g_1 = (h(n1,n2,n3) - h(o1,n2,n3)) / (n1 - o1) and so on down the slots;
    ``news`` and ``olds`` are polynomials (elementary symmetric combinations
    or vertex variables).
    """
    global _SLOTS, _GTEMPLATES
    if _SLOTS is None:
        _SLOTS, _GTEMPLATES = _slot_quotients()
    t1, u1, t2, u2, t3, u3 = _SLOTS
    out = []
    subs_all = {
        t1: news[0], u1: olds[0],
        t2: news[1], u2: olds[1],
        t3: news[2], u3: olds[2],
    }
    for tmpl in _GTEMPLATES:
        out.append(tmpl.substitute(subs_all))
    return tuple(out)


def elementary_triple(marks):
    xs = [X(m) for m in marks]
    return (
        xs[0] + xs[1] + xs[2],
        xs[0] * xs[1] + xs[0] * xs[2] + xs[1] * xs[2],
        xs[0] * xs[1] * xs[2],
    )


# -- web data types -------------------------------------------------------------


@dataclass(frozen=True)
class Web:
    """Ordinary trivalent web given by marks, arcs and signed vertices."""

    marks: tuple
    arcs: tuple  # (from_mark, to_mark)
    vertices: tuple  # (sign, (m1, m2, m3)) with sign +1 or -1

    def __post_init__(self):
        marks = set(self.marks)
        for (u, w) in self.arcs:
            if u not in marks or w not in marks:
                raise WebError(f"arc ({u},{w}) uses an unknown mark")
        normalized = []
        for sign, ms in self.vertices:
            if sign not in (1, -1):
                raise WebError("vertex sign must be +1 or -1")
            if len(ms) != 3 or any(m not in marks for m in ms):
                raise WebError(f"vertex marks {ms} invalid")
            normalized.append((sign, tuple(sorted(ms))))
        normalized.sort(key=lambda v: (-v[0], v[1]))
        object.__setattr__(self, "vertices", tuple(normalized))
        object.__setattr__(self, "marks", tuple(sorted(set(self.marks))))
        object.__setattr__(self, "arcs", tuple(sorted(self.arcs)))
        self._check_sides()

    def _check_sides(self):
        """Every mark has an upstream and a downstream side, each used once."""
        up_used = {m: 0 for m in self.marks}
        down_used = {m: 0 for m in self.marks}
        for (u, w) in self.arcs:
            down_used[u] += 1
            up_used[w] += 1
        for sign, ms in self.vertices:
            for m in ms:
                if sign > 0:
                    up_used[m] += 1  # edge leaves the vertex towards m
                else:
                    down_used[m] += 1
        for m in self.marks:
            if up_used[m] > 1 or down_used[m] > 1:
                raise WebError(f"mark {m} oversubscribed")

    def free_ends(self):
        """(inward marks, outward marks); inward ends point into the web."""
        up_used = {m: False for m in self.marks}
        down_used = {m: False for m in self.marks}
        for (u, w) in self.arcs:
            down_used[u] = True
            up_used[w] = True
        for sign, ms in self.vertices:
            for m in ms:
                if sign > 0:
                    up_used[m] = True
                else:
                    down_used[m] = True
        inward = tuple(m for m in self.marks if not up_used[m])
        outward = tuple(m for m in self.marks if not down_used[m])
        return inward, outward

    def is_closed(self):
        inw, outw = self.free_ends()
        return not inw and not outw

    def is_balanced(self):
        inw, outw = self.free_ends()
        return len(inw) == len(outw)

    def plus_vertices(self):
        return [i for i, (s, _) in enumerate(self.vertices) if s > 0]

    def minus_vertices(self):
        return [i for i, (s, _) in enumerate(self.vertices) if s < 0]

    def to_json(self):
        return {
            "marks": sorted(self.marks),
            "arcs": [list(a) for a in self.arcs],
            "vertices": [
                {"sign": "+" if s > 0 else "-", "marks": list(ms)}
                for s, ms in self.vertices
            ],
        }

    @staticmethod
    def from_json(data):
        vertices = []
        for v in data.get("vertices", ()):
            sign = 1 if v["sign"] == "+" else -1
            vertices.append((sign, tuple(v["marks"])))
        return Web(
            tuple(data["marks"]),
            tuple(tuple(a) for a in data.get("arcs", ())),
            tuple(vertices),
        )


@dataclass(frozen=True)
class KRWeb:
    """KR-web: oriented arcs plus unoriented thick edges (two in, two out)."""

    marks: tuple
    arcs: tuple
    thick_edges: tuple  # ((in1, in2), (out1, out2))

    def __post_init__(self):
        marks = set(self.marks)
        for (u, w) in self.arcs:
            if u not in marks or w not in marks:
                raise WebError(f"arc ({u},{w}) uses an unknown mark")
        for (ins, outs) in self.thick_edges:
            if len(ins) != 2 or len(outs) != 2:
                raise WebError("thick edges carry two in- and two out-marks")
            for m in tuple(ins) + tuple(outs):
                if m not in marks:
                    raise WebError(f"thick edge mark {m} unknown")

    def to_json(self):
        return {
            "marks": sorted(self.marks),
            "arcs": [list(a) for a in self.arcs],
            "thick_edges": [
                {"in": list(ins), "out": list(outs)} for ins, outs in self.thick_edges
            ],
        }

    @staticmethod
    def from_json(data):
        return KRWeb(
            tuple(data["marks"]),
            tuple(tuple(a) for a in data.get("arcs", ())),
            tuple(
                (tuple(t["in"]), tuple(t["out"]))
                for t in data.get("thick_edges", ())
            ),
        )


def parse_web(text: str):
    data = json.loads(text)
    if "thick_edges" in data:
        return KRWeb.from_json(data)
    return Web.from_json(data)


# -- elementary factorizations ---------------------------------------------------


def arc_row(src: int, dst: int) -> KoszulRow:
    """Koszul row of an arc oriented src -> dst: (pi_{dst,src}, x_dst - x_src).

    A one-mark circle is the arc from a mark to itself; its row degenerates to
    (p'(x), 0) with p' the derivative of the potential.
    """
    if src == dst:
        scratch = vertex_var(_SCRATCH, 1)
        dp = divided_difference(potential_p(edge(src)), edge(src), scratch)
        dp = dp.substitute({scratch: X(src)})
        return KoszulRow(dp, Polynomial.zero(), 6, 2)
    return KoszulRow(pi_xy(edge(dst), edge(src)), X(dst) - X(src), 6, 2)


def arc_factorization(src: int, dst: int) -> MatrixFactorization:
    """The arc factorization R -> pi -> R{-2} -> (x-y) -> R."""
    if src == dst:
        raise WebError("arc factorization needs two distinct marks")
    k = KoszulMatrix([arc_row(src, dst)], variables=_base_vars({src, dst}))
    return k.mf()


def _base_vars(marks):
    return {PARAM_A, PARAM_B, PARAM_C} | {edge(m) for m in marks}


def u_poly(i, j, k, l) -> Polynomial:
    """The thick-edge entry u_{ijkl}."""
    t1, t2 = vertex_var(_SCRATCH, 1), vertex_var(_SCRATCH2, 1)
    tt = Polynomial.var(t1)
    s_top, s_bot = X(i) + X(j), X(k) + X(l)
    q4 = divided_difference(tt ** 4, t1, t2).substitute({t1: s_top, t2: s_bot})
    q3 = divided_difference(tt ** 3, t1, t2).substitute({t1: s_top, t2: s_bot})
    return (
        q4
        - (2 * B + 4 * X(i) * X(j)) * (X(i) + X(j) + X(k) + X(l))
        - Fraction(4, 3) * A * (q3 - 3 * X(i) * X(j))
        - 4 * C
    )


def v_poly(i, j, k, l) -> Polynomial:
    """The thick-edge entry v_{ijkl}."""
    return (
        2 * (X(i) * X(j) + X(k) * X(l))
        - 4 * (X(k) + X(l)) ** 2
        + 4 * A * (X(k) + X(l))
        + 4 * B
    )


def dumbbell_koszul(i, j, k, l, allow_repeats=False) -> KoszulMatrix:
    if not allow_repeats and len({i, j, k, l}) != 4:
        raise WebError("dumbbell needs four distinct marks")
    return KoszulMatrix.from_pairs(
        [
            (u_poly(i, j, k, l), X(i) + X(j) - X(k) - X(l)),
            (v_poly(i, j, k, l), X(i) * X(j) - X(k) * X(l)),
        ],
        qshift=-1,
        variables=_base_vars({i, j, k, l}),
        degrees=[(6, 2), (4, 4)],
    )


def dumbbell_factorization(i, j, k, l) -> MatrixFactorization:
    """The thick-edge factorization {u, x_i+x_j-x_k-x_l; v, x_ix_j-x_kx_l}{-1}."""
    return dumbbell_koszul(i, j, k, l).mf()


def oriented_smoothing_koszul(i, j, k, l) -> KoszulMatrix:
    """Two parallel arcs k -> i and l -> j."""
    return KoszulMatrix(
        [arc_row(k, i), arc_row(l, j)], variables=_base_vars({i, j, k, l})
    )


def triple_koszul(x1, x2, x3, x4, x5, x6) -> KoszulMatrix:
    """Triple-edge rows (h_i, e_i - s_i){-3}: marks 1-3 on top, 4-6 below."""
    if len({x1, x2, x3, x4, x5, x6}) != 6:
        raise WebError("triple edge needs six distinct marks")
    es = elementary_triple((x1, x2, x3))
    ss = elementary_triple((x4, x5, x6))
    h1, h2, h3 = g_factors(es, ss)
    return KoszulMatrix.from_pairs(
        [(h1, es[0] - ss[0]), (h2, es[1] - ss[1]), (h3, es[2] - ss[2])],
        qshift=-3,
        variables=_base_vars({x1, x2, x3, x4, x5, x6}),
        degrees=[(6, 2), (4, 4), (2, 6)],
    )


def triple_factorization(x1, x2, x3, x4, x5, x6) -> MatrixFactorization:
    return triple_koszul(x1, x2, x3, x4, x5, x6).mf()


def vertex_koszul(sign: int, marks, vertex_id: int) -> KoszulMatrix:
    """3-vertex rows (g_i, +-(e_i - v_i)){-3/2}<1/2> with fresh vertex variables."""
    if len(marks) != 3:
        raise WebError("a vertex has three incident marks")
    es = elementary_triple(marks)
    vs = tuple(Polynomial.var(vertex_var(vertex_id, i)) for i in (1, 2, 3))
    g1, g2, g3 = g_factors(es, vs)
    rows = []
    for idx, (g, e, v) in enumerate(zip((g1, g2, g3), es, vs), start=1):
        b = e - v if sign > 0 else v - e
        rows.append(KoszulRow(g, b, 8 - 2 * idx, 2 * idx))
    variables = _base_vars(set(marks)) | {vertex_var(vertex_id, i) for i in (1, 2, 3)}
    return KoszulMatrix(
        rows, qshift=Fraction(-3, 2), parity=Fraction(1, 2), variables=variables
    )


def vertex_factorization(sign: int, marks, vertex_id: int):
    """The materialized pair of +- vertex factorizations is only available
    after pairing; this returns the Koszul data with fractional shifts."""
    return vertex_koszul(sign, marks, vertex_id)


# -- assembly and identification ---------------------------------------------------


@dataclass
class WebFactorization:
    """Assembled factorization of a web, with labeled rows.

    Labels: ("arc", (src, dst)) or ("vertex", vertex_index, level) before
    identification; ("pair", pair_index, level) afterwards.
    """

    web: object
    koszul: KoszulMatrix
    labels: tuple
    identification: tuple | None = None

    def mf(self) -> MatrixFactorization:
        return self.koszul.mf()

    def potential(self) -> Polynomial:
        return self.koszul.potential()


def assemble(web) -> WebFactorization:
    """Tensor of arc rows and vertex (or thick edge) rows."""
    if isinstance(web, KRWeb):
        rows, labels = [], []
        variables = _base_vars(set(web.marks))
        qshift = Fraction(0)
        for (u, w) in sorted(web.arcs):
            rows.append(arc_row(u, w))
            labels.append(("arc", (u, w)))
        for t_idx, (ins, outs) in enumerate(web.thick_edges):
            k, l = ins
            i, j = outs
            db = dumbbell_koszul(i, j, k, l)
            rows.extend(db.rows)
            labels.append(("thick", t_idx, 1))
            labels.append(("thick", t_idx, 2))
            qshift += db.qshift
        return WebFactorization(
            web, KoszulMatrix(rows, qshift, 0, variables), tuple(labels)
        )
    if not web.is_balanced():
        raise WebError("unbalanced open webs are not defined here")
    rows, labels = [], []
    variables = _base_vars(set(web.marks))
    qshift = Fraction(0)
    parity = Fraction(0)
    for (u, w) in sorted(web.arcs):
        rows.append(arc_row(u, w))
        labels.append(("arc", (u, w)))
    for v_idx, (sign, ms) in enumerate(web.vertices):
        vk = vertex_koszul(sign, ms, v_idx)
        rows.extend(vk.rows)
        for level in (1, 2, 3):
            labels.append(("vertex", v_idx, level))
        qshift += vk.qshift
        parity += vk.parity
        variables |= vk.variables
    return WebFactorization(
        web, KoszulMatrix(rows, qshift, parity, variables), tuple(labels)
    )


def canonical_identification(web: Web):
    """Pair the k-th (+)-vertex with the k-th (-)-vertex, in input order."""
    plus, minus = web.plus_vertices(), web.minus_vertices()
    if len(plus) != len(minus):
        raise WebError("web has unequal numbers of (+) and (-) vertices")
    return tuple(zip(plus, minus))


def identify_vertices(wf: WebFactorization, zeta=None) -> WebFactorization:
    """Quotient by v_i(+) - v_i(-) for each pair and exclude the vertex variables.

    For each pair the (+)-vertex variables are renamed to the (-)-vertex ones
    and the three (-)-rows are used to exclude them, leaving per pair the rows
    (g_i with vertex variables eliminated, e_i(+) - e_i(-)).
    """
    web = wf.web
    if zeta is None:
        zeta = canonical_identification(web)
    plus, minus = set(), set()
    for (p, m) in zeta:
        if web.vertices[p][0] <= 0 or web.vertices[m][0] >= 0:
            raise WebError("identification must pair a (+) with a (-) vertex")
        plus.add(p)
        minus.add(m)
    if plus != set(web.plus_vertices()) or minus != set(web.minus_vertices()):
        raise WebError("identification must be a total pairing")

    rows = list(wf.koszul.rows)
    labels = list(wf.labels)
    variables = set(wf.koszul.variables)
    # rename +vertex variables to their partners
    rename = {}
    for (p, m) in zeta:
        for lvl in (1, 2, 3):
            rename[vertex_var(p, lvl)] = Polynomial.var(vertex_var(m, lvl))
    rows = [r.substituted(rename) for r in rows]
    variables -= set(rename)

    for pair_idx, (p, m) in enumerate(zeta):
        for lvl in (1, 2, 3):
            var = vertex_var(m, lvl)
            # locate the (-)-vertex row of this level
            ridx = labels.index(("vertex", m, lvl))
            row = rows[ridx]
            coeffs = row.b.coeffs_in(var)
            if 1 not in coeffs or coeffs[1] != Polynomial.one():
                raise WebError("cannot exclude vertex variable: malformed row")
            value = -coeffs[0] if 0 in coeffs else Polynomial.zero()
            del rows[ridx]
            del labels[ridx]
            binding = {var: value}
            rows = [r.substituted(binding) for r in rows]
            variables.discard(var)
        # relabel the remaining (+)-rows of this pair
        for lvl in (1, 2, 3):
            pidx = labels.index(("vertex", p, lvl))
            labels[pidx] = ("pair", pair_idx, lvl)

    koszul = KoszulMatrix(rows, wf.koszul.qshift, wf.koszul.parity, variables)
    if koszul.qshift.denominator != 1 or koszul.parity.denominator != 1:
        raise WebError("identification left fractional shifts; pairing incomplete")
    return WebFactorization(web, koszul, tuple(labels), tuple(zeta))


def web_factorization(web, zeta=None) -> WebFactorization:
    """Assemble and, for ordinary webs, identify vertices."""
    wf = assemble(web)
    if isinstance(web, Web) and web.vertices:
        wf = identify_vertices(wf, zeta)
    return wf


def closed_web_potential_is_zero(wf: WebFactorization) -> bool:
    return wf.potential() == Polynomial.zero()


# -- homology of closed webs ----------------------------------------------------


_NORM_CACHE = {}


def normalization_parity(wf: WebFactorization) -> int:
    """The parity shift making closed-web homology sit in degree zero.

    For closed webs this is the parity of the lowest nonzero homology slice
    of the exclusion-reduced model.  Open webs have no homology; they get the
    deterministic bookkeeping value (reduced row count plus accumulated
    parity), which is stable under marking moves.
    """
    key = wf.web
    if key in _NORM_CACHE:
        return _NORM_CACHE[key]
    red = reduce_koszul(wf.koszul)
    if wf.potential():
        par = (red.reduced.nrows + int(red.reduced.parity)) % 2
    else:
        m = red.reduced.mf()
        degs = m.basis0 + m.basis1
        q = min(degs) if degs else 0
        par = 0
        from .mf import homology as _h
        for _ in range(40):
            dims = _h.homology_dims(m, q)
            found = [(pp, qq) for (pp, qq), v in dims.table.items() if v]
            if found:
                par = min(found, key=lambda t: t[1])[0]
                break
            q += 2
        else:
            raise WebError("could not locate the bottom homology class")
    _NORM_CACHE[key] = par
    return par


def closed_web_reduction(wf: WebFactorization, witness=False, specialize=None) -> Reduction:
    if wf.potential():
        raise WebError("homology is defined for closed webs (potential zero)")
    return reduce_koszul(wf.koszul, witness=witness, specialize=specialize)


def closed_web_homology(wf: WebFactorization, q_max: int, specialize=None,
                        normalize=True):
    """Bigraded homology dimensions; optionally normalize to parity 0.

    Returns (dims, parity_shift_applied).
    """
    red = closed_web_reduction(wf, specialize=specialize)
    dims = _hml.homology_dims(red.reduced.mf(), q_max)
    shift = 0
    if normalize and dims.concentrated_parity() == 1:
        dims = dims.shift_parity()
        shift = 1
    return dims, shift


# -- the double edge and its reduction to the thick-edge factorization ----------


def double_edge_web(i, j, k, l, r) -> Web:
    """Web with a (+)-vertex emitting i, j, r and a (-)-vertex absorbing k, l, r."""
    return Web((i, j, k, l, r), (), ((1, (i, j, r)), (-1, (k, l, r))))


@dataclass
class DoubleEdgeChain:
    """Witnessed reduction of the identified double edge to the dumbbell rows.

    ``start`` is the three-row Koszul matrix of the identified double-edge web;
    ``final`` has the dumbbell entries (u_{ijkl}, v_{ijkl}) in its first column
    and overall shift {-1}.  ``section`` is an explicit chain map
    final.mf() -> start.mf() splitting the reduction (a homotopy equivalence);
    ``project`` pushes homomorphisms Z -> start.mf() down to Z -> final.mf().
    """

    marks: tuple
    start: KoszulMatrix
    final: KoszulMatrix
    steps: tuple
    first_column: tuple

    def section(self) -> MFHom:
        out = None
        for st in self.steps:
            h = st.section()
            out = h if out is None else out @ h
        return out

    def project(self, f: MFHom) -> MFHom:
        for st in self.steps:
            f = st.project(f)
        return f


def double_edge_chain(i, j, k, l, r) -> DoubleEdgeChain:
    """Reduce the identified double-edge web to the dumbbell presentation.

    The chain: trade the parity shift for switching the cubic row, add x_r
    times the quadratic row to the first row, exclude x_r, then one more row
    operation to land exactly on (u_{ijkl}, v_{ijkl}).
    """
    from .mf.koszul import _IsoStep, _ExclStep, Exclusion

    web = double_edge_web(i, j, k, l, r)
    wf = web_factorization(web)
    k0 = wf.koszul
    if k0.nrows != 3:
        raise WebError("unexpected double-edge presentation")
    steps = []
    # switch the cubic row: {-3}<1> becomes {-1}<0>
    k1, u1 = switch_row(k0, 2)
    steps.append(_IsoStep(u1, switch_row(k1, 2)[1], k1))
    # [1,2]_{-x_r}: row1 gains x_r * row2, row2's right entry drops the x_r part
    k2, u2 = row_op_type1(k1, 0, 1, -X(r))
    steps.append(_IsoStep(u2, row_op_type1(k2, 0, 1, X(r))[1], k2))
    # normalize the last row to (4 x_r (x_i x_j - x_k x_l), x_r - (a - x_k - x_l))
    k3, u3 = scale_row(k2, 2, Fraction(-4))
    steps.append(_IsoStep(u3, scale_row(k3, 2, Fraction(-1, 4))[1], k3))
    excl = Exclusion(k3, edge(r), A - X(k) - X(l), witness=True)
    steps.append(_ExclStep(excl))
    k4 = excl.reduced
    # final row operation aligning the first column with (u, v); note the
    # second row then reads v = g2 - 2(a-x_k-x_l) b_1, which is forced by
    # preservation of the potential
    lam = 2 * (A - X(k) - X(l))
    k5, u5 = row_op_type2(k4, 0, 1, lam)
    steps.append(_IsoStep(u5, row_op_type2(k5, 0, 1, -lam)[1], k5))
    first_col = (k5.rows[0].a, k5.rows[1].a)
    return DoubleEdgeChain((i, j, k, l, r), k0, k5, tuple(steps), first_col)


# -- swapping virtual edges -------------------------------------------------------


SWAP_PSI_BLOCK = None


def _swap_psi_block():
    """The isomorphism psi on two quadratic rows, as a local block."""
    global SWAP_PSI_BLOCK
    if SWAP_PSI_BLOCK is None:
        h = Fraction(1, 2)
        SWAP_PSI_BLOCK = {
            (0, 0): [((1, 0), Polynomial.const(1)), ((0, 1), Polynomial.const(-1))],
            (1, 1): [((1, 0), Polynomial.const(-h)), ((0, 1), Polynomial.const(-h))],
            (1, 0): [((0, 0), Polynomial.const(h)), ((1, 1), Polynomial.const(-1))],
            (0, 1): [((0, 0), Polynomial.const(-h)), ((1, 1), Polynomial.const(-1))],
        }
    return SWAP_PSI_BLOCK


@dataclass
class SwapReady:
    """Identified closed web reduced to the swap presentation.

    Rows: arc rows and per-pair linear rows first, then one quadratic row per
    vertex pair; the t-th quadratic row belongs to the t-th (-)-vertex and
    carries the e_2-data of its (+)-partner under the identification.
    """

    web: Web
    pairing: tuple  # pairing[t] = (+)-vertex paired with the t-th (-)-vertex
    koszul: KoszulMatrix
    quad_offset: int

    @property
    def pairs(self):
        return len(self.pairing)


def swap_ready(web: Web, pairing=None) -> SwapReady:
    """Build the swap presentation of a closed web for a given pairing.

    ``pairing`` lists, for each (-)-vertex in web order, the index of its
    (+)-partner; the default is the canonical identification.  Each pair's
    cubic row is used to exclude the lexicographically smallest available mark
    of the (-)-vertex, as fixed by the determinism convention.
    """
    minus = web.minus_vertices()
    plus = web.plus_vertices()
    if pairing is None:
        pairing = tuple(plus)
    if sorted(pairing) != sorted(plus):
        raise WebError("pairing must list every (+)-vertex exactly once")
    zeta = tuple((p, m) for p, m in zip(pairing, minus))
    wf = identify_vertices(assemble(web), zeta)
    wvars = wf.potential().variables()
    rows = list(wf.koszul.rows)
    labels = list(wf.labels)
    qshift, parity = wf.koszul.qshift, wf.koszul.parity
    variables = set(wf.koszul.variables)

    # exclude one mark per pair using the cubic row (left entry 4(e1(-) - a))
    for t in range(len(zeta)):
        ridx = labels.index(("pair", t, 3))
        row = rows[ridx]
        entry = row.a
        target_var = None
        for xv in sorted(entry.variables(), key=lambda v: v.sort_key()):
            if xv.kind != "x" or xv in wvars:
                continue
            coeffs = entry.coeffs_in(xv)
            if 1 in coeffs and max(coeffs) == 1:
                try:
                    c = coeffs[1].as_rational()
                except RingError:
                    continue
                if c:
                    target_var = (xv, c, coeffs)
                    break
        if target_var is None:
            raise WebError("no excludable mark in the cubic row of a pair")
        xv, c, coeffs = target_var
        value = -(coeffs.get(0, Polynomial.zero()) * (Fraction(1) / c))
        # the switch trades <1> and shifts q by (dega - degb)/2 after swapping
        qshift += Fraction(row.degb - row.dega, 2)
        parity += 1
        del rows[ridx]
        del labels[ridx]
        binding = {xv: value}
        rows = [rr.substituted(binding) for rr in rows]
        variables.discard(xv)

    # linear rows ordered by their (+)-vertex (stable under partner swaps),
    # quadratic rows by (-)-slot
    order = [idx for idx, lab in enumerate(labels) if lab[0] == "arc"]
    for t in sorted(range(len(zeta)), key=lambda u: pairing[u]):
        order.append(labels.index(("pair", t, 1)))
    quad_offset = len(order)
    for t in range(len(zeta)):
        order.append(labels.index(("pair", t, 2)))
    rows = [rows[idx] for idx in order]
    koszul = KoszulMatrix(rows, qshift, parity, variables)
    return SwapReady(web, tuple(pairing), koszul, quad_offset)


def swap_iso(sr: SwapReady, t: int):
    """The isomorphism Psi_t exchanging the (+)-partners of pairs t, t+1.

    Returns (SwapReady of the swapped pairing, MFHom of parity shift 1).
    """
    if not (0 <= t < sr.pairs - 1):
        raise WebError("swap index out of range")
    pairing = list(sr.pairing)
    pairing[t], pairing[t + 1] = pairing[t + 1], pairing[t]
    target = swap_ready(sr.web, tuple(pairing))
    # the target carries one parity shift more than the source, whatever
    # bookkeeping the source has accumulated from earlier swaps
    tgt_koszul = target.koszul.shift_parity(
        sr.koszul.parity - target.koszul.parity + 1
    )
    slots = (sr.quad_offset + t, sr.quad_offset + t + 1)
    hom = local_hom(
        sr.koszul, tgt_koszul, slots, _swap_psi_block(), 0, 0, odd_block=True
    )
    shifted = SwapReady(target.web, target.pairing, tgt_koszul, target.quad_offset)
    return shifted, hom


def identification_transport(sr: SwapReady, pairing) -> MFHom:
    """Composite of swap isomorphisms realizing a new (+)-partner assignment.

    The parity shift of the result equals the parity of the permutation
    relating the two pairings; equal pairings give the identity.
    """
    pairing = tuple(pairing)
    if sorted(pairing) != sorted(sr.pairing):
        raise WebError("pairings are not permutations of each other")
    cur = sr
    hom = identity_hom(sr.koszul.mf())
    want = list(pairing)
    # bubble the current pairing into the wanted one with adjacent swaps
    current = list(sr.pairing)
    while current != want:
        for t in range(len(current) - 1):
            # move the wanted element into place, leftmost first
            if current[t] != want[t]:
                # find wanted element beyond t and bubble it left
                s = current.index(want[t], t + 1)
                cur2, step = swap_iso(cur, s - 1)
                hom = step @ hom
                current[s - 1], current[s] = current[s], current[s - 1]
                cur = cur2
                break
        else:
            break
    return hom
