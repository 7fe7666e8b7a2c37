"""Elementary cobordism maps, the foam-term language and its evaluation.

A foam term is a movie: a source web plus a sequence of elementary steps
(cup, cap, zip, unzip, saddle, dot, and the bookkeeping moves mark/unmark
which refine the marking of an edge through homotopy equivalences).  The
evaluator turns a movie into a chain of maps between the identified Koszul
factorizations of the intermediate webs:

* cup    -> unit into a fresh one-mark circle (degree -2, parity 1);
* cap    -> trace, consuming the circle variable by X^k -> -1/4 [k = 2]
            in the Jacobi algebra (degree -2, parity 1);
* zip    -> chi_0 into the dumbbell rows, carried onto the identified web
            through the witnessed reduction of the double edge (degree 1);
* unzip  -> the reduction forwards, then chi_1 (degree 1);
* saddle -> the degree-2 parity-1 map with the e_{ijk} entries;
* dot    -> multiplication by the edge variable (degree 2).

An unzip transports the vertex identification first whenever the two
vertices it opens are not paired in the current identification; the
transport is the composite of virtual-edge swap isomorphisms, which is
exactly where the psi maps enter the evaluation.

Cap and unmark steps consume a ring variable and are therefore only
semilinear on matrices; the evaluator keeps the full step chain so induced
maps on homology slices stay computable by exact Q-linear algebra, and it
also folds the chain into a single matrix pair, which is a genuine
homomorphism whenever no consumed variable lives on the source web (always
true for closed terms and for the composites used by the identities here).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction

from .ring import (
    A,
    B,
    C,
    Polynomial,
    Variable,
    X,
    edge,
    pi_xy,
)
from .mf.core import (
    MFError,
    MFHom,
    MatrixFactorization,
    PolyMatrix,
    identity_hom,
    multiplication_hom,
    tensor_hom,
)
from .mf.koszul import (
    KoszulMatrix,
    _exclusion_steps,
    _ExclStep,
    _IsoStep,
    swap_rows,
)
from .mf import homology as hml
from .web import (
    Web,
    WebFactorization,
    arc_row,
    double_edge_chain,
    dumbbell_koszul,
    normalization_parity,
    oriented_smoothing_koszul,
    swap_iso,
    swap_ready,
    u_poly,
    v_poly,
    web_factorization,
    _base_vars,
)

ZERO = Polynomial.zero()
ONE = Polynomial.one()


class FoamError(ValueError):
    """Ill-typed foam term."""


# -- elementary homomorphisms ---------------------------------------------------


def e_entry(i, j, k) -> Polynomial:
    """The saddle entry e_{ijk} (symmetric, q-degree 4)."""
    return (
        Fraction(1, 2)
        * (X(i) ** 2 + X(j) ** 2 + X(k) ** 2 + X(i) * X(j) + X(i) * X(k) + X(j) * X(k))
        - Fraction(2, 3) * A * (X(i) + X(j) + X(k))
        - B
    )


def alpha_entry(i, j, k, l) -> Polynomial:
    """alpha = -v + (u + x_i v - pi_jl)/(x_i - x_k) from the zip matrices."""
    u, v = u_poly(i, j, k, l), v_poly(i, j, k, l)
    num = u + X(i) * v - pi_xy(edge(j), edge(l))
    return -v + num.div_linear(edge(i), X(k))


def chi0_hom(i, j, k, l) -> MFHom:
    """chi_0: oriented smoothing (arcs k->i, l->j) -> dumbbell; degree 1."""
    src = oriented_smoothing_koszul(i, j, k, l).mf()
    tgt = dumbbell_koszul(i, j, k, l, allow_repeats=True).mf()
    al = alpha_entry(i, j, k, l)
    f0 = PolyMatrix.from_rows([[2 * (X(j) - X(k)), 0], [-2 * al, -2]])
    f1 = PolyMatrix.from_rows([[-2 * X(k), 2 * X(j)], [2, -2]])
    return MFHom(src, tgt, f0, f1, 0, 1)


def chi1_hom(i, j, k, l) -> MFHom:
    """chi_1: dumbbell -> oriented smoothing; degree 1."""
    src = dumbbell_koszul(i, j, k, l, allow_repeats=True).mf()
    tgt = oriented_smoothing_koszul(i, j, k, l).mf()
    al = alpha_entry(i, j, k, l)
    f0 = PolyMatrix.from_rows([[1, 0], [-al, X(k) - X(j)]])
    f1 = PolyMatrix.from_rows([[1, X(j)], [1, X(k)]])
    return MFHom(src, tgt, f0, f1, 0, 1)


def saddle_hom(d1, s2, s1, d2) -> MFHom:
    """Saddle from arcs (s1->d1, s2->d2) to arcs (s2->d1, s1->d2).

    In the roles of the published matrices x1 = d1, x2 = s2, x3 = s1,
    x4 = d2.  The (2,1) entry of the second matrix is -(e_{124}+e_{234});
    the printed -(e_{123}+e_{234}) fails the commuting squares and is forced
    to this value by them.
    """
    x1, x2, x3, x4 = d1, s2, s1, d2
    src = KoszulMatrix(
        [arc_row(x3, x1), arc_row(x2, x4)], variables=_base_vars({x1, x2, x3, x4})
    )
    tgt = KoszulMatrix(
        [arc_row(x2, x1), arc_row(x3, x4)], variables=_base_vars({x1, x2, x3, x4})
    )
    e123, e124 = e_entry(x1, x2, x3), e_entry(x1, x2, x4)
    e134, e234 = e_entry(x1, x3, x4), e_entry(x2, x3, x4)
    eta0 = PolyMatrix.from_rows([[e123 + e124, 1], [-(e134 + e234), 1]])
    eta1 = PolyMatrix.from_rows([[-1, 1], [-(e124 + e234), -(e134 + e123)]])
    return MFHom(src.mf(), tgt.mf(), eta0, eta1, 1, 2)


def circle_koszul(m) -> KoszulMatrix:
    return KoszulMatrix([arc_row(m, m)], variables=_base_vars({m}))


def eps_reduce(p: Polynomial, x: Variable) -> Polynomial:
    """Trace in the circle variable x: reduce modulo x^3 = a x^2 + b x + c
    and return -1/4 times the x^2 coefficient."""
    coeffs = p.coeffs_in(x)
    top = max(coeffs, default=0)
    work = dict(coeffs)
    for k in range(top, 2, -1):
        c = work.pop(k, None)
        if not c:
            continue
        work[k - 1] = work.get(k - 1, ZERO) + A * c
        work[k - 2] = work.get(k - 2, ZERO) + B * c
        work[k - 3] = work.get(k - 3, ZERO) + C * c
    return work.get(2, ZERO) * Fraction(-1, 4)


def hom_shift_parity(f: MFHom) -> MFHom:
    """Shift source and target by <1>: components swap, no signs."""
    return MFHom(
        f.source.shift_parity(), f.target.shift_parity(), f.f1, f.f0, f.parity, f.qdeg
    )


# -- foam terms -------------------------------------------------------------------


@dataclass(frozen=True)
class FoamStep:
    kind: str
    data: tuple

    def degree(self) -> int:
        return {
            "cup": -2,
            "cap": -2,
            "zip": 1,
            "unzip": 1,
            "saddle": 2,
            "dot": 2,
            "mark": 0,
            "unmark": 0,
        }[self.kind]


def web_after_step(web: Web, step) -> Web:
    marks = set(web.marks)
    arcs = list(web.arcs)
    vertices = list(web.vertices)
    kind, data = step.kind, step.data
    if kind == "cup":
        (m,) = data
        if m in marks:
            raise FoamError(f"mark {m} already in use")
        marks.add(m)
        arcs.append((m, m))
    elif kind == "cap":
        (m,) = data
        if (m, m) not in arcs:
            raise FoamError(f"no one-mark circle at {m}")
        arcs.remove((m, m))
        marks.discard(m)
    elif kind == "dot":
        (m,) = data
        if m not in marks:
            raise FoamError(f"unknown mark {m}")
    elif kind == "mark":
        u, m = data
        if m in marks or u not in marks:
            raise FoamError(f"bad mark step ({u}, {m})")
        target_arc = next((a for a in arcs if a[0] == u), None)
        if target_arc is not None:
            arcs.remove(target_arc)
            arcs.append((u, m))
            arcs.append((m, target_arc[1]))
        else:
            for idx, (sign, ms) in enumerate(vertices):
                if sign < 0 and u in ms:
                    vertices[idx] = (sign, tuple(m if x == u else x for x in ms))
                    arcs.append((u, m))
                    break
            else:
                raise FoamError(f"cannot mark downstream of {u}")
        marks.add(m)
    elif kind == "unmark":
        (m,) = data
        up = next((a for a in arcs if a[1] == m), None)
        if up is None or up[0] == m:
            raise FoamError(f"mark {m} is not removable")
        u = up[0]
        arcs.remove(up)
        down_arc = next((a for a in arcs if a[0] == m), None)
        if down_arc is not None:
            arcs.remove(down_arc)
            arcs.append((u, down_arc[1]))
        else:
            for idx, (sign, ms) in enumerate(vertices):
                if sign < 0 and m in ms:
                    vertices[idx] = (sign, tuple(u if x == m else x for x in ms))
                    break
            else:
                raise FoamError(f"mark {m} is not removable")
        marks.discard(m)
    elif kind == "zip":
        (k_, i_), (l_, j_), r = data
        if r in marks:
            raise FoamError(f"mark {r} already in use")
        if (k_, i_) not in arcs or (l_, j_) not in arcs or (k_, i_) == (l_, j_):
            raise FoamError("zip needs two distinct arcs present")
        arcs.remove((k_, i_))
        arcs.remove((l_, j_))
        marks.add(r)
        vertices.append((1, (i_, j_, r)))
        vertices.append((-1, (k_, l_, r)))
    elif kind == "unzip":
        r, (k_, i_), (l_, j_) = data
        plus = next((v for v in vertices if v[0] > 0 and set(v[1]) == {i_, j_, r}), None)
        minus = next((v for v in vertices if v[0] < 0 and set(v[1]) == {k_, l_, r}), None)
        if plus is None or minus is None:
            raise FoamError("unzip pattern not found")
        vertices.remove(plus)
        vertices.remove(minus)
        marks.discard(r)
        arcs.append((k_, i_))
        arcs.append((l_, j_))
    elif kind == "saddle":
        (s1, d1), (s2, d2) = data
        if (s1, d1) not in arcs or (s2, d2) not in arcs:
            raise FoamError("saddle needs the two arcs present")
        arcs.remove((s1, d1))
        arcs.remove((s2, d2))
        arcs.append((s2, d1))
        arcs.append((s1, d2))
    else:
        raise FoamError(f"unknown step {kind}")
    vertices.sort(key=lambda v: (-v[0], tuple(sorted(v[1]))))
    return Web(tuple(sorted(marks)), tuple(sorted(arcs)), tuple(vertices))


@dataclass(frozen=True)
class FoamTerm:
    """A movie of elementary steps between webs."""

    source: Web
    steps: tuple = ()

    def __post_init__(self):
        web = self.source
        for st in self.steps:
            web = web_after_step(web, st)
        object.__setattr__(self, "_target", web)

    @property
    def target(self) -> Web:
        return self._target

    def then(self, kind, *data) -> "FoamTerm":
        return FoamTerm(self.source, self.steps + (FoamStep(kind, tuple(data)),))

    def compose(self, other: "FoamTerm") -> "FoamTerm":
        """self after other (other runs first)."""
        if other.target != self.source:
            raise FoamError("vertical composition: webs do not match")
        return FoamTerm(other.source, other.steps + self.steps)

    def juxtapose(self, other: "FoamTerm") -> "FoamTerm":
        if set(self.source.marks) & set(other.source.marks):
            raise FoamError("juxtaposition needs disjoint marks")
        src = Web(
            tuple(sorted(self.source.marks + other.source.marks)),
            tuple(sorted(self.source.arcs + other.source.arcs)),
            tuple(
                sorted(
                    self.source.vertices + other.source.vertices,
                    key=lambda v: (-v[0], tuple(sorted(v[1]))),
                )
            ),
        )
        return FoamTerm(src, self.steps + other.steps)

    def degree(self) -> int:
        return sum(st.degree() for st in self.steps)

    def is_closed(self) -> bool:
        return self.source == EMPTY_WEB and self.target == EMPTY_WEB

    def to_json(self):
        return {
            "source": self.source.to_json(),
            "steps": [_step_json(st) for st in self.steps],
        }

    @staticmethod
    def from_json(data) -> "FoamTerm":
        src = Web.from_json(data.get("source", {"marks": [], "arcs": []}))
        return FoamTerm(src, tuple(_step_from_json(s) for s in data.get("steps", ())))


def _step_json(st: FoamStep):
    kind, d = st.kind, st.data
    if kind in ("cup", "cap", "dot", "unmark"):
        return {"op": kind, "mark": d[0]}
    if kind == "mark":
        return {"op": "mark", "after": d[0], "mark": d[1]}
    if kind == "zip":
        return {"op": "zip", "left": list(d[0]), "right": list(d[1]), "mark": d[2]}
    if kind == "unzip":
        return {"op": "unzip", "mark": d[0], "left": list(d[1]), "right": list(d[2])}
    if kind == "saddle":
        return {"op": "saddle", "first": list(d[0]), "second": list(d[1])}
    raise FoamError(kind)


def _step_from_json(s) -> FoamStep:
    op = s["op"]
    if op in ("cup", "cap", "dot", "unmark"):
        return FoamStep(op, (s["mark"],))
    if op == "mark":
        return FoamStep("mark", (s["after"], s["mark"]))
    if op == "zip":
        return FoamStep("zip", (tuple(s["left"]), tuple(s["right"]), s["mark"]))
    if op == "unzip":
        return FoamStep("unzip", (s["mark"], tuple(s["left"]), tuple(s["right"])))
    if op == "saddle":
        return FoamStep("saddle", (tuple(s["first"]), tuple(s["second"])))
    raise FoamError(f"unknown op {op}")


def parse_foam(text: str) -> FoamTerm:
    return FoamTerm.from_json(json.loads(text))


EMPTY_WEB = Web((), (), ())


def empty_term() -> FoamTerm:
    return FoamTerm(EMPTY_WEB)


# -- semilinear steps --------------------------------------------------------------


class SemiStep:
    """A slicewise-linear, matrix-semilinear step (cap / unmark / projection).

    Picks generators through ``row_map`` (per source sector: old -> new),
    substitutes ``subs`` into the monomial part, and for a cap consumes
    ``eps_var`` through the trace.
    """

    def __init__(self, source, target, row_map, subs, eps_var=None, parity=0):
        self.source = source
        self.target = target
        self.row_map = row_map
        self.subs = subs
        self.eps_var = eps_var
        self.parity = parity % 2
        self.qdeg = 0

    def consume(self, p: Polynomial) -> Polynomial:
        if self.subs:
            p = p.substitute(self.subs)
        if self.eps_var is not None:
            p = eps_reduce(p, self.eps_var)
        return p

    def compose_into(self, other: MFHom) -> MFHom:
        """Apply this step after an incoming homomorphism (other runs first)."""

        def build(mat, sector):
            out = {}
            for (i, j), p in mat.entries.items():
                new = self.row_map[sector].get(i)
                if new is None:
                    continue
                q = self.consume(p)
                if q:
                    key = (new, j)
                    s = out.get(key, ZERO) + q
                    if s:
                        out[key] = s
                    else:
                        out.pop(key, None)
            tsec = (sector + self.parity) % 2
            n_new = self.target.rank0 if tsec == 0 else self.target.rank1
            return PolyMatrix(n_new, mat.ncols, out)

        sec0 = 0 if other.parity % 2 == 0 else 1
        f0 = build(other.f0, sec0)
        f1 = build(other.f1, 1 - sec0)
        return MFHom(
            other.source, self.target, f0, f1,
            (other.parity + self.parity) % 2, None,
        )


def _exclusion_semistep(big: KoszulMatrix, reduced: KoszulMatrix, x, s) -> SemiStep:
    """Projection of the exclusion of the last row (right entry x - s)."""
    src_index = big.string_index()
    tgt_index = reduced.string_index()
    row_map = {0: {}, 1: {}}
    for beta_hat, (tsec, tpos) in tgt_index.items():
        ssec, spos = src_index[beta_hat + (0,)]
        if ssec != tsec:
            raise MFError("exclusion projection: sector bookkeeping broken")
        row_map[ssec][spos] = tpos
    return SemiStep(big.mf(), reduced.mf(), row_map, {x: s})


def _cap_semistep(big: KoszulMatrix, m) -> tuple:
    """Trace on the last row (a one-mark circle at m); an odd step."""
    reduced = KoszulMatrix(
        big.rows[:-1], big.qshift, big.parity, big.variables - {edge(m)}
    )
    src_index = big.string_index()
    tgt_index = reduced.string_index()
    row_map = {0: {}, 1: {}}
    for beta_hat, (tsec, tpos) in tgt_index.items():
        ssec, spos = src_index[beta_hat + (1,)]
        if ssec != (tsec + 1) % 2:
            raise MFError("cap: sector bookkeeping broken")
        row_map[ssec][spos] = tpos
    return reduced, SemiStep(
        big.mf(), reduced.mf(), row_map, {}, eps_var=edge(m), parity=1
    )


# -- the evaluator ---------------------------------------------------------------


def _shapes_equal(m, n):
    return (
        m.basis0 == n.basis0
        and m.basis1 == n.basis1
        and m.d0 == n.d0
        and m.d1 == n.d1
    )


class HatEvaluator:
    """Evaluate a foam term into a chain of steps between factorizations."""

    def __init__(self, term: FoamTerm):
        self.term = term
        self.web = term.source
        self.pairing = tuple(term.source.plus_vertices())
        self.wf = self._presentation()
        self.source_mf = self.wf.mf()
        self.chain = []
        for st in term.steps:
            getattr(self, "_step_" + st.kind)(*st.data)

    # -- presentation helpers ---------------------------------------------------

    def _zeta(self):
        return tuple(zip(self.pairing, self.web.minus_vertices()))

    def _presentation(self) -> WebFactorization:
        return self._presentation_for(self.web, self.pairing)

    @staticmethod
    def _presentation_for(web, pairing) -> WebFactorization:
        zeta = tuple(zip(pairing, web.minus_vertices())) if web.vertices else None
        wf = web_factorization(web, zeta)
        norm = normalization_parity(web_factorization(web))
        if norm:
            wf = WebFactorization(
                wf.web, wf.koszul.shift_parity(norm), wf.labels, wf.identification
            )
        return wf

    def _push(self, step):
        self.chain.append(step)

    def _renormalize(self, step, koszul, new_web):
        """Re-declare the step target so its parity bookkeeping matches the
        normalized presentation of the new web (same matrices, <1>-rewrap)."""
        base = web_factorization(new_web)
        needed = (base.koszul.parity + normalization_parity(base)) % 2
        delta = int((needed - koszul.parity) % 2)
        if not delta:
            return step, koszul
        koszul2 = koszul.shift_parity(1)
        if isinstance(step, SemiStep):
            step2 = SemiStep(
                step.source,
                koszul2.mf(),
                step.row_map,
                step.subs,
                step.eps_var,
                (step.parity + 1) % 2,
            )
        else:
            step2 = MFHom(
                step.source,
                koszul2.mf(),
                step.f0,
                step.f1,
                (step.parity + 1) % 2,
                step.qdeg,
            )
        return step2, koszul2

    def _reorder_labels(self, desired):
        cur = list(self.wf.labels)
        koszul = self.wf.koszul
        desired = list(desired)
        if cur == desired:
            return
        for pos_target in range(len(desired)):
            lab = desired[pos_target]
            pos = cur.index(lab)
            while pos > pos_target:
                koszul, u = swap_rows(koszul, pos - 1)
                self._push(u)
                cur[pos - 1], cur[pos] = cur[pos], cur[pos - 1]
                pos -= 1
        self.wf = WebFactorization(self.wf.web, koszul, tuple(cur), None)

    def _sync(self, new_web, new_pairing, koszul, labels):
        """Adopt the canonical presentation, matching rows by content."""
        self.web = new_web
        self.pairing = tuple(new_pairing)
        self.wf = WebFactorization(new_web, koszul, tuple(labels), None)
        target = self._presentation()
        perm_labels = []
        used = set()
        for row in target.koszul.rows:
            for idx, lab in enumerate(self.wf.labels):
                if idx in used:
                    continue
                if self.wf.koszul.rows[idx] == row:
                    perm_labels.append(lab)
                    used.add(idx)
                    break
            else:
                raise FoamError("presentation rows do not match the canonical form")
        self._reorder_labels(perm_labels)
        if list(self.wf.koszul.rows) != list(target.koszul.rows):
            raise FoamError("canonical presentation mismatch")
        if (
            self.wf.koszul.qshift != target.koszul.qshift
            or self.wf.koszul.parity != target.koszul.parity
        ):
            raise FoamError("shift bookkeeping mismatch")
        self.wf = target

    def _extend(self, suffix_src: KoszulMatrix, suffix_tgt: KoszulMatrix,
                local: MFHom):
        """Extend a local map on the trailing rows by the identity.

        The big differential restricted to the trailing slots carries exactly
        the standalone suffix signs, and prefix terms cross an odd local map
        with the sign demanded by the anticommutation rule, so the extension
        needs no extra signs.  Returns (step hom, next Koszul matrix).
        """
        cur = self.wf.koszul
        n = suffix_src.nrows
        prefix_rows = cur.rows[: cur.nrows - n]
        if tuple(cur.rows[cur.nrows - n:]) != tuple(suffix_src.rows):
            raise FoamError("trailing rows do not match the local map source")
        next_koszul = KoszulMatrix(
            prefix_rows + suffix_tgt.rows,
            cur.qshift - suffix_src.qshift + suffix_tgt.qshift,
            cur.parity - suffix_src.parity + suffix_tgt.parity,
            cur.variables | suffix_tgt.variables,
        )
        src_index = cur.string_index()
        tgt_index = next_koszul.string_index()
        suf_src_strings = {0: suffix_src.strings(0), 1: suffix_src.strings(1)}
        suf_src_index = suffix_src.string_index()
        suf_tgt_strings = {0: suffix_tgt.strings(0), 1: suffix_tgt.strings(1)}
        parity = local.parity % 2
        mats = {0: {}, 1: {}}
        for beta, (sector, pos) in src_index.items():
            beta_pre, beta_suf = beta[: len(prefix_rows)], beta[len(prefix_rows):]
            ssec, spos = suf_src_index[beta_suf]
            comp = local.f0 if ssec == 0 else local.f1
            out_sec = (ssec + parity) % 2
            for (ti, sj), coeff in comp.entries.items():
                if sj != spos:
                    continue
                beta_out = beta_pre + suf_tgt_strings[out_sec][ti]
                tsec, tpos = tgt_index[beta_out]
                if tsec != (sector + parity) % 2:
                    raise FoamError("extension parity bookkeeping broken")
                key = (tpos, pos)
                prev = mats[sector].get(key, ZERO)
                val = prev + coeff
                if val:
                    mats[sector][key] = val
                else:
                    mats[sector].pop(key, None)
        big_src, big_tgt = cur.mf(), next_koszul.mf()
        r0 = big_tgt.rank0 if parity == 0 else big_tgt.rank1
        r1 = big_tgt.rank1 if parity == 0 else big_tgt.rank0
        f0 = PolyMatrix(r0, big_src.rank0, mats[0])
        f1 = PolyMatrix(r1, big_src.rank1, mats[1])
        step = MFHom(big_src, big_tgt, f0, f1, parity, local.qdeg)
        return step, next_koszul

    # -- steps -------------------------------------------------------------------

    def _step_cup(self, m):
        circle = circle_koszul(m)
        unit = KoszulMatrix([], 0, 0, frozenset())
        iota = MFHom(
            unit.mf(),
            circle.mf(),
            PolyMatrix.from_rows([[1]]),
            PolyMatrix.zeros(1, 0),
            1,
            -2,
        )
        suffix_src = KoszulMatrix([], 0, 0, frozenset())
        step, koszul = self._extend(suffix_src, circle, iota)
        new_web = web_after_step(self.web, FoamStep("cup", (m,)))
        step, koszul = self._renormalize(step, koszul, new_web)
        self._push(step)
        self._sync(
            new_web, self.pairing, koszul, self.wf.labels + (("arc", (m, m)),)
        )

    def _step_cap(self, m):
        lab = ("arc", (m, m))
        self._reorder_labels([l for l in self.wf.labels if l != lab] + [lab])
        reduced, step = _cap_semistep(self.wf.koszul, m)
        new_web = web_after_step(self.web, FoamStep("cap", (m,)))
        step, reduced = self._renormalize(step, reduced, new_web)
        self._push(step)
        self._sync(new_web, self.pairing, reduced, self.wf.labels[:-1])

    def _step_dot(self, m):
        self._push(multiplication_hom(self.wf.koszul.mf(), X(m)))

    def _mark_exclusion(self, big: KoszulMatrix, u, m):
        """Witnessed exclusion of x_m using the trailing arc row (u, m)."""
        return _exclusion_steps(big, big.nrows - 1, "b", edge(m), witness=True)

    def _step_mark(self, u, m):
        new_web = web_after_step(self.web, FoamStep("mark", (u, m)))
        new_pairing = self._pairing_map(new_web, {u: m})
        target = self._presentation_for(new_web, new_pairing)
        arcl = ("arc", (u, m))
        order = [l for l in target.labels if l != arcl] + [arcl]
        perm = [target.labels.index(l) for l in order]
        big = KoszulMatrix(
            tuple(target.koszul.rows[i] for i in perm),
            target.koszul.qshift,
            target.koszul.parity,
            target.koszul.variables,
        )
        steps = self._mark_exclusion(big, u, m)
        section = None
        for st in steps:
            h = st.section()
            section = h if section is None else section @ h
        reduced = steps[-1].target
        # align the current presentation with the reduced rows
        perm_labels = []
        used = set()
        for row in reduced.rows:
            for idx, lab in enumerate(self.wf.labels):
                if idx in used:
                    continue
                if self.wf.koszul.rows[idx] == row:
                    perm_labels.append(lab)
                    used.add(idx)
                    break
            else:
                raise FoamError("mark: rows do not align")
        self._reorder_labels(perm_labels)
        self._push(section)
        self._sync(new_web, new_pairing, big, tuple(order))

    def _step_unmark(self, m):
        up = next(a for a in self.web.arcs if a[1] == m and a[0] != m)
        u = up[0]
        new_web = web_after_step(self.web, FoamStep("unmark", (m,)))
        new_pairing = self._pairing_map(new_web, {m: u})
        arcl = ("arc", (u, m))
        self._reorder_labels([l for l in self.wf.labels if l != arcl] + [arcl])
        big = self.wf.koszul
        steps = self._mark_exclusion(big, u, m)
        reduced = steps[-1].target
        for st in steps:
            if isinstance(st, _IsoStep):
                self._push(st.forward)
            else:
                self._push(
                    _exclusion_semistep(st.excl.src, st.excl.reduced, st.excl.x, st.excl.s)
                )
        labels = tuple(l for l in self.wf.labels if l != arcl)
        self._sync(new_web, new_pairing, reduced, labels)

    def _pairing_map(self, new_web, replace):
        """Transport the pairing through a renaming of minus-vertex marks."""

        def renamed(ms):
            return tuple(sorted(replace.get(x, x) for x in ms))

        old_minus = [self.web.vertices[v] for v in self.web.minus_vertices()]
        partners = {
            renamed(ms): self.web.vertices[p][1]
            for (s, ms), p in zip(old_minus, self.pairing)
        }
        plus = new_web.plus_vertices()
        out = []
        for mv in new_web.minus_vertices():
            key = tuple(sorted(new_web.vertices[mv][1]))
            pm = partners[key]
            out.append(next(p for p in plus if new_web.vertices[p][1] == pm))
        return tuple(out)

    def _step_zip(self, ki, lj, r):
        (k_, i_), (l_, j_) = ki, lj
        lab1, lab2 = ("arc", (k_, i_)), ("arc", (l_, j_))
        order = [l for l in self.wf.labels if l not in (lab1, lab2)]
        self._reorder_labels(order + [lab1, lab2])
        suffix = oriented_smoothing_koszul(i_, j_, k_, l_)
        ch = double_edge_chain(i_, j_, k_, l_, r)
        local = ch.section() @ chi0_hom(i_, j_, k_, l_)
        step, koszul = self._extend(suffix, ch.start, local)
        new_web = web_after_step(self.web, FoamStep("zip", (ki, lj, r)))
        step, koszul = self._renormalize(step, koszul, new_web)
        self._push(step)
        slot = self._minus_slot(new_web, {k_, l_, r})
        labels = tuple(order) + tuple(("pair", slot, lvl) for lvl in (1, 2, 3))
        pairing = self._pairing_insert(new_web, slot, {i_, j_, r})
        self._sync(new_web, pairing, koszul, labels)

    @staticmethod
    def _minus_slot(web, minus_marks):
        for slot, mv in enumerate(web.minus_vertices()):
            if set(web.vertices[mv][1]) == set(minus_marks):
                return slot
        raise FoamError("minus vertex not found")

    def _pairing_insert(self, new_web, slot, plus_marks):
        plus = new_web.plus_vertices()
        new_plus = next(
            p for p in plus if set(new_web.vertices[p][1]) == set(plus_marks)
        )
        old_minus = [self.web.vertices[v] for v in self.web.minus_vertices()]
        partners = {
            ms: self.web.vertices[p][1] for (s, ms), p in zip(old_minus, self.pairing)
        }
        out = []
        for t, mv in enumerate(new_web.minus_vertices()):
            if t == slot:
                out.append(new_plus)
                continue
            pm = partners[new_web.vertices[mv][1]]
            out.append(next(p for p in plus if new_web.vertices[p][1] == pm))
        return tuple(out)

    def _step_unzip(self, r, ki, lj):
        (k_, i_), (l_, j_) = ki, lj
        web = self.web
        plus_idx = next(
            p for p in web.plus_vertices() if set(web.vertices[p][1]) == {i_, j_, r}
        )
        minus_slot = self._minus_slot(web, {k_, l_, r})
        if self.pairing[minus_slot] != plus_idx:
            want = list(self.pairing)
            want[want.index(plus_idx)], want[minus_slot] = (
                want[minus_slot],
                plus_idx,
            )
            self._transport_to(tuple(want))
        labs = [("pair", minus_slot, lvl) for lvl in (1, 2, 3)]
        order = [l for l in self.wf.labels if l not in labs]
        self._reorder_labels(order + labs)
        ch = double_edge_chain(i_, j_, k_, l_, r)
        suffix = ch.start
        koszul = self.wf.koszul
        labels = self.wf.labels
        for st in ch.steps:
            if isinstance(st, _IsoStep):
                step, koszul = self._extend(suffix, st.target, st.forward)
                self._push(step)
                suffix = st.target
                self.wf = WebFactorization(self.web, koszul, labels, None)
            else:
                big = koszul
                nprefix = big.nrows - suffix.nrows
                reduced_rows = tuple(
                    rr.substituted({st.excl.x: st.excl.s}) for rr in big.rows[:nprefix]
                ) + st.excl.reduced.rows
                reduced = KoszulMatrix(
                    reduced_rows,
                    big.qshift,
                    big.parity,
                    (big.variables - {st.excl.x}) | st.excl.s.variables(),
                )
                self._push(_exclusion_semistep(big, reduced, st.excl.x, st.excl.s))
                koszul = reduced
                suffix = st.excl.reduced
                labels = labels[:-1]
                self.wf = WebFactorization(self.web, koszul, labels, None)
        step, koszul = self._extend(suffix, oriented_smoothing_koszul(i_, j_, k_, l_),
                                    chi1_hom(i_, j_, k_, l_))
        new_web = web_after_step(self.web, FoamStep("unzip", (r, ki, lj)))
        step, koszul = self._renormalize(step, koszul, new_web)
        self._push(step)
        labels = tuple(order) + (("arc", (k_, i_)), ("arc", (l_, j_)))
        pairing = self._pairing_drop(new_web, minus_slot)
        self._sync(new_web, pairing, koszul, labels)

    def _pairing_drop(self, new_web, dropped_slot):
        old_minus = self.web.minus_vertices()
        keep = {}
        for slot, mv in enumerate(old_minus):
            if slot == dropped_slot:
                continue
            keep[self.web.vertices[mv][1]] = self.web.vertices[self.pairing[slot]][1]
        plus = new_web.plus_vertices()
        out = []
        for mv in new_web.minus_vertices():
            pm = keep[new_web.vertices[mv][1]]
            out.append(next(p for p in plus if new_web.vertices[p][1] == pm))
        return tuple(out)

    def _step_saddle(self, a1, a2):
        (s1, d1), (s2, d2) = tuple(a1), tuple(a2)
        lab1, lab2 = ("arc", (s1, d1)), ("arc", (s2, d2))
        order = [l for l in self.wf.labels if l not in (lab1, lab2)]
        self._reorder_labels(order + [lab1, lab2])
        suffix = KoszulMatrix(
            [arc_row(s1, d1), arc_row(s2, d2)],
            variables=_base_vars({s1, d1, s2, d2}),
        )
        tgt_suffix = KoszulMatrix(
            [arc_row(s2, d1), arc_row(s1, d2)],
            variables=_base_vars({s1, d1, s2, d2}),
        )
        step, koszul = self._extend(suffix, tgt_suffix, saddle_hom(d1, s2, s1, d2))
        new_web = web_after_step(self.web, FoamStep("saddle", (a1, a2)))
        step, koszul = self._renormalize(step, koszul, new_web)
        self._push(step)
        labels = tuple(order) + (("arc", (s2, d1)), ("arc", (s1, d2)))
        self._sync(new_web, self.pairing, koszul, labels)

    # -- identification transport -------------------------------------------------

    def _swap_reduce(self, record=True):
        """Reduce the current presentation to the swap-ready form.

        Excludes each pair's cubic row (in pair order) and reorders the rows
        to [arcs, linear rows, quadratic rows].  When ``record`` is set the
        forward steps are pushed onto the chain; the reduced matrix and the
        quadratic-block offset are returned.
        """
        npairs = len(self.pairing)
        # order: arcs, lin rows by (+)-vertex, quad rows by (-)-slot, cubics
        arcs = [l for l in self.wf.labels if l[0] == "arc"]
        lins = [
            ("pair", t, 1)
            for t in sorted(range(npairs), key=lambda u: self.pairing[u])
        ]
        quads = [("pair", t, 2) for t in range(npairs)]
        cubes = [("pair", t, 3) for t in range(npairs)]
        self._reorder_labels(arcs + lins + quads + cubes)
        k = self.wf.koszul
        steps_acc = []
        wvars = k.potential().variables()
        for t in range(npairs):
            # the first remaining cubic row sits right after the quads
            ridx = len(arcs) + 2 * npairs
            entry = k.rows[ridx].a
            xv = None
            for cand in sorted(entry.variables(), key=lambda v: v.sort_key()):
                if cand.kind != "x" or cand in wvars:
                    continue
                coeffs = entry.coeffs_in(cand)
                if 1 in coeffs and max(coeffs) == 1:
                    try:
                        c = coeffs[1].as_rational()
                    except Exception:
                        continue
                    if c:
                        xv = cand
                        break
            if xv is None:
                raise FoamError("no excludable mark in a cubic row")
            steps = _exclusion_steps(k, ridx, "a", xv, witness=True)
            for st in steps:
                steps_acc.append(st)
                if record:
                    if isinstance(st, _IsoStep):
                        self._push(st.forward)
                    else:
                        self._push(
                            _exclusion_semistep(
                                st.excl.src, st.excl.reduced, st.excl.x, st.excl.s
                            )
                        )
            k = steps[-1].target
        return k, len(arcs) + npairs, steps_acc

    def _transport_to(self, new_pairing):
        if tuple(new_pairing) == tuple(self.pairing):
            return
        from .web import SwapReady

        reduced, quad_offset, _ = self._swap_reduce(record=True)
        cur = SwapReady(self.web, tuple(self.pairing), reduced, quad_offset)
        want = list(new_pairing)
        current = list(self.pairing)
        swaps = 0
        while current != want:
            for t in range(len(current) - 1):
                if current[t] != want[t]:
                    s = current.index(want[t], t + 1)
                    cur2, step = swap_iso(cur, s - 1)
                    # rewrap onto the unshifted target with odd hom parity
                    unshifted = KoszulMatrix(
                        cur2.koszul.rows,
                        cur2.koszul.qshift,
                        cur.koszul.parity,
                        cur2.koszul.variables,
                    )
                    step = MFHom(
                        step.source, unshifted.mf(), step.f0, step.f1, 1, step.qdeg
                    )
                    cur = SwapReady(
                        cur2.web, cur2.pairing, unshifted, cur2.quad_offset
                    )
                    self._push(step)
                    current[s - 1], current[s] = current[s], current[s - 1]
                    swaps += 1
                    break
        self.pairing = tuple(new_pairing)
        probe = HatEvaluator.__new__(HatEvaluator)
        probe.web = self.web
        probe.pairing = tuple(new_pairing)
        probe.wf = probe._presentation()
        probe.chain = []
        reduced2, q2, steps2 = probe._swap_reduce(record=False)
        if list(reduced2.rows) != list(cur.koszul.rows):
            raise FoamError("swap transport endpoints do not match")
        section = None
        for st in steps2:
            h = st.section() if isinstance(st, _IsoStep) else st.excl.psi
            section = h if section is None else section @ h
        if section is not None:
            self._push(section)
        # probe.wf holds the reordered canonical presentation; restore the
        # canonical row order
        self.wf = probe.wf
        target = self._presentation()
        perm_labels = []
        used = set()
        for row in target.koszul.rows:
            for idx, lab in enumerate(self.wf.labels):
                if idx in used:
                    continue
                if self.wf.koszul.rows[idx] == row:
                    perm_labels.append(lab)
                    used.add(idx)
                    break
            else:
                raise FoamError("transport: canonical rows missing")
        self._reorder_labels(perm_labels)
        self.wf = target

    # -- outputs -------------------------------------------------------------------

    def consumed_source_variable(self) -> bool:
        src_vars = {edge(m) for m in self.term.source.marks}
        for st in self.chain:
            if isinstance(st, SemiStep):
                if st.eps_var in src_vars or (set(st.subs) & src_vars):
                    return True
        return False

    def as_hom(self) -> MFHom:
        """Fold the chain into one matrix homomorphism.

        Exact whenever no step consumed a variable of the source web; the
        evaluator raises otherwise, since the matrices would only be
        semilinear.
        """
        if self.consumed_source_variable():
            raise FoamError(
                "the movie consumes a source variable; use slice semantics"
            )
        return self._fold()

    def _fold(self) -> MFHom:
        out = identity_hom(self.source_mf)
        for st in self.chain:
            if isinstance(st, SemiStep):
                out = st.compose_into(out)
            else:
                out = st @ out
        return out

    def slice_matrix(self, sector: int, degree: int):
        """Apply the chain to the slice basis of the source factorization.

        Returns (columns, target sector, target degree); exact Q-linear
        algebra regardless of semilinear steps.
        """
        cols = None
        src = self.source_mf
        cur_sector, cur_degree = sector, degree
        n = len(hml.slice_basis(src, sector, degree))
        cols = [
            {i: Fraction(1)} for i in range(n)
        ]
        cur_mf = src
        for st in self.chain:
            if isinstance(st, SemiStep):
                step_cols = _semistep_slice_cols(st, cur_sector, cur_degree)
                tgt_sector, tgt_degree = (cur_sector + st.parity) % 2, cur_degree
                tgt_mf = st.target
            else:
                step_cols = _mfhom_slice_cols(st, cur_sector, cur_degree)
                tgt_sector = (cur_sector + st.parity) % 2
                tgt_degree = cur_degree + st.qdeg
                tgt_mf = st.target
            new_cols = []
            for col in cols:
                acc = {}
                for j, c in col.items():
                    for r, v in step_cols[j].items():
                        s = acc.get(r, Fraction(0)) + c * v
                        if s:
                            acc[r] = s
                        else:
                            acc.pop(r, None)
                new_cols.append(acc)
            cols = new_cols
            cur_sector, cur_degree, cur_mf = tgt_sector, tgt_degree, tgt_mf
        return cols, cur_sector, cur_degree


def _mfhom_slice_cols(f: MFHom, sector, degree):
    src_basis = hml.slice_basis(f.source, sector, degree)
    tgt_sector = (sector + f.parity) % 2
    tgt_basis = hml.slice_basis(f.target, tgt_sector, degree + f.qdeg)
    tgt_index = {bm: i for i, bm in enumerate(tgt_basis)}
    comp = f.f0 if sector == 0 else f.f1
    from .mf.homology import _apply_matrix_slice

    return _apply_matrix_slice(comp, src_basis, tgt_index)


def _semistep_slice_cols(st: SemiStep, sector, degree):
    src_basis = hml.slice_basis(st.source, sector, degree)
    tgt_basis = hml.slice_basis(st.target, (sector + st.parity) % 2, degree)
    tgt_index = {bm: i for i, bm in enumerate(tgt_basis)}
    cols = []
    for (g, mono) in src_basis:
        new_g = st.row_map[sector].get(g)
        col = {}
        if new_g is not None:
            p = st.consume(Polynomial({mono: Fraction(1)}))
            for m2, c2 in p.terms.items():
                pos = tgt_index.get((new_g, m2))
                if pos is None:
                    raise MFError("semilinear slice left the target slice")
                col[pos] = col.get(pos, Fraction(0)) + c2
        cols.append(col)
    return cols


def hat(term: FoamTerm) -> MFHom:
    """The homomorphism of identified web factorizations defined by a movie."""
    return HatEvaluator(term).as_hom()


def evaluate_closed(term: FoamTerm) -> Polynomial:
    """Evaluate a closed foam term to its scalar in Q[a, b, c]."""
    if not term.is_closed():
        raise FoamError("evaluation needs a closed term (empty source and target)")
    hom = HatEvaluator(term).as_hom()
    for mat in (hom.f0, hom.f1):
        if mat.nrows == 1 and mat.ncols == 1:
            return mat[(0, 0)]
    raise FoamError("closed evaluation did not produce a scalar")


# -- standard foams and the relation catalog -------------------------------------


ARC_WEB = Web((1, 2), ((1, 2),), ())
DIGON_WEB = Web((1, 2, 3, 4), (), ((1, (2, 3, 4)), (-1, (1, 3, 4))))
THETA_WEB = Web((1, 2, 3), (), ((1, (1, 2, 3)), (-1, (1, 2, 3))))
VEDGES_WEB = Web((1, 2, 3, 4), ((1, 2), (3, 4)), ())
HEDGES_WEB = Web((1, 2, 3, 4), ((1, 4), (3, 2)), ())
CIRCLE_WEB = Web((1,), ((1, 1),), ())


def sphere_foam(dots: int) -> FoamTerm:
    t = empty_term().then("cup", 1)
    for _ in range(dots):
        t = t.then("dot", 1)
    return t.then("cap", 1)


def theta_foam(d1: int, d2: int, d3: int) -> FoamTerm:
    """Closed theta foam with d1, d2, d3 dots on its three facets.

    Two circles are born, zipped together, and the resulting theta web is
    unzipped and capped again; facet 1 carries the first circle, facet 2 the
    second, facet 3 the membrane between the singular arcs.
    """
    t = (
        empty_term()
        .then("cup", 1).then("mark", 1, 4)
        .then("cup", 2).then("mark", 2, 5)
        .then("zip", (4, 1), (5, 2), 3)
    )
    for _ in range(d1):
        t = t.then("dot", 1)
    for _ in range(d2):
        t = t.then("dot", 2)
    for _ in range(d3):
        t = t.then("dot", 3)
    return (
        t.then("unzip", 3, (4, 1), (5, 2))
        .then("unmark", 4).then("cap", 1)
        .then("unmark", 5).then("cap", 2)
    )


def _digon_alpha(t: FoamTerm) -> FoamTerm:
    return (
        t.then("cup", 3).then("mark", 3, 5)
        .then("zip", (1, 2), (5, 3), 4)
        .then("unmark", 5)
    )


def _digon_beta(t: FoamTerm) -> FoamTerm:
    return (
        t.then("mark", 3, 5)
        .then("unzip", 4, (1, 2), (5, 3))
        .then("unmark", 5).then("cap", 3)
    )


def digon_iso():
    """The four digon maps with beta_j alpha_i = delta_ij exactly.

    alpha_0 = 2 alpha, alpha_1 = 2 m(-x4) alpha (the representative homotopic
    to 2 alpha m(x1 + x3 - a)), beta_0 = -beta m(x3), beta_1 = -beta.
    Because beta consumes the digon variable x3, the four composites are
    returned as movies evaluated end to end.
    """
    alpha = hat(_digon_alpha(FoamTerm(ARC_WEB)))
    alpha0 = alpha.scale(2)
    dig_mf = alpha.target
    alpha1 = (multiplication_hom(dig_mf, X(4)) @ alpha).scale(-2)
    return alpha0, alpha1


def digon_pairing(i: int, j: int) -> MFHom:
    """The composite beta_j alpha_i as a single evaluated movie."""
    t = FoamTerm(ARC_WEB)
    scale = 1
    if i == 1:
        scale *= -2  # alpha_1 = 2 m(-x4) alpha: dot placed after the zip
    else:
        scale *= 2
    t = _digon_alpha(t)
    if i == 1:
        t = t.then("dot", 4)
    if j == 0:
        t = t.then("dot", 3)
        scale *= -1
    else:
        scale *= -1
    t = _digon_beta(t)
    return hat(t).scale(scale)


def digon_identity_endo() -> MFHom:
    """alpha_0 beta_0 + alpha_1 beta_1 as an endomorphism of the digon."""
    def build(i):
        t = FoamTerm(DIGON_WEB)
        scale = 1
        if i == 0:
            t = t.then("dot", 3)
            scale *= -1
        else:
            scale *= -1
        t = _digon_beta(t)
        t = _digon_alpha(t)
        if i == 1:
            t = t.then("dot", 4)
            scale *= -2
        else:
            scale *= 2
        return hat(t).scale(scale)

    return build(0) + build(1)


def _square_phi0(t: FoamTerm) -> FoamTerm:
    return (
        t.then("cup", 5).then("mark", 5, 6)
        .then("zip", (1, 2), (5, 6), 7)
        .then("zip", (3, 4), (6, 5), 8)
    )


def _square_psi0(t: FoamTerm) -> FoamTerm:
    return (
        t.then("unzip", 8, (3, 4), (6, 5))
        .then("unzip", 7, (1, 2), (5, 6))
        .then("unmark", 6).then("cap", 5)
    )


def _square_phi1(t: FoamTerm) -> FoamTerm:
    return (
        t.then("cup", 7).then("mark", 7, 8)
        .then("zip", (1, 4), (7, 8), 5)
        .then("zip", (3, 2), (8, 7), 6)
    )


def _square_psi1(t: FoamTerm) -> FoamTerm:
    return (
        t.then("unzip", 6, (3, 2), (8, 7))
        .then("unzip", 5, (1, 4), (7, 8))
        .then("unmark", 8).then("cap", 7)
    )


SQUARE_WEB = _square_phi0(FoamTerm(VEDGES_WEB)).target


def square_pairing(i: int, j: int) -> MFHom:
    """The composite psi_i phi_j of the square decomposition maps."""
    src = VEDGES_WEB if j == 0 else HEDGES_WEB
    t = FoamTerm(src)
    t = _square_phi0(t) if j == 0 else _square_phi1(t)
    t = _square_psi0(t) if i == 0 else _square_psi1(t)
    return hat(t).scale(-1)


def square_identity_endo() -> MFHom:
    """phi_0 psi_0 + phi_1 psi_1 as an endomorphism of the square."""
    def build(i):
        t = FoamTerm(SQUARE_WEB)
        t = _square_psi0(t) if i == 0 else _square_psi1(t)
        t = _square_phi0(t) if i == 0 else _square_phi1(t)
        return hat(t).scale(-1)

    return build(0) + build(1)
