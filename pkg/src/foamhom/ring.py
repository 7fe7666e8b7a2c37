"""Exact arithmetic for q-graded multivariate polynomials over Q.

The ground ring everywhere is Q[a, b, c][edge and vertex variables], graded by
even q-degrees:

    q(a) = 2, q(b) = 4, q(c) = 6, q(x_i) = 2, q(v_{j,k}) = 2k  (k = 1, 2, 3).

Coefficients are exact rationals; there is no floating point anywhere.
Polynomials are immutable and hashable, so they can safely be shared between
matrices and cached.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
import re

Rational = Fraction


class RingError(ValueError):
    """Raised on malformed ring input (degree mismatches, inexact division)."""


_KIND_ORDER = {"a": 0, "b": 1, "c": 2, "x": 3, "v": 4}
_KIND_QDEG = {"a": 2, "b": 4, "c": 6, "x": 2}


@dataclass(frozen=True, order=False)
class Variable:
    """A structured variable key: parameter, edge mark or vertex variable.

    Identity is by structured key, never by display name, so renaming marks
    cannot alias.  ``index`` is the edge index (kind 'x') or vertex id
    (kind 'v'); ``level`` is 1, 2 or 3 for vertex variables and 0 otherwise.
    """

    kind: str
    index: int = 0
    level: int = 0

    def __post_init__(self):
        if self.kind not in _KIND_ORDER:
            raise RingError(f"unknown variable kind {self.kind!r}")
        if self.kind == "x" and self.index <= 0:
            raise RingError("edge variables need a positive index")
        if self.kind == "v" and self.level not in (1, 2, 3):
            raise RingError("vertex variables carry level 1, 2 or 3")

    @property
    def qdegree(self) -> int:
        if self.kind == "v":
            return 2 * self.level
        return _KIND_QDEG[self.kind]

    def sort_key(self):
        return (_KIND_ORDER[self.kind], self.index, self.level)

    def __str__(self) -> str:
        if self.kind in ("a", "b", "c"):
            return self.kind
        if self.kind == "x":
            return f"x{self.index}"
        return f"v{self.index}_{self.level}"

    def __repr__(self) -> str:
        return f"Variable({str(self)})"


PARAM_A = Variable("a")
PARAM_B = Variable("b")
PARAM_C = Variable("c")


def edge(i: int) -> Variable:
    return Variable("x", i)


def vertex_var(vertex_id: int, level: int) -> Variable:
    return Variable("v", vertex_id, level)


# A monomial is a tuple of (Variable, exponent) pairs, sorted by sort_key,
# with all exponents positive.  The empty tuple is the monomial 1.
Monomial = tuple


def _mono_mul(m1: Monomial, m2: Monomial) -> Monomial:
    if not m1:
        return m2
    if not m2:
        return m1
    acc = dict(m1)
    for v, e in m2:
        acc[v] = acc.get(v, 0) + e
    return tuple(sorted(acc.items(), key=lambda p: p[0].sort_key()))


def _mono_qdeg(m: Monomial) -> int:
    return sum(v.qdegree * e for v, e in m)


class Polynomial:
    """Sparse multivariate polynomial with exact rational coefficients."""

    __slots__ = ("terms", "_hash")

    def __init__(self, terms=None):
        # terms: dict Monomial -> Fraction, zero coefficients dropped.
        clean = {}
        if terms:
            for m, c in terms.items():
                c = Fraction(c)
                if c:
                    clean[m] = c
        object.__setattr__(self, "terms", clean)
        object.__setattr__(self, "_hash", None)

    # -- constructors ------------------------------------------------------

    @staticmethod
    def zero() -> "Polynomial":
        return _ZERO

    @staticmethod
    def one() -> "Polynomial":
        return _ONE

    @staticmethod
    def const(c) -> "Polynomial":
        return Polynomial({(): Fraction(c)})

    @staticmethod
    def var(v: Variable, exp: int = 1) -> "Polynomial":
        return Polynomial({((v, exp),): Fraction(1)})

    # -- ring structure ----------------------------------------------------

    def __bool__(self) -> bool:
        return bool(self.terms)

    def __eq__(self, other) -> bool:
        if isinstance(other, (int, Fraction)):
            other = Polynomial.const(other)
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.terms == other.terms

    def __hash__(self):
        h = self._hash
        if h is None:
            h = hash(frozenset(self.terms.items()))
            object.__setattr__(self, "_hash", h)
        return h

    def __add__(self, other) -> "Polynomial":
        other = _coerce(other)
        if not self.terms:
            return other
        if not other.terms:
            return self
        acc = dict(self.terms)
        for m, c in other.terms.items():
            s = acc.get(m, 0) + c
            if s:
                acc[m] = s
            else:
                acc.pop(m, None)
        return _raw(acc)

    __radd__ = __add__

    def __neg__(self) -> "Polynomial":
        return _raw({m: -c for m, c in self.terms.items()})

    def __sub__(self, other) -> "Polynomial":
        return self + (-_coerce(other))

    def __rsub__(self, other) -> "Polynomial":
        return _coerce(other) + (-self)

    def __mul__(self, other) -> "Polynomial":
        if isinstance(other, (int, Fraction)):
            k = Fraction(other)
            if not k:
                return _ZERO
            return _raw({m: c * k for m, c in self.terms.items()})
        other = _coerce(other)
        if not self.terms or not other.terms:
            return _ZERO
        acc = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                m = _mono_mul(m1, m2)
                s = acc.get(m, 0) + c1 * c2
                if s:
                    acc[m] = s
                else:
                    acc.pop(m, None)
        return _raw(acc)

    __rmul__ = __mul__

    def __pow__(self, n: int) -> "Polynomial":
        if n < 0:
            raise RingError("negative powers are not polynomials")
        result = _ONE
        base = self
        while n:
            if n & 1:
                result = result * base
            base = base * base if n > 1 else base
            n >>= 1
        return result

    # -- grading -----------------------------------------------------------

    def qdegree(self):
        """The common q-degree of all terms, or None for the zero polynomial.

        Raises RingError if the polynomial is inhomogeneous; the zero
        polynomial is compatible with every degree.
        """
        degs = {_mono_qdeg(m) for m in self.terms}
        if not degs:
            return None
        if len(degs) > 1:
            raise RingError(f"inhomogeneous polynomial, degrees {sorted(degs)}")
        return degs.pop()

    def is_homogeneous(self, degree=None) -> bool:
        degs = {_mono_qdeg(m) for m in self.terms}
        if not degs:
            return True
        if len(degs) > 1:
            return False
        return degree is None or degs.pop() == degree

    def max_qdegree(self) -> int:
        return max((_mono_qdeg(m) for m in self.terms), default=0)

    def variables(self) -> set:
        out = set()
        for m in self.terms:
            for v, _ in m:
                out.add(v)
        return out

    def coefficient(self, m: Monomial) -> Fraction:
        return self.terms.get(m, Fraction(0))

    def constant_term(self) -> Fraction:
        return self.terms.get((), Fraction(0))

    def as_rational(self) -> Fraction:
        """The value of a constant polynomial; error if any variable appears."""
        if not self.terms:
            return Fraction(0)
        if set(self.terms) != {()}:
            raise RingError("polynomial is not constant")
        return self.terms[()]

    # -- substitution and division ------------------------------------------

    def substitute(self, bindings: dict) -> "Polynomial":
        """Simultaneous substitution of variables by polynomials.

        Each binding value must be q-homogeneous of the bound variable's
        q-degree (the zero polynomial is allowed for any variable); this keeps
        homogeneous inputs homogeneous.
        """
        for v, val in bindings.items():
            val = _coerce(val)
            if val and not val.is_homogeneous(v.qdegree):
                raise RingError(
                    f"binding for {v} must be homogeneous of degree {v.qdegree}"
                )
        relevant = set(bindings)
        out = _ZERO
        pow_cache = {}
        for m, c in self.terms.items():
            keep = []
            factor = None
            for v, e in m:
                if v in relevant:
                    key = (v, e)
                    p = pow_cache.get(key)
                    if p is None:
                        p = _coerce(bindings[v]) ** e
                        pow_cache[key] = p
                    factor = p if factor is None else factor * p
                else:
                    keep.append((v, e))
            term = Polynomial({tuple(keep): c})
            if factor is not None:
                term = term * factor
            out = out + term
        return out

    def coeffs_in(self, x: Variable) -> dict:
        """Split into {exponent of x: coefficient polynomial without x}."""
        out = {}
        for m, c in self.terms.items():
            k = 0
            rest = []
            for v, e in m:
                if v == x:
                    k = e
                else:
                    rest.append((v, e))
            d = out.setdefault(k, {})
            rest = tuple(rest)
            d[rest] = d.get(rest, 0) + c
        return {k: _raw({m: c for m, c in d.items() if c}) for k, d in out.items()}

    def div_linear(self, x: Variable, root: "Polynomial") -> "Polynomial":
        """Exact quotient by (x - root), where root does not involve x.

        Raises RingError when the division is not exact.
        """
        root = _coerce(root)
        if x in root.variables():
            raise RingError("root of the linear divisor may not involve x")
        coeffs = self.coeffs_in(x)
        if not coeffs:
            return _ZERO
        top = max(coeffs)
        q = {}
        carry = _ZERO
        for k in range(top, 0, -1):
            qk = coeffs.get(k, _ZERO) + carry
            q[k - 1] = qk
            carry = qk * root
        remainder = coeffs.get(0, _ZERO) + carry
        if remainder:
            raise RingError("division by linear factor is not exact")
        out = _ZERO
        for k, poly in q.items():
            out = out + poly * Polynomial.var(x, k) if k else out + poly
        return out

    # -- printing ------------------------------------------------------------

    def sorted_terms(self):
        """Terms in graded-lex order (total q-degree, then variable powers)."""

        def key(item):
            m, _ = item
            exps = tuple((-v.sort_key()[0], -v.sort_key()[1], -v.sort_key()[2], e)
                         for v, e in m)
            return (-_mono_qdeg(m), tuple(sorted((v.sort_key(), -e) for v, e in m)))

        return sorted(self.terms.items(), key=key)

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for m, c in self.sorted_terms():
            factors = []
            for v, e in m:
                factors.append(str(v) if e == 1 else f"{v}^{e}")
            if not factors:
                body = str(abs(c))
            elif abs(c) == 1:
                body = "*".join(factors)
            else:
                body = "*".join([str(abs(c))] + factors)
            sign = "-" if c < 0 else "+"
            parts.append((sign, body))
        first_sign, first_body = parts[0]
        out = ("-" if first_sign == "-" else "") + first_body
        for sign, body in parts[1:]:
            out += f" {sign} {body}"
        return out

    __repr__ = __str__


def _raw(terms: dict) -> Polynomial:
    p = Polynomial.__new__(Polynomial)
    object.__setattr__(p, "terms", terms)
    object.__setattr__(p, "_hash", None)
    return p


def _coerce(value) -> Polynomial:
    if isinstance(value, Polynomial):
        return value
    if isinstance(value, (int, Fraction)):
        return Polynomial.const(value)
    raise RingError(f"cannot coerce {value!r} to a polynomial")


_ZERO = Polynomial()
_ONE = Polynomial.const(1)

# Handy polynomial generators.
A = Polynomial.var(PARAM_A)
B = Polynomial.var(PARAM_B)
C = Polynomial.var(PARAM_C)


def X(i: int) -> Polynomial:
    return Polynomial.var(edge(i))


def V(vertex_id: int, level: int) -> Polynomial:
    return Polynomial.var(vertex_var(vertex_id, level))


def poly_add(p, q) -> Polynomial:
    return _coerce(p) + _coerce(q)


def poly_mul(p, q) -> Polynomial:
    return _coerce(p) * _coerce(q)


def substitute(p: Polynomial, bindings: dict) -> Polynomial:
    return _coerce(p).substitute(bindings)


def potential_p(x: Variable) -> Polynomial:
    """The sl3 potential p(x) = x^4 - (4a/3) x^3 - 2b x^2 - 4c x for an edge mark."""
    if x.kind != "x":
        raise RingError("the potential is defined on edge variables")
    xe = Polynomial.var  # brevity
    return (
        xe(x, 4)
        - Fraction(4, 3) * A * xe(x, 3)
        - 2 * B * xe(x, 2)
        - 4 * C * xe(x)
    )


def divided_difference(p: Polynomial, x: Variable, y: Variable) -> Polynomial:
    """Exact quotient (p - p[x -> y]) / (x - y).

    Built termwise from x^k - y^k = (x - y) * sum x^i y^(k-1-i), so the result
    is exact by construction.
    """
    if x == y:
        raise RingError("divided difference needs two distinct variables")
    out = {}
    for m, c in p.terms.items():
        k = 0
        rest = []
        for v, e in m:
            if v == x:
                k = e
            else:
                rest.append((v, e))
        rest = tuple(rest)
        for i in range(k):
            j = k - 1 - i
            extra = []
            if i:
                extra.append((x, i))
            if j:
                extra.append((y, j))
            mono = _mono_mul(rest, tuple(sorted(extra, key=lambda q: q[0].sort_key())))
            s = out.get(mono, 0) + c
            if s:
                out[mono] = s
            else:
                out.pop(mono, None)
    return _raw(out)


def pi_xy(x: Variable, y: Variable) -> Polynomial:
    """The arc potential quotient (p(x) - p(y)) / (x - y)."""
    return divided_difference(potential_p(x), x, y)


def elementary_symmetric(vars, k: int) -> Polynomial:
    """Elementary symmetric polynomial e_k of a sequence of three variables.

    The inputs may repeat (e.g. e_3(x, x, x) = x^3); each entry may also be a
    polynomial already.
    """
    vs = [v if isinstance(v, Polynomial) else Polynomial.var(v) for v in vars]
    if len(vs) != 3:
        raise RingError("elementary_symmetric expects exactly three entries")
    if k == 1:
        return vs[0] + vs[1] + vs[2]
    if k == 2:
        return vs[0] * vs[1] + vs[0] * vs[2] + vs[1] * vs[2]
    if k == 3:
        return vs[0] * vs[1] * vs[2]
    raise RingError("k must be 1, 2 or 3")


# -- canonical text format --------------------------------------------------

_VAR_RE = re.compile(r"^(a|b|c|x(\d+)|v(\d+)_([123]))$")
_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+(?:/\d+)?)|(?P<var>[abcxv][0-9_]*)|(?P<op>[-+*^()]))"
)


def parse_variable(tok: str) -> Variable:
    m = _VAR_RE.match(tok)
    if not m:
        raise RingError(f"bad variable token {tok!r}")
    if m.group(2) is not None:
        return edge(int(m.group(2)))
    if m.group(3) is not None:
        return vertex_var(int(m.group(3)), int(m.group(4)))
    return Variable(tok)


def parse_polynomial(text: str) -> Polynomial:
    """Parse the canonical rendering back to a polynomial.

    Grammar: sum of terms, each ``[coef][*]factor(*factor)*`` with factors
    ``var`` or ``var^exp``; coefficients are integers or fractions n/d.
    """
    text = text.strip()
    if text == "0":
        return Polynomial.zero()
    pos = 0
    result = Polynomial.zero()
    sign = 1
    pending = None  # current term accumulator
    n = len(text)

    def flush(term):
        nonlocal result
        if term is not None:
            result = result + term

    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise RingError(f"cannot parse polynomial near {text[pos:pos+12]!r}")
        pos = m.end()
        if m.group("op") in ("+", "-"):
            flush(pending)
            pending = None
            sign = -1 if m.group("op") == "-" else 1
            continue
        if m.group("op") == "*":
            continue
        if m.group("op") in ("(", ")", "^"):
            # '^' is consumed together with variables below; parens unsupported
            raise RingError("unexpected operator in canonical polynomial text")
        if m.group("num"):
            value = Fraction(m.group("num"))
            factor = Polynomial.const(value)
        else:
            var = parse_variable(m.group("var"))
            exp = 1
            m2 = _TOKEN_RE.match(text, pos)
            if m2 and m2.group("op") == "^":
                pos = m2.end()
                m3 = _TOKEN_RE.match(text, pos)
                if not m3 or not m3.group("num"):
                    raise RingError("missing exponent after '^'")
                exp = int(m3.group("num"))
                pos = m3.end()
            factor = Polynomial.var(var, exp)
        if pending is None:
            pending = Polynomial.const(sign) * factor
        else:
            pending = pending * factor
    flush(pending)
    return result
