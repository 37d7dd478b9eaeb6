"""
Exact-rational multivariate polynomials and zero-dimensional system solving.

Polynomials are sparse maps from exponent tuples to `fractions.Fraction`
coefficients. Groebner bases are computed with Buchberger's algorithm over
primitive integer polynomials (sugar selection, Gebauer-Moeller pair
update). Solutions are read from eigenvectors of multiplication matrices in
the quotient ring and polished with Newton's method against the input system.
"""
from dataclasses import dataclass, field
from fractions import Fraction
import heapq
import math
from itertools import combinations
import logging
import re
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from prtrack.config import SolverConfig


logger = logging.getLogger(__name__)

Exponent = Tuple[int, ...]
Scalar = Union[int, Fraction]


class PolySolveException(Exception):
    """An exception specific to polynomial algebra and system solving."""


class ZeroPolynomial(PolySolveException):
    """A nonzero polynomial was required."""


class NotZeroDimensional(PolySolveException):
    """The ideal has infinitely many solutions."""


class SolverDegeneracy(PolySolveException):
    """No separating multiplication matrix could be found."""


class ResourceLimit(PolySolveException):
    """A configured resource bound was exceeded."""


class PolynomialParseError(PolySolveException):
    """Polynomial text could not be parsed."""


# ---------------------------------------------------------------------------
# Monomials and orders
# ---------------------------------------------------------------------------

def mono_mul(a: Exponent, b: Exponent) -> Exponent:
    return tuple(x + y for x, y in zip(a, b))


def mono_div(a: Exponent, b: Exponent) -> Exponent:
    return tuple(x - y for x, y in zip(a, b))


def mono_divides(a: Exponent, b: Exponent) -> bool:
    """Return True if monomial `a` divides monomial `b`."""
    return all(x <= y for x, y in zip(a, b))


def mono_lcm(a: Exponent, b: Exponent) -> Exponent:
    return tuple(max(x, y) for x, y in zip(a, b))


@dataclass(frozen=True)
class MonomialOrder:
    """
    A monomial order: "lex" or "drl" (degree reverse lexicographic).

    Parameters
    ----------
    kind : str
        "lex" or "drl".
    precedence : tuple of int, optional
        Variable indices from the largest variable to the smallest. The
        default is (0, 1, ..., n-1), i.e. x1 > x2 > ... > xn.
    """

    kind: str = "drl"
    precedence: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        if self.kind not in ("lex", "drl"):
            raise ValueError(f"Unknown monomial order {self.kind!r}.")
        if self.precedence is not None:
            precedence = tuple(self.precedence)
            if sorted(precedence) != list(range(len(precedence))):
                raise ValueError("precedence must be a permutation.")
            object.__setattr__(self, "precedence", precedence)

    def key(self, exps: Exponent) -> Tuple[int, ...]:
        """Return a flat integer tuple that sorts like the order."""
        if self.precedence is not None:
            exps = tuple(exps[i] for i in self.precedence)
        if self.kind == "lex":
            return tuple(exps)
        return (sum(exps),) + tuple(-e for e in reversed(exps))

    def lt(self, a: Exponent, b: Exponent) -> bool:
        """Return True if a < b."""
        return self.key(a) < self.key(b)


DRL = MonomialOrder("drl")
LEX = MonomialOrder("lex")


# ---------------------------------------------------------------------------
# Polynomials
# ---------------------------------------------------------------------------

class MultiPoly:
    """
    A multivariate polynomial with exact rational coefficients.

    Parameters
    ----------
    terms : dict
        Maps exponent tuples of length `nvars` to coefficients. Zero
        coefficients are dropped.
    nvars : int
        Number of variables.
    """

    __slots__ = ("terms", "nvars", "_numeric")

    def __init__(self, terms: Dict[Exponent, Scalar], nvars: int):
        self.nvars = nvars
        self.terms: Dict[Exponent, Fraction] = {}
        for exps, coeff in terms.items():
            exps = tuple(exps)
            if len(exps) != nvars or any(e < 0 for e in exps):
                raise ValueError(f"Bad exponent vector {exps} for {nvars} variables.")
            coeff = Fraction(coeff)
            if coeff != 0:
                self.terms[exps] = coeff
        self._numeric = None

    @classmethod
    def _raw(cls, terms: Dict[Exponent, Fraction], nvars: int) -> "MultiPoly":
        poly = cls.__new__(cls)
        poly.terms = terms
        poly.nvars = nvars
        poly._numeric = None
        return poly

    @classmethod
    def constant(cls, value: Scalar, nvars: int) -> "MultiPoly":
        return cls({(0,) * nvars: value}, nvars)

    @classmethod
    def variable(cls, index: int, nvars: int) -> "MultiPoly":
        exps = [0] * nvars
        exps[index] = 1
        return cls({tuple(exps): 1}, nvars)

    def __repr__(self):
        return f"MultiPoly({format_poly(self)!r}, nvars={self.nvars})"

    def __str__(self):
        return format_poly(self)

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = MultiPoly.constant(other, self.nvars)
        if not isinstance(other, MultiPoly):
            return NotImplemented
        return self.nvars == other.nvars and self.terms == other.terms

    def __hash__(self):
        return hash((self.nvars, frozenset(self.terms.items())))

    def __bool__(self):
        return bool(self.terms)

    def __len__(self):
        return len(self.terms)

    @property
    def is_zero(self) -> bool:
        return not self.terms

    @property
    def degree(self) -> int:
        """Total degree; -1 for the zero polynomial."""
        return max((sum(e) for e in self.terms), default=-1)

    def _coerce(self, other) -> "MultiPoly":
        if isinstance(other, MultiPoly):
            if other.nvars != self.nvars:
                raise ValueError("Polynomials live in different rings.")
            return other
        if isinstance(other, (int, Fraction)):
            return MultiPoly.constant(other, self.nvars)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        terms = dict(self.terms)
        for exps, coeff in other.terms.items():
            value = terms.get(exps, 0) + coeff
            if value:
                terms[exps] = value
            else:
                terms.pop(exps, None)
        return MultiPoly._raw(terms, self.nvars)

    __radd__ = __add__

    def __neg__(self):
        return MultiPoly._raw({e: -c for e, c in self.terms.items()}, self.nvars)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        terms: Dict[Exponent, Fraction] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                exps = mono_mul(e1, e2)
                value = terms.get(exps, 0) + c1 * c2
                if value:
                    terms[exps] = value
                else:
                    terms.pop(exps, None)
        return MultiPoly._raw(terms, self.nvars)

    __rmul__ = __mul__

    def __pow__(self, power: int):
        result = MultiPoly.constant(1, self.nvars)
        for _ in range(power):
            result = result * self
        return result

    def mul_term(self, coeff: Fraction, mono: Exponent) -> "MultiPoly":
        """Return coeff * x^mono * self."""
        if coeff == 0:
            return MultiPoly._raw({}, self.nvars)
        return MultiPoly._raw(
            {mono_mul(e, mono): c * coeff for e, c in self.terms.items()},
            self.nvars,
        )

    def leading_term(self, order: MonomialOrder = DRL) -> Tuple[Exponent, Fraction]:
        """
        Return (monomial, coefficient) of the leading term.

        Raises
        ------
        ZeroPolynomial
            If the polynomial is zero.
        """
        if not self.terms:
            raise ZeroPolynomial("The zero polynomial has no leading term.")
        mono = max(self.terms, key=order.key)
        return mono, self.terms[mono]

    def leading_monomial(self, order: MonomialOrder = DRL) -> Exponent:
        return self.leading_term(order)[0]

    def monic(self, order: MonomialOrder = DRL) -> "MultiPoly":
        _, coeff = self.leading_term(order)
        if coeff == 1:
            return self
        return MultiPoly._raw(
            {e: c / coeff for e, c in self.terms.items()}, self.nvars
        )

    def sorted_terms(self, order: MonomialOrder = DRL) -> List[Tuple[Exponent, Fraction]]:
        """Terms in descending order."""
        return sorted(self.terms.items(), key=lambda t: order.key(t[0]), reverse=True)

    def derivative(self, index: int) -> "MultiPoly":
        """Partial derivative with respect to variable `index`."""
        terms = {}
        for exps, coeff in self.terms.items():
            if exps[index]:
                lowered = list(exps)
                lowered[index] -= 1
                terms[tuple(lowered)] = coeff * exps[index]
        return MultiPoly._raw(terms, self.nvars)

    def variables_used(self) -> Tuple[int, ...]:
        return tuple(
            i for i in range(self.nvars) if any(e[i] for e in self.terms)
        )

    def substitute(self, index: int, value: Scalar) -> "MultiPoly":
        """Return the polynomial with exact rational `value` put in for x_index."""
        value = Fraction(value)
        terms: Dict[Exponent, Fraction] = {}
        for exps, coeff in self.terms.items():
            lowered = list(exps)
            lowered[index] = 0
            lowered = tuple(lowered)
            term = terms.get(lowered, 0) + coeff * value ** exps[index]
            if term:
                terms[lowered] = term
            else:
                terms.pop(lowered, None)
        return MultiPoly._raw(terms, self.nvars)

    def evaluate(self, point: Sequence[complex]) -> complex:
        """Evaluate at a float or complex point."""
        if not self.terms:
            return 0.0
        if self._numeric is None:
            exps = np.array(list(self.terms), dtype=int)
            coeffs = np.array([float(c) for c in self.terms.values()])
            self._numeric = (exps, coeffs)
        exps, coeffs = self._numeric
        point = np.asarray(point)
        return np.sum(coeffs * np.prod(point[np.newaxis, :] ** exps, axis=1))


def poly_variables(nvars: int) -> Tuple[MultiPoly, ...]:
    """Return the generators x1..xn of the ring."""
    return tuple(MultiPoly.variable(i, nvars) for i in range(nvars))


# ---------------------------------------------------------------------------
# Division and Groebner bases
# ---------------------------------------------------------------------------

def s_polynomial(f: MultiPoly, g: MultiPoly, order: MonomialOrder = DRL) -> MultiPoly:
    """
    Return S(f, g) = (x^a/LT(f)) f - (x^a/LT(g)) g with x^a = lcm(LM f, LM g).

    Raises
    ------
    ZeroPolynomial
        If f or g is zero.
    """
    if f.is_zero or g.is_zero:
        raise ZeroPolynomial("S-polynomials need nonzero arguments.")
    mf, cf = f.leading_term(order)
    mg, cg = g.leading_term(order)
    lcm = mono_lcm(mf, mg)
    return f.mul_term(1 / cf, mono_div(lcm, mf)) - g.mul_term(1 / cg, mono_div(lcm, mg))


def _neg_key(order: MonomialOrder, mono: Exponent) -> Tuple[int, ...]:
    return tuple(-k for k in order.key(mono))


def _reduce(
    f: MultiPoly,
    divisors: Sequence[MultiPoly],
    order: MonomialOrder,
    keep_quotients: bool,
    max_terms: Optional[int] = None,
):
    """Shared core of `multi_divide` and `normal_form`."""
    leads = [g.leading_term(order) for g in divisors]
    quotients: List[Dict[Exponent, Fraction]] = [{} for _ in divisors]
    remainder: Dict[Exponent, Fraction] = {}
    p = dict(f.terms)
    heap = [(_neg_key(order, m), m) for m in p]
    heapq.heapify(heap)
    while heap:
        _, mono = heapq.heappop(heap)
        coeff = p.get(mono)
        if coeff is None:
            continue
        for i, (lead_mono, lead_coeff) in enumerate(leads):
            if mono_divides(lead_mono, mono):
                factor = coeff / lead_coeff
                shift = mono_div(mono, lead_mono)
                if keep_quotients:
                    quotients[i][shift] = quotients[i].get(shift, 0) + factor
                del p[mono]
                for exps, c in divisors[i].terms.items():
                    if exps == lead_mono:
                        continue
                    target = mono_mul(exps, shift)
                    value = p.get(target, 0) - factor * c
                    if value:
                        if target not in p:
                            heapq.heappush(heap, (_neg_key(order, target), target))
                        p[target] = value
                    else:
                        p.pop(target, None)
                if max_terms is not None and len(p) > max_terms:
                    raise ResourceLimit(
                        f"Intermediate polynomial exceeded {max_terms} terms."
                    )
                break
        else:
            remainder[mono] = p.pop(mono)
    nvars = f.nvars
    return (
        [MultiPoly._raw(q, nvars) for q in quotients],
        MultiPoly._raw(remainder, nvars),
    )


def multi_divide(
    f: MultiPoly, divisors: Sequence[MultiPoly], order: MonomialOrder = DRL
) -> Tuple[List[MultiPoly], MultiPoly]:
    """
    Divide f by an ordered list of polynomials.

    Divisors are tried in list order against the current leading term, so
    the result is deterministic.

    Returns
    -------
    tuple
        (quotients, remainder) with f = sum(q_i g_i) + remainder and no term
        of the remainder divisible by any leading term.
    """
    if not divisors or any(g.is_zero for g in divisors):
        raise ZeroPolynomial("Division needs a non-empty list of nonzero divisors.")
    return _reduce(f, divisors, order, keep_quotients=True)


def normal_form(
    f: MultiPoly,
    divisors: Sequence[MultiPoly],
    order: MonomialOrder = DRL,
    max_terms: Optional[int] = None,
) -> MultiPoly:
    """Return the remainder of `multi_divide` without building quotients."""
    if not divisors:
        return f
    return _reduce(f, divisors, order, keep_quotients=False, max_terms=max_terms)[1]


@dataclass(frozen=True)
class GroebnerBasis:
    """A reduced, monic Groebner basis sorted by ascending leading monomial."""

    polys: Tuple[MultiPoly, ...]
    order: MonomialOrder = DRL

    def __iter__(self):
        return iter(self.polys)

    def __len__(self):
        return len(self.polys)

    def __getitem__(self, index):
        return self.polys[index]

    @property
    def nvars(self) -> int:
        return self.polys[0].nvars

    @property
    def leading_monomials(self) -> List[Exponent]:
        return [g.leading_monomial(self.order) for g in self.polys]

    def reduce(self, f: MultiPoly) -> MultiPoly:
        """Return the normal form of f."""
        return normal_form(f, self.polys, self.order)

    def contains(self, f: MultiPoly) -> bool:
        """Ideal membership test."""
        return self.reduce(f).is_zero


# Integer work polynomials: lists of (order key, monomial, int coefficient)
# in descending order, primitive, with a positive leading coefficient.
# Order keys are linear in the exponents, so shifting a polynomial by a
# monomial adds that monomial's key to every term key.
Term = Tuple[Tuple[int, ...], Exponent, int]


def _primitive(terms: List[Term]) -> List[Term]:
    if not terms:
        return terms
    content = 0
    for _, _, coeff in terms:
        content = math.gcd(content, coeff)
        if content == 1:
            break
    if terms[0][2] < 0:
        content = -content
    if content == 1:
        return terms
    return [(key, mono, coeff // content) for key, mono, coeff in terms]


def _to_terms(p: MultiPoly, order: MonomialOrder) -> List[Term]:
    den = 1
    for c in p.terms.values():
        den = den * c.denominator // math.gcd(den, c.denominator)
    terms = sorted(
        ((order.key(m), m, int(c * den)) for m, c in p.terms.items()), reverse=True
    )
    return _primitive(terms)


def _from_terms(terms: List[Term], nvars: int, monic: bool = False) -> MultiPoly:
    lead = terms[0][2] if monic and terms else 1
    return MultiPoly._raw({m: Fraction(c, lead) for _, m, c in terms}, nvars)


def _shifted(terms: List[Term], shift: Exponent, order: MonomialOrder) -> List[Term]:
    if not any(shift):
        return terms
    offset = order.key(shift)
    return [
        (tuple(k + o for k, o in zip(key, offset)), mono_mul(mono, shift), coeff)
        for key, mono, coeff in terms
    ]


def _combine(a: int, p: List[Term], b: int, q: List[Term]) -> List[Term]:
    """Return a*p - b*q."""
    out: List[Term] = []
    i = j = 0
    while i < len(p) and j < len(q):
        kp, kq = p[i][0], q[j][0]
        if kp > kq:
            out.append((kp, p[i][1], a * p[i][2]))
            i += 1
        elif kp < kq:
            out.append((kq, q[j][1], -b * q[j][2]))
            j += 1
        else:
            coeff = a * p[i][2] - b * q[j][2]
            if coeff:
                out.append((kp, p[i][1], coeff))
            i += 1
            j += 1
    out.extend((key, mono, a * coeff) for key, mono, coeff in p[i:])
    out.extend((key, mono, -b * coeff) for key, mono, coeff in q[j:])
    return out


def _eliminate(
    terms: List[Term], pos: int, divisor: List[Term], order: MonomialOrder
) -> Tuple[List[Term], Exponent]:
    """Cancel term `pos` of `terms` with a multiple of `divisor`."""
    _, mono, coeff = terms[pos]
    _, lead, lead_coeff = divisor[0]
    shift = mono_div(mono, lead)
    common = math.gcd(coeff, lead_coeff)
    rest = terms[:pos] + terms[pos + 1:]
    out = _combine(
        lead_coeff // common, rest, coeff // common, _shifted(divisor[1:], shift, order)
    )
    return _primitive(out), shift


def _s_terms(f: List[Term], g: List[Term], order: MonomialOrder) -> List[Term]:
    _, lf, cf = f[0]
    _, lg, cg = g[0]
    lcm = mono_lcm(lf, lg)
    common = math.gcd(cf, cg)
    return _primitive(_combine(
        cg // common, _shifted(f[1:], mono_div(lcm, lf), order),
        cf // common, _shifted(g[1:], mono_div(lcm, lg), order),
    ))


def _full_reduce(
    terms: List[Term], divisors: List[List[Term]], order: MonomialOrder
) -> List[Term]:
    pos = 0
    while pos < len(terms):
        mono = terms[pos][1]
        divisor = next((d for d in divisors if mono_divides(d[0][1], mono)), None)
        if divisor is None:
            pos += 1
            continue
        terms, _ = _eliminate(terms, pos, divisor, order)
    return terms


def interreduce(polys: Iterable[MultiPoly], order: MonomialOrder = DRL) -> List[MultiPoly]:
    """Return the reduced monic basis spanning the same leading-term ideal."""
    polys = [p for p in polys if not p.is_zero]
    if not polys:
        return []
    nvars = polys[0].nvars
    work = sorted((_to_terms(p, order) for p in polys), key=lambda t: t[0][0])
    minimal: List[List[Term]] = []
    for terms in work:
        if not any(mono_divides(q[0][1], terms[0][1]) for q in minimal):
            minimal.append(terms)
    reduced = []
    for i, terms in enumerate(minimal):
        others = minimal[:i] + minimal[i + 1:]
        reduced.append(_from_terms(_full_reduce(terms, others, order), nvars, monic=True))
    return reduced


def buchberger(
    polys: Sequence[MultiPoly],
    order: MonomialOrder = DRL,
    config: Optional[SolverConfig] = None,
) -> GroebnerBasis:
    """
    Return the reduced Groebner basis of the ideal generated by `polys`.

    Intermediate polynomials are kept with primitive integer coefficients
    and are only top-reduced; tails are reduced once at the end. New
    elements are installed with the Gebauer-Moeller update, which drops
    redundant pairs and retires basis elements whose leading monomial is
    divisible by a newer one. Pairs are selected by lowest sugar degree,
    then lowest lcm degree, then lcm in the monomial order.

    Raises
    ------
    ZeroPolynomial
        If an input polynomial is zero or the list is empty.
    ResourceLimit
        If more than `config.max_pairs` pairs are processed or an
        intermediate polynomial grows past `config.max_terms` terms.
    """
    config = config or SolverConfig()
    if not polys or any(p.is_zero for p in polys):
        raise ZeroPolynomial("Buchberger's algorithm needs nonzero input polynomials.")
    if len({p.nvars for p in polys}) != 1:
        raise ValueError("All polynomials must share the same variables.")
    nvars = polys[0].nvars

    # store[i] = (terms, sugar); active holds the indices of the current basis.
    store: List[Tuple[List[Term], int]] = []
    active: List[int] = []
    pairs: Dict[Tuple[int, int], Exponent] = {}
    queue: List[Tuple[int, int, Tuple[int, ...], int, int]] = []

    def lead(i: int) -> Exponent:
        return store[i][0][0][1]

    def update(new: int):
        h = lead(new)
        candidates = [(g, mono_lcm(lead(g), h)) for g in active]
        kept = []
        for pos, (g, lcm) in enumerate(candidates):
            coprime = lcm == mono_mul(lead(g), h)
            if coprime or not any(
                mono_divides(other, lcm)
                for _, other in candidates[pos + 1:] + kept
            ):
                kept.append((g, lcm))
        for (i, j), lcm in list(pairs.items()):
            if (
                mono_divides(h, lcm)
                and mono_lcm(lead(i), h) != lcm
                and mono_lcm(lead(j), h) != lcm
            ):
                del pairs[(i, j)]
        for g, lcm in kept:
            if lcm == mono_mul(lead(g), h):
                continue
            sugar = max(
                store[g][1] + sum(lcm) - sum(lead(g)),
                store[new][1] + sum(lcm) - sum(h),
            )
            pairs[(g, new)] = lcm
            heapq.heappush(queue, (sugar, sum(lcm), order.key(lcm), g, new))
        active[:] = [g for g in active if not mono_divides(h, lead(g))]
        active.append(new)

    def top_reduce(terms: List[Term], sugar: int) -> Tuple[List[Term], int]:
        while terms:
            mono = terms[0][1]
            divisor = next((g for g in active if mono_divides(lead(g), mono)), None)
            if divisor is None:
                break
            terms, shift = _eliminate(terms, 0, store[divisor][0], order)
            sugar = max(sugar, sum(shift) + store[divisor][1])
            if len(terms) > config.max_terms:
                raise ResourceLimit(
                    f"Intermediate polynomial exceeded {config.max_terms} terms."
                )
        return terms, sugar

    for p in sorted(polys, key=lambda p: order.key(p.leading_monomial(order))):
        store.append((_to_terms(p, order), p.degree))
        update(len(store) - 1)

    processed = 0
    while queue:
        sugar, _, _, i, j = heapq.heappop(queue)
        if pairs.pop((i, j), None) is None:
            continue
        processed += 1
        if processed > config.max_pairs:
            raise ResourceLimit(f"More than {config.max_pairs} S-pairs processed.")
        h, sugar = top_reduce(_s_terms(store[i][0], store[j][0], order), sugar)
        if not h:
            continue
        store.append((h, sugar))
        update(len(store) - 1)
        if processed % 100 == 0:
            logger.debug(
                f"Buchberger: {processed} pairs reduced, basis size {len(active)}, "
                f"{len(pairs)} pairs queued, sugar {sugar}."
            )

    reduced = interreduce([_from_terms(store[g][0], nvars) for g in active], order)
    logger.debug(
        f"Buchberger finished after {processed} pairs with {len(reduced)} elements."
    )
    return GroebnerBasis(polys=tuple(reduced), order=order)


def is_groebner(polys: Sequence[MultiPoly], order: MonomialOrder = DRL) -> bool:
    """Return True if every S-polynomial reduces to zero modulo `polys`."""
    polys = list(polys)
    for f, g in combinations(polys, 2):
        mf, mg = f.leading_monomial(order), g.leading_monomial(order)
        if mono_lcm(mf, mg) == mono_mul(mf, mg):
            continue
        if not normal_form(s_polynomial(f, g, order), polys, order).is_zero:
            return False
    return True


# ---------------------------------------------------------------------------
# Quotient ring
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuotientBasis:
    """
    Standard monomials of a zero-dimensional ideal.

    Listed by ascending total degree and, inside a degree, descending in the
    monomial order.
    """

    monomials: Tuple[Exponent, ...]
    index: Dict[Exponent, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(
            self, "index", {m: i for i, m in enumerate(self.monomials)}
        )

    def __len__(self):
        return len(self.monomials)

    def __iter__(self):
        return iter(self.monomials)

    def coordinates(self, f: MultiPoly) -> List[Fraction]:
        """Coordinates of a normal form in this basis."""
        coords = [Fraction(0)] * len(self.monomials)
        for exps, coeff in f.terms.items():
            if exps not in self.index:
                raise PolySolveException(f"{exps} is not a standard monomial.")
            coords[self.index[exps]] = coeff
        return coords


def standard_monomials(basis: GroebnerBasis) -> QuotientBasis:
    """
    Return the monomials not divisible by any leading monomial of `basis`.

    Raises
    ------
    NotZeroDimensional
        If some variable has no pure power among the leading monomials.
    """
    leads = basis.leading_monomials
    nvars = basis.nvars
    one = (0,) * nvars
    if any(lead == one for lead in leads):
        return QuotientBasis(monomials=())
    for i in range(nvars):
        if not any(
            lead[i] > 0 and sum(lead) == lead[i] for lead in leads
        ):
            raise NotZeroDimensional(
                f"No pure power of variable {i + 1} among the leading terms."
            )
    seen = {one}
    frontier = [one]
    while frontier:
        grown = []
        for mono in frontier:
            for i in range(nvars):
                bigger = list(mono)
                bigger[i] += 1
                bigger = tuple(bigger)
                if bigger in seen or any(mono_divides(l, bigger) for l in leads):
                    continue
                seen.add(bigger)
                grown.append(bigger)
        frontier = grown
    order = basis.order
    monomials = sorted(
        seen, key=lambda m: (sum(m), tuple(-k for k in order.key(m)))
    )
    return QuotientBasis(monomials=tuple(monomials))


@dataclass(frozen=True)
class MultMatrix:
    """
    Matrix of multiplication by f in the quotient ring.

    Column j holds the coordinates of the normal form of f * b_j.
    """

    matrix: Tuple[Tuple[Fraction, ...], ...]
    f: MultiPoly
    basis: QuotientBasis

    def __matmul__(self, other: "MultMatrix") -> "MultMatrix":
        """Exact product, i.e. the matrix of f * g."""
        n = len(self.matrix)
        rows = tuple(
            tuple(
                sum((self.matrix[i][k] * other.matrix[k][j] for k in range(n)), Fraction(0))
                for j in range(n)
            )
            for i in range(n)
        )
        return MultMatrix(matrix=rows, f=self.f * other.f, basis=self.basis)

    def to_numpy(self) -> np.ndarray:
        return np.array([[float(c) for c in row] for row in self.matrix])


def mult_matrix(f: MultiPoly, basis: GroebnerBasis, quotient: QuotientBasis) -> MultMatrix:
    """Return the exact multiplication matrix m_f."""
    n = len(quotient)
    columns = []
    for mono in quotient:
        product = f.mul_term(Fraction(1), mono)
        columns.append(quotient.coordinates(basis.reduce(product)))
    rows = tuple(tuple(columns[j][i] for j in range(n)) for i in range(n))
    return MultMatrix(matrix=rows, f=f, basis=quotient)


# ---------------------------------------------------------------------------
# Numerical solution extraction
# ---------------------------------------------------------------------------

def newton_polish(
    polys: Sequence[MultiPoly],
    start: Sequence[complex],
    iterations: int = 25,
) -> Tuple[np.ndarray, float]:
    """
    Refine a root with least-squares Newton steps.

    Returns
    -------
    tuple
        (point, max |f_i(point)|).
    """
    nvars = polys[0].nvars
    jacobian = [[p.derivative(i) for i in range(nvars)] for p in polys]
    x = np.array(start, dtype=complex)

    def residual(point):
        return np.array([p.evaluate(point) for p in polys], dtype=complex)

    values = residual(x)
    best = (x.copy(), np.max(np.abs(values)))
    for _ in range(iterations):
        jac = np.array(
            [[d.evaluate(x) for d in row] for row in jacobian], dtype=complex
        )
        step = np.linalg.lstsq(jac, values, rcond=None)[0]
        x = x - step
        values = residual(x)
        size = np.max(np.abs(values))
        if size < best[1]:
            best = (x.copy(), size)
        if np.max(np.abs(step)) <= 1e-15 * max(1.0, np.max(np.abs(x))):
            break
    return best[0], float(best[1])


def _dedupe(points: List[np.ndarray], tol: float = 1e-8) -> List[np.ndarray]:
    unique: List[np.ndarray] = []
    for point in points:
        scale = max(1.0, float(np.max(np.abs(point))))
        if not any(np.max(np.abs(point - u)) <= tol * scale for u in unique):
            unique.append(point)
    return unique


def _eigen_readout(
    m_f: np.ndarray, eigen_tol: float
) -> Optional[List[np.ndarray]]:
    """
    Return one left eigenvector per distinct eigenvalue of m_f.

    None means some eigenvalue owns more than one independent eigenvector,
    i.e. f does not separate the solutions.
    """
    scale = max(1.0, float(np.max(np.abs(m_f))))
    values = np.linalg.eigvals(m_f.T)
    clusters: List[List[complex]] = []
    for value in values:
        for cluster in clusters:
            if abs(cluster[0] - value) <= eigen_tol * scale:
                cluster.append(value)
                break
        else:
            clusters.append([value])
    vectors = []
    size = m_f.shape[0]
    for cluster in clusters:
        centre = np.mean(cluster)
        _, singular, vh = np.linalg.svd(m_f.T - centre * np.eye(size))
        nullity = int(np.sum(singular <= np.sqrt(eigen_tol) * scale))
        if len(cluster) > 1 and nullity > 1:
            return None
        vectors.append(vh[-1].conj())
    return vectors


def solve_zero_dim(
    polys: Sequence[MultiPoly], config: Optional[SolverConfig] = None
) -> List[np.ndarray]:
    """
    Return all complex solutions of a zero-dimensional system.

    The DRL Groebner basis and the standard monomials give exact
    multiplication matrices. A linear separating element f is chosen, each
    left eigenvector of m_f (normalized at the monomial 1) seeds a candidate
    whose coordinates are read through the normal forms of the variables,
    and each candidate is accepted only if Newton polishing against the
    input drives max |f_i| below `config.residual_tol`.

    Raises
    ------
    NotZeroDimensional
        If the ideal has infinitely many solutions.
    SolverDegeneracy
        If every separating element tried leaves a repeated eigenvalue with
        more than one eigenvector.
    ResourceLimit
        From Buchberger's algorithm.
    """
    config = config or SolverConfig()
    basis = buchberger(polys, DRL, config)
    quotient = standard_monomials(basis)
    nvars = basis.nvars
    if len(quotient) == 0:
        logger.info("The system is inconsistent: no solutions.")
        return []
    logger.info(f"Quotient ring has dimension {len(quotient)}.")

    generators = poly_variables(nvars)
    mults = [mult_matrix(x, basis, quotient).to_numpy() for x in generators]
    readout = np.array(
        [[float(c) for c in quotient.coordinates(basis.reduce(x))] for x in generators]
    )
    unit = quotient.index[(0,) * nvars]

    rng = np.random.default_rng(config.seed)
    for attempt in range(config.separating_retries):
        if attempt == 0 and config.separating_element is not None:
            weights = np.array(config.separating_element, dtype=float)
            if weights.size != nvars:
                raise PolySolveException(
                    f"separating_element needs {nvars} weights, got {weights.size}."
                )
        else:
            weights = rng.integers(-9, 10, size=nvars).astype(float)
            if not weights.any():
                weights[0] = 1.0
        m_f = sum(w * m for w, m in zip(weights, mults))
        vectors = _eigen_readout(m_f, config.eigen_tol)
        if vectors is None:
            logger.warning(
                f"Separating element {weights.astype(int).tolist()} is degenerate, retrying."
            )
            continue
        break
    else:
        raise SolverDegeneracy(
            f"No separating element found after {config.separating_retries} attempts."
        )

    solutions = []
    for vector in vectors:
        if abs(vector[unit]) <= 1e-12 * np.max(np.abs(vector)):
            logger.warning("Eigenvector vanishes at the monomial 1; skipped.")
            continue
        seed = readout @ (vector / vector[unit])
        point, residual = newton_polish(polys, seed, config.newton_iterations)
        if residual < config.residual_tol:
            solutions.append(point)
        else:
            logger.warning(f"Rejected candidate solution with residual {residual:.3g}.")
    solutions = _dedupe(solutions)
    logger.info(f"Found {len(solutions)} solutions.")
    return solutions


def solve_lex(
    polys: Sequence[MultiPoly], config: Optional[SolverConfig] = None
) -> List[np.ndarray]:
    """
    Solve a small zero-dimensional system by Lex back-substitution.

    Meant as a cross-check for `solve_zero_dim`: the Lex basis is
    triangular, so the last variable is found from a univariate polynomial
    and each earlier one from the basis elements that start with it.
    """
    config = config or SolverConfig()
    basis = buchberger(polys, LEX, config)
    standard_monomials(basis)
    nvars = basis.nvars
    partial: List[List[complex]] = [[]]
    for var in reversed(range(nvars)):
        relevant = [
            g for g in basis
            if var in g.variables_used()
            and all(i >= var for i in g.variables_used())
        ]
        grown = []
        for values in partial:
            known = dict(zip(range(var + 1, nvars), values))
            univariate = [_univariate(g, var, known) for g in relevant]
            univariate = [u for u in univariate if len(u) > 1]
            if not univariate:
                continue
            lowest = min(univariate, key=len)
            for root in np.roots(lowest):
                if all(abs(np.polyval(u, root)) <= 1e-6 * max(1.0, np.max(np.abs(u))) for u in univariate):
                    grown.append([root] + values)
        partial = grown
    solutions = []
    for values in partial:
        point, residual = newton_polish(polys, values, config.newton_iterations)
        if residual < config.residual_tol:
            solutions.append(point)
    return _dedupe(solutions)


def _univariate(g: MultiPoly, var: int, known: Dict[int, complex]) -> np.ndarray:
    """Coefficients (highest power first) of g in x_var with known values substituted."""
    degree = max(e[var] for e in g.terms)
    coeffs = np.zeros(degree + 1, dtype=complex)
    for exps, coeff in g.terms.items():
        value = complex(coeff)
        for i, x in known.items():
            value *= x ** exps[i]
        coeffs[degree - exps[var]] += value
    nonzero = np.nonzero(np.abs(coeffs) > 1e-14 * max(1.0, np.max(np.abs(coeffs))))[0]
    if nonzero.size == 0:
        return np.zeros(1, dtype=complex)
    return coeffs[nonzero[0]:]


# ---------------------------------------------------------------------------
# Text format
# ---------------------------------------------------------------------------

_NAME = re.compile(r"[A-Za-z_][A-Za-z_0-9]*")
_FACTOR = re.compile(
    r"^(?:\((?P<paren>[+-]?\d+(?:/\d+)?)\)|(?P<num>\d+(?:\.\d+)?(?:/\d+)?)|"
    r"(?P<name>[A-Za-z_][A-Za-z_0-9]*)(?:\^(?P<power>\d+))?)$"
)


def _split_terms(line: str) -> List[str]:
    terms, depth, current = [], 0, ""
    for char in line:
        if char == "(":
            depth += 1
        elif char == ")":
            depth -= 1
        if char in "+-" and depth == 0 and current and current[-1] not in "^*":
            terms.append(current)
            current = ""
        current += char
    if current:
        terms.append(current)
    return terms


def parse_system(
    text: str, names: Optional[Sequence[str]] = None
) -> Tuple[List[MultiPoly], List[str]]:
    """
    Parse one polynomial per line.

    Terms look like ``-(3/4)*x1^2*x3`` or ``2*y``. A ``# vars: a b c``
    line fixes the variable order, otherwise variables are numbered in
    order of first appearance. Other lines starting with ``#`` and blank
    lines are ignored.

    Raises
    ------
    PolynomialParseError
        On malformed terms or an empty system.
    """
    lines = []
    for raw in text.splitlines():
        line = raw.strip()
        if line.startswith("#"):
            header = line[1:].strip()
            if header.lower().startswith("vars:") and names is None:
                names = header[5:].split()
            continue
        if line:
            lines.append(line.replace(" ", ""))
    if not lines:
        raise PolynomialParseError("No polynomials found.")
    names = list(names) if names is not None else []
    fixed = bool(names)
    if not fixed:
        for line in lines:
            for name in _NAME.findall(line):
                if name not in names:
                    names.append(name)
        if not names:
            names = ["x"]

    polys = []
    for number, line in enumerate(lines, start=1):
        terms: Dict[Exponent, Fraction] = {}
        for chunk in _split_terms(line):
            sign = -1 if chunk.startswith("-") else 1
            body = chunk.lstrip("+-")
            if not body:
                raise PolynomialParseError(f"Line {number}: dangling sign in {chunk!r}.")
            coeff = Fraction(sign)
            exps = [0] * len(names)
            for factor in body.split("*"):
                match = _FACTOR.match(factor)
                if match is None:
                    raise PolynomialParseError(f"Line {number}: cannot parse {factor!r}.")
                if match["paren"] or match["num"]:
                    coeff *= Fraction(match["paren"] or match["num"])
                else:
                    if match["name"] not in names:
                        raise PolynomialParseError(
                            f"Line {number}: unknown variable {match['name']!r}."
                        )
                    exps[names.index(match["name"])] += int(match["power"] or 1)
            key = tuple(exps)
            terms[key] = terms.get(key, 0) + coeff
        polys.append(MultiPoly(terms, len(names)))
    return polys, names


def format_poly(
    f: MultiPoly, names: Optional[Sequence[str]] = None, order: MonomialOrder = DRL
) -> str:
    """Render a polynomial in the text format read by `parse_system`."""
    if names is None:
        names = [f"x{i + 1}" for i in range(f.nvars)]
    if f.is_zero:
        return "0"
    out = ""
    for exps, coeff in f.sorted_terms(order):
        sign = "-" if coeff < 0 else "+"
        coeff = abs(coeff)
        factors = [
            name if e == 1 else f"{name}^{e}"
            for name, e in zip(names, exps) if e
        ]
        if coeff != 1 or not factors:
            number = str(coeff.numerator) if coeff.denominator == 1 else f"({coeff})"
            factors.insert(0, number)
        term = "*".join(factors)
        if not out:
            out = term if sign == "+" else f"-{term}"
        else:
            out += f" {sign} {term}"
    return out


def format_system(polys: Sequence[MultiPoly], names: Optional[Sequence[str]] = None) -> str:
    """Render a system with a ``# vars:`` header, one polynomial per line."""
    if names is None:
        names = [f"x{i + 1}" for i in range(polys[0].nvars)]
    lines = [f"# vars: {' '.join(names)}"]
    lines.extend(format_poly(p, names) for p in polys)
    return "\n".join(lines) + "\n"
