"""Exact arithmetic in real quadratic fields, plus certified decimal intervals.

Everything downstream that turns a real number into an integer (Beatty floors
``[alpha*n]``, fractional-part window tests, continued-fraction quotients)
goes through this module, so none of those decisions may depend on floating
point.  Two kinds of numbers are supported:

* elements of a real quadratic field Q(sqrt(d)), represented exactly by a
  pair of rationals -- covers sqrt(2), the golden ratio, and every
  ``quad:a,b,c,d`` input, with error-free comparisons and floors;
* user-supplied decimal truncations with a stated number of certified
  fractional digits -- every discrete decision is made on the exact rational
  interval ``[x, x + 10^-digits]`` and raises :class:`PrecisionError` if the
  interval is too coarse to decide.

Floors of quadratic-field elements reduce to integer square roots: for
``x = (P + Q*sqrt(d))/R`` with integers P, Q, R and ``Q*sqrt(d)`` irrational,

    floor(x) = (P + isqrt(Q^2 d)) // R          if Q >= 0
    floor(x) = (P - isqrt(Q^2 d) - 1) // R      if Q < 0

which is what both the scalar and the vectorised block routines use.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Union

import numpy as np
import mpmath
from mpmath import mp

__all__ = [
    "PrecisionError",
    "RadicandMismatchError",
    "QField",
    "AlphaSpec",
    "Convergent",
    "CFExpansion",
    "qf_arith",
    "qf_compare",
    "exact_floor",
    "floor_mul",
    "frac_in_window",
    "cf_expand",
    "cf_expand_value",
    "convergents",
    "convergent_near",
    "max_partial_quotient",
    "parse_alpha",
    "floor_mul_block",
    "window_hits_block",
    "frac_lam_mult",
    "lam_to_float",
    "alpha_to_float",
    "working_dps",
]

Rational = Union[int, Fraction]

_INT64_SAFE = 1 << 62


class PrecisionError(ArithmeticError):
    """A certified interval is too wide to decide a discrete question.

    Recoverable: the caller may re-supply more digits (decimal inputs) or
    raise the working precision (internal evaluations).
    """


class RadicandMismatchError(ValueError):
    """Arithmetic between elements of different quadratic fields."""


def working_dps() -> int:
    """Default decimal working precision for certified evaluations."""
    try:
        return max(15, int(os.environ.get("BSQ_PRECISION_DIGITS", "40")))
    except ValueError:
        return 40


@lru_cache(maxsize=1024)
def _is_squarefree_int(d: int) -> bool:
    if d < 1:
        return False
    f = 2
    while f * f <= d:
        if d % (f * f) == 0:
            return False
        f += 1
    return True


# ---------------------------------------------------------------------------
# QField
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QField:
    """Exact element p + q*sqrt(d) of Q(sqrt(d)).

    ``d`` is 0 for rational elements (then ``q`` must be 0) or a square-free
    integer >= 2.  Rationals are stored in lowest terms by ``Fraction``.
    """

    p: Fraction
    q: Fraction
    d: int

    def __post_init__(self) -> None:
        if not isinstance(self.p, Fraction):
            object.__setattr__(self, "p", Fraction(self.p))
        if not isinstance(self.q, Fraction):
            object.__setattr__(self, "q", Fraction(self.q))
        if self.q == 0:
            object.__setattr__(self, "d", 0)
        elif self.d < 2 or not _is_squarefree_int(self.d):
            raise ValueError(f"radicand must be square-free and >= 2, got {self.d}")

    # -- constructors ------------------------------------------------------

    @staticmethod
    def rational(r: Rational) -> "QField":
        return QField(Fraction(r), Fraction(0), 0)

    @staticmethod
    def sqrt(d: int) -> "QField":
        return QField(Fraction(0), Fraction(1), d)

    @staticmethod
    def golden() -> "QField":
        return QField(Fraction(1, 2), Fraction(1, 2), 5)

    # -- predicates ---------------------------------------------------------

    @property
    def is_rational(self) -> bool:
        return self.q == 0

    def _coerce(self, other) -> "QField":
        if isinstance(other, QField):
            return other
        if isinstance(other, (int, Fraction)):
            return QField.rational(other)
        return NotImplemented  # type: ignore[return-value]

    def _join_d(self, other: "QField") -> int:
        if self.d == 0:
            return other.d
        if other.d == 0 or other.d == self.d:
            return self.d
        raise RadicandMismatchError(f"cannot mix sqrt({self.d}) with sqrt({other.d})")

    # -- field arithmetic ---------------------------------------------------

    def __add__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        d = self._join_d(o)
        return QField(self.p + o.p, self.q + o.q, d)

    __radd__ = __add__

    def __neg__(self):
        return QField(-self.p, -self.q, self.d)

    def __sub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return self + (-o)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        d = self._join_d(o)
        p = self.p * o.p + self.q * o.q * d
        q = self.p * o.q + self.q * o.p
        return QField(p, q, d)

    __rmul__ = __mul__

    def inverse(self) -> "QField":
        nrm = self.p * self.p - self.q * self.q * self.d
        if nrm == 0:
            if self.p == 0 and self.q == 0:
                raise ZeroDivisionError("division by zero")
            raise ValueError("norm zero: radicand is not square-free")
        return QField(self.p / nrm, -self.q / nrm, self.d)

    def __truediv__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        self._join_d(o)
        return self * o.inverse()

    def __rtruediv__(self, other):
        return self.inverse() * other

    # -- exact ordering ------------------------------------------------------

    def sign(self) -> int:
        """Exact sign of p + q*sqrt(d), by integer arithmetic only."""
        if self.q == 0:
            return (self.p > 0) - (self.p < 0)
        if self.p == 0:
            return 1 if self.q > 0 else -1
        if self.p > 0 and self.q > 0:
            return 1
        if self.p < 0 and self.q < 0:
            return -1
        # opposite signs: compare p^2 against q^2 d (squaring keeps order
        # because both compared magnitudes are positive)
        lhs = self.p * self.p
        rhs = self.q * self.q * self.d
        if lhs == rhs:  # would mean sqrt(d) rational
            return 0
        if self.p > 0:  # q < 0: positive iff p > |q| sqrt(d)
            return 1 if lhs > rhs else -1
        return 1 if rhs > lhs else -1

    def compare(self, other) -> int:
        o = self._coerce(other)
        return (self - o).sign()

    def __eq__(self, other):
        if isinstance(other, (QField, int, Fraction)):
            return self.compare(other) == 0
        return NotImplemented

    def __hash__(self):
        return hash((self.p, self.q, self.d))

    def __lt__(self, other):
        return self.compare(other) < 0

    def __le__(self, other):
        return self.compare(other) <= 0

    def __gt__(self, other):
        return self.compare(other) > 0

    def __ge__(self, other):
        return self.compare(other) >= 0

    # -- numeric views -------------------------------------------------------

    def as_integer_triple(self) -> tuple[int, int, int]:
        """(P, Q, R) with self == (P + Q*sqrt(d))/R and R > 0."""
        r = math.lcm(self.p.denominator, self.q.denominator)
        return int(self.p * r), int(self.q * r), r

    def to_mpf(self, dps: int | None = None) -> mpmath.mpf:
        dps = dps or working_dps()
        with mp.workdps(dps + 5):
            v = mpmath.mpf(self.p.numerator) / self.p.denominator
            if self.q:
                v += (mpmath.mpf(self.q.numerator) / self.q.denominator) * mpmath.sqrt(self.d)
            return +v

    def __float__(self) -> float:
        if self.q == 0:
            return float(self.p)
        return float(self.to_mpf(25))

    def __repr__(self) -> str:
        if self.q == 0:
            return f"QField({self.p})"
        return f"QField({self.p} + {self.q}*sqrt({self.d}))"


def qf_arith(x: QField, y: QField, op: str) -> QField:
    """Named dispatch over the four field operations."""
    if op == "add":
        return x + y
    if op == "sub":
        return x - y
    if op == "mul":
        return x * y
    if op == "div":
        return x / y
    raise ValueError(f"unknown op {op!r}")


def qf_compare(x: QField, r: Rational) -> int:
    """Exact ordering of x against a rational: -1, 0, or +1."""
    return x.compare(r)


def exact_floor(x: Union[QField, Fraction, int]) -> int:
    """floor(x) for an exact input, via integer square roots."""
    if isinstance(x, int):
        return x
    if isinstance(x, Fraction):
        return x.numerator // x.denominator
    if x.q == 0:
        return x.p.numerator // x.p.denominator
    P, Q, R = x.as_integer_triple()
    s = math.isqrt(Q * Q * x.d)
    if Q >= 0:
        return (P + s) // R
    if s * s == Q * Q * x.d:  # impossible for square-free d, guard anyway
        return (P - s) // R
    return (P - s - 1) // R


# ---------------------------------------------------------------------------
# AlphaSpec
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AlphaSpec:
    """An irrational multiplier alpha > 1.

    ``kind`` is ``"quadratic"`` (exact QField value) or ``"decimal"``
    (truncated digits; the true value is certified to lie in
    ``[lo, lo + 10^-precision]``).
    """

    kind: str
    label: str
    value: QField | None = None
    lo: Fraction | None = None
    precision: int = 0

    # -- constructors --------------------------------------------------------

    @staticmethod
    def quadratic(value: QField, label: str | None = None) -> "AlphaSpec":
        if value.is_rational:
            raise ValueError("quadratic alpha must be irrational")
        if value.compare(1) <= 0:
            raise ValueError("alpha must exceed 1")
        return AlphaSpec("quadratic", label or repr(value), value=value)

    @staticmethod
    def decimal(digits: str, label: str | None = None) -> "AlphaSpec":
        text = digits.strip()
        if "." not in text:
            raise ValueError("decimal alpha needs fractional digits")
        frac_digits = len(text.split(".", 1)[1])
        lo = Fraction(text)
        if lo <= 1:
            raise ValueError("alpha must exceed 1")
        return AlphaSpec("decimal", label or text, lo=lo, precision=frac_digits)

    # -- interval views ------------------------------------------------------

    @property
    def is_quadratic(self) -> bool:
        return self.kind == "quadratic"

    def bounds(self) -> tuple[Fraction, Fraction]:
        """Exact rational enclosure of alpha (decimal kind only)."""
        if self.is_quadratic:
            raise TypeError("quadratic alpha has no rational enclosure")
        assert self.lo is not None
        return self.lo, self.lo + Fraction(1, 10 ** self.precision)

    def lam_field(self) -> QField:
        if not self.is_quadratic:
            raise TypeError("decimal alpha has no field representation")
        assert self.value is not None
        return self.value.inverse()

    def lam_bounds(self) -> tuple[Fraction, Fraction]:
        lo, hi = self.bounds()
        return 1 / hi, 1 / lo

    def to_mpf(self, dps: int | None = None) -> mpmath.mpf:
        dps = dps or working_dps()
        if self.is_quadratic:
            assert self.value is not None
            return self.value.to_mpf(dps)
        if self.precision < dps - 2:
            raise PrecisionError(
                f"alpha certified to {self.precision} digits, {dps} requested; "
                "re-supply more digits"
            )
        lo, _ = self.bounds()
        with mp.workdps(dps + 5):
            return +(mpmath.mpf(lo.numerator) / lo.denominator)

    def lam_mpf(self, dps: int | None = None) -> mpmath.mpf:
        dps = dps or working_dps()
        if self.is_quadratic:
            with mp.workdps(dps + 5):
                return +(1 / self.value.to_mpf(dps + 5))  # type: ignore[union-attr]
        if self.precision < dps - 2:
            raise PrecisionError(
                f"alpha certified to {self.precision} digits, {dps} requested; "
                "re-supply more digits"
            )
        lam_lo, _ = self.lam_bounds()
        with mp.workdps(dps + 5):
            return +(mpmath.mpf(lam_lo.numerator) / lam_lo.denominator)


def alpha_to_float(alpha: AlphaSpec) -> float:
    if alpha.is_quadratic:
        return float(alpha.value)  # type: ignore[arg-type]
    return float(alpha.lo)  # type: ignore[arg-type]


def lam_to_float(alpha: AlphaSpec) -> float:
    if alpha.is_quadratic:
        return float(alpha.lam_field())
    return float(1 / alpha.lo)  # type: ignore[operator]


def parse_alpha(text: str) -> AlphaSpec:
    """Parse the CLI grammar: sqrt:D | quad:a,b,c,d | golden | decimal:<digits>.

    Values <= 1 (and square radicands) are rejected.
    """
    text = text.strip()
    if text == "golden":
        return AlphaSpec.quadratic(QField.golden(), "golden")
    if text.startswith("sqrt:"):
        body = text[len("sqrt:"):]
        try:
            d = int(body)
        except ValueError:
            raise ValueError(f"sqrt: wants an integer, got {body!r}") from None
        if d < 2:
            raise ValueError("sqrt radicand must be >= 2")
        if math.isqrt(d) ** 2 == d:
            raise ValueError(f"{d} is a perfect square; alpha would be rational")
        if not _is_squarefree_int(d):
            raise ValueError(f"{d} is not square-free; factor the square part out")
        return AlphaSpec.quadratic(QField.sqrt(d), f"sqrt({d})")
    if text.startswith("quad:"):
        parts = text[len("quad:"):].split(",")
        if len(parts) != 4:
            raise ValueError("quad: wants a,b,c,d")
        try:
            a, b, c, d = (int(s) for s in parts)
        except ValueError:
            raise ValueError("quad: wants four integers") from None
        if c <= 0:
            raise ValueError("quad: denominator c must be positive")
        if b == 0:
            raise ValueError("quad: b=0 gives a rational value")
        value = QField(Fraction(a, c), Fraction(b, c), d)
        return AlphaSpec.quadratic(value, f"({a}{b:+d}*sqrt({d}))/{c}")
    if text.startswith("decimal:"):
        body = text[len("decimal:"):]
        if "." not in body or len(body.split(".", 1)[1]) < 30:
            raise ValueError("decimal: needs at least 30 fractional digits")
        float(body)  # syntax check
        return AlphaSpec.decimal(body)
    raise ValueError(f"unrecognized alpha spec {text!r}")


# ---------------------------------------------------------------------------
# Floors and the fractional-part window
# ---------------------------------------------------------------------------

def floor_mul(alpha: AlphaSpec, n: int) -> int:
    """[alpha*n] exactly; PrecisionError if a decimal enclosure straddles."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return 0
    if alpha.is_quadratic:
        return exact_floor(alpha.value * n)  # type: ignore[operator]
    lo, hi = alpha.bounds()
    f_lo = (lo.numerator * n) // lo.denominator
    f_hi = (hi.numerator * n) // hi.denominator
    if f_lo != f_hi:
        raise PrecisionError(
            f"[alpha*{n}] undecided: enclosure spans [{f_lo}, {f_hi}]"
        )
    return f_lo


def frac_in_window(alpha: AlphaSpec, m: int) -> bool:
    """True iff {m/alpha} > 1 - 1/alpha, i.e. m = [alpha*n] for some n.

    Decided exactly; equality cannot occur for irrational alpha.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if alpha.is_quadratic:
        lam = alpha.lam_field()
        k = exact_floor(lam * m)
        frac = lam * m - k
        return (frac - (1 - lam)).sign() > 0
    lam_lo, lam_hi = alpha.lam_bounds()
    k_lo = (lam_lo.numerator * m) // lam_lo.denominator
    k_hi = (lam_hi.numerator * m) // lam_hi.denominator
    if k_lo != k_hi:
        raise PrecisionError(f"floor(m/alpha) undecided at m={m}")
    # g(lam) = {m lam} - (1 - lam) = (m+1) lam - (k+1) is increasing in lam
    g_lo = (m + 1) * lam_lo - (k_lo + 1)
    g_hi = (m + 1) * lam_hi - (k_lo + 1)
    if g_lo > 0:
        return True
    if g_hi < 0:
        return False
    raise PrecisionError(f"window membership undecided at m={m}")


def frac_lam_mult(alpha: AlphaSpec, mult: int, dps: int | None = None) -> float:
    """Certified {mult / alpha} as a double.

    The integer part is removed exactly, so the result's absolute error is
    ~10^-dps regardless of the size of ``mult``.
    """
    if mult == 0:
        return 0.0
    dps = dps or working_dps()
    if alpha.is_quadratic:
        lam = alpha.lam_field()
        k = exact_floor(lam * mult)
        frac = lam * mult - k  # exact element of [0, 1)
        need = max(dps, 25 + len(str(abs(mult))))
        return float(frac.to_mpf(need))
    lam_lo, lam_hi = alpha.lam_bounds()
    k_lo = (lam_lo.numerator * mult) // lam_lo.denominator
    k_hi = (lam_hi.numerator * mult) // lam_hi.denominator
    if k_lo != k_hi:
        raise PrecisionError(f"frac undecided at multiple {mult}")
    f_lo = mult * lam_lo - k_lo
    f_hi = mult * lam_hi - k_lo
    if f_hi - f_lo > Fraction(1, 10**13):
        raise PrecisionError(
            f"frac enclosure too wide at multiple {mult}; re-supply digits"
        )
    return float((f_lo + f_hi) / 2)


# ---------------------------------------------------------------------------
# Vectorised block routines (same integer formulas, numpy int64)
# ---------------------------------------------------------------------------

def _isqrt_exact(x: np.ndarray) -> np.ndarray:
    """Elementwise floor(sqrt(x)) for int64 x in [0, 2^62)."""
    t = np.sqrt(x.astype(np.float64)).astype(np.int64)
    t = np.where(t * t > x, t - 1, t)
    tp = t + 1
    return np.where(tp * tp <= x, tp, t)


def _triple_for(alpha: AlphaSpec, use_lambda: bool) -> tuple[int, int, int, int]:
    value = alpha.lam_field() if use_lambda else alpha.value
    assert value is not None
    P, Q, R = value.as_integer_triple()
    return P, Q, R, value.d


def _floor_block_ints(P: int, Q: int, R: int, d: int, ns: np.ndarray) -> np.ndarray:
    u = P * ns
    v = Q * ns
    x = d * v * v
    s = _isqrt_exact(np.abs(x))
    if Q >= 0:
        return (u + s) // R
    return (u - s - 1) // R


def floor_mul_block(alpha: AlphaSpec, n_lo: int, n_hi: int) -> np.ndarray:
    """[alpha*n] for n in [n_lo, n_hi), exact, as an int64 array."""
    if n_lo < 0 or n_hi < n_lo:
        raise ValueError("bad block range")
    if not alpha.is_quadratic:
        return np.array([floor_mul(alpha, n) for n in range(n_lo, n_hi)],
                        dtype=np.int64)
    P, Q, R, d = _triple_for(alpha, use_lambda=False)
    nmax = max(abs(n_lo), abs(n_hi))
    if d * Q * Q * nmax * nmax < _INT64_SAFE and abs(P) * nmax < _INT64_SAFE:
        ns = np.arange(n_lo, n_hi, dtype=np.int64)
        return _floor_block_ints(P, Q, R, d, ns)
    return np.array([exact_floor(alpha.value * n) for n in range(n_lo, n_hi)],  # type: ignore[operator]
                    dtype=np.int64)


def lam_floor_block(alpha: AlphaSpec, m_lo: int, m_hi: int) -> np.ndarray:
    """[m/alpha] for m in [m_lo, m_hi), exact."""
    if not alpha.is_quadratic:
        lam_lo, lam_hi = alpha.lam_bounds()
        out = np.empty(m_hi - m_lo, dtype=np.int64)
        for i, m in enumerate(range(m_lo, m_hi)):
            k_lo = (lam_lo.numerator * m) // lam_lo.denominator
            k_hi = (lam_hi.numerator * m) // lam_hi.denominator
            if k_lo != k_hi:
                raise PrecisionError(f"floor(m/alpha) undecided at m={m}")
            out[i] = k_lo
        return out
    P, Q, R, d = _triple_for(alpha, use_lambda=True)
    mmax = max(abs(m_lo), abs(m_hi))
    if d * Q * Q * mmax * mmax < _INT64_SAFE and abs(P) * mmax < _INT64_SAFE:
        ms = np.arange(m_lo, m_hi, dtype=np.int64)
        return _floor_block_ints(P, Q, R, d, ms)
    lam = alpha.lam_field()
    return np.array([exact_floor(lam * m) for m in range(m_lo, m_hi)],
                    dtype=np.int64)


def window_hits_block(alpha: AlphaSpec, m_lo: int, m_hi: int) -> np.ndarray:
    """Boolean array: {m/alpha} > 1 - 1/alpha for m in [m_lo, m_hi), exact.

    With k = [m/alpha], membership is the sign of (m+1)/alpha - (k+1),
    decided by integer comparisons in the quadratic field.
    """
    if m_lo < 1:
        raise ValueError("m must be >= 1")
    if not alpha.is_quadratic:
        return np.array([frac_in_window(alpha, m) for m in range(m_lo, m_hi)],
                        dtype=bool)
    P, Q, R, d = _triple_for(alpha, use_lambda=True)
    ks = lam_floor_block(alpha, m_lo, m_hi)
    ms = np.arange(m_lo, m_hi, dtype=np.int64)
    # sign of U + V sqrt(d), U = (m+1)P - R(k+1), V = (m+1)Q
    U = (ms + 1) * P - R * (ks + 1)
    V = (ms + 1) * Q
    u_max = int(np.abs(U).max(initial=0))
    v_max = int(np.abs(V).max(initial=0))
    if u_max * u_max >= _INT64_SAFE or d * v_max * v_max >= _INT64_SAFE:
        return np.array([frac_in_window(alpha, m) for m in range(m_lo, m_hi)],
                        dtype=bool)
    lhs = U * U
    rhs = d * V * V
    pos = np.where(
        (U >= 0) & (V >= 0), (U > 0) | (V > 0),
        np.where((U <= 0) & (V <= 0), False,
                 np.where(U > 0, lhs > rhs, rhs > lhs)),
    )
    return pos.astype(bool)


# ---------------------------------------------------------------------------
# Continued fractions and convergents
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CFExpansion:
    """Partial quotients, split into a preperiod and a repeating period.

    ``period`` is empty for prefix-only expansions (decimal inputs and
    rationals); quadratic irrationals always acquire a period.  ``terminated``
    marks a rational whose expansion is complete.
    """

    preperiod: tuple[int, ...]
    period: tuple[int, ...]
    terms_available: int
    source: object = field(compare=False, default=None)
    terminated: bool = False

    def quotients(self, k: int) -> list[int]:
        """First k partial quotients (cycling the period as needed).

        For a terminated rational, requests past the end return the full
        finite expansion; for an uncertified prefix they raise
        :class:`PrecisionError`.
        """
        if k <= len(self.preperiod):
            return list(self.preperiod[:k])
        if not self.period:
            if k > len(self.preperiod) and not self.terminated:
                raise PrecisionError(
                    f"only {len(self.preperiod)} certified quotients available"
                )
            return list(self.preperiod)
        out = list(self.preperiod)
        i = 0
        while len(out) < k:
            out.append(self.period[i % len(self.period)])
            i += 1
        return out


def _cf_of_rational(x: Fraction, terms: int) -> tuple[tuple[int, ...], bool]:
    out: list[int] = []
    num, den = x.numerator, x.denominator
    while den and len(out) < terms:
        a, rem = divmod(num, den)
        out.append(a)
        num, den = den, rem
    return tuple(out), den == 0


def cf_expand_value(x: Union[QField, Fraction, int], terms: int) -> CFExpansion:
    """Continued fraction of an exact value.

    Quadratic irrationals run the exact Gauss map in Q(sqrt(d)); state
    recurrence detects the period.  Rationals terminate (period empty).
    """
    if terms < 1:
        raise ValueError("terms must be >= 1")
    if isinstance(x, int):
        x = Fraction(x)
    if isinstance(x, Fraction):
        pre, done = _cf_of_rational(x, terms)
        return CFExpansion(pre, (), len(pre), source=x, terminated=done)
    if x.is_rational:
        pre, done = _cf_of_rational(x.p, terms)
        return CFExpansion(pre, (), len(pre), source=x.p, terminated=done)

    quotients: list[int] = []
    seen: dict[QField, int] = {}
    state = x
    pre: tuple[int, ...] = ()
    per: tuple[int, ...] = ()
    while len(quotients) < terms:
        if state in seen:
            i = seen[state]
            pre, per = tuple(quotients[:i]), tuple(quotients[i:])
            break
        seen[state] = len(quotients)
        a = exact_floor(state)
        quotients.append(a)
        state = (state - a).inverse()
    else:
        # no recurrence inside the requested horizon; report prefix only
        return CFExpansion(tuple(quotients), (), terms, source=x)
    return CFExpansion(pre, per, terms, source=x)


def _certified_prefix(lo: Fraction, hi: Fraction) -> tuple[int, ...]:
    """Partial quotients shared by every real in (lo, hi).

    Reals with a common quotient prefix form an interval, so agreement of the
    endpoint expansions certifies the prefix; the endpoints being rational,
    their last agreeing term is dropped as a termination artefact.
    """
    cf_lo, _ = _cf_of_rational(lo, 400)
    cf_hi, _ = _cf_of_rational(hi, 400)
    common = 0
    for a, b in zip(cf_lo, cf_hi):
        if a != b:
            break
        common += 1
    certified = max(0, min(common, min(len(cf_lo), len(cf_hi)) - 1))
    return cf_lo[:certified]


def _cf_of_decimal(alpha: AlphaSpec, terms: int) -> CFExpansion:
    lo, hi = alpha.bounds()
    prefix = _certified_prefix(lo, hi)
    if len(prefix) < terms:
        raise PrecisionError(
            f"only {len(prefix)} continued-fraction terms certified by "
            f"{alpha.precision} digits; {terms} requested"
        )
    return CFExpansion(tuple(prefix[:terms]), (), terms,
                       source=("interval", lo, hi))


def cf_expand(alpha: AlphaSpec, terms: int) -> CFExpansion:
    """First ``terms`` partial quotients of alpha, certified exact."""
    if alpha.is_quadratic:
        return cf_expand_value(alpha.value, terms)  # type: ignore[arg-type]
    return _cf_of_decimal(alpha, terms)


@dataclass(frozen=True)
class Convergent:
    """Rational approximation a/q with residual theta = (value - a/q) q^2."""

    a: int
    q: int
    theta: float

    def __post_init__(self) -> None:
        if self.q < 1:
            raise ValueError("denominator must be positive")
        if math.gcd(self.a, self.q) != 1:
            raise ValueError("a/q not in lowest terms")


def _theta_for(source, a: int, q: int) -> float:
    """(value - a/q) * q^2 with certified enclosure width < 1e-12."""
    if isinstance(source, Fraction):
        return float((source - Fraction(a, q)) * q * q)
    if isinstance(source, QField):
        exact = (source - Fraction(a, q)) * (q * q)
        digits = max(working_dps(), 25 + len(str(q)))
        return float(exact.to_mpf(digits))
    if isinstance(source, tuple) and source and source[0] == "interval":
        _, lo, hi = source
        t_lo = (lo - Fraction(a, q)) * q * q
        t_hi = (hi - Fraction(a, q)) * q * q
        if t_hi - t_lo > Fraction(1, 10**12):
            raise PrecisionError(
                f"theta enclosure wider than 1e-12 at q={q}; re-supply digits"
            )
        return float((t_lo + t_hi) / 2)
    raise TypeError(f"cannot compute theta for source {type(source)}")


def convergents(cf: CFExpansion, k: int) -> list[Convergent]:
    """First k convergents via the standard recurrence, with residuals."""
    qs = cf.quotients(k)
    out: list[Convergent] = []
    h0, h1 = 1, 0  # p_{-1}, p_{-2} style seeds
    k0, k1 = 0, 1
    for a in qs:
        h0, h1 = a * h0 + h1, h0
        k0, k1 = a * k0 + k1, k0
        g = math.gcd(h0, k0)
        out.append(Convergent(h0 // g, k0 // g, _theta_for(cf.source, h0 // g, k0 // g)))
    return out


def _lam_expansion(alpha: AlphaSpec, min_terms: int = 32) -> CFExpansion:
    """Expansion of 1/alpha with the period found when quadratic."""
    if alpha.is_quadratic:
        lam = alpha.lam_field()
        terms = min_terms
        while True:
            cf = cf_expand_value(lam, terms)
            if cf.period or cf.terminated:
                return cf
            if terms > 1 << 16:
                return cf  # pathological surd; prefix-only
            terms *= 2
    lam_lo, lam_hi = alpha.lam_bounds()
    prefix = _certified_prefix(lam_lo, lam_hi)
    return CFExpansion(tuple(prefix), (), len(prefix), source=alpha)


def convergent_near(alpha: AlphaSpec, q_max: int) -> Convergent:
    """Convergent of 1/alpha with the largest denominator q <= q_max."""
    if q_max < 1:
        raise ValueError("q_max must be >= 1")
    lam_cf = _lam_expansion(alpha)
    best: Convergent | None = None
    k = 1
    while True:
        try:
            convs = convergents(lam_cf, k)
        except PrecisionError:
            if best is None:
                raise
            return best
        c = convs[-1]
        if c.q > q_max:
            assert best is not None, "q=1 convergent always fits"
            return best
        best = c
        if len(convs) < k:  # finite expansion exhausted
            return best
        k += 1


def max_partial_quotient(cf: CFExpansion) -> int:
    """Max over the available terms (one full period when periodic)."""
    terms = list(cf.preperiod) + list(cf.period)
    if not terms:
        raise ValueError("expansion has no terms")
    return max(terms)
