"""Exact rational arrays for order-independence checks.

A ``RationalArray`` stores Python-int numerators (numpy object array) over
one shared positive denominator.  That keeps elementwise arithmetic at
plain big-int speed, which matters for 729-tap stencils, while results stay
exact.  Only the operations the stencil evaluator needs are provided.
"""

from fractions import Fraction
from math import gcd

import numpy as np

from .errors import UnsupportedOperator


def _lcm(a, b):
    return a // gcd(a, b) * b


class RationalArray:
    __slots__ = ("num", "den")
    __array_priority__ = 100  # make numpy defer to our reflected operators

    def __init__(self, num, den=1):
        if den <= 0:
            raise ValueError("denominator must be positive")
        self.num = num
        self.den = den

    @classmethod
    def from_fractions(cls, values):
        vals = np.asarray(values, dtype=object)
        den = 1
        for v in vals.flat:
            den = _lcm(den, Fraction(v).denominator)
        num = np.empty(vals.shape, dtype=object)
        for i, v in enumerate(vals.flat):
            v = Fraction(v)
            num.flat[i] = v.numerator * (den // v.denominator)
        return cls(num, den)

    @classmethod
    def full(cls, shape, value):
        v = Fraction(value)
        num = np.empty(shape, dtype=object)
        num.fill(v.numerator)
        return cls(num, v.denominator)

    @property
    def shape(self):
        return self.num.shape

    @property
    def ndim(self):
        return self.num.ndim

    def copy(self):
        return RationalArray(self.num.copy(), self.den)

    def to_fractions(self):
        out = np.empty(self.num.shape, dtype=object)
        for i, n in enumerate(self.num.flat):
            out.flat[i] = Fraction(n, self.den)
        return out

    def rescaled(self, den):
        """Same values over a multiple of the current denominator."""
        if den == self.den:
            return self
        return RationalArray(self.num * (den // self.den), den)

    def normalized(self):
        g = self.den
        for n in self.num.flat:
            g = gcd(g, n)
            if g == 1:
                return self
        return RationalArray(self.num // g, self.den // g)

    # indexing
    def __getitem__(self, idx):
        return RationalArray(self.num[idx], self.den)

    def __setitem__(self, idx, value):
        if isinstance(value, RationalArray):
            L = _lcm(self.den, value.den)
            if L != self.den:
                self.num = self.num * (L // self.den)
                self.den = L
            self.num[idx] = value.num * (L // value.den)
        else:
            self[idx] = RationalArray.full(np.shape(self.num[idx]), value)

    # arithmetic
    @staticmethod
    def _coerce(x):
        if isinstance(x, RationalArray):
            return x
        if isinstance(x, (int, Fraction)):
            return Fraction(x)
        raise TypeError(f"cannot combine RationalArray with {type(x).__name__}")

    def __add__(self, other):
        o = self._coerce(other)
        if isinstance(o, Fraction):
            L = _lcm(self.den, o.denominator)
            return RationalArray(self.num * (L // self.den) + o.numerator * (L // o.denominator), L)
        if self.den == o.den:
            return RationalArray(self.num + o.num, self.den)
        L = _lcm(self.den, o.den)
        return RationalArray(self.num * (L // self.den) + o.num * (L // o.den), L)

    __radd__ = __add__

    def __neg__(self):
        return RationalArray(-self.num, self.den)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        o = self._coerce(other)
        if isinstance(o, Fraction):
            return RationalArray(self.num * o.numerator, self.den * o.denominator)
        return RationalArray(self.num * o.num, self.den * o.den)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._coerce(other)
        if isinstance(o, RationalArray):
            raise UnsupportedOperator("elementwise division is not supported in exact mode")
        if o == 0:
            raise ZeroDivisionError("division by zero constant")
        sign = 1 if o > 0 else -1
        return RationalArray(self.num * (sign * o.denominator), self.den * abs(o.numerator))

    def __rtruediv__(self, other):
        raise UnsupportedOperator("division by a grid value is not supported in exact mode")

    def equals(self, other):
        """Elementwise exact equality as a bool array."""
        return self.num * other.den == other.num * self.den


def where(mask, a, b):
    """Exact counterpart of np.where for two RationalArrays."""
    if a.den == b.den:
        return RationalArray(np.where(mask, a.num, b.num), a.den)
    L = _lcm(a.den, b.den)
    num = np.where(mask, a.num * (L // a.den), b.num * (L // b.den))
    return RationalArray(num, L)


def pad(a, width, fill):
    """Pad every axis by ``width`` cells of constant ``fill``."""
    f = Fraction(fill)
    L = _lcm(a.den, f.denominator)
    num = np.empty(tuple(s + 2 * width for s in a.shape), dtype=object)
    num.fill(f.numerator * (L // f.denominator))
    num[tuple(slice(width, width + s) for s in a.shape)] = a.num * (L // a.den)
    return RationalArray(num, L)


def lincomb(coefs, arrays):
    """sum(c * a) over paired Fraction coefficients and RationalArrays.

    Works on numerators over common denominators, one multiply-add per term.
    """
    D = 1
    for c in coefs:
        D = _lcm(D, c.denominator)
    L = 1
    for a in arrays:
        L = _lcm(L, a.den)
    num = None
    for c, a in zip(coefs, arrays):
        k = c.numerator * (D // c.denominator) * (L // a.den)
        num = k * a.num if num is None else num + k * a.num
    return RationalArray(num, D * L)
