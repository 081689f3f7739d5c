"""Small multivariate polynomials with exact derivatives.

Used as coefficient functions and as test functions when verifying operator
factorizations; evaluation works on floats, numpy arrays, and Jets.
"""

from __future__ import annotations

from dataclasses import dataclass

__all__ = ["Polynomial"]


@dataclass(frozen=True)
class Polynomial:
    nvars: int
    coeffs: tuple  # tuple of (multi_index, float)

    @classmethod
    def from_dict(cls, nvars: int, d: dict) -> "Polynomial":
        items = tuple(
            (tuple(int(i) for i in k), float(v)) for k, v in d.items() if v != 0.0
        )
        return cls(nvars, items)

    @classmethod
    def constant(cls, nvars: int, c: float) -> "Polynomial":
        return cls.from_dict(nvars, {(0,) * nvars: c})

    def eval(self, x):
        out = None
        for mono, c in self.coeffs:
            term = c
            for l, e in enumerate(mono):
                for _ in range(e):
                    term = term * x[l]
            out = term if out is None else out + term
        if out is None:
            return 0.0
        return out

    def deriv(self, axis: int) -> "Polynomial":
        d = {}
        for mono, c in self.coeffs:
            e = mono[axis]
            if e == 0:
                continue
            m2 = tuple(v - 1 if l == axis else v for l, v in enumerate(mono))
            d[m2] = d.get(m2, 0.0) + c * e
        return Polynomial.from_dict(self.nvars, d)

    def deriv_multi(self, multi) -> "Polynomial":
        p = self
        for axis, k in enumerate(multi):
            for _ in range(k):
                p = p.deriv(axis)
        return p

    def degree(self) -> int:
        return max((sum(m) for m, _ in self.coeffs), default=0)

    def __mul__(self, other):
        if isinstance(other, Polynomial):
            d = {}
            for m1, c1 in self.coeffs:
                for m2, c2 in other.coeffs:
                    m = tuple(a + b for a, b in zip(m1, m2))
                    d[m] = d.get(m, 0.0) + c1 * c2
            return Polynomial.from_dict(self.nvars, d)
        return Polynomial(
            self.nvars, tuple((m, c * float(other)) for m, c in self.coeffs)
        )

    __rmul__ = __mul__

    def __add__(self, other: "Polynomial") -> "Polynomial":
        d = dict(self.coeffs)
        for m, c in other.coeffs:
            d[m] = d.get(m, 0.0) + c
        return Polynomial.from_dict(self.nvars, d)
