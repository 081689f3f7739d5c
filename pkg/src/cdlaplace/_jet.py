"""Forward-mode truncated Taylor arithmetic on numpy arrays.

A Jet stores the coefficients of a multivariate Taylor polynomial in a small
number of formal directions, truncated at a fixed total order.  Running the
closed-form kernel expressions through Jet arithmetic yields exact mixed
partial derivatives with respect to the phase components, which is how the
Cartesian-mode shift operators of order >= 1 are evaluated without
finite-difference noise.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["Jet", "jet_variable"]


def _trunc_keys(nvars: int, order: int):
    if nvars == 0:
        return [()]
    keys = []
    for head in range(order + 1):
        for tail in _trunc_keys(nvars - 1, order - head):
            keys.append((head,) + tail)
    return keys


class Jet:
    """Truncated Taylor polynomial with ndarray coefficients.

    coeffs maps exponent tuples (one entry per direction) to numpy arrays or
    floats; terms of total degree above `order` are dropped.
    """

    __slots__ = ("nvars", "order", "coeffs")

    def __init__(self, nvars: int, order: int, coeffs: dict):
        self.nvars = nvars
        self.order = order
        self.coeffs = coeffs

    # -- constructors --------------------------------------------------
    @classmethod
    def constant(cls, value, nvars: int, order: int) -> "Jet":
        return cls(nvars, order, {(0,) * nvars: value})

    def value(self):
        return self.coeffs.get((0,) * self.nvars, 0.0)

    def coefficient(self, key: tuple):
        return self.coeffs.get(tuple(key), 0.0)

    def derivative(self, key: tuple):
        """Mixed partial derivative d^{|key|}/dx^key at the base point."""
        fact = 1.0
        for k in key:
            fact *= math.factorial(k)
        return self.coefficient(key) * fact

    # -- ring operations ------------------------------------------------
    def _coerce(self, other) -> "Jet":
        if isinstance(other, Jet):
            return other
        return Jet.constant(other, self.nvars, self.order)

    def __add__(self, other):
        o = self._coerce(other)
        out = dict(self.coeffs)
        for k, v in o.coeffs.items():
            out[k] = out[k] + v if k in out else v
        return Jet(self.nvars, self.order, out)

    __radd__ = __add__

    def __neg__(self):
        return Jet(self.nvars, self.order, {k: -v for k, v in self.coeffs.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        o = self._coerce(other)
        out: dict = {}
        for ka, va in self.coeffs.items():
            da = sum(ka)
            for kb, vb in o.coeffs.items():
                if da + sum(kb) > self.order:
                    continue
                k = tuple(x + y for x, y in zip(ka, kb))
                prod = va * vb
                out[k] = out[k] + prod if k in out else prod
        return Jet(self.nvars, self.order, out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._coerce(other)
        return self * o._reciprocal()

    def __rtruediv__(self, other):
        return self._coerce(other) * self._reciprocal()

    def _nilpotent_and_base(self):
        base = self.value()
        rest = {k: v for k, v in self.coeffs.items() if any(k)}
        return base, Jet(self.nvars, self.order, rest)

    def _compose_series(self, derivs) -> "Jet":
        """sum_k derivs[k]/k! * (self - base)^k; derivs[k] at the base point."""
        _, delta = self._nilpotent_and_base()
        acc = Jet.constant(derivs[0], self.nvars, self.order)
        power = Jet.constant(1.0, self.nvars, self.order)
        fact = 1.0
        for k in range(1, self.order + 1):
            power = power * delta
            fact *= k
            if not power.coeffs:
                break
            acc = acc + power * (derivs[k] / fact)
        return acc

    def compose(self, derivs) -> "Jet":
        """Compose with a scalar function given its derivatives at the base."""
        return self._compose_series(derivs)

    def __pow__(self, k: int) -> "Jet":
        acc = Jet.constant(1.0, self.nvars, self.order)
        for _ in range(int(k)):
            acc = acc * self
        return acc

    def _reciprocal(self) -> "Jet":
        base, _ = self._nilpotent_and_base()
        derivs = []
        for k in range(self.order + 1):
            derivs.append(((-1.0) ** k) * math.factorial(k) * base ** (-(k + 1)))
        return self._compose_series(derivs)

    # -- elementary functions --------------------------------------------
    def sqrt(self) -> "Jet":
        base, _ = self._nilpotent_and_base()
        root = np.sqrt(base)
        derivs = [root]
        coef = 0.5
        for k in range(1, self.order + 1):
            derivs.append(coef * base ** (0.5 - k) if k > 0 else root)
            coef *= 0.5 - k
        return self._compose_series(derivs)

    def exp(self) -> "Jet":
        e = np.exp(self.value())
        return self._compose_series([e] * (self.order + 1))

    def sin(self) -> "Jet":
        base = self.value()
        s, c = np.sin(base), np.cos(base)
        cycle = [s, c, -s, -c]
        return self._compose_series([cycle[k % 4] for k in range(self.order + 1)])

    def cos(self) -> "Jet":
        base = self.value()
        s, c = np.sin(base), np.cos(base)
        cycle = [c, -s, -c, s]
        return self._compose_series([cycle[k % 4] for k in range(self.order + 1)])


def jet_variable(value, index: int, nvars: int, order: int) -> Jet:
    """Jet representing (value + d_index) to the given truncation order."""
    key0 = (0,) * nvars
    key1 = tuple(1 if i == index else 0 for i in range(nvars))
    coeffs = {key0: value}
    if order >= 1:
        coeffs[key1] = 1.0
    return Jet(nvars, order, coeffs)
