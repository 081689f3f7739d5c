"""Function-originals: support domains, growth metadata, standard fixtures.

An original is a function R^n -> A_r that is almost everywhere continuous,
has at most first-kind discontinuities per axis, satisfies a Hölder
condition, and grows no faster than exponentially; the growth constants
(a_1, a_{-1}, C) bound |f| by C exp((q_v, t)) per sign quadrant and fix the
strip a_1 < Re p < a_{-1} on which the transform converges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .kernel import partial_sums

__all__ = [
    "SupportSpec",
    "OriginalFn",
    "standard_original",
    "validate_original",
    "ValidationReport",
    "STANDARD_NAMES",
]


@dataclass(frozen=True)
class SupportSpec:
    """Support of an original: whole space, sign quadrant, or a box."""

    kind: str  # "whole_space" | "quadrant" | "box"
    quadrant: tuple = ()  # sign vector in {-1, +1}^n
    bounds: tuple = ()  # per-axis (a_j, b_j), +-inf allowed

    def __post_init__(self):
        if self.kind not in ("whole_space", "quadrant", "box"):
            raise ValueError(f"unknown support kind {self.kind!r}")
        if self.kind == "quadrant":
            if not self.quadrant or any(v not in (-1, 1) for v in self.quadrant):
                raise ValueError("quadrant needs a sign vector over {-1,+1}")
        if self.kind == "box":
            for a, b in self.bounds:
                if not a < b:
                    raise ValueError("box bounds need a_j < b_j")

    @classmethod
    def whole(cls, n: int) -> "SupportSpec":
        return cls("whole_space")

    @classmethod
    def positive(cls, n: int) -> "SupportSpec":
        return cls("quadrant", quadrant=(1,) * n)

    @classmethod
    def box(cls, bounds) -> "SupportSpec":
        return cls("box", bounds=tuple(tuple(b) for b in bounds))

    def axis_interval(self, l: int, n: int) -> tuple:
        """Integration interval along axis l (0-based)."""
        if self.kind == "whole_space":
            return (-np.inf, np.inf)
        if self.kind == "quadrant":
            return (0.0, np.inf) if self.quadrant[l] > 0 else (-np.inf, 0.0)
        return self.bounds[l]

    def indicator(self, t: np.ndarray) -> np.ndarray:
        t = np.atleast_2d(t)
        ok = np.ones(t.shape[0], dtype=bool)
        if self.kind == "quadrant":
            for l, v in enumerate(self.quadrant):
                ok &= v * t[:, l] >= 0
        elif self.kind == "box":
            for l, (a, b) in enumerate(self.bounds):
                ok &= (t[:, l] >= a) & (t[:, l] <= b)
        return ok


@dataclass
class OriginalFn:
    """Sampled original with growth/Hölder metadata and optional derivatives.

    eval maps (N, n) -> (N,) for real-valued originals or (N, dim) for
    algebra-valued ones; evaluation must be pure.  derivative(multi) returns
    another OriginalFn when closed-form derivatives are known.
    """

    n: int
    eval: Callable[[np.ndarray], np.ndarray]
    support: SupportSpec
    strip: tuple = (-math.inf, math.inf)  # (a_1, a_{-1})
    growth_c: float = 1.0
    holder: tuple = (1.0, 1.0)  # (alpha, A)
    smoothness: int = 0
    name: str = ""
    params: dict = field(default_factory=dict)
    deriv_factory: Optional[Callable] = None
    osc_scale: float = 0.0  # characteristic oscillation frequency of f
    breaks: tuple = ()  # per-axis kink locations; quadrature panels split there

    def __post_init__(self):
        a1, am1 = self.strip
        if not a1 < am1:
            raise ValueError(
                "empty or degenerate strip a_1 >= a_{-1}: the transform "
                "cannot be inverted numerically"
            )

    def __call__(self, t: np.ndarray) -> np.ndarray:
        t = np.atleast_2d(np.asarray(t, dtype=np.float64))
        return self.eval(t)

    def derivative(self, multi) -> "OriginalFn":
        multi = tuple(int(v) for v in multi)
        if self.deriv_factory is None:
            raise ValueError(f"original {self.name!r} has no closed-form derivatives")
        if sum(multi) > self.smoothness:
            raise ValueError("requested derivative order exceeds smoothness")
        return self.deriv_factory(multi)

    def restrict_axis(self, l: int, value: float) -> "OriginalFn":
        """Trace original on the hyperplane t_l = value (n-1 variables)."""
        n = self.n

        def ev(tt):
            tt = np.atleast_2d(tt)
            full = np.insert(tt, l, value, axis=1)
            return self.eval(full)

        if self.support.kind == "box":
            bounds = tuple(b for i, b in enumerate(self.support.bounds) if i != l)
            supp = SupportSpec.box(bounds) if bounds else SupportSpec.whole(n - 1)
        elif self.support.kind == "quadrant":
            q = tuple(v for i, v in enumerate(self.support.quadrant) if i != l)
            supp = SupportSpec("quadrant", quadrant=q) if q else SupportSpec.whole(n - 1)
        else:
            supp = SupportSpec.whole(n - 1)
        return OriginalFn(
            n - 1, ev, supp, self.strip, self.growth_c, self.holder,
            self.smoothness, f"{self.name}|t{l + 1}={value:g}", dict(self.params),
        )


# ---------------------------------------------------------------------------
# standard library of originals
# ---------------------------------------------------------------------------


def _gaussian_family(n, sigma=1.0, center=None, norm=1.0):
    center = np.zeros(n) if center is None else np.asarray(center, dtype=float)

    def make(multi):
        def ev(t):
            t = np.atleast_2d(t)
            x = (t - center) / sigma
            vals = norm * np.exp(-0.5 * np.sum(x * x, axis=1))
            return vals * _hermite_factor(x, multi, sigma)

        return OriginalFn(
            n, ev, SupportSpec.whole(n),
            (-math.inf, math.inf), norm, (1.0, 1.0), 1_000,
            name=f"gaussian^{multi}", params={"sigma": sigma},
            deriv_factory=lambda mm, base=multi: make(
                tuple(a + b for a, b in zip(base, mm))
            ),
        )

    def _hermite_factor(x, multi, s):
        # d/dt e^{-x^2/2} with x=(t-c)/s brings down (-x/s) per order via
        # the probabilists' Hermite polynomials: d^k/dt^k -> (-1/s)^k He_k(x)
        out = np.ones(x.shape[0])
        for l, k in enumerate(multi):
            if k:
                out = out * (-1.0 / s) ** k * _hermite(k, x[:, l])
        return out

    return make


def _hermite(k, x):
    h0 = np.ones_like(x)
    if k == 0:
        return h0
    h1 = x
    for m in range(1, k):
        h0, h1 = h1, x * h1 - m * h0
    return h1


def _exp_decay_family(n, b=1.0):
    def make(multi):
        order = sum(multi)

        def ev(t):
            t = np.atleast_2d(t)
            s1 = t.sum(axis=1)
            return (-b) ** order * np.exp(-b * s1)

        return OriginalFn(
            n, ev, SupportSpec.positive(n), (-b, math.inf), 1.0, (1.0, b),
            1_000, name="exp_decay", params={"b": b},
            deriv_factory=lambda mm, base=multi: make(
                tuple(a + c for a, c in zip(base, mm))
            ),
        )

    return make


def standard_original(name: str, n: int, **params) -> OriginalFn:
    """Closed-form test originals with exact derivatives and growth data.

    Names: exp_decay(b), gaussian(sigma, center, norm), poly_exp(powers, b),
    box_indicator(bounds), mollified_delta(tau, eps), sine_packet(omega,
    sigma, axis).
    """
    if name == "exp_decay":
        b = float(params.get("b", 1.0))
        return _exp_decay_family(n, b)((0,) * n)

    if name == "gaussian":
        sigma = float(params.get("sigma", 1.0))
        center = params.get("center")
        norm = float(params.get("norm", 1.0))
        return _gaussian_family(n, sigma, center, norm)((0,) * n)

    if name == "poly_exp":
        powers = tuple(params.get("powers", (1,) + (0,) * (n - 1)))
        b = float(params.get("b", 1.0))

        def make(multi):
            def ev(t):
                t = np.atleast_2d(t)
                vals = np.ones(t.shape[0])
                for l in range(t.shape[1]):
                    vals = vals * _poly_exp_axis(t[:, l], powers[l], multi[l], b)
                return vals

            return OriginalFn(
                n, ev, SupportSpec.positive(n), (-b, math.inf), 1.0,
                (1.0, 10.0), 1_000, name="poly_exp",
                params={"powers": powers, "b": b},
                deriv_factory=lambda mm, base=multi: make(
                    tuple(a + c for a, c in zip(base, mm))
                ),
            )

        def _poly_exp_axis(x, mpow, k, bb):
            # d^k/dx^k [x^m e^{-b x}] via Leibniz
            out = np.zeros_like(x)
            for i in range(k + 1):
                if mpow - i < 0:
                    continue
                c = math.comb(k, i) * math.perm(mpow, i) * (-bb) ** (k - i)
                out += c * x ** (mpow - i)
            return out * np.exp(-bb * x)

        return make((0,) * n)

    if name == "box_indicator":
        bounds = params.get("bounds", [(0.0, 1.0)] * n)
        supp = SupportSpec.box(bounds)

        def ev(t):
            return supp.indicator(t).astype(float)

        return OriginalFn(
            n, ev, supp, (-math.inf, math.inf), 1.0, (1.0, 1.0), 0,
            name="box_indicator", params={"bounds": tuple(map(tuple, bounds))},
        )

    if name == "mollified_delta":
        eps = float(params.get("eps", 1e-2))
        tau = np.asarray(params.get("tau", np.zeros(n)), dtype=float)
        norm = (eps * math.sqrt(math.pi)) ** (-n)

        def ev(t):
            t = np.atleast_2d(t)
            x = (t - tau) / eps
            return norm * np.exp(-np.sum(x * x, axis=1))

        return OriginalFn(
            n, ev, SupportSpec.whole(n), (-math.inf, math.inf), norm,
            (1.0, 2 * norm / eps), 1_000, name="mollified_delta",
            params={"eps": eps, "tau": tuple(tau)},
        )

    if name == "sine_packet":
        # sin(omega t_axis) e^{-b s_1} on the positive quadrant; for n=1 this
        # is the classical damped oscillation with image w/((s+b)^2 + w^2)
        omega = float(params.get("omega", 3.0))
        b = float(params.get("b", 1.0))
        axis = int(params.get("axis", 0))

        def ev(t):
            t = np.atleast_2d(t)
            return np.sin(omega * t[:, axis]) * np.exp(-b * t.sum(axis=1))

        return OriginalFn(
            n, ev, SupportSpec.positive(n), (-b, math.inf), 1.0,
            (1.0, omega + b), 0, name="sine_packet",
            params={"omega": omega, "b": b, "axis": axis}, osc_scale=omega,
        )

    raise ValueError(f"unknown standard original {name!r}")


STANDARD_NAMES = (
    "exp_decay",
    "gaussian",
    "poly_exp",
    "box_indicator",
    "mollified_delta",
    "sine_packet",
)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


@dataclass
class ValidationReport:
    strip: tuple
    growth_violations: int
    growth_checked: int
    worst_growth_ratio: float
    holder_exponents: list
    notes: list

    @property
    def ok(self) -> bool:
        return self.growth_violations == 0


def validate_original(
    f: OriginalFn,
    radius: float = 8.0,
    samples_per_axis: int = 9,
    rng: Optional[np.random.Generator] = None,
) -> ValidationReport:
    """Report growth-bound violations and estimated Hölder exponents.

    Sampling-based and report-only: first-kind discontinuities are allowed,
    so nothing here is a hard gate.
    """
    rng = rng or np.random.default_rng(0)
    n = f.n
    a1, am1 = f.strip
    notes = []
    grid_1d = np.linspace(-radius, radius, samples_per_axis)
    mesh = np.stack(np.meshgrid(*([grid_1d] * n), indexing="ij"), axis=-1)
    pts = mesh.reshape(-1, n)
    vals = f(pts)
    mags = np.abs(vals) if vals.ndim == 1 else np.linalg.norm(vals, axis=1)

    violations = 0
    worst = 0.0
    for i, t in enumerate(pts):
        # q_v per Condition (4): slope a_1 on positive rays, a_{-1} negative
        bound = f.growth_c
        exponent = 0.0
        for l in range(n):
            if t[l] >= 0:
                exponent += (a1 if np.isfinite(a1) else -100.0) * t[l]
            else:
                exponent += (am1 if np.isfinite(am1) else 100.0) * t[l]
        with np.errstate(over="ignore"):
            bound = f.growth_c * np.exp(min(exponent, 600.0))
        ratio = mags[i] / bound if bound > 0 else np.inf
        worst = max(worst, ratio)
        if ratio > 1.0 + 1e-9:
            violations += 1
    if violations:
        notes.append(
            f"{violations}/{len(pts)} samples exceed C exp((q_v,t)) "
            f"(worst ratio {worst:.3g})"
        )

    # dyadic Hölder sampling per axis
    exps = []
    base_pts = rng.uniform(-1.0, 1.0, size=(12, n))
    hs = 2.0 ** -np.arange(3, 11)
    for l in range(n):
        ratios = []
        for t0 in base_pts:
            diffs = []
            for h in hs:
                tp = t0.copy()
                tp[l] += h
                d0 = f(t0[None, :])
                d1 = f(tp[None, :])
                dd = np.abs(d1 - d0).max()
                diffs.append(max(dd, 1e-300))
            diffs = np.log(diffs)
            slope = np.polyfit(np.log(hs), diffs, 1)[0]
            ratios.append(slope)
        exps.append(float(np.median(ratios)))
    return ValidationReport(
        strip=f.strip,
        growth_violations=violations,
        growth_checked=len(pts),
        worst_growth_ratio=float(worst),
        holder_exponents=exps,
        notes=notes,
    )
