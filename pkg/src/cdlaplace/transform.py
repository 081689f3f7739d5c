"""Forward and inverse multiparameter transforms by tensor quadrature.

The forward transform is F(p) = int f(t) exp(-u(p,t;zeta)) dt over the
support of f; the inverse reconstructs f(t) = (2 pi)^{-n} int F(a+p)
exp(u(a+p,t;zeta)) dp_1..dp_n over the purely imaginary directions, with the
principal value realized as symmetric truncation.  Error estimates come from
nested quadrature orders (forward) and truncation-radius doubling (inverse);
they are estimates, not bounds.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .algebra import CdNumber, mul_array
from .kernel import KernelSpec, kernel_contract, kernel_fields, kernel_matrix
from .originals import OriginalFn, SupportSpec

__all__ = [
    "QuadSpec",
    "ImageFn",
    "StripError",
    "QuadratureBudgetError",
    "forward",
    "forward_grid",
    "inverse",
    "inverse_grid",
    "strip_of",
    "axis_nodes",
    "tensor_grid",
]


class StripError(ValueError):
    """Evaluation requested outside the strip of convergence."""


class QuadratureBudgetError(RuntimeError):
    """Node budget exhausted before reaching the requested grid."""


@dataclass(frozen=True)
class QuadSpec:
    """Quadrature plan: per-axis rule, truncation, mapping, budget."""

    rule: str = "gauss_legendre"  # or "tanh_sinh"
    panels: int = 8
    order: int = 12
    radius: float = 8.0  # truncation radius for whole-line axes
    semi_infinite: str = "direct_truncation"  # or "exp_substitution"
    target_tol: float = 1e-8
    max_evals: int = 40_000_000
    inverse_radius: float = 10.0
    inverse_panels: int = 10
    inverse_order: int = 12
    error_mode: str = "nested"  # or "none"
    chunk: int = 4_000_000

    def __post_init__(self):
        if self.target_tol <= 0:
            raise ValueError("target_tol must be positive")

    def coarser(self) -> "QuadSpec":
        return dataclasses.replace(
            self,
            order=max(2, self.order - 3),
            inverse_order=max(2, self.inverse_order - 3),
            error_mode="none",
        )


def _gauss_panel(a: float, b: float, order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return mid + half * x, half * w


def _tanh_sinh(a: float, b: float, order: int):
    # fixed-level tanh-sinh on [a, b]; order plays the role of point count
    m = max(6, order)
    h = 3.0 / m
    k = np.arange(-m, m + 1)
    u = k * h
    x = np.tanh(0.5 * np.pi * np.sinh(u))
    w = h * 0.5 * np.pi * np.cosh(u) / np.cosh(0.5 * np.pi * np.sinh(u)) ** 2
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return mid + half * x, half * w


def _composite(a: float, b: float, quad: QuadSpec):
    if quad.rule == "tanh_sinh":
        return _tanh_sinh(a, b, quad.order * quad.panels)
    xs, ws = [], []
    edges = np.linspace(a, b, quad.panels + 1)
    for lo, hi in zip(edges[:-1], edges[1:]):
        x, w = _gauss_panel(lo, hi, quad.order)
        xs.append(x)
        ws.append(w)
    return np.concatenate(xs), np.concatenate(ws)


def axis_nodes(
    interval, quad: QuadSpec, decay_scale: float = 1.0, osc: float = 0.0,
    breaks=(),
):
    """Nodes and weights on one axis, mapping unbounded ends.

    Semi-infinite axes truncate where the kernel-plus-growth decay rate
    (decay_scale = re p - a_1) pushes the tail below target_tol, or use the
    substitution t = a - log(1-x)/(decay_scale+1) before the Gauss panels.
    Whole-line axes truncate at quad.radius.  osc is the fastest phase rate
    expected on the axis; the panel count grows with reach*osc so that each
    Gauss panel sees a bounded phase change.  Gauss panels are split at the
    interior kink locations in breaks.
    """
    a, b = interval
    if np.isfinite(a) and np.isfinite(b):
        return _pieces(a, b, quad, osc, breaks)
    if np.isfinite(a) and b == np.inf:
        if quad.semi_infinite == "exp_substitution":
            c = max(decay_scale, 0.0) + 1.0
            x, w = _composite(0.0, 1.0 - 1e-14, quad)
            t = a - np.log1p(-x) / c
            return t, w / (c * (1.0 - x))
        c = max(decay_scale, 0.05)
        reach = min((-math.log(quad.target_tol) + 4.0) / c, 600.0)
        return _pieces(a, a + reach, quad, osc, breaks)
    if a == -np.inf and np.isfinite(b):
        t, w = axis_nodes((-b, np.inf), quad, decay_scale, osc,
                          tuple(-v for v in breaks))
        return -t, w
    return _pieces(-quad.radius, quad.radius, quad, osc, breaks)


def _pieces(a: float, b: float, quad: QuadSpec, osc: float, breaks):
    cuts = [a] + sorted(v for v in breaks if a < v < b) + [b]
    xs, ws = [], []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        share = max(2, int(round(quad.panels * (hi - lo) / (b - a))))
        sub = dataclasses.replace(quad, panels=share)
        x, w = _composite(lo, hi, _osc_panels(sub, (hi - lo) * osc))
        xs.append(x)
        ws.append(w)
    return np.concatenate(xs), np.concatenate(ws)


def _osc_panels(quad: QuadSpec, total_phase: float) -> QuadSpec:
    need = int(math.ceil(abs(total_phase) / max(0.55 * quad.order, 1.0)))
    if need <= quad.panels:
        return quad
    return dataclasses.replace(quad, panels=need)


def tensor_grid(
    f: OriginalFn, quad: QuadSpec, re_p: float, osc: float = 0.0, pinned=None
):
    """Tensor nodes/weights over the support of f, plus a tail estimate.

    pinned maps 0-based axis indices to fixed values (trace transforms);
    those axes contribute a single unit-weight node.
    """
    n = f.n
    pinned = pinned or {}
    axes = []
    tail = 0.0
    a1, _ = f.strip
    osc = osc + f.osc_scale
    for l in range(n):
        if l in pinned:
            axes.append((np.array([pinned[l]]), np.array([1.0])))
            continue
        iv = f.support.axis_interval(l, n)
        scale = re_p - a1 if np.isfinite(a1) else 1.0
        brk = f.breaks[l] if l < len(f.breaks) else ()
        x, w = axis_nodes(iv, quad, scale, osc, brk)
        axes.append((x, w))
        if not (np.isfinite(iv[0]) and np.isfinite(iv[1])):
            c = max(scale, 0.25)
            reach = max(np.max(np.abs(x)) - max(iv[0], 0.0), 1.0)
            tail += f.growth_c * math.exp(-c * reach) / c
    count = int(np.prod([len(x) for x, _ in axes]))
    if count > quad.max_evals:
        raise QuadratureBudgetError(
            f"{count} tensor nodes exceed the budget {quad.max_evals}"
        )
    mesh = np.meshgrid(*[x for x, _ in axes], indexing="ij")
    nodes = np.stack([m.reshape(-1) for m in mesh], axis=-1)
    wmesh = np.meshgrid(*[w for _, w in axes], indexing="ij")
    weights = np.ones(count)
    for wm in wmesh:
        weights = weights * wm.reshape(-1)
    return nodes, weights, tail


def _check_strip(strip, re_p: float):
    a1, am1 = strip
    if not (a1 < re_p < am1):
        raise StripError(
            f"Re p = {re_p:g} outside the strip ({a1:g}, {am1:g})"
        )


def forward_grid(
    f: OriginalFn,
    spec: KernelSpec,
    p_batch: np.ndarray,
    quad: QuadSpec,
    shifts=None,
    pinned=None,
) -> tuple[np.ndarray, float]:
    """Transform of f at many p at once; returns ((M, dim), error estimate).

    pinned fixes t-axes (0-based) at given values: the trace transforms
    F^{n-1;t^j} integrate over the remaining axes with the full kernel.
    """
    pact = spec.p_active(np.atleast_2d(np.asarray(p_batch, dtype=np.float64)))
    for rp in np.unique(pact[:, 0]):
        _check_strip(f.strip, float(rp))
    re_min = float(pact[:, 0].min())
    osc = float(np.max(np.abs(pact[:, 1:]))) if pact.shape[1] > 1 else 0.0
    nodes, weights, tail = tensor_grid(f, quad, re_min, osc, pinned)
    fv = f(nodes)
    val = kernel_contract(
        spec, pact, nodes, weights, fv, shifts=shifts, chunk=quad.chunk
    )
    err = tail
    if quad.error_mode == "nested":
        nodes2, weights2, _ = tensor_grid(f, quad.coarser(), re_min, osc, pinned)
        fv2 = f(nodes2)
        val2 = kernel_contract(
            spec, pact, nodes2, weights2, fv2, shifts=shifts, chunk=quad.chunk
        )
        err = tail + float(np.max(np.abs(val - val2)))
    return val, err


def forward(
    f: OriginalFn, spec: KernelSpec, p, quad: QuadSpec
) -> tuple[CdNumber, float]:
    """Transform of a single p as a CdNumber with an error estimate."""
    if isinstance(p, CdNumber):
        p = p.promote(spec.r).coords
    p = np.asarray(p, dtype=np.float64)
    vals, err = forward_grid(f, spec, p[None, :], quad)
    return CdNumber(spec.r, vals[0]), err


# ---------------------------------------------------------------------------
# images
# ---------------------------------------------------------------------------


@dataclass
class ImageFn:
    """Lazily evaluated image F(p;zeta), quadrature- or closed-form-backed.

    smono attaches an exact S-monomial (per active axis); fd_steps attaches
    finite-difference shift factors for the cross-validation mode.  Both act
    on evaluation.
    """

    spec: KernelSpec
    strip: tuple
    kind: str  # "quadrature" | "kernel_point" | "callable"
    original: Optional[OriginalFn] = None
    quad: Optional[QuadSpec] = None
    point: Optional[np.ndarray] = None
    weight: Optional[np.ndarray] = None  # algebra coords multiplying from left
    fn: Optional[Callable] = None
    smono: tuple = ()
    pinned: dict = field(default_factory=dict)
    cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.smono:
            self.smono = (0,) * self.spec.n

    # -- constructors ---------------------------------------------------
    @classmethod
    def from_original(
        cls, f: OriginalFn, spec: KernelSpec, quad: QuadSpec, pinned=None
    ):
        return cls(
            spec, f.strip, "quadrature", original=f, quad=quad,
            pinned=dict(pinned or {}),
        )

    @classmethod
    def delta_image(cls, spec: KernelSpec, tau, weight=None):
        """Closed-form image exp(-u(p,tau;zeta)) of a point mass at tau."""
        w = None
        if weight is not None:
            w = weight.coords if isinstance(weight, CdNumber) else np.asarray(weight)
        return cls(
            spec, (-math.inf, math.inf), "kernel_point",
            point=np.asarray(tau, dtype=np.float64), weight=w,
        )

    @classmethod
    def from_callable(cls, spec: KernelSpec, strip, fn):
        """fn(pact (M, n+1), spec) -> (M, dim) closed-form image."""
        return cls(spec, strip, "callable", fn=fn)

    # -- evaluation -------------------------------------------------------
    def eval_grid(self, p_batch: np.ndarray) -> tuple[np.ndarray, float]:
        pact = self.spec.p_active(np.atleast_2d(np.asarray(p_batch, float)))
        shifts = self.smono if any(self.smono) else None
        if self.kind == "quadrature":
            return forward_grid(
                self.original, self.spec, pact, self.quad,
                shifts=shifts, pinned=self.pinned,
            )
        if self.kind == "kernel_point":
            k = kernel_matrix(self.spec, pact, self.point[None, :], shifts=shifts)
            vals = k[:, 0, :]
            if self.weight is not None:
                vals = mul_array(self.weight, vals)
            return vals, 0.0
        if any(self.smono):
            raise ValueError("exact S-monomials need a kernel-backed image")
        return self.fn(pact, self.spec), 0.0

    def eval(self, p) -> tuple[CdNumber, float]:
        if isinstance(p, CdNumber):
            p = p.promote(self.spec.r).coords
        vals, err = self.eval_grid(np.asarray(p, float)[None, :])
        return CdNumber(self.spec.r, vals[0]), err

    # -- shift operators ----------------------------------------------------
    def with_spec(self, spec: KernelSpec) -> "ImageFn":
        return dataclasses.replace(self, spec=spec, cache={})

    def t_shift(self, m) -> "ImageFn":
        """T_{(m)}: evaluate at zeta - (m) pi/2 (plain translation)."""
        mm = m.m if hasattr(m, "m") else m
        return self.with_spec(self.spec.shifted(mm))

    def s_apply(self, j: int, x: int = 1, method: str = "exact", h: float = 0.05):
        """S_{e_j}^x: exact derivative semantics on kernel-backed images.

        method="fd" returns a closure evaluating the central finite
        difference of order x in zeta_j instead (cross-validation mode).
        """
        if method == "exact":
            if self.kind == "callable":
                raise ValueError("exact S needs a kernel-backed image")
            m = list(self.smono)
            m[j - 1] += x
            return dataclasses.replace(self, smono=tuple(m), cache={})
        if method != "fd":
            raise ValueError("method must be 'exact' or 'fd'")
        base = self

        def fd_eval(p_batch):
            def level(step):
                vals = None
                # central difference of order x via binomial stencil
                for k in range(x + 1):
                    offs = (x / 2.0 - k) * step
                    mshift = [0.0] * base.spec.n
                    mshift[j - 1] = -offs / (0.5 * np.pi)
                    im = base.t_shift(tuple(mshift))
                    v, _ = im.eval_grid(p_batch)
                    coef = (-1.0) ** (k + x) * math.comb(x, k)
                    vals = coef * v if vals is None else vals + coef * v
                return vals / step ** x

            d1 = level(h)
            d2 = level(h / 2)
            return (4 * d2 - d1) / 3.0

        return fd_eval

    def apply_operator(self, op, p_batch: np.ndarray) -> tuple[np.ndarray, float]:
        """Evaluate (op F)(p) = sum_k a_k p^{pow_k} (S_{(m_k)} F)(p)."""
        pact = self.spec.p_active(np.atleast_2d(np.asarray(p_batch, float)))
        out = np.zeros((pact.shape[0], self.spec.dim))
        err = 0.0
        for term in op.terms:
            a, pw, m, s = term
            coeff = op.eval_p_coeff(pact, term)
            base = dataclasses.replace(
                self,
                smono=tuple(mi + si for mi, si in zip(self.smono, m)),
                cache={},
            )
            vals, e = base.eval_grid(pact)
            err += abs(e)
            if a is not None:
                vals = mul_array(a, vals)
            out += coeff[:, None] * vals
        return out, err


def strip_of(obj) -> tuple:
    """Strip of convergence of an original or an image."""
    return obj.strip


# ---------------------------------------------------------------------------
# inversion
# ---------------------------------------------------------------------------


def _imaginary_grid(spec: KernelSpec, a: float, radius: float, quad: QuadSpec):
    sub = dataclasses.replace(quad, panels=quad.inverse_panels, order=quad.inverse_order)
    axes = [_composite(-radius, radius, sub) for _ in range(spec.n)]
    count = int(np.prod([len(x) for x, _ in axes]))
    if count > quad.max_evals:
        raise QuadratureBudgetError(
            f"{count} inverse nodes exceed the budget {quad.max_evals}"
        )
    mesh = np.meshgrid(*[x for x, _ in axes], indexing="ij")
    xi = np.stack([m.reshape(-1) for m in mesh], axis=-1)
    weights = np.ones(count)
    for wm in np.meshgrid(*[w for _, w in axes], indexing="ij"):
        weights = weights * wm.reshape(-1)
    pact = np.concatenate([np.full((count, 1), a), xi], axis=1)
    return pact, weights


def _inverse_contract(spec, pact, weights, fvals, tpts, chunk=4_000_000):
    """(2 pi)^{-n} sum_m w_m F_m exp(u(p_m, t)) for each t (image on the left)."""
    tpts = np.atleast_2d(tpts)
    T = tpts.shape[0]
    M = pact.shape[0]
    dim = spec.dim
    out = np.zeros((T, dim))
    fb = {}
    step = max(1, int(chunk // max(T, 1)))
    for lo in range(0, M, step):
        hi = min(M, lo + step)
        comp0, fields = kernel_fields(spec, pact[lo:hi], tpts, sign=+1)
        wf = weights[lo:hi, None] * fvals[lo:hi]
        if comp0 is not None:
            out += comp0.T @ wf
        for axis, fld in fields.items():
            if axis not in fb:
                e = np.zeros(dim)
                e[axis] = 1.0
                fb[axis] = mul_array(fvals, e)
            out += fld.T @ (weights[lo:hi, None] * fb[axis][lo:hi])
    return out / (2.0 * np.pi) ** spec.n


def _shift_patterns(n: int):
    """All m in {0,1}^n, least-significant axis first."""
    out = [()]
    for _ in range(n):
        out = [m + (b,) for m in out for b in (0, 1)]
    return out


def _fourier_data_assembled(F: ImageFn, pact: np.ndarray):
    """Phi(xi) = int f(t) e^{-a s_1 - i xi.s(t)} dt from T-shifted images.

    Uses the identity  Phi = -e^{zeta_0 + i sum_j zeta_j} *
    sum_{m in {0,1}^n} (-i)^{n-|m|} (-1)^{|m|} comp_n(T_(m) F);
    shifts with m_n = 1 are read from comp_{n-1} of the m_n = 0 evaluation
    (comp_n(T_{m+e_n}) = -comp_{n-1}(T_m)), halving the evaluations.
    """
    spec = F.spec
    n = spec.n
    axis_n = spec.active[-1]
    phi = np.zeros(pact.shape[0], dtype=complex)
    err = 0.0
    for m in _shift_patterns(n - 1):
        base = m + (0,)
        vals, e = F.t_shift(base).eval_grid(pact)
        err += abs(e)
        k = sum(base)
        coeff = (-1j) ** (n - k) * (-1.0) ** k
        phi += coeff * vals[:, axis_n]
        # companion pattern with m_n = 1:
        #   n >= 2: comp_n(T_{m+e_n}) = -comp_{n-1}(T_m)
        #   n == 1: comp_1(T_{m+e_1}) = +comp_0(T_m)
        coeff1 = (-1j) ** (n - k - 1) * (-1.0) ** (k + 1)
        if n >= 2:
            phi += coeff1 * (-vals[:, spec.active[-2]])
        else:
            phi += coeff1 * vals[:, 0]
    za = spec.zeta_active()
    pref = -np.exp(za[0]) * np.exp(1j * np.sum(za[1:]))
    return pref * phi, err


def _fourier_data_fused(F: ImageFn, pact: np.ndarray):
    """Same Phi for a quadrature-backed image, fused into one complex pass."""
    f, quad, spec = F.original, F.quad, F.spec
    a = float(pact[0, 0])
    osc = float(np.max(np.abs(pact[:, 1:])))
    nodes, weights, tail = tensor_grid(f, quad, a, osc)
    fv = f(nodes)
    if fv.ndim != 1:
        raise ValueError("fourier inversion needs a real-valued original")
    from .kernel import partial_sums

    s = partial_sums(nodes)
    w = weights * fv * np.exp(-a * s[:, 0])
    M = pact.shape[0]
    N = nodes.shape[0]
    xiT = pact[:, 1:].T.copy()
    re = np.zeros(M)
    im = np.zeros(M)
    step = max(1, int(quad.chunk // max(M, 1)))
    for lo in range(0, N, step):
        hi = min(N, lo + step)
        phase = s[lo:hi] @ xiT
        re += w[lo:hi] @ np.cos(phase)
        im += w[lo:hi] @ np.sin(phase)
    return re - 1j * im, tail


def _fourier_inverse(F, a, tpts, quad, radius, method):
    from .kernel import partial_sums

    spec = F.spec
    pact, weights = _imaginary_grid(spec, a, radius, quad)
    fused = (
        method != "assemble"
        and F.kind == "quadrature"
        and not any(F.smono)
    )
    if fused:
        phi, ferr = _fourier_data_fused(F, pact)
    else:
        phi, ferr = _fourier_data_assembled(F, pact)
    tpts = np.atleast_2d(tpts)
    s = partial_sums(tpts)
    rec = np.exp(1j * (pact[:, 1:] @ s.T))  # (M, T)
    vals0 = ((weights * phi) @ rec).real / (2 * np.pi) ** spec.n
    vals0 = vals0 * np.exp(a * s[:, 0])
    out = np.zeros((tpts.shape[0], spec.dim))
    out[:, 0] = vals0
    return out, ferr


def inverse_grid(
    F: ImageFn,
    a: float,
    tpts: np.ndarray,
    quad: QuadSpec,
    radius: Optional[float] = None,
    method: Optional[str] = None,
) -> tuple[np.ndarray, float]:
    """Inverse transform of a real-valued-original image at tpts ((T, n)).

    method: "fourier" (default for spherical and n=1) reconstructs through
    the quarter-period shift assembly of the image; "assemble" forces the
    explicit T-shift evaluations; "pv" is the literal truncated
    principal-value integral (only route for Cartesian n >= 2, where the
    image decays algebraically -- a large radius-doubling estimate flags the
    non-stabilizing oscillatory tail).
    """
    _check_strip(F.strip, a)
    spec = F.spec
    radius = radius if radius is not None else quad.inverse_radius
    if method is None:
        method = "fourier" if (spec.mode == "spherical" or spec.n == 1) else "pv"
    if method in ("fourier", "assemble"):
        if spec.mode == "cartesian" and spec.n > 1:
            raise ValueError("fourier inversion needs spherical coordinates")
        vals, ferr = _fourier_inverse(F, a, tpts, quad, radius, method)
        err = ferr
        if quad.error_mode == "nested":
            sub = dataclasses.replace(
                quad,
                inverse_panels=max(1, quad.inverse_panels // 2),
                error_mode="none",
            )
            vals2, _ = _fourier_inverse(F, a, tpts, sub, radius / 2, method)
            err = ferr + float(np.max(np.abs(vals - vals2)))
        return vals, err

    pact, weights = _imaginary_grid(spec, a, radius, quad)
    fvals, ferr = F.eval_grid(pact)
    vals = _inverse_contract(spec, pact, weights, fvals, np.atleast_2d(tpts), quad.chunk)
    err = ferr
    if quad.error_mode == "nested":
        sub = dataclasses.replace(
            quad,
            inverse_panels=max(1, quad.inverse_panels // 2),
            error_mode="none",
        )
        pact2, weights2 = _imaginary_grid(spec, a, radius / 2, sub)
        fvals2, _ = F.eval_grid(pact2)
        vals2 = _inverse_contract(
            spec, pact2, weights2, fvals2, np.atleast_2d(tpts), quad.chunk
        )
        err = ferr + float(np.max(np.abs(vals - vals2)))
    return vals, err


def inverse(
    F: ImageFn,
    a: float,
    t,
    quad: QuadSpec,
    radius: Optional[float] = None,
    method: Optional[str] = None,
) -> tuple[CdNumber, float]:
    vals, err = inverse_grid(
        F, a, np.atleast_2d(np.asarray(t, float)), quad, radius, method
    )
    return CdNumber(F.spec.r, vals[0]), err
