"""Transform kernels u(p,t;zeta), their exponentials, and shift operators.

Two coordinate forms of the kernel are supported:

* Cartesian:  u = p_0 s_1 + sum_j (p_j t_j + zeta_j) i_j + zeta_0
* spherical:  u = p_0 s_1 + zeta_0 + A * [i_1 cos th_2 + i_2 sin th_2 cos th_3
              + ... + i_n sin th_2 ... sin th_n],
              A = p_1 s_1 + zeta_1,  th_j = p_j s_j + zeta_j,

with the partial sums s_j = t_j + ... + t_n.  Since |bracket| = 1, both
exponentials have the closed form e^{-c}(cos phi - v sin(phi)/phi).

Shift operators:

* T_{(m)} translates the phase, zeta_j -> zeta_j - m_j pi/2 (plain).
* S_{e_j} = -d/dzeta_j.  On spherical kernels an S-power acts as the quarter
  shift of the one factor that carries th_j and annihilates the terms that do
  not depend on th_j (the trailing-cosine convention); iterating this rule is
  exactly the iterated derivative.  On Cartesian kernels for n >= 2 the
  derivative is *not* a plain translation, so S-monomials are evaluated
  exactly with forward-mode jets through the closed form.  The two semantics
  coincide for n = 1.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ._jet import Jet, jet_variable
from .algebra import CdNumber, exp_array, mul_array

__all__ = [
    "KernelSpec",
    "PhaseShift",
    "partial_sums",
    "u_cartesian",
    "u_spherical",
    "exp_neg_u",
    "iterated_exponent_chain",
    "kernel_contract",
    "kernel_matrix",
    "ImageOperator",
    "r_operator",
    "rho_operator",
    "operator_from_multi",
    "s_monomial_kernel_matrix",
]

_HALF_PI = 0.5 * np.pi


@dataclass(frozen=True)
class KernelSpec:
    """Kernel description: coordinates, dimension, algebra level, phase.

    n counts the active t-variables.  The strict transform pairing has
    2^{r-1} <= n <= 2^r - 1; a smaller n with the same r is the restricted
    transform over the active axes (inactive axes carry p=zeta=t=0).
    Spherical coordinates require the active axes to be the prefix 1..n.
    """

    mode: str
    n: int
    r: int
    zeta: np.ndarray = None  # type: ignore[assignment]
    active: tuple = ()

    def __post_init__(self):
        if self.mode not in ("cartesian", "spherical"):
            raise ValueError(f"unknown kernel mode {self.mode!r}")
        if self.r < 1:
            raise ValueError("algebra level must be >= 1")
        if not (1 <= self.n <= (1 << self.r) - 1):
            raise ValueError(
                f"need 1 <= n <= 2^r - 1, got n={self.n}, r={self.r}"
            )
        active = tuple(self.active) if self.active else tuple(range(1, self.n + 1))
        if len(active) != self.n or list(active) != sorted(set(active)):
            raise ValueError("active indices must be strictly increasing, length n")
        if active[-1] > (1 << self.r) - 1:
            raise ValueError("active index exceeds the imaginary dimension")
        if self.mode == "spherical" and active != tuple(range(1, self.n + 1)):
            raise ValueError(
                "spherical coordinates support prefix active axes 1..n only"
            )
        object.__setattr__(self, "active", active)
        z = self.zeta
        if z is None:
            z = np.zeros(self.dim)
        elif isinstance(z, CdNumber):
            z = z.promote(self.r).coords
        else:
            z = np.asarray(z, dtype=np.float64).reshape(-1)
            if z.shape[0] < self.dim:
                z = np.concatenate([z, np.zeros(self.dim - z.shape[0])])
            if z.shape[0] != self.dim:
                raise ValueError("zeta has wrong dimension")
        inactive = [j for j in range(1, self.dim) if j not in active]
        if inactive and np.any(z[inactive] != 0.0):
            raise ValueError("zeta must vanish on inactive axes")
        object.__setattr__(self, "zeta", z)

    @property
    def dim(self) -> int:
        return 1 << self.r

    def with_zeta(self, zeta) -> "KernelSpec":
        return dataclasses.replace(self, zeta=zeta)

    def shifted(self, m: Sequence[float]) -> "KernelSpec":
        """Plain phase translation zeta_j -> zeta_j - m_j pi/2 on active axes."""
        z = self.zeta.copy()
        for j, mj in zip(self.active, m):
            z[j] -= mj * _HALF_PI
        return self.with_zeta(z)

    def zeta_active(self) -> np.ndarray:
        """(zeta_0, zeta at active axes) as a length n+1 vector."""
        return np.concatenate([[self.zeta[0]], self.zeta[list(self.active)]])

    def p_active(self, p) -> np.ndarray:
        """Restrict p (..., 2^r) to (p_0, active components), (..., n+1)."""
        p = np.asarray(p, dtype=np.float64)
        if isinstance(p, np.ndarray) and p.shape[-1] == self.n + 1:
            return p
        if p.shape[-1] != self.dim:
            raise ValueError("p has wrong algebra dimension")
        cols = [0] + list(self.active)
        return p[..., cols]

    def embed_p(self, pact: np.ndarray) -> np.ndarray:
        """Inverse of p_active: (..., n+1) -> (..., 2^r) with zeros elsewhere."""
        pact = np.asarray(pact, dtype=np.float64)
        out = np.zeros(pact.shape[:-1] + (self.dim,))
        out[..., 0] = pact[..., 0]
        for l, j in enumerate(self.active):
            out[..., j] = pact[..., l + 1]
        return out


@dataclass(frozen=True)
class PhaseShift:
    """Multi-order quarter-period phase shift T_{(m)} along the active axes."""

    m: tuple

    def __post_init__(self):
        object.__setattr__(self, "m", tuple(int(v) for v in self.m))

    def __add__(self, other: "PhaseShift") -> "PhaseShift":
        return PhaseShift(tuple(a + b for a, b in zip(self.m, other.m)))


def partial_sums(t: np.ndarray) -> np.ndarray:
    """s_j = t_j + ... + t_n along the last axis."""
    t = np.asarray(t, dtype=np.float64)
    return np.cumsum(t[..., ::-1], axis=-1)[..., ::-1]


# ---------------------------------------------------------------------------
# scalar-ish kernel evaluation (CdNumber in, CdNumber out)
# ---------------------------------------------------------------------------


def _as_tmat(t, n) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    if t.ndim == 1:
        t = t[None, :]
    if t.shape[-1] != n:
        raise ValueError(f"t must have {n} columns")
    return t


def u_cartesian(p, t, spec: KernelSpec):
    """<p,t) + zeta as algebra coordinates; t may be a batch (N, n)."""
    if spec.mode != "cartesian":
        raise ValueError("spec is not Cartesian")
    return _u_components(spec, p, t, embed=True)


def u_spherical(p, t, spec: KernelSpec):
    if spec.mode != "spherical":
        raise ValueError("spec is not spherical")
    return _u_components(spec, p, t, embed=True)


def _u_components(spec: KernelSpec, p, t, embed: bool = False):
    """u(p,t;zeta) for a single p and a batch of t, shape (N, dim)."""
    if isinstance(p, CdNumber):
        p = p.promote(spec.r).coords
    pact = spec.p_active(p)
    t = _as_tmat(t, spec.n)
    squeeze = t.shape[0] == 1
    s = partial_sums(t)
    za = spec.zeta_active()
    out = np.zeros((t.shape[0], spec.dim))
    out[:, 0] = pact[0] * s[:, 0] + za[0]
    if spec.mode == "cartesian":
        for l, j in enumerate(spec.active):
            out[:, j] = pact[l + 1] * t[:, l] + za[l + 1]
    else:
        a = pact[1] * s[:, 0] + za[1]
        e = _sph_bracket(pact, s, za)  # (N, n)
        for l in range(spec.n):
            out[:, l + 1] = a * e[:, l]
    return out if not squeeze else out[0]


def _sph_bracket(pact, s, za):
    """Unit bracket [cos th_2, sin th_2 cos th_3, ...] of shape (N, n)."""
    n = s.shape[-1]
    e = np.ones(s.shape[:-1] + (n,))
    if n == 1:
        return e
    th = pact[..., 2:] * s[..., 1:] + za[2:]
    sin_cum = np.cumprod(np.sin(th), axis=-1)
    e[..., 0] = np.cos(th[..., 0])
    for l in range(1, n - 1):
        e[..., l] = sin_cum[..., l - 1] * np.cos(th[..., l])
    e[..., n - 1] = sin_cum[..., n - 2]
    return e


def exp_neg_u(p, t, spec: KernelSpec):
    """exp(-u(p,t;zeta)) as coordinates, shape like t-batch x dim."""
    return exp_array(-_u_components(spec, p, t))


def iterated_exponent_chain(p, t, spec: KernelSpec):
    """exp(i_1 A exp(-i_3 th_2 exp(-i_1 th_3))) for n = 3 (spherical).

    The nested-exponent identity behind the spherical coordinates; equals
    exp(A * bracket).  Evaluated with plain algebra calls as an oracle.
    """
    if spec.n != 3:
        raise ValueError("the three-factor chain needs n = 3")
    if isinstance(p, CdNumber):
        p = p.promote(spec.r).coords
    pact = spec.p_active(p)
    t = np.asarray(t, dtype=np.float64).reshape(-1)
    s = partial_sums(t)
    za = spec.zeta_active()
    a = pact[1] * s[0] + za[1]
    th2 = pact[2] * s[1] + za[2]
    th3 = pact[3] * s[2] + za[3]
    r = max(spec.r, 2)
    i1 = CdNumber.unit(r, 1)
    i3 = CdNumber.unit(r, 3)
    inner = (-th3 * i1).exp()
    middle = ((-th2 * i3) * inner).exp()
    return ((a * i1) * middle).exp().promote(spec.r)


# ---------------------------------------------------------------------------
# batched kernel fields and contractions
# ---------------------------------------------------------------------------


def _cartesian_fields(spec, pact, t, shifts=None, sign=-1):
    """Scalar fields of exp(sign*u) for a p-batch against a t-batch.

    Returns (comp0, {axis: field}) with shapes (M, N); exp(sign*u) =
    comp0 * e_0 + sum_axis field_axis * e_axis.  With integer shifts (an
    S-monomial, sign=-1 only) the fields are the exact mixed
    zeta-derivatives, computed with jets.
    """
    s = partial_sums(t)
    za = spec.zeta_active()
    p0 = pact[:, 0][:, None]
    c = p0 * s[None, :, 0] + za[0]
    amp = np.exp(sign * c)
    n = spec.n
    if shifts is None or not any(shifts):
        a2 = 0.0
        avals = []
        for l in range(n):
            a = pact[:, l + 1][:, None] * t[None, :, l] + za[l + 1]
            avals.append(a)
            a2 = a2 + a * a
        phi = np.sqrt(a2)
        cosphi = np.cos(phi)
        sincphi = _sinc(phi)
        comp0 = amp * cosphi
        fields = {
            spec.active[l]: sign * amp * avals[l] * sincphi for l in range(n)
        }
        return comp0, fields

    if sign > 0:
        raise ValueError("S-monomials only apply to the decaying kernel")
    dirs = [l for l in range(n) if shifts[l] > 0]
    order = int(sum(shifts))
    nv = len(dirs)
    key = tuple(int(shifts[l]) for l in dirs)
    a2 = None
    avals = []
    for l in range(n):
        base = pact[:, l + 1][:, None] * t[None, :, l] + za[l + 1]
        if l in dirs:
            a = jet_variable(base, dirs.index(l), nv, order)
        else:
            a = Jet.constant(base, nv, order)
        avals.append(a)
        a2 = a * a if a2 is None else a2 + a * a
    x0 = np.broadcast_to(a2.value(), amp.shape)
    cosphi = a2.compose(_cos_sqrt_derivs(x0, order))
    sincphi = a2.compose(_sinc_sqrt_derivs(x0, order))
    dsgn = (-1.0) ** order
    comp0 = amp * dsgn * cosphi.derivative(key)
    fields = {}
    for l in range(n):
        g = avals[l] * sincphi
        fields[spec.active[l]] = -amp * dsgn * g.derivative(key)
    return comp0, fields


def _even_series_derivs(x, order, offset):
    """Derivatives of sum_k (-1)^k x^k/(2k+offset)! for small x."""
    import math as _math

    out = []
    for m_ in range(order + 1):
        acc = np.zeros_like(x)
        for k in range(m_, m_ + 14):
            coef = (-1.0) ** k * _math.factorial(k) / (
                _math.factorial(k - m_) * _math.factorial(2 * k + offset)
            )
            acc += coef * x ** (k - m_)
        out.append(acc)
    return out


def _cos_sinc_pair_derivs(x, order):
    """Derivatives of g(x)=cos(sqrt x) and h(x)=sin(sqrt x)/sqrt x.

    Stable for all x >= 0: the recurrences g' = -h/2, h' = (g-h)/(2x) are
    used away from zero and the even power series below x = 0.09.
    """
    x = np.asarray(x, dtype=np.float64)
    small = x < 0.09
    xs = np.where(small, 1.0, x)
    phi = np.sqrt(xs)
    g = [np.cos(phi)]
    h = [np.sin(phi) / phi]
    for m_ in range(1, order + 1):
        g.append(-0.5 * h[m_ - 1])
        # h^{(m)} = (g^{(m-1)} - (2m-1) h^{(m-1)}) / (2x), by induction from
        # 2x h' = g - h  differentiated m-1 times
        h.append((g[m_ - 1] - (2 * m_ - 1) * h[m_ - 1]) / (2 * xs))
    gs = _even_series_derivs(np.where(small, x, 0.0), order, 0)
    hs = _even_series_derivs(np.where(small, x, 0.0), order, 1)
    gout = [np.where(small, gs[m_], g[m_]) for m_ in range(order + 1)]
    hout = [np.where(small, hs[m_], h[m_]) for m_ in range(order + 1)]
    return gout, hout


def _cos_sqrt_derivs(x, order):
    return _cos_sinc_pair_derivs(x, order)[0]


def _sinc_sqrt_derivs(x, order):
    return _cos_sinc_pair_derivs(x, order)[1]


def _spherical_fields(spec, pact, t, shifts=None, sign=-1):
    """Scalar fields of S^{(shifts)} exp(sign*u) in spherical coordinates.

    For shifts = 0 this is the kernel itself.  For an S-monomial (sign=-1)
    the factor carrying each shifted angle is quarter-shifted and the terms
    without a genuine dependence on a shifted angle drop (trailing-cosine
    convention); iterating that rule reproduces the iterated derivative.
    """
    n = spec.n
    s = partial_sums(t)
    za = spec.zeta_active()
    p0 = pact[:, 0][:, None]
    amp = np.exp(sign * (p0 * s[None, :, 0] + za[0]))
    m = tuple(int(v) for v in (shifts or (0,) * n))
    if sign > 0 and any(m):
        raise ValueError("S-monomials only apply to the decaying kernel")
    a = pact[:, 1][:, None] * s[None, :, 0] + za[1] - m[0] * _HALF_PI
    jmax = 0
    for l in range(1, n):
        if m[l] > 0:
            jmax = l + 1  # active-axis label of the shifted angle
    cos_a = np.cos(a)
    sin_a = np.sin(a)
    if n == 1:
        return amp * cos_a, {spec.active[0]: sign * amp * sin_a}
    th = [None] * (n + 1)
    for l in range(2, n + 1):
        th[l] = pact[:, l][:, None] * s[None, :, l - 1] + za[l] - m[l - 1] * _HALF_PI
    sin_cum = np.ones_like(a + th[2])
    e = [None] * (n + 1)  # bracket factors per axis label 1..n
    for l in range(1, n + 1):
        if l < n:
            e[l] = sin_cum * np.cos(th[l + 1])
            sin_cum = sin_cum * np.sin(th[l + 1])
        else:
            e[l] = sin_cum
    comp0 = amp * cos_a if jmax == 0 else None
    fields = {}
    for l in range(1, n + 1):
        if jmax == 0 or l >= jmax - 1:
            fields[l] = sign * amp * sin_a * e[l]
    return comp0, fields


def kernel_fields(spec: KernelSpec, p_batch, t_batch, shifts=None, sign=-1):
    """Dispatch to the mode-specific field evaluation."""
    pact = spec.p_active(np.atleast_2d(p_batch))
    t = _as_tmat(t_batch, spec.n)
    if spec.mode == "cartesian":
        return _cartesian_fields(spec, pact, t, shifts, sign)
    return _spherical_fields(spec, pact, t, shifts, sign)


def _sinc(phi):
    small = phi < 1e-30
    safe = np.where(small, 1.0, phi)
    return np.where(small, 1.0, np.sin(safe) / safe)


def kernel_contract(
    spec: KernelSpec,
    p_batch: np.ndarray,
    t_nodes: np.ndarray,
    weights: np.ndarray,
    fvals: np.ndarray,
    shifts=None,
    sign: int = -1,
    chunk: int = 2_000_000,
) -> np.ndarray:
    """sum_i w_i f_i * exp(-u(p, t_i)) over the t-batch, for every p.

    fvals is (N,) for real-valued originals or (N, dim) for algebra-valued
    ones; the product keeps f on the left.  sign=+1 contracts against
    exp(+u) instead (inverse transform; there fvals plays the image role and
    stays on the left as well).  Returns (M, dim).
    """
    pact = spec.p_active(np.atleast_2d(p_batch))
    t = _as_tmat(t_nodes, spec.n)
    M = pact.shape[0]
    N = t.shape[0]
    dim = spec.dim
    out = np.zeros((M, dim))
    real_f = fvals.ndim == 1
    if not real_f:
        # pre-multiply f by each kernel basis element once
        fbasis = {}
    step = max(1, int(chunk // max(M, 1)))
    for lo in range(0, N, step):
        hi = min(N, lo + step)
        tc = t[lo:hi]
        wf = (weights[lo:hi] * fvals[lo:hi]) if real_f else weights[lo:hi, None] * fvals[lo:hi]
        comp0, fields = kernel_fields(spec, pact, tc, shifts, sign)
        if real_f:
            if comp0 is not None:
                out[:, 0] += comp0 @ wf
            for axis, fld in fields.items():
                out[:, axis] += fld @ wf
        else:
            if comp0 is not None:
                out += comp0 @ wf
            for axis, fld in fields.items():
                key = axis
                if key not in fbasis:
                    e = np.zeros(dim)
                    e[axis] = 1.0
                    fbasis[key] = mul_array(fvals, e)
                out += fld @ (weights[lo:hi, None] * fbasis[key][lo:hi])
    return out


def kernel_matrix(spec: KernelSpec, p_batch, t_batch, shifts=None, sign=-1):
    """Full exp(sign*u) values, shape (M, N, dim).  For modest batches."""
    pact = spec.p_active(np.atleast_2d(p_batch))
    t = _as_tmat(t_batch, spec.n)
    comp0, fields = kernel_fields(spec, pact, t, shifts, sign)
    out = np.zeros((pact.shape[0], t.shape[0], spec.dim))
    if comp0 is not None:
        out[..., 0] = comp0
    for axis, fld in fields.items():
        out[..., axis] = fld
    return out


def s_monomial_kernel_matrix(spec: KernelSpec, p_batch, t_batch, m):
    """S_{(m)} exp(-u) values, shape (M, N, dim)."""
    return kernel_matrix(spec, p_batch, t_batch, shifts=m, sign=-1)


def branch_shift_contract(
    spec: KernelSpec,
    p_batch: np.ndarray,
    t_nodes: np.ndarray,
    weights: np.ndarray,
    fvals: np.ndarray,
    group: list,
    branch: int,
    chunk: int = 2_000_000,
) -> np.ndarray:
    """T_(m) of the branch projection of the image, all group elements fused.

    Returns (M, K, dim) with entry [.., gi, ..] = quadrature of f against
    S^{(m + 4 e_branch)} exp(-u) minus the e_{branch+1} companion (for
    branch < n).  One pass over the t-grid computes the trig pairs once; the
    shifted factors are sign-permuted lookups:
        cos(x - m pi/2) = [cos, sin, -cos, -sin][m % 4].
    Real-valued originals only (the solver path).
    """
    if spec.mode != "spherical":
        raise ValueError("branch projections are spherical-mode objects")
    if fvals.ndim != 1:
        raise ValueError("fused branch tables need a real-valued original")
    pact = spec.p_active(np.atleast_2d(p_batch))
    t = _as_tmat(t_nodes, spec.n)
    n = spec.n
    M = pact.shape[0]
    K = len(group)
    out = np.zeros((M, K, spec.dim))
    za = spec.zeta_active()
    step = max(1, int(chunk // max(M, 1)))

    def shifted(cosx, sinx, m4):
        m4 = m4 % 4
        if m4 == 0:
            return cosx, sinx
        if m4 == 1:
            return sinx, -cosx
        if m4 == 2:
            return -cosx, -sinx
        return -sinx, cosx

    for lo in range(0, t.shape[0], step):
        hi = min(t.shape[0], lo + step)
        tc = t[lo:hi]
        s = partial_sums(tc)
        wf = weights[lo:hi] * fvals[lo:hi]
        amp = np.exp(-(pact[:, 0][:, None] * s[None, :, 0] + za[0]))
        a0 = pact[:, 1][:, None] * s[None, :, 0] + za[1]
        ca, sa = np.cos(a0), np.sin(a0)
        trig = [None, None]  # placeholders for axis labels 1-based
        for l in range(2, n + 1):
            th = pact[:, l][:, None] * s[None, :, l - 1] + za[l]
            trig.append((np.cos(th), np.sin(th)))
        for gi, m in enumerate(group):
            if any(m[l] for l in range(branch, n)):
                raise ValueError("branch table shifts must live on axes <= branch")
            cam, sam = shifted(ca, sa, m[0])
            # bracket factors E_l kept by the branch projection:
            #   branch 1: the cos(A) e_0 term (plus E_1 when n = 1);
            #   2 <= branch < n: E_{branch-1} only; branch = n: E_{n-1}, E_n
            if branch == 1:
                out[:, gi, 0] += (amp * cam) @ wf
                if n == 1:
                    out[:, gi, spec.active[0]] += (-amp * sam) @ wf
                continue
            sin_cum = 1.0
            for l in range(1, n + 1):
                if l < n:
                    cth, sth = shifted(*trig[l + 1], m[l])
                    e_l = sin_cum * cth
                    sin_cum = sin_cum * sth
                else:
                    e_l = sin_cum
                keep = (l == branch - 1) if branch < n else (l >= n - 1)
                if keep:
                    out[:, gi, l] += (-amp * sam * e_l) @ wf
    return out


# ---------------------------------------------------------------------------
# operator algebra on images: sums of  coeff * p^pow * S_{(m)}
# ---------------------------------------------------------------------------


def _canon_m(m: tuple) -> tuple[float, tuple]:
    """Reduce an S-monomial exponent using the kernel periodicities.

    Axis 1: S^2 = -I, so exponents reduce mod 4 into {0,1} with a sign.
    Axis j >= 2: S^{4+k} = S^k for k >= 1; exponent 4 is the projection and
    is kept distinct from 0.
    """
    sign = 1.0
    out = []
    m1 = m[0] % 4
    if m1 >= 2:
        sign = -sign
        m1 -= 2
    out.append(m1)
    for v in m[1:]:
        if v <= 4:
            out.append(v)
        else:
            out.append((v - 1) % 4 + 1)
    return sign, tuple(out)


@dataclass
class ImageOperator:
    """Linear operator sum_k a_k p^{pow_k} S_{(m_k)} acting on images.

    a_k are central-or-left algebra coefficients (None means 1), pow_k are
    exponent tuples over (p_0, p_{active_1}, ..., p_{active_n}), and m_k are
    S-monomial orders per active axis.  The exponent reductions S_1^2 = -I
    and S_j^{4+k} = S_j^k hold on spherical kernels only, so canonicalization
    applies in spherical mode and exponents are kept verbatim in Cartesian
    mode.
    """

    n: int
    terms: list = field(default_factory=list)  # (coeff, ppow, m, scale)
    mode: str = "spherical"

    @classmethod
    def zero(cls, n: int, mode="spherical") -> "ImageOperator":
        return cls(n, [], mode)

    @classmethod
    def identity(cls, n: int, mode="spherical") -> "ImageOperator":
        return cls(n, [(None, (0,) * (n + 1), (0,) * n, 1.0)], mode)

    @classmethod
    def monomial(cls, n, ppow, m, scale=1.0, coeff=None, mode="spherical"):
        return cls(n, [(coeff, tuple(ppow), tuple(m), float(scale))], mode)

    def _canon(self, m: tuple) -> tuple[float, tuple]:
        if self.mode == "spherical":
            return _canon_m(m)
        return 1.0, tuple(m)

    def __add__(self, other: "ImageOperator") -> "ImageOperator":
        return ImageOperator(self.n, self.terms + other.terms, self.mode).collect()

    def __sub__(self, other: "ImageOperator") -> "ImageOperator":
        return self + other.scale(-1.0)

    def scale(self, c: float) -> "ImageOperator":
        return ImageOperator(
            self.n, [(a, pw, m, s * c) for (a, pw, m, s) in self.terms], self.mode
        )

    def left_mul(self, coeff) -> "ImageOperator":
        """Multiply every term by an algebra coefficient on the left."""
        if isinstance(coeff, (int, float)):
            return self.scale(float(coeff))
        cc = coeff.coords if isinstance(coeff, CdNumber) else np.asarray(coeff)
        out = []
        for a, pw, m, s in self.terms:
            if a is None:
                out.append((cc.copy(), pw, m, s))
            else:
                out.append((mul_array(cc, a), pw, m, s))
        return ImageOperator(self.n, out, self.mode).collect()

    def __mul__(self, other: "ImageOperator") -> "ImageOperator":
        """Composition; algebra coefficients must sit left of real p-powers."""
        out = []
        for a1, pw1, m1, s1 in self.terms:
            for a2, pw2, m2, s2 in other.terms:
                if a1 is not None and a2 is not None:
                    a = mul_array(a1, a2)
                elif a1 is not None:
                    a = a1.copy()
                elif a2 is not None:
                    a = a2.copy()
                else:
                    a = None
                pw = tuple(x + y for x, y in zip(pw1, pw2))
                sgn, m = self._canon(tuple(x + y for x, y in zip(m1, m2)))
                out.append((a, pw, m, s1 * s2 * sgn))
        return ImageOperator(self.n, out, self.mode).collect()

    def __pow__(self, k: int) -> "ImageOperator":
        acc = ImageOperator.identity(self.n, self.mode)
        for _ in range(k):
            acc = acc * self
        return acc

    def collect(self) -> "ImageOperator":
        """Merge terms with equal (ppow, m) and real coefficients."""
        merged: dict = {}
        alg_terms = []
        for a, pw, m, s in self.terms:
            sgn, mc = self._canon(m)
            if a is None:
                key = (pw, mc)
                merged[key] = merged.get(key, 0.0) + s * sgn
            else:
                alg_terms.append((a, pw, mc, s * sgn))
        out = [
            (None, pw, m, s) for (pw, m), s in merged.items() if s != 0.0
        ]
        return ImageOperator(self.n, out + alg_terms, self.mode)

    def shift_support(self) -> set:
        return {m for (_, _, m, s) in self.terms if s != 0.0}

    def max_axis(self) -> int:
        """Largest active-axis slot (1-based) carrying a p-power or shift."""
        mx = 0
        for _, pw, m, _ in self.terms:
            for l in range(self.n):
                if pw[l + 1] > 0 or m[l] > 0:
                    mx = max(mx, l + 1)
        return mx

    def eval_p_coeff(self, pact: np.ndarray, term) -> np.ndarray:
        a, pw, m, s = term
        vals = np.full(pact.shape[:-1], s)
        for i, e in enumerate(pw):
            if e:
                vals = vals * pact[..., i] ** e
        return vals

    def restrict_trailing(self, w: int) -> "ImageOperator":
        """Drop terms with p-powers or shifts on axes > w (p_b = 0 there)."""
        out = []
        for a, pw, m, s in self.terms:
            if any(pw[l + 1] > 0 or m[l] > 0 for l in range(w, self.n)):
                continue
            out.append((a, pw, m, s))
        return ImageOperator(self.n, out, self.mode)


def rho_operator(n: int, j: int) -> ImageOperator:
    """Image multiplier of d/ds_j (spherical): p_0 delta_{1j} + p_j S_{e_j}."""
    zero = (0,) * n
    terms = []
    if j == 1:
        p0 = tuple([1] + [0] * n)
        terms.append((None, p0, zero, 1.0))
    ppw = tuple(1 if i == j else 0 for i in range(n + 1))
    mm = tuple(1 if l + 1 == j else 0 for l in range(n))
    terms.append((None, ppw, mm, 1.0))
    return ImageOperator(n, terms, "spherical")


def r_operator(spec: KernelSpec, j: int) -> ImageOperator:
    """Image multiplier of d/dt_j: Cartesian p_0 + p_j S_j; spherical
    p_0 + sum_{k<=j} p_k S_k."""
    n = spec.n
    p0 = tuple([1] + [0] * n)
    terms = [(None, p0, (0,) * n, 1.0)]
    axes = range(1, j + 1) if spec.mode == "spherical" else [j]
    for k in axes:
        ppw = tuple(1 if i == k else 0 for i in range(n + 1))
        mm = tuple(1 if l + 1 == k else 0 for l in range(n))
        terms.append((None, ppw, mm, 1.0))
    return ImageOperator(n, terms, spec.mode)


def operator_from_multi(
    spec: KernelSpec, j_multi: Sequence[int], deriv_in: str = "t"
) -> ImageOperator:
    """Image multiplier for the mixed derivative d^{|j|}/d(phi)^j on R^n.

    deriv_in = "t" uses R-operators, "s" uses the rho multipliers (spherical
    only; in Cartesian mode d/ds_j is expanded as d/dt_j - d/dt_{j-1}).
    """
    n = spec.n
    acc = ImageOperator.identity(n, spec.mode)
    for l, e in enumerate(j_multi):
        if e == 0:
            continue
        axis = l + 1
        if deriv_in == "t":
            op = r_operator(spec, axis)
        elif spec.mode == "spherical":
            op = rho_operator(n, axis)
        else:
            op = r_operator(spec, axis)
            if axis >= 2:
                op = op - r_operator(spec, axis - 1)
        acc = acc * (op ** e)
    return acc
