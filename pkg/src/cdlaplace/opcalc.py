"""Operational-calculus theorems as executable two-sided residual checks.

Every check evaluates both sides of an identity with the same quadrature
budget and reports the largest and mean absolute difference together with a
verdict.  Tolerances follow the acceptance rule max(floor, 10x the summed
quadrature error estimates) unless the caller overrides them.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .algebra import CdNumber, exp_array, mul_array
from .kernel import (
    ImageOperator,
    KernelSpec,
    exp_neg_u,
    iterated_exponent_chain,
    operator_from_multi,
    partial_sums,
    r_operator,
    u_cartesian,
    u_spherical,
)
from .originals import OriginalFn, SupportSpec, standard_original
from .pde import AssembledEquation, assemble_image_equation
from .transform import ImageFn, QuadSpec, forward_grid

__all__ = [
    "TheoremCheck",
    "check_scaling",
    "check_derivative",
    "check_higher_derivative",
    "check_image_derivative",
    "check_holomorphy",
    "check_shift",
    "check_exp_shift",
    "check_periodicity",
    "check_parity",
    "check_limit_initial",
    "check_limit_final",
    "check_boundary_box",
    "check_iterated_box",
    "check_integration",
    "check_delta_image",
    "check_kernel_identity",
    "evaluate_faces",
]


@dataclass
class TheoremCheck:
    theorem: str
    residual: float
    mean_residual: float
    tolerance: float
    quad_error: float
    passed: bool
    details: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "theorem": self.theorem,
            "residual": self.residual,
            "mean_residual": self.mean_residual,
            "tolerance": self.tolerance,
            "quad_error": self.quad_error,
            "verdict": "PASS" if self.passed else "FAIL",
        }


def _finish(theorem, diffs, qerr, floor=1e-5, tol=None, details=None):
    diffs = np.asarray(diffs, dtype=float)
    tol = tol if tol is not None else max(floor, 10.0 * qerr)
    resid = float(diffs.max()) if diffs.size else 0.0
    mean = float(diffs.mean()) if diffs.size else 0.0
    return TheoremCheck(theorem, resid, mean, tol, qerr, resid <= tol, details or {})


def _sample_p(spec: KernelSpec, rng, count, re_range=(0.3, 1.5), scale=1.5):
    """Random p inside the strip: re in re_range, imaginary parts ~ scale."""
    pact = np.zeros((count, spec.n + 1))
    pact[:, 0] = rng.uniform(*re_range, size=count)
    pact[:, 1:] = rng.normal(scale=scale, size=(count, spec.n))
    return pact


# ---------------------------------------------------------------- Thm 11


def check_scaling(f, spec, quad, rng, samples=4, theorem="thm11"):
    """F(f(alpha t))(p) = F(f)(p/alpha) / alpha^n for alpha > 0."""
    diffs, qerr = [], 0.0
    for _ in range(samples):
        alpha = float(rng.uniform(0.5, 2.0))
        pact = _sample_p(spec, rng, 3)

        def fs_eval(t, alpha=alpha):
            return f(np.atleast_2d(t) * alpha)

        supp = f.support
        if supp.kind == "box":
            supp = SupportSpec.box([(a / alpha, b / alpha) for a, b in supp.bounds])
        fs = OriginalFn(
            f.n, fs_eval, supp,
            (f.strip[0] * alpha, f.strip[1] * alpha),
            f.growth_c, f.holder, 0, name=f"{f.name}(a t)",
            osc_scale=f.osc_scale * alpha,
        )
        lhs, e1 = forward_grid(fs, spec, pact, quad)
        rhs, e2 = forward_grid(f, spec, pact / alpha, quad)
        diffs.append(np.max(np.abs(lhs - rhs / alpha**f.n)))
        qerr = max(qerr, e1 + e2 / alpha**f.n)
    return _finish(theorem, diffs, qerr)


# ---------------------------------------------------------------- Thm 12 / 23


def evaluate_faces(eqn: AssembledEquation, f: OriginalFn, quad, pact):
    """Sum of the assembled face transforms evaluated from f's data."""
    spec = eqn.spec
    out = np.zeros((pact.shape[0], spec.dim))
    qerr = 0.0
    for term in eqn.faces:
        if any(not np.isfinite(v) for _, v in term.pinned):
            continue
        df = f.derivative(term.q_multi) if any(term.q_multi) else f
        img = ImageFn.from_original(df, spec, quad, pinned=dict(term.pinned))
        op = ImageOperator.identity(spec.n, spec.mode)
        for axis0, e in enumerate(term.m_multi):
            if e:
                op = op * (r_operator(spec, axis0 + 1) ** e)
        vals, e1 = img.apply_operator(op, pact)
        qerr += e1
        if isinstance(term.coeff, CdNumber) and np.any(term.coeff.coords[1:]):
            vals = mul_array(term.coeff.promote(spec.r).coords, vals)
        else:
            c = term.coeff.re() if isinstance(term.coeff, CdNumber) else term.coeff
            vals = float(c) * vals
        out += term.sign * vals
    return out, qerr


def check_derivative(f, j, spec, quad, rng, samples=6, theorem=None, domain=None):
    """Thm 12 / Thm 23: transform of df/dt_j against trace + R-multiplier."""
    theorem = theorem or f"thm12-{spec.mode}"
    domain = domain or f.support
    from .pde import OperatorSpec

    multi = tuple(1 if l == j - 1 else 0 for l in range(f.n))
    A = OperatorSpec.from_terms(f.n, {multi: 1.0}, mode="t")
    eqn = assemble_image_equation(A, domain, spec)
    pact = _sample_p(spec, rng, samples)
    df = f.derivative(multi)
    lhs, e1 = forward_grid(df, spec, pact, quad)
    F = ImageFn.from_original(f, spec, quad)
    main, e2 = F.apply_operator(eqn.op_main, pact)
    faces, e3 = evaluate_faces(eqn, f, quad, pact)
    rhs = main + faces
    qerr = e1 + e2 + e3
    return _finish(theorem, [np.max(np.abs(lhs - rhs))], qerr)


def check_boundary_box(f, j, spec, quad, rng, samples=5, theorem="thm23"):
    return check_derivative(
        f, j, spec, quad, rng, samples, theorem=theorem, domain=f.support
    )


def check_iterated_box(f, multi, spec, quad, rng, samples=4, theorem="thm25"):
    """Thm 25: iterated derivatives on a box with the (lj)-face sum."""
    from .pde import OperatorSpec

    A = OperatorSpec.from_terms(f.n, {tuple(multi): 1.0}, mode="t")
    eqn = assemble_image_equation(A, f.support, spec)
    pact = _sample_p(spec, rng, samples)
    df = f.derivative(multi)
    lhs, e1 = forward_grid(df, spec, pact, quad)
    F = ImageFn.from_original(f, spec, quad)
    main, e2 = F.apply_operator(eqn.op_main, pact)
    faces, e3 = evaluate_faces(eqn, f, quad, pact)
    qerr = e1 + e2 + e3
    return _finish(theorem, [np.max(np.abs(lhs - (main + faces)))], qerr)


# ---------------------------------------------------------------- Thm 21


def check_higher_derivative(f, multi, spec, quad, rng, samples=5, theorem="thm21"):
    """Thm 21 on the whole space: mixed s- (spherical) or t- (Cartesian)
    derivatives against the image multiplier, order <= 2 per axis."""
    deriv_in = "s" if spec.mode == "spherical" else "t"
    if deriv_in == "s":
        df = f.derivative_s(multi) if hasattr(f, "derivative_s") else None
        if df is None:
            df = _s_derivative(f, multi)
    else:
        df = f.derivative(multi)
    op = operator_from_multi(spec, multi, deriv_in=deriv_in)
    pact = _sample_p(spec, rng, samples)
    lhs, e1 = forward_grid(df, spec, pact, quad)
    F = ImageFn.from_original(f, spec, quad)
    rhs, e2 = F.apply_operator(op, pact)
    return _finish(f"{theorem}-{spec.mode}", [np.max(np.abs(lhs - rhs))], e1 + e2)


def _s_derivative(f: OriginalFn, multi) -> OriginalFn:
    """d^{|multi|} f / ds^multi through the chain rule d/ds_j = sum over t.

    Valid on the whole space for smooth f: d/ds_1 = d/dt_1 and
    d/ds_j = d/dt_j - d/dt_{j-1} for j >= 2 (inverse change of variables).
    """
    terms = {(0,) * f.n: 1.0}
    for axis, e in enumerate(multi):
        for _ in range(e):
            nxt = {}
            for m0, w in terms.items():
                targets = [(axis, 1.0)]
                if axis >= 1:
                    targets.append((axis - 1, -1.0))
                for k, sgn in targets:
                    m1 = tuple(v + (1 if l == k else 0) for l, v in enumerate(m0))
                    nxt[m1] = nxt.get(m1, 0.0) + w * sgn
            terms = nxt

    parts = [(m, w, f.derivative(m)) for m, w in terms.items() if w != 0.0]

    def ev(t):
        acc = None
        for _, w, d in parts:
            v = w * d(t)
            acc = v if acc is None else acc + v
        return acc

    return OriginalFn(
        f.n, ev, f.support, f.strip, f.growth_c, f.holder, 0,
        name=f"{f.name}_s{multi}",
    )


# ---------------------------------------------------------------- Thm 13 / 4


def check_image_derivative(f, spec, quad, rng, samples=3, h=1e-3,
                           theorem="thm13"):
    """(dF/dp).h by finite differences against the weighted-moment images."""
    n = f.n
    pact = _sample_p(spec, rng, samples)
    diffs = []
    qerr = 0.0
    for i in range(pact.shape[0]):
        p = pact[i : i + 1]
        for direction in range(n + 1):
            dp = np.zeros((1, n + 1))
            dp[0, direction] = h
            up, e1 = forward_grid(f, spec, p + dp, quad)
            dn, e2 = forward_grid(f, spec, p - dp, quad)
            fd = (up - dn) / (2 * h)
            rhs, e3 = _thm13_direction(f, spec, quad, p, direction)
            diffs.append(np.max(np.abs(fd - rhs)))
            qerr = max(qerr, e1 + e2 + e3 + h * h)
    return _finish(theorem, diffs, qerr, floor=1e-4)


def _thm13_direction(f, spec, quad, pact, direction):
    """-S_{e_j} F(f w_j) for h = i_j (w = s spherical, t Cartesian);
    -F(f s_1) for h = 1."""
    n = f.n

    def weighted(axis0):
        def ev(t):
            t = np.atleast_2d(t)
            if spec.mode == "spherical":
                w = partial_sums(t)[:, axis0]
            else:
                w = t[:, axis0]
            return f(t) * w

        return OriginalFn(f.n, ev, f.support, f.strip, 10 * f.growth_c,
                          f.holder, 0, name=f"{f.name}*w{axis0}")

    def s1_weighted():
        def ev(t):
            t = np.atleast_2d(t)
            return f(t) * partial_sums(t)[:, 0]

        return OriginalFn(f.n, ev, f.support, f.strip, 10 * f.growth_c,
                          f.holder, 0, name=f"{f.name}*s1")

    if direction == 0:
        vals, e = forward_grid(s1_weighted(), spec, pact, quad)
        return -vals, e
    g = weighted(direction - 1)
    img = ImageFn.from_original(g, spec, quad).s_apply(direction, 1)
    vals, e = img.eval_grid(pact)
    return -vals, e


def check_holomorphy(f, spec, quad, rng, samples=3, theorem="thm4-holomorphy"):
    """Numeric holomorphy: the p-differential exists and is the Thm-13 one.

    The conjugate-derivative residual is realized as the gap between the
    finite-difference directional derivatives along 1 and each i_j and the
    transform-side values; for n = 1 the classical slice Cauchy-Riemann
    equations are also verified componentwise.
    """
    base = check_image_derivative(f, spec, quad, rng, samples, theorem=theorem)
    if f.n != 1:
        return base
    h = 1e-4
    pact = _sample_p(spec, rng, samples)
    diffs = [base.residual]
    for i in range(pact.shape[0]):
        p = pact[i : i + 1]
        d0 = (forward_grid(f, spec, p + [[h, 0]], quad)[0]
              - forward_grid(f, spec, p - [[h, 0]], quad)[0]) / (2 * h)
        d1 = (forward_grid(f, spec, p + [[0, h]], quad)[0]
              - forward_grid(f, spec, p - [[0, h]], quad)[0]) / (2 * h)
        # CR on the (p_0, p_1) plane: dF/dp_1 = i * dF/dp_0
        diffs.append(abs(d1[0, 0] + d0[0, 1]))
        diffs.append(abs(d1[0, 1] - d0[0, 0]))
    return _finish(theorem, diffs, base.quad_error, floor=1e-4)


# ---------------------------------------------------------------- Thm 14 / 16


def check_shift(f, tau, spec, quad, rng, samples=4, theorem="thm14"):
    """F(f(t - tau))(p; zeta) = F(f)(p; zeta + <p, tau])."""
    tau = np.asarray(tau, dtype=float)
    n = f.n

    def shifted_eval(t):
        return f(np.atleast_2d(t) - tau)

    supp = f.support
    if supp.kind == "quadrant":
        supp = SupportSpec.box(
            [(tau[l], math.inf) if v > 0 else (-math.inf, tau[l])
             for l, v in enumerate(supp.quadrant)]
        )
    fsh = OriginalFn(n, shifted_eval, supp, f.strip, f.growth_c, f.holder,
                     0, name=f"{f.name}(t-tau)", osc_scale=f.osc_scale)
    pact = _sample_p(spec, rng, samples)
    lhs, e1 = forward_grid(fsh, spec, pact, quad)
    diffs = []
    qerr = e1
    s_tau = partial_sums(tau)
    for i in range(pact.shape[0]):
        z = spec.zeta.copy()
        p = pact[i]
        z[0] += p[0] * s_tau[0]
        for l, axis in enumerate(spec.active):
            z[axis] += p[l + 1] * (s_tau[l] if spec.mode == "spherical" else tau[l])
        rhs, e2 = forward_grid(f, spec.with_zeta(z), pact[i : i + 1], quad)
        qerr = max(qerr, e1 + e2)
        diffs.append(np.max(np.abs(lhs[i] - rhs[0])))
    return _finish(theorem, diffs, qerr)


def check_exp_shift(f, b, spec, quad, rng, samples=4, theorem="thm16"):
    """F(e^{b s_1} f)(p) = F(f)(p - b)."""

    def ev(t):
        t = np.atleast_2d(t)
        return f(t) * np.exp(b * t.sum(axis=1))

    fb = OriginalFn(f.n, ev, f.support,
                    (f.strip[0] + b, f.strip[1] + b), f.growth_c, f.holder,
                    0, name=f"e^(bs1)*{f.name}", osc_scale=f.osc_scale)
    pact = _sample_p(spec, rng, samples, re_range=(b + 0.3, b + 1.5))
    lhs, e1 = forward_grid(fb, spec, pact, quad)
    shifted = pact.copy()
    shifted[:, 0] -= b
    rhs, e2 = forward_grid(f, spec, shifted, quad)
    return _finish(theorem, [np.max(np.abs(lhs - rhs))], e1 + e2)


# ---------------------------------------------------------------- Cor 4.1


def check_periodicity(f, spec, quad, rng, samples=4, theorem="cor4.1"):
    """2 pi shifts fix the image; a pi shift on axis 1 negates it."""
    if spec.mode != "spherical":
        raise ValueError("the periodicity properties are spherical-mode facts")
    pact = _sample_p(spec, rng, samples)
    F = ImageFn.from_original(f, spec, quad)
    base, e0 = F.eval_grid(pact)
    diffs = []
    qerr = e0
    for axis in range(1, f.n + 1):
        shift = [0.0] * f.n
        shift[axis - 1] = 4  # 4 * pi/2 = 2 pi
        v, e = F.t_shift(tuple(-s for s in shift)).eval_grid(pact)
        diffs.append(np.max(np.abs(v - base)))
        qerr = max(qerr, e0 + e)
    v, e = F.t_shift((-2,) + (0,) * (f.n - 1)).eval_grid(pact)  # zeta1 + pi
    diffs.append(np.max(np.abs(v + base)))
    return _finish(theorem, diffs, qerr)


def check_parity(spec, quad, rng, j=1, samples=4, theorem="cor4.1-parity"):
    """Cor 4.1(2): sign flips under the zeta/p reflections, with an original
    odd (kappa=1) in the s_j variable.

    For j = 1 the s_1 reflection also flips the real kernel weight
    e^{-p_0 s_1}, so the f-parity variant is sampled on the Re p = 0
    hyperplane (whole-space originals admit it); for j >= 2 any p works.
    """
    n = spec.n

    def odd_eval(t):
        s = partial_sums(np.atleast_2d(t))
        val = s[:, j - 1] * np.exp(-np.sum(s * s, axis=1))
        return val

    f = OriginalFn(n, odd_eval, SupportSpec.whole(n), (-math.inf, math.inf),
                   1.0, (1.0, 1.0), 0, name=f"odd-in-s{j}")
    re_range = (0.0, 1e-12) if j == 1 else (0.3, 1.5)
    pact = _sample_p(spec, rng, samples, re_range=re_range)
    z2 = spec.zeta.copy()
    z2[spec.active[j - 1]] = 0.37
    if j < n:
        z2[spec.active[j]] = -0.21
    spec2 = spec.with_zeta(z2)
    z1 = z2.copy()
    z1[spec.active[j - 1]] = -z2[spec.active[j - 1]]
    if j < n:
        z1[spec.active[j]] = math.pi + z2[spec.active[j]]
    spec1 = spec.with_zeta(z1)
    lhs, e1 = forward_grid(f, spec1, pact, quad)
    rhs, e2 = forward_grid(f, spec2, pact, quad)
    diffs = [np.max(np.abs(lhs + rhs))]  # kappa = 1: F1 = -F2
    # p-reflection variant (kappa = 2, any original)
    g = standard_original("gaussian", n, sigma=1.0)
    pref = pact.copy()
    pref[:, j] = -pact[:, j]
    lhs2, e3 = forward_grid(g, spec1, pref, quad)
    rhs2, e4 = forward_grid(g, spec2, pact, quad)
    diffs.append(np.max(np.abs(lhs2 - rhs2)))
    return _finish(theorem, diffs, max(e1 + e2, e3 + e4))


# ---------------------------------------------------------------- Thm 18


def _richardson_limit(ps, vals):
    """Fit v(p) = L + c_1/p + c_2/p^2 on a geometric ladder and return L."""
    ip = 1.0 / np.asarray(ps)
    A = np.column_stack([np.ones(len(ps)), ip, ip * ip])
    sol, *_ = np.linalg.lstsq(A, np.asarray(vals), rcond=None)
    return sol[0]


def check_limit_initial(f, spec, quad, theorem="thm18-initial",
                        ladder=(10.0, 20.0, 40.0, 80.0), tol=5e-2):
    """p -> infinity along the real axis: the R-chain minus traces tends to
    (-1)^{n+1} f(0) e^{-u(0,0;zeta)} (n <= 2)."""
    n = f.n
    if n > 2:
        raise ValueError("limit checks are implemented for n <= 2")
    vals = []
    qerr = 0.0
    for p0 in ladder:
        pact = np.zeros((1, n + 1))
        pact[0, 0] = p0
        F = ImageFn.from_original(f, spec, quad)
        if n == 1:
            op = r_operator(spec, 1)
            v, e = F.apply_operator(op, pact)
            vals.append(v[0])
            qerr = max(qerr, e)
        else:
            op = r_operator(spec, 1) * r_operator(spec, 2)
            v, e = F.apply_operator(op, pact)
            total = v[0].copy()
            for drop in (1, 2):
                keep0 = 2 if drop == 1 else 1
                sub = pact.copy()
                sub[0, drop] = 0.0
                trace = ImageFn.from_original(
                    f, spec, quad, pinned={drop - 1: 0.0}
                )
                vop = r_operator(spec, keep0)
                tv, te = trace.apply_operator(vop, sub)
                total -= tv[0]
                qerr = max(qerr, e + te)
            vals.append(total)
    lim = np.array([_richardson_limit(ladder, [v[c] for v in vals])
                    for c in range(spec.dim)])
    zeta0 = spec.zeta.copy()
    u00 = exp_array(-_u_at_zero(spec))
    f0 = float(f(np.zeros((1, n)))[0])
    want = (-1.0) ** (n + 1) * f0 * u00
    resid = float(np.max(np.abs(lim - want)))
    return TheoremCheck(theorem, resid, resid, tol, qerr, resid <= tol,
                        {"limit": lim.tolist(), "target": want.tolist()})


def _u_at_zero(spec: KernelSpec):
    t0 = np.zeros((1, spec.n))
    p0 = spec.embed_p(np.zeros(spec.n + 1))
    u = u_spherical(p0, t0, spec) if spec.mode == "spherical" else u_cartesian(
        p0, t0, spec
    )
    return np.asarray(u).reshape(-1)


def check_limit_final(f, f_inf, spec, quad, theorem="thm18-final",
                      ladder=(0.2, 0.1, 0.05, 0.025), tol=5e-2):
    """n = 1 final value: p F(p) -> f(infinity) as p -> 0+ (classical)."""
    if f.n != 1:
        raise ValueError("the final-value branch is the classical n = 1 case")
    vals = []
    qerr = 0.0
    F = ImageFn.from_original(f, spec, quad)
    for p0 in ladder:
        pact = np.array([[p0, 0.0]])
        v, e = F.apply_operator(r_operator(spec, 1), pact)
        vals.append(float(v[0, 0]))
        qerr = max(qerr, e)
    lad = np.asarray(ladder)
    A = np.column_stack([np.ones(len(ladder)), lad, lad * lad])
    sol, *_ = np.linalg.lstsq(A, np.asarray(vals), rcond=None)
    resid = abs(sol[0] - f_inf)
    return TheoremCheck(theorem, resid, resid, tol, qerr, resid <= tol,
                        {"limit": sol[0], "target": f_inf})


# ---------------------------------------------------------------- Thm 26


def check_integration(f, g, spec, quad, rng, samples=5, theorem="thm26"):
    """F(f chi_U) = R_1 ... R_n F(g chi_U) with g the iterated integral."""
    pact = _sample_p(spec, rng, samples, re_range=(0.4, 1.2))
    lhs, e1 = forward_grid(f, spec, pact, quad)
    op = ImageOperator.identity(spec.n, spec.mode)
    for j in range(1, spec.n + 1):
        op = op * r_operator(spec, j)
    G = ImageFn.from_original(g, spec, quad)
    rhs, e2 = G.apply_operator(op, pact)
    return _finish(theorem, [np.max(np.abs(lhs - rhs))], e1 + e2)


# ---------------------------------------------------------------- delta / kernel


def check_delta_image(spec, quad, rng, theorem="delta-20.2",
                      eps_ladder=(0.1, 0.05, 0.025)):
    """Mollified delta image converges to exp(-u(p,tau;zeta)) at order 2."""
    n = spec.n
    tau = rng.uniform(0.2, 0.8, size=n)
    pts = _sample_p(spec, rng, 3, re_range=(-0.5, 0.8))
    errs = []
    for eps in eps_ladder:
        d = standard_original("mollified_delta", n, eps=eps, tau=tau)
        d.support = SupportSpec.box([(tv - 1.0, tv + 1.0) for tv in tau])
        vals, _ = forward_grid(d, spec, pts, quad)
        want = np.stack(
            [exp_neg_u(spec.embed_p(pts[i]), tau, spec) for i in range(len(pts))]
        )
        errs.append(float(np.max(np.abs(vals - want))))
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(len(errs) - 1)]
    ok = all(o >= 1.8 for o in orders)
    return TheoremCheck(theorem, errs[-1], float(np.mean(errs)), math.inf,
                        0.0, ok, {"errors": errs, "orders": orders})


def check_kernel_identity(rng, r=3, samples=100, tol=1e-12,
                          theorem="kernel-3.1"):
    """Spherical exp(-u) for n=3 equals the nested-exponent chain."""
    spec = KernelSpec("spherical", 3, r, zeta=[0.2, 0.3, -0.7, 1.1]
                      + [0.0] * ((1 << r) - 4))
    worst = 0.0
    for _ in range(samples):
        p = spec.embed_p(np.concatenate([[rng.normal()], rng.normal(size=3)]))
        t = rng.normal(size=3)
        u = u_spherical(p, t, spec)
        m = u.copy()
        m[0] = 0.0
        chain = iterated_exponent_chain(p, t, spec)
        worst = max(worst, float(np.max(np.abs(exp_array(m) - chain.coords))))
        neg = spec.with_zeta(
            np.concatenate([[spec.zeta[0], -spec.zeta[1]], spec.zeta[2:]])
        )
        pneg = p.copy()
        pneg[1] = -p[1]
        chain_neg = iterated_exponent_chain(pneg, t, neg)
        want = np.exp(-u[0]) * chain_neg.coords
        worst = max(worst, float(np.max(np.abs(exp_neg_u(p, t, spec) - want))))
    return TheoremCheck(theorem, worst, worst, tol, 0.0, worst <= tol)
