import math

import numpy as np
import pytest

from cdlaplace.algebra import CdNumber
from cdlaplace.kernel import KernelSpec, exp_neg_u
from cdlaplace.originals import OriginalFn, SupportSpec, standard_original
from cdlaplace.transform import (
    ImageFn,
    QuadSpec,
    StripError,
    QuadratureBudgetError,
    forward,
    forward_grid,
    inverse,
    inverse_grid,
    strip_of,
)

RNG = np.random.default_rng(42)
Q1 = QuadSpec(panels=16, order=16, radius=10.0)


def classical(p):
    """Map a dim-2 coordinate array to a python complex."""
    return complex(p[0], p[1])


def spec1(zeta=None):
    return KernelSpec("cartesian", 1, 1, zeta)


# ------------------------------------------------------------ classical n=1


CLASSICAL_FIXTURES = [
    ("exp_decay", {"b": 1.0}, lambda s: 1.0 / (s + 1.0), (-1.0, math.inf)),
    ("poly_exp", {"powers": (1,), "b": 1.0}, lambda s: (s + 1.0) ** -2.0, (-1.0, math.inf)),
    ("box_indicator", {"bounds": [(0.0, 1.0)]}, lambda s: (1 - np.exp(-s)) / s, None),
    (
        "gaussian",
        {"sigma": 1.0},
        lambda s: math.sqrt(2 * math.pi) * np.exp(s * s / 2.0),
        None,
    ),
    (
        "sine_packet",
        {"omega": 3.0, "b": 1.0},
        lambda s: 3.0 / ((s + 1.0) ** 2 + 9.0),
        (-1.0, math.inf),
    ),
]


@pytest.mark.parametrize("name,params,oracle,strip", CLASSICAL_FIXTURES)
def test_classical_reduction(name, params, oracle, strip):
    f = standard_original(name, 1, **params)
    if strip:
        assert f.strip == strip
    rng = np.random.default_rng(5)
    for _ in range(20):
        p0 = rng.uniform(max(f.strip[0] + 0.3, -2.0), 3.0)
        p1 = rng.uniform(-8.0, 8.0)
        got, err = forward(f, spec1(), np.array([p0, p1]), Q1)
        want = oracle(complex(p0, p1))
        assert abs(got[0] - want.real) + abs(got[1] - want.imag) <= 1e-8


def test_zero_original_and_linearity():
    z = OriginalFn(1, lambda t: np.zeros(t.shape[0]), SupportSpec.whole(1))
    got, _ = forward(z, spec1(), np.array([0.5, 1.0]), Q1)
    assert got.norm() == 0.0

    f = standard_original("exp_decay", 1, b=1.0)
    g = standard_original("sine_packet", 1, omega=2.0, b=1.5)
    al, be = 0.7, -1.3

    comb = OriginalFn(
        1,
        lambda t: al * f(t) + be * g(t),
        SupportSpec.positive(1),
        ( -1.0, math.inf),
    )
    p = np.array([0.4, 2.0])
    lhs, _ = forward(comb, spec1(), p, Q1)
    Ff, _ = forward(f, spec1(), p, Q1)
    Fg, _ = forward(g, spec1(), p, Q1)
    rhs = al * Ff + be * Fg
    assert (lhs - rhs).norm() <= 1e-10


def test_strip_enforcement():
    f = standard_original("exp_decay", 1, b=1.0)
    with pytest.raises(StripError):
        forward(f, spec1(), np.array([-1.5, 0.0]), Q1)
    assert strip_of(f) == (-1.0, math.inf)


def test_budget_error():
    f = standard_original("gaussian", 3, sigma=1.0)
    quad = QuadSpec(panels=40, order=20, max_evals=1000)
    spec = KernelSpec("cartesian", 3, 2)
    with pytest.raises(QuadratureBudgetError):
        forward(f, spec, np.zeros(4), quad)


def test_strip_of_fixtures():
    assert standard_original("exp_decay", 2, b=1.0).strip == (-1.0, math.inf)
    assert standard_original("box_indicator", 2).strip == (-math.inf, math.inf)
    assert standard_original("gaussian", 2).strip == (-math.inf, math.inf)


# ------------------------------------------------------------ delta images


def test_mollified_delta_image_converges_quadratically():
    spec = KernelSpec("cartesian", 2, 2, zeta=[0.1, 0.2, -0.3, 0.0])
    tau = np.array([0.4, 0.7])
    quad = QuadSpec(panels=10, order=12, radius=1.5)
    pts = [np.array([0.3, 0.8, -0.5, 0.0]), np.array([0.0, 1.5, 0.9, 0.0])]
    errors = []
    for eps in (0.1, 0.05, 0.025):
        d = standard_original("mollified_delta", 2, eps=eps, tau=tau)
        # integrate on a tight box around tau for resolution
        d.support = SupportSpec.box([(tau[0] - 1, tau[0] + 1), (tau[1] - 1, tau[1] + 1)])
        worst = 0.0
        for p in pts:
            got, _ = forward(d, spec, p, quad)
            want = exp_neg_u(p, tau, spec)
            worst = max(worst, np.max(np.abs(got.coords - want)))
        errors.append(worst)
    order1 = math.log2(errors[0] / errors[1])
    order2 = math.log2(errors[1] / errors[2])
    assert order1 >= 1.8 and order2 >= 1.8


# ------------------------------------------------------------ round trips


def _roundtrip(mode, n, quad, radius, a=0.0, tol=1e-3, npts=10):
    f = standard_original("gaussian", n, sigma=1.0)
    r = max(1, int(np.ceil(np.log2(n + 1))))
    spec = KernelSpec(mode, n, r)
    F = ImageFn.from_original(f, spec, quad)
    pts = RNG.uniform(-1.0, 1.0, size=(npts, n))
    vals, err = inverse_grid(F, a, pts, quad, radius=radius)
    want = f(pts)
    resid = np.abs(vals[:, 0] - want).max() + np.abs(vals[:, 1:]).max()
    assert resid <= tol, (mode, n, resid)


@pytest.mark.parametrize("mode", ["cartesian", "spherical"])
def test_roundtrip_n1(mode):
    quad = QuadSpec(panels=8, order=16, radius=7.0, inverse_panels=8,
                    inverse_order=16, error_mode="none")
    _roundtrip(mode, 1, quad, radius=7.0, tol=2e-4)


def test_roundtrip_n2_spherical():
    quad = QuadSpec(panels=6, order=12, radius=6.5, inverse_panels=6,
                    inverse_order=10, error_mode="none", chunk=2_000_000)
    _roundtrip("spherical", 2, quad, radius=8.0, tol=5e-4)


def test_roundtrip_n2_assembled_equals_fused():
    # the explicit T-shift assembly and the fused complex pass agree
    f = standard_original("gaussian", 2, sigma=1.0)
    spec = KernelSpec("spherical", 2, 2, zeta=[0.2, 0.4, -0.3, 0.0])
    quad = QuadSpec(panels=5, order=10, radius=6.0, inverse_panels=5,
                    inverse_order=8, error_mode="none")
    F = ImageFn.from_original(f, spec, quad)
    pts = np.array([[0.3, -0.4], [0.0, 0.6]])
    va, _ = inverse_grid(F, 0.0, pts, quad, radius=7.0, method="assemble")
    vf, _ = inverse_grid(F, 0.0, pts, quad, radius=7.0, method="fourier")
    assert np.allclose(va, vf, atol=1e-10)
    assert np.abs(va[:, 0] - f(pts)).max() <= 1e-3


def test_cartesian_n2_pv_tail_is_flagged():
    # Cartesian images decay only algebraically along imaginary directions,
    # so the truncated principal-value inverse does not stabilize under
    # radius doubling; the error estimate must say so.
    f = standard_original("gaussian", 2, sigma=1.0)
    spec = KernelSpec("cartesian", 2, 2)
    quad = QuadSpec(panels=5, order=10, radius=6.0, inverse_panels=5,
                    inverse_order=8, error_mode="nested")
    F = ImageFn.from_original(f, spec, quad)
    vals, err = inverse_grid(F, 0.0, np.array([[0.3, -0.4]]), quad,
                             radius=6.0, method="pv")
    assert err > 1e-2


def test_roundtrip_with_error_estimate_n1():
    quad = QuadSpec(panels=8, order=16, radius=7.0, inverse_panels=8,
                    inverse_order=16, error_mode="nested")
    f = standard_original("gaussian", 1, sigma=1.0)
    spec = KernelSpec("cartesian", 1, 1)
    F = ImageFn.from_original(f, spec, quad)
    val, err = inverse(F, 0.0, [0.3], quad, radius=7.0)
    assert abs(val[0] - f(np.array([[0.3]]))[0]) <= 1e-4
    assert err < 1e-2


def test_zero_image_inverts_to_zero():
    spec = KernelSpec("cartesian", 1, 1)
    F = ImageFn.from_callable(
        spec, (-math.inf, math.inf), lambda pact, sp: np.zeros((pact.shape[0], 2))
    )
    quad = QuadSpec(inverse_panels=4, inverse_order=8, error_mode="none")
    val, _ = inverse(F, 0.0, [0.5], quad, radius=3.0, method="assemble")
    assert val.norm() == 0.0
    val, _ = inverse(F, 0.0, [0.5], quad, radius=3.0, method="pv")
    assert val.norm() == 0.0


def test_roundtrip_mollified_delta_peak():
    # image of a mollified delta inverts back to the mollifier peak
    eps = 0.35
    tau = np.array([0.5])
    d = standard_original("mollified_delta", 1, eps=eps, tau=tau)
    spec = KernelSpec("cartesian", 1, 1)
    quad = QuadSpec(panels=8, order=16, radius=3.0, inverse_panels=14,
                    inverse_order=16, error_mode="none")
    F = ImageFn.from_original(d, spec, quad)
    vals, _ = inverse_grid(F, 0.0, tau[None, :], quad, radius=14.0 / eps)
    peak = d(tau[None, :])[0]
    assert abs(vals[0, 0] - peak) / peak <= 1e-2


# ------------------------------------------------------------ shifts on images


def test_t_shift_group_law_on_images():
    f = standard_original("gaussian", 2, sigma=1.0)
    spec = KernelSpec("spherical", 2, 2)
    quad = QuadSpec(panels=5, order=10, radius=6.0, error_mode="none")
    F = ImageFn.from_original(f, spec, quad)
    P = np.array([[0.2, 0.7, -0.4, 0.0]])
    one, _ = F.t_shift((1, 2)).t_shift((2, 1)).eval_grid(P)
    two, _ = F.t_shift((3, 3)).eval_grid(P)
    assert np.allclose(one, two, atol=1e-13)


def test_s_apply_exact_vs_fd_on_gaussian_image():
    f = standard_original("gaussian", 2, sigma=1.0)
    for mode in ("cartesian", "spherical"):
        spec = KernelSpec(mode, 2, 2, zeta=[0.0, 0.1, 0.2, 0.0])
        quad = QuadSpec(panels=5, order=10, radius=6.0, error_mode="none")
        F = ImageFn.from_original(f, spec, quad)
        P = np.array([[0.3, 0.9, -0.6, 0.0], [0.0, 0.2, 1.1, 0.0]])
        for j in (1, 2):
            exact, _ = F.s_apply(j, 1).eval_grid(P)
            fd = F.s_apply(j, 1, method="fd", h=0.05)(P)
            assert np.max(np.abs(exact - fd)) <= 1e-6, (mode, j)


def test_delta_image_closed_form():
    spec = KernelSpec("spherical", 2, 2, zeta=[0.0, 0.3, 0.1, 0.0])
    tau = np.array([0.2, -0.6])
    F = ImageFn.delta_image(spec, tau)
    p = np.array([0.5, 1.0, -0.7, 0.0])
    got, err = F.eval(p)
    assert err == 0.0
    assert np.allclose(got.coords, exp_neg_u(p, tau, spec), atol=1e-14)
