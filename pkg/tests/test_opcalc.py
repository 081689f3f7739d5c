import math

import numpy as np
import pytest

from cdlaplace.kernel import KernelSpec
from cdlaplace.opcalc import (
    check_boundary_box,
    check_delta_image,
    check_derivative,
    check_exp_shift,
    check_higher_derivative,
    check_holomorphy,
    check_image_derivative,
    check_integration,
    check_iterated_box,
    check_kernel_identity,
    check_limit_final,
    check_limit_initial,
    check_parity,
    check_periodicity,
    check_scaling,
    check_shift,
)
from cdlaplace.originals import OriginalFn, SupportSpec, standard_original
from cdlaplace.transform import QuadSpec

QUAD = QuadSpec(panels=10, order=14, radius=7.0, target_tol=1e-9, error_mode="none")
QUAD_EST = QuadSpec(panels=10, order=14, radius=7.0, target_tol=1e-9)


def rng():
    return np.random.default_rng(123)


def sph(n, zeta=None):
    r = max(1, int(np.ceil(np.log2(n + 1))))
    return KernelSpec("spherical", n, r, zeta)


def cart(n, zeta=None):
    r = max(1, int(np.ceil(np.log2(n + 1))))
    return KernelSpec("cartesian", n, r, zeta)


def box_original(bounds, fn=None, name="boxed", deriv=None):
    supp = SupportSpec.box(bounds)
    n = len(bounds)

    def ev(t):
        t = np.atleast_2d(t)
        inside = supp.indicator(t).astype(float)
        return inside * (fn(t) if fn else 1.0)

    out = OriginalFn(n, ev, supp, (-math.inf, math.inf), 1.0, (1.0, 1.0), 1000,
                     name=name)
    if deriv is not None:
        out.deriv_factory = deriv
    return out


# ---------------------------------------------------------------- Thm 11


@pytest.mark.parametrize("mode", ["spherical", "cartesian"])
def test_scaling_gaussian(mode):
    f = standard_original("gaussian", 2, sigma=1.0)
    spec = sph(2) if mode == "spherical" else cart(2)
    chk = check_scaling(f, spec, QUAD_EST, rng())
    assert chk.passed, chk


# ---------------------------------------------------------------- Thm 12


@pytest.mark.parametrize("mode", ["spherical", "cartesian"])
@pytest.mark.parametrize("j", [1, 2])
def test_derivative_quadrant_exp(mode, j):
    # f = e^{-s_1} on U_{1,1}: residual small at the spec's example level
    f = standard_original("exp_decay", 2, b=1.0)
    spec = sph(2) if mode == "spherical" else cart(2)
    chk = check_derivative(f, j, spec, QUAD_EST, rng(), samples=6)
    assert chk.passed, chk
    assert chk.residual <= 1e-6


def test_derivative_zero_trace_case():
    # f vanishing on t_j = 0: the boundary term vanishes identically
    f = standard_original("poly_exp", 2, powers=(1, 1), b=1.0)
    spec = sph(2)
    chk = check_derivative(f, 1, spec, QUAD_EST, rng(), samples=4)
    assert chk.passed and chk.residual <= 1e-6


def test_derivative_classical_n1():
    # n = 1 reduces to L(f') = p F - f(0)
    f = standard_original("exp_decay", 1, b=1.0)
    chk = check_derivative(f, 1, cart(1), QUAD_EST, rng(), samples=8)
    assert chk.passed and chk.residual <= 1e-8


def test_derivative_restricted_transform():
    # restricted prefix subset: n=1 active inside the quaternion algebra
    f = standard_original("exp_decay", 1, b=1.0)
    spec = KernelSpec("spherical", 1, 2)
    chk = check_derivative(f, 1, spec, QUAD_EST, rng(), samples=4)
    assert chk.passed


# ---------------------------------------------------------------- Thm 21


@pytest.mark.parametrize("mode", ["spherical", "cartesian"])
@pytest.mark.parametrize("multi", [(1, 0), (0, 1), (2, 0), (1, 1), (0, 2)])
def test_higher_derivative_whole_space(mode, multi):
    f = standard_original("gaussian", 2, sigma=1.0)
    spec = sph(2) if mode == "spherical" else cart(2)
    chk = check_higher_derivative(f, multi, spec, QUAD_EST, rng())
    assert chk.passed, (mode, multi, chk)


def test_second_order_spherical_tolerance():
    f = standard_original("gaussian", 2, sigma=1.0)
    chk = check_higher_derivative(f, (2, 0), sph(2), QUAD_EST, rng())
    assert chk.residual <= 1e-5


# ---------------------------------------------------------------- Thm 13 / 4


@pytest.mark.parametrize("mode", ["spherical", "cartesian"])
def test_image_derivative(mode):
    f = standard_original("gaussian", 2, sigma=1.0)
    spec = sph(2) if mode == "spherical" else cart(2)
    chk = check_image_derivative(f, spec, QUAD, rng())
    assert chk.passed, chk
    assert chk.residual <= 1e-4


def test_holomorphy_n1_and_n2():
    f1 = standard_original("gaussian", 1, sigma=1.0)
    chk1 = check_holomorphy(f1, cart(1), QUAD, rng())
    assert chk1.passed and chk1.residual <= 1e-4
    f2 = standard_original("gaussian", 2, sigma=1.0)
    chk2 = check_holomorphy(f2, sph(2), QUAD, rng())
    assert chk2.passed


# ---------------------------------------------------------------- Thm 14 / 16


@pytest.mark.parametrize("mode", ["spherical", "cartesian"])
def test_shift_theorem(mode):
    f = standard_original("gaussian", 2, sigma=1.0)
    spec = sph(2) if mode == "spherical" else cart(2)
    chk = check_shift(f, [0.4, -0.3], spec, QUAD_EST, rng())
    assert chk.passed, chk


def test_shift_theorem_quadrant():
    f = standard_original("exp_decay", 2, b=1.0)
    chk = check_shift(f, [0.5, 0.2], sph(2), QUAD_EST, rng())
    assert chk.passed


@pytest.mark.parametrize("mode", ["spherical", "cartesian"])
def test_exponential_shift(mode):
    f = standard_original("gaussian", 2, sigma=1.0)
    spec = sph(2) if mode == "spherical" else cart(2)
    chk = check_exp_shift(f, 0.7, spec, QUAD_EST, rng())
    assert chk.passed, chk


# ---------------------------------------------------------------- Cor 4.1


def test_periodicity_and_sign():
    f = standard_original("gaussian", 2, sigma=1.0)
    chk = check_periodicity(f, sph(2), QUAD_EST, rng())
    assert chk.passed, chk


def test_parity_property():
    chk = check_parity(sph(2), QUAD_EST, rng(), j=1)
    assert chk.passed, chk


# ---------------------------------------------------------------- Thm 18


def test_limit_initial_n1():
    f = standard_original("exp_decay", 1, b=1.0)
    chk = check_limit_initial(f, sph(1), QUAD)
    assert chk.passed, chk.details
    # f(0) = 1 recovered within 5e-2
    assert abs(chk.details["limit"][0] - 1.0) <= 5e-2


def test_limit_initial_zero_case():
    f = standard_original("poly_exp", 1, powers=(1,), b=1.0)  # f(0) = 0
    chk = check_limit_initial(f, sph(1), QUAD)
    assert chk.passed
    assert abs(chk.details["limit"][0]) <= 5e-2


def test_limit_initial_n2():
    f = standard_original("exp_decay", 2, b=1.0)
    chk = check_limit_initial(f, cart(2), QUAD)
    assert chk.passed, chk.details
    # target is (-1)^{n+1} f(0) = -1; recovered f(0) within 5e-2
    assert abs(-chk.details["limit"][0] - 1.0) <= 5e-2


def test_limit_final_n1():
    b = 1.0

    def ev(t):
        t = np.atleast_2d(t)
        return (1.0 - np.exp(-b * t[:, 0])) * (t[:, 0] >= 0)

    f = OriginalFn(1, ev, SupportSpec.positive(1), (0.0 - 1e-9, math.inf),
                   1.0, (1.0, b), 0, name="rise")
    chk = check_limit_final(f, 1.0, sph(1), QUAD)
    assert chk.passed, chk.details


# ---------------------------------------------------------------- Thm 23 / 25


def test_boundary_box_constant():
    # f == 1 on [0,1]^2: the identity reduces to explicit side integrals
    def zero_deriv(multi):
        return OriginalFn(2, lambda t: np.zeros(np.atleast_2d(t).shape[0]),
                          SupportSpec.box([(0, 1), (0, 1)]))

    f = box_original([(0.0, 1.0), (0.0, 1.0)], deriv=zero_deriv)
    for mode in ("spherical", "cartesian"):
        spec = sph(2) if mode == "spherical" else cart(2)
        chk = check_boundary_box(f, 1, spec, QUAD_EST, rng())
        assert chk.passed, (mode, chk)


def test_boundary_box_infinite_face_drops():
    # b_2 = inf with decaying f: the upper-trace addendum vanishes
    supp = SupportSpec.box([(0.0, 1.0), (0.0, math.inf)])

    def make(multi):
        def ev(t):
            t = np.atleast_2d(t)
            inside = supp.indicator(t).astype(float)
            return inside * (-1.0) ** sum(multi) * np.exp(-t.sum(axis=1))

        return OriginalFn(2, ev, supp, (-1.0, math.inf), 1.0, (1.0, 1.0), 1000,
                          name="boxexp", deriv_factory=make)

    f = make((0, 0))
    chk = check_boundary_box(f, 2, sph(2), QUAD_EST, rng())
    assert chk.passed, chk


def test_iterated_box_mixed():
    supp = SupportSpec.box([(0.0, 1.0), (0.0, math.inf)])

    def make(multi):
        def ev(t):
            t = np.atleast_2d(t)
            inside = supp.indicator(t).astype(float)
            return inside * (-1.0) ** sum(multi) * np.exp(-t.sum(axis=1))

        return OriginalFn(2, ev, supp, (-1.0, math.inf), 1.0, (1.0, 1.0), 1000,
                          name="boxexp", deriv_factory=make)

    f = make((0, 0))
    chk = check_iterated_box(f, (1, 1), sph(2), QUAD_EST, rng())
    assert chk.passed, chk
    chk2 = check_iterated_box(f, (2, 0), sph(2), QUAD_EST, rng())
    assert chk2.passed and chk2.residual <= 1e-5


def test_iterated_quadrant_matches_thm12_form():
    f = standard_original("exp_decay", 2, b=1.0)
    chk = check_iterated_box(f, (1, 1), sph(2), QUAD_EST, rng())
    assert chk.passed, chk


# ---------------------------------------------------------------- Thm 26


def test_integration_n1_classical():
    f = standard_original("exp_decay", 1, b=1.0)

    def g_eval(t):
        t = np.atleast_2d(t)
        return (1.0 - np.exp(-t[:, 0])) * (t[:, 0] >= 0)

    g = OriginalFn(1, g_eval, SupportSpec.positive(1), (-1e-12, math.inf),
                   1.0, (1.0, 1.0), 0, name="int-exp")
    chk = check_integration(f, g, sph(1), QUAD_EST, rng())
    assert chk.passed, chk


@pytest.mark.parametrize("mode", ["spherical", "cartesian"])
def test_integration_n2_box_indicator(mode):
    f = standard_original("box_indicator", 2, bounds=[(0, 1), (0, 1)])

    def g_eval(t):
        t = np.atleast_2d(t)
        inside = (t >= 0).all(axis=1)
        return inside * np.minimum(t[:, 0], 1.0).clip(0) * np.minimum(
            t[:, 1], 1.0
        ).clip(0)

    g = OriginalFn(2, g_eval, SupportSpec.positive(2), (-1e-12, math.inf),
                   1.0, (1.0, 1.0), 0, name="int-box",
                   breaks=((1.0,), (1.0,)))
    spec = sph(2) if mode == "spherical" else cart(2)
    chk = check_integration(f, g, spec, QUAD_EST, rng())
    assert chk.passed, (mode, chk)
    assert chk.residual <= 1e-6


# ---------------------------------------------------------------- delta, kernel


def test_delta_image_and_kernel_identity():
    spec = KernelSpec("cartesian", 2, 2, zeta=[0.1, 0.2, -0.3, 0.0])
    quad = QuadSpec(panels=10, order=12, radius=1.5, error_mode="none")
    chk = check_delta_image(spec, quad, rng())
    assert chk.passed, chk.details
    chk2 = check_kernel_identity(rng(), r=3, samples=50)
    assert chk2.passed and chk2.residual <= 1e-12
