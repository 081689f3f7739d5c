"""Constant-coefficient linear PDE solving through the transform.

Pipeline: rewrite the operator as an image-space multiplier plus signed face
transforms (quadrants and boxes), split the image equation into the phase
branches, sweep each branch with quarter-period shifts to get a finite
linear system over the shifted unknowns, solve it (closed 2x2/4x4 forms
where the pattern allows, dense always as a cross-check), and invert the
reconstructed image.  Closed-form elliptic fundamental solutions and the
even-order operator factorization over an enlarged algebra round out the
module.
"""

from __future__ import annotations

import dataclasses
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ._jet import Jet, jet_variable
from ._poly import Polynomial
from .algebra import CdNumber, mul_array, mul_table
from .kernel import ImageOperator, KernelSpec, kernel_contract, partial_sums
from .originals import OriginalFn, SupportSpec
from .transform import QuadSpec, tensor_grid

__all__ = [
    "OperatorSpec",
    "FaceTerm",
    "AssembledEquation",
    "assemble_image_equation",
    "PhaseSystem",
    "build_phase_system",
    "solve_phase_system",
    "solve_rot2",
    "solve_cyclic4",
    "quaternion_gauss_solve",
    "left_mul_matrix",
    "solve_pde_particular",
    "SolveReport",
    "fundamental_solution_elliptic",
    "sigma_constants",
    "delta_test",
    "gaussian_poisson_solution_2d",
    "Block",
    "Decomposition",
    "decompose_operator",
    "apply_diff_operator",
    "apply_factor",
    "adjoint_ellipticity_probe",
    "residual_order_estimate",
]


# ---------------------------------------------------------------------------
# operator specification and image-equation assembly
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OperatorSpec:
    """Constant-coefficient linear partial differential operator.

    terms maps multi-indices (length n) to coefficients: floats or CdNumber
    (admissible pairings: real coefficients with any value domain;
    quaternion coefficients act by left multiplication on quaternion-valued
    functions).  mode says whether derivatives are in t- or s-variables.
    """

    n: int
    terms: tuple  # ((multi, coeff), ...) with coeff float | CdNumber
    mode: str = "t"
    coeff_domain: str = "real"  # "real" | "complex" | "quaternion"

    @classmethod
    def from_terms(cls, n, terms: dict, mode="t", coeff_domain=None):
        items = []
        domain = "real"
        for multi, c in terms.items():
            multi = tuple(int(v) for v in multi)
            if len(multi) != n:
                raise ValueError("multi-index length must equal n")
            if isinstance(c, CdNumber):
                if np.any(c.coords[1:] != 0.0):
                    domain = "quaternion" if c.level >= 2 else "complex"
            items.append((multi, c))
        return cls(n, tuple(items), mode, coeff_domain or domain)

    @classmethod
    def from_config(cls, cfg: dict, n: int) -> "OperatorSpec":
        terms = {}
        for item in cfg["terms"]:
            multi = tuple(int(v) for v in item["index"])
            coeff = item["coeff"]
            if isinstance(coeff, (int, float)):
                coeff = float(coeff)
            else:
                arr = np.asarray(coeff, dtype=float)
                lvl = int(round(math.log2(len(arr))))
                coeff = CdNumber(lvl, arr)
            terms[multi] = coeff
        return cls.from_terms(n, terms, mode=cfg.get("mode", "t"))

    @property
    def order(self) -> int:
        return max(sum(m) for m, _ in self.terms)

    def __post_init__(self):
        top = [c for m, c in self.terms if sum(m) == self.order]
        if not any(_coeff_nonzero(c) for c in top):
            raise ValueError("no nonzero coefficient at the natural order")

    def to_s_mode(self) -> "OperatorSpec":
        """Rewrite t-derivatives as s-derivatives: d/dt_j = sum_{k<=j} d/ds_k."""
        if self.mode == "s":
            return self
        out: dict = {}
        for multi, c in self.terms:
            expansions = [((0,) * self.n, 1.0)]
            for axis, e in enumerate(multi):
                for _ in range(e):
                    nxt = {}
                    for m0, w in expansions:
                        for k in range(axis + 1):
                            m1 = tuple(
                                v + (1 if l == k else 0) for l, v in enumerate(m0)
                            )
                            nxt[m1] = nxt.get(m1, 0.0) + w
                    expansions = list(nxt.items())
            for m1, w in expansions:
                cur = out.get(m1)
                add = c * w if not isinstance(c, CdNumber) else c * float(w)
                out[m1] = add if cur is None else cur + add
        items = {m: c for m, c in out.items() if _coeff_nonzero(c)}
        return OperatorSpec.from_terms(self.n, items, mode="s", coeff_domain=self.coeff_domain)


def _coeff_nonzero(c) -> bool:
    if isinstance(c, CdNumber):
        return bool(np.any(c.coords != 0.0))
    return c != 0.0


@dataclass(frozen=True)
class FaceTerm:
    """One signed face transform of Thm-25 type.

    Contributes sign * coeff * R^{(m)} F^{n-|h|}(d^{(q)} f | pinned faces).
    """

    sign: float
    coeff: object  # float | CdNumber
    m_multi: tuple
    q_multi: tuple
    pinned: tuple  # ((axis0based, value), ...)


@dataclass
class AssembledEquation:
    spec: KernelSpec
    operator: OperatorSpec
    domain: SupportSpec
    op_main: ImageOperator
    faces: list


def _face_values(domain: SupportSpec, axis0: int, n: int):
    """(l, value) candidates for pinning an axis: l=1 lower, l=2 upper."""
    iv = domain.axis_interval(axis0, n)
    out = []
    if np.isfinite(iv[0]):
        out.append((1, iv[0]))
    if np.isfinite(iv[1]):
        out.append((2, iv[1]))
    return out


def assemble_image_equation(
    A: OperatorSpec, domain: SupportSpec, spec: KernelSpec
) -> AssembledEquation:
    """Image-space form of A[f] = g on the domain.

    Whole space: multiplier only.  Quadrants and boxes: Thm-25 multiplier
    plus the signed (lj)-indexed face transforms; infinite faces drop.
    Variable coefficients are out of scope.
    """
    from .kernel import operator_from_multi

    n = A.n
    if spec.n != n:
        raise ValueError("operator and kernel dimension mismatch")
    if A.mode == "s" and spec.mode == "cartesian":
        A = _s_to_t(A)
    elif A.mode == "t" and domain.kind == "whole_space" and spec.mode == "spherical":
        A = A.to_s_mode()

    op_main = ImageOperator.zero(n, spec.mode)
    faces: list = []
    for multi, coeff in A.terms:
        mono = operator_from_multi(spec, multi, deriv_in=A.mode)
        if not isinstance(coeff, CdNumber) or _is_real(coeff):
            cval = coeff if not isinstance(coeff, CdNumber) else coeff.re()
            op_main = op_main + mono.scale(float(cval))
        else:
            op_main = op_main + mono.left_mul(coeff)
        if domain.kind == "whole_space":
            continue
        if A.mode != "t":
            raise ValueError("bounded-domain assembly expects t-derivatives")
        faces.extend(_face_terms_for(multi, coeff, domain, n))
    return AssembledEquation(spec, A, domain, op_main.collect(), faces)


def _is_real(c: CdNumber) -> bool:
    return not np.any(c.coords[1:] != 0.0)


def _s_to_t(A: OperatorSpec) -> OperatorSpec:
    """d/ds_1 = d/dt_1; d/ds_j = d/dt_j - d/dt_{j-1} for j >= 2."""
    out: dict = {}
    for multi, c in A.terms:
        expansions = [((0,) * A.n, 1.0)]
        for axis, e in enumerate(multi):
            for _ in range(e):
                nxt = {}
                for m0, w in expansions:
                    targets = [(axis, 1.0)]
                    if axis >= 1:
                        targets.append((axis - 1, -1.0))
                    for k, sgn in targets:
                        m1 = tuple(
                            v + (1 if l == k else 0) for l, v in enumerate(m0)
                        )
                        nxt[m1] = nxt.get(m1, 0.0) + w * sgn
                expansions = list(nxt.items())
        for m1, w in expansions:
            if w == 0.0:
                continue
            cur = out.get(m1)
            add = c * w if not isinstance(c, CdNumber) else c * float(w)
            out[m1] = add if cur is None else cur + add
    items = {m: c for m, c in out.items() if _coeff_nonzero(c)}
    return OperatorSpec.from_terms(A.n, items, mode="t", coeff_domain=A.coeff_domain)


def _face_terms_for(multi, coeff, domain: SupportSpec, n: int):
    """Thm-25 face sum for one derivative monomial d^{multi}/dt^{multi}."""
    axis_choices = []
    for k in range(n):
        if multi[k] == 0:
            axis_choices.append([(0, None)])
        else:
            axis_choices.append([(0, None)] + _face_values(domain, k, n))
    out = []
    for combo in itertools.product(*axis_choices):
        lvec = tuple(l for l, _ in combo)
        if not any(lvec):
            continue  # the main multiplier term
        # per-axis (m_k, q_k) splits
        splits_per_axis = []
        for k in range(n):
            l_k = lvec[k]
            j_k = multi[k]
            if l_k == 0:
                splits_per_axis.append([(j_k, 0)])
            else:
                splits_per_axis.append([(mk, j_k - 1 - mk) for mk in range(j_k)])
        sign = (-1.0) ** sum(lvec)
        pinned = tuple(
            (k, combo[k][1]) for k in range(n) if lvec[k] != 0
        )
        for split in itertools.product(*splits_per_axis):
            m_multi = tuple(s[0] for s in split)
            q_multi = tuple(s[1] for s in split)
            out.append(FaceTerm(sign, coeff, m_multi, q_multi, pinned))
    return out


# ---------------------------------------------------------------------------
# phase-group bookkeeping
# ---------------------------------------------------------------------------


def canon_group(m: Sequence[int]) -> tuple[float, tuple]:
    """Canonical representative of a plain shift multi-order.

    Axis 1 carries T^2 = -1 (period 4 folded onto {0,1} with a sign); the
    other axes are plain period 4.
    """
    m = tuple(int(v) % 4 for v in m)
    sign = 1.0
    m1 = m[0]
    if m1 >= 2:
        sign = -1.0
        m1 -= 2
    return sign, (m1,) + m[1:]


def generate_group(gens: Sequence[tuple], n: int) -> list:
    """Subgroup of Z_2 x Z_4^{n-1} generated by the shifts (canonical reps)."""
    seen = {(0,) * n}
    frontier = [(0,) * n]
    gens = [canon_group(g)[1] for g in gens]
    while frontier:
        cur = frontier.pop()
        for g in gens:
            s, nxt = canon_group(tuple(a + b for a, b in zip(cur, g)))
            if nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    return sorted(seen)


@dataclass
class PhaseSystem:
    """Swept linear system over the shifted unknowns x_(l) = T_(l) F.

    psi maps group elements to lists of (coeff, ppow, scale); the matrix at a
    given p is M[(m),(l+m)] += sign * psi_(l)(p).
    """

    n: int
    group: list
    index: dict
    psi: dict  # (l) -> list of (coeff_or_None, ppow, scale)
    domain: str  # "real" | "quaternion"
    level: int = 2

    def size(self) -> int:
        return len(self.group)

    def psi_values(self, pact: np.ndarray) -> dict:
        """Evaluate each psi_(l) at the p-batch; scalars or (M, dim) coords."""
        out = {}
        for l, terms in self.psi.items():
            if self.domain == "real":
                acc = np.zeros(pact.shape[0])
                for coeff, ppow, scale in terms:
                    term = np.full(pact.shape[0], scale)
                    for i, e in enumerate(ppow):
                        if e:
                            term = term * pact[:, i] ** e
                    acc = acc + term
            else:
                dim = 1 << self.level
                acc = np.zeros((pact.shape[0], dim))
                for coeff, ppow, scale in terms:
                    term = np.full(pact.shape[0], scale)
                    for i, e in enumerate(ppow):
                        if e:
                            term = term * pact[:, i] ** e
                    cc = (
                        coeff.promote(self.level).coords
                        if isinstance(coeff, CdNumber)
                        else None
                    )
                    if cc is None:
                        acc[:, 0] += term
                    else:
                        acc += term[:, None] * cc[None, :]
            out[l] = acc
        return out

    def matrices(self, pact: np.ndarray) -> np.ndarray:
        """Swept matrices, (M, K, K) real or (M, K*dim, K*dim) block-real."""
        vals = self.psi_values(pact)
        K = self.size()
        M = pact.shape[0]
        if self.domain == "real":
            mats = np.zeros((M, K, K))
            for mi, m in enumerate(self.group):
                for l, v in vals.items():
                    sgn, tgt = canon_group(tuple(a + b for a, b in zip(m, l)))
                    mats[:, mi, self.index[tgt]] += sgn * v
            return mats
        dim = 1 << self.level
        mats = np.zeros((M, K * dim, K * dim))
        for mi, m in enumerate(self.group):
            for l, v in vals.items():
                sgn, tgt = canon_group(tuple(a + b for a, b in zip(m, l)))
                ti = self.index[tgt]
                blocks = left_mul_matrix(v)  # (M, dim, dim)
                mats[:, mi * dim : (mi + 1) * dim, ti * dim : (ti + 1) * dim] += (
                    sgn * blocks
                )
        return mats


def left_mul_matrix(coords: np.ndarray) -> np.ndarray:
    """Matrix of left multiplication x -> a*x, batched over leading axes."""
    coords = np.asarray(coords, dtype=float)
    dim = coords.shape[-1]
    idx, sgn = mul_table(dim)
    out = np.zeros(coords.shape[:-1] + (dim, dim))
    for i in range(dim):
        for j in range(dim):
            out[..., idx[i, j], j] += sgn[i, j] * coords[..., i]
    return out


def build_phase_system(
    eqn: AssembledEquation, branch: int, extra_shifts=()
) -> PhaseSystem:
    """Phase system of the equation on the given branch (1..n).

    The branch-w projection annihilates shifts and p-powers on axes > w;
    the sweep group is generated by the occurring monomials plus any shifts
    the caller needs (e.g. the inversion patterns), and solvability is
    checked a posteriori through the dense solve.
    """
    spec = eqn.spec
    if spec.mode != "spherical":
        raise ValueError("the phase-system solver works in spherical coordinates")
    n = eqn.spec.n
    op = eqn.op_main.restrict_trailing(branch)
    psi: dict = {}
    domain = "real"
    for coeff, ppow, m, scale in op.terms:
        sgn, l = canon_group(m)
        entry = psi.setdefault(l, [])
        entry.append((coeff, ppow, scale * sgn))
        if coeff is not None and np.any(np.asarray(coeff)[1:] != 0.0):
            domain = "quaternion"
    if eqn.operator.coeff_domain == "quaternion":
        domain = "quaternion"
    gens = list(psi.keys()) + [canon_group(g)[1] for g in extra_shifts]
    group = generate_group(gens, n)
    index = {g: i for i, g in enumerate(group)}
    level = max(spec.r, 2)
    return PhaseSystem(n, group, index, psi, domain, level)


# ---------------------------------------------------------------------------
# closed-form solvers and the dense/batched path
# ---------------------------------------------------------------------------


def solve_rot2(alpha, beta, b1, b2):
    """Solve  alpha x1 + beta x2 = b1, -beta x1 + alpha x2 = b2.

    alpha, beta are real arrays; b1, b2 arrays (..., dim) or (...,).
    """
    den = alpha * alpha + beta * beta
    ca, cb = alpha / den, beta / den
    if np.ndim(b1) > np.ndim(ca):
        ca, cb = ca[..., None], cb[..., None]
    x1 = ca * b1 - cb * b2
    x2 = ca * b2 + cb * b1
    return x1, x2


def solve_cyclic4(a, b, c, d, b1, b2, b3, b4):
    """Closed-form solution of the cyclic system

        a x1 + b x2 + c x3 + d x4 = b1
        d x1 + a x2 + b x3 + c x4 = b2
        c x1 + d x2 + a x3 + b x4 = b3
        b x1 + c x2 + d x3 + a x4 = b4

    with real or complex a..d and algebra-valued right sides.
    """
    xi1 = a**3 + b**2 * c + c * d**2 - a * c**2 - 2 * a * b * d
    xi2 = a**2 * b + b * c**2 + d**3 - b**2 * d - 2 * a * c * d
    xi3 = a * b**2 + c**3 + a * d**2 - a**2 * c - 2 * b * c * d
    xi4 = a**2 * d + b**3 + c**2 * d - b * d**2 - 2 * a * b * c
    delta = a * xi1 - d * xi2 + c * xi3 - b * xi4

    def mul(u, v):
        if np.ndim(v) > np.ndim(u):
            return u[..., None] * v
        return u * v

    d1 = mul(xi1, b1) - mul(xi2, b2) + mul(xi3, b3) - mul(xi4, b4)
    d2 = -mul(xi4, b1) + mul(xi1, b2) - mul(xi2, b3) + mul(xi3, b4)
    d3 = mul(xi3, b1) - mul(xi4, b2) + mul(xi1, b3) - mul(xi2, b4)
    d4 = -mul(xi2, b1) + mul(xi3, b2) - mul(xi4, b3) + mul(xi1, b4)
    inv = 1.0 / delta
    if np.ndim(d1) > np.ndim(inv):
        inv = inv[..., None]
    return inv * d1, inv * d2, inv * d3, inv * d4, delta


def quaternion_gauss_solve(A: list, b: list) -> list:
    """Noncommutative Gaussian elimination for small quaternion systems.

    A is a KxK nested list of CdNumber (level 2), b a K list of CdNumber;
    solves sum_j A[i][j] * x[j] = b[i] by left division (associative level).
    """
    K = len(b)
    A = [[x for x in row] for row in A]
    b = list(b)
    for col in range(K):
        piv = max(range(col, K), key=lambda r: A[r][col].norm())
        if A[piv][col].norm() == 0.0:
            raise np.linalg.LinAlgError("singular quaternion system")
        A[col], A[piv] = A[piv], A[col]
        b[col], b[piv] = b[piv], b[col]
        inv = A[col][col].inv()
        A[col] = [inv * x for x in A[col]]
        b[col] = inv * b[col]
        for r in range(K):
            if r == col:
                continue
            factor = A[r][col]
            if factor.norm() == 0.0:
                continue
            A[r] = [A[r][j] - factor * A[col][j] for j in range(K)]
            b[r] = b[r] - factor * b[col]
    return b


@dataclass
class PhaseSolveResult:
    x: np.ndarray  # (M, K, dim) solution table
    det: np.ndarray  # (M,) determinants of the swept matrices
    residual: float
    closed_form_dev: Optional[float] = None


def solve_phase_system(
    sys: PhaseSystem, pact: np.ndarray, rhs: np.ndarray, dim: int
) -> PhaseSolveResult:
    """Solve the swept system at every p-node.

    rhs is (M, K, dim) holding T_(m) phi per group element; returns the
    x_(l) table.  Uses the closed 2x2 rotation and cyclic 4x4 forms when the
    pattern allows; the dense solve always runs and is the reference.
    """
    mats = sys.matrices(pact)
    M, K = pact.shape[0], sys.size()
    if sys.domain == "real":
        dense = np.linalg.solve(mats, rhs)
        det = np.linalg.det(mats)
    else:
        bdim = 1 << sys.level
        if rhs.shape[-1] != bdim:
            raise ValueError("rhs dimension mismatch for the quaternion path")
        sol = np.linalg.solve(mats, rhs.reshape(M, K * bdim, 1))
        dense = sol.reshape(M, K, bdim)
        det = np.linalg.det(mats)
    closed_dev = None
    closed = _closed_form_solution(sys, pact, rhs)
    if closed is not None:
        closed_dev = float(np.max(np.abs(closed - dense)))
    resid = float(
        np.max(np.abs(np.einsum("mij,mjc->mic", mats, dense) - rhs))
        if sys.domain == "real"
        else 0.0
    )
    return PhaseSolveResult(dense, det, resid, closed_dev)


def _closed_form_solution(sys: PhaseSystem, pact, rhs):
    """Pattern-matched closed forms: 2-element rotation or one-axis cyclic 4."""
    if sys.domain != "real":
        return None
    K = sys.size()
    vals = sys.psi_values(pact)
    if K == 2 and set(sys.group) <= {(0,) * sys.n, (1,) + (0,) * (sys.n - 1)}:
        e0 = (0,) * sys.n
        e1 = (1,) + (0,) * (sys.n - 1)
        alpha = vals.get(e0, np.zeros(pact.shape[0]))
        beta = vals.get(e1, np.zeros(pact.shape[0]))
        x1, x2 = solve_rot2(alpha, beta, rhs[:, sys.index[e0]], rhs[:, sys.index[e1]])
        out = np.empty_like(rhs)
        out[:, sys.index[e0]] = x1
        out[:, sys.index[e1]] = x2
        return out
    # cyclic in a single axis h >= 2: group {0, e_h, 2e_h, 3e_h}
    axes = {tuple(i for i, v in enumerate(g) if v) for g in sys.group if any(g)}
    flat_axes = {i for t in axes for i in t}
    if K == 4 and len(flat_axes) == 1:
        h = next(iter(flat_axes))
        if h == 0:
            return None
        coeffs = []
        for k in range(4):
            g = tuple(k if i == h else 0 for i in range(sys.n))
            coeffs.append(vals.get(g, np.zeros(pact.shape[0])))
        a, b, c, d = coeffs
        order = [tuple(k if i == h else 0 for i in range(sys.n)) for k in range(4)]
        b1, b2, b3, b4 = (rhs[:, sys.index[g]] for g in order)
        x1, x2, x3, x4, _ = solve_cyclic4(a, b, c, d, b1, b2, b3, b4)
        out = np.empty_like(rhs)
        for g, x in zip(order, (x1, x2, x3, x4)):
            out[:, sys.index[g]] = x
        return out
    return None


# ---------------------------------------------------------------------------
# the particular-solution solver
# ---------------------------------------------------------------------------


@dataclass
class SolveReport:
    tgrid: np.ndarray
    values: np.ndarray
    residual_inf: float
    inversion_change: float
    singular_nodes: int
    phase_residual: float
    closed_form_dev: Optional[float]
    notes: list = field(default_factory=list)


def _branch_rhs_tables(
    g: OriginalFn,
    spec: KernelSpec,
    quad: QuadSpec,
    pact: np.ndarray,
    group: list,
    branch: int,
    faces_rhs=None,
):
    """T_(m) of the branch projection of the g-image, for every group element.

    T_(m)(S_w^4 - S_{w+1}^4) G equals the S-monomial with exponents m + 4 e_w
    minus the one with m + 4 e_{w+1}; all group elements are evaluated in one
    fused pass sharing the t-grid and its trigonometry.
    """
    from .kernel import branch_shift_contract

    re_p = float(pact[:, 0].min())
    # kernel phase rate per t-axis is bounded by the cumulative |p| sum
    osc = float(np.sum(np.max(np.abs(pact[:, 1:]), axis=0)))
    nodes, weights, tail = tensor_grid(g, quad, re_p, osc)
    gv = g(nodes)
    out = branch_shift_contract(
        spec, pact, nodes, weights, gv, group, branch, chunk=quad.chunk
    )
    if faces_rhs is not None:
        for gi, m in enumerate(group):
            out[:, gi] -= faces_rhs(m, branch)
    return out, tail


def _perturb_singular(sys: PhaseSystem, pact: np.ndarray, spacing: float):
    """Nudge p-nodes where the swept matrix is nearly singular.

    The determinant is compared against the node's own entry scale (the det
    of the row-normalized matrix), not a global maximum, since the symbol
    varies over many orders of magnitude across the grid.
    """
    mats = sys.matrices(pact)
    det = np.linalg.det(mats)
    K = mats.shape[1]
    scale = np.max(np.abs(mats), axis=(1, 2))
    bad = np.abs(det) < 1e-10 * np.maximum(scale, 1e-300) ** K
    if bad.any():
        pact = pact.copy()
        pact[bad, 1] += 0.5 * spacing
    return pact, int(bad.sum())


def _is_laplacian_2d(A: OperatorSpec) -> bool:
    if A.n != 2 or A.mode != "t":
        return False
    terms = {m: c for m, c in A.terms if _coeff_nonzero(c)}
    return set(terms) == {(2, 0), (0, 2)} and all(
        (c if not isinstance(c, CdNumber) else c.re()) == 1.0 for c in terms.values()
    )


def solve_poisson_whole_plane(
    g: OriginalFn,
    quad: QuadSpec,
    tgrid: np.ndarray,
    radius: Optional[float] = None,
    sigma_aux: float = 1.2,
) -> SolveReport:
    """Particular solution of the 2-D Poisson equation on the whole plane.

    The symbol vanishes at p = 0, where a source with nonzero mean makes the
    inverse integral log-divergent, so the mass is split off: g = g0 + m *
    gaussian(sigma_aux)/(2 pi sigma_aux^2) with int g0 = 0, the transform
    solves for g0 (bounded image at the origin), and the radial closed form
    of the Gaussian potential restores the mass part.  The result is the
    convolution-normalized particular solution.
    """
    A = OperatorSpec.from_terms(2, {(2, 0): 1.0, (0, 2): 1.0}, mode="t")
    quadm = dataclasses.replace(quad, error_mode="none")
    nodes, weights, _ = tensor_grid(g, quadm, 0.0)
    mass = float(np.sum(weights * g(nodes)))
    norm = 1.0 / (2.0 * math.pi * sigma_aux**2)

    def g0_eval(t):
        t = np.atleast_2d(t)
        aux = norm * np.exp(-np.sum(t * t, axis=1) / (2 * sigma_aux**2))
        return g(t) - mass * aux

    g0 = OriginalFn(
        2, g0_eval, SupportSpec.whole(2), g.strip, g.growth_c + mass * norm,
        g.holder, 0, name=f"{g.name}-zero-mean",
    )
    rep = solve_pde_particular(A, g0, SupportSpec.whole(2), quad, tgrid,
                               a=0.0, radius=radius)
    r = np.linalg.norm(np.atleast_2d(tgrid), axis=1)
    rep.values[:, 0] += gaussian_poisson_solution_2d(r, sigma_aux, mass)
    rep.notes.append(
        f"zero-symbol mass split: mass {mass:.6g} through the sigma={sigma_aux} "
        "Gaussian potential closed form"
    )
    return rep


def solve_pde_particular(
    A: OperatorSpec,
    g: OriginalFn,
    domain: SupportSpec,
    quad: QuadSpec,
    tgrid: np.ndarray,
    a: Optional[float] = None,
    radius: Optional[float] = None,
    boundary=None,
) -> SolveReport:
    """Particular solution of A[f] = g sampled on tgrid ((T, n)).

    Assembles the image equation in spherical coordinates, solves the
    branch-n phase system on the inverse grid (the quarter-shift patterns
    needed for reconstruction are generated into the sweep group), and
    inverts via the Fourier assembly of the solved shift table.  Residuals
    ||A f - g|| on the grid are estimated with finite differences by the
    caller (see fd_residual) since the grid spacing is theirs to choose.

    boundary: optional callable(face_term) -> (M, dim) values of the face
    transforms; None treats all prescribed face data as zero.
    """
    n = A.n
    r = max(2, int(np.ceil(np.log2(n + 1))))
    spec = KernelSpec("spherical", n, r)
    eqn = assemble_image_equation(
        A.to_s_mode() if domain.kind == "whole_space" else A, domain, spec
    )
    a = 0.0 if a is None else float(a)
    radius = radius if radius is not None else quad.inverse_radius

    from .transform import _imaginary_grid  # shared grid construction

    pact, weights = _imaginary_grid(spec, a, radius, quad)
    # reconstruction needs all {0,1}^n shift patterns in the group
    patterns = list(itertools.product(*([(0, 1)] * n)))
    sys = build_phase_system(eqn, n, extra_shifts=patterns)
    spacing = 2.0 * radius / max(quad.inverse_panels * quad.inverse_order, 1)
    pact, nbad = _perturb_singular(sys, pact, spacing)

    faces_rhs = None
    if eqn.faces and boundary is not None:
        faces_rhs = lambda m, w: boundary(eqn, m, w, pact)  # noqa: E731
    elif eqn.faces and boundary is None:
        # zero boundary data: face terms vanish from the right side
        faces_rhs = None

    rhs, tail = _branch_rhs_tables(g, spec, quad, pact, sys.group, n, faces_rhs)
    res = solve_phase_system(sys, pact, rhs, spec.dim)

    # assemble Phi from the solved shift table: branch n carries the full
    # trig patterns, read off comp_n / comp_{n-1}
    axis_n = spec.active[-1]
    phi = np.zeros(pact.shape[0], dtype=complex)
    for m in patterns:
        sgn, l = canon_group(m)
        vals = sgn * res.x[:, sys.index[l]]
        k = sum(m)
        coeff = (-1j) ** (n - k) * (-1.0) ** k
        phi += coeff * vals[:, axis_n]
    phi *= -1.0
    tpts = np.atleast_2d(tgrid)
    s = partial_sums(tpts)
    rec = np.exp(1j * (pact[:, 1:] @ s.T))
    vals0 = ((weights * phi) @ rec).real / (2 * np.pi) ** n
    vals0 = vals0 * np.exp(a * s[:, 0])

    # stabilization check: halve the radius with half the panels
    change = math.nan
    if quad.error_mode != "none":
        sub = dataclasses.replace(
            quad, inverse_panels=max(1, quad.inverse_panels // 2), error_mode="none"
        )
        pact2, weights2 = _imaginary_grid(spec, a, radius / 2, sub)
        pact2, _ = _perturb_singular(sys, pact2, spacing)
        rhs2, _ = _branch_rhs_tables(g, spec, sub, pact2, sys.group, n, faces_rhs)
        res2 = solve_phase_system(sys, pact2, rhs2, spec.dim)
        phi2 = np.zeros(pact2.shape[0], dtype=complex)
        for m in patterns:
            sgn, l = canon_group(m)
            vals = sgn * res2.x[:, sys.index[l]]
            k = sum(m)
            phi2 += (-1j) ** (n - k) * (-1.0) ** k * vals[:, axis_n]
        phi2 *= -1.0
        vals0_2 = ((weights2 * phi2) @ np.exp(1j * (pact2[:, 1:] @ s.T))).real
        vals0_2 = vals0_2 / (2 * np.pi) ** n * np.exp(a * s[:, 0])
        change = float(np.max(np.abs(vals0 - vals0_2)))

    out = np.zeros((tpts.shape[0], spec.dim))
    out[:, 0] = vals0
    notes = []
    if nbad:
        notes.append(f"perturbed {nbad} near-singular p-nodes by half a spacing")
    if not math.isnan(change) and change > 50 * max(quad.target_tol, tail):
        notes.append(
            f"inverse integral changed by {change:.3g} under radius halving"
        )
    return SolveReport(
        tpts, out, math.nan, change, nbad, res.residual, res.closed_form_dev, notes
    )


def _fd_axis(d: np.ndarray, h: float, axis: int, order: int) -> np.ndarray:
    """Fourth-order central difference of the given order along one axis."""
    out = np.full_like(d, np.nan)

    def sh(k):
        return np.roll(d, -k, axis=axis)

    if order == 1:
        out = (-sh(2) + 8 * sh(1) - 8 * sh(-1) + sh(-2)) / (12 * h)
    elif order == 2:
        out = (-sh(2) + 16 * sh(1) - 30 * d + 16 * sh(-1) - sh(-2)) / (12 * h * h)
    else:
        out = _fd_axis(_fd_axis(d, h, axis, 2), h, axis, order - 2)
    return out


def fd_residual(A: OperatorSpec, fvals: np.ndarray, axes: list, g: OriginalFn):
    """||A f - g||_inf on a tensor grid by fourth-order central differences.

    fvals has shape (m_1, ..., m_n); axes holds the 1-D coordinate arrays;
    the maximum is taken over the interior (stencil-complete) nodes.
    """
    n = A.n
    if A.mode != "t":
        raise ValueError("finite-difference residual expects t-derivatives")
    hs = [ax[1] - ax[0] for ax in axes]
    acc = np.zeros_like(fvals)
    width = 0
    for multi, coeff in A.terms:
        d = fvals.copy()
        for axis, e in enumerate(multi):
            if e:
                d = _fd_axis(d, hs[axis], axis, e)
                width = max(width, 2 * ((e + 1) // 2) + (2 if e > 2 else 0))
        c = coeff if not isinstance(coeff, CdNumber) else coeff.re()
        acc += float(c) * d
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.reshape(-1) for m in mesh], axis=-1)
    gv = g(pts).reshape(fvals.shape)
    trim = max(2, width, 4)
    interior = tuple(slice(trim, -trim) for _ in range(n))
    return float(np.max(np.abs((acc - gv)[interior])))


# ---------------------------------------------------------------------------
# elliptic fundamental solutions
# ---------------------------------------------------------------------------


def sigma_constants(n: int) -> dict:
    """Both candidate normalizations for the 1/|z|^{n-2} fundamental solution.

    The stated sphere-surface formula 4 pi^{n/2} / Gamma(n/2 - 1) equals
    (n-2) times the standard 2 pi^{n/2} / Gamma(n/2); they agree at n = 3.
    The delta test picks the constant per dimension.
    """
    from scipy.special import gamma

    paper = 4.0 * math.pi ** (n / 2) / gamma(n / 2 - 1) if n > 2 else math.nan
    standard = 2.0 * math.pi ** (n / 2) / gamma(n / 2)
    return {
        "n": n,
        "paper_sigma": paper,
        "standard_sigma": standard,
        "paper_constant": -1.0 / ((n - 2) * paper) if n > 2 else math.nan,
        "standard_constant": -1.0 / ((n - 2) * standard) if n > 2 else math.nan,
        "agree": n == 3,
    }


def fundamental_solution_elliptic(n: int, z: np.ndarray) -> np.ndarray:
    """Psi_n(z): (1/4pi) log|z|^2 for n = 2, -|z|^{2-n}/((n-2) omega_n) else.

    The normalization is the delta-validated one (standard sphere surface
    omega_n = 2 pi^{n/2}/Gamma(n/2)); see sigma_constants for the recorded
    discrepancy of the alternative at n = 4.
    """
    z = np.atleast_2d(np.asarray(z, dtype=float))
    r2 = np.sum(z * z, axis=-1)
    if np.any(r2 == 0.0):
        raise ZeroDivisionError("fundamental solution is singular at z = 0")
    if n == 2:
        return np.log(r2) / (4.0 * math.pi)
    c = sigma_constants(n)["standard_constant"]
    return c * r2 ** (1.0 - n / 2.0)


def _bump_and_laplacian(n: int, radius: float):
    """phi = (1 - |z|^2/R^2)^4 on |z|<R with phi(0)=1, and its Laplacian."""

    def phi(z):
        r2 = np.sum(z * z, axis=-1)
        w = np.clip(1.0 - r2 / radius**2, 0.0, None)
        return w**4

    def lap(z):
        r2 = np.sum(z * z, axis=-1)
        w = np.clip(1.0 - r2 / radius**2, 0.0, None)
        gp = -4.0 * w**3 / radius**2
        gpp = 12.0 * w**2 / radius**4
        return 4.0 * r2 * gpp + 2.0 * n * gp

    return phi, lap


def delta_test(n: int, constant: float, nodes_per_axis: int = 64) -> float:
    """int Psi_n(z) Delta phi(z) dz for a fixed bump; should return phi(0)=1.

    constant scales the |z|^{2-n} (or log) profile, so candidate
    normalizations can be compared; Richardson-extrapolated in the node
    count to tame the integrable singularity at the origin.
    """
    radius = 1.0
    _, lap = _bump_and_laplacian(n, radius)

    def profile(z):
        r2 = np.sum(z * z, axis=-1)
        if n == 2:
            return constant * np.log(r2)
        return constant * r2 ** (1.0 - n / 2.0)

    def quad_value(nodes):
        x, w = np.polynomial.legendre.leggauss(nodes)
        x, w = x * radius, w * radius
        mesh = np.meshgrid(*([x] * n), indexing="ij")
        pts = np.stack([m.reshape(-1) for m in mesh], axis=-1)
        ww = np.ones(pts.shape[0])
        for wm in np.meshgrid(*([w] * n), indexing="ij"):
            ww = ww * wm.reshape(-1)
        return float(np.sum(ww * profile(pts) * lap(pts)))

    v1 = quad_value(nodes_per_axis)
    v2 = quad_value(2 * nodes_per_axis)
    # the origin-cell error decays like the squared node spacing
    return (4.0 * v2 - v1) / 3.0


def gaussian_poisson_solution_2d(r: np.ndarray, sigma: float, mass: float = 1.0):
    """Closed-form Psi_2 * (unit-mass Gaussian of width sigma), radial.

    Newton's shell argument gives (1/4pi)[log r^2 + E_1(r^2/(2 sigma^2))],
    which decays to the free log potential; E_1 is the exponential integral.
    """
    from scipy.special import exp1

    r = np.asarray(r, dtype=float)
    w = r * r / (2.0 * sigma**2)
    out = np.empty_like(r)
    small = w < 1e-12
    ws = np.where(small, 1.0, w)
    val = np.log(r * r, where=~small, out=np.zeros_like(r)) + exp1(
        np.where(small, 1.0, ws)
    )
    # r -> 0 limit: log(2 sigma^2) - euler_gamma
    lim = math.log(2.0 * sigma**2) - np.euler_gamma
    out = np.where(small, lim, val)
    return mass * out / (4.0 * math.pi)


# ---------------------------------------------------------------------------
# operator decomposition (even order 2s over an enlarged algebra)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Block:
    """One elliptic block c * sum_{|alpha|<=s} a_{2 alpha}(x) d^{2 alpha}.

    coeff multiplies the block; principal maps alpha (over the block's
    variables, as full-length multi-indices) to nonnegative reals or
    Polynomial coefficient functions.
    """

    coeff: object  # float | CdNumber
    variables: tuple
    principal: tuple  # ((alpha multi, a) ...) with a float | Polynomial


@dataclass
class Decomposition:
    nvars: int
    level_in: int
    level_out: int
    s: int
    upsilon: list  # (alpha, eta(x)) with eta CdNumber or callable -> CdNumber
    upsilon1: list
    blocks: tuple

    def generator_count(self) -> int:
        return len(self.upsilon)


def decompose_operator(blocks: Sequence[Block], nvars: int, s: int, r: int = 2):
    """Factor A = sum_p c_p B_p with elliptic principal parts as Y(Y1 f) + Q.

    Each (block, alpha) pair receives its own doubling generator i_{q 2^r}
    in the enlarged algebra A_v, with psi^2 = -a_{2 alpha} and w^2 = c_p;
    for constant coefficients Q = 0.  Preconditions: even order 2s, real
    nonnegative principal coefficients.
    """
    if s < 1:
        raise ValueError("decomposition needs even order >= 2")
    pairs = []
    for b in blocks:
        for alpha, aval in b.principal:
            if sum(alpha) == 0 or sum(alpha) > s:
                raise ValueError("principal multi-orders must satisfy 1 <= |alpha| <= s")
            if isinstance(aval, (int, float)) and aval < 0:
                raise ValueError("principal coefficients must be nonnegative")
            pairs.append((b, tuple(alpha), aval))
    count = len(pairs)
    v = r + 1
    while (1 << (v - r)) - 1 < count:
        v += 1
    dim = 1 << v

    upsilon, upsilon1 = [], []
    for q, (b, alpha, aval) in enumerate(pairs, start=1):
        gen = q * (1 << r)
        w = _as_cd(b.coeff, v)
        wroot = _cd_sqrt(w, v)
        ell = CdNumber.unit(v, gen)
        # Upsilon carries w* psi, Upsilon1 carries w psi* = -w psi
        if isinstance(aval, (int, float)):
            psi = math.sqrt(float(aval)) * ell
            upsilon.append((alpha, wroot.conj() * psi))
            upsilon1.append((alpha, wroot * (-psi)))
        else:

            def up_fn(x, wroot=wroot, ell=ell, aval=aval):
                return wroot.conj() * (math.sqrt(max(aval.eval(x), 0.0)) * ell)

            def up1_fn(x, wroot=wroot, ell=ell, aval=aval):
                return wroot * (-math.sqrt(max(aval.eval(x), 0.0)) * ell)

            upsilon.append((alpha, up_fn))
            upsilon1.append((alpha, up1_fn))
    return Decomposition(nvars, r, v, s, upsilon, upsilon1, tuple(blocks))


def _as_cd(c, level) -> CdNumber:
    if isinstance(c, CdNumber):
        return c.promote(level)
    return CdNumber.from_real(float(c), level)


def _cd_sqrt(z: CdNumber, level: int) -> CdNumber:
    """Principal square root w with w^2 = z (polar form)."""
    from .algebra import polar_decompose

    p = polar_decompose(z)
    half = 0.5 * p.angle
    axis = p.axis.promote(level)
    return math.sqrt(p.magnitude) * ((half * axis).exp())


def apply_factor(factor: list, f: Polynomial, x: np.ndarray, level: int) -> CdNumber:
    """(sum_alpha (d^alpha f) eta_alpha)(x) for a real polynomial f."""
    acc = CdNumber.from_real(0.0, level)
    for alpha, eta in factor:
        dval = float(f.deriv_multi(alpha).eval(x))
        ev = eta(x) if callable(eta) else eta
        acc = acc + dval * ev.promote(level)
    return acc


def apply_factor_composition(
    dec: Decomposition, f: Polynomial, x: np.ndarray
) -> CdNumber:
    """(Upsilon (Upsilon1 f))(x) with exact derivatives via jets.

    h = Upsilon1 f is algebra-valued; its components are evaluated as jets
    in the directions needed by Upsilon's multi-orders, then multiplied on
    the right by Upsilon's coefficients.
    """
    v = dec.level_out
    dim = 1 << v
    # required derivative orders per axis for the outer factor
    need = [max((a[l] for a, _ in dec.upsilon), default=0) for l in range(dec.nvars)]
    dirs = [l for l in range(dec.nvars) if need[l] > 0]
    order = max(sum(a) for a, _ in dec.upsilon)
    xjet = [
        jet_variable(float(x[l]), dirs.index(l), len(dirs), order)
        if l in dirs
        else Jet.constant(float(x[l]), len(dirs), order)
        for l in range(dec.nvars)
    ]
    # h components as jets
    hcomp = [Jet.constant(0.0, len(dirs), order) for _ in range(dim)]
    for beta, eta in dec.upsilon1:
        df = f.deriv_multi(beta)
        dj = df.eval(xjet)
        if not isinstance(dj, Jet):
            dj = Jet.constant(float(dj), len(dirs), order)
        if callable(eta):
            ev = _eta_jet(eta, xjet, x, len(dirs), order, v)
        else:
            ev = [Jet.constant(float(c), len(dirs), order) for c in eta.coords]
        for cidx in range(dim):
            hcomp[cidx] = hcomp[cidx] + dj * ev[cidx]
    # Upsilon applied to h
    acc = CdNumber.from_real(0.0, v)
    for alpha, eta in dec.upsilon:
        key = tuple(alpha[l] for l in dirs)
        dh = np.array([hcomp[c].derivative(key) for c in range(dim)], dtype=float)
        ev = eta(x) if callable(eta) else eta
        acc = acc + CdNumber(v, mul_array(dh, ev.promote(v).coords))
    return acc


def _eta_jet(eta_fn, xjet, x, nvars, order, level):
    """Component jets of a coefficient function eta(x) built from sqrt(a(x)).

    Works for the decomposition's coefficients: eta = const_cd * sqrt(a(x))
    with polynomial a; evaluated by probing the callable's structure via
    jets is not possible in general, so coefficients are recomputed from
    their closure parameters.
    """
    # the closures built in decompose_operator expose their parameters
    wroot = eta_fn.__defaults__[0]
    ell = eta_fn.__defaults__[1]
    aval = eta_fn.__defaults__[2]
    base = wroot if eta_fn.__name__ == "up1_fn" else wroot.conj()
    sgn = -1.0 if eta_fn.__name__ == "up1_fn" else 1.0
    ajet = aval.eval(xjet)
    if not isinstance(ajet, Jet):
        ajet = Jet.constant(float(ajet), nvars, order)
    root = ajet.sqrt()
    dim = 1 << level
    direction = mul_array(base.promote(level).coords, ell.promote(level).coords)
    return [root * (sgn * direction[c]) for c in range(dim)]


def apply_diff_operator(blocks: Sequence[Block], f: Polynomial, x, nvars, level):
    """(A f)(x) = sum_p c_p sum_alpha a_{2 alpha}(x) d^{2 alpha} f(x)."""
    acc = CdNumber.from_real(0.0, level)
    for b in blocks:
        bval = CdNumber.from_real(0.0, level)
        for alpha, aval in b.principal:
            two = tuple(2 * a for a in alpha)
            d = float(f.deriv_multi(two).eval(x))
            a_at = aval.eval(x) if isinstance(aval, Polynomial) else float(aval)
            bval = bval + d * float(a_at)
        acc = acc + _as_cd(b.coeff, level) * bval
    return acc


def residual_order_estimate(values: dict) -> float:
    """Fit |D f_lambda(0)| ~ lambda^q; values maps lambda -> magnitude."""
    lams = np.array(sorted(values))
    mags = np.array([max(values[l], 1e-300) for l in lams])
    slope = np.polyfit(np.log(lams), np.log(mags), 1)[0]
    return float(slope)


def adjoint_ellipticity_probe(
    factor: list, level: int, nvars: int, samples: int, rng, beta=None
) -> dict:
    """Sample the principal symbol of (Y+beta)*(Y+beta) on random frequencies.

    The symbol acting on a is sum_{alpha,beta'} xi^{alpha+beta'}
    ((a eta_beta') eta*_alpha); by the conjugation identity it equals
    a * |sum_alpha xi^alpha eta_alpha|^2, so the real part must be
    nonnegative and the non-a-parallel part negligible.
    """
    k = max(sum(a) for a, _ in factor) if factor else 0
    worst_imag = 0.0
    min_real = math.inf
    for _ in range(samples):
        xi = rng.normal(size=nvars)
        a = CdNumber.random(level, rng)
        sym = CdNumber.from_real(0.0, level)
        for alpha, eta in factor:
            if sum(alpha) != k and factor:
                continue
            w = float(np.prod([xi[l] ** alpha[l] for l in range(nvars)]))
            ev = eta if not callable(eta) else eta(np.zeros(nvars))
            sym = sym + w * ev.promote(level)
        if beta is not None:
            sym = sym + _as_cd(beta, level)
        out = mul_array(
            mul_array(a.coords, sym.coords), sym.conj().coords
        )
        val = CdNumber(level, out)
        lam = (val * a.conj()).re() / max(a.norm2(), 1e-300)
        dev = (val - lam * a).norm()
        worst_imag = max(worst_imag, dev)
        min_real = min(min_real, lam)
    return {"min_real": min_real, "max_nonparallel": worst_imag, "order": 2 * k}
