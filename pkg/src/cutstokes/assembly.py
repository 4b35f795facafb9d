"""Sparse assembly of the unfitted two-phase Stokes forms.

Blocks live on the velocity index space [u-, u+] and the pressure index
space [p-, p+] of a :class:`TwoPhaseSpace`. Uncut elements of the uniform
mesh share one local matrix; cut elements and interface pieces use the
per-element rules of :class:`CutQuadrature`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Union

import numpy as np
import scipy.sparse as sp

from .fespace import (PHASES, TwoPhaseSpace, q1_values, q2_gradients, q2_values, sym,
                      vector_basis)
from .geometry import QuadRule, cut_rules, gauss_points, points_for_order
from .mesh import FACET_X, CutTopology

Field = Callable[..., tuple]
Scalar = Union[float, Callable[..., np.ndarray]]

DEFAULT_ORDER = 7


@dataclass(frozen=True)
class PhysicalParams:
    mu_minus: float = 1.0
    mu_plus: float = 10.0
    slip: float = 10.0
    interface_traction: Scalar = 0.0
    gamma: float = 40.0
    gamma_u_minus: float = 0.05
    gamma_u_plus: float = 0.05
    gamma_p_minus: float = 0.05
    gamma_p_plus: float = 0.05
    alpha: float = 0.0
    beta: float = 1.0

    def __post_init__(self):
        if not 0 < self.mu_minus <= self.mu_plus:
            raise ValueError("need 0 < mu_minus <= mu_plus")
        if self.slip < 0:
            raise ValueError("slip coefficient must be >= 0")
        if not (0 <= self.alpha <= 1 and 0 <= self.beta <= 1
                and abs(self.alpha + self.beta - 1) <= 1e-12):
            raise ValueError("averaging weights need alpha + beta = 1 within [0, 1]")
        if self.gamma <= 0:
            raise ValueError("Nitsche parameter gamma must be positive")
        if min(self.gamma_u_minus, self.gamma_u_plus, self.gamma_p_minus, self.gamma_p_plus) < 0:
            raise ValueError("ghost penalty parameters must be >= 0")

    def mu(self, phase: int) -> float:
        return self.mu_minus if phase < 0 else self.mu_plus

    def gamma_u(self, phase: int) -> float:
        return self.gamma_u_minus if phase < 0 else self.gamma_u_plus

    def gamma_p(self, phase: int) -> float:
        return self.gamma_p_minus if phase < 0 else self.gamma_p_plus

    @property
    def mu_avg(self) -> float:
        """{mu} = alpha mu+ + beta mu-."""
        return self.alpha * self.mu_plus + self.beta * self.mu_minus

    def curly_weights(self) -> dict:
        """Phase weights of the {.} average."""
        return {-1: self.beta, 1: self.alpha}

    def angle_weights(self) -> dict:
        """Phase weights of the <.> average."""
        return {-1: self.alpha, 1: self.beta}

    def curly(self, a_minus, a_plus):
        """{a} = alpha a+ + beta a-."""
        return self.alpha * np.asarray(a_plus) + self.beta * np.asarray(a_minus)

    def angle(self, a_minus, a_plus):
        """<a> = beta a+ + alpha a-."""
        return self.beta * np.asarray(a_plus) + self.alpha * np.asarray(a_minus)

    def traction(self, x, y) -> np.ndarray:
        g = self.interface_traction
        v = g(x, y) if callable(g) else g
        return np.broadcast_to(np.asarray(v, dtype=float), np.shape(x))


def jump(a_minus, a_plus):
    """[a] = a- - a+."""
    return np.asarray(a_minus) - np.asarray(a_plus)


@dataclass
class SparseBlock:
    matrix: sp.csr_matrix
    rows: str
    cols: str

    @property
    def shape(self):
        return self.matrix.shape

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()


@dataclass
class CutQuadrature:
    """Reference rule for uncut elements plus per-element rules on the cut band."""

    order: int
    ref_points: np.ndarray
    ref_weights: np.ndarray
    cut: Dict[int, tuple] = field(default_factory=dict)

    def volume(self, e: int, phase: int) -> QuadRule:
        return self.cut[e][0 if phase < 0 else 1]

    def interface(self, e: int) -> QuadRule:
        return self.cut[e][2]


def build_quadrature(topo: CutTopology, order: int = DEFAULT_ORDER) -> CutQuadrature:
    t, w = gauss_points(points_for_order(order))
    X, Y = np.meshgrid(t, t, indexing="xy")
    ref = np.column_stack([X.ravel(), Y.ravel()])
    wts = np.outer(w, w).ravel()
    cut = {int(e): cut_rules(topo.mesh.box(int(e)), topo.levelset, order)
           for e in topo.cut_elements}
    return CutQuadrature(order, ref, wts, cut)


class _Triplets:
    def __init__(self):
        self.rows, self.cols, self.vals = [], [], []

    def add(self, rows, cols, local):
        """Scatter (E, R, C) local matrices with (E, R) rows and (E, C) cols."""
        rows, cols, local = np.asarray(rows), np.asarray(cols), np.asarray(local)
        if rows.ndim == 1:
            rows, cols, local = rows[None], cols[None], local[None]
        R = np.broadcast_to(rows[:, :, None], local.shape)
        C = np.broadcast_to(cols[:, None, :], local.shape)
        self.rows.append(R.ravel())
        self.cols.append(C.ravel())
        self.vals.append(local.ravel())

    def tocsr(self, shape) -> sp.csr_matrix:
        if not self.rows:
            return sp.csr_matrix(shape)
        m = sp.coo_matrix((np.concatenate(self.vals),
                           (np.concatenate(self.rows), np.concatenate(self.cols))), shape=shape)
        return m.tocsr()


# -- local basis evaluation ---------------------------------------------------

def _velocity_basis(space: TwoPhaseSpace, e: int, points):
    ref = space.reference_coords(np.full(len(points), e), points)
    phi = q2_values(ref[:, 0], ref[:, 1])
    dphi = q2_gradients(ref[:, 0], ref[:, 1]) / space.mesh.h
    return vector_basis(phi, dphi)


def _pressure_basis(space: TwoPhaseSpace, e: int, points):
    ref = space.reference_coords(np.full(len(points), e), points)
    return q1_values(ref[:, 0], ref[:, 1])


def _reference_basis(space: TwoPhaseSpace, quad: CutQuadrature):
    r = quad.ref_points
    phi = q2_values(r[:, 0], r[:, 1])
    dphi = q2_gradients(r[:, 0], r[:, 1]) / space.mesh.h
    val, grad = vector_basis(phi, dphi)
    return val, grad, q1_values(r[:, 0], r[:, 1]), quad.ref_weights * space.mesh.h ** 2


def _uncut(topo: CutTopology, phase: int) -> np.ndarray:
    act = topo.active(phase)
    return act[~np.isin(act, topo.cut_elements)]


def _stiffness(grad, w, mu):
    D = sym(grad)
    return 2 * mu * np.einsum("q,qkab,qlab->kl", w, D, D)


def _interface_terms(space, e, rule: QuadRule):
    """Basis traces on one interface piece for both phases (same element)."""
    val, grad = _velocity_basis(space, e, rule.points)
    n = rule.normals
    vn = np.einsum("qkc,qc->qk", val, n)
    nDn = np.einsum("qa,qkab,qb->qk", n, sym(grad), n)
    Pv = val - vn[:, :, None] * n[:, None, :]
    return val, vn, nDn, Pv


# -- forms ----------------------------------------------------------------------

def assemble_a_i(space: TwoPhaseSpace, topo: CutTopology, quad: CutQuadrature,
                 params: PhysicalParams, include_consistency: bool = True) -> SparseBlock:
    """Viscous bulk terms, the slip friction term and the consistency term
    -2 <{mu n.D(u)n}, [v.n]>."""
    trip = _Triplets()
    val_r, grad_r, _, w_r = _reference_basis(space, quad)
    for s in PHASES:
        mu = params.mu(s)
        unc = _uncut(topo, s)
        if len(unc):
            K = _stiffness(grad_r, w_r, mu)
            d = space.velocity_dofs(s, unc)
            trip.add(d, d, np.broadcast_to(K, (len(unc),) + K.shape))
        for e in topo.cut_elements:
            rule = quad.volume(e, s)
            if len(rule) == 0:
                continue
            _, grad = _velocity_basis(space, e, rule.points)
            d = space.velocity_dofs(s, [e])[0]
            trip.add(d, d, _stiffness(grad, rule.weights, mu))
    cw = params.curly_weights()
    for e in topo.cut_elements:
        rule = quad.interface(e)
        if len(rule) == 0:
            continue
        _, vn, nDn, Pv = _interface_terms(space, e, rule)
        w = rule.weights
        dofs = np.concatenate([space.velocity_dofs(-1, [e])[0], space.velocity_dofs(1, [e])[0]])
        jump_P = np.concatenate([Pv, -Pv], axis=1)
        jump_n = np.concatenate([vn, -vn], axis=1)
        avg = np.concatenate([cw[-1] * params.mu_minus * nDn, cw[1] * params.mu_plus * nDn], axis=1)
        local = params.slip * np.einsum("q,qkc,qlc->kl", w, jump_P, jump_P)
        if include_consistency:
            # row = test v, col = trial u
            local -= 2 * np.einsum("q,qk,ql->kl", w, jump_n, avg)
        trip.add(dofs, dofs, local)
    n = space.n_velocity
    return SparseBlock(trip.tocsr((n, n)), "velocity", "velocity")


def assemble_a_n(space: TwoPhaseSpace, topo: CutTopology, quad: CutQuadrature,
                 params: PhysicalParams) -> SparseBlock:
    """Nitsche penalty on [u.n] and the symmetrising term -2 <{mu n.D(v)n}, [u.n]>."""
    trip = _Triplets()
    cw = params.curly_weights()
    for e in topo.cut_elements:
        rule = quad.interface(e)
        if len(rule) == 0:
            continue
        _, vn, nDn, _ = _interface_terms(space, e, rule)
        w = rule.weights
        dofs = np.concatenate([space.velocity_dofs(-1, [e])[0], space.velocity_dofs(1, [e])[0]])
        jump_n = np.concatenate([vn, -vn], axis=1)
        avg = np.concatenate([cw[-1] * params.mu_minus * nDn, cw[1] * params.mu_plus * nDn], axis=1)
        pen = params.gamma / space.mesh.h_T[e] * params.mu_avg
        local = pen * np.einsum("q,qk,ql->kl", w, jump_n, jump_n)
        local -= 2 * np.einsum("q,qk,ql->kl", w, avg, jump_n)
        trip.add(dofs, dofs, local)
    n = space.n_velocity
    return SparseBlock(trip.tocsr((n, n)), "velocity", "velocity")


def _patch_operator(values_fn, nb: int, orientation: int, h: float, order: int = 5):
    """Mismatch operator on a two-element patch.

    Returns G (2Nq, 2nb) mapping [coeffs on T1, coeffs on T2] to
    (ext_T1 - ext_T2) at the Gauss points of both elements, and the weights.
    T2 is the right (FACET_X) or upper (FACET_Y) neighbour of T1.
    """
    t, w = gauss_points(points_for_order(order))
    X, Y = np.meshgrid(t, t, indexing="xy")
    ref = np.column_stack([X.ravel(), Y.ravel()])
    shift = np.array([1.0, 0.0]) if orientation == FACET_X else np.array([0.0, 1.0])
    # points of T1 seen from T1 and T2, then points of T2 seen from T1 and T2
    p1_in1, p1_in2 = ref, ref - shift
    p2_in1, p2_in2 = ref + shift, ref
    top = np.hstack([values_fn(p1_in1[:, 0], p1_in1[:, 1]), -values_fn(p1_in2[:, 0], p1_in2[:, 1])])
    bot = np.hstack([values_fn(p2_in1[:, 0], p2_in1[:, 1]), -values_fn(p2_in2[:, 0], p2_in2[:, 1])])
    wts = np.tile(np.outer(w, w).ravel() * h * h, 2)
    return np.vstack([top, bot]), wts


def _patch_matrix(values_fn, nb, orientation, h):
    G, w = _patch_operator(values_fn, nb, orientation, h)
    return np.einsum("q,qk,ql->kl", w, G, G)


def _interleave2(S: np.ndarray) -> np.ndarray:
    """Scalar patch matrix -> vector matrix in interleaved component order."""
    return np.kron(S, np.eye(2))


def ghost_patch_value(space: TwoPhaseSpace, facet: int, coeffs1, coeffs2, kind="velocity"
                      ) -> float:
    """Integral over the patch of |ext_T1 - ext_T2|^2 for given local coefficients."""
    orient = space.mesh.facet_orientation[facet]
    fn = q2_values if kind == "velocity" else q1_values
    nb = 9 if kind == "velocity" else 4
    S = _patch_matrix(fn, nb, orient, space.mesh.h)
    if kind == "velocity":
        S = _interleave2(S)
    c = np.concatenate([coeffs1, coeffs2])
    return float(c @ S @ c)


def assemble_ghost_velocity(space: TwoPhaseSpace, topo: CutTopology, params: PhysicalParams
                            ) -> SparseBlock:
    """mu- J_h^- + mu+ J_h^+ with the h_e^-2 scaled extension mismatch."""
    trip = _Triplets()
    mesh = space.mesh
    mats = {o: _interleave2(_patch_matrix(q2_values, 9, o, mesh.h)) for o in (0, 1)}
    for s in PHASES:
        facets = topo.ghost_facets(s)
        if len(facets) == 0:
            continue
        pairs = mesh.interior_facets[facets]
        orient = mesh.facet_orientation[facets]
        scale = params.mu(s) * params.gamma_u(s) / mesh.h_e[facets] ** 2
        dofs = np.hstack([space.velocity_dofs(s, pairs[:, 0]), space.velocity_dofs(s, pairs[:, 1])])
        local = np.stack([mats[o] for o in orient]) * scale[:, None, None]
        trip.add(dofs, dofs, local)
    n = space.n_velocity
    return SparseBlock(trip.tocsr((n, n)), "velocity", "velocity")


def assemble_ghost_pressure(space: TwoPhaseSpace, topo: CutTopology, params: PhysicalParams
                            ) -> SparseBlock:
    """mu-^-1 J_h^- + mu+^-1 J_h^+ on pressures (no mesh-size scaling)."""
    trip = _Triplets()
    mesh = space.mesh
    mats = {o: _patch_matrix(q1_values, 4, o, mesh.h) for o in (0, 1)}
    for s in PHASES:
        facets = topo.ghost_facets(s)
        if len(facets) == 0:
            continue
        pairs = mesh.interior_facets[facets]
        orient = mesh.facet_orientation[facets]
        scale = params.gamma_p(s) / params.mu(s)
        dofs = np.hstack([space.pressure_dofs(s, pairs[:, 0]), space.pressure_dofs(s, pairs[:, 1])])
        local = np.stack([mats[o] for o in orient]) * scale
        trip.add(dofs, dofs, local)
    n = space.n_pressure
    return SparseBlock(trip.tocsr((n, n)), "pressure", "pressure")


def assemble_b_h(space: TwoPhaseSpace, topo: CutTopology, quad: CutQuadrature,
                 params: PhysicalParams) -> SparseBlock:
    """Matrix of b_h(u, q) = -(q, div u) + <{q}, [u.n]>, rows pressure, cols velocity."""
    trip = _Triplets()
    _, grad_r, psi_r, w_r = _reference_basis(space, quad)
    div_r = np.trace(grad_r, axis1=2, axis2=3)
    for s in PHASES:
        unc = _uncut(topo, s)
        if len(unc):
            local = -np.einsum("q,qj,qk->jk", w_r, psi_r, div_r)
            trip.add(space.pressure_dofs(s, unc), space.velocity_dofs(s, unc),
                     np.broadcast_to(local, (len(unc),) + local.shape))
        for e in topo.cut_elements:
            rule = quad.volume(e, s)
            if len(rule) == 0:
                continue
            _, grad = _velocity_basis(space, e, rule.points)
            psi = _pressure_basis(space, e, rule.points)
            div = np.trace(grad, axis1=2, axis2=3)
            local = -np.einsum("q,qj,qk->jk", rule.weights, psi, div)
            trip.add(space.pressure_dofs(s, [e])[0], space.velocity_dofs(s, [e])[0], local)
    cw = params.curly_weights()
    for e in topo.cut_elements:
        rule = quad.interface(e)
        if len(rule) == 0:
            continue
        _, vn, _, _ = _interface_terms(space, e, rule)
        psi = _pressure_basis(space, e, rule.points)
        vdofs = np.concatenate([space.velocity_dofs(-1, [e])[0], space.velocity_dofs(1, [e])[0]])
        pdofs = np.concatenate([space.pressure_dofs(-1, [e])[0], space.pressure_dofs(1, [e])[0]])
        jump_n = np.concatenate([vn, -vn], axis=1)
        avg_q = np.concatenate([cw[-1] * psi, cw[1] * psi], axis=1)
        trip.add(pdofs, vdofs, np.einsum("q,qj,qk->jk", rule.weights, avg_q, jump_n))
    return SparseBlock(trip.tocsr((space.n_pressure, space.n_velocity)), "pressure", "velocity")


def assemble_rhs(space: TwoPhaseSpace, topo: CutTopology, quad: CutQuadrature,
                 params: PhysicalParams, forcing_minus: Field, forcing_plus: Field
                 ) -> np.ndarray:
    """(f-, v-) + (f+, v+) + <g_Gamma, <v.n>> on the velocity block."""
    b = np.zeros(space.n_velocity)
    val_r, _, _, w_r = _reference_basis(space, quad)
    h = space.mesh.h
    for s, fs in ((-1, forcing_minus), (1, forcing_plus)):
        unc = _uncut(topo, s)
        if len(unc):
            lo = space.mesh.element_boxes[unc, :2]
            pts = lo[:, None, :] + h * quad.ref_points[None]
            f1, f2 = fs(pts[..., 0], pts[..., 1])
            fv = np.stack(np.broadcast_arrays(f1, f2), axis=-1)
            loc = np.einsum("q,eqc,qkc->ek", w_r, fv, val_r)
            np.add.at(b, space.velocity_dofs(s, unc), loc)
        for e in topo.cut_elements:
            rule = quad.volume(e, s)
            if len(rule) == 0:
                continue
            val, _ = _velocity_basis(space, e, rule.points)
            f1, f2 = fs(rule.points[:, 0], rule.points[:, 1])
            fv = np.stack(np.broadcast_arrays(f1, f2), axis=-1)
            np.add.at(b, space.velocity_dofs(s, [e])[0], np.einsum("q,qc,qkc->k", rule.weights, fv, val))
    aw = params.angle_weights()
    for e in topo.cut_elements:
        rule = quad.interface(e)
        if len(rule) == 0:
            continue
        _, vn, _, _ = _interface_terms(space, e, rule)
        g = params.traction(rule.points[:, 0], rule.points[:, 1])
        for s in PHASES:
            if aw[s] == 0.0:
                continue
            np.add.at(b, space.velocity_dofs(s, [e])[0], aw[s] * np.einsum("q,q,qk->k", rule.weights, g, vn))
    return b


def assemble_mean_row(space: TwoPhaseSpace, topo: CutTopology, quad: CutQuadrature,
                      params: PhysicalParams) -> np.ndarray:
    """m(q) = int_{Omega-} q-/mu- + int_{Omega+} q+/mu+ as a vector on the pressure block."""
    m = np.zeros(space.n_pressure)
    _, _, psi_r, w_r = _reference_basis(space, quad)
    for s in PHASES:
        unc = _uncut(topo, s)
        if len(unc):
            loc = np.broadcast_to(psi_r.T @ w_r, (len(unc), 4)) / params.mu(s)
            np.add.at(m, space.pressure_dofs(s, unc), loc)
        for e in topo.cut_elements:
            rule = quad.volume(e, s)
            if len(rule) == 0:
                continue
            psi = _pressure_basis(space, e, rule.points)
            np.add.at(m, space.pressure_dofs(s, [e])[0], psi.T @ rule.weights / params.mu(s))
    return m


@dataclass
class AssembledBlocks:
    A: SparseBlock
    B: SparseBlock
    C: SparseBlock
    rhs: np.ndarray
    mean_row: np.ndarray


def assemble_a_h(space, topo, quad, params) -> SparseBlock:
    A = (assemble_a_i(space, topo, quad, params).matrix
         + assemble_a_n(space, topo, quad, params).matrix
         + assemble_ghost_velocity(space, topo, params).matrix)
    return SparseBlock(A.tocsr(), "velocity", "velocity")


def assemble_all(space: TwoPhaseSpace, topo: CutTopology, quad: CutQuadrature,
                 params: PhysicalParams, forcing_minus: Field, forcing_plus: Field
                 ) -> AssembledBlocks:
    return AssembledBlocks(
        A=assemble_a_h(space, topo, quad, params),
        B=assemble_b_h(space, topo, quad, params),
        C=assemble_ghost_pressure(space, topo, params),
        rhs=assemble_rhs(space, topo, quad, params, forcing_minus, forcing_plus),
        mean_row=assemble_mean_row(space, topo, quad, params),
    )
