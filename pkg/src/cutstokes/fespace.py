"""Two-phase Q2-Q1 Taylor-Hood spaces on the active meshes.

Every phase owns its own copy of the nodes of its active elements, so nodes
of cut elements carry two independent unknowns. Velocity unknowns of a phase
are interleaved (node0_x, node0_y, node1_x, ...). The global unknown vector
is ordered [u-, u+, p-, p+, lambda].
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .mesh import BackgroundMesh, CutTopology

PHASES = (-1, 1)


# -- reference basis on [0, 1]^2 ---------------------------------------------
# Q2 local node (a, b), a, b in {0, 1, 2}, has index a + 3 b; Q1 uses a + 2 b.
# Polynomials are evaluated anywhere in R^2, which gives the canonical
# extension used by the ghost penalties.

def _lagrange2(t):
    return np.stack([2 * (t - 0.5) * (t - 1), -4 * t * (t - 1), 2 * t * (t - 0.5)], axis=-1)


def _dlagrange2(t):
    return np.stack([4 * t - 3, 4 - 8 * t, 4 * t - 1], axis=-1)


def _lagrange1(t):
    return np.stack([1 - t, t], axis=-1)


def _dlagrange1(t):
    return np.stack([-np.ones_like(t), np.ones_like(t)], axis=-1)


def q2_values(xi, eta) -> np.ndarray:
    """(N, 9) values at reference points."""
    return (_lagrange2(eta)[:, :, None] * _lagrange2(xi)[:, None, :]).reshape(len(xi), 9)


def q2_gradients(xi, eta) -> np.ndarray:
    """(N, 9, 2) reference gradients."""
    lx, ly = _lagrange2(xi), _lagrange2(eta)
    dx, dy = _dlagrange2(xi), _dlagrange2(eta)
    gx = (ly[:, :, None] * dx[:, None, :]).reshape(len(xi), 9)
    gy = (dy[:, :, None] * lx[:, None, :]).reshape(len(xi), 9)
    return np.stack([gx, gy], axis=-1)


def q1_values(xi, eta) -> np.ndarray:
    return (_lagrange1(eta)[:, :, None] * _lagrange1(xi)[:, None, :]).reshape(len(xi), 4)


def q1_gradients(xi, eta) -> np.ndarray:
    lx, ly = _lagrange1(xi), _lagrange1(eta)
    dx, dy = _dlagrange1(xi), _dlagrange1(eta)
    gx = (ly[:, :, None] * dx[:, None, :]).reshape(len(xi), 4)
    gy = (dy[:, :, None] * lx[:, None, :]).reshape(len(xi), 4)
    return np.stack([gx, gy], axis=-1)


def vector_basis(phi: np.ndarray, dphi: np.ndarray):
    """Interleaved vector Q2 basis from scalar values and physical gradients.

    Returns values (N, 18, 2) and gradients (N, 18, 2, 2) with
    ``grad[q, k, a, b] = d(v_k)_a / dx_b``.
    """
    n, nb = phi.shape
    val = np.zeros((n, 2 * nb, 2))
    grad = np.zeros((n, 2 * nb, 2, 2))
    for c in (0, 1):
        val[:, c::2, c] = phi
        grad[:, c::2, c, :] = dphi
    return val, grad


def sym(grad: np.ndarray) -> np.ndarray:
    return 0.5 * (grad + np.swapaxes(grad, -1, -2))


@dataclass
class PhaseMap:
    """Node numbering of one phase: global node id -> phase-local index."""

    elements: np.ndarray
    vel_nodes: np.ndarray  # global Q2 node ids in phase order
    vel_index: np.ndarray  # global Q2 node id -> local index or -1
    p_nodes: np.ndarray
    p_index: np.ndarray

    @property
    def n_velocity(self) -> int:
        return 2 * len(self.vel_nodes)

    @property
    def n_pressure(self) -> int:
        return len(self.p_nodes)


class TwoPhaseSpace:
    """DOF maps of V_h^-, V_h^+, Q_h^-, Q_h^+ plus the mean-value multiplier."""

    def __init__(self, mesh: BackgroundMesh, topo: CutTopology):
        self.mesh = mesh
        self.topo = topo
        self.phases = {s: self._phase_map(topo.active(s)) for s in PHASES}
        nv = {s: self.phases[s].n_velocity for s in PHASES}
        npr = {s: self.phases[s].n_pressure for s in PHASES}
        self.velocity_offset = {-1: 0, 1: nv[-1]}
        self.n_velocity = nv[-1] + nv[1]
        self.pressure_offset = {-1: 0, 1: npr[-1]}
        self.n_pressure = npr[-1] + npr[1]
        self.size = self.n_velocity + self.n_pressure + 1

    # node layout ------------------------------------------------------------
    @cached_property
    def q2_cell_nodes(self) -> np.ndarray:
        """(num_elements, 9) global Q2 node ids."""
        n2 = 2 * self.mesh.n + 1
        ix, iy = self.mesh.element_ij.T
        a = np.array([0, 1, 2] * 3)
        b = np.repeat([0, 1, 2], 3)
        return (2 * iy[:, None] + b) * n2 + 2 * ix[:, None] + a

    @cached_property
    def q1_cell_nodes(self) -> np.ndarray:
        ix, iy = self.mesh.element_ij.T
        n1 = self.mesh.n + 1
        a = np.array([0, 1, 0, 1])
        b = np.array([0, 0, 1, 1])
        return (iy[:, None] + b) * n1 + ix[:, None] + a

    @cached_property
    def q2_node_coords(self) -> np.ndarray:
        t = np.linspace(-1.0, 1.0, 2 * self.mesh.n + 1)
        X, Y = np.meshgrid(t, t, indexing="xy")
        return np.column_stack([X.ravel(), Y.ravel()])

    @property
    def q1_node_coords(self) -> np.ndarray:
        return self.mesh.vertices

    def _phase_map(self, elements: np.ndarray) -> PhaseMap:
        n2 = (2 * self.mesh.n + 1) ** 2
        n1 = (self.mesh.n + 1) ** 2
        vel_nodes = np.unique(self.q2_cell_nodes[elements])
        p_nodes = np.unique(self.q1_cell_nodes[elements])
        vi = np.full(n2, -1)
        vi[vel_nodes] = np.arange(len(vel_nodes))
        pi = np.full(n1, -1)
        pi[p_nodes] = np.arange(len(p_nodes))
        return PhaseMap(elements, vel_nodes, vi, p_nodes, pi)

    # dof lookups -------------------------------------------------------------
    def dim_velocity(self, phase: int) -> int:
        return self.phases[phase].n_velocity

    def dim_pressure(self, phase: int) -> int:
        return self.phases[phase].n_pressure

    def velocity_dofs(self, phase: int, elements) -> np.ndarray:
        """(len(elements), 18) indices into the velocity block [u-, u+]."""
        pm = self.phases[phase]
        loc = pm.vel_index[self.q2_cell_nodes[np.asarray(elements)]]
        if np.any(loc < 0):
            raise KeyError(f"element not active in phase {phase}")
        d = np.empty(loc.shape[:-1] + (18,), dtype=np.int64)
        d[..., 0::2] = 2 * loc
        d[..., 1::2] = 2 * loc + 1
        return d + self.velocity_offset[phase]

    def pressure_dofs(self, phase: int, elements) -> np.ndarray:
        """(len(elements), 4) indices into the pressure block [p-, p+]."""
        pm = self.phases[phase]
        loc = pm.p_index[self.q1_cell_nodes[np.asarray(elements)]]
        if np.any(loc < 0):
            raise KeyError(f"element not active in phase {phase}")
        return loc + self.pressure_offset[phase]

    def velocity_slice(self, phase: int) -> slice:
        o = self.velocity_offset[phase]
        return slice(o, o + self.dim_velocity(phase))

    def pressure_slice(self, phase: int) -> slice:
        o = self.pressure_offset[phase]
        return slice(o, o + self.dim_pressure(phase))

    @cached_property
    def dirichlet_nodes(self) -> np.ndarray:
        """Plus-phase local node indices on the outer boundary."""
        xy = self.q2_node_coords[self.phases[1].vel_nodes]
        on = np.any(np.isclose(np.abs(xy), 1.0, rtol=0, atol=1e-12), axis=1)
        return np.nonzero(on)[0]

    @cached_property
    def dirichlet_dofs(self) -> np.ndarray:
        """Indices into the velocity block of the strongly imposed unknowns."""
        k = self.dirichlet_nodes
        d = np.column_stack([2 * k, 2 * k + 1]).ravel()
        return d + self.velocity_offset[1]

    def reference_coords(self, elements, points) -> np.ndarray:
        """Reference coordinates of physical points w.r.t. the given elements."""
        lo = self.mesh.element_boxes[np.asarray(elements), :2]
        return (np.asarray(points) - lo) / self.mesh.h

    def locate(self, phase: int, points) -> np.ndarray:
        """An active element of ``phase`` whose closure holds each point."""
        pts = np.atleast_2d(points)
        n, h = self.mesh.n, self.mesh.h
        active = np.zeros(self.mesh.num_elements, dtype=bool)
        active[self.topo.active(phase)] = True
        base = np.clip(np.floor((pts + 1.0) / h).astype(int), 0, n - 1)
        out = np.full(len(pts), -1)
        for dx in (0, -1, 1):
            for dy in (0, -1, 1):
                ij = np.clip(base + [dx, dy], 0, n - 1)
                e = ij[:, 1] * n + ij[:, 0]
                lo = self.mesh.element_boxes[e, :2]
                inside = np.all((pts >= lo - 1e-12) & (pts <= lo + h + 1e-12), axis=1)
                take = (out < 0) & active[e] & inside
                out[take] = e[take]
        if np.any(out < 0):
            raise ValueError("point outside the active mesh of the phase")
        return out


def build_space(mesh: BackgroundMesh, topo: CutTopology) -> TwoPhaseSpace:
    return TwoPhaseSpace(mesh, topo)


class FiniteElementFunction:
    """Coefficients of one phase's velocity (kind='velocity') or pressure."""

    def __init__(self, space: TwoPhaseSpace, phase: int, kind: str, coeffs):
        if kind not in ("velocity", "pressure"):
            raise ValueError(kind)
        self.space, self.phase, self.kind = space, phase, kind
        self.coeffs = np.asarray(coeffs, dtype=float)
        expected = space.dim_velocity(phase) if kind == "velocity" else space.dim_pressure(phase)
        if self.coeffs.shape != (expected,):
            raise ValueError(f"expected {expected} coefficients, got {self.coeffs.shape}")

    def _local(self, points, elements):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if elements is None:
            elements = self.space.locate(self.phase, pts)
        elements = np.broadcast_to(np.asarray(elements), (len(pts),))
        ref = self.space.reference_coords(elements, pts)
        if self.kind == "velocity":
            dofs = self.space.velocity_dofs(self.phase, elements) - self.space.velocity_offset[self.phase]
        else:
            dofs = self.space.pressure_dofs(self.phase, elements) - self.space.pressure_offset[self.phase]
        return ref, self.coeffs[dofs]

    def value(self, points, elements=None) -> np.ndarray:
        """(N, 2) velocity or (N,) pressure values."""
        ref, c = self._local(points, elements)
        if self.kind == "velocity":
            phi = q2_values(ref[:, 0], ref[:, 1])
            return np.stack([np.einsum("qi,qi->q", phi, c[:, 0::2]),
                             np.einsum("qi,qi->q", phi, c[:, 1::2])], axis=-1)
        return np.einsum("qi,qi->q", q1_values(ref[:, 0], ref[:, 1]), c)

    def gradient(self, points, elements=None) -> np.ndarray:
        """(N, 2, 2) velocity gradient [component, direction] or (N, 2) pressure gradient."""
        ref, c = self._local(points, elements)
        h = self.space.mesh.h
        if self.kind == "velocity":
            g = q2_gradients(ref[:, 0], ref[:, 1]) / h
            return np.stack([np.einsum("qid,qi->qd", g, c[:, 0::2]),
                             np.einsum("qid,qi->qd", g, c[:, 1::2])], axis=1)
        return np.einsum("qid,qi->qd", q1_gradients(ref[:, 0], ref[:, 1]) / h, c)

    def sym_gradient(self, points, elements=None) -> np.ndarray:
        if self.kind != "velocity":
            raise TypeError("symmetric gradient of a scalar field")
        return sym(self.gradient(points, elements))


def interpolate(space: TwoPhaseSpace, phase: int, fn: Callable, kind: str = "velocity"
                ) -> FiniteElementFunction:
    """Nodal interpolant of ``fn(x, y)``.

    Velocity callables return a pair (u1, u2) of arrays, pressure callables
    one array.
    """
    pm = space.phases[phase]
    if kind == "velocity":
        xy = space.q2_node_coords[pm.vel_nodes]
        u1, u2 = fn(xy[:, 0], xy[:, 1])
        c = np.empty(pm.n_velocity)
        c[0::2] = np.broadcast_to(u1, len(xy))
        c[1::2] = np.broadcast_to(u2, len(xy))
    else:
        xy = space.q1_node_coords[pm.p_nodes]
        c = np.broadcast_to(np.asarray(fn(xy[:, 0], xy[:, 1]), dtype=float), len(xy)).copy()
    return FiniteElementFunction(space, phase, kind, c)


def dirichlet_values(space: TwoPhaseSpace, g: Callable) -> np.ndarray:
    """Nodal values of ``g`` on the plus-phase boundary unknowns, aligned with
    ``space.dirichlet_dofs``."""
    nodes = space.phases[1].vel_nodes[space.dirichlet_nodes]
    xy = space.q2_node_coords[nodes]
    g1, g2 = g(xy[:, 0], xy[:, 1])
    out = np.empty(2 * len(nodes))
    out[0::2] = np.broadcast_to(g1, len(nodes))
    out[1::2] = np.broadcast_to(g2, len(nodes))
    return out


def apply_dirichlet(space: TwoPhaseSpace, g, K: sp.spmatrix, b: np.ndarray):
    """Strongly impose boundary data on the assembled system.

    ``g`` is a callable (x, y) -> (g1, g2) or an array aligned with
    ``space.dirichlet_dofs``. Boundary rows and columns become identity, the
    eliminated columns move to the right-hand side, so symmetry survives.
    """
    vals = dirichlet_values(space, g) if callable(g) else np.asarray(g, dtype=float)
    dofs = space.dirichlet_dofs
    K = sp.csr_matrix(K)
    x_d = np.zeros(K.shape[0])
    x_d[dofs] = vals
    b = np.asarray(b, dtype=float) - K @ x_d
    keep = np.ones(K.shape[0])
    keep[dofs] = 0.0
    D = sp.diags(keep)
    ident = np.zeros(K.shape[0])
    ident[dofs] = 1.0
    K = (D @ K @ D + sp.diags(ident)).tocsr()
    K.eliminate_zeros()
    b[dofs] = vals
    return K, b
