"""Bordered saddle-point system and its direct solution."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import AssembledBlocks
from .fespace import FiniteElementFunction, TwoPhaseSpace, apply_dirichlet

DEFAULT_TOL = 1e-10


class SolverError(RuntimeError):
    status = "FAILED"


class NonConvergedError(SolverError):
    status = "NON_CONVERGED"


class SingularSystemError(SolverError):
    status = "SINGULAR"


@dataclass
class SaddleSystem:
    """[[A, B^T, 0], [B, -C, m], [0, m^T, 0]] with Dirichlet rows eliminated."""

    space: TwoPhaseSpace
    blocks: AssembledBlocks
    matrix: sp.csr_matrix
    rhs: np.ndarray

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


@dataclass
class Solution:
    space: TwoPhaseSpace
    x: np.ndarray
    residual: float

    def velocity(self, phase: int) -> FiniteElementFunction:
        return FiniteElementFunction(self.space, phase, "velocity", self.x[self.space.velocity_slice(phase)])

    def pressure(self, phase: int) -> FiniteElementFunction:
        off = self.space.n_velocity
        sl = self.space.pressure_slice(phase)
        return FiniteElementFunction(self.space, phase, "pressure", self.x[off + sl.start:off + sl.stop])

    @property
    def multiplier(self) -> float:
        return float(self.x[-1])

    @property
    def velocity_block(self) -> np.ndarray:
        return self.x[:self.space.n_velocity]

    @property
    def pressure_block(self) -> np.ndarray:
        nv = self.space.n_velocity
        return self.x[nv:nv + self.space.n_pressure]


def saddle_matrix(space: TwoPhaseSpace, blocks: AssembledBlocks) -> sp.csr_matrix:
    nv, npr = space.n_velocity, space.n_pressure
    A, B, C = blocks.A.matrix, blocks.B.matrix, blocks.C.matrix
    if A.shape != (nv, nv) or B.shape != (npr, nv) or C.shape != (npr, npr):
        raise ValueError("block dimensions do not match the space")
    if blocks.mean_row.shape != (npr,) or blocks.rhs.shape != (nv,):
        raise ValueError("vector dimensions do not match the space")
    m = sp.csr_matrix(blocks.mean_row[None, :])
    return sp.bmat([[A, B.T, None],
                    [B, -C, m.T],
                    [None, m, sp.csr_matrix((1, 1))]], format="csr")


def build_system(space: TwoPhaseSpace, blocks: AssembledBlocks, dirichlet=None) -> SaddleSystem:
    """Compose the blocks and eliminate the boundary unknowns.

    ``dirichlet`` is a callable (x, y) -> (g1, g2), an array aligned with
    ``space.dirichlet_dofs``, or None for homogeneous data.
    """
    K = saddle_matrix(space, blocks)
    b = np.concatenate([blocks.rhs, np.zeros(space.n_pressure + 1)])
    if dirichlet is None:
        dirichlet = np.zeros(len(space.dirichlet_dofs))
    K, b = apply_dirichlet(space, dirichlet, K, b)
    return SaddleSystem(space, blocks, K, b)


def _scaling(K: sp.csr_matrix) -> np.ndarray:
    row_max = np.asarray(abs(K).max(axis=1).todense()).ravel()
    row_max[row_max == 0] = 1.0
    return 1.0 / np.sqrt(row_max)


def solve(system: SaddleSystem, tol: float = DEFAULT_TOL, max_refine: int = 8) -> Solution:
    """Symmetrically scaled sparse LU with iterative refinement.

    Raises SingularSystemError on factorization breakdown and
    NonConvergedError if the relative residual stays above ``tol``.
    """
    K, b = system.matrix, system.rhs
    d = _scaling(K)
    Ks = sp.diags(d) @ K @ sp.diags(d)
    try:
        lu = spla.splu(Ks.tocsc(), permc_spec="COLAMD")
    except RuntimeError as exc:
        raise SingularSystemError(str(exc)) from exc
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return Solution(system.space, np.zeros_like(b), 0.0)
    x = d * lu.solve(d * b)
    res = np.linalg.norm(b - K @ x) / bnorm
    for _ in range(max_refine):
        if not np.isfinite(res):
            raise SingularSystemError("non-finite solution")
        if res <= 0.1 * tol:
            break
        x_new = x + d * lu.solve(d * (b - K @ x))
        res_new = np.linalg.norm(b - K @ x_new) / bnorm
        if res_new >= res:
            break
        x, res = x_new, res_new
    if not np.isfinite(res):
        raise SingularSystemError("non-finite solution")
    if res > tol:
        raise NonConvergedError(f"relative residual {res:.3e} above tolerance {tol:.1e}")
    return Solution(system.space, x, float(res))
