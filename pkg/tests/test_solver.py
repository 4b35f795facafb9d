import numpy as np
import pytest
import scipy.sparse as sp

from cutstokes.assembly import AssembledBlocks, PhysicalParams, SparseBlock, assemble_all
from cutstokes.fespace import interpolate
from cutstokes.solver import (NonConvergedError, SaddleSystem, SingularSystemError,
                              build_system, saddle_matrix, solve)
from cutstokes.verification import compute_errors, discretize, make_case, solve_discretization
from conftest import Setup

ZERO = lambda x, y: (0 * x, 0 * y)


def blocks_for(s, params, fm=ZERO, fp=ZERO):
    return assemble_all(s.space, s.topo, s.quad, params, fm, fp)


def test_zero_data_zero_solution(setup8_shifted):
    s = setup8_shifted
    sysm = build_system(s.space, blocks_for(s, PhysicalParams()))
    x = solve(sysm).x
    assert np.linalg.norm(x) <= 1e-12


def test_system_size(setup8):
    s = setup8
    sysm = build_system(s.space, blocks_for(s, PhysicalParams()))
    sp_ = s.space
    expect = sum(sp_.dim_velocity(p) + sp_.dim_pressure(p) for p in (-1, 1)) + 1
    assert sysm.size == expect == sp_.size


def test_symmetry_after_dirichlet(setup8_shifted, case):
    s = setup8_shifted
    sysm = build_system(s.space, blocks_for(s, PhysicalParams()), case.dirichlet)
    assert abs(sysm.matrix - sysm.matrix.T).max() <= 1e-11


def test_dimension_mismatch(setup8):
    s = setup8
    b = blocks_for(s, PhysicalParams())
    bad = AssembledBlocks(b.A, SparseBlock(b.B.matrix[:-1], "pressure", "velocity"), b.C, b.rhs, b.mean_row)
    with pytest.raises(ValueError):
        saddle_matrix(s.space, bad)
    bad = AssembledBlocks(b.A, b.B, b.C, b.rhs[:-1], b.mean_row)
    with pytest.raises(ValueError):
        saddle_matrix(s.space, bad)


@pytest.mark.parametrize("center", [(0.0, 0.0), (0.0371, -0.0523)])
def test_global_polynomial_reproduction(center):
    """Equal viscosities, rigid velocity and global Q1 pressure: no jumps,
    zero interface stress, forcing grad p."""
    s = Setup(8, center)
    mu = 3.0
    params = PhysicalParams(mu_minus=mu, mu_plus=mu, slip=10.0)
    vel = lambda x, y: (0.3 - 0.8 * y + 0 * x, -0.1 + 0.8 * x + 0 * y)
    pres = lambda x, y: 0.4 + x - 2 * y + 0.7 * x * y
    force = lambda x, y: (1 + 0.7 * y, -2 + 0.7 * x)
    sysm = build_system(s.space, blocks_for(s, params, force, force), vel)
    sol = solve(sysm)
    m = sysm.blocks.mean_row
    for ph in (-1, 1):
        u = interpolate(s.space, ph, vel).coeffs
        assert np.abs(sol.velocity(ph).coeffs - u).max() <= 1e-9
    p = np.concatenate([interpolate(s.space, ph, pres, "pressure").coeffs for ph in (-1, 1)])
    p -= (m @ p) / (m @ np.ones_like(p))
    assert np.abs(sol.pressure_block - p).max() <= 1e-9


@pytest.fixture(scope="module")
def manufactured16():
    case = make_case()
    d = discretize(case, 16)
    return case, d, solve_discretization(d)


def test_manufactured_n16(manufactured16):
    case, d, sol = manufactured16
    assert sol.residual <= 1e-10
    rep = compute_errors(case, sol, d.topo)
    assert all(np.isfinite(v) and v >= 0 for v in rep.errors())
    assert abs(sol.multiplier) <= 1e-8
    m = blocks_for(d, d.params).mean_row
    assert abs(m @ sol.pressure_block) <= 1e-10


def test_energy_identity(setup8_shifted, case):
    s = setup8_shifted
    params = case.params()
    fm = lambda x, y: case.forcing(-1, x, y)
    fp = lambda x, y: case.forcing(1, x, y)
    blocks = blocks_for(s, params, fm, fp)
    sol = solve(build_system(s.space, blocks))  # homogeneous Dirichlet data
    u, p = sol.velocity_block, sol.pressure_block
    lhs = u @ (blocks.A.matrix @ u) + p @ (blocks.C.matrix @ p)
    rhs = blocks.rhs @ u
    assert abs(lhs - rhs) <= 1e-8 * abs(rhs)


def test_tolerance_monotonicity():
    case = make_case()
    d = discretize(case, 8)
    a = compute_errors(case, solve_discretization(d, 1e-8), d.topo)
    b = compute_errors(case, solve_discretization(d, 1e-12), d.topo)
    for x, y in zip(a.errors(), b.errors()):
        assert abs(x - y) <= 1e-6 * y


def test_deterministic():
    case = make_case((0.01, 0.02))
    d = discretize(case, 8)
    assert np.array_equal(solve_discretization(d).x, solve_discretization(d).x)


def test_non_converged(setup8, case):
    s = setup8
    sysm = build_system(s.space, blocks_for(s, case.params(), lambda x, y: case.forcing(-1, x, y),
                                            lambda x, y: case.forcing(1, x, y)), case.dirichlet)
    with pytest.raises(NonConvergedError) as exc:
        solve(sysm, tol=1e-30, max_refine=0)
    assert exc.value.status == "NON_CONVERGED"


def test_singular(setup8):
    s = setup8
    sysm = build_system(s.space, blocks_for(s, PhysicalParams()))
    K = sysm.matrix.tolil()
    K[5, :] = 0
    K[:, 5] = 0
    b = np.ones(sysm.size)
    with pytest.raises(SingularSystemError) as exc:
        solve(SaddleSystem(s.space, sysm.blocks, K.tocsr(), b))
    assert exc.value.status == "SINGULAR"
