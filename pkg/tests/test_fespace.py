import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from cutstokes.fespace import (FiniteElementFunction, apply_dirichlet, build_space,
                               dirichlet_values, interpolate, q1_values, q2_gradients,
                               q2_values, vector_basis)
from cutstokes.geometry import Circle, cut_rules
from cutstokes.mesh import build_cut_topology, build_mesh
from conftest import Setup


def q2_poly(x, y):
    return (1 + x - 2 * y + 0.5 * x * y + 3 * x * x * y * y - y * y,
            -0.3 + x * x * y - 2 * x * y * y + 0.25 * x * x)


def test_dimensions_n4():
    s = Setup(4)
    verts = np.unique(s.mesh.elements[s.topo.minus_elements])
    assert s.space.dim_pressure(-1) == len(verts) == 21
    assert s.space.dim_pressure(1) == 25
    q2 = np.unique(s.space.q2_cell_nodes[s.topo.minus_elements])
    assert s.space.dim_velocity(-1) == 2 * len(q2)
    assert s.space.size == s.space.n_velocity + s.space.n_pressure + 1


def test_dimensions_no_minus_phase():
    s = Setup(4, (5.0, 5.0), 0.1)
    assert s.space.dim_velocity(-1) == 0 and s.space.dim_pressure(-1) == 0


def test_dimensions_n2_all_cut():
    s = Setup(2)
    assert len(s.topo.cut_elements) == 4
    assert s.space.dim_velocity(1) == 2 * (2 * 2 + 1) ** 2 == 50


def test_cut_nodes_doubled(setup8):
    sp_ = setup8.space
    shared = np.intersect1d(sp_.phases[-1].vel_nodes, sp_.phases[1].vel_nodes)
    band = np.unique(sp_.q2_cell_nodes[setup8.topo.cut_elements])
    assert set(band) <= set(shared)
    d_m = sp_.velocity_dofs(-1, setup8.topo.cut_elements)
    d_p = sp_.velocity_dofs(1, setup8.topo.cut_elements)
    assert not set(d_m.ravel()) & set(d_p.ravel())


def test_dirichlet_only_plus_boundary(setup8):
    sp_ = setup8.space
    d = sp_.dirichlet_dofs
    assert np.all(d >= sp_.velocity_offset[1])
    xy = sp_.q2_node_coords[sp_.phases[1].vel_nodes[sp_.dirichlet_nodes]]
    assert np.all(np.isclose(np.abs(xy).max(axis=1), 1.0))
    assert len(d) == 2 * 4 * 2 * setup8.mesh.n


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1))
def test_partition_of_unity(xi, eta):
    assert abs(q2_values(np.array([xi]), np.array([eta])).sum() - 1) <= 1e-13
    assert abs(q1_values(np.array([xi]), np.array([eta])).sum() - 1) <= 1e-13
    assert np.abs(q2_gradients(np.array([xi]), np.array([eta])).sum(axis=1)).max() <= 1e-12


def test_vector_basis_interleaving():
    phi = q2_values(np.array([0.3]), np.array([0.6]))
    dphi = q2_gradients(np.array([0.3]), np.array([0.6]))
    val, grad = vector_basis(phi, dphi)
    assert val.shape == (1, 18, 2) and grad.shape == (1, 18, 2, 2)
    assert np.allclose(val[0, 0::2, 0], phi[0]) and np.allclose(val[0, 1::2, 1], phi[0])
    assert np.all(val[0, 0::2, 1] == 0) and np.all(val[0, 1::2, 0] == 0)


def test_nodal_reproduction(setup8):
    sp_ = setup8.space
    for s in (-1, 1):
        u = interpolate(sp_, s, q2_poly)
        nodes = sp_.q2_node_coords[sp_.phases[s].vel_nodes]
        v = u.value(nodes)
        assert np.abs(v[:, 0] - u.coeffs[0::2]).max() <= 1e-14
        assert np.abs(v[:, 1] - u.coeffs[1::2]).max() <= 1e-14
        p = interpolate(sp_, s, lambda x, y: np.sin(x) + y, "pressure")
        pn = sp_.q1_node_coords[sp_.phases[s].p_nodes]
        assert np.abs(p.value(pn) - p.coeffs).max() <= 1e-14


def test_interpolate_constant(setup8):
    u = interpolate(setup8.space, -1, lambda x, y: (1.0, 1.0))
    assert np.all(u.coeffs == 1.0)
    p = interpolate(setup8.space, 1, lambda x, y: 1.0, "pressure")
    assert np.all(p.coeffs == 1.0)


def test_global_q2_reproduction(setup8, rng):
    sp_ = setup8.space
    for s in (-1, 1):
        u = interpolate(sp_, s, q2_poly)
        els = setup8.topo.active(s)
        e = rng.choice(els, 200)
        pts = setup8.mesh.element_boxes[e, :2] + setup8.mesh.h * rng.random((200, 2))
        exact = np.column_stack(q2_poly(pts[:, 0], pts[:, 1]))
        assert np.abs(u.value(pts, e) - exact).max() <= 1e-13


def test_gradients_and_sym(setup8, rng):
    u = interpolate(setup8.space, 1, lambda x, y: (x * x * y, -x * y * y))
    pts = rng.uniform(-0.95, 0.95, (200, 2))
    pts = pts[setup8.ls.value(*pts.T) > 0.3][:50]
    x, y = pts.T
    G = u.gradient(pts)
    assert np.allclose(G[:, 0, 0], 2 * x * y, atol=1e-12)
    assert np.allclose(G[:, 0, 1], x * x, atol=1e-12)
    assert np.allclose(G[:, 1, 0], -y * y, atol=1e-12)
    assert np.allclose(G[:, 1, 1], -2 * x * y, atol=1e-12)
    D = u.sym_gradient(pts)
    assert np.allclose(D, np.swapaxes(D, 1, 2))
    with pytest.raises(TypeError):
        interpolate(setup8.space, 1, lambda x, y: x, "pressure").sym_gradient(pts)


def test_coefficient_length_checked(setup8):
    with pytest.raises(ValueError):
        FiniteElementFunction(setup8.space, 1, "velocity", np.zeros(3))
    with pytest.raises(ValueError):
        FiniteElementFunction(setup8.space, 1, "stress", np.zeros(3))


def test_interface_interpolation_error_cubic(case):
    errs = []
    for n in (8, 16, 32):
        s = Setup(n)
        u = interpolate(s.space, -1, lambda x, y: case.velocity(-1, x, y))
        worst = 0.0
        for e in s.topo.cut_elements:
            rule = s.quad.interface(e)
            if len(rule) == 0:
                continue
            diff = u.value(rule.points, e) - np.column_stack(case.velocity(-1, *rule.points.T))
            worst = max(worst, np.abs(diff).max())
        errs.append(worst)
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 2.7)


def test_jump_of_shared_function_vanishes(setup8_shifted):
    s = setup8_shifted
    um = interpolate(s.space, -1, q2_poly)
    up = interpolate(s.space, 1, q2_poly)
    for e in s.topo.cut_elements:
        rule = s.quad.interface(e)
        if len(rule):
            assert np.abs(um.value(rule.points, e) - up.value(rule.points, e)).max() <= 1e-12


def _toy_system(space, rng):
    n = space.size
    M = sp.random(n, n, density=0.01, random_state=1)
    K = (M + M.T + sp.identity(n) * 5).tocsr()
    return K, rng.standard_normal(n)


def test_apply_dirichlet_zero_and_exact(setup8, rng, case):
    space = setup8.space
    K, b = _toy_system(space, rng)
    d = space.dirichlet_dofs
    for g in (lambda x, y: (0 * x, 0 * y), case.dirichlet):
        Kd, bd = apply_dirichlet(space, g, K, b)
        x = sp.linalg.spsolve(Kd.tocsc(), bd)
        assert np.array_equal(x[d], dirichlet_values(space, g))
        assert abs(Kd - Kd.T).max() <= 1e-12
    vals = dirichlet_values(space, case.dirichlet)
    nodes = space.q2_node_coords[space.phases[1].vel_nodes[space.dirichlet_nodes]]
    ex = np.column_stack(case.dirichlet(*nodes.T)).ravel()
    assert np.array_equal(vals, ex)
    # array form is equivalent to the callable
    Ka, ba = apply_dirichlet(space, vals, K, b)
    Kc, bc = apply_dirichlet(space, case.dirichlet, K, b)
    assert np.array_equal(ba, bc) and abs(Ka - Kc).max() == 0
