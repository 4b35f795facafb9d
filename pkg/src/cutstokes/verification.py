"""Manufactured two-phase solution, error norms and the robustness studies."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .assembly import (DEFAULT_ORDER, CutQuadrature, PhysicalParams, assemble_all,
                       build_quadrature)
from .fespace import PHASES, TwoPhaseSpace, build_space
from .geometry import Circle, GeometryError, cut_rules, gauss_points, points_for_order
from .mesh import CutTopology, build_cut_topology, build_mesh
from .solver import DEFAULT_TOL, Solution, SolverError, build_system, solve

RADIUS = 2.0 / 3.0
ERROR_ORDER = 9


@dataclass(frozen=True)
class ManufacturedCase:
    """Rotating two-phase flow around a circle of radius 2/3 centred at ``center``.

    Velocities are g(r) (-y, x) in interface-centred coordinates with
    g+ = 3/(4 mu+) r^2 and g- = 3/(4 mu-) r^2 + (mu- - mu+)/(3 mu+ mu-) - 1/f;
    pressures are x^3 in the interior and x^3 - 1/2 outside.
    """

    center: tuple = (0.0, 0.0)
    mu_minus: float = 1.0
    mu_plus: float = 10.0
    slip: float = 10.0
    radius: float = RADIUS

    def __post_init__(self):
        if self.slip <= 0:
            raise ValueError("manufactured case needs a positive slip coefficient")
        if not 0 < self.mu_minus <= self.mu_plus:
            raise ValueError("need 0 < mu_minus <= mu_plus")

    @property
    def levelset(self) -> Circle:
        return Circle((float(self.center[0]), float(self.center[1])), self.radius)

    @property
    def interface_traction(self) -> float:
        """Jump of the normal stress, minus side minus plus side."""
        return -0.5

    def mu(self, phase: int) -> float:
        return self.mu_minus if phase < 0 else self.mu_plus

    def _ab(self, phase: int):
        a = 3.0 / (4.0 * self.mu(phase))
        if phase > 0:
            return a, 0.0
        mm, mp = self.mu_minus, self.mu_plus
        return a, (mm - mp) / (3.0 * mp * mm) - 1.0 / self.slip

    def _local(self, x, y):
        return np.asarray(x, dtype=float) - self.center[0], np.asarray(y, dtype=float) - self.center[1]

    def g(self, phase: int, x, y):
        X, Y = self._local(x, y)
        a, b = self._ab(phase)
        return a * (X * X + Y * Y) + b

    def velocity(self, phase: int, x, y):
        X, Y = self._local(x, y)
        g = self.g(phase, x, y)
        return -Y * g, X * g

    def velocity_gradient(self, phase: int, x, y) -> np.ndarray:
        """(..., 2, 2) with [component, direction]."""
        X, Y = self._local(x, y)
        a, _ = self._ab(phase)
        g = self.g(phase, x, y)
        G = np.empty(np.shape(X) + (2, 2))
        G[..., 0, 0] = -2 * a * X * Y
        G[..., 0, 1] = -g - 2 * a * Y * Y
        G[..., 1, 0] = g + 2 * a * X * X
        G[..., 1, 1] = 2 * a * X * Y
        return G

    def pressure(self, phase: int, x, y):
        X, _ = self._local(x, y)
        return X**3 - (0.5 if phase > 0 else 0.0)

    def stress(self, phase: int, x, y) -> np.ndarray:
        G = self.velocity_gradient(phase, x, y)
        p = self.pressure(phase, x, y)
        S = self.mu(phase) * (G + np.swapaxes(G, -1, -2))
        S[..., 0, 0] -= p
        S[..., 1, 1] -= p
        return S

    def forcing(self, phase: int, x, y):
        """-div(sigma) = grad p - mu lap u for the divergence-free fields."""
        X, Y = self._local(x, y)
        a, _ = self._ab(phase)
        k = 8 * a * self.mu(phase)
        return 3 * X * X + k * Y, -k * X

    def dirichlet(self, x, y):
        return self.velocity(1, x, y)

    def params(self, **overrides) -> PhysicalParams:
        return PhysicalParams(mu_minus=self.mu_minus, mu_plus=self.mu_plus, slip=self.slip,
                              interface_traction=self.interface_traction, **overrides)

    def solution_scale(self) -> float:
        """Magnitude used to scale the velocity error: sup of |g-| over the interior.

        g- is monotone in r, so the sup sits at r = 0 or r = radius.
        """
        a, b = self._ab(-1)
        return max(abs(b), abs(a * self.radius**2 + b))

    def interface_residuals(self, num: int = 64) -> dict:
        """Max residuals of the four interface conditions at equispaced points."""
        t = 2 * np.pi * np.arange(num) / num
        n = np.column_stack([np.cos(t), np.sin(t)])
        x = self.center[0] + self.radius * n[:, 0]
        y = self.center[1] + self.radius * n[:, 1]
        um = np.column_stack(self.velocity(-1, x, y))
        up = np.column_stack(self.velocity(1, x, y))
        Sm, Sp = self.stress(-1, x, y), self.stress(1, x, y)
        tm = np.einsum("qab,qb->qa", Sm, n)
        tp = np.einsum("qab,qb->qa", Sp, n)

        def P(v):
            return v - np.sum(v * n, axis=1)[:, None] * n

        f = self.slip
        return {
            "normal_velocity": float(np.max(np.abs(np.sum((up - um) * n, axis=1)))),
            "slip_plus": float(np.max(np.abs(P(tp) - f * (P(up) - P(um))))),
            "slip_minus": float(np.max(np.abs(P(tm) + f * (P(um) - P(up))))),
            "normal_stress": float(np.max(np.abs(np.sum(tm * n, axis=1) - np.sum(tp * n, axis=1)
                                                 - self.interface_traction))),
        }


def make_case(c=(0.0, 0.0), mu_minus: float = 1.0, mu_plus: float = 10.0, f: float = 10.0
              ) -> ManufacturedCase:
    return ManufacturedCase(tuple(map(float, c)), float(mu_minus), float(mu_plus), float(f))


def position_center(k: int, n: int) -> tuple[float, float]:
    """Interface centre of the k-th position-sweep configuration on an n x n mesh."""
    h = 2.0 / n
    r = h / 20.0 * k
    return r * math.cos(k * math.pi / 10.0), r * math.sin(k * math.pi / 10.0)


@dataclass
class ErrorReport:
    n: int
    h: float
    err_l2_u: float = math.nan
    err_h1w_u: float = math.nan
    err_h1w_u_scaled: float = math.nan
    err_l2w_p: float = math.nan
    residual: float = math.nan
    wall_ms: float = 0.0
    status: str = "OK"
    multiplier: float = math.nan
    eoc_l2_u: Optional[float] = None
    eoc_h1w_u: Optional[float] = None
    eoc_l2w_p: Optional[float] = None
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "OK"

    def errors(self) -> tuple[float, float, float]:
        return self.err_l2_u, self.err_h1w_u, self.err_l2w_p


@dataclass
class Discretization:
    """Everything built for one (case, n) pair before solving."""

    case: ManufacturedCase
    params: PhysicalParams
    topo: CutTopology
    space: TwoPhaseSpace
    quad: CutQuadrature

    @property
    def n(self) -> int:
        return self.space.mesh.n


def discretize(case: ManufacturedCase, n: int, order: int = DEFAULT_ORDER, **param_overrides
               ) -> Discretization:
    mesh = build_mesh(n)
    topo = build_cut_topology(mesh, case.levelset)
    space = build_space(mesh, topo)
    quad = build_quadrature(topo, order)
    return Discretization(case, case.params(**param_overrides), topo, space, quad)


def solve_discretization(d: Discretization, tol: float = DEFAULT_TOL) -> Solution:
    case = d.case
    blocks = assemble_all(d.space, d.topo, d.quad, d.params,
                          lambda x, y: case.forcing(-1, x, y), lambda x, y: case.forcing(1, x, y))
    system = build_system(d.space, blocks, case.dirichlet)
    return solve(system, tol)


# -- error norms -----------------------------------------------------------------

def _phase_points(space: TwoPhaseSpace, topo: CutTopology, phase: int, order: int):
    """Quadrature points, weights and owning elements covering one phase exactly."""
    mesh = space.mesh
    t, w = gauss_points(points_for_order(order))
    X, Y = np.meshgrid(t, t, indexing="xy")
    ref = np.column_stack([X.ravel(), Y.ravel()])
    wr = np.outer(w, w).ravel() * mesh.h**2
    act = topo.active(phase)
    unc = act[~np.isin(act, topo.cut_elements)]
    pts = [(mesh.element_boxes[unc, None, :2] + mesh.h * ref[None]).reshape(-1, 2)]
    wts = [np.tile(wr, len(unc))]
    els = [np.repeat(unc, len(wr))]
    for e in topo.cut_elements:
        rule = cut_rules(mesh.box(int(e)), topo.levelset, order)[0 if phase < 0 else 1]
        pts.append(rule.points)
        wts.append(rule.weights)
        els.append(np.full(len(rule), e))
    return np.concatenate(pts), np.concatenate(wts), np.concatenate(els)


def compute_errors(case: ManufacturedCase, solution: Solution, topo: CutTopology,
                   order: int = ERROR_ORDER, pressure_override=None) -> ErrorReport:
    """L2 and weighted H1 velocity errors, weighted L2 pressure error.

    Pressures are compared after shifting both to zero weighted mean.
    ``pressure_override`` maps phase -> FiniteElementFunction to replace the
    discrete pressure (used to probe shift invariance).
    """
    space = solution.space
    l2u = h1w = 0.0
    perr, pw, pmu = [], [], []
    for s in PHASES:
        x, w, els = _phase_points(space, topo, s, order)
        uh = solution.velocity(s)
        ph = pressure_override[s] if pressure_override else solution.pressure(s)
        du = np.column_stack(case.velocity(s, x[:, 0], x[:, 1])) - uh.value(x, els)
        dD = case.velocity_gradient(s, x[:, 0], x[:, 1]) - uh.gradient(x, els)
        dD = 0.5 * (dD + np.swapaxes(dD, -1, -2))
        l2u += np.dot(w, np.sum(du * du, axis=1))
        h1w += 2 * case.mu(s) * np.dot(w, np.sum(dD * dD, axis=(1, 2)))
        perr.append(case.pressure(s, x[:, 0], x[:, 1]) - ph.value(x, els))
        pw.append(w)
        pmu.append(np.full(len(w), 1.0 / case.mu(s)))
    e, w, im = np.concatenate(perr), np.concatenate(pw), np.concatenate(pmu)
    shift = np.dot(w * im, e) / np.dot(w, im)
    l2p = np.dot(w * im, (e - shift) ** 2)
    n = space.mesh.n
    return ErrorReport(n=n, h=space.mesh.h, err_l2_u=math.sqrt(l2u), err_h1w_u=math.sqrt(h1w),
                       err_h1w_u_scaled=math.sqrt(h1w) / case.solution_scale(),
                       err_l2w_p=math.sqrt(max(l2p, 0.0)), residual=solution.residual,
                       multiplier=solution.multiplier)


def solve_case(case: ManufacturedCase, n: int, tol: float = DEFAULT_TOL,
               order: int = DEFAULT_ORDER, **param_overrides):
    """Like run_case but also hands back the discretization and solution
    (both None when the pipeline failed)."""
    t0 = time.perf_counter()
    d = sol = None
    try:
        d = discretize(case, n, order, **param_overrides)
        sol = solve_discretization(d, tol)
        rep = compute_errors(case, sol, d.topo)
    except SolverError as exc:
        rep = ErrorReport(n=n, h=2.0 / n, status=exc.status, message=str(exc))
        sol = None
    except GeometryError as exc:
        rep = ErrorReport(n=n, h=2.0 / n, status="GEOMETRY_ERROR", message=str(exc))
    rep.wall_ms = 1e3 * (time.perf_counter() - t0)
    return rep, d, sol


def run_case(case: ManufacturedCase, n: int, tol: float = DEFAULT_TOL,
             order: int = DEFAULT_ORDER, **param_overrides) -> ErrorReport:
    """Discretize, solve and measure one configuration; failures become statuses."""
    return solve_case(case, n, tol, order, **param_overrides)[0]


def interface_samples(levelset: Circle, num: int = 256):
    """Equispaced points on the circle with their outward normals."""
    t = 2 * np.pi * (np.arange(num) + 0.5) / num
    nrm = np.column_stack([np.cos(t), np.sin(t)])
    return np.asarray(levelset.center) + levelset.radius * nrm, nrm


def tangential_jump(solution: Solution, num: int = 256) -> float:
    """max over Gamma of |P u_h^- - P u_h^+|."""
    x, nrm = interface_samples(solution.space.topo.levelset, num)
    um = solution.velocity(-1).value(x)
    up = solution.velocity(1).value(x)
    jump = um - up
    jump -= np.sum(jump * nrm, axis=1)[:, None] * nrm
    return float(np.max(np.linalg.norm(jump, axis=1)))


def sample_solution(solution: Solution, points: int = 101) -> np.ndarray:
    """(x, y, phase, u1, u2, p) rows on a uniform grid of the domain."""
    t = np.linspace(-1.0, 1.0, points)
    X, Y = np.meshgrid(t, t, indexing="xy")
    xy = np.column_stack([X.ravel(), Y.ravel()])
    phase = np.where(solution.space.topo.levelset.value(xy[:, 0], xy[:, 1]) < 0, -1, 1)
    out = np.empty((len(xy), 6))
    out[:, :2] = xy
    out[:, 2] = phase
    for s in PHASES:
        sel = phase == s
        if sel.any():
            out[sel, 3:5] = solution.velocity(s).value(xy[sel])
            out[sel, 5] = solution.pressure(s).value(xy[sel])
    return out


def eoc(coarse: float, fine: float) -> float:
    return math.log2(coarse / fine)


def attach_eoc(reports: list) -> list:
    for prev, cur in zip(reports, reports[1:]):
        if prev.ok and cur.ok:
            cur.eoc_l2_u = eoc(prev.err_l2_u, cur.err_l2_u)
            cur.eoc_h1w_u = eoc(prev.err_h1w_u, cur.err_h1w_u)
            cur.eoc_l2w_p = eoc(prev.err_l2w_p, cur.err_l2w_p)
    return reports


class StudyError(RuntimeError):
    def __init__(self, n: int, report: ErrorReport):
        super().__init__(f"n={n}: {report.status} {report.message}")
        self.n, self.report = n, report


def convergence_study(case: ManufacturedCase, n_list: Iterable[int], tol: float = DEFAULT_TOL,
                      raise_on_failure: bool = True, **param_overrides) -> list:
    n_list = list(n_list)
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n-list must be strictly increasing")
    if any(n < 2 or n & (n - 1) for n in n_list):
        raise ValueError("n-list entries must be powers of two")
    reports = []
    for n in n_list:
        rep = run_case(case, n, tol, **param_overrides)
        if not rep.ok and raise_on_failure:
            raise StudyError(n, rep)
        reports.append(rep)
    return attach_eoc(reports)


def viscosity_sweep(mu_plus_list: Iterable[float] = tuple(10.0**k for k in range(9)),
                    n: int = 32, mu_minus: float = 1.0, f: float = 10.0,
                    tol: float = DEFAULT_TOL, **param_overrides) -> list:
    return [run_case(make_case((0, 0), mu_minus, mp, f), n, tol, **param_overrides)
            for mp in mu_plus_list]


def slip_sweep(f_list: Iterable[float] = tuple(2.0**k for k in range(-8, 9)), n: int = 32,
               mu_minus: float = 1.0, mu_plus: float = 10.0, tol: float = DEFAULT_TOL,
               **param_overrides) -> list:
    return [run_case(make_case((0, 0), mu_minus, mu_plus, f), n, tol, **param_overrides)
            for f in f_list]


def position_sweep(k_list: Iterable[int] = range(1, 21), n: int = 32, mu_minus: float = 1.0,
                   mu_plus: float = 10.0, f: float = 10.0, tol: float = DEFAULT_TOL,
                   **param_overrides) -> list:
    return [run_case(make_case(position_center(k, n), mu_minus, mu_plus, f), n, tol,
                     **param_overrides)
            for k in k_list]


def geometry_errors(n_list: Iterable[int], center=(0.0, 0.0), radius: float = RADIUS,
                    order: int = DEFAULT_ORDER) -> list:
    """(n, disk area error, circumference error) using the cut rules alone."""
    ls = Circle(tuple(map(float, center)), radius)
    out = []
    for n in n_list:
        mesh = build_mesh(n)
        topo = build_cut_topology(mesh, ls)
        area = len(np.setdiff1d(topo.minus_elements, topo.cut_elements)) * mesh.h**2
        length = 0.0
        for e in topo.cut_elements:
            m_, _, g_ = cut_rules(mesh.box(int(e)), topo.levelset, order)
            area += m_.weights.sum()
            length += g_.weights.sum()
        out.append((n, area - math.pi * radius**2, length - 2 * math.pi * radius))
    return out


def fitted_order(hs, errs, floor: float = 1e-13) -> float:
    """Least-squares slope of log(err) against log(h), ignoring errors at roundoff."""
    hs, errs = np.asarray(hs, float), np.abs(np.asarray(errs, float))
    keep = errs > floor
    if keep.sum() < 2:
        return math.inf
    return float(np.polyfit(np.log(hs[keep]), np.log(errs[keep]), 1)[0])
