"""Implicit interface description and quadrature on cut quadrilaterals.

Cut regions are integrated with height-function rules: a cut box is split
until the interface is a graph over one coordinate, the outer coordinate is
broken at the points where the interface leaves the box, and along every
outer Gauss line the interface height is found by a bracketed
bisection/Newton solve. Smooth level sets give rules whose error is governed
only by the Gauss order, so no mesh deformation is needed.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

Box = Tuple[float, float, float, float]  # (x0, y0, x1, y1)

MAX_DEPTH = 8
ROOT_TOL = 1e-13
# extra Gauss points along the outer direction of cut rules: integrands there
# are polynomials composed with the curved interface height, so the nominal
# count leaves ~1e-8 relative errors that the solver amplifies
OUTER_EXTRA = 8
# minimum |d phi/d x_axis| / |grad phi| for the height direction
_HEIGHT_SLOPE = 0.3


class GeometryError(RuntimeError):
    """The interface could not be resolved inside a box."""


class ElementCutClass(enum.IntEnum):
    INSIDE_MINUS = -1
    CUT = 0
    INSIDE_PLUS = 1


class LevelSet:
    """Smooth implicit function, negative in the interior phase.

    Subclasses provide ``value``, ``grad`` and ``hessian``; the box and edge
    queries fall back to dense sampling and may be overridden with exact
    versions.
    """

    def value(self, x, y):
        raise NotImplementedError

    def grad(self, x, y):
        raise NotImplementedError

    def hessian(self, x, y):
        raise NotImplementedError

    def perturbed(self, eps: float) -> "LevelSet":
        raise GeometryError(f"{type(self).__name__} cannot be perturbed off a degenerate cut")

    def box_range(self, box: Box) -> tuple[float, float]:
        x, y = _sample_grid(box, 9)
        v = self.value(x, y)
        return float(v.min()), float(v.max())

    def monotone_along(self, box: Box, axis: int) -> bool:
        """True if d phi / d x_axis keeps one sign and stays steep on the box."""
        x, y = _sample_grid(box, 9)
        g = np.stack(self.grad(x, y))
        ga = g[axis]
        norm = np.hypot(g[0], g[1])
        if not (np.all(ga > 0) or np.all(ga < 0)):
            return False
        return bool(np.min(np.abs(ga) / norm) >= _HEIGHT_SLOPE)

    def edge_roots(self, axis: int, fixed: float, lo: float, hi: float) -> np.ndarray:
        """Roots in (lo, hi) of t -> phi with coordinate ``axis`` = t, the other = ``fixed``."""
        t = np.linspace(lo, hi, 33)
        pts = _axis_points(axis, t, np.full_like(t, fixed))
        v = self.value(*pts)
        idx = np.nonzero(v[:-1] * v[1:] < 0)[0]
        if idx.size == 0:
            return np.empty(0)
        a, b = t[idx], t[idx + 1]
        fixed_arr = np.full(a.shape, fixed)
        return np.sort(_bracketed_roots(self, 1 - axis, fixed_arr, a, b))


@dataclass(frozen=True)
class Circle(LevelSet):
    """Signed distance to a circle: phi = |x - c| - r."""

    center: tuple[float, float]
    radius: float

    def value(self, x, y):
        return np.hypot(x - self.center[0], y - self.center[1]) - self.radius

    def grad(self, x, y):
        dx, dy = x - self.center[0], y - self.center[1]
        rho = np.hypot(dx, dy)
        return dx / rho, dy / rho

    def hessian(self, x, y):
        dx, dy = x - self.center[0], y - self.center[1]
        rho = np.hypot(dx, dy)
        r3 = rho**3
        return dy * dy / r3, -dx * dy / r3, dx * dx / r3

    def perturbed(self, eps: float) -> "Circle":
        return Circle((self.center[0] + eps, self.center[1] + eps), self.radius)

    def box_range(self, box: Box) -> tuple[float, float]:
        x0, y0, x1, y1 = box
        cx, cy = self.center
        nx = min(max(cx, x0), x1)
        ny = min(max(cy, y0), y1)
        fx = x0 if abs(cx - x0) > abs(cx - x1) else x1
        fy = y0 if abs(cy - y0) > abs(cy - y1) else y1
        near = math.hypot(nx - cx, ny - cy) - self.radius
        far = math.hypot(fx - cx, fy - cy) - self.radius
        return near, far

    def monotone_along(self, box: Box, axis: int) -> bool:
        lo, hi = box[axis], box[axis + 2]
        c = self.center[axis]
        if lo <= c <= hi:
            return False
        return super().monotone_along(box, axis)

    def edge_roots(self, axis: int, fixed: float, lo: float, hi: float) -> np.ndarray:
        d = fixed - self.center[1 - axis]
        disc = self.radius**2 - d * d
        if disc <= 0.0:
            return np.empty(0)
        s = math.sqrt(disc)
        c = self.center[axis]
        roots = [t for t in (c - s, c + s) if lo < t < hi]
        return np.array(sorted(roots))


@dataclass(frozen=True)
class QuadRule:
    """Points and weights; interface rules also carry unit normals."""

    points: np.ndarray
    weights: np.ndarray
    normals: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.weights)

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))


def gauss_points(m: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights on [0, 1]."""
    return _gauss01(m)


@functools.lru_cache(maxsize=None)
def _gauss01(m: int):
    x, w = np.polynomial.legendre.leggauss(m)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def points_for_order(order: int) -> int:
    """Number of Gauss points per direction exact for degree ``order``."""
    return max(1, math.ceil((order + 1) / 2))


def tensor_rule(box: Box, order: int) -> QuadRule:
    x0, y0, x1, y1 = box
    t, w = _gauss01(points_for_order(order))
    hx, hy = x1 - x0, y1 - y0
    X, Y = np.meshgrid(x0 + hx * t, y0 + hy * t, indexing="xy")
    W = np.outer(w, w) * hx * hy
    return QuadRule(np.column_stack([X.ravel(), Y.ravel()]), W.ravel())


def classify_element(box: Box, ls: LevelSet) -> ElementCutClass:
    """Cut if phi changes sign over the closed box, else the phase of the centroid."""
    x, y = _sample_grid(box, 5)
    v = ls.value(x, y)
    lo, hi = float(v.min()), float(v.max())
    blo, bhi = ls.box_range(box)
    lo, hi = min(lo, blo), max(hi, bhi)
    if lo <= 0.0 <= hi:
        return ElementCutClass.CUT
    xc, yc = 0.5 * (box[0] + box[2]), 0.5 * (box[1] + box[3])
    return ElementCutClass.INSIDE_MINUS if ls.value(xc, yc) < 0 else ElementCutClass.INSIDE_PLUS


def volume_quadrature(box: Box, ls: LevelSet, phase: int, order: int) -> QuadRule:
    """Rule for ``box`` intersected with the phase ``phase`` (-1 or +1)."""
    if order < 2:
        raise ValueError("order must be >= 2")
    if phase not in (-1, 1):
        raise ValueError("phase must be -1 or +1")
    minus, plus, _ = cut_rules(tuple(map(float, box)), ls, order)
    return minus if phase < 0 else plus


def interface_quadrature(box: Box, ls: LevelSet, order: int) -> QuadRule:
    """Rule on the interface piece inside ``box`` with normals grad(phi)/|grad(phi)|."""
    _, _, gamma = cut_rules(tuple(map(float, box)), ls, order)
    return gamma


@functools.lru_cache(maxsize=4096)
def cut_rules(box: Box, ls: LevelSet, order: int) -> tuple[QuadRule, QuadRule, QuadRule]:
    """(minus-volume, plus-volume, interface) rules for one box."""
    m = points_for_order(order)
    parts = {-1: [], 1: [], 0: []}
    _decompose(box, ls, m, 0, parts)

    def cat(items, with_normals=False):
        if not items:
            empty = np.empty((0, 2))
            return QuadRule(empty, np.empty(0), empty.copy() if with_normals else None)
        pts = np.concatenate([it[0] for it in items])
        wts = np.concatenate([it[1] for it in items])
        nrm = np.concatenate([it[2] for it in items]) if with_normals else None
        for a in (pts, wts, nrm):
            if a is not None:
                a.setflags(write=False)
        return QuadRule(pts, wts, nrm)

    return cat(parts[-1]), cat(parts[1]), cat(parts[0], with_normals=True)


def curvature(ls: LevelSet, x: float, y: float) -> float:
    """div(grad phi / |grad phi|) at (x, y)."""
    gx, gy = ls.grad(np.float64(x), np.float64(y))
    hxx, hxy, hyy = ls.hessian(np.float64(x), np.float64(y))
    g2 = gx * gx + gy * gy
    g = math.sqrt(g2)
    if g == 0.0:
        raise GeometryError("vanishing level-set gradient")
    nHn = (gx * gx * hxx + 2 * gx * gy * hxy + gy * gy * hyy) / g2
    return float((hxx + hyy - nHn) / g)


# -- internals ----------------------------------------------------------------


def _sample_grid(box: Box, k: int):
    x0, y0, x1, y1 = box
    X, Y = np.meshgrid(np.linspace(x0, x1, k), np.linspace(y0, y1, k))
    return X.ravel(), Y.ravel()


def _axis_points(axis: int, t, other):
    """(x, y) with coordinate ``axis`` equal to ``t`` and the other to ``other``."""
    return (t, other) if axis == 0 else (other, t)


def _bracketed_roots(ls: LevelSet, fixed_axis: int, fixed, a, b) -> np.ndarray:
    """Vectorised root of phi along the free axis on brackets [a, b].

    ``fixed_axis`` is the coordinate held at ``fixed``. Bisection shrinks the
    bracket, then safeguarded Newton polishes to ``ROOT_TOL``.
    """
    free = 1 - fixed_axis
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    fa = ls.value(*_axis_points(free, a, fixed))
    width0 = np.max(b - a) if a.size else 0.0
    for _ in range(12):
        mid = 0.5 * (a + b)
        fm = ls.value(*_axis_points(free, mid, fixed))
        left = fa * fm <= 0
        b = np.where(left, mid, b)
        a = np.where(left, a, mid)
        fa = np.where(left, fa, fm)
    t = 0.5 * (a + b)
    tol = ROOT_TOL * max(1.0, width0)
    for _ in range(30):
        v = ls.value(*_axis_points(free, t, fixed))
        d = ls.grad(*_axis_points(free, t, fixed))[free]
        step = v / d
        t_new = t - step
        bad = (t_new < a) | (t_new > b) | ~np.isfinite(t_new)
        t_new = np.where(bad, 0.5 * (a + b), t_new)
        # keep the bracket consistent with the new iterate
        fn = ls.value(*_axis_points(free, t_new, fixed))
        fa_cur = ls.value(*_axis_points(free, a, fixed))
        left = fa_cur * fn <= 0
        b = np.where(left, t_new, b)
        a = np.where(left, a, t_new)
        done = np.all(np.abs(t_new - t) <= tol)
        t = t_new
        if done:
            break
    else:
        raise GeometryError("root finding did not converge")
    return t


def _decompose(box: Box, ls: LevelSet, m: int, depth: int, parts) -> None:
    lo, hi = ls.box_range(box)
    if lo > 0.0:
        r = tensor_rule(box, 2 * m - 1)
        parts[1].append((r.points, r.weights))
        return
    if hi < 0.0:
        r = tensor_rule(box, 2 * m - 1)
        parts[-1].append((r.points, r.weights))
        return
    axis = _height_axis(box, ls)
    if axis is None:
        if depth >= MAX_DEPTH:
            raise GeometryError(f"interface not resolved in box {box} at depth {depth}")
        x0, y0, x1, y1 = box
        xm, ym = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
        for sub in ((x0, y0, xm, ym), (xm, y0, x1, ym), (x0, ym, xm, y1), (xm, ym, x1, y1)):
            _decompose(sub, ls, m, depth + 1, parts)
        return
    _height_rules(box, ls, axis, m, parts)


def _height_axis(box: Box, ls: LevelSet) -> Optional[int]:
    xc, yc = 0.5 * (box[0] + box[2]), 0.5 * (box[1] + box[3])
    g = ls.grad(np.float64(xc), np.float64(yc))
    order = (0, 1) if abs(g[0]) >= abs(g[1]) else (1, 0)
    for axis in order:
        if ls.monotone_along(box, axis):
            return axis
    return None


def _height_rules(box: Box, ls: LevelSet, axis: int, m: int, parts) -> None:
    """Height-function rules with ``axis`` the height direction."""
    outer = 1 - axis
    o_lo, o_hi = box[outer], box[outer + 2]
    h_lo, h_hi = box[axis], box[axis + 2]
    # interface exits through the two faces normal to the height axis
    breaks = np.concatenate([[o_lo], ls.edge_roots(outer, h_lo, o_lo, o_hi),
                             ls.edge_roots(outer, h_hi, o_lo, o_hi), [o_hi]])
    breaks = np.unique(breaks)
    to_ref, wo_ref = _gauss01(m + OUTER_EXTRA)
    seg_len = np.diff(breaks)
    keep = seg_len > 0
    starts, seg_len = breaks[:-1][keep], seg_len[keep]
    to = (starts[:, None] + seg_len[:, None] * to_ref[None, :]).ravel()
    wo = (seg_len[:, None] * wo_ref[None, :]).ravel()

    f_lo = ls.value(*_axis_points(outer, to, np.full_like(to, h_lo)))
    f_hi = ls.value(*_axis_points(outer, to, np.full_like(to, h_hi)))
    crossing = f_lo * f_hi < 0
    root = np.full_like(to, np.nan)
    if np.any(crossing):
        root[crossing] = _bracketed_roots(
            ls, outer, to[crossing], np.full(crossing.sum(), h_lo), np.full(crossing.sum(), h_hi))

    # segments along the height direction: (outer coord, weight, a, b, sign)
    seg_t, seg_w, seg_a, seg_b, seg_s = [], [], [], [], []
    nc = ~crossing
    if np.any(nc):
        mid = ls.value(*_axis_points(outer, to[nc], np.full(nc.sum(), 0.5 * (h_lo + h_hi))))
        seg_t.append(to[nc]); seg_w.append(wo[nc])
        seg_a.append(np.full(nc.sum(), h_lo)); seg_b.append(np.full(nc.sum(), h_hi))
        seg_s.append(np.where(mid < 0, -1, 1))
    if np.any(crossing):
        tc, wc, rc = to[crossing], wo[crossing], root[crossing]
        s_lo = np.where(f_lo[crossing] < 0, -1, 1)
        seg_t += [tc, tc]; seg_w += [wc, wc]
        seg_a += [np.full(tc.shape, h_lo), rc]; seg_b += [rc, np.full(tc.shape, h_hi)]
        seg_s += [s_lo, -s_lo]
        # interface points
        pts = _axis_points(outer, tc, rc)
        gx, gy = ls.grad(*pts)
        gn = np.hypot(gx, gy)
        g_axis = gy if axis == 1 else gx
        parts[0].append((np.column_stack(pts), wc * gn / np.abs(g_axis),
                         np.column_stack([gx / gn, gy / gn])))

    t, w = _gauss01(m)
    T = np.concatenate(seg_t); W = np.concatenate(seg_w)
    A = np.concatenate(seg_a); B = np.concatenate(seg_b); S = np.concatenate(seg_s)
    L = B - A
    hv = (A[:, None] + L[:, None] * t[None, :]).ravel()
    tv = np.repeat(T, m)
    wv = (W[:, None] * L[:, None] * w[None, :]).ravel()
    sv = np.repeat(S, m)
    pts = np.column_stack(_axis_points(outer, tv, hv))
    for phase in (-1, 1):
        sel = (sv == phase) & (wv > 0)
        if np.any(sel):
            parts[phase].append((pts[sel], wv[sel]))
