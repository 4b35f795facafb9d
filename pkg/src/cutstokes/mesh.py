"""Uniform background quad mesh of [-1, 1]^2 and the unfitted active sets."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .geometry import ElementCutClass, GeometryError, LevelSet, classify_element

DOMAIN = (-1.0, 1.0)
# facet orientations: neighbours differ in x (vertical facet) or in y
FACET_X, FACET_Y = 0, 1


@dataclass(frozen=True)
class BackgroundMesh:
    """n x n squares, row-major element and vertex numbering."""

    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"mesh needs n >= 2, got {self.n}")

    @property
    def h(self) -> float:
        return (DOMAIN[1] - DOMAIN[0]) / self.n

    @property
    def num_elements(self) -> int:
        return self.n * self.n

    @property
    def num_vertices(self) -> int:
        return (self.n + 1) ** 2

    @cached_property
    def vertices(self) -> np.ndarray:
        t = np.linspace(DOMAIN[0], DOMAIN[1], self.n + 1)
        X, Y = np.meshgrid(t, t, indexing="xy")
        return np.column_stack([X.ravel(), Y.ravel()])

    @cached_property
    def element_ij(self) -> np.ndarray:
        """(ix, iy) index of every element."""
        e = np.arange(self.num_elements)
        return np.column_stack([e % self.n, e // self.n])

    @cached_property
    def element_boxes(self) -> np.ndarray:
        ij = self.element_ij
        lo = DOMAIN[0] + self.h * ij
        return np.column_stack([lo, lo + self.h])

    @cached_property
    def elements(self) -> np.ndarray:
        """Corner vertex ids, counter-clockwise from the lower left."""
        ix, iy = self.element_ij.T
        v = iy * (self.n + 1) + ix
        return np.column_stack([v, v + 1, v + self.n + 2, v + self.n + 1])

    @cached_property
    def h_T(self) -> np.ndarray:
        return np.full(self.num_elements, self.h)

    @cached_property
    def interior_facets(self) -> np.ndarray:
        """(num_facets, 2) neighbour pairs, left/below element first."""
        n = self.n
        ix, iy = np.meshgrid(np.arange(n - 1), np.arange(n), indexing="xy")
        e = (iy * n + ix).ravel()
        xpairs = np.column_stack([e, e + 1])
        ix, iy = np.meshgrid(np.arange(n), np.arange(n - 1), indexing="xy")
        e = (iy * n + ix).ravel()
        ypairs = np.column_stack([e, e + n])
        return np.vstack([xpairs, ypairs])

    @cached_property
    def facet_orientation(self) -> np.ndarray:
        m = self.n * (self.n - 1)
        return np.concatenate([np.full(m, FACET_X), np.full(m, FACET_Y)])

    @cached_property
    def h_e(self) -> np.ndarray:
        return np.full(len(self.interior_facets), self.h)

    @cached_property
    def boundary_elements(self) -> np.ndarray:
        ix, iy = self.element_ij.T
        on = (ix == 0) | (iy == 0) | (ix == self.n - 1) | (iy == self.n - 1)
        return np.nonzero(on)[0]

    def box(self, e: int) -> tuple[float, float, float, float]:
        return tuple(float(v) for v in self.element_boxes[e])


def build_mesh(n: int) -> BackgroundMesh:
    if n < 2:
        raise ValueError(f"mesh needs n >= 2, got {n}")
    return BackgroundMesh(int(n))


@dataclass
class CutTopology:
    """Element classes and the active element/facet sets of both phases."""

    mesh: BackgroundMesh
    levelset: LevelSet
    classes: np.ndarray
    minus_elements: np.ndarray = field(init=False)
    plus_elements: np.ndarray = field(init=False)
    cut_elements: np.ndarray = field(init=False)
    ghost_facets_minus: np.ndarray = field(init=False)
    ghost_facets_plus: np.ndarray = field(init=False)

    def __post_init__(self):
        c = self.classes
        self.cut_elements = np.nonzero(c == ElementCutClass.CUT)[0]
        self.minus_elements = np.nonzero(c != ElementCutClass.INSIDE_PLUS)[0]
        self.plus_elements = np.nonzero(c != ElementCutClass.INSIDE_MINUS)[0]
        pairs = self.mesh.interior_facets
        cut = c[pairs] == ElementCutClass.CUT
        touches = cut[:, 0] | cut[:, 1]
        in_minus = np.all(c[pairs] != ElementCutClass.INSIDE_PLUS, axis=1)
        in_plus = np.all(c[pairs] != ElementCutClass.INSIDE_MINUS, axis=1)
        self.ghost_facets_minus = np.nonzero(touches & in_minus)[0]
        self.ghost_facets_plus = np.nonzero(touches & in_plus)[0]

    def active(self, phase: int) -> np.ndarray:
        return self.minus_elements if phase < 0 else self.plus_elements

    def ghost_facets(self, phase: int) -> np.ndarray:
        return self.ghost_facets_minus if phase < 0 else self.ghost_facets_plus

    def patch(self, facet: int) -> tuple[int, int]:
        a, b = self.mesh.interior_facets[facet]
        return int(a), int(b)


def _classify_all(mesh: BackgroundMesh, ls: LevelSet) -> np.ndarray:
    return np.array([classify_element(mesh.box(e), ls) for e in range(mesh.num_elements)],
                    dtype=np.int8)


def _degenerate(mesh: BackgroundMesh, ls: LevelSet, classes: np.ndarray) -> bool:
    """Interface through a vertex or tangent to an element box."""
    tol = 1e-12 * mesh.h
    v = ls.value(mesh.vertices[:, 0], mesh.vertices[:, 1])
    if np.any(np.abs(v) <= tol):
        return True
    for e in np.nonzero(classes == ElementCutClass.CUT)[0]:
        lo, hi = ls.box_range(mesh.box(e))
        if abs(lo) <= tol or abs(hi) <= tol:
            return True
    return False


def build_cut_topology(mesh: BackgroundMesh, ls: LevelSet) -> CutTopology:
    classes = _classify_all(mesh, ls)
    if _degenerate(mesh, ls, classes):
        warnings.warn("degenerate cut configuration; shifting the level set by 1e-12",
                      RuntimeWarning, stacklevel=2)
        ls = ls.perturbed(1e-12)
        classes = _classify_all(mesh, ls)
    # the interior phase must stay away from the outer boundary
    lo, hi = DOMAIN
    for edge in ((lo, lo, hi, lo), (lo, hi, hi, hi), (lo, lo, lo, hi), (hi, lo, hi, hi)):
        if ls.box_range(edge)[0] <= 0.0:
            raise GeometryError("interface reaches the domain boundary")
    return CutTopology(mesh, ls, classes)
