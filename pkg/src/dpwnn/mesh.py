"""Uniform Cartesian box meshes and their skeleton (interfaces and boundary faces)."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np


class ConfigurationError(ValueError):
    """Invalid user-supplied configuration (mesh sizes, quadrature orders, ...)."""


@dataclass(frozen=True)
class BoxDomain:
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != len(hi) or len(lo) not in (2, 3):
            raise ConfigurationError("box domain must be 2D or 3D with matching bounds")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ConfigurationError(f"box domain needs lo < hi componentwise, got {lo}, {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.hi, self.lo)))

    @property
    def surface(self) -> float:
        ext = np.subtract(self.hi, self.lo)
        return float(sum(2 * np.prod(np.delete(ext, a)) for a in range(self.dim)))

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= np.asarray(self.lo) - tol) and np.all(x <= np.asarray(self.hi) + tol))


@dataclass(frozen=True)
class Element:
    index: int
    multi_index: tuple[int, ...]
    bounds: BoxDomain

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.bounds.lo) + np.asarray(self.bounds.hi))


@dataclass(frozen=True)
class Face:
    """An axis-aligned skeleton face.

    Interior faces carry ``elements = (k, j)`` with ``k < j`` and the normal
    pointing from ``k`` into ``j``.  Boundary faces carry ``elements = (k,)``
    and the outward normal of ``k``.
    """

    index: int
    elements: tuple[int, ...]
    axis: int
    position: float
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    normal: tuple[float, ...]

    @property
    def is_boundary(self) -> bool:
        return len(self.elements) == 1

    @property
    def measure(self) -> float:
        ext = [b - a for i, (a, b) in enumerate(zip(self.lo, self.hi)) if i != self.axis]
        return float(np.prod(ext))


@dataclass(frozen=True)
class Mesh:
    domain: BoxDomain
    cells_per_axis: tuple[int, ...]
    elements: list[Element] = field(repr=False)
    interior_faces: list[Face] = field(repr=False)
    boundary_faces: list[Face] = field(repr=False)
    h: float

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def centers(self) -> np.ndarray:
        return np.array([e.center for e in self.elements])

    def locate(self, points, side_normal=None) -> np.ndarray:
        """Element indices containing ``points``.

        Points on a face are attributed to the element on the side opposite
        ``side_normal`` (when given), matching one-sided trace evaluation.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if side_normal is not None:
            pts = pts - 0.25 * self.h * np.asarray(side_normal, dtype=float)
        rel = (pts - np.asarray(self.domain.lo)) / self.h
        idx = np.floor(rel).astype(int)
        idx = np.clip(idx, 0, np.asarray(self.cells_per_axis) - 1)
        strides = np.cumprod((1,) + self.cells_per_axis[:-1])
        return idx @ strides


def _strides(cells):
    # row-major with the first axis (x) varying fastest
    return tuple(int(s) for s in np.cumprod((1,) + tuple(cells[:-1])))


def build_uniform_mesh(domain: BoxDomain, cells_per_axis) -> Mesh:
    if np.isscalar(cells_per_axis):
        cells_per_axis = (int(cells_per_axis),) * domain.dim
    cells = tuple(int(c) for c in cells_per_axis)
    if len(cells) != domain.dim:
        raise ConfigurationError(f"cells_per_axis needs {domain.dim} entries, got {cells}")
    if any(c < 1 for c in cells):
        raise ConfigurationError(f"cell counts must be >= 1, got {cells}")
    lo = np.asarray(domain.lo)
    widths = (np.asarray(domain.hi) - lo) / np.asarray(cells)
    if not np.allclose(widths, widths[0], rtol=1e-12, atol=0.0):
        raise ConfigurationError(f"non-uniform meshwidth {widths.tolist()}; only uniform meshes are supported")
    h = float(widths[0])
    d = domain.dim
    strides = _strides(cells)

    elements = []
    for multi in itertools.product(*(range(c) for c in reversed(cells))):
        mi = tuple(reversed(multi))
        elo = lo + np.asarray(mi) * h
        ehi = lo + (np.asarray(mi) + 1) * h
        # last cell snaps to the domain bound so faces coincide exactly
        ehi = np.where(np.asarray(mi) + 1 == np.asarray(cells), np.asarray(domain.hi), ehi)
        index = int(np.dot(mi, strides))
        elements.append(Element(index, mi, BoxDomain(tuple(elo), tuple(ehi))))
    elements.sort(key=lambda e: e.index)

    interior, boundary = [], []
    for e in elements:
        for axis in range(d):
            unit = tuple(1.0 if a == axis else 0.0 for a in range(d))
            flo, fhi = list(e.bounds.lo), list(e.bounds.hi)
            # upper face: interior if a neighbour exists, else boundary
            pos = e.bounds.hi[axis]
            up_lo, up_hi = list(flo), list(fhi)
            up_lo[axis] = up_hi[axis] = pos
            if e.multi_index[axis] + 1 < cells[axis]:
                j = e.index + strides[axis]
                interior.append(Face(-1, (e.index, j), axis, pos, tuple(up_lo), tuple(up_hi), unit))
            else:
                boundary.append(Face(-1, (e.index,), axis, pos, tuple(up_lo), tuple(up_hi), unit))
            if e.multi_index[axis] == 0:
                pos = e.bounds.lo[axis]
                lo_lo, lo_hi = list(flo), list(fhi)
                lo_lo[axis] = lo_hi[axis] = pos
                neg = tuple(-u for u in unit)
                boundary.append(Face(-1, (e.index,), axis, pos, tuple(lo_lo), tuple(lo_hi), neg))
    interior = [Face(i, f.elements, f.axis, f.position, f.lo, f.hi, f.normal) for i, f in enumerate(interior)]
    boundary = [Face(i, f.elements, f.axis, f.position, f.lo, f.hi, f.normal) for i, f in enumerate(boundary)]
    return Mesh(domain, cells, elements, interior, boundary, h)


def face_geometry(face: Face):
    """Corner points, unit normal and measure of a face."""
    free = [a for a in range(len(face.lo)) if a != face.axis]
    corners = []
    for choice in itertools.product((0, 1), repeat=len(free)):
        p = list(face.lo)
        for a, c in zip(free, choice):
            p[a] = face.hi[a] if c else face.lo[a]
        corners.append(p)
    return np.array(corners), np.asarray(face.normal, dtype=float), face.measure
