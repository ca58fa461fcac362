"""Gauss-Legendre rules on skeleton faces and a closed-form plane-wave face integral."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mesh import ConfigurationError, Face, Mesh

MAX_ORDER = 64


def _legendre_and_derivative(n, x):
    p0, p1 = np.ones_like(x), x.copy()
    for k in range(2, n + 1):
        p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
    return p1, n * (x * p1 - p0) / (x * x - 1)


def gauss_legendre_1d(order: int):
    """Nodes and weights of the ``order``-point rule on [-1, 1].

    numpy's nodes are polished by Newton steps in extended precision and the
    weights recomputed there; numpy's own weights are only good to a few
    hundred ulps at high order, which shows up in cancelling oscillatory sums.
    """
    if not (1 <= int(order) <= MAX_ORDER) or int(order) != order:
        raise ConfigurationError(f"quadrature order must be an integer in [1, {MAX_ORDER}], got {order}")
    n = int(order)
    x, w = np.polynomial.legendre.leggauss(n)
    if n == 1:
        return x, w
    xl = x.astype(np.longdouble)
    for _ in range(2):
        p, dp = _legendre_and_derivative(n, xl)
        xl = xl - p / dp
    _, dp = _legendre_and_derivative(n, xl)
    wl = 2 / ((1 - xl * xl) * dp * dp)
    return xl.astype(float), wl.astype(float)


def default_order(wavenumber: float, h: float) -> int:
    """Points per face direction for plane-wave products with |k| <= ``wavenumber``.

    The product of two traces oscillates with half-phase up to ``|k| h`` across a
    face; Gauss-Legendre reaches round-off once the point count exceeds that
    half-phase by a handful of points.
    """
    return min(MAX_ORDER, max(20, math.ceil(abs(wavenumber) * h) + 10))


@dataclass(frozen=True)
class FaceQuadrature:
    """Nodes and weights on one face.

    ``offsets`` are the nodes relative to the face ``center``, computed directly
    rather than by subtraction; evaluating oscillatory integrands in these
    local coordinates avoids the phase rounding of large ``k . x``.
    """

    face: int
    nodes: np.ndarray  # (Q, d)
    weights: np.ndarray  # (Q,)
    center: np.ndarray | None = None  # (d,)
    offsets: np.ndarray | None = None  # (Q, d)


def face_rule(mesh: Mesh, face: Face, order: int) -> FaceQuadrature:
    x, w = gauss_legendre_1d(order)
    d = mesh.dim
    free = [a for a in range(d) if a != face.axis]
    center = 0.5 * (np.asarray(face.lo, dtype=float) + np.asarray(face.hi, dtype=float))
    center[face.axis] = face.position
    axes_offsets, axes_weights = [], []
    for a in free:
        half = 0.5 * (face.hi[a] - face.lo[a])
        axes_offsets.append(half * x)
        axes_weights.append(half * w)
    grids = np.meshgrid(*axes_offsets, indexing="ij")
    wgrid = np.prod(np.meshgrid(*axes_weights, indexing="ij"), axis=0)
    offsets = np.zeros((wgrid.size, d))
    for a, g in zip(free, grids):
        offsets[:, a] = g.ravel()
    return FaceQuadrature(face.index, center + offsets, wgrid.ravel(), center, offsets)


def _segment_integral(beta, a, b):
    # int_a^b exp(i beta t) dt, written as a midpoint phase times a sinc to avoid cancellation
    beta = np.asarray(beta, dtype=complex)
    width = b - a
    half = 0.5 * beta * width
    small = np.abs(beta * width) < 1e-8
    safe = np.where(small, 1.0, half)
    sinc = np.where(small, 1.0, np.sin(safe) / safe)
    return np.exp(1j * beta * 0.5 * (a + b)) * width * sinc


def plane_wave_face_integral_oracle(face: Face, k1, k2) -> complex:
    """Exact value of the face integral of exp(i k1.x) * conj(exp(i k2.x))."""
    k1 = np.asarray(k1, dtype=complex)
    k2 = np.asarray(k2, dtype=complex)
    beta = k1 - np.conj(k2)
    val = np.exp(1j * beta[face.axis] * face.position)
    for a in range(len(face.lo)):
        if a != face.axis:
            val = val * _segment_integral(beta[a], face.lo[a], face.hi[a])
    return complex(val)


@dataclass
class SkeletonQuadrature:
    """Quadrature nodes of every skeleton face, stacked face by face.

    Boundary arrays are indexed ``[face, node]`` over ``mesh.boundary_faces``
    and interior arrays over ``mesh.interior_faces``.  The concatenation of
    all nodes is the training set of the angle optimizer.
    """

    mesh: Mesh
    order: int
    b_nodes: np.ndarray  # (Fb, Q, d)
    b_weights: np.ndarray  # (Fb, Q)
    b_normals: np.ndarray  # (Fb, d)
    b_elem: np.ndarray  # (Fb,)
    i_nodes: np.ndarray  # (Fi, Q, d)
    i_weights: np.ndarray  # (Fi, Q)
    i_normals: np.ndarray  # (Fi, d)
    i_elem: np.ndarray  # (Fi, 2)

    @property
    def nodes_per_face(self) -> int:
        return self.b_weights.shape[1]

    @property
    def n_nodes(self) -> int:
        return self.b_weights.size + self.i_weights.size

    def rules(self) -> list[FaceQuadrature]:
        out = [FaceQuadrature(f, self.b_nodes[f], self.b_weights[f]) for f in range(len(self.b_elem))]
        out += [FaceQuadrature(f, self.i_nodes[f], self.i_weights[f]) for f in range(len(self.i_elem))]
        return out


def skeleton_quadrature(mesh: Mesh, order: int) -> SkeletonQuadrature:
    d = mesh.dim

    def stack(faces):
        rules = [face_rule(mesh, f, order) for f in faces]
        q = order ** (d - 1)
        nodes = np.array([r.nodes for r in rules]).reshape(len(faces), q, d)
        weights = np.array([r.weights for r in rules]).reshape(len(faces), q)
        normals = np.array([f.normal for f in faces], dtype=float).reshape(len(faces), d)
        return nodes, weights, normals

    bn, bw, bnrm = stack(mesh.boundary_faces)
    inn, iw, inrm = stack(mesh.interior_faces)
    belem = np.array([f.elements[0] for f in mesh.boundary_faces], dtype=int)
    ielem = np.array([f.elements for f in mesh.interior_faces], dtype=int).reshape(-1, 2)
    return SkeletonQuadrature(mesh, order, bn, bw, bnrm, belem, inn, iw, inrm, ielem)
