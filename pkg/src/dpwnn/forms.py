"""Least-squares skeleton forms shared by the Helmholtz and Maxwell discretisations.

Every quantity is carried as weighted *residual rows* at the skeleton
quadrature nodes: for a field ``v`` the rows are the square-root weighted
boundary misfit and interface jumps, so that

    J(v) = sum |rows(v) - data|^2,   a(v, w) = sum rows(v) * conj(rows(w)).

Basis rows are laid out ``(faces, nodes, basis, component)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh import Mesh
from .pwbasis import DirectionAngles
from .quadrature import SkeletonQuadrature, default_order, skeleton_quadrature

# cap on complex entries held by one batch of basis rows
_CHUNK_ENTRIES = 2_000_000


class UsageError(ValueError):
    """Objects from different discretisations were combined."""


@dataclass
class Layer:
    """One trained network: per-element angles and complex activation coefficients."""

    angles: DirectionAngles
    coefficients: np.ndarray  # (N, n_basis)

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=complex)


@dataclass
class DiscreteSolution:
    """Sum of layers; the empty list is the zero function."""

    layers: list[Layer] = field(default_factory=list)

    def appended(self, layer: Layer) -> "DiscreteSolution":
        return DiscreteSolution(self.layers + [layer])

    def __len__(self):
        return len(self.layers)


@dataclass
class AssembledSystem:
    A: np.ndarray
    b: np.ndarray
    n_basis: int


@dataclass
class Rows:
    """Residual rows on boundary faces ``(Fb, Q, cb)`` and interfaces ``(Fi, Q, ci)``."""

    boundary: np.ndarray
    interior: np.ndarray

    def __add__(self, other: "Rows") -> "Rows":
        return Rows(self.boundary + other.boundary, self.interior + other.interior)

    def __sub__(self, other: "Rows") -> "Rows":
        return Rows(self.boundary - other.boundary, self.interior - other.interior)

    def sq_norm(self) -> float:
        return float(np.sum(np.abs(self.boundary) ** 2) + np.sum(np.abs(self.interior) ** 2))

    def inner(self, other: "Rows") -> complex:
        return complex(np.vdot(other.boundary, self.boundary) + np.vdot(other.interior, self.interior))

    def node_losses(self) -> np.ndarray:
        return np.concatenate([np.sum(np.abs(self.boundary) ** 2, axis=-1).ravel(),
                               np.sum(np.abs(self.interior) ** 2, axis=-1).ravel()])


def _chunks(n_faces, per_face):
    size = max(1, _CHUNK_ENTRIES // max(per_face, 1))
    for start in range(0, n_faces, size):
        yield np.arange(start, min(n_faces, start + size))


class SkeletonForm:
    """Discrete J, a, L on a mesh skeleton; subclasses supply the trace operators."""

    boundary_components: int
    interior_components: int
    dim: int

    def __init__(self, problem, mesh: Mesh, order: int | None = None):
        if mesh.dim != self.dim:
            raise UsageError(f"{type(self).__name__} needs a {self.dim}D mesh")
        self.problem = problem
        self.mesh = mesh
        self._setup_media()
        if order is None:
            order = default_order(self.max_wavenumber, mesh.h)
        self.quad: SkeletonQuadrature = skeleton_quadrature(mesh, order)
        q = self.quad
        self._sqrt_wb = np.sqrt(q.b_weights)
        self._sqrt_wi = np.sqrt(q.i_weights)
        self.data = self._data_rows()
        self._exact_rows = None

    # ------------------------------------------------------------------ hooks
    def _setup_media(self):
        raise NotImplementedError

    @property
    def max_wavenumber(self) -> float:
        raise NotImplementedError

    def n_basis(self, angles: DirectionAngles) -> int:
        return angles.n_directions

    def basis(self, angles: DirectionAngles) -> dict:
        raise NotImplementedError

    def _traces(self, basis, bsel, e, x, n, deriv):
        raise NotImplementedError

    def _boundary_rows(self, fidx, t0, t1, sw):
        raise NotImplementedError

    def _interior_rows(self, fidx, t0, t1, sw):
        raise NotImplementedError

    def _field_traces(self, values, n):
        raise NotImplementedError

    def _boundary_data(self, x, n):
        raise NotImplementedError

    def _exact_field(self, x):
        raise NotImplementedError

    def fold(self, per_basis: np.ndarray) -> np.ndarray:
        """Sum per-basis quantities onto their propagation directions."""
        return per_basis

    # -------------------------------------------------------------- row maps
    def _side_rows(self, kind, fidx, qsel, side, basis, bsel=None, deriv=False):
        """Basis rows contributed by one side of the selected faces."""
        q = self.quad
        if kind == "b":
            x = q.b_nodes[fidx][:, qsel]
            n = q.b_normals[fidx]
            e = q.b_elem[fidx]
            sw = self._sqrt_wb[fidx][:, qsel]
        else:
            x = q.i_nodes[fidx][:, qsel]
            n = q.i_normals[fidx]
            e = q.i_elem[fidx, side]
            sw = self._sqrt_wi[fidx][:, qsel]
        if bsel is None:
            bsel = e
        t0, t1, dts = self._traces(basis, bsel, e, x, n, deriv)
        if kind == "b":
            rows = self._boundary_rows(fidx, t0, t1, sw)
            drows = [self._boundary_rows(fidx, a, b, sw) for a, b in dts]
        else:
            sign = 1.0 if side == 0 else -1.0
            rows = sign * self._interior_rows(fidx, t0, t1, sw)
            drows = [sign * self._interior_rows(fidx, a, b, sw) for a, b in dts]
        return rows, drows

    def _sides(self):
        q = self.quad
        nb_faces = len(q.b_elem)
        ni_faces = len(q.i_elem)
        return (("b", nb_faces, (0,)), ("i", ni_faces, (0, 1)))

    def _chunk_size(self, nbasis, comps):
        return self.quad.nodes_per_face * nbasis * comps * (1 + self.dim)

    # ---------------------------------------------------------------- rows
    def empty_rows(self) -> Rows:
        q = self.quad
        Q = q.nodes_per_face
        return Rows(np.zeros((len(q.b_elem), Q, self.boundary_components), dtype=complex),
                    np.zeros((len(q.i_elem), Q, self.interior_components), dtype=complex))

    def _data_rows(self) -> Rows:
        q = self.quad
        rows = self.empty_rows()
        if len(q.b_elem):
            nrm = np.broadcast_to(q.b_normals[:, None, :], q.b_nodes.shape)
            g = self._boundary_data(q.b_nodes.reshape(-1, self.dim), nrm.reshape(-1, self.dim))
            g = np.asarray(g, dtype=complex).reshape(rows.boundary.shape)
            rows.boundary[...] = -self._sqrt_wb[..., None] * g
        return rows

    def layer_rows(self, layer: Layer) -> Rows:
        """Data-free residual rows of one layer."""
        self._check_layer(layer)
        basis = self.basis(layer.angles)
        nb = layer.coefficients.shape[1]
        out = self.empty_rows()
        C = layer.coefficients
        q = self.quad
        for kind, nf, sides in self._sides():
            target = out.boundary if kind == "b" else out.interior
            comps = target.shape[-1]
            for fidx in _chunks(nf, self._chunk_size(nb, comps)):
                for side in sides:
                    rows, _ = self._side_rows(kind, fidx, slice(None), side, basis)
                    e = q.b_elem[fidx] if kind == "b" else q.i_elem[fidx, side]
                    target[fidx] += np.einsum("fqbc,fb->fqc", rows, C[e])
        return out

    def solution_rows(self, solution: DiscreteSolution) -> Rows:
        out = self.empty_rows()
        for layer in solution.layers:
            out = out + self.layer_rows(layer)
        return out

    def residual_rows(self, solution: DiscreteSolution, candidate: Layer | None = None) -> Rows:
        rows = self.data + self.solution_rows(solution)
        if candidate is not None:
            rows = rows + self.layer_rows(candidate)
        return rows

    def _check_layer(self, layer: Layer):
        if layer.angles.n_elements != self.mesh.n_elements or layer.angles.dim != self.dim:
            raise UsageError("layer does not live on this mesh")
        if layer.coefficients.shape != (self.mesh.n_elements, self.n_basis(layer.angles)):
            raise UsageError(f"coefficient shape {layer.coefficients.shape} does not match the angles")

    # ------------------------------------------------------------ functionals
    def functional(self, solution: DiscreteSolution, candidate: Layer | None = None) -> float:
        return self.residual_rows(solution, candidate).sq_norm()

    def sesquilinear(self, v, w) -> complex:
        """a(v, w) for layers or discrete solutions."""
        rv = self.layer_rows(v) if isinstance(v, Layer) else self.solution_rows(v)
        rw = self.layer_rows(w) if isinstance(w, Layer) else self.solution_rows(w)
        return rv.inner(rw)

    def load(self, v) -> complex:
        """L(v): pairing of the boundary data with the trace operator of ``v``."""
        rv = self.layer_rows(v) if isinstance(v, Layer) else self.solution_rows(v)
        g = Rows(-self.data.boundary, np.zeros_like(self.data.interior))
        return g.inner(rv)

    # ------------------------------------------------------------ assembly
    def assemble(self, angles: DirectionAngles, base: Rows) -> AssembledSystem:
        """Galerkin system for the coefficients of a layer with fixed ``angles``.

        ``base`` holds the residual rows of the current iterate (data included),
        so ``b = L(psi) - a(u, psi) = -rows(psi)^H base``.
        """
        basis = self.basis(angles)
        nb = self.n_basis(angles)
        N = self.mesh.n_elements
        A = np.zeros((N * nb, N * nb), dtype=complex)
        b = np.zeros(N * nb, dtype=complex)
        q = self.quad

        def block(i, j):
            return slice(i * nb, (i + 1) * nb), slice(j * nb, (j + 1) * nb)

        for kind, nf, sides in self._sides():
            comps = self.boundary_components if kind == "b" else self.interior_components
            r0_all = base.boundary if kind == "b" else base.interior
            for fidx in _chunks(nf, self._chunk_size(nb, comps)):
                mats, elems = [], []
                for side in sides:
                    rows, _ = self._side_rows(kind, fidx, slice(None), side, basis)
                    F = rows.shape[0]
                    mats.append(rows.transpose(0, 1, 3, 2).reshape(F, -1, nb))
                    elems.append(q.b_elem[fidx] if kind == "b" else q.i_elem[fidx, side])
                r0 = r0_all[fidx].reshape(len(fidx), -1)
                for s, (B, e) in enumerate(zip(mats, elems)):
                    BH = B.conj().transpose(0, 2, 1)
                    rhs = -np.einsum("fbr,fr->fb", BH, r0)
                    diag = BH @ B
                    for f in range(len(fidx)):
                        b[e[f] * nb:(e[f] + 1) * nb] += rhs[f]
                        A[block(e[f], e[f])] += diag[f]
                    if s == 0 and len(mats) == 2:
                        cross = BH @ mats[1]
                        ej = elems[1]
                        for f in range(len(fidx)):
                            A[block(e[f], ej[f])] += cross[f]
                            A[block(ej[f], e[f])] += cross[f].conj().T
        A = 0.5 * (A + A.conj().T)
        return AssembledSystem(A, b, nb)

    # ------------------------------------------------------------ gradients
    def _node_angle_grads(self, layer: Layer, total: Rows, reducer):
        """Per-node angle gradients of the node losses, reduced per face side.

        ``reducer(kind, fidx, side, elems, g)`` receives ``g`` of shape
        (F, Q, n_angles): the derivative of each node loss w.r.t. the angles
        of element ``elems[f]``.
        """
        basis = self.basis(layer.angles)
        nb = layer.coefficients.shape[1]
        C = layer.coefficients
        q = self.quad
        for kind, nf, sides in self._sides():
            comps = self.boundary_components if kind == "b" else self.interior_components
            r_all = total.boundary if kind == "b" else total.interior
            for fidx in _chunks(nf, self._chunk_size(nb, comps) * (self.dim - 1)):
                r = r_all[fidx]
                for side in sides:
                    _, drows = self._side_rows(kind, fidx, slice(None), side, basis, deriv=True)
                    e = q.b_elem[fidx] if kind == "b" else q.i_elem[fidx, side]
                    per_kind = []
                    for dr in drows:
                        gb = 2.0 * np.real(np.einsum("fqc,fqbc->fqb", r.conj(), dr) * C[e][:, None, :])
                        per_kind.append(self.fold(gb))
                    F, Q = r.shape[:2]
                    flat = [g.reshape(F * Q, -1) for g in per_kind]
                    g = layer.angles.reduce_direction_gradient(flat).reshape(F, Q, -1)
                    reducer(kind, fidx, side, e, g)

    def grad_angles(self, solution_or_base, candidate: Layer) -> np.ndarray:
        """Gradient of J(u + candidate) w.r.t. the candidate's angles (flattened)."""
        base = solution_or_base if isinstance(solution_or_base, Rows) else \
            self.data + self.solution_rows(solution_or_base)
        total = base + self.layer_rows(candidate)
        N = self.mesh.n_elements
        grad = np.zeros((N, candidate.angles.n_angles))

        def accumulate(kind, fidx, side, e, g):
            np.add.at(grad, e, g.sum(axis=1))

        self._node_angle_grads(candidate, total, accumulate)
        return grad.ravel()

    def max_node_grad_sq(self, base: Rows, candidate: Layer) -> np.ndarray:
        """Componentwise max over nodes of the squared node-loss gradients."""
        total = base + self.layer_rows(candidate)
        N = self.mesh.n_elements
        out = np.zeros((N, candidate.angles.n_angles))

        def accumulate(kind, fidx, side, e, g):
            np.maximum.at(out, e, np.max(g * g, axis=1))

        self._node_angle_grads(candidate, total, accumulate)
        return out.ravel()

    # -------------------------------------------------- single-node access
    def node_table(self):
        """(kind, face, node) of every training node, boundary nodes first."""
        q = self.quad
        Q = q.nodes_per_face
        kinds = np.concatenate([np.zeros(q.b_weights.size, int), np.ones(q.i_weights.size, int)])
        faces = np.concatenate([np.repeat(np.arange(len(q.b_elem)), Q), np.repeat(np.arange(len(q.i_elem)), Q)])
        nodes = np.concatenate([np.tile(np.arange(Q), len(q.b_elem)), np.tile(np.arange(Q), len(q.i_elem))])
        return kinds, faces, nodes

    def node_elements(self, kind: int, face: int) -> tuple[int, ...]:
        q = self.quad
        return (int(q.b_elem[face]),) if kind == 0 else tuple(int(v) for v in q.i_elem[face])

    def node_loss_grad(self, template: DirectionAngles, phi: np.ndarray, coefficients: np.ndarray,
                       base: Rows, kind: int, face: int, node: int):
        """Loss of one quadrature node and its gradient w.r.t. the adjacent angles.

        Returns ``(loss, element_ids, grad)`` with ``grad`` of shape
        (len(element_ids), n_angles).
        """
        elems = self.node_elements(kind, face)
        na = template.n_angles
        rows_phi = phi.reshape(-1, na)[list(elems)]
        sub = template.subset(list(elems)).with_flat(rows_phi)
        basis = self.basis(sub)
        fidx = np.array([face])
        qsel = slice(node, node + 1)
        kname = "b" if kind == 0 else "i"
        r = (base.boundary if kind == 0 else base.interior)[face, node].copy()
        side_data = []
        for side, e in enumerate(elems):
            rows, drows = self._side_rows(kname, fidx, qsel, side, basis,
                                          bsel=np.array([side]), deriv=True)
            c = coefficients[e]
            r += c @ rows[0, 0]
            side_data.append((drows, c))
        loss = float(np.sum(np.abs(r) ** 2))
        grads = []
        for side, (drows, c) in enumerate(side_data):
            per_kind = [self.fold(2.0 * np.real((dr[0, 0] @ r.conj()) * c))[None] for dr in drows]
            grads.append(sub.subset([side]).reduce_direction_gradient(per_kind)[0])
        return loss, elems, np.array(grads)

    # ------------------------------------------------------------- errors
    def field_rows(self, side_values) -> Rows:
        """Data-free rows of a (possibly discontinuous) field.

        ``side_values(x, normal, side_of)`` returns the field evaluated from the
        element ``side_of`` at points ``x``.
        """
        q = self.quad
        out = self.empty_rows()
        Q = q.nodes_per_face
        if len(q.b_elem):
            x = q.b_nodes.reshape(-1, self.dim)
            n = np.repeat(q.b_normals, Q, axis=0)
            own = np.repeat(q.b_elem, Q)
            vals = side_values(x, n, own)
            t0, t1 = self._field_traces(vals, n)
            shape = (len(q.b_elem), Q, 1, -1)
            rows = self._boundary_rows(np.arange(len(q.b_elem)), t0.reshape(shape), t1.reshape(shape),
                                       self._sqrt_wb)
            out.boundary[...] = rows[:, :, 0, :]
        if len(q.i_elem):
            x = q.i_nodes.reshape(-1, self.dim)
            n = np.repeat(q.i_normals, Q, axis=0)
            shape = (len(q.i_elem), Q, 1, -1)
            for side, sign in ((0, 1.0), (1, -1.0)):
                own = np.repeat(q.i_elem[:, side], Q)
                vals = side_values(x, n, own)
                t0, t1 = self._field_traces(vals, n)
                rows = self._interior_rows(np.arange(len(q.i_elem)), t0.reshape(shape), t1.reshape(shape),
                                           self._sqrt_wi)
                out.interior[...] += sign * rows[:, :, 0, :]
        return out

    def exact_rows(self) -> Rows:
        if self._exact_rows is None:
            if getattr(self.problem, "exact", None) is None:
                raise UsageError(f"problem {self.problem.name!r} has no exact solution; use a reference solution")
            self._exact_rows = self.field_rows(lambda x, n, own: self._exact_field(x))
        return self._exact_rows

    def energy_norm(self, rows: Rows) -> float:
        return float(np.sqrt(rows.sq_norm()))

    def energy_error(self, solution: DiscreteSolution, reference: Rows | None = None) -> float:
        """|||u - solution||| with u the exact solution, or a reference given by its rows."""
        ref = self.exact_rows() if reference is None else reference
        return self.energy_norm(ref - self.solution_rows(solution))
