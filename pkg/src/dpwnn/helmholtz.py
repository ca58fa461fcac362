"""Plane-wave least-squares form for the Helmholtz equation with impedance boundary.

Boundary rows are ``sqrt(w) ((d/dn + i omega_k) v - g)``; each interface
contributes ``sqrt(w alpha) (v_k - v_j)`` and ``sqrt(w beta) (dv_k/dn_k + dv_j/dn_j)``.
Every unordered interface pair is counted once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forms import (AssembledSystem, DiscreteSolution, Layer, Rows,  # noqa: F401
                    SkeletonForm, UsageError)
from .mesh import Mesh
from .pwbasis import DirectionAngles


@dataclass(frozen=True)
class HelmholtzMedia:
    omega: np.ndarray  # per element
    alpha: np.ndarray  # per interior face
    beta: float


def helmholtz_media(problem, mesh: Mesh) -> HelmholtzMedia:
    omega = np.asarray(problem.omega_at(mesh.centers), dtype=float).reshape(mesh.n_elements)
    if np.any(omega <= 0):
        raise ValueError("wave numbers must be positive")
    pairs = np.array([f.elements for f in mesh.interior_faces], dtype=int).reshape(-1, 2)
    alpha = omega[pairs[:, 0]] * omega[pairs[:, 1]] if len(pairs) else np.zeros(0)
    return HelmholtzMedia(omega, alpha, float(problem.beta))


class HelmholtzForm(SkeletonForm):
    boundary_components = 1
    interior_components = 2

    def __init__(self, problem, mesh: Mesh, order: int | None = None):
        self.dim = problem.dim
        super().__init__(problem, mesh, order)

    def _setup_media(self):
        self.media = helmholtz_media(self.problem, self.mesh)
        self._sqrt_alpha = np.sqrt(self.media.alpha)
        self._sqrt_beta = np.sqrt(self.media.beta)

    @property
    def max_wavenumber(self) -> float:
        return float(np.max(self.media.omega))

    def basis(self, angles: DirectionAngles) -> dict:
        return {"D": angles.directions(), "T": angles.tangents()}

    def _traces(self, basis, bsel, e, x, n, deriv):
        k = self.media.omega[e][:, None, None]
        D = basis["D"][bsel]
        E = np.exp(1j * k * np.einsum("fqd,fnd->fqn", x, D))
        dn = np.einsum("fnd,fd->fn", D, n)[:, None, :]
        t0 = E[..., None]
        t1 = (1j * k * dn * E)[..., None]
        dts = []
        if deriv:
            for T in basis["T"]:
                Tb = T[bsel]
                tx = np.einsum("fqd,fnd->fqn", x, Tb)
                tn = np.einsum("fnd,fd->fn", Tb, n)[:, None, :]
                dE = 1j * k * tx * E
                dts.append((dE[..., None], (1j * k * (tn * E + dn * dE))[..., None]))
        return t0, t1, dts

    def _boundary_rows(self, fidx, t0, t1, sw):
        k = self.media.omega[self.quad.b_elem[fidx]][:, None, None, None]
        return sw[..., None, None] * (t1 + 1j * k * t0)

    def _interior_rows(self, fidx, t0, t1, sw):
        sa = self._sqrt_alpha[fidx][:, None, None, None]
        s = sw[..., None, None]
        return np.concatenate([sa * s * t0, self._sqrt_beta * s * t1], axis=-1)

    def _field_traces(self, values, n):
        u, grad = values
        return np.asarray(u)[:, None], np.einsum("pd,pd->p", grad, n)[:, None]

    def _boundary_data(self, x, n):
        return self.problem.g(x, n)

    def _exact_field(self, x):
        return self.problem.exact(x)

    def evaluate(self, solution: DiscreteSolution, x, elements=None):
        """Value and gradient of ``solution`` at points ``x`` (P, d).

        ``elements`` selects the element whose expansion is used; by default
        the element containing each point.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if elements is None:
            elements = self.mesh.locate(x)
        elements = np.asarray(elements, dtype=int)
        k = self.media.omega[elements][:, None]
        val = np.zeros(len(x), dtype=complex)
        grad = np.zeros(x.shape, dtype=complex)
        for layer in solution.layers:
            D = layer.angles.directions()[elements]  # (P, n, d)
            E = np.exp(1j * k * np.einsum("pd,pnd->pn", x, D)) * layer.coefficients[elements]
            val += E.sum(axis=1)
            grad += 1j * k * np.einsum("pn,pnd->pd", E, D)
        return val, grad


# Functional interface -------------------------------------------------------

def functional_J(form: SkeletonForm, solution: DiscreteSolution, candidate: Layer | None = None) -> float:
    return form.functional(solution, candidate)


def sesquilinear_a(form: SkeletonForm, v, w) -> complex:
    return form.sesquilinear(v, w)


def assemble_system(form: SkeletonForm, solution: DiscreteSolution, angles: DirectionAngles) -> AssembledSystem:
    return form.assemble(angles, form.residual_rows(solution))


def grad_J_angles(form: SkeletonForm, solution: DiscreteSolution, candidate: Layer) -> np.ndarray:
    return form.grad_angles(solution, candidate)


def energy_error(form: SkeletonForm, solution: DiscreteSolution, reference: Rows | None = None) -> float:
    return form.energy_error(solution, reference)


def single_basis_layer(form: SkeletonForm, angles: DirectionAngles, element: int, index: int) -> Layer:
    """Layer holding the single basis function ``(element, index)``."""
    c = np.zeros((form.mesh.n_elements, form.n_basis(angles)), dtype=complex)
    c[element, index] = 1.0
    return Layer(angles, c)


__all__ = ["HelmholtzForm", "HelmholtzMedia", "helmholtz_media", "functional_J", "sesquilinear_a",
           "assemble_system", "grad_J_angles", "energy_error", "single_basis_layer",
           "Layer", "DiscreteSolution", "AssembledSystem", "UsageError"]
