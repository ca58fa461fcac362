"""Vector plane waves and the least-squares form for time-harmonic Maxwell equations.

Each propagation direction ``d`` carries two polarizations ``g`` and
``g x d``; the basis fields ``sqrt(mu) f exp(i kappa d.x)`` solve
``curl curl E = kappa^2 E`` inside every element.  Coefficients of a layer are
ordered ``[g-slots (n), (g x d)-slots (n)]`` per element.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forms import AssembledSystem, DiscreteSolution, Layer, SkeletonForm
from .mesh import Mesh
from .pwbasis import DirectionAngles

# |b| beyond this uses the Gram-Schmidt fallback polarization
POLE_TOL = 1e-8
FD_STEP = 1e-7


def _cross(u, v):
    # np.cross is slow on small broadcast operands; spell out the components
    if u.ndim == 1 and v.ndim == 1:
        u0, u1, u2 = u.tolist()
        v0, v1, v2 = v.tolist()
        return np.array([u1 * v2 - u2 * v1, u2 * v0 - u0 * v2, u0 * v1 - u1 * v0])
    u0, u1, u2 = u[..., 0], u[..., 1], u[..., 2]
    v0, v1, v2 = v[..., 0], v[..., 1], v[..., 2]
    return np.stack([u1 * v2 - u2 * v1, u2 * v0 - u0 * v2, u0 * v1 - u1 * v0], axis=-1)


@dataclass(frozen=True)
class Polarization:
    d: np.ndarray
    g: np.ndarray
    f_perp: np.ndarray


def _smooth_g(d):
    a, b, c = d[..., 0], d[..., 1], d[..., 2]
    s = np.sqrt(np.maximum(1.0 - b * b, 0.0))
    s = np.where(s == 0, 1.0, s)
    return np.stack([a * b / s, -s, b * c / s], axis=-1)


def _fallback_g(d):
    # orthonormalise the coordinate axis least aligned with d
    axis = np.argmin(np.abs(d), axis=-1)
    e = np.zeros_like(d)
    np.put_along_axis(e, axis[..., None], 1.0, axis=-1)
    g = e - np.sum(e * d, axis=-1, keepdims=True) * d
    return g / np.linalg.norm(g, axis=-1, keepdims=True)


def _singular(d):
    return np.abs(d[..., 1]) > 1.0 - POLE_TOL


def polarization_vectors(d):
    """Polarization ``g`` for an array of unit directions (..., 3)."""
    d = np.asarray(d, dtype=float)
    g = _smooth_g(d)
    bad = _singular(d)
    if np.any(bad):
        g[bad] = _fallback_g(d[bad])
    return g


def polarization_from_direction(d) -> Polarization:
    d = np.asarray(d, dtype=float)
    if abs(np.linalg.norm(d) - 1.0) > 1e-12:
        raise ValueError("direction must have unit length")
    g = polarization_vectors(d[None])[0]
    return Polarization(d.copy(), g, _cross(g, d))


def polarization_derivative(d, t):
    """Directional derivative of ``g(d)`` along the tangent ``t`` (both (..., 3))."""
    d = np.asarray(d, dtype=float)
    t = np.asarray(t, dtype=float)
    a, b, c = d[..., 0], d[..., 1], d[..., 2]
    s2 = np.maximum(1.0 - b * b, 0.0)
    s = np.where(s2 == 0, 1.0, np.sqrt(s2))
    s3 = s ** 3
    ta, tb, tc = t[..., 0], t[..., 1], t[..., 2]
    dg = np.stack([b / s * ta + a / s3 * tb,
                   b / s * tb,
                   c / s3 * tb + b / s * tc], axis=-1)
    bad = _singular(d)
    if np.any(bad):
        dp, dm = d[bad] + FD_STEP * t[bad], d[bad] - FD_STEP * t[bad]
        dp /= np.linalg.norm(dp, axis=-1, keepdims=True)
        dm /= np.linalg.norm(dm, axis=-1, keepdims=True)
        dg[bad] = (_fallback_g(dp) - _fallback_g(dm)) / (2 * FD_STEP)
    return dg


def eval_vector_basis(pol: Polarization, kappa: complex, slot: int, x, mu: float = 1.0):
    """Field and curl of one vector plane wave at points ``x`` (P, 3).

    ``slot`` 0 uses ``g``, slot 1 uses ``g x d``.
    """
    f = pol.g if slot == 0 else pol.f_perp
    x = np.atleast_2d(np.asarray(x, dtype=float))
    e = np.sqrt(mu) * np.exp(1j * kappa * (x @ pol.d))
    return e[:, None] * f, 1j * kappa * e[:, None] * _cross(pol.d, f)


@dataclass(frozen=True)
class MaxwellMedia:
    omega: float
    mu: float
    eps: np.ndarray  # complex, per element
    sigma: float
    rho1: float
    rho2: float

    @property
    def kappa(self) -> np.ndarray:
        return self.omega * np.sqrt(self.mu * self.eps.astype(complex))


def maxwell_media(problem, mesh: Mesh) -> MaxwellMedia:
    eps = np.asarray(problem.eps_at(mesh.centers), dtype=complex).reshape(mesh.n_elements)
    return MaxwellMedia(float(problem.omega), float(problem.mu), eps, float(problem.sigma),
                        float(problem.rho1), float(problem.rho2))


class MaxwellForm(SkeletonForm):
    dim = 3
    boundary_components = 3
    interior_components = 6

    def _setup_media(self):
        self.media = maxwell_media(self.problem, self.mesh)
        self._kappa = self.media.kappa
        self._iwm = 1j * self.media.omega * self.media.mu
        self._sqrt_mu = np.sqrt(self.media.mu)

    @property
    def max_wavenumber(self) -> float:
        return float(np.max(np.abs(self._kappa)))

    def n_basis(self, angles: DirectionAngles) -> int:
        return 2 * angles.n_directions

    def basis(self, angles: DirectionAngles) -> dict:
        D = angles.directions()
        T = angles.tangents()
        G = polarization_vectors(D)
        P = _cross(G, D)
        dF = []
        for t in T:
            dG = polarization_derivative(D, t)
            dF.append(np.concatenate([dG, _cross(dG, D) + _cross(G, t)], axis=1))
        return {"D": np.concatenate([D, D], axis=1), "F": np.concatenate([G, P], axis=1),
                "T": [np.concatenate([t, t], axis=1) for t in T], "dF": dF}

    def fold(self, per_basis):
        n = per_basis.shape[-1] // 2
        return per_basis[..., :n] + per_basis[..., n:]

    def _traces(self, basis, bsel, e, x, n, deriv):
        k = self._kappa[e][:, None, None]
        D = basis["D"][bsel]
        F = basis["F"][bsel]
        ph = np.exp(1j * k * np.einsum("fqd,fnd->fqn", x, D))  # (F, Q, nb)
        sm = self._sqrt_mu
        DxF = _cross(D, F)  # (F, nb, 3)
        nn = n[:, None, None, :]
        E = sm * F[:, None] * ph[..., None]
        C = 1j * k[..., None] * sm * DxF[:, None] * ph[..., None]
        t0 = _cross(E, nn)
        t1 = _cross(C, nn)
        dts = []
        if deriv:
            for T, dF in zip(basis["T"], basis["dF"]):
                Tb, dFb = T[bsel], dF[bsel]
                dph = 1j * k * np.einsum("fqd,fnd->fqn", x, Tb) * ph
                dE = sm * (dFb[:, None] * ph[..., None] + F[:, None] * dph[..., None])
                inner = (_cross(Tb, F) + _cross(D, dFb))[:, None]
                dC = 1j * k[..., None] * sm * (inner * ph[..., None] + DxF[:, None] * dph[..., None])
                dts.append((_cross(dE, nn), _cross(dC, nn)))
        return t0, t1, dts

    def _boundary_rows(self, fidx, t0, t1, sw):
        n = self.quad.b_normals[fidx][:, None, None, :]
        return sw[..., None, None] * (-t0 + (self.media.sigma / self._iwm) * _cross(t1, n))

    def _interior_rows(self, fidx, t0, t1, sw):
        s = sw[..., None, None]
        r1 = np.sqrt(self.media.rho1)
        r2 = np.sqrt(self.media.rho2) / self._iwm
        return np.concatenate([r1 * s * t0, r2 * s * t1], axis=-1)

    def node_loss_grad(self, template, phi, coefficients, base, kind, face, node):
        # Single-node specialisation: contract coefficients before taking traces
        # and pull the residual back through the (linear) trace map, so that
        # only 3-vectors are crossed with the normal.
        q = self.quad
        elems = self.node_elements(kind, face)
        na = template.n_angles
        sub = template.subset(list(elems)).with_flat(phi.reshape(-1, na)[list(elems)])
        basis = self.basis(sub)
        if kind == 0:
            x, n, sw = q.b_nodes[face, node], q.b_normals[face], self._sqrt_wb[face, node]
            r = base.boundary[face, node].copy()
        else:
            x, n, sw = q.i_nodes[face, node], q.i_normals[face], self._sqrt_wi[face, node]
            r = base.interior[face, node].copy()
        alpha = self.media.sigma / self._iwm
        r1, r2 = np.sqrt(self.media.rho1), np.sqrt(self.media.rho2) / self._iwm
        sm = self._sqrt_mu
        cache = []
        for side, e in enumerate(elems):
            k = self._kappa[e]
            D, F = basis["D"][side], basis["F"][side]
            ph = np.exp(1j * k * (D @ x))
            c = coefficients[e]
            DxF = _cross(D, F)
            Ec = sm * ((c * ph) @ F)
            Cc = 1j * k * sm * ((c * ph) @ DxF)
            t0, t1 = _cross(Ec, n), _cross(Cc, n)
            sign = 1.0 if side == 0 else -1.0
            if kind == 0:
                r += sw * (-t0 + alpha * _cross(t1, n))
            else:
                r += sign * sw * np.concatenate([r1 * t0, r2 * t1])
            cache.append((k, D, F, DxF, ph, c, sign))
        loss = float(np.sum(np.abs(r) ** 2))
        rc = r.conj()
        if kind == 0:
            p = -sw * _cross(n, rc)
            qv = alpha * sw * _cross(n, _cross(n, rc))
        else:
            p = r1 * sw * _cross(n, rc[:3])
            qv = r2 * sw * _cross(n, rc[3:])
        grads = []
        for side, (k, D, F, DxF, ph, c, sign) in enumerate(cache):
            per_kind = []
            for T, dF in zip(basis["T"], basis["dF"]):
                Tb, dFb = T[side], dF[side]
                dph = 1j * k * (Tb @ x) * ph
                dEp = sm * ((dFb @ p) * ph + (F @ p) * dph)
                inner = _cross(Tb, F) + _cross(D, dFb)
                dCq = 1j * k * sm * ((inner @ qv) * ph + (DxF @ qv) * dph)
                per_kind.append(self.fold(2.0 * np.real(sign * c * (dEp + dCq)))[None])
            grads.append(sub.subset([side]).reduce_direction_gradient(per_kind)[0])
        return loss, elems, np.array(grads)

    def _field_traces(self, values, n):
        E, curl = values
        return _cross(E, n), _cross(curl, n)

    def _boundary_data(self, x, n):
        return self.problem.g(x, n)

    def _exact_field(self, x):
        return self.problem.exact(x)

    def evaluate(self, solution: DiscreteSolution, x, elements=None):
        """Field and curl of ``solution`` at points ``x`` (P, 3)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if elements is None:
            elements = self.mesh.locate(x)
        elements = np.asarray(elements, dtype=int)
        k = self._kappa[elements][:, None]
        E = np.zeros(x.shape, dtype=complex)
        C = np.zeros(x.shape, dtype=complex)
        for layer in solution.layers:
            b = self.basis(layer.angles)
            D, F = b["D"][elements], b["F"][elements]
            w = self._sqrt_mu * np.exp(1j * k * np.einsum("pd,pnd->pn", x, D)) * layer.coefficients[elements]
            E += np.einsum("pn,pnd->pd", w, F)
            C += 1j * k * np.einsum("pn,pnd->pd", w, _cross(D, F))
        return E, C


def functional_J_maxwell(form: MaxwellForm, solution: DiscreteSolution, candidate: Layer | None = None) -> float:
    return form.functional(solution, candidate)


def assemble_system_maxwell(form: MaxwellForm, solution: DiscreteSolution,
                            angles: DirectionAngles) -> AssembledSystem:
    return form.assemble(angles, form.residual_rows(solution))


def grad_J_angles_maxwell(form: MaxwellForm, solution: DiscreteSolution, candidate: Layer) -> np.ndarray:
    return form.grad_angles(solution, candidate)
