"""Model problems: waveguide mode, point source, electric dipole and piecewise media.

Every problem derives its boundary data from an analytic field through the
boundary trace operator, so inserting that field leaves no boundary misfit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .forms import UsageError
from .mesh import BoxDomain, ConfigurationError, Mesh


def _unit_box(dim):
    return BoxDomain((0.0,) * dim, (1.0,) * dim)


@dataclass(frozen=True)
class Problem:
    """A boundary-value problem on a box.

    ``analytic`` maps points (P, d) to ``(value, derivative)``: ``(u, grad u)``
    for Helmholtz and ``(E, curl E)`` for Maxwell.  The boundary data is the
    boundary trace of ``analytic``; ``exact`` is ``analytic`` when it actually
    solves the problem (homogeneous media) and None otherwise.
    """

    name: str
    kind: str  # "helmholtz" or "maxwell"
    domain: BoxDomain
    omega: float
    analytic: Callable = field(repr=False)
    has_exact: bool = True
    beta: float = 1.0
    mu: float = 1.0
    sigma: float = 1.0
    rho1: float = 1.0
    rho2: float = 1.0
    media: Callable | None = field(default=None, repr=False)  # centers -> omega or eps
    eps: complex = 1.0 + 0.0j
    jumps: tuple = ()  # (axis, coordinate) planes where the media jump

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def exact(self):
        return self.analytic if self.has_exact else None

    # media --------------------------------------------------------------
    def omega_at(self, x):
        x = np.atleast_2d(x)
        if self.kind == "helmholtz" and self.media is not None:
            return np.asarray(self.media(x), dtype=float)
        return np.full(len(x), self.omega)

    def eps_at(self, x):
        x = np.atleast_2d(x)
        if self.kind == "maxwell" and self.media is not None:
            return np.asarray(self.media(x), dtype=complex)
        return np.full(len(x), self.eps, dtype=complex)

    def check_mesh(self, mesh: Mesh):
        """Raise unless the mesh covers the domain and resolves every media jump."""
        if mesh.dim != self.dim:
            raise UsageError(f"problem {self.name!r} is {self.dim}D but the mesh is {mesh.dim}D")
        if not (np.allclose(mesh.domain.lo, self.domain.lo) and np.allclose(mesh.domain.hi, self.domain.hi)):
            raise ConfigurationError(f"mesh domain {mesh.domain} differs from the problem domain {self.domain}")
        for axis, c in self.jumps:
            lo, hi = self.domain.lo[axis], self.domain.hi[axis]
            if lo < c < hi:
                k = (c - lo) / mesh.h
                if abs(k - round(k)) > 1e-9:
                    raise ConfigurationError(
                        f"mesh with h={mesh.h} does not align with the media jump at x[{axis}]={c}")

    # boundary data -------------------------------------------------------
    def g(self, x, n):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        n = np.broadcast_to(np.asarray(n, dtype=float), x.shape)
        v, dv = self.analytic(x)
        if self.kind == "helmholtz":
            return np.einsum("pd,pd->p", dv, n) + 1j * self.omega * v
        return -np.cross(v, n) + (self.sigma / (1j * self.omega * self.mu)) * np.cross(np.cross(dv, n), n)


# ---------------------------------------------------------------- fields

def mode_coefficients(omega: float):
    """Mode index ``k``, ``omega_x`` and amplitudes ``(A1, A2)`` of the waveguide mode."""
    ratio = omega / np.pi
    if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 2:
        raise ConfigurationError(f"omega/pi must be an integer >= 2, got {ratio}")
    k = int(round(ratio)) - 1
    wx = np.sqrt(omega ** 2 - (k * np.pi) ** 2)
    M = np.array([[wx, -wx],
                  [(omega - wx) * np.exp(-2j * wx), (omega + wx) * np.exp(2j * wx)]])
    det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    if abs(det) < 1e-14 * np.abs(M).max() ** 2:
        raise ConfigurationError("singular amplitude system for the waveguide mode")
    rhs = np.array([-1j, 0.0])
    A1 = (M[1, 1] * rhs[0] - M[0, 1] * rhs[1]) / det
    A2 = (M[0, 0] * rhs[1] - M[1, 0] * rhs[0]) / det
    return k, wx, A1, A2


def mode_field(omega: float):
    k, wx, A1, A2 = mode_coefficients(omega)
    ky = k * np.pi

    def f(x):
        x = np.atleast_2d(x)
        em, ep = np.exp(-1j * wx * x[:, 0]), np.exp(1j * wx * x[:, 0])
        cy, sy = np.cos(ky * x[:, 1]), np.sin(ky * x[:, 1])
        X = A1 * em + A2 * ep
        u = cy * X
        grad = np.stack([cy * 1j * wx * (A2 * ep - A1 * em), -ky * sy * X], axis=-1)
        return u, grad

    return f


def point_source_field(omega: float, source):
    r0 = np.asarray(source, dtype=float)

    def f(x):
        x = np.atleast_2d(x)
        dx = x - r0
        R = np.linalg.norm(dx, axis=-1)
        u = np.exp(1j * omega * R) / (4 * np.pi * R)
        grad = (u * (1j * omega - 1 / R) / R)[:, None] * dx
        return u, grad

    return f


def dipole_field(omega, eps, mu=1.0, current=1.0, axis=(0.0, 0.0, 1.0), source=(0.6, 0.6, 0.6)):
    """Field and curl of an electric dipole in a homogeneous medium."""
    a = np.asarray(axis, dtype=float)
    x0 = np.asarray(source, dtype=float)
    k = omega * np.sqrt(complex(mu * eps))

    def f(x):
        x = np.atleast_2d(x)
        dx = x - x0
        R = np.linalg.norm(dx, axis=-1)
        rh = dx / R[:, None]
        phi = np.exp(1j * k * R) / (4 * np.pi * R)
        p1 = phi * (1j * k - 1 / R)
        p2 = phi * ((1j * k - 1 / R) ** 2 + 1 / R ** 2)
        ra = rh @ a
        # Hessian of phi applied to a
        Ha = (p2 - p1 / R)[:, None] * ra[:, None] * rh + (p1 / R)[:, None] * a
        E = -1j * omega * mu * current * phi[:, None] * a + current / (1j * omega * eps) * Ha
        curl = -1j * omega * mu * current * np.cross(p1[:, None] * rh, a)
        return E, curl

    return f


# -------------------------------------------------------------- problems

def helmholtz_2d_mode(omega: float) -> Problem:
    return Problem("helmholtz_2d_mode", "helmholtz", _unit_box(2), float(omega), mode_field(omega))


def helmholtz_3d_point_source(omega: float, source=(-1.0, -1.0, -1.0)) -> Problem:
    if omega <= 0:
        raise ConfigurationError("omega must be positive")
    dom = _unit_box(3)
    if dom.contains(source):
        raise ConfigurationError("the point source must lie outside the domain")
    return Problem("helmholtz_3d_point_source", "helmholtz", dom, float(omega),
                   point_source_field(omega, source))


def maxwell_dipole(omega: float, eps: complex = 1 + 1j, sigma: float = 1.0, mu: float = 1.0,
                   current: float = 1.0, axis=(0.0, 0.0, 1.0), source=(0.6, 0.6, 0.6)) -> Problem:
    dom = BoxDomain((-0.5,) * 3, (0.5,) * 3)
    if dom.contains(source):
        raise ConfigurationError("the dipole must lie outside the closed domain")
    return Problem("maxwell_dipole", "maxwell", dom, float(omega),
                   dipole_field(omega, eps, mu, current, axis, source),
                   mu=float(mu), sigma=float(sigma), eps=complex(eps))


def helmholtz_2d_piecewise(omega_r: float) -> Problem:
    """Wave number ``2 omega_r`` for x < 1/2 and ``omega_r`` elsewhere; data from the mode at ``omega_r``."""
    omega_r = float(omega_r)

    def media(x):
        return np.where(np.atleast_2d(x)[:, 0] < 0.5, 2 * omega_r, omega_r)

    return Problem("helmholtz_2d_piecewise", "helmholtz", _unit_box(2), omega_r, mode_field(omega_r),
                   has_exact=False, media=media, jumps=((0, 0.5),))


MAXWELL_QUADRANT_EPS = {(False, False): 2 + 2j, (True, False): 1 + 1j,
                        (True, True): 0.5 + 0.5j, (False, True): 1.5 + 1.5j}


def maxwell_3d_piecewise(omega: float, media_threshold: float = 0.5, sigma: float = 1.0,
                         mu: float = 1.0, current: float = 1.0, axis=(0.0, 0.0, 1.0),
                         source=(0.6, 0.6, 0.6)) -> Problem:
    """Quadrant permittivities split at ``y, z = media_threshold``; data from the ``1+i`` dipole."""
    t = float(media_threshold)

    def media(x):
        x = np.atleast_2d(x)
        up_y, up_z = x[:, 1] > t, x[:, 2] > t
        out = np.empty(len(x), dtype=complex)
        for (yy, zz), val in MAXWELL_QUADRANT_EPS.items():
            out[(up_y == yy) & (up_z == zz)] = val
        return out

    base = maxwell_dipole(omega, 1 + 1j, sigma, mu, current, axis, source)
    return Problem("maxwell_3d_piecewise", "maxwell", base.domain, float(omega), base.analytic,
                   has_exact=False, mu=float(mu), sigma=float(sigma), eps=1 + 1j, media=media,
                   jumps=((1, t), (2, t)))


def plane_wave_problem(omega: float, direction, domain: BoxDomain | None = None) -> Problem:
    """Helmholtz problem whose exact solution is the single plane wave ``exp(i omega d.x)``."""
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    dom = domain if domain is not None else _unit_box(len(d))

    def f(x):
        x = np.atleast_2d(x)
        u = np.exp(1j * omega * (x @ d))
        return u, 1j * omega * u[:, None] * d

    return Problem("plane_wave", "helmholtz", dom, float(omega), f)


def maxwell_plane_wave_problem(omega: float, direction, polarization, eps: complex = 1 + 1j,
                               mu: float = 1.0, sigma: float = 1.0) -> Problem:
    """Maxwell problem whose exact solution is ``sqrt(mu) f exp(i kappa d.x)`` with ``f . d = 0``."""
    d = np.asarray(direction, dtype=float)
    f0 = np.asarray(polarization, dtype=float)
    if abs(f0 @ d) > 1e-12 * np.linalg.norm(f0) * np.linalg.norm(d):
        raise ConfigurationError("polarization must be orthogonal to the direction")
    kappa = omega * np.sqrt(complex(mu * eps))

    def f(x):
        x = np.atleast_2d(x)
        e = np.sqrt(mu) * np.exp(1j * kappa * (x @ d))
        return e[:, None] * f0, 1j * kappa * e[:, None] * np.cross(d, f0)

    return Problem("maxwell_plane_wave", "maxwell", BoxDomain((-0.5,) * 3, (0.5,) * 3), float(omega), f,
                   mu=float(mu), sigma=float(sigma), eps=complex(eps))


def zero_data_problem(kind: str, dim: int, omega: float) -> Problem:
    """Homogeneous problem (``g = 0``); its solution vanishes."""
    def f(x):
        x = np.atleast_2d(x)
        if kind == "helmholtz":
            return np.zeros(len(x), complex), np.zeros(x.shape, complex)
        return np.zeros(x.shape, complex), np.zeros(x.shape, complex)

    dom = _unit_box(dim) if kind == "helmholtz" else BoxDomain((-0.5,) * 3, (0.5,) * 3)
    return Problem(f"zero_{kind}", kind, dom, float(omega), f, eps=1 + 1j)


PROBLEMS = {
    "helmholtz_2d_mode": helmholtz_2d_mode,
    "helmholtz_3d_point_source": helmholtz_3d_point_source,
    "maxwell_dipole": maxwell_dipole,
    "helmholtz_2d_piecewise": helmholtz_2d_piecewise,
    "maxwell_3d_piecewise": maxwell_3d_piecewise,
}


def make_form(problem: Problem, mesh: Mesh, order: int | None = None):
    """Least-squares form of ``problem`` on ``mesh``."""
    problem.check_mesh(mesh)
    if problem.kind == "helmholtz":
        from .helmholtz import HelmholtzForm
        return HelmholtzForm(problem, mesh, order)
    from .maxwell import MaxwellForm
    return MaxwellForm(problem, mesh, order)


def reference_rows(coarse_form, fine_form, fine_solution):
    """Rows of a fine-mesh solution traced on the skeleton of ``coarse_form``.

    Each one-sided trace is taken from the fine element lying inside the
    coarse element that owns the trace.
    """
    coarse, fine = coarse_form.mesh, fine_form.mesh
    centers = coarse.centers

    def side_values(x, n, own):
        inward = np.sign(np.einsum("pd,pd->p", centers[own] - x, n))[:, None]
        elems = fine.locate(x, side_normal=-inward * n)
        return fine_form.evaluate(fine_solution, x, elems)

    return coarse_form.field_rows(side_values)
