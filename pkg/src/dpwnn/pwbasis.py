"""Direction angles, their parametrised propagation directions, and scalar plane waves."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import ConfigurationError

ZETA_THRESHOLD = 1e-3
ZETA_DISTURBANCE = 1e-2


def direction_from_angles_2d(theta):
    theta = np.asarray(theta, dtype=float)
    return np.stack([np.cos(theta), np.sin(theta)], axis=-1)


def direction_from_angles_3d(zeta, theta):
    zeta = np.asarray(zeta, dtype=float)
    theta = np.asarray(theta, dtype=float)
    sz = np.sin(zeta)
    return np.stack([sz * np.cos(theta), sz * np.sin(theta), np.cos(zeta) * np.ones_like(theta)], axis=-1)


def wrap_theta(theta):
    """Map angles into (-pi, pi]."""
    t = np.mod(np.asarray(theta, dtype=float) + np.pi, 2 * np.pi) - np.pi
    return np.where(t == -np.pi, np.pi, t)


def wrap_zeta(zeta):
    """Reflect polar angles back into [0, pi]."""
    z = np.mod(np.asarray(zeta, dtype=float), 2 * np.pi)
    return np.where(z > np.pi, 2 * np.pi - z, z)


@dataclass(frozen=True)
class DirectionAngles:
    """Per-element direction angles.

    2D: ``theta`` has shape (N, n) and ``zeta`` is None.
    3D: ``zeta`` has shape (N, m*) and ``theta`` (N, t*); direction
    ``l = m * t* + t`` (zero based) uses ``(zeta[m], theta[t])``.
    """

    theta: np.ndarray
    zeta: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return 2 if self.zeta is None else 3

    @property
    def n_elements(self) -> int:
        return self.theta.shape[0]

    @property
    def n_directions(self) -> int:
        if self.zeta is None:
            return self.theta.shape[1]
        return self.zeta.shape[1] * self.theta.shape[1]

    @property
    def n_angles(self) -> int:
        """Angles per element."""
        return self.theta.shape[1] + (0 if self.zeta is None else self.zeta.shape[1])

    def directions(self) -> np.ndarray:
        """Unit directions, shape (N, n, d)."""
        if self.zeta is None:
            return direction_from_angles_2d(self.theta)
        z = self.zeta[:, :, None]
        t = self.theta[:, None, :]
        d = direction_from_angles_3d(z, t)
        return d.reshape(self.n_elements, -1, 3)

    def tangents(self) -> list[np.ndarray]:
        """Derivatives of each direction w.r.t. its own angles.

        2D: ``[d/dtheta]``; 3D: ``[d/dzeta, d/dtheta]``, each (N, n, d).
        """
        if self.zeta is None:
            t = self.theta
            return [np.stack([-np.sin(t), np.cos(t)], axis=-1)]
        z = self.zeta[:, :, None]
        t = self.theta[:, None, :]
        cz, sz, ct, st = np.cos(z), np.sin(z), np.cos(t), np.sin(t)
        dz = np.stack([cz * ct, cz * st, -sz * np.ones_like(t)], axis=-1)
        dt = np.stack([-sz * st, sz * ct, np.zeros(np.broadcast_shapes(z.shape, t.shape))], axis=-1)
        n = self.n_elements
        return [dz.reshape(n, -1, 3), dt.reshape(n, -1, 3)]

    def reduce_direction_gradient(self, per_direction: list[np.ndarray]) -> np.ndarray:
        """Collapse per-direction angle derivatives onto the angle parameters.

        Returns an array of shape (N, n_angles) laid out as ``[theta..., zeta...]``.
        """
        if self.zeta is None:
            return per_direction[0]
        m, t = self.zeta.shape[1], self.theta.shape[1]
        gz = per_direction[0].reshape(-1, m, t).sum(axis=2)
        gt = per_direction[1].reshape(-1, m, t).sum(axis=1)
        return np.concatenate([gt, gz], axis=1)

    def flat(self) -> np.ndarray:
        if self.zeta is None:
            return self.theta.ravel().copy()
        return np.concatenate([self.theta, self.zeta], axis=1).ravel()

    def with_flat(self, phi) -> "DirectionAngles":
        phi = np.asarray(phi, dtype=float).reshape(self.n_elements, self.n_angles)
        if self.zeta is None:
            return DirectionAngles(phi.copy())
        t = self.theta.shape[1]
        return DirectionAngles(phi[:, :t].copy(), phi[:, t:].copy())

    def wrapped(self) -> "DirectionAngles":
        if self.zeta is None:
            return DirectionAngles(wrap_theta(self.theta))
        return DirectionAngles(wrap_theta(self.theta), wrap_zeta(self.zeta))

    def subset(self, elements) -> "DirectionAngles":
        if self.zeta is None:
            return DirectionAngles(self.theta[elements])
        return DirectionAngles(self.theta[elements], self.zeta[elements])


def init_angles_uniform(width: int, dim: int, n_elements: int = 1,
                        threshold: float = ZETA_THRESHOLD,
                        disturbance: float = ZETA_DISTURBANCE) -> DirectionAngles:
    """Uniform initial angles, identical on every element.

    ``width`` is the direction count n in 2D and m* in 3D (then t* = 2 m*).
    """
    width = int(width)
    if dim == 2:
        if width < 1:
            raise ConfigurationError("2D width must be >= 1")
        j = np.arange(1, width + 1)
        theta = -np.pi + 2 * np.pi / width * j
        return DirectionAngles(np.tile(theta, (n_elements, 1)))
    if dim != 3:
        raise ConfigurationError(f"dimension must be 2 or 3, got {dim}")
    if width < 2:
        raise ConfigurationError("3D width m* must be >= 2")
    m = np.arange(1, width + 1)
    zeta = np.pi / (width - 1) * (m - 1) + np.pi / (3 * width)
    tstar = 2 * width
    t = np.arange(1, tstar + 1)
    theta = -np.pi + 2 * np.pi / tstar * t
    angles = DirectionAngles(np.tile(wrap_theta(theta), (n_elements, 1)),
                             np.tile(wrap_zeta(zeta), (n_elements, 1)))
    return correct_zeta_degeneracy(angles, threshold, disturbance)


def correct_zeta_degeneracy(angles: DirectionAngles, threshold: float = ZETA_THRESHOLD,
                            disturbance: float = ZETA_DISTURBANCE) -> DirectionAngles:
    """Push polar angles off the poles, where directions collapse."""
    if angles.zeta is None:
        return angles
    zeta = angles.zeta.copy()
    bad = np.abs(np.sin(zeta)) < threshold
    zeta[bad] = wrap_zeta(zeta[bad] + disturbance)
    return DirectionAngles(angles.theta.copy(), zeta)


def eval_basis(direction, wavenumber, x):
    """Value and gradient of exp(i k d.x) at points ``x`` (..., d)."""
    d = np.asarray(direction, dtype=float)
    x = np.asarray(x, dtype=float)
    val = np.exp(1j * wavenumber * (x @ d))
    return val, 1j * wavenumber * val[..., None] * d


def eval_layer(angles: DirectionAngles, coefficients, wavenumber, x, element: int = 0):
    """Value of sum_l c_l exp(i k d_l.x) on one element at points ``x`` (P, d)."""
    d = angles.directions()[element]
    c = np.asarray(coefficients)[element]
    return np.exp(1j * wavenumber * (np.asarray(x) @ d.T)) @ c


def eval_angle_derivative(angles: DirectionAngles, coefficients, wavenumber, x, element: int = 0):
    """Derivatives of the element's expansion value w.r.t. its angles.

    ``x`` has shape (P, d).  Returns (P, n_angles) ordered ``[theta..., zeta...]``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    sub = angles.subset([element])
    d = sub.directions()[0]
    c = np.asarray(coefficients)[element]
    phase = np.exp(1j * wavenumber * (x @ d.T))  # (P, n)
    per_dir = []
    for tan in sub.tangents():
        per_dir.append((1j * wavenumber * (x @ tan[0].T) * phase * c)[None])
    # reduce over the shared angles one point at a time
    out = [sub.reduce_direction_gradient([g[:, p] for g in per_dir])[0] for p in range(x.shape[0])]
    return np.array(out)
