import numpy as np
import pytest

from conftest import fd_curl, interior_points, pde_residual
from dpwnn.forms import UsageError
from dpwnn.helmholtz import helmholtz_media
from dpwnn.maxwell import maxwell_media
from dpwnn.mesh import ConfigurationError, build_uniform_mesh
from dpwnn.problems import (PROBLEMS, helmholtz_2d_mode, helmholtz_2d_piecewise,
                            helmholtz_3d_point_source, make_form, maxwell_3d_piecewise, maxwell_dipole,
                            mode_coefficients, point_source_field)

EXACT = [
    ("mode 2pi", lambda: helmholtz_2d_mode(2 * np.pi)),
    ("mode 16pi", lambda: helmholtz_2d_mode(16 * np.pi)),
    ("mode 32pi", lambda: helmholtz_2d_mode(32 * np.pi)),
    ("point source 4pi", lambda: helmholtz_3d_point_source(4 * np.pi)),
    ("point source 8pi", lambda: helmholtz_3d_point_source(8 * np.pi)),
    ("dipole 4pi", lambda: maxwell_dipole(4 * np.pi)),
    ("dipole 2pi mu2", lambda: maxwell_dipole(2 * np.pi, eps=2 + 1j, mu=2.0, axis=(0.6, 0.0, 0.8))),
]


@pytest.mark.parametrize("name,make", EXACT, ids=[e[0] for e in EXACT])
def test_exact_fields_solve_the_pde(name, make, rng):
    p = make()
    assert pde_residual(p, interior_points(rng, p)) < 1e-6


def test_mode_wavenumber():
    k, wx, A1, A2 = mode_coefficients(2 * np.pi)
    assert k == 1 and np.isclose(wx, np.pi * np.sqrt(3))


@pytest.mark.parametrize("ratio", [2, 4, 16, 32, 64])
def test_mode_amplitudes_solve_the_amplitude_system(ratio):
    omega = ratio * np.pi
    k, wx, A1, A2 = mode_coefficients(omega)
    assert k == ratio - 1
    M = np.array([[wx, -wx],
                  [(omega - wx) * np.exp(-2j * wx), (omega + wx) * np.exp(2j * wx)]])
    assert np.allclose(M @ [A1, A2], [-1j, 0], atol=1e-12 * omega)


@pytest.mark.parametrize("ratio", [1, 2.5, 0])
def test_mode_rejects_bad_frequency(ratio):
    with pytest.raises(ConfigurationError):
        helmholtz_2d_mode(ratio * np.pi)


def test_point_source_value_and_conjugation():
    u, _ = point_source_field(4 * np.pi, (-1, -1, -1))(np.zeros((1, 3)))
    assert np.isclose(abs(u[0]), 1 / (4 * np.pi * np.sqrt(3)))
    x = np.random.default_rng(0).uniform(0, 1, (20, 3))
    up, _ = point_source_field(5.0, (-1, -1, -1))(x)
    um, _ = point_source_field(-5.0, (-1, -1, -1))(x)
    assert np.allclose(up, um.conj())


def test_point_source_outside_domain_required():
    with pytest.raises(ConfigurationError):
        helmholtz_3d_point_source(4 * np.pi, source=(0.5, 0.5, 0.5))
    with pytest.raises(ConfigurationError):
        maxwell_dipole(4 * np.pi, source=(0.0, 0.0, 0.0))


def test_zero_current_dipole_vanishes(rng):
    p = maxwell_dipole(4 * np.pi, current=0.0)
    x = interior_points(rng, p, 20)
    E, C = p.analytic(x)
    assert np.all(E == 0) and np.all(C == 0)
    n = np.tile([1.0, 0.0, 0.0], (20, 1))
    assert np.all(p.g(x, n) == 0)


def test_gradient_term_of_dipole_is_curl_free(rng):
    # curl E must equal curl(-i omega mu I phi a) computed by differences: the Hessian term drops out
    omega, eps = 3.0, 1 + 1j
    p = maxwell_dipole(omega, eps)
    x = interior_points(rng, p, 30)
    k = omega * np.sqrt(eps)
    a = np.array([0.0, 0.0, 1.0])

    def phi_a(y):
        R = np.linalg.norm(y - 0.6, axis=1)
        return (-1j * omega * np.exp(1j * k * R) / (4 * np.pi * R))[:, None] * a

    curl = fd_curl(phi_a, x, 1e-5)
    assert np.abs(curl - p.analytic(x)[1]).max() <= 1e-7 * np.abs(curl).max()


def test_boundary_data_is_the_trace_of_the_field(rng):
    p = helmholtz_2d_mode(4 * np.pi)
    x = rng.uniform(0, 1, (10, 2))
    n = np.array([0.0, -1.0])
    u, du = p.analytic(x)
    assert np.allclose(p.g(x, n), du @ n + 1j * p.omega * u)


def test_piecewise_helmholtz_media():
    p = helmholtz_2d_piecewise(4 * np.pi)
    m = build_uniform_mesh(p.domain, 4)
    media = helmholtz_media(p, m)
    left = m.centers[:, 0] < 0.5
    assert np.all(media.omega[left] == 8 * np.pi) and np.all(media.omega[~left] == 4 * np.pi)
    for face, a in zip(m.interior_faces, media.alpha):
        if face.axis == 0 and np.isclose(face.position, 0.5):
            assert np.isclose(a, 2 * (4 * np.pi) ** 2)
        else:
            k = media.omega[face.elements[0]]
            assert np.isclose(a, k ** 2)
    assert p.exact is None


def test_piecewise_requires_aligned_mesh():
    p = helmholtz_2d_piecewise(4 * np.pi)
    with pytest.raises(ConfigurationError):
        make_form(p, build_uniform_mesh(p.domain, 3))
    q = maxwell_3d_piecewise(4 * np.pi, media_threshold=0.0)
    with pytest.raises(ConfigurationError):
        make_form(q, build_uniform_mesh(q.domain, 3))
    make_form(q, build_uniform_mesh(q.domain, 2), 4)


def test_dimension_mismatch_is_a_usage_error():
    p = helmholtz_2d_mode(4 * np.pi)
    q = helmholtz_3d_point_source(4 * np.pi)
    with pytest.raises(UsageError):
        make_form(p, build_uniform_mesh(q.domain, 1))


def test_maxwell_quadrant_permittivity():
    p = maxwell_3d_piecewise(4 * np.pi)  # default thresholds at 0.5
    pts = np.array([[0, 0.2, 0.2], [0, 0.7, 0.2], [0, 0.7, 0.7], [0, 0.2, 0.7]], float)
    assert np.array_equal(p.eps_at(pts), [2 + 2j, 1 + 1j, 0.5 + 0.5j, 1.5 + 1.5j])
    # the default thresholds leave the whole box in one quadrant
    m = build_uniform_mesh(p.domain, 2)
    assert np.all(maxwell_media(p, m).eps == 2 + 2j)
    q = maxwell_3d_piecewise(4 * np.pi, media_threshold=0.0)
    eps = maxwell_media(q, build_uniform_mesh(q.domain, 2)).eps
    assert set(eps.tolist()) == {2 + 2j, 1 + 1j, 0.5 + 0.5j, 1.5 + 1.5j}
    assert q.exact is None


def test_registry_builds_every_problem():
    args = {"helmholtz_2d_mode": (16 * np.pi,), "helmholtz_2d_piecewise": (4 * np.pi,)}
    for name, make in PROBLEMS.items():
        p = make(*args.get(name, (4 * np.pi,)))
        assert p.name == name
