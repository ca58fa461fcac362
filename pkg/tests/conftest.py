import numpy as np
import pytest

from dpwnn.forms import Layer
from dpwnn.pwbasis import DirectionAngles


def random_angles(rng, n_elements, dim, width):
    if dim == 2:
        return DirectionAngles(rng.uniform(-np.pi, np.pi, (n_elements, width)))
    return DirectionAngles(rng.uniform(-np.pi, np.pi, (n_elements, 2 * width)),
                           rng.uniform(0.2, np.pi - 0.2, (n_elements, width)))


def random_layer(rng, form, width, scale=1.0):
    a = random_angles(rng, form.mesh.n_elements, form.dim, width)
    nb = form.n_basis(a)
    c = scale * (rng.normal(size=(form.mesh.n_elements, nb)) + 1j * rng.normal(size=(form.mesh.n_elements, nb)))
    return Layer(a, c)


def fd_angle_gradient(form, solution, layer, step=1e-6):
    phi = layer.angles.flat()
    out = np.zeros_like(phi)
    for i in range(len(phi)):
        e = np.zeros_like(phi)
        e[i] = step
        jp = form.functional(solution, Layer(layer.angles.with_flat(phi + e), layer.coefficients))
        jm = form.functional(solution, Layer(layer.angles.with_flat(phi - e), layer.coefficients))
        out[i] = (jp - jm) / (2 * step)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def fd_derivative(fn, x, step=1e-5):
    """Central differences of ``fn`` (P, d) -> (P, ...) along every axis: (P, ..., d)."""
    out = []
    for k in range(x.shape[1]):
        e = np.zeros(x.shape[1])
        e[k] = step
        out.append((fn(x + e) - fn(x - e)) / (2 * step))
    return np.stack(out, axis=-1)


def fd_curl(fn, x, step):
    J = fd_derivative(fn, x, step)  # J[p, i, k] = d F_i / d x_k
    return np.stack([J[:, 2, 1] - J[:, 1, 2], J[:, 0, 2] - J[:, 2, 0], J[:, 1, 0] - J[:, 0, 1]], axis=-1)


def pde_residual(problem, x, step=1e-5):
    """Relative FD residual of the problem's analytic field at interior points ``x``.

    Helmholtz: ``div grad u + omega^2 u`` from differences of the analytic gradient,
    plus the mismatch between the analytic and differenced gradient.
    Maxwell: ``curl curl E - kappa^2 E`` from differences of the analytic curl,
    plus the mismatch between the analytic and differenced curl.
    """
    f = problem.analytic
    v, dv = f(x)
    if problem.kind == "helmholtz":
        k2 = problem.omega_at(x) ** 2
        lap = np.einsum("pkk->p", fd_derivative(lambda y: f(y)[1], x, step))
        scale = np.max(k2 * np.abs(v))
        pde = np.max(np.abs(lap + k2 * v)) / scale
        grad = np.max(np.abs(fd_derivative(lambda y: f(y)[0], x, step) - dv)) / np.max(np.abs(dv))
        return max(pde, grad)
    k2 = problem.omega ** 2 * problem.mu * problem.eps_at(x)
    cc = fd_curl(lambda y: f(y)[1], x, step)
    scale = np.max(np.abs(k2[:, None] * v))
    pde = np.max(np.abs(cc - k2[:, None] * v)) / scale
    curl = np.max(np.abs(fd_curl(lambda y: f(y)[0], x, step) - dv)) / np.max(np.abs(dv))
    return max(pde, curl)


def interior_points(rng, problem, n=100):
    lo, hi = np.asarray(problem.domain.lo), np.asarray(problem.domain.hi)
    return lo + (hi - lo) * rng.uniform(0.02, 0.98, (n, problem.dim))


# ------------------------------------------------------------ acceptance report

_ACCEPTANCE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = {}


@pytest.fixture
def acceptance(request):
    """``acceptance(n, ok, detail)`` records the verdict line of criterion ``n``."""
    lines = request.config.stash[_ACCEPTANCE]

    def record(n, ok, detail):
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.setdefault(n, []).append((ok, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(lines):
        for _, line in lines[n]:
            terminalreporter.write_line(line)


def face_plane_wave_sum(rule, k1, k2):
    """Quadrature of exp(i k1.x) conj(exp(i k2.x)) on a face, phased about the face centre."""
    c = rule.center
    local = np.exp(1j * rule.offsets @ k1) * np.conj(np.exp(1j * rule.offsets @ k2))
    return np.exp(1j * c @ k1) * np.conj(np.exp(1j * c @ k2)) * np.sum(rule.weights * local)
