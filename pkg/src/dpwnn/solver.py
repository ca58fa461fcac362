"""Coefficient solves, Adam angle training and the greedy layer-by-layer loop.

``outer_loop`` grows the approximation ``u_r = u_{r-1} + xi_r`` one layer at a
time.  Each layer is found by ``alternate_train``: least-squares coefficients
at fixed angles, then one shuffled Adam pass over the skeleton quadrature
nodes at fixed coefficients, repeated for a budget of epochs.  With a budget
of zero epochs a layer is exactly the fixed-direction PWLS solution.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .forms import AssembledSystem, DiscreteSolution, Layer, Rows, SkeletonForm
from .mesh import ConfigurationError
from .pwbasis import DirectionAngles, correct_zeta_degeneracy, init_angles_uniform

log = logging.getLogger(__name__)


class SolverAbort(RuntimeError):
    """The iteration produced a non-finite functional value."""

    def __init__(self, message, record=None, solution=None):
        super().__init__(message)
        self.record = record
        self.solution = solution


# ------------------------------------------------------------------ configs

@dataclass(frozen=True)
class AdamConfig:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    eta1: float = 1e-2

    def __post_init__(self):
        for name in ("beta1", "beta2"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ConfigurationError(f"{name} must lie in (0, 1)")
        if self.eps <= 0 or self.eta1 <= 0:
            raise ConfigurationError("eps and eta1 must be positive")


@dataclass(frozen=True)
class WidthSchedule:
    """Affine width ``slope * r + intercept``: directions (2D) or ``m*`` (3D)."""

    slope: int
    intercept: int

    def __post_init__(self):
        if self.slope < 1:
            raise ConfigurationError("width schedule slope must be >= 1 so widths grow")

    def __call__(self, r: int) -> int:
        return self.slope * r + self.intercept

    @classmethod
    def parse(cls, text: str) -> "WidthSchedule":
        """Read ``"2r+19"``, ``"r+2"`` or ``"3r-1"``."""
        s = text.replace(" ", "")
        if "r" not in s:
            raise ConfigurationError(f"width schedule {text!r} must contain r")
        head, tail = s.split("r", 1)
        try:
            slope = int(head) if head not in ("", "+") else 1
            intercept = int(tail) if tail else 0
        except ValueError:
            raise ConfigurationError(f"cannot parse width schedule {text!r}") from None
        return cls(slope, intercept)

    def __str__(self):
        sign = "+" if self.intercept >= 0 else "-"
        return f"{self.slope}r{sign}{abs(self.intercept)}"


@dataclass(frozen=True)
class OuterConfig:
    schedule: WidthSchedule
    tol: float = 1e-6
    maxit: int = 20
    epochs: int = 10
    rho: float = 1e-6
    grad_tol: float = 1e-6
    truncation: float = 1e-13
    seed: int = 0
    adam: AdamConfig = field(default_factory=AdamConfig)

    def __post_init__(self):
        if self.maxit < 1:
            raise ConfigurationError("maxit must be >= 1")
        if self.epochs < 0:
            raise ConfigurationError("epochs must be >= 0")
        if not self.tol > 0:
            raise ConfigurationError("tol must be positive")
        if self.rho < 0 or self.grad_tol < 0:
            raise ConfigurationError("rho and grad_tol must be non-negative")
        if not 0 < self.truncation < 1:
            raise ConfigurationError("truncation must lie in (0, 1)")


# ------------------------------------------------------------------ records

@dataclass
class EpochRecord:
    epoch: int
    J: float
    energy_error: float | None
    wall_ms: float


@dataclass
class StepRecord:
    r: int
    width: int
    n_basis: int
    J: float
    energy_error: float | None
    wall_ms: float
    epochs: list[EpochRecord]
    angles: DirectionAngles


@dataclass
class RunRecord:
    J0: float
    energy_error0: float | None
    steps: list[StepRecord] = field(default_factory=list)
    converged: bool = False
    aborted: str | None = None

    @property
    def J_history(self) -> list[float]:
        return [self.J0] + [s.J for s in self.steps]

    @property
    def final_J(self) -> float:
        return self.J_history[-1]

    @property
    def final_energy_error(self) -> float | None:
        return self.steps[-1].energy_error if self.steps else self.energy_error0


# ------------------------------------------------------------ coefficient solve

@dataclass
class DlsqResult:
    c: np.ndarray
    rank: int
    warning: str | None = None


def dlsq_solve(system: AssembledSystem, truncation: float = 1e-13) -> DlsqResult:
    """Truncated pseudo-inverse solution of the Hermitian system ``A c = b``.

    The system is first scaled symmetrically to unit diagonal, then solved by
    eigendecomposition with eigenvalues below ``truncation * lambda_max``
    discarded.  This is the minimal-norm least-squares solution of the scaled
    system on the retained spectrum.
    """
    A, b = system.A, system.b
    diag = np.real(np.diag(A)).copy()
    scale = np.where(diag > 0, 1.0 / np.sqrt(np.where(diag > 0, diag, 1.0)), 0.0)
    As = scale[:, None] * A * scale[None, :]
    As = 0.5 * (As + As.conj().T)
    lam, V = np.linalg.eigh(As)
    lmax = lam[-1] if lam.size else 0.0
    if not lmax > 0:
        return DlsqResult(np.zeros_like(b), 0, "zero system matrix; returning the zero vector")
    keep = lam > truncation * lmax
    y = V[:, keep] @ ((V[:, keep].conj().T @ (scale * b)) / lam[keep])
    return DlsqResult(scale * y, int(keep.sum()))


def _solve_layer(form: SkeletonForm, angles: DirectionAngles, base: Rows, truncation: float):
    """Optimal coefficients at fixed ``angles``; never worse than the zero layer."""
    system = form.assemble(angles, base)
    res = dlsq_solve(system, truncation)
    if res.warning:
        log.warning(res.warning)
    layer = Layer(angles, res.c.reshape(form.mesh.n_elements, system.n_basis))
    rows = form.layer_rows(layer)
    J = (base + rows).sq_norm()
    J_zero = base.sq_norm()
    if not J <= J_zero:
        layer = Layer(angles, np.zeros_like(layer.coefficients))
        rows = form.empty_rows()
        J = J_zero
    return layer, rows, J


# ------------------------------------------------------------------ Adam

@dataclass
class AdamState:
    phi: np.ndarray
    m: np.ndarray
    v: np.ndarray
    s: int
    rng: np.random.Generator


def adam_epoch(state: AdamState, n_samples: int, sample_grad, config: AdamConfig,
               project=None) -> AdamState:
    """One shuffled pass of single-sample Adam steps.

    ``sample_grad(phi, i)`` returns ``(indices, grad)``: the gradient of the
    ``i``-th sample loss restricted to the entries ``indices`` of ``phi`` (it
    vanishes elsewhere).  ``project`` maps the angles back into their
    canonical ranges after the pass.
    """
    if n_samples < 1:
        raise ValueError("an epoch needs at least one sample")
    phi, m, v = state.phi.copy(), state.m.copy(), state.v.copy()
    b1, b2 = config.beta1, config.beta2
    eta = config.eta1 / math.sqrt(state.s * n_samples)
    for i in state.rng.permutation(n_samples):
        idx, g = sample_grad(phi, int(i))
        m *= b1
        v *= b2
        m[idx] += (1 - b1) * g
        v[idx] += (1 - b2) * g * g
        phi -= eta * m / (np.sqrt(v) + config.eps)
    if project is not None:
        phi = project(phi)
    return AdamState(phi, m, v, state.s + 1, state.rng)


# ------------------------------------------------------------ inner training

def _node_sampler(form: SkeletonForm, template: DirectionAngles, coefficients, base: Rows):
    kinds, faces, nodes = form.node_table()
    na = template.n_angles
    offsets = np.arange(na)

    def sample_grad(phi, i):
        _, elems, g = form.node_loss_grad(template, phi, coefficients, base,
                                          int(kinds[i]), int(faces[i]), int(nodes[i]))
        idx = (np.asarray(elems)[:, None] * na + offsets).ravel()
        return idx, g.ravel()

    return len(kinds), sample_grad


def _projector(template: DirectionAngles):
    def project(phi):
        return correct_zeta_degeneracy(template.with_flat(phi).wrapped()).flat()
    return project


def alternate_train(form: SkeletonForm, base: Rows, width: int, config: OuterConfig, r: int = 1,
                    error_base: Rows | None = None):
    """Train one layer on top of the residual rows ``base``.

    Returns ``(layer, layer_rows, J, epochs)`` where ``epochs`` lists the
    functional after every coefficient solve.  The layer with the smallest
    functional seen is returned.
    """
    angles = init_angles_uniform(width, form.dim, form.mesh.n_elements)
    project = _projector(angles)
    rng = np.random.default_rng([config.seed, r])
    state = None
    best = None
    trace = []
    t0 = time.perf_counter()
    for epoch in range(config.epochs + 1):
        layer, rows, J = _solve_layer(form, angles, base, config.truncation)
        err = None if error_base is None else math.sqrt((error_base - rows).sq_norm())
        trace.append(EpochRecord(epoch, J, err, 1e3 * (time.perf_counter() - t0)))
        if best is None or J < best[2]:
            best = (layer, rows, J)
        if epoch == config.epochs:
            break
        grad = form.grad_angles(base, layer)
        if np.max(np.abs(grad)) < config.grad_tol:
            break
        if state is None:
            state = AdamState(angles.flat(), grad.copy(), form.max_node_grad_sq(base, layer), 1, rng)
        else:
            state = AdamState(angles.flat(), state.m, state.v, state.s, rng)
        n_samples, sample_grad = _node_sampler(form, angles, layer.coefficients, base)
        old = angles.flat()
        state = adam_epoch(state, n_samples, sample_grad, config.adam, project)
        if np.max(np.abs(state.phi - old)) < config.rho:
            break
        angles = angles.with_flat(state.phi)
    layer, rows, J = best
    return layer, rows, J, trace


# ------------------------------------------------------------ outer loop

def outer_loop(form: SkeletonForm, config: OuterConfig, reference: Rows | None = None,
               on_step=None):
    """Greedy layer-by-layer iteration until ``J < tol`` or ``maxit`` layers.

    ``reference`` gives the rows of the target field for energy errors; by
    default the problem's exact solution is used when it exists.
    ``on_step(record)`` is called after every layer.
    """
    if reference is None and form.problem.exact is not None:
        reference = form.exact_rows()
    solution = DiscreteSolution()
    base = Rows(form.data.boundary.copy(), form.data.interior.copy())
    err_base = reference
    J = base.sq_norm()
    record = RunRecord(J, None if reference is None else math.sqrt(reference.sq_norm()))
    if not math.isfinite(J):
        record.aborted = "non-finite functional for the zero solution"
        raise SolverAbort(record.aborted, record, solution)
    if J < config.tol:
        record.converged = True
        return solution, record
    t0 = time.perf_counter()
    for r in range(1, config.maxit + 1):
        width = config.schedule(r)
        layer, rows, J, trace = alternate_train(form, base, width, config, r, err_base)
        solution = solution.appended(layer)
        base = base + rows
        err = None
        if err_base is not None:
            err_base = err_base - rows
            err = math.sqrt(err_base.sq_norm())
        record.steps.append(StepRecord(r, width, layer.coefficients.shape[1], J, err,
                                       1e3 * (time.perf_counter() - t0), trace, layer.angles))
        log.info("r=%d width=%d J=%.3e error=%s", r, width, J, err)
        if on_step is not None:
            on_step(record)
        if not math.isfinite(J):
            record.aborted = f"non-finite functional at r={r}"
            raise SolverAbort(record.aborted, record, solution)
        if J < config.tol:
            record.converged = True
            break
    return solution, record


def pwls_baseline(form: SkeletonForm, width: int, truncation: float = 1e-13,
                  reference: Rows | None = None):
    """Single least-squares solve at uniform angles of the given width."""
    config = OuterConfig(WidthSchedule(1, width - 1), tol=np.finfo(float).tiny, maxit=1, epochs=0,
                         truncation=truncation)
    return outer_loop(form, config, reference)
