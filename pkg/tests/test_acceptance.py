"""Acceptance criteria 1-11.

Every test records one PASS/FAIL line per criterion (printed in the terminal
summary) and then asserts it.  Criteria 6-8 run the solver to convergence at
desk scale and take a few minutes in total.
"""

import math

import numpy as np
import pytest

from conftest import face_plane_wave_sum, fd_angle_gradient, interior_points, pde_residual, random_layer
from dpwnn.cli import parse_config, run
from dpwnn.forms import DiscreteSolution, Layer
from dpwnn.maxwell import eval_vector_basis, polarization_from_direction, polarization_vectors
from dpwnn.mesh import BoxDomain, build_uniform_mesh
from dpwnn.problems import (helmholtz_2d_mode, helmholtz_2d_piecewise, helmholtz_3d_point_source,
                            make_form, maxwell_3d_piecewise, maxwell_dipole, maxwell_plane_wave_problem,
                            plane_wave_problem)
from dpwnn.pwbasis import init_angles_uniform
from dpwnn.quadrature import default_order, face_rule, plane_wave_face_integral_oracle
from dpwnn.solver import OuterConfig, WidthSchedule, dlsq_solve, outer_loop, pwls_baseline

EMPTY = DiscreteSolution()


def monotone(history, slack=1e-12):
    return all(b <= a + slack for a, b in zip(history, history[1:]))


# ------------------------------------------------------------ 1. quadrature oracle

def test_criterion_01_quadrature_oracle(acceptance):
    rng = np.random.default_rng(1)
    worst = 0.0
    meshes = {d: build_uniform_mesh(BoxDomain((0.0,) * d, (1.0,) * d), 4) for d in (2, 3)}
    for _ in range(200):
        d = int(rng.choice([2, 3]))
        m = meshes[d]
        kh = rng.uniform(0.0, 40.0)
        omega = kh / m.h
        faces = m.interior_faces + m.boundary_faces
        f = faces[rng.integers(len(faces))]
        d1, d2 = rng.normal(size=(2, d))
        k1, k2 = omega * d1 / np.linalg.norm(d1), omega * d2 / np.linalg.norm(d2)
        r = face_rule(m, f, default_order(omega, m.h))
        quad = face_plane_wave_sum(r, k1, k2)
        exact = plane_wave_face_integral_oracle(f, k1, k2)
        worst = max(worst, abs(quad - exact) / max(abs(exact), 1e-3 * f.measure))
    ok = worst <= 1e-12
    acceptance(1, ok, f"200 faces, omega*h <= 40: max relative error {worst:.2e} (tol 1e-12)")
    assert ok


# ------------------------------------------------------------ 2. gradient consistency

def _gradient_cases():
    yield "helmholtz 2D", make_form(helmholtz_2d_mode(8 * np.pi),
                                    build_uniform_mesh(BoxDomain((0, 0), (1, 1)), 2)), 4, 1e-5
    p3 = helmholtz_3d_point_source(4 * np.pi)
    yield "helmholtz 3D", make_form(p3, build_uniform_mesh(p3.domain, 1)), 2, 1e-5
    pm = maxwell_dipole(2 * np.pi)
    yield "maxwell", make_form(pm, build_uniform_mesh(pm.domain, 1), 8), 2, 1e-4


def test_criterion_02_gradient_consistency(acceptance):
    rng = np.random.default_rng(2)
    ok_all, parts = True, []
    for name, form, width, tol in _gradient_cases():
        worst = 0.0
        for _ in range(20):
            sol = DiscreteSolution([random_layer(rng, form, width, 0.3)])
            layer = random_layer(rng, form, width, 0.3)
            g = form.grad_angles(form.residual_rows(sol), layer)
            fd = fd_angle_gradient(form, sol, layer, step=1e-6)
            worst = max(worst, np.linalg.norm(g - fd) / np.linalg.norm(fd))
        ok_all &= worst < tol
        parts.append(f"{name} {worst:.1e} (tol {tol:.0e})")
    acceptance(2, ok_all, "analytic vs central FD, 20 states each: " + ", ".join(parts))
    assert ok_all


# ------------------------------------------------------------ 3. structural linear algebra

def test_criterion_03_hermitian_psd(acceptance):
    rng = np.random.default_rng(3)
    herm, psd = 0.0, 0.0
    makers = [lambda: helmholtz_2d_mode(4 * np.pi), lambda: helmholtz_2d_piecewise(4 * np.pi),
              lambda: helmholtz_3d_point_source(2 * np.pi), lambda: maxwell_dipole(2 * np.pi),
              lambda: maxwell_3d_piecewise(2 * np.pi, media_threshold=0.0)]
    for i in range(10):
        p = makers[i % len(makers)]()
        form = make_form(p, build_uniform_mesh(p.domain, 2), 6 if p.dim == 3 else None)
        layer = random_layer(rng, form, 2 if p.dim == 3 else 5)
        S = form.assemble(layer.angles, form.data)
        A = S.A
        herm = max(herm, np.abs(A - A.conj().T).max() / np.abs(A).max())
        lam = np.linalg.eigvalsh(A)
        psd = min(psd, lam[0] / lam[-1])
    ok = herm <= 1e-12 and psd >= -1e-10
    acceptance(3, ok, f"10 instances: Hermitian defect {herm:.1e} (tol 1e-12), "
                      f"min eig/max eig {psd:.1e} (tol -1e-10)")
    assert ok


# ------------------------------------------------------------ 4. representability

def _single_wave_cases():
    a2 = init_angles_uniform(10, 2, 4)
    p = plane_wave_problem(7.0, a2.directions()[2, 3])
    yield "helmholtz 2D", make_form(p, build_uniform_mesh(p.domain, 2)), a2
    a3 = init_angles_uniform(3, 3, 8)
    p = plane_wave_problem(5.0, a3.directions()[0, 4])
    yield "helmholtz 3D", make_form(p, build_uniform_mesh(p.domain, 2)), a3
    d = a3.directions()[0, 7]
    p = maxwell_plane_wave_problem(2 * np.pi, d, polarization_vectors(d))
    yield "maxwell", make_form(p, build_uniform_mesh(p.domain, 2)), a3


def test_criterion_04_representability(acceptance):
    ok_all, parts = True, []
    for name, form, angles in _single_wave_cases():
        S = form.assemble(angles, form.data)
        layer = Layer(angles, dlsq_solve(S).c.reshape(form.mesh.n_elements, -1))
        rel_J = form.functional(EMPTY, layer) / form.functional(EMPTY)
        rel_err = form.energy_error(DiscreteSolution([layer])) / math.sqrt(form.exact_rows().sq_norm())
        ok = rel_J <= 1e-12 and rel_err <= 1e-6
        ok_all &= ok
        parts.append(f"{name} J {rel_J:.1e}, error {rel_err:.1e}")
    acceptance(4, ok_all, "one DLSQ solve (tol J 1e-12, error 1e-6): " + "; ".join(parts))
    assert ok_all


# ------------------------------------------------------------ 5. baseline equivalence

def test_criterion_05_zero_epochs_is_pwls(acceptance):
    ok_all, parts = True, []
    p2, p3, pm = helmholtz_2d_mode(8 * np.pi), helmholtz_3d_point_source(4 * np.pi), maxwell_dipole(2 * np.pi)
    for name, p, cells, width in [("2D", p2, 4, 17), ("3D", p3, 2, 4), ("maxwell", pm, 1, 3)]:
        form = make_form(p, build_uniform_mesh(p.domain, cells))
        cfg = OuterConfig(WidthSchedule(1, width - 1), tol=1e-300, maxit=1, epochs=0, seed=11)
        sa, ra = outer_loop(form, cfg)
        sb, rb = pwls_baseline(form, width)
        same = (ra.final_J == rb.final_J
                and np.array_equal(sa.layers[0].coefficients, sb.layers[0].coefficients)
                and np.array_equal(sa.layers[0].angles.flat(), sb.layers[0].angles.flat()))
        ok_all &= same
        parts.append(f"{name} {'identical' if same else 'DIFFERENT'}")
    acceptance(5, ok_all, "epochs=0 vs PWLS bitwise: " + ", ".join(parts))
    assert ok_all


# ------------------------------------------------------------ 6-8. convergence runs

@pytest.fixture(scope="module")
def run_mode_32pi():
    p = helmholtz_2d_mode(32 * np.pi)
    form = make_form(p, build_uniform_mesh(p.domain, 8))
    cfg = OuterConfig(WidthSchedule(2, 21), tol=1e-6, maxit=20, epochs=2, seed=0)
    sol, rec = outer_loop(form, cfg)
    _, base = pwls_baseline(form, rec.steps[-1].width)
    return rec, base


@pytest.fixture(scope="module")
def run_point_source():
    p = helmholtz_3d_point_source(4 * np.pi)
    form = make_form(p, build_uniform_mesh(p.domain, 2))
    cfg = OuterConfig(WidthSchedule(1, 2), tol=1e-6, maxit=20, epochs=2, seed=0)
    return outer_loop(form, cfg)[1]


@pytest.mark.slow
def test_criterion_07_mode_32pi(acceptance, run_mode_32pi):
    rec, base = run_mode_32pi
    e_dp, e_pw = rec.final_energy_error ** 2, base.final_energy_error ** 2
    ratio = e_dp / e_pw
    within = lambda x, ref: ref / 10 <= x <= ref * 10
    ok = rec.converged and ratio <= 0.5 and within(e_dp, 3.00e-7) and within(e_pw, 1.72e-6)
    acceptance(7, ok, f"omega=32pi h=1/8 2r+21: DPWNN {e_dp:.2e} (target 3.00e-7), PWLS {e_pw:.2e} "
                      f"(target 1.72e-6) at width {rec.steps[-1].width}, ratio {ratio:.3f} (<= 0.5), "
                      f"{len(rec.steps)} iterations; errors on the squared-energy scale, "
                      f"unsquared ratio {math.sqrt(ratio):.3f}")
    assert ok


@pytest.mark.slow
def test_criterion_08_point_source(acceptance, run_point_source):
    rec = run_point_source
    e = rec.final_energy_error ** 2
    ok = rec.converged and len(rec.steps) <= 10 and 1.14e-8 <= e <= 1.14e-6
    acceptance(8, ok, f"3D omega=4pi h=1/2 r+2: {len(rec.steps)} iterations (<= 10), "
                      f"error {e:.2e} on the squared-energy scale (target 1.14e-7)")
    assert ok


def _short_run(problem, cells, schedule, maxit):
    form = make_form(problem, build_uniform_mesh(problem.domain, cells))
    cfg = OuterConfig(WidthSchedule.parse(schedule), tol=1e-6, maxit=maxit, epochs=2, seed=0)
    return outer_loop(form, cfg)[1]


@pytest.mark.slow
def test_criterion_06_monotone_residual(acceptance, run_mode_32pi, run_point_source):
    runs = {
        "2D mode 32pi": run_mode_32pi[0],
        "3D point source 4pi": run_point_source,
        "2D piecewise 8pi": _short_run(helmholtz_2d_piecewise(8 * np.pi), 4, "2r+19", 10),
        "maxwell dipole 4pi": _short_run(maxwell_dipole(4 * np.pi), 2, "r+2", 3),
        "maxwell piecewise 4pi": _short_run(maxwell_3d_piecewise(4 * np.pi, media_threshold=0.0), 2, "r+2", 3),
    }
    ok_all, parts = True, []
    for name, rec in runs.items():
        h = rec.J_history
        ok = monotone(h)
        ok_all &= ok
        parts.append(f"{name} J {h[0]:.1e} -> {h[-1]:.1e} in {len(h) - 1} steps")
    acceptance(6, ok_all, "J(u_r) non-increasing (slack 1e-12): " + "; ".join(parts))
    assert ok_all


# ------------------------------------------------------------ 9. Maxwell basis

def test_criterion_09_maxwell_basis(acceptance):
    rng = np.random.default_rng(9)
    d = rng.normal(size=(1000, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    orth = 0.0
    for v in d:
        p = polarization_from_direction(v)
        B = np.stack([p.d, p.g, p.f_perp])
        orth = max(orth, np.abs(B @ B.T - np.eye(3)).max())
    kappa = 4 * np.pi * np.sqrt(1 + 1j)
    res = 0.0
    x = rng.uniform(-0.5, 0.5, (100, 3))
    for v in d[:20]:
        p = polarization_from_direction(v)
        for slot in (0, 1):
            E, C = eval_vector_basis(p, kappa, slot, x)
            curlcurl = 1j * kappa * np.cross(p.d, C)
            res = max(res, np.abs(curlcurl - kappa ** 2 * E).max() / np.abs(kappa ** 2 * E).max())
    ok = orth <= 1e-12 and res < 1e-10
    acceptance(9, ok, f"orthonormality defect {orth:.1e} over 1000 directions (tol 1e-12); "
                      f"curl curl E - kappa^2 E {res:.1e} at 100 points per slot (tol 1e-10)")
    assert ok


# ------------------------------------------------------------ 10. determinism

def test_criterion_10_byte_identical_records(acceptance, tmp_path):
    texts = {
        "2D": 'problem = "helmholtz_2d_mode"\nomega_over_pi = 8\ncells = 2\nschedule = "2r+9"\n'
              'maxit = 3\nepochs = 2\nseed = 7\n',
        "maxwell": 'problem = "maxwell_dipole"\nomega_over_pi = 2\ncells = 1\nschedule = "r+1"\n'
                   'maxit = 2\nepochs = 1\nseed = 7\nquadrature_order = 8\n',
    }
    ok_all, parts = True, []
    for name, text in texts.items():
        cfg = parse_config(text)
        run(cfg, tmp_path / name / "a")
        run(cfg, tmp_path / name / "b")
        a = (tmp_path / name / "a" / "record.csv").read_bytes()
        b = (tmp_path / name / "b" / "record.csv").read_bytes()
        ok_all &= a == b
        parts.append(f"{name} {len(a)} bytes {'identical' if a == b else 'DIFFERENT'}")
    acceptance(10, ok_all, "record.csv across two runs: " + ", ".join(parts))
    assert ok_all


# ------------------------------------------------------------ 11. exact-solution oracle

def test_criterion_11_exact_solution_residuals(acceptance):
    rng = np.random.default_rng(11)
    problems = {"2D mode 16pi": helmholtz_2d_mode(16 * np.pi),
                "2D mode 32pi": helmholtz_2d_mode(32 * np.pi),
                "3D point source 4pi": helmholtz_3d_point_source(4 * np.pi),
                "maxwell dipole 4pi": maxwell_dipole(4 * np.pi)}
    ok_all, parts = True, []
    for name, p in problems.items():
        r = pde_residual(p, interior_points(rng, p, 100))
        ok_all &= r < 1e-6
        parts.append(f"{name} {r:.1e}")
    acceptance(11, ok_all, "FD PDE residual at 100 points (tol 1e-6): " + ", ".join(parts))
    assert ok_all
