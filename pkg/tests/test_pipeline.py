import numpy as np
import pytest

from qcdol.control_model import AffineProtocol, BilinearSystem, constant_protocol
from qcdol.errors import GridError, ReferenceAccuracyError
from qcdol.integrators import step1_simulate
from qcdol.linalg_core import (
    conjugate,
    density_matrix,
    hs_norm,
    purity,
    random_density_matrix,
    random_hermitian,
    unitarity_error,
    unitary_exp,
)
from qcdol.pipeline import (
    PiecewiseControl,
    error_e,
    error_f,
    hamiltonian_error,
    hamiltonian_errors,
    interval_unitaries,
    polar_refine,
    propagator,
    reference_trajectory,
    run_pipeline,
    step2_generate_controls,
    step3_propagate,
)
from qcdol.twoqubit import H1, closed_form_state


def constant_system(rng, d=3, values=(0.8, -0.3)):
    return BilinearSystem(
        random_hermitian(d, rng),
        [random_hermitian(d, rng) for _ in values],
        [constant_protocol(v, d) for v in values],
    )


# step 2


def test_controls_constant_protocols(rng):
    sys = constant_system(rng)
    th = step1_simulate(sys, random_density_matrix(3, rng), 1.0, 5, 3)
    ctrl = step2_generate_controls(th, sys)
    assert ctrl.values.shape == (5, 2)
    assert np.all(ctrl.values == np.array([0.8, -0.3]))


def test_controls_single_interval(setup):
    ctrl = step2_generate_controls(step1_simulate(setup.sys, setup.rho0, 1.0, 1, 4), setup.sys)
    np.testing.assert_allclose(ctrl.values, [[-2.0]], atol=1e-15)


def test_controls_two_euler_intervals(setup):
    # theta_1 = rho0 - i h [H0 - 2 H1, rho0]; the commutator has zero diagonal here
    th = step1_simulate(setup.sys, setup.rho0, 1.0, 2, 1)
    hm = setup.sys.h0 - 2 * H1
    theta1 = setup.rho0 - 0.5j * (hm @ setup.rho0 - setup.rho0 @ hm)
    expected = -2 * theta1[1, 1].real + 2 * theta1[2, 2].real
    ctrl = step2_generate_controls(th, setup.sys)
    assert ctrl.values[1, 0] == pytest.approx(expected, abs=1e-15)
    assert expected == pytest.approx(-2.0, abs=1e-15)


def test_piecewise_control_validation():
    with pytest.raises(ValueError):
        PiecewiseControl(3, 1.0, np.zeros((2, 1)))
    with pytest.raises(ValueError):
        PiecewiseControl(1, 1.0, np.array([[np.nan]]))


# step 3


def test_commuting_case_constant(rng):
    sys = BilinearSystem(np.diag([1.0, -0.5, 2.0]), [np.diag([0.3, 0.1, -1.0])], [constant_protocol(0.0, 3)])
    ctrl = PiecewiseControl(4, 1.0, rng.normal(size=(4, 1)))
    sigma0 = np.diag([0.2, 0.3, 0.5]).astype(complex)
    out = step3_propagate(sigma0, sys, ctrl)
    for s in out:
        np.testing.assert_allclose(s, sigma0, atol=1e-15)


def test_constant_control_matches_closed_form(rng):
    sys = constant_system(rng)
    rho0 = random_density_matrix(3, rng)
    run = run_pipeline(sys, rho0, rho0, 2.0, 8, 4)
    h = sys.h0 + 0.8 * sys.controls[0] - 0.3 * sys.controls[1]
    for n, s in enumerate(run.sigma):
        np.testing.assert_allclose(s, conjugate(unitary_exp(h, n * 0.25), rho0), atol=1e-13)


def test_open_loop_invariants(setup):
    run = run_pipeline(setup.sys, setup.rho0, setup.sigma0, 1.0, 256, 3)
    tr = np.trace(run.sigma, axis1=1, axis2=2)
    assert np.max(np.abs(tr - 1)) <= 1e-12
    assert np.max(np.abs(purity(run.sigma) - purity(setup.sigma0))) <= 1e-12
    assert unitarity_error(run.unitaries) <= 1e-12
    ev = np.linalg.eigvalsh(run.sigma)
    assert np.max(np.abs(ev - ev[0])) <= 1e-12


def test_step3_rejects_wrong_dimension(setup):
    ctrl = PiecewiseControl(1, 1.0, [[0.0]])
    with pytest.raises(ValueError):
        step3_propagate(np.eye(2) / 2, setup.sys, ctrl)


def test_interval_unitaries_match_single(setup):
    ctrl = PiecewiseControl(3, 0.3, [[0.1], [-0.4], [1.2]])
    us = interval_unitaries(setup.sys, ctrl)
    for u, (v,) in zip(us, ctrl.values):
        np.testing.assert_allclose(u, unitary_exp(setup.sys.h0 + v * H1, 0.1), atol=1e-15)


# reference trajectory


def test_reference_constant_system(rng):
    sys = constant_system(rng)
    rho0 = random_density_matrix(3, rng)
    ref = reference_trajectory(sys, rho0, 1.0, 512)
    h = sys.hamiltonian([0.8, -0.3])
    for j in (0, 100, 512):
        exact = conjugate(unitary_exp(h, j / 512), rho0)
        np.testing.assert_allclose(ref.states[j], exact, atol=1e-10)
        np.testing.assert_allclose(conjugate(ref.cumulative[j], rho0), exact, atol=1e-10)
    assert np.all(ref.control_rates == 0)


def test_reference_matches_closed_form(setup, small_ref):
    exact = closed_form_state(small_ref.times)
    assert np.max(hs_norm(small_ref.states - exact)) <= 1e-12
    t = small_ref.times
    np.testing.assert_allclose(small_ref.controls[:, 0], -2 / np.cosh(8 * t), atol=1e-12)
    gdot = 16 / np.cosh(8 * t) * np.tanh(8 * t)
    np.testing.assert_allclose(small_ref.control_rates[:, 0], gdot, atol=1e-10)


def test_reference_structure(setup, small_ref):
    assert np.array_equal(small_ref.states[0], setup.rho0)
    assert small_ref.est_error <= 1e-9
    assert unitarity_error(small_ref.step_unitaries) <= 1e-11
    for rho in small_ref.states[::256]:
        density_matrix(rho, psd_floor=-1e-8, tol_herm=1e-12, tol_trace=1e-10)


def test_reference_refinement_ratio(setup):
    # self-differences of RK5 at shared points shrink by about 2^5 per doubling
    refs = [reference_trajectory(setup.sys, setup.rho0, 1.0, n, validate=False) for n in (32, 64, 128)]
    d1 = np.max(hs_norm(refs[0].states - refs[1].states[::2]))
    d2 = np.max(hs_norm(refs[1].states - refs[2].states[::2]))
    assert 20 <= d1 / d2 <= 40


def test_reference_refuses_inaccurate(setup):
    with pytest.raises(ReferenceAccuracyError) as info:
        reference_trajectory(setup.sys, setup.rho0, 1.0, 16)
    assert info.value.achieved > 1e-9
    with pytest.raises(ValueError):
        reference_trajectory(setup.sys, setup.rho0, 1.0, 17)


def test_reference_grid_helpers(small_ref):
    assert small_ref.index_of(0.5) == 2048
    assert small_ref.stride(64) == 64
    with pytest.raises(GridError):
        small_ref.index_of(0.5 + 1e-6)
    with pytest.raises(GridError):
        small_ref.index_of(1.5)
    with pytest.raises(GridError):
        small_ref.stride(3)


def test_polar_refine_restores_unitarity(rng):
    u = unitary_exp(random_hermitian(4, rng), 1.0)
    noisy = u + 1e-8 * rng.normal(size=(4, 4))
    assert unitarity_error(polar_refine(noisy)) <= 1e-14
    assert hs_norm(polar_refine(noisy) - u) <= 1e-7


# propagator


def test_propagator_identity_and_composition(small_ref):
    np.testing.assert_allclose(propagator(small_ref, 0.25, 0.25).u, np.eye(4), atol=1e-15)
    full = propagator(small_ref, 1.0, 0.0).u
    split = propagator(small_ref, 1.0, 0.5).u @ propagator(small_ref, 0.5, 0.0).u
    np.testing.assert_allclose(full, split, atol=1e-9)
    with pytest.raises(GridError):
        propagator(small_ref, 0.25, 0.5)


def test_propagator_preserves_norm(small_ref, rng):
    a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    p = propagator(small_ref, 0.75, 0.125)
    assert hs_norm(p(a)) == pytest.approx(hs_norm(a), rel=1e-10)
    assert unitarity_error(p.u) <= 1e-10


def test_propagator_transports_reference_state(default_ref):
    # the closed-loop state solves the frozen linear system it generates
    moved = conjugate(default_ref.cumulative, default_ref.rho0)
    assert np.max(hs_norm(moved - default_ref.states)) <= 1e-10


# errors


def test_hamiltonian_error_hand_case(setup, small_ref):
    run = run_pipeline(setup.sys, setup.rho0, setup.sigma0, 1.0, 2, 1)
    assert hs_norm(hamiltonian_error(small_ref, run.controls, setup.sys, 0)) == 0.0
    e1 = hamiltonian_error(small_ref, run.controls, setup.sys, 1)
    expected = abs(-2 / np.cosh(4.0) + 2) * 2 * np.sqrt(2)
    assert hs_norm(e1) == pytest.approx(expected, rel=1e-11)
    np.testing.assert_allclose(hamiltonian_errors(small_ref, run.controls, setup.sys)[1], e1, atol=0)
    with pytest.raises(GridError):
        hamiltonian_error(small_ref, run.controls, setup.sys, 2)


def test_hamiltonian_error_exact_controls(setup, small_ref):
    k = small_ref.stride(16)
    ctrl = PiecewiseControl(16, 1.0, small_ref.controls[: small_ref.n_ref : k])
    assert np.all(hamiltonian_errors(small_ref, ctrl, setup.sys) == 0)


def test_hamiltonian_error_horizon_mismatch(setup, small_ref):
    with pytest.raises(GridError):
        hamiltonian_errors(small_ref, PiecewiseControl(2, 2.0, [[0.0], [0.0]]), setup.sys)
    with pytest.raises(GridError):
        hamiltonian_errors(small_ref, PiecewiseControl(3, 1.0, [[0.0]] * 3), setup.sys)


def test_error_e_and_f(setup, small_ref):
    run = run_pipeline(setup.sys, setup.rho0, setup.sigma0, 1.0, 32, 2)
    np.testing.assert_array_equal(error_e(small_ref, run.sigma, 0.0), setup.rho0 - setup.sigma0)
    e = error_e(small_ref, run.sigma, 1.0)
    assert abs(np.trace(e)) <= 1e-12
    f = error_f(small_ref, run.sigma, setup.rho0, setup.sigma0, 1.0)
    assert hs_norm(f) <= hs_norm(e) + hs_norm(setup.rho0 - setup.sigma0) + 1e-12
    with pytest.raises(GridError):
        error_e(small_ref, run.sigma, 1 / 64)


def test_pipeline_deterministic(setup, small_ref):
    a = run_pipeline(setup.sys, setup.rho0, setup.sigma0, 1.0, 64, 5)
    b = run_pipeline(setup.sys, setup.rho0, setup.sigma0, 1.0, 64, 5)
    assert np.array_equal(a.sigma, b.sigma)
    assert np.array_equal(
        hamiltonian_errors(small_ref, a.controls, setup.sys), hamiltonian_errors(small_ref, b.controls, setup.sys)
    )


def test_exact_controls_and_initial_state_give_zero_error(rng):
    # with constant protocols step 2 is exact, so sigma tracks rho up to the reference error
    sys = constant_system(rng)
    rho0 = random_density_matrix(3, rng)
    ref = reference_trajectory(sys, rho0, 1.0, 256)
    run = run_pipeline(sys, rho0, rho0, 1.0, 8, 2)
    assert np.max(hs_norm(ref.states[::32] - run.sigma)) <= 1e-10
    assert hs_norm(error_f(ref, run.sigma, rho0, rho0, 1.0)) <= 1e-10


def test_affine_protocol_dimension_checked(rng):
    with pytest.raises(ValueError):
        BilinearSystem(np.eye(3), [np.eye(3)], [AffineProtocol(np.eye(2))])
