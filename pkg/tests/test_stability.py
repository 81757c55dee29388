import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import linalg

from pirqsim.pirq import controller_initial_condition, inversion_coefficients
from pirqsim.stability import (
    CertificationError,
    TransverseSystem,
    certify,
    circle_criterion_check,
    lyapunov_grid_check,
    maneuver_curve,
    riccati_residual,
    solve_riccati,
    transverse_decay_sim,
    transverse_system,
    transverse_vectors,
)

G0 = 9.807
A_D = G0 * (1 - 0.378)
B = 0.05


def scalar_system(abar=-1.0):
    # A(theta) = abar + theta
    return TransverseSystem(np.array([[abar]]), np.array([0.0]), np.array([-1.0]), np.array([1.0]), 0.5, 1.0)


@pytest.fixture(scope="module")
def nominal(plant, sensor, gains):
    return transverse_system(plant, gains, sensor, B, A_D)


@pytest.fixture(scope="module")
def curve_data(plant, gains):
    coeffs = inversion_coefficients(plant, B, A_D, G0)
    return coeffs, controller_initial_condition(gains, coeffs)


def test_curve_onset(curve_data, sensor):
    coeffs, ic = curve_data
    pt = maneuver_curve(0.0, coeffs, ic, A_D, sensor, G0)
    np.testing.assert_array_equal(pt.xp, coeffs.x0)
    np.testing.assert_array_equal(pt.xc, ic.state)
    np.testing.assert_allclose(pt.xa, -np.linalg.solve(sensor.A, sensor.b) * (A_D - G0))


@pytest.mark.parametrize("v", range(11))
def test_curve_output_relation(curve_data, sensor, plant, v):
    coeffs, ic = curve_data
    xp = maneuver_curve(float(v), coeffs, ic, A_D, sensor, G0).xp
    assert plant.c @ xp - B * v * v - (A_D - G0) == pytest.approx(0.0, abs=1e-10)


@pytest.mark.parametrize("v", [0.0, 2.5, 9.0])
def test_curve_flow_relation(curve_data, sensor, plant, gains, v):
    coeffs, ic = curve_data
    h = 1e-4
    pt = maneuver_curve(v, coeffs, ic, A_D, sensor, G0)
    dxp = (maneuver_curve(v + h, coeffs, ic, A_D, sensor, G0).xp
           - maneuver_curve(v - h, coeffs, ic, A_D, sensor, G0).xp) / (2 * h)
    cc = np.array([gains.kQ, gains.kR, gains.kI])
    np.testing.assert_allclose(dxp * A_D, plant.A @ pt.xp + plant.b * (cc @ pt.xc), atol=1e-8)


def test_transverse_vector_structure(plant, gains, sensor):
    x1, x2 = transverse_vectors(plant, gains, sensor.n)
    np.testing.assert_array_equal(x1[5:], 0)
    np.testing.assert_array_equal(x2[5:], 0)
    np.testing.assert_allclose(x2[2:5], [1 / gains.kQ, 0, 0])


@pytest.mark.parametrize("theta", [0.0, 0.4, 1.3])
def test_transverse_vectors_match_curve_derivative(curve_data, plant, gains, sensor, theta):
    coeffs, ic = curve_data
    x1, x2 = transverse_vectors(plant, gains, sensor.n)
    h = 1e-5
    v = A_D * theta
    fd = (maneuver_curve(v + h, coeffs, ic, A_D, sensor, G0).stacked()
          - maneuver_curve(v - h, coeffs, ic, A_D, sensor, G0).stacked()) / (2 * h)
    np.testing.assert_allclose(2 * B * A_D * (x1 + x2 * theta), fd, rtol=1e-6, atol=1e-8)


def test_no_drag_is_constant(plant, gains, sensor):
    ts = transverse_system(plant, gains, sensor, 0.0, A_D)
    for th in (0.0, 1.0, 5.0):
        np.testing.assert_array_equal(ts.a_theta(th), ts.Abar)


def test_affine_form(nominal):
    x1c = np.outer(nominal.xbar1, nominal.cbar)
    np.testing.assert_allclose(nominal.a_theta(0.0), nominal.Abar - 2 * B * A_D * x1c)
    diff = nominal.a_theta(2.3) - nominal.a_theta(0.8)
    np.testing.assert_allclose(diff, -2 * B * A_D * 1.5 * np.outer(nominal.xbar2, nominal.cbar), atol=1e-12)
    assert np.linalg.matrix_rank(diff) <= 1


def test_scalar_circle():
    res = circle_criterion_check(scalar_system(), 0.0, -0.5, 0.5)
    assert res.peak == pytest.approx(1.0)
    assert res.peak_omega == 0.0
    assert res.certified and res.bound == pytest.approx(2.0)
    assert not circle_criterion_check(scalar_system(), 0.0, -1.5, 1.5).certified


def test_unstable_shift_not_certified():
    res = circle_criterion_check(scalar_system(), 2.0, -0.5, 0.5)
    assert not res.certified and res.margin == -np.inf


def test_empty_grid_rejected():
    with pytest.raises(ValueError):
        circle_criterion_check(scalar_system(), 0.0, -0.5, 0.5, omega_grid=[])


def test_no_drag_path(plant, gains, sensor):
    ts = transverse_system(plant, gains, sensor, 0.0, A_D)
    res = circle_criterion_check(ts, 1.0, 0.0, 3.0)
    assert res.certified and res.margin == np.inf


def test_nominal_window_certified_and_grid_consistent(nominal):
    res = circle_criterion_check(nominal, 0.5, 0.0, 3.0)
    assert res.margin > 0
    P = solve_riccati(res.Atilde, 0.5, nominal.b_vec, nominal.c_vec, res.theta_r)
    assert lyapunov_grid_check(nominal, P, 0.5, np.linspace(0.0, 3.0, 31)).passed


def test_scalar_riccati_matches_quadratic():
    for theta_r in (0.3, 0.8, 0.999):
        P = solve_riccati(np.array([[-1.0]]), 0.0, [1.0], [1.0], theta_r)
        # theta_r^2 p^2 - 2 p + 1 = 0, smaller root
        expected = (1 - np.sqrt(1 - theta_r**2)) / theta_r**2
        assert P[0, 0] == pytest.approx(expected, rel=1e-10)


def test_scalar_riccati_boundary_has_no_strict_solution():
    # theta_r = 1 gives the double root p = 1 with Hamiltonian eigenvalues at 0
    with pytest.raises(CertificationError):
        solve_riccati(np.array([[-1.0]]), 0.0, [1.0], [1.0], 1.0)


def test_riccati_reduces_to_lyapunov(nominal):
    F = nominal.A0
    eps = 0.3
    P = solve_riccati(F, eps, nominal.b_vec, nominal.c_vec, 0.0)
    ref = linalg.solve_continuous_lyapunov((F + eps * np.eye(len(F))).T, -np.outer(nominal.c_vec, nominal.c_vec))
    np.testing.assert_allclose(P, ref, rtol=1e-8, atol=1e-12 * np.abs(ref).max())


def test_riccati_residual_small(nominal):
    res = circle_criterion_check(nominal, 1.0, 0.0, 3.0)
    P = solve_riccati(res.Atilde, 1.0, nominal.b_vec, nominal.c_vec, res.theta_r)
    r = riccati_residual(P, res.Atilde, 1.0, nominal.b_vec, nominal.c_vec, res.theta_r)
    assert r <= 1e-8 * (1 + np.linalg.norm(P))
    assert np.linalg.eigvalsh(P)[0] > 0


def test_grid_check_fails_with_excess_rate(nominal):
    cert = certify(nominal, 0.0, 3.0)
    thetas = np.linspace(0.0, 3.0, 31)
    assert lyapunov_grid_check(nominal, cert.P, cert.epsilon, thetas).passed
    bad = lyapunov_grid_check(nominal, cert.P, 2 * cert.epsilon + 1.0, thetas)
    assert not bad.passed and bad.worst > 0


def test_grid_check_no_drag(plant, gains, sensor):
    ts = transverse_system(plant, gains, sensor, 0.0, A_D)
    eps = 0.5 * -np.max(np.linalg.eigvals(ts.Abar).real)
    F = ts.Abar + eps * np.eye(len(ts.Abar))
    P = linalg.solve_continuous_lyapunov(F.T, -np.eye(len(F)))
    assert lyapunov_grid_check(ts, P, eps, np.linspace(-100, 100, 21)).passed


def test_certify_conventions(nominal):
    mid = certify(nominal, 0.0, 1.0)
    assert mid.epsilon > 0
    assert lyapunov_grid_check(nominal, mid.P, mid.epsilon, np.linspace(0, 1, 61)).passed
    # the alternative centring is only accepted when its P survives the grid check
    try:
        alt = certify(nominal, 0.0, 1.0, convention="span-squared")
    except CertificationError:
        pass
    else:
        assert lyapunov_grid_check(nominal, alt.P, alt.epsilon, np.linspace(0, 1, 61)).passed
    with pytest.raises(ValueError):
        certify(nominal, 0.0, 3.0, convention="other")


def test_certify_fixed_epsilon_too_large(nominal):
    with pytest.raises(CertificationError):
        certify(nominal, 0.0, 3.0, epsilon=1e3)


def test_certificate_report(nominal):
    report = certify(nominal, 0.0, 3.0).to_report()
    keys = [line.split(" = ")[0] for line in report.splitlines()]
    assert "epsilon" in keys and "riccati_residual" in keys


def test_decay_sim_on_curve(plant, gains, sensor, nominal):
    cert = certify(nominal, 0.0, 3.0)
    rep = transverse_decay_sim(plant, gains, sensor, B, A_D, G0, np.zeros(7), cert.P, cert.epsilon, (0.0, 3.0))
    assert np.max(np.abs(rep.rho)) < 1e-7
    np.testing.assert_allclose(rep.theta, rep.t, atol=1e-7)


def test_decay_rate_without_drag(plant, gains, sensor):
    ts = transverse_system(plant, gains, sensor, 0.0, A_D)
    abscissa = float(np.max(np.linalg.eigvals(ts.Abar).real))
    rho0 = np.zeros(7)
    rho0[2] = 1.0
    F = ts.Abar
    P = linalg.solve_continuous_lyapunov(F.T, -np.eye(7))
    rep = transverse_decay_sim(plant, gains, sensor, 0.0, A_D, G0, rho0, P, 0.0, (-1e3, 1e3), duration=2.5)
    # the transverse state evolves exactly by exp(Abar t)
    expected = linalg.expm(F * rep.t[-1]) @ rho0
    np.testing.assert_allclose(rep.rho[-1], expected, atol=1e-9)
    # envelope slope: peak norm over consecutive 0.25 s blocks (the slow modes oscillate)
    norms = np.linalg.norm(rep.rho, axis=1)
    edges = np.arange(1.0, 2.5 + 1e-9, 0.25)
    peaks = [norms[(rep.t >= a) & (rep.t < a + 0.25)].max() for a in edges[:-1]]
    rate = np.polyfit(edges[:-1], np.log(peaks), 1)[0]
    assert rate == pytest.approx(abscissa, rel=0.1)


@settings(max_examples=40, deadline=None)
@given(st.floats(-5.0, -0.2), st.floats(0.05, 6.0))
def test_scalar_certificate_is_sound(abar, window):
    ts = scalar_system(abar)
    lo, hi = -window / 2, window / 2
    res = circle_criterion_check(ts, 0.0, lo, hi)
    if not res.certified:
        return
    P = solve_riccati(res.Atilde, 0.0, ts.b_vec, ts.c_vec, res.theta_r)
    assert lyapunov_grid_check(ts, P, 0.0, np.linspace(lo, hi, 11)).passed
