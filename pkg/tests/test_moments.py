import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from rfsps import analytic
from rfsps.model import HomodyneConfig, MomentIndex, SystemParams, TruncationConfig
from rfsps.moments import (MomentTable, TruncationError, compare_tables,
                           gN_from_moments, indices_of_order, joint_ladder, joint_operators,
                           liouvillian, liouvillian_moments, liouvillian_steady_state,
                           moment_operator, regression_coefficients, solve_recursive, solve_sensor)

P0 = SystemParams(omega_sigma=1e-3, g=1e-3, Gamma=0.2)


# --- regression matrix ------------------------------------------------------

def _coefs(idx, p):
    return dict(regression_coefficients(idx, p))


def test_regression_entries_frozen():
    p = SystemParams(omega_sigma=0.3, gamma_sigma=1.0, Gamma=0.7, g=0.11, omega_a=0.05)
    # d<a>/dt = -Gamma/2 <a> + omega_a - i g <sigma>
    c = _coefs((0, 0, 0, 1), p)
    assert c == pytest.approx({(0, 0, 0, 1): -0.35, (0, 0, 0, 0): 0.05, (0, 1, 0, 0): -0.11j})
    # d<sigma>/dt = -gamma/2 <sigma> - i W + 2 i W <sigma^dag sigma>
    c = _coefs((0, 1, 0, 0), p)
    assert c == pytest.approx({(0, 1, 0, 0): -0.5, (0, 0, 0, 0): -0.3j, (1, 1, 0, 0): 0.6j})
    # d<sigma^dag sigma>/dt = -gamma <n> + i W <sigma> - i W <sigma^dag>
    c = _coefs((1, 1, 0, 0), p)
    assert c == pytest.approx({(1, 1, 0, 0): -1.0, (1, 0, 0, 0): -0.3j, (0, 1, 0, 0): 0.3j})
    # d<a^dag a>/dt = -Gamma <a^dag a> + omega_a (<a> + <a^dag>) + i g <sigma^dag a> - i g <a^dag sigma>
    c = _coefs((0, 0, 1, 1), p)
    assert c == pytest.approx({(0, 0, 1, 1): -0.7, (0, 0, 1, 0): 0.05, (0, 0, 0, 1): 0.05,
                               (0, 1, 1, 0): -0.11j, (1, 0, 0, 1): 0.11j})


def _random_low_state(rng, n_max, n_low):
    d = 2 * (n_max + 1)
    keep = [s * (n_max + 1) + k for s in (0, 1) for k in range(n_low + 1)]
    A = np.zeros((d, d), complex)
    B = rng.normal(size=(len(keep), len(keep))) + 1j * rng.normal(size=(len(keep), len(keep)))
    A[np.ix_(keep, keep)] = B
    rho = A @ A.conj().T
    return rho / np.trace(rho)


@pytest.mark.parametrize("g", [0.0, 0.2])
def test_regression_matches_master_equation(g):
    """Each hierarchy equation equals Tr(O L[rho]) for states away from the cutoff.

    With g != 0 only detector-only moments are checked: emitter equations
    drop the back-action of the detector by construction.
    """
    n_max = 7
    p = SystemParams(omega_sigma=0.37, gamma_sigma=1.0, Gamma=0.6, g=g, omega_a=0.21)
    H, cops, _ = joint_operators(p, n_max, "sensor")
    L = liouvillian(H, cops)
    ops = joint_ladder(n_max)
    rng = np.random.default_rng(1)
    rho = _random_low_state(rng, n_max, 3)
    drho = (L @ rho.reshape(-1, order="F")).reshape(rho.shape, order="F")
    for k in range(1, 5):
        for idx in indices_of_order(k):
            if g and (idx.m or idx.n):
                continue
            lhs = np.trace(moment_operator(ops, idx) @ drho)
            rhs = sum(c * np.trace(moment_operator(ops, t) @ rho)
                      for t, c in regression_coefficients(idx, p))
            assert lhs == pytest.approx(rhs, abs=1e-12), idx


# --- recursive solver ---------------------------------------------------------

def test_emitter_moments_leading_order():
    tab = solve_recursive(P0, 2)
    alpha, n = analytic.tls_steady_state(1e-3)
    assert tab[0, 1, 0, 0] == pytest.approx(alpha, rel=1e-5)
    assert tab[1, 1, 0, 0].real == pytest.approx(n, rel=1e-5)


def test_sensor_emitter_moments_exact():
    for W in (1e-3, 0.1, 2.0):
        tab = solve_sensor(SystemParams(omega_sigma=W, g=1e-3, Gamma=0.5))
        alpha, n = analytic.tls_steady_state(W)
        assert tab[0, 1, 0, 0] == pytest.approx(alpha, rel=1e-12)
        assert tab[1, 1, 0, 0].real == pytest.approx(n, rel=1e-12)


@given(st.floats(1e-2, 1e2))
def test_recursive_recovers_filtered_formula(G):
    p = SystemParams(omega_sigma=1e-3, g=1e-3, Gamma=G)
    tab = solve_recursive(p, 8)
    for N in (2, 3, 4):
        assert gN_from_moments(tab, N) == pytest.approx(analytic.gN_filtered(N, 1.0, G), rel=1e-8)


@given(st.floats(1e-2, 1e2), st.floats(0.0, 4.0).filter(lambda F: abs(F - 2) > 0.05))
def test_recursive_recovers_homodyne_formula(G, F):
    p = SystemParams(omega_sigma=1e-3, g=1e-3, Gamma=G)
    tab = solve_recursive(p, 8, HomodyneConfig.from_mixing(F))
    for N in (2, 3, 4):
        want = analytic.gN_homodyne(N, 1.0, G, F)
        assert gN_from_moments(tab, N) == pytest.approx(want, rel=1e-8, abs=1e-12)


@given(st.floats(0.05, 20.0))
def test_scale_invariance(s):
    h = HomodyneConfig.from_mixing(0.7)
    a = solve_recursive(P0, 4, h)
    b = solve_recursive(P0.scaled(s), 4, h)
    assert gN_from_moments(b, 2) == pytest.approx(gN_from_moments(a, 2), rel=1e-10)


def test_population_scales_with_coupling_squared():
    a = solve_recursive(P0, 2)[0, 0, 1, 1].real
    b = solve_recursive(SystemParams(omega_sigma=1e-3, g=2e-3, Gamma=0.2), 2)[0, 0, 1, 1].real
    c = solve_recursive(SystemParams(omega_sigma=2e-3, g=1e-3, Gamma=0.2), 2)[0, 0, 1, 1].real
    assert b / a == pytest.approx(4.0, rel=1e-12)
    assert c / a == pytest.approx(4.0, rel=1e-5)


def test_g2_independent_of_weak_coupling():
    a = gN_from_moments(solve_recursive(P0, 4), 2)
    b = gN_from_moments(solve_recursive(SystemParams(omega_sigma=1e-4, g=1e-5, Gamma=0.2), 4), 2)
    assert a == pytest.approx(b, rel=1e-12)


def test_sensor_agrees_with_recursive_at_weak_drive():
    F = analytic.compensation_condition(1.0, 0.2).f_minus
    for h in (None, HomodyneConfig.from_mixing(F)):
        a = solve_recursive(P0, 4, h)
        b = solve_sensor(P0, 2, h)
        assert compare_tables(a, b, 4) < 1e-4


def test_truncation_guard_on_order():
    with pytest.raises(TruncationError):
        solve_recursive(P0, 6, truncation=TruncationConfig(n_max=4))


# --- tables ---------------------------------------------------------------------

def test_table_conjugate_lookup_and_json():
    tab = solve_recursive(P0, 3)
    assert (1, 0, 0, 0) in tab
    assert tab[1, 0, 0, 0] == pytest.approx(np.conj(tab[0, 1, 0, 0]))
    with pytest.raises(KeyError):
        tab[0, 0, 3, 3]
    back = MomentTable.from_json(tab.to_json())
    assert back.entries == tab.entries and back.params == tab.params


def test_zero_drive_population_error():
    tab = solve_recursive(SystemParams(omega_sigma=0.0), 4)
    with pytest.raises(ValueError, match="population is zero"):
        gN_from_moments(tab, 2)


# --- master equation oracle -------------------------------------------------------

def test_liouvillian_state_is_physical(tmp_path):
    st_ = liouvillian_steady_state(P0, HomodyneConfig.from_mixing(1.0))
    rho = st_.matrix
    assert np.trace(rho) == pytest.approx(1.0)
    assert np.allclose(rho, rho.conj().T)
    assert np.linalg.eigvalsh(rho).min() > -1e-12
    st_.save_csv(tmp_path / "rho.csv")
    st_.save_npy(tmp_path / "rho.npy")
    assert np.array_equal(np.load(tmp_path / "rho.npy"), rho)


def test_liouvillian_conjugation_symmetry():
    tab = liouvillian_moments(P0, 4, HomodyneConfig.from_mixing(1.0))
    for idx in indices_of_order(3):
        conj = idx.conj()
        assert tab.entries[conj] == pytest.approx(np.conj(tab.entries[idx]), rel=1e-9, abs=1e-30)


def _mp_steady_state(params, n_max):
    H, cops, _ = joint_operators(params, n_max, "sensor")
    L = liouvillian(H, cops)
    dim = H.shape[0]
    mpmath.mp.dps = 60
    A = mpmath.matrix(L.shape[0], L.shape[1])
    for i, j in zip(*np.nonzero(L)):
        A[i, j] = mpmath.mpc(L[i, j].real, L[i, j].imag)
    for j in range(L.shape[1]):
        A[0, j] = 0
    for k in range(dim):
        A[0, k * (dim + 1)] = 1
    b = mpmath.matrix(L.shape[0], 1)
    b[0] = 1
    x = mpmath.lu_solve(A, b)
    return np.array([complex(x[i]) for i in range(L.shape[0])]).reshape(dim, dim, order="F")


def test_scaled_liouvillian_against_extended_precision():
    """Fourth-order moments sit near 1e-22; the scaled solve must still resolve them."""
    n_max = 4
    p = SystemParams(omega_sigma=1e-3, g=1e-3, Gamma=0.2, omega_a=3e-7)
    ref = _mp_steady_state(p, n_max)
    got = liouvillian_steady_state(p, None, TruncationConfig(n_max=n_max, tol=1e-3)).matrix
    ops = joint_ladder(n_max)
    for idx in [(0, 0, 1, 1), (0, 0, 2, 2), (1, 1, 1, 1), (0, 0, 0, 2)]:
        O = moment_operator(ops, MomentIndex(*idx))
        want = np.trace(ref @ O)
        assert np.trace(got @ O) == pytest.approx(want, rel=1e-7), idx


def test_truncation_error_when_cutoff_populated():
    p = SystemParams(omega_sigma=0.5, g=0.4, Gamma=0.1)
    with pytest.raises(TruncationError):
        liouvillian_steady_state(p, None, TruncationConfig(n_max=2))


def test_cascaded_model_reproduces_filtered_statistics():
    """The cascaded detector used by the trajectories shares the sensor-limit g2."""
    p = SystemParams(omega_sigma=2e-3, Gamma=0.2)
    F = analytic.compensation_condition(1.0, 0.2).f_minus
    plain = liouvillian_moments(p, 4, None, None, "cascaded")
    comp = liouvillian_moments(p, 4, HomodyneConfig.from_mixing(F), None, "cascaded")
    assert gN_from_moments(plain, 2) == pytest.approx(analytic.gN_filtered(2, 1.0, 0.2), rel=1e-3)
    assert gN_from_moments(comp, 2) < 1e-3
