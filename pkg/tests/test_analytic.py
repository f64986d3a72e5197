import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rfsps import analytic
from rfsps.model import HomodyneConfig, SystemParams

widths = st.floats(1e-2, 1e2)
mixings = st.floats(0.0, 4.0).filter(lambda F: abs(F - 2) > 1e-3)


def test_filtered_reference_values():
    assert analytic.gN_filtered(2, 1.0, 1.0) == 0.25
    assert analytic.gN_filtered(2, 1.0, 1 / 3) == pytest.approx(0.5625, abs=1e-15)
    assert analytic.gN_filtered(2, 1.0, 0.2) == pytest.approx(25 / 36)


def test_order_below_two_rejected():
    with pytest.raises(ValueError):
        analytic.gN_filtered(1, 1.0, 1.0)
    with pytest.raises(ValueError):
        analytic.gN_homodyne(1, 1.0, 1.0, 0.5)


@given(widths, widths)
def test_filtered_monotone_in_width(a, b):
    lo, hi = sorted((a, b))
    assert analytic.gN_filtered(2, 1.0, lo) >= analytic.gN_filtered(2, 1.0, hi)


@given(widths, mixings)
def test_g2_closed_form_matches_general_formula(G, F):
    assert analytic.g2_homodyne(1.0, G, F) == pytest.approx(
        analytic.gN_homodyne(2, 1.0, G, F), rel=1e-9, abs=1e-13)


@given(widths, st.integers(2, 6))
def test_no_laser_recovers_filtered(G, N):
    assert analytic.gN_homodyne(N, 1.0, G, 0.0) == pytest.approx(analytic.gN_filtered(N, 1.0, G), rel=1e-12)


@given(widths)
def test_compensation_roots(G):
    c = analytic.compensation_condition(1.0, G)
    assert c.f_minus + c.f_plus == pytest.approx(4.0)
    assert 0 <= c.f_minus < 2 < c.f_plus
    assert analytic.g2_homodyne(1.0, G, c.f_minus) <= 1e-12
    assert analytic.g2_homodyne(1.0, G, c.f_plus) <= 1e-12


def test_compensation_reference():
    c = analytic.compensation_condition(1.0, 0.2)
    assert (c.f_minus, c.f_plus) == pytest.approx((1.18350, 2.81650), abs=5e-6)


def test_divergence_point():
    with pytest.raises(analytic.DivergenceError):
        analytic.gN_homodyne(3, 1.0, 0.2, 2.0)
    with pytest.raises(analytic.DivergenceError):
        analytic.g2_homodyne(1.0, 0.2, 2.0)


@given(st.floats(0.05, 20.0), st.integers(2, 5))
def test_lower_and_upper_zeros_cancel(G, N):
    for F in (analytic.lower_zero(N, 1.0, G), analytic.upper_zero(N, 1.0, G)):
        assert analytic.gN_homodyne(N, 1.0, G, F) <= 1e-12


def test_higher_orders_near_zero_at_compensation():
    F = analytic.compensation_condition(1.0, 0.2).f_minus
    vals = [analytic.gN_homodyne(N, 1.0, 0.2, F) for N in (2, 3, 4)]
    assert vals == pytest.approx([0.0, 0.3603, 0.0770], abs=5e-4)


def test_joint_zeros():
    assert analytic.joint_zero_filter(2, 4) == pytest.approx([1 / 24], rel=1e-10)
    r5 = analytic.joint_zero_filter(2, 5)
    assert r5 == pytest.approx([(4 - math.sqrt(13)) / 12, (4 + math.sqrt(13)) / 12], rel=1e-10)
    assert analytic.joint_zero_filter(2, 5, branch="minus") == pytest.approx([r5[1]], rel=1e-10)
    assert analytic.joint_zero_filter(2, 5, branch="plus") == pytest.approx([r5[0]], rel=1e-10)
    assert analytic.joint_zero_filter(2, 3) == []


def test_joint_zero_scales_with_gamma():
    assert analytic.joint_zero_filter(2, 4, gamma_sigma=3.0) == pytest.approx([3 / 24], rel=1e-10)


def test_joint_zero_no_root():
    with pytest.raises(ValueError, match="no joint zero"):
        analytic.joint_zero_filter(3, 5)


# --- decomposition -------------------------------------------------------------

@given(st.floats(1e-3, 1e2))
def test_decomposition_identity_emitter(W):
    d = analytic.decompose_g2(analytic.sigma_field_moments(W))
    assert d.total == pytest.approx(d.g2, abs=1e-12)
    assert d.g2 == 0.0
    cf = analytic.decompose_sigma_closed_form(W)
    assert (d.i0, d.i1, d.i2) == pytest.approx((cf.i0, cf.i1, cf.i2), abs=1e-9)


def test_decomposition_asymptotes():
    weak = analytic.decompose_g2(analytic.sigma_field_moments(1e-3))
    assert (weak.i0, weak.i1, weak.i2) == pytest.approx((1, 0, -2), abs=1e-3)
    strong = analytic.decompose_g2(analytic.sigma_field_moments(1e2))
    assert (strong.i0, strong.i1, strong.i2) == pytest.approx((-1, 0, 0), abs=1e-2)


def test_decomposition_of_coherent_field():
    alpha = 0.3 - 0.2j
    mom = {(i, j): np.conj(alpha) ** i * alpha ** j for i in range(3) for j in range(3)}
    d = analytic.decompose_g2(mom)
    assert d.g2 == pytest.approx(1.0)
    assert (d.i0, d.i1, d.i2) == pytest.approx((0, 0, 0), abs=1e-12)


def test_decomposition_needs_population():
    mom = {(i, j): 0j for i in range(3) for j in range(3)}
    mom[0, 0] = 1
    with pytest.raises(ValueError):
        analytic.decompose_g2(mom)


# --- spectra and rates -----------------------------------------------------------

def test_heitler_spectrum():
    delta, dens = analytic.spectrum_heitler(np.array([0.0]), 1e-3)
    assert delta == pytest.approx(1 - 8e-6)
    assert dens[0] == pytest.approx(8e-6 / (math.pi * 0.5))
    with pytest.raises(ValueError, match="weak-drive"):
        analytic.spectrum_heitler(np.array([0.0]), 1.0)


def test_rates():
    p = SystemParams(omega_sigma=1e-3)
    i_rf, i_int, ratio = analytic.emission_rates(p, HomodyneConfig())
    assert i_rf == pytest.approx(4e-6, rel=1e-12)
    assert ratio == pytest.approx(0.5)
    F = analytic.compensation_condition(1.0, 0.2).f_minus
    assert analytic.intensity_ratio(F, 1.0) == pytest.approx(1 / 6, rel=1e-12)
    assert analytic.emission_rates(p, HomodyneConfig.from_mixing(F))[2] == pytest.approx(
        analytic.compensated_ratio(1.0, 0.2, 1 / math.sqrt(2)), rel=1e-12)


@given(widths, st.floats(0.1, 1.0))
def test_compensated_ratio_general(G, t):
    F = analytic.compensation_condition(1.0, G).f_minus
    assert analytic.intensity_ratio(F, t) == pytest.approx(analytic.compensated_ratio(1.0, G, t), rel=1e-12)
