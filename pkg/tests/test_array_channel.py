import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fdisac.array_channel import (SPEED_OF_LIGHT, ArrayConfig, DirectSiParams, OfdmParams, Target,
                                  codebook_angles, dft_codebook, direct_si_channel,
                                  downlink_channel, radar_si_channel, steering_vector,
                                  target_amplitude)

angles = st.floats(-90, 90, allow_nan=False)


# steering vectors

def test_steering_broadside_is_all_ones():
    np.testing.assert_allclose(steering_vector(0.0, 16, 0.5), np.ones(16), atol=0)


def test_steering_thirty_degrees_two_elements():
    np.testing.assert_allclose(steering_vector(30.0, 2, 0.5), [1, 1j], atol=1e-12)


def test_steering_matches_elementwise_oracle():
    oracle = [np.exp(1j * 2 * np.pi * i * 0.5 * np.sin(np.radians(17))) for i in range(16)]
    np.testing.assert_allclose(steering_vector(17.0, 16, 0.5), oracle, atol=1e-12)


@pytest.mark.parametrize("bad", [90.5, -91, np.nan])
def test_steering_rejects_out_of_range_angle(bad):
    with pytest.raises(ValueError):
        steering_vector(bad, 4)


def test_steering_norm_on_degree_grid():
    for a in range(-90, 91):
        v = steering_vector(a, 16)
        assert np.linalg.norm(v) ** 2 == pytest.approx(16, abs=1e-10)
        np.testing.assert_allclose(np.abs(v), 1.0, atol=1e-12)


# codebook

def test_codebook_shape_and_modulus():
    cb = dft_codebook(16, 5)
    assert cb.shape == (32, 16)
    np.testing.assert_allclose(np.abs(cb), 1.0, atol=1e-12)


@pytest.mark.parametrize("n", [2, 4, 8, 16])
def test_square_codebook_is_orthogonal(n):
    cb = dft_codebook(n, int(np.log2(n)))
    np.testing.assert_allclose(cb.conj() @ cb.T, n * np.eye(n), atol=1e-9)


def test_matched_beam_gain():
    cb = dft_codebook(16, 5)
    for b, ang in zip(cb, codebook_angles(5)):
        assert abs(b.conj() @ steering_vector(ang, 16)) ** 2 == pytest.approx(256, rel=1e-9)


def test_codebook_sines_uniform():
    s = np.sin(np.radians(codebook_angles(5)))
    np.testing.assert_allclose(np.diff(s), 2 / 32, atol=1e-12)
    assert s[0] == pytest.approx(-1.0)


def test_codebook_rejects_zero_bits():
    with pytest.raises(ValueError):
        dft_codebook(16, 0)


# target path gain

LAMBDA = SPEED_OF_LIGHT / 28e9


def test_amplitude_unit_range():
    t = Target(10.0, 1.0, ploss_exp=3.7)
    oracle = LAMBDA ** 2 * 100 / ((4 * np.pi) ** 2 * 10 ** 2)
    assert target_amplitude(t, LAMBDA) == pytest.approx(oracle, rel=1e-12)


def test_amplitude_table_value():
    t = Target(0.0, 80.0)
    # lambda^2 sigma / ((4 pi)^2 d^n sigma_s), evaluated term by term
    lam = 299792458.0 / 28e9
    num = lam * lam * 100.0
    den = (4 * np.pi) ** 2 * 80.0 ** 2.86 * 100.0
    assert target_amplitude(t, lam) == pytest.approx(num / den, rel=1e-12)
    assert 10 * np.log10(num / den) == pytest.approx(-115.8, abs=0.1)


def test_target_rejects_zero_range():
    with pytest.raises(ValueError):
        Target(0.0, 0.0)


@given(d=st.floats(0.5, 500), n_p=st.floats(1.5, 4.0))
def test_amplitude_range_doubling(d, n_p):
    t1, t2 = Target(0.0, d, ploss_exp=n_p), Target(0.0, 2 * d, ploss_exp=n_p)
    diff = 10 * np.log10(target_amplitude(t2, LAMBDA) / target_amplitude(t1, LAMBDA))
    assert diff == pytest.approx(-10 * n_p * np.log10(2), abs=1e-9)


def test_target_derived_quantities():
    t = Target(0.0, 30.0, velocity_mps=10.0)
    assert t.delay_s == pytest.approx(60.0 / SPEED_OF_LIGHT)
    assert t.doppler_hz(LAMBDA) == pytest.approx(20.0 / LAMBDA)


# radar channel

def test_radar_channel_empty_is_zero(small_array, ofdm):
    h = radar_si_channel([], small_array, ofdm, 0, 0)
    assert h.shape == (8, 8) and not np.any(h.entries)


def test_radar_channel_static_broadside_zero_delay(small_array, ofdm):
    # tau is tiny but nonzero for a valid target; compare against the full phase
    t = Target(0.0, 1e-9)
    h = radar_si_channel([t], small_array, ofdm, ofdm.n_subcarriers // 2, 0).entries
    alpha = target_amplitude(t, ofdm.wavelength_m)
    phase = np.exp(-2j * np.pi * t.delay_s * ofdm.carrier_hz)
    np.testing.assert_allclose(h, np.sqrt(alpha) * phase * np.ones((8, 8)), rtol=1e-9)


def test_radar_channel_phase_slope(small_array, ofdm):
    t = Target(20.0, 47.37)
    h0 = radar_si_channel([t], small_array, ofdm, 100, 0).entries[0, 0]
    h1 = radar_si_channel([t], small_array, ofdm, 101, 0).entries[0, 0]
    slope = np.angle(h1 / h0)
    expect = np.angle(np.exp(-2j * np.pi * (2 * 47.37 / SPEED_OF_LIGHT) * ofdm.scs_hz))
    assert slope == pytest.approx(expect, abs=1e-9)


def test_radar_channel_is_rank_limited(small_array, ofdm):
    ts = [Target(-40, 10), Target(5, 20, 3.0)]
    h = radar_si_channel(ts, small_array, ofdm, 7, 3).entries
    assert np.linalg.matrix_rank(h, tol=1e-9 * np.abs(h).max()) <= 2


@given(a1=angles, a2=angles, r1=st.floats(1, 80), r2=st.floats(1, 80),
       m=st.integers(0, 791), n=st.integers(0, 1023))
def test_radar_channel_superposition(a1, a2, r1, r2, m, n):
    arr, ofdm = ArrayConfig(2, 2, 4), OfdmParams()
    t1, t2 = Target(a1, r1, 5.0), Target(a2, r2, -3.0)
    both = radar_si_channel([t1, t2], arr, ofdm, m, n).entries
    parts = (radar_si_channel([t1], arr, ofdm, m, n).entries
             + radar_si_channel([t2], arr, ofdm, m, n).entries)
    np.testing.assert_allclose(both, parts, atol=1e-18, rtol=1e-12)


def test_static_target_independent_of_symbol(small_array, ofdm):
    t = Target(12.0, 33.0, velocity_mps=0.0)
    h0 = radar_si_channel([t], small_array, ofdm, 50, 0).entries
    h9 = radar_si_channel([t], small_array, ofdm, 50, 900).entries
    np.testing.assert_allclose(h0, h9, rtol=1e-12)


def test_radar_channel_index_checks(small_array, ofdm):
    with pytest.raises(IndexError):
        radar_si_channel([Target(0, 10)], small_array, ofdm, 792, 0)


# direct SI channel

def test_direct_si_rician_limit(small_array):
    h = direct_si_channel(DirectSiParams(40.0, 1000.0, 3), small_array).entries
    np.testing.assert_allclose(h, 1e-2 * np.ones((8, 8)), rtol=1e-12)


def test_direct_si_mean_power():
    arr = ArrayConfig(1, 1, 4)
    p = np.mean([np.mean(np.abs(direct_si_channel(DirectSiParams(40.0, 0.0, s), arr).entries) ** 2)
                 for s in range(2000)])
    assert p == pytest.approx(1e-4, rel=0.05)


def test_direct_si_kappa_split():
    arr = ArrayConfig(8, 8, 16)
    h = direct_si_channel(DirectSiParams(40.0, 35.0, 0), arr).entries
    gain = 1e-2
    los = gain * np.sqrt(10 ** 3.5 / (1 + 10 ** 3.5))
    scatter = h - los
    ratio = los ** 2 / np.mean(np.abs(scatter) ** 2)
    assert 10 * np.log10(ratio) == pytest.approx(35.0, abs=0.2)


def test_direct_si_seed_deterministic(small_array):
    a = direct_si_channel(DirectSiParams(seed=9), small_array).entries
    b = direct_si_channel(DirectSiParams(seed=9), small_array).entries
    assert a.tobytes() == b.tobytes()


def test_direct_si_rejects_negative_pathloss():
    with pytest.raises(ValueError):
        DirectSiParams(pathloss_db=-1.0)


# downlink channel

def test_downlink_single_broadside_path(small_array):
    h = downlink_channel([(0.0, 0.0)], 0.0, small_array, 4, random_phase=False).entries
    np.testing.assert_allclose(h, np.ones((4, 8)), atol=1e-12)


def test_downlink_rank_bounded_by_paths(small_array):
    h = downlink_channel([(-30, 10), (40, -20)], 0.0, small_array, 4, seed=5).entries
    assert np.linalg.matrix_rank(h, tol=1e-9) <= 2


@given(tx=angles, rx=angles, pl=st.floats(0, 150))
def test_downlink_norm_tracks_path_gain(tx, rx, pl):
    arr = ArrayConfig(2, 2, 4)
    h = downlink_channel([(tx, rx)], pl, arr, 4, random_phase=False).entries
    assert np.linalg.norm(h) ** 2 == pytest.approx(10 ** (-pl / 10) * 4 * 8, rel=1e-9)


def test_downlink_needs_a_path(small_array):
    with pytest.raises(ValueError):
        downlink_channel([], 0.0, small_array, 4)


# configuration types

def test_array_config_counts():
    arr = ArrayConfig()
    assert (arr.n_tx_antennas, arr.n_rx_antennas) == (128, 128)
    with pytest.raises(ValueError):
        ArrayConfig(0, 8, 16)


def test_ofdm_invariants():
    with pytest.raises(ValueError):
        OfdmParams(symbol_duration_s=1e-6)
    with pytest.raises(ValueError):
        OfdmParams(n_subcarriers=10000)
