import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fdisac.array_channel import ArrayConfig, codebook_angles, dft_codebook, subarray_steering
from fdisac.beamforming import (HybridBeamformer, achievable_rate, assign_directions,
                                beam_gain_pattern, check_rf_structure, rf_beams, rf_matrix,
                                select_analog_beams, transmit_power, waterfill,
                                waterfilling_precoder)

from oracles import brute_force_rate, logdet_rate

ARR = ArrayConfig()
CB = dft_codebook(16, 5)


def _best_angle(d):
    g = np.abs(CB.conj() @ subarray_steering(d, ARR))
    return codebook_angles(5)[int(np.argmax(g))]


def test_single_broadside_direction_all_broadside():
    v_rf, w_rf, _, _ = select_analog_beams(CB, [0.0], [0.0], ARR)
    broadside = np.ones(16)
    for rf in (v_rf, w_rf):
        np.testing.assert_allclose(rf_beams(rf, 16), np.tile(broadside, (8, 1)), atol=1e-12)


def test_six_targets_two_comm_one_chain_each():
    targets = [-70.0, -40.0, -12.0, 15.0, 44.0, 71.0]
    comm = [-25.0, 30.0]
    v_rf, w_rf, tx, rx = select_analog_beams(CB, comm, targets, ARR)
    assert sorted(tx) == sorted(comm + targets)
    # each TX direction is served by its best codeword
    beams = rf_beams(v_rf, 16)
    for j, d in enumerate(tx):
        g = np.abs(CB.conj() @ subarray_steering(d, ARR)) ** 2
        assert abs(beams[j].conj() @ subarray_steering(d, ARR)) ** 2 == pytest.approx(g.max())
    assert set(rx) <= set(targets)
    assert check_rf_structure(v_rf, ARR, "tx") and check_rf_structure(w_rf, ARR, "rx")


def test_rx_pattern_favours_targets_over_comm():
    targets, comm = [-50.0, 20.0], [60.0]
    _, w_rf, _, _ = select_analog_beams(CB, comm, targets, ARR)
    g_comm = beam_gain_pattern(w_rf, ARR, comm)
    g_tgt = beam_gain_pattern(w_rf, ARR, targets)
    assert g_comm.max() <= g_tgt.min()


def test_more_directions_than_chains_are_clustered():
    dirs = list(np.linspace(-80, 80, 13))
    out = assign_directions(dirs, 8)
    assert len(out) == 8


def test_empty_directions_default_broadside():
    assert assign_directions([], 4) == [0.0] * 4


def test_pattern_peak_and_null():
    rf = rf_matrix(np.ones((1, 16)), ArrayConfig(1, 1, 16))
    arr = ArrayConfig(1, 1, 16)
    assert beam_gain_pattern(rf, arr, [0.0])[0] == pytest.approx(10 * np.log10(256))
    null = np.degrees(np.arcsin(2 / 16))  # first null of a 16-element half-wave ULA
    assert beam_gain_pattern(rf, arr, [null])[0] <= 10 * np.log10(256) - 20


def test_pattern_symmetric_for_symmetric_assignment():
    arr = ArrayConfig(2, 2, 16)
    v_rf, _, _, _ = select_analog_beams(dft_codebook(16, 5), [-30.0, 30.0], [], arr)
    grid = np.linspace(0, 89, 50)
    g_pos = beam_gain_pattern(v_rf, arr, grid)
    g_neg = beam_gain_pattern(v_rf, arr, -grid)
    # the DFT grid is asymmetric by one bin, so compare the matched directions only
    assert beam_gain_pattern(v_rf, arr, [_best_angle(30.0)])[0] == pytest.approx(
        beam_gain_pattern(v_rf, arr, [_best_angle(-30.0)])[0], abs=1e-9)
    assert g_pos.shape == g_neg.shape


def test_pattern_rejects_bad_angles():
    with pytest.raises(ValueError):
        beam_gain_pattern(rf_matrix(np.ones((1, 4)), ArrayConfig(1, 1, 4)), ArrayConfig(1, 1, 4), [95])


def test_rf_matrix_roundtrip_and_shape_check():
    b = CB[:8]
    rf = rf_matrix(b, ARR)
    np.testing.assert_allclose(rf_beams(rf, 16), b)
    with pytest.raises(ValueError):
        rf_matrix(CB[:7], ARR)
    bad = rf.copy()
    bad[0, 1] = 1.0
    assert not check_rf_structure(bad, ARR)


# waterfilling

def test_waterfill_rank_one():
    h = np.outer([1.0, 2.0], [0.5, 1.0, 0.0j])
    g = np.linalg.norm(h, 2)
    v_bb, rate = waterfilling_precoder(h, 3.0, 0.1)
    assert rate == pytest.approx(np.log2(1 + 3.0 * g ** 2 / 0.1))
    p = np.sum(np.abs(v_bb) ** 2, axis=0)
    assert np.count_nonzero(p > 1e-12) == 1


def test_waterfill_equal_gains_split_equally():
    p = waterfill([2.0, 2.0], 1.0)
    np.testing.assert_allclose(p, [0.5, 0.5])


def test_waterfill_drops_weak_mode():
    p = waterfill([10.0, 0.01], 0.5)
    assert p[1] == 0 and p[0] == pytest.approx(0.5)


def test_zero_channel_rate_zero():
    v_bb, rate = waterfilling_precoder(np.zeros((4, 8)), 1.0, 1.0)
    assert rate == 0.0 and not np.any(v_bb)


def test_waterfilling_against_brute_force():
    rng = np.random.default_rng(7)
    for _ in range(5):
        h = (rng.standard_normal((4, 8)) + 1j * rng.standard_normal((4, 8))) / np.sqrt(2)
        _, rate = waterfilling_precoder(h, 10.0, 1.0)
        assert rate == pytest.approx(brute_force_rate(h, 10.0, 1.0), abs=0.01)
        assert rate >= brute_force_rate(h, 10.0, 1.0) - 1e-9


@given(seed=st.integers(0, 10_000), power=st.floats(1e-3, 1e3))
def test_waterfilling_meets_budget_with_equality(seed, power):
    rng = np.random.default_rng(seed)
    h = rng.standard_normal((4, 8)) + 1j * rng.standard_normal((4, 8))
    v_rf = rf_matrix(CB[rng.integers(0, 32, 8)], ARR)
    h_dl = rng.standard_normal((4, 128)) + 1j * rng.standard_normal((4, 128))
    v_bb, rate = waterfilling_precoder(h_dl @ v_rf, power, 1.0, v_rf=v_rf)
    assert transmit_power(v_rf, v_bb) == pytest.approx(power, rel=1e-9)
    assert achievable_rate(h_dl, v_rf @ v_bb, 1.0) == pytest.approx(rate, rel=1e-9, abs=1e-9)
    v_bb2, _ = waterfilling_precoder(h, power, 1.0)
    assert np.sum(np.abs(v_bb2) ** 2) == pytest.approx(power, rel=1e-9)


# achievable rate

def test_rate_zero_power():
    assert achievable_rate(np.ones((2, 4)), np.zeros((4, 2)), 1.0) == 0.0


def test_rate_identity_channel_equal_power():
    d, p, s2 = 3, 6.0, 0.5
    f = np.eye(d) * np.sqrt(p / d)
    assert achievable_rate(np.eye(d), f, s2) == pytest.approx(d * np.log2(1 + p / (d * s2)))


def test_rate_matches_eigenvalue_oracle():
    rng = np.random.default_rng(3)
    h = rng.standard_normal((4, 16)) + 1j * rng.standard_normal((4, 16))
    f = rng.standard_normal((16, 3)) + 1j * rng.standard_normal((16, 3))
    assert achievable_rate(h, f, 2.0) == pytest.approx(logdet_rate(h, f, 2.0))


def test_rate_monotone_in_power():
    rng = np.random.default_rng(4)
    h = rng.standard_normal((4, 8)) + 1j * rng.standard_normal((4, 8))
    rates = [waterfilling_precoder(h, p, 1.0)[1] for p in np.logspace(-2, 3, 30)]
    assert np.all(np.diff(rates) >= -1e-12)


@given(seed=st.integers(0, 10_000))
def test_rate_invariant_to_stream_rotation(seed):
    rng = np.random.default_rng(seed)
    h = rng.standard_normal((4, 8)) + 1j * rng.standard_normal((4, 8))
    f = rng.standard_normal((8, 3)) + 1j * rng.standard_normal((8, 3))
    q, _ = np.linalg.qr(rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3)))
    assert achievable_rate(h, f @ q, 1.0) == pytest.approx(achievable_rate(h, f, 1.0), rel=1e-9)


def test_hybrid_beamformer_helpers():
    v_rf = rf_matrix(CB[:8], ARR)
    v_bb = np.eye(8)[:, :2]
    bf = HybridBeamformer(v_rf, v_bb, v_rf)
    assert bf.n_streams == 2
    assert bf.power() == pytest.approx(32.0)
    np.testing.assert_allclose(bf.precoder(), v_rf @ v_bb)
