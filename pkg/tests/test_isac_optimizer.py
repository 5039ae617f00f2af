"""Joint design: reductions to waterfilling, constraint checks, monotonicity."""

import json
from dataclasses import replace

import numpy as np
import pytest

from fdisac.beamforming import check_rf_structure, waterfilling_precoder
from fdisac.cancellation import POWER_FLOOR_DBM, residual_rf_power
from fdisac.errors import InfeasibleError
from fdisac.isac_optimizer import (
    _c3_rho,
    _solve_rho,
    blend_precoders,
    check_constraints,
    save_trace,
    solve_op,
)
from fdisac.scenario import table_scenario
from fdisac.signal_model import ChannelSet

SEEDS = (0, 1, 2, 4)
RATE_TOL = 0.01  # bps/Hz, resolution of the power back-off bisection


@pytest.fixture(scope="module")
def solved():
    out = {}
    for seed in SEEDS:
        sc = table_scenario(seed=seed)
        out[seed] = (sc, solve_op(sc))
    return out


# ---------------------------------------------------------------- oracles

@pytest.mark.parametrize("seed", [0, 1, 2])
def test_no_targets_reduces_to_waterfilling(seed):
    sc = table_scenario(n_targets=0, seed=seed)
    cfg = solve_op(sc)
    v_rf = cfg.beamformer.v_rf
    _, rate = waterfilling_precoder(ChannelSet(sc).h_dl @ v_rf, sc.constraints.power_budget_w,
                                    sc.noise_user_w, v_rf=v_rf, n_streams=sc.n_streams)
    assert cfg.achieved_rate == pytest.approx(rate, abs=1e-6)
    assert cfg.rho == 0.0
    assert cfg.beamformer.power() == pytest.approx(sc.constraints.power_budget_w, rel=1e-9)


def test_vanishing_power_is_infeasible():
    sc = table_scenario(seed=0, tx_power_dbm=-60.0)
    with pytest.raises(InfeasibleError) as exc:
        solve_op(sc)
    assert exc.value.constraint == "C4"
    assert exc.value.shortfall_db > 0
    assert exc.value.detail["trace"]
    assert exc.value.to_dict()["error"] == "infeasible"


def test_full_tap_canceller_leaves_only_echoes():
    sc = table_scenario(seed=0)
    sc = sc.replace(constraints=replace(sc.constraints, n_taps=64))
    cfg = solve_op(sc)
    bf, ch = cfg.beamformer, ChannelSet(sc)
    assert len(cfg.analog.taps) == 64
    direct = residual_rf_power(ch.h_bb, cfg.analog, bf.v_rf, bf.v_bb, bf.w_rf)
    assert np.all(direct <= POWER_FLOOR_DBM)
    # what is left at the chain inputs is target echo power, which no tap removes
    echo = residual_rf_power(ch.radar_matrix().entries, None, bf.v_rf, bf.v_bb, bf.w_rf)
    lam = sc.constraints.sat_spec.as_array()
    assert cfg.constraint_report["C3"]["margin"] == pytest.approx(np.min(lam - echo), abs=1e-6)


def test_full_tap_margin_is_large_without_near_targets():
    sc = table_scenario(seed=0, n_targets=0)
    sc = sc.replace(constraints=replace(sc.constraints, n_taps=64))
    cfg = solve_op(sc)
    assert cfg.constraint_report["C3"]["margin"] > 200.0


# ---------------------------------------------------------------- solved configs

@pytest.mark.parametrize("seed", SEEDS)
def test_checker_passes(solved, seed):
    sc, cfg = solved[seed]
    rep = check_constraints(cfg, sc)
    assert rep.all_pass, rep.to_dict()
    assert set(rep.entries) >= {"C1", "C2", "C3", "C4", "rf_structure"}
    assert rep["C1"]["margin"] >= -1e-9 * sc.constraints.power_budget_w


@pytest.mark.parametrize("seed", SEEDS)
def test_checker_agrees_with_solver(solved, seed):
    sc, cfg = solved[seed]
    rep = check_constraints(cfg, sc)
    np.testing.assert_allclose(rep["C4"]["target_sinr_db"], cfg.target_sinr_db, atol=1e-6)
    assert rep["C4"]["margin"] == pytest.approx(cfg.min_target_sinr_db - sc.constraints.lambda_s_db,
                                                abs=1e-6)


@pytest.mark.parametrize("seed", SEEDS)
def test_rho_is_tight_on_its_binding_constraint(solved, seed):
    sc, cfg = solved[seed]
    if cfg.rho_binding == "C4":
        assert abs(cfg.min_target_sinr_db - sc.constraints.lambda_s_db) <= 0.1
    elif cfg.rho_binding == "C3":
        assert 0.0 <= cfg.constraint_report["C3"]["margin"] <= 0.1
    else:
        assert cfg.rho == 0.0


@pytest.mark.parametrize("seed", SEEDS)
def test_structure_of_outputs(solved, seed):
    sc, cfg = solved[seed]
    bf = cfg.beamformer
    assert check_rf_structure(bf.v_rf, sc.array, "tx")
    assert check_rf_structure(bf.w_rf, sc.array, "rx")
    assert bf.v_bb.shape == (sc.array.n_tx_rf, sc.n_streams)
    assert len(cfg.analog.taps) <= sc.constraints.n_taps
    assert 0.0 <= cfg.rho <= 1.0
    assert cfg.achieved_rate <= cfg.comm_rate + 1e-9
    assert len(cfg.target_sinr_db) == sc.n_targets


def test_deterministic(solved):
    sc, cfg = solved[0]
    again = solve_op(sc)
    assert again.achieved_rate == cfg.achieved_rate
    np.testing.assert_array_equal(again.beamformer.v_bb, cfg.beamformer.v_bb)


def test_trace_is_strict_json(solved, tmp_path):
    _, cfg = solved[0]
    path = tmp_path / "trace.json"
    save_trace(path, cfg)
    rows = json.loads(path.read_text(), parse_constant=lambda c: pytest.fail(c))
    assert len(rows) == len(cfg.trace)
    assert any(r["status"] == "feasible" for r in rows)


def test_rejects_unknown_objective():
    with pytest.raises(ValueError):
        solve_op(table_scenario(seed=0), objective="latency")


def test_sensing_objective_respects_rate_floor():
    sc = table_scenario(seed=0)
    comm = solve_op(sc)
    floor = 0.5 * comm.achieved_rate
    cfg = solve_op(sc, objective="sensing", rate_floor=floor)
    assert cfg.achieved_rate >= floor - 1e-9
    # the DL-optimal design also meets the floor, so sensing should not do worse
    assert cfg.min_target_sinr_db >= comm.min_target_sinr_db - 0.1
    assert cfg.rho_binding in ("rate_floor", "none")
    assert check_constraints(cfg, sc).all_pass


# ---------------------------------------------------------------- monotonicity

def _rate_or_none(sc):
    try:
        return solve_op(sc).achieved_rate
    except InfeasibleError:
        return None


@pytest.mark.parametrize("seed", [0, 4])
def test_raising_sensing_floor_never_raises_rate(seed):
    sc = table_scenario(seed=seed)
    rates = [_rate_or_none(sc.replace(constraints=replace(sc.constraints, lambda_s_db=ls)))
             for ls in (0.0, 5.0, 10.0, 15.0)]
    feasible = [r for r in rates if r is not None]
    # once infeasible, tighter floors stay infeasible
    assert rates[:len(feasible)] == feasible
    assert all(b <= a + RATE_TOL for a, b in zip(feasible, feasible[1:])), rates


@pytest.mark.parametrize("seed", [2, 4])
def test_rate_nondecreasing_in_power(seed):
    rates = [_rate_or_none(table_scenario(seed=seed, tx_power_dbm=p)) for p in (25, 30, 35)]
    feasible = [r for r in rates if r is not None]
    assert feasible
    assert all(b >= a - RATE_TOL for a, b in zip(feasible, feasible[1:])), rates


# ---------------------------------------------------------------- helpers

def test_blend_renormalizes_to_budget(rng):
    v_rf = np.eye(4)
    a = rng.standard_normal((4, 2)) + 1j * rng.standard_normal((4, 2))
    b = rng.standard_normal((4, 2)) + 1j * rng.standard_normal((4, 2))
    for rho in (0.0, 0.3, 1.0):
        v = blend_precoders(a, b, rho, v_rf, 2.5)
        assert np.linalg.norm(v) ** 2 == pytest.approx(2.5)
    np.testing.assert_allclose(blend_precoders(a, b, 0.0, v_rf, 1.0), a / np.linalg.norm(a))


def test_solve_rho_finds_first_crossing():
    rho, val = _solve_rho(lambda r: 20.0 * r, 10.0)
    assert 0.5 <= rho and val - 10.0 <= 0.05
    assert _solve_rho(lambda r: 20.0 * r, 30.0)[0] is None
    assert _solve_rho(lambda r: 5.0, 0.0) == (0.0, 5.0)


def test_c3_rho_picks_best_rate_feasible_point():
    excess = lambda r: 0.4 - r          # C3 met for rho >= 0.4
    sinr = lambda r: 100.0              # C4 slack everywhere
    rate = lambda r: -abs(r - 0.7)      # rate peaks inside the feasible range
    assert _c3_rho(excess, sinr, rate, 0.1, 10.0) == pytest.approx(0.7)
    # rate falling in rho: the C3 boundary itself
    assert _c3_rho(excess, sinr, lambda r: -r, 0.1, 10.0) == pytest.approx(0.4, abs=1e-6)
    # C3 already met: the C4 point is kept
    assert _c3_rho(excess, sinr, rate, 0.5, 10.0) == 0.5
    # C3 never met: fall back to the C4 point for the power back-off
    assert _c3_rho(lambda r: 1.0, sinr, rate, 0.1, 10.0) == 0.1
