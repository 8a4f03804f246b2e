import json

import numpy as np
import pytest

from paim.config import SystemConfig
from paim.harness import (ExperimentPlan, HarnessError, ResultRow, bound_curve, rows_to_csv, rows_to_json,
                          run_ber_sweep, run_complexity_sweep, run_na_sweep, run_precoder_ab, snr_at_ber,
                          snr_to_power, write_rows)
from paim.channel import LargeScaleMap

CFG = SystemConfig(n_t=4, n_wg=1, n_a=1, n_r=2, mod_order=4)


def plan(**kw):
    base = dict(cfg=CFG, snr_db=(0.0, 10.0), trials=120, chunk=50, snr_mode="normalized", seed=3)
    base.update(kw)
    return ExperimentPlan(**base)


@pytest.mark.parametrize("bad", [dict(trials=0), dict(snr_db=(5.0, 1.0)), dict(snr_db=()), dict(detector="zf"),
                                 dict(precoding="svd"), dict(snr_mode="ebn0"), dict(workers=0),
                                 dict(bound_variant="exact")])
def test_plan_validation(bad):
    with pytest.raises(HarnessError):
        plan(**bad)


def test_plan_rejects_ml_beyond_cap():
    with pytest.raises(HarnessError):
        plan(cfg=SystemConfig(n_t=4, n_wg=3, mod_order=64))


def test_snr_semantics():
    cfg = SystemConfig(n_t=8, n_a=2, n0_dbm=-90.0)
    p_t, rho, n0 = snr_to_power(110.0, cfg, "ptx")
    assert p_t == pytest.approx(100.0) and rho == pytest.approx(50.0) and n0 == pytest.approx(1e-9)
    assert snr_to_power(110.0, cfg.with_(n_a=4), "ptx")[1] == pytest.approx(rho / 2)
    ls = LargeScaleMap.from_arrays(np.full((2, 8), 1e-6), 0.0)
    p_t, _, n0 = snr_to_power(20.0, cfg, "normalized", ls)
    assert p_t * 1e-6 / n0 == pytest.approx(100.0)


def test_conservation_and_ber():
    rows = run_ber_sweep(plan())
    for r in rows:
        assert r.bits_sent == r.trials * r.eta == 120 * 4
        assert 0 <= r.bit_errors <= r.bits_sent
        assert r.ber == r.bit_errors / r.bits_sent
        assert r.wall_time_s is None and r.bound_value is None
        assert r.mean_metric_evals == 16


def test_noiseless_limit():
    rows = run_ber_sweep(plan(snr_db=(250.0,), detector="bosd"))
    assert rows[0].bit_errors == 0


def test_ml_and_bosd_decisions_identical():
    a = run_ber_sweep(plan(detector="ml", cfg=CFG.with_(mod_order=16)))
    b = run_ber_sweep(plan(detector="bosd", cfg=CFG.with_(mod_order=16)))
    assert [r.bit_errors for r in a] == [r.bit_errors for r in b]
    assert all(rb.mean_metric_evals < ra.mean_metric_evals for ra, rb in zip(a, b))


def test_early_stop_counts_whole_chunks():
    rows = run_ber_sweep(plan(trials=1000, min_errors=10, snr_db=(0.0,)))
    r = rows[0]
    assert r.bit_errors >= 10 and r.trials % 50 == 0 and r.trials < 1000


def test_reproducible_and_worker_independent():
    a = rows_to_csv(run_ber_sweep(plan(detector="bosd")))
    b = rows_to_csv(run_ber_sweep(plan(detector="bosd")))
    c = rows_to_csv(run_ber_sweep(plan(detector="bosd", workers=2)))
    assert a == b == c
    assert rows_to_csv(run_ber_sweep(plan(seed=4))) != rows_to_csv(run_ber_sweep(plan(seed=3)))


def test_timing_and_bound_columns():
    r = run_ber_sweep(plan(record_timing=True, bound_variant="closed_form", fixed_map=True))[0]
    assert r.wall_time_s > 0 and r.bound_value > 0


def test_csv_header_order_and_json(tmp_path):
    rows = run_ber_sweep(plan(snr_db=(5.0,)))
    header = rows_to_csv(rows).splitlines()[0].split(",")
    assert header[:8] == ["snr_db", "bit_errors", "bits_sent", "ber", "mean_metric_evals", "mean_qp_solves",
                          "wall_time_s", "bound_value"]
    doc = json.loads(rows_to_json(rows, {"note": 1}))
    assert doc["rows"][0]["bits_sent"] == rows[0].bits_sent and doc["note"] == 1
    p = tmp_path / "r.csv"
    write_rows(p, rows)
    assert p.read_text() == rows_to_csv(rows)


def test_complexity_sweep_counts():
    rows = run_complexity_sweep(plan(snr_db=(20.0,), trials=40, chunk=20), mod_orders=(4, 64))
    ml = {r.mod_order: r for r in rows if r.detector == "ml"}
    bo = {r.mod_order: r for r in rows if r.detector == "bosd"}
    assert ml[4].mean_metric_evals == 16 and ml[64].mean_metric_evals == 256
    assert bo[64].reduction_vs_ml > 0.9


def test_na_sweep_rescales_power():
    cfg = SystemConfig(n_t=8, n_r=2, mod_order=2)
    rows = run_na_sweep(plan(cfg=cfg, snr_db=(100.0,), snr_mode="ptx"), (1, 2, 4))
    assert [r.n_a for r in rows] == [1, 2, 4]
    assert [r.eta for r in rows] == [4, 5, 7]
    rho = [r.rho_n0_db for r in rows]
    assert rho[0] - rho[1] == pytest.approx(10 * np.log10(2)) and rho[1] - rho[2] == pytest.approx(10 * np.log10(2))
    with pytest.raises(HarnessError):
        run_na_sweep(plan(cfg=cfg, snr_db=(100.0,)), (9,))


def test_precoder_ab_single_waveguide_arms_identical():
    res = run_precoder_ab(plan(cfg=CFG.with_(mod_order=2), trials=60, chunk=30))
    n = len(res.rows) // 2
    assert [r.arm for r in res.rows] == ["none"] * n + ["manifold"] * n
    assert [r.bit_errors for r in res.rows[:n]] == [r.bit_errors for r in res.rows[n:]]


def test_snr_at_ber_interpolation():
    assert snr_at_ber([0, 10], [1e-2, 1e-4], 1e-3) == pytest.approx(5.0)
    assert snr_at_ber([0, 10, 20], [1e-1, 1e-2, 1e-3], 1e-3) == pytest.approx(20.0)
    assert snr_at_ber([0, 10], [1e-1, 1e-2], 1e-3) is None


def test_bound_curve_decreases():
    curve = bound_curve(CFG, (0.0, 10.0, 20.0), snr_mode="normalized", seed=1)
    vals = [b.value for _, b in curve]
    assert vals[0] > vals[1] > vals[2]


def test_result_row_field_order():
    from dataclasses import fields
    assert [f.name for f in fields(ResultRow)][:8] == [
        "snr_db", "bit_errors", "bits_sent", "ber", "mean_metric_evals", "mean_qp_solves", "wall_time_s",
        "bound_value"]
