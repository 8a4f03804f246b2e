"""Closed-form union bound next to Monte Carlo BER for one fixed large-scale map.

Run: python3 demos/bound_vs_simulation.py   (about ten seconds)
"""
from paim import ExperimentPlan, load_config, run_ber_sweep
from pathlib import Path

cfg = load_config(Path(__file__).with_name("fig4_bpsk.yaml"))
plan = ExperimentPlan(cfg=cfg, snr_db=(30, 35, 40, 45), trials=300_000, min_errors=2000, chunk=20_000,
                      snr_mode="normalized", fixed_map=True, bound_variant="closed_form")
print(f"{'SNR':>5} {'trials':>8} {'sim BER':>10} {'bound':>10}")
for r in run_ber_sweep(plan):
    print(f"{r.snr_db:5.0f} {r.trials:8d} {r.ber:10.3e} {r.bound_value:10.3e}")
