"""Manifold precoding against no precoding on common random numbers.

The receiver sits between the two waveguides so both carry useful power.
Run: python3 demos/precoder_ab.py   (about a minute)
"""
from paim import ExperimentPlan, SystemConfig, run_precoder_ab

cfg = SystemConfig(n_t=4, n_wg=2, n_a=1, n_r=1, mod_order=2, rx_position_m=(400.0, 250.0, 1.5))
plan = ExperimentPlan(cfg=cfg, snr_db=(25, 30, 35, 40, 45), trials=1000, seed=1, snr_mode="normalized",
                      fixed_map=True)
res = run_precoder_ab(plan)
n = len(res.rows) // 2
for a, b in zip(res.rows[:n], res.rows[n:]):
    print(f"{a.snr_db:5.0f} dB   none {a.ber:.2e}   manifold {b.ber:.2e}")
print("gain at BER 1e-3:", "not reached" if res.gain_db is None else f"{res.gain_db:.2f} dB")
