"""Send one frame through a sampled channel and detect it with ML and BO-SD.

Run: python3 demos/detect_one_frame.py
"""
import numpy as np

from paim import SystemConfig, bo_sd_detect, build_geometry, build_transmit, ml_detect, search_effort
from paim.channel import complex_normal, realize_channel, sample_large_scale
from paim.harness import snr_to_power

cfg = SystemConfig(n_t=4, n_wg=2, n_a=1, n_r=2, mod_order=16, rx_position_m=(400.0, 250.0, 1.5))
rng = np.random.default_rng(7)
geom = build_geometry(cfg)
ls = sample_large_scale(geom, cfg, rng)
_, rho, n0 = snr_to_power(25.0, cfg, "normalized", ls)

bits = rng.integers(0, 2, 12, dtype=np.uint8)
frame = build_transmit(bits, cfg)
h = realize_channel(geom, ls, rng).h
y = np.sqrt(rho) * h @ frame.x + complex_normal(rng, cfg.n_r) * np.sqrt(n0)

ml = ml_detect(y, h, cfg, rho)
bo = bo_sd_detect(y, h, cfg, rho)
print("sent      ", bits)
print("ML        ", ml.bits, f"({ml.counters.metric_evals} metric evaluations)")
print("BO-SD     ", bo.bits, f"({bo.counters.metric_evals} metric evaluations, "
                             f"{bo.counters.qp_solves} box QPs)")
print("effort    ", search_effort(bo, cfg))
