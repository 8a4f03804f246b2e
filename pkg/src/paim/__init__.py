"""Pinching-antenna index modulation: channel model, detectors, bounds and precoding."""
from .analysis import BerBound, pep_closed_form, pep_mgf, pep_quadrature, union_bound
from .channel import ChannelStatistics, LargeScaleMap, channel_statistics, realize_channel, sample_large_scale
from .config import ConfigError, SystemConfig, build_geometry, load_config
from .detector import DetectionResult, bo_sd_detect, ml_detect, search_effort
from .harness import (ExperimentPlan, ResultRow, run_ber_sweep, run_complexity_sweep, run_na_sweep,
                      run_precoder_ab)
from .modem import SignalSet, TransmitFrame, build_transmit, frame_to_bits, spectral_efficiency
from .precoder import PrecodingVector, optimize_precoder

__version__ = "0.1.0"

__all__ = [
    "BerBound", "ChannelStatistics", "ConfigError", "DetectionResult", "ExperimentPlan", "LargeScaleMap",
    "PrecodingVector", "ResultRow", "SignalSet", "SystemConfig", "TransmitFrame", "bo_sd_detect",
    "build_geometry", "build_transmit", "channel_statistics", "frame_to_bits", "load_config", "ml_detect",
    "optimize_precoder", "pep_closed_form", "pep_mgf", "pep_quadrature", "realize_channel", "run_ber_sweep",
    "run_complexity_sweep", "run_na_sweep", "run_precoder_ab", "sample_large_scale", "search_effort",
    "spectral_efficiency", "union_bound",
]
