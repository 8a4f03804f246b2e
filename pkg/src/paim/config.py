"""Scenario description and deployment geometry.

All lengths are in metres, powers in dBm, frequencies in Hz.  The
transmitter sits at the origin corner of a square ``D x D`` region; its
waveguides run parallel to the x-axis at a common height and are spread
evenly across the y-extent of the region.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


class ConfigError(ValueError):
    """Raised for an inconsistent or unreadable scenario description."""


@dataclass(frozen=True)
class SystemConfig:
    n_t: int = 4                # candidate PA positions per waveguide
    n_wg: int = 1               # waveguides (one RF chain each)
    n_a: int = 1                # activated PAs per waveguide
    n_r: int = 2                # receive antennas
    mod_order: int = 4          # QAM constellation size M
    p_t_dbm: float = 20.0
    n0_dbm: float = -90.0
    f_c_hz: float = 3e9
    eta_eff: float = 1.4        # effective refractive index of the waveguide
    area_side_m: float = 500.0
    tx_height_m: float = 12.5
    rx_position_m: tuple[float, float, float] = (400.0, 50.0, 1.5)
    delta_sf: float = 0.5       # share of the PA-side shadow component
    sigma_sf_db: float = 8.0
    d_decorr_m: float = 100.0
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "rx_position_m", tuple(float(v) for v in self.rx_position_m))
        self.validate()

    def validate(self) -> None:
        for name in ("n_t", "n_wg", "n_a", "n_r", "mod_order"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if self.n_a > self.n_t:
            raise ConfigError(f"n_a={self.n_a} exceeds n_t={self.n_t}")
        m = self.mod_order
        if m < 2 or m & (m - 1):
            raise ConfigError(f"mod_order must be a power of two >= 2, got {m}")
        if not self.eta_eff > 1.0:
            raise ConfigError(f"eta_eff must exceed 1, got {self.eta_eff}")
        if not 0.0 <= self.delta_sf <= 1.0:
            raise ConfigError(f"delta_sf must lie in [0, 1], got {self.delta_sf}")
        if len(self.rx_position_m) != 3:
            raise ConfigError("rx_position_m must be a 3-vector")
        finite = [self.p_t_dbm, self.n0_dbm, self.f_c_hz, self.area_side_m, self.tx_height_m,
                  self.sigma_sf_db, self.d_decorr_m, *self.rx_position_m]
        if not all(math.isfinite(v) for v in finite):
            raise ConfigError("all distances and powers must be finite")
        if self.f_c_hz <= 0 or self.area_side_m <= 0 or self.d_decorr_m <= 0 or self.sigma_sf_db < 0:
            raise ConfigError("f_c_hz, area_side_m, d_decorr_m must be positive and sigma_sf_db >= 0")
        if not 0 <= self.rng_seed < 2**64:
            raise ConfigError("rng_seed must fit in 64 bits")

    # derived quantities -------------------------------------------------
    @property
    def im_bits(self) -> int:
        """Index-modulation bits carried by one waveguide."""
        return math.floor(math.log2(math.comb(self.n_t, self.n_a)))

    @property
    def apm_bits(self) -> int:
        return int(math.log2(self.mod_order))

    @property
    def n_cols(self) -> int:
        """Columns of the full channel matrix, ``n_t * n_wg``."""
        return self.n_t * self.n_wg

    @property
    def p_t_mw(self) -> float:
        return dbm_to_mw(self.p_t_dbm)

    @property
    def n0_mw(self) -> float:
        return dbm_to_mw(self.n0_dbm)

    @property
    def rho(self) -> float:
        """Transmit power per activated PA (mW)."""
        return self.p_t_mw / (self.n_wg * self.n_a)

    def with_(self, **changes) -> "SystemConfig":
        return replace(self, **changes)


def dbm_to_mw(p_dbm: float) -> float:
    return 10.0 ** (p_dbm / 10.0)


def load_config(path: str | Path) -> SystemConfig:
    """Read a JSON or YAML file whose keys are exactly SystemConfig field names."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() in (".yaml", ".yml"):
        import yaml
        raw = yaml.safe_load(text)
    else:
        raw = json.loads(text)
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> SystemConfig:
    known = {f.name for f in fields(SystemConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return SystemConfig(**raw)


def config_to_dict(cfg: SystemConfig) -> dict:
    out = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
    out["rx_position_m"] = list(cfg.rx_position_m)
    return out


@dataclass(frozen=True)
class DeploymentGeometry:
    feed_points: np.ndarray             # (n_wg, 3)
    candidate_pa_positions: np.ndarray  # (n_wg, n_t, 3)
    rx_elements: np.ndarray             # (n_r, 3)
    lambda_m: float
    lambda_g_m: float
    area_side_m: float = field(default=500.0)

    @property
    def pa_positions_flat(self) -> np.ndarray:
        """Candidate positions in channel-column order (waveguide-major), shape (n_wg*n_t, 3)."""
        return self.candidate_pa_positions.reshape(-1, 3)

    def link_distances(self) -> np.ndarray:
        """Receiver element to candidate PA distances, shape (n_r, n_wg*n_t)."""
        diff = self.rx_elements[:, None, :] - self.pa_positions_flat[None, :, :]
        return np.linalg.norm(diff, axis=-1)

    def feed_distances(self) -> np.ndarray:
        """In-waveguide feed-to-PA distances, shape (n_wg, n_t)."""
        diff = self.candidate_pa_positions - self.feed_points[:, None, :]
        return np.linalg.norm(diff, axis=-1)


def waveguide_y(n_wg: int, area_side_m: float) -> np.ndarray:
    return area_side_m * (np.arange(n_wg) + 0.5) / n_wg


def build_geometry(cfg: SystemConfig, waveguide_y_m=None) -> DeploymentGeometry:
    """Place feed points, PA candidate clusters and the receive ULA.

    ``waveguide_y_m`` overrides the default equidistant y-coordinates.
    """
    lam = SPEED_OF_LIGHT / cfg.f_c_hz
    lam_g = lam / cfg.eta_eff
    D = cfg.area_side_m
    ys = waveguide_y(cfg.n_wg, D) if waveguide_y_m is None else np.asarray(waveguide_y_m, float)
    if ys.shape != (cfg.n_wg,):
        raise ConfigError(f"expected {cfg.n_wg} waveguide y-coordinates, got shape {ys.shape}")
    z = cfg.tx_height_m
    rx = np.asarray(cfg.rx_position_m, dtype=float)

    offsets_t = (np.arange(cfg.n_t) - (cfg.n_t - 1) / 2) * lam / 2
    xs = rx[0] + offsets_t
    if xs[0] < 0.0 or xs[-1] > D:
        raise ConfigError(
            f"candidate cluster [{xs[0]:.3f}, {xs[-1]:.3f}] m leaves the waveguide span [0, {D}] m")

    feed = np.stack([np.zeros(cfg.n_wg), ys, np.full(cfg.n_wg, z)], axis=1)
    cand = np.empty((cfg.n_wg, cfg.n_t, 3))
    cand[:, :, 0] = xs[None, :]
    cand[:, :, 1] = ys[:, None]
    cand[:, :, 2] = z

    offsets_r = (np.arange(cfg.n_r) - (cfg.n_r - 1) / 2) * lam / 2
    rx_el = np.tile(rx, (cfg.n_r, 1))
    rx_el[:, 0] += offsets_r
    return DeploymentGeometry(feed, cand, rx_el, lam, lam_g, D)
