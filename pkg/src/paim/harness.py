"""Monte Carlo experiment driver.

Trials at each SNR point are split into fixed-size chunks.  Chunk ``c`` of
point ``p`` draws everything (large-scale map, bits, small-scale fading,
noise) from its own stream ``SeedSequence(seed, spawn_key=(p, c))``, so a
sweep gives the same numbers whatever the number of worker processes.
Chunks are consumed in order and early stopping is decided on that order.

SNR axis.  Every sweep takes its axis in dB and interprets it in one of two
ways:

* ``ptx``: SNR = P_t / N0 with N0 from the config, so P_t = SNR + N0 (dBm).
* ``normalized``: SNR = P_t mean(beta) / N0 for the large-scale map in use,
  so the received SNR stays comparable when maps are redrawn.

In both cases rho = P_t / (n_wg n_a).  Rows report P_t and rho/N0 as well.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from .analysis import VARIANTS, BerBound, union_bound
from .channel import (LargeScaleMap, channel_statistics, complex_normal, realize_channels,
                      sample_large_scale)
from .config import SystemConfig, build_geometry, dbm_to_mw
from .detector import bo_sd_detect, ml_detect_batch
from .modem import ENUMERATION_CAP_BITS, SignalSet, all_patterns, build_transmit, popcount, spectral_efficiency
from .precoder import optimize_precoder

FIXED_MAP_KEY = 0x7FFF_FFFF
SNR_MODES = ("ptx", "normalized")


class HarnessError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExperimentPlan:
    cfg: SystemConfig
    snr_db: tuple[float, ...]
    trials: int = 1000
    min_errors: int | None = None
    detector: str = "ml"
    precoding: str = "none"
    seed: int = 0
    snr_mode: str = "ptx"
    chunk: int = 100                  # trials per large-scale map and per RNG substream
    fixed_map: bool = False           # one large-scale map for the whole sweep
    bound_variant: str | None = None
    workers: int = 1
    record_timing: bool = False
    precoder_tol: float = 1e-6
    waveguide_y_m: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "snr_db", tuple(float(s) for s in self.snr_db))
        self.validate()

    def validate(self) -> None:
        if self.trials < 1 or self.chunk < 1:
            raise HarnessError("trials and chunk must be at least 1")
        if not self.snr_db or any(b <= a for a, b in zip(self.snr_db, self.snr_db[1:])):
            raise HarnessError(f"SNR axis must be non-empty and strictly increasing: {self.snr_db}")
        if self.detector not in ("ml", "bosd"):
            raise HarnessError(f"unknown detector {self.detector!r}")
        if self.precoding not in ("none", "manifold"):
            raise HarnessError(f"unknown precoding {self.precoding!r}")
        if self.snr_mode not in SNR_MODES:
            raise HarnessError(f"unknown SNR mode {self.snr_mode!r}")
        if self.bound_variant is not None and self.bound_variant not in VARIANTS:
            raise HarnessError(f"unknown bound variant {self.bound_variant!r}")
        if self.workers < 1:
            raise HarnessError("workers must be at least 1")
        eta = spectral_efficiency(self.cfg)
        if eta < 1:
            raise HarnessError("configuration carries no information bits")
        if (self.detector == "ml" or self.precoding == "manifold" or self.bound_variant) \
                and eta > ENUMERATION_CAP_BITS:
            raise HarnessError(f"eta={eta} exceeds the enumeration cap for the requested detector/precoder/bound")

    def with_(self, **changes) -> "ExperimentPlan":
        return replace(self, **changes)


@dataclass
class ResultRow:
    snr_db: float
    bit_errors: int
    bits_sent: int
    ber: float
    mean_metric_evals: float
    mean_qp_solves: float
    wall_time_s: float | None = None
    bound_value: float | None = None
    trials: int = 0
    p_t_dbm: float = 0.0
    rho_n0_db: float = 0.0
    eta: int = 0
    n_a: int = 0
    arm: str = ""
    precoder_stalls: int = 0
    precoder_ascents: int = 0       # runs whose objective ever increased; always 0 under Armijo


@dataclass
class ComplexityRow:
    snr_db: float
    mod_order: int
    detector: str
    trials: int
    mean_metric_evals: float
    mean_qp_solves: float
    mean_nodes_visited: float
    reduction_vs_ml: float


@dataclass
class _ChunkStats:
    trials: int = 0
    bit_errors: int = 0
    metric_evals: int = 0
    qp_solves: int = 0
    nodes: int = 0
    stalls: int = 0
    ascents: int = 0
    p_t_mw: float = 0.0         # summed over trials
    rho_n0: float = 0.0         # summed over trials
    bound: float = 0.0          # summed over trials
    seconds: float = 0.0


def chunk_rng(seed: int, point: int, chunk: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(point, chunk)))


def fixed_large_scale(cfg: SystemConfig, seed: int, geom=None) -> LargeScaleMap:
    geom = geom or build_geometry(cfg)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(FIXED_MAP_KEY,)))
    return sample_large_scale(geom, cfg, rng)


def snr_to_power(snr_db: float, cfg: SystemConfig, mode: str, ls: LargeScaleMap | None = None):
    """(P_t in mW, rho, N0 in mW) for one SNR value."""
    n0 = cfg.n0_mw
    if mode == "ptx":
        p_t = dbm_to_mw(snr_db + cfg.n0_dbm)
    elif mode == "normalized":
        p_t = 10.0 ** (snr_db / 10.0) * n0 / float(np.mean(ls.beta))
    else:
        raise HarnessError(f"unknown SNR mode {mode!r}")
    return p_t, p_t / (cfg.n_wg * cfg.n_a), n0


def _transmit_vectors(idx, bits, cfg, signal_set):
    if signal_set is not None:
        return signal_set.x[idx]
    return np.stack([build_transmit(b, cfg).x for b in bits])


def run_chunk(plan: ExperimentPlan, point: int, chunk: int, n: int) -> _ChunkStats:
    """Simulate ``n`` trials of one chunk; a pure function of its arguments."""
    t0 = time.perf_counter()
    cfg = plan.cfg
    geom = build_geometry(cfg, plan.waveguide_y_m)
    rng = chunk_rng(plan.seed, point, chunk)
    ls = fixed_large_scale(cfg, plan.seed, geom) if plan.fixed_map else sample_large_scale(geom, cfg, rng)
    snr = plan.snr_db[point]
    p_t, rho, n0 = snr_to_power(snr, cfg, plan.snr_mode, ls)
    eta = spectral_efficiency(cfg)
    signal_set = SignalSet(cfg) if eta <= ENUMERATION_CAP_BITS else None

    bits = rng.integers(0, 2, size=(n, eta), dtype=np.uint8)
    idx = (bits.astype(np.int64) @ (1 << np.arange(eta - 1, -1, -1, dtype=np.int64)))
    x = _transmit_vectors(idx, bits, cfg, signal_set)
    h = realize_channels(geom, ls, rng, n)
    noise = complex_normal(rng, (n, cfg.n_r)) * math.sqrt(n0)

    out = _ChunkStats(trials=n, p_t_mw=p_t * n, rho_n0=rho / n0 * n)
    if plan.precoding == "manifold":
        for t in range(n):
            pv = optimize_precoder(h[t], cfg, signal_set, tol=plan.precoder_tol, rho=rho, n0=n0)
            h[t] = h[t] * pv.column_weights(cfg.n_t)[None, :]
            out.stalls += int(pv.stalled)
            out.ascents += int(np.any(np.diff(pv.history) > 0))
    y = math.sqrt(rho) * np.einsum("trc,tc->tr", h, x) + noise

    if plan.detector == "ml":
        det = ml_detect_batch(y, h, cfg, rho)
        out.metric_evals = n * len(all_patterns(cfg)) * cfg.mod_order ** cfg.n_wg
    else:
        det = np.empty(n, dtype=np.int64)
        for t in range(n):
            try:
                r = bo_sd_detect(y[t], h[t], cfg, rho)
            except Exception as exc:       # noqa: BLE001 - re-raised with the trial index
                raise HarnessError(f"detector failed at SNR point {point}, chunk {chunk}, trial {t}: {exc}") from exc
            det[t] = r.index
            out.metric_evals += r.counters.metric_evals
            out.qp_solves += r.counters.qp_solves
            out.nodes += r.counters.nodes_visited
    out.bit_errors = int(popcount(det ^ idx).sum())

    if plan.bound_variant is not None:
        stats = channel_statistics(geom, ls) if not plan.bound_variant.startswith("conditional") else None
        if stats is not None:
            out.bound = union_bound(cfg, stats, signal_set, rho, n0, plan.bound_variant).value * n
        else:
            out.bound = sum(union_bound(cfg, None, signal_set, rho, n0, plan.bound_variant, h=h[t]).value
                            for t in range(n))
    out.seconds = time.perf_counter() - t0
    return out


def _chunk_sizes(trials: int, chunk: int):
    full, rest = divmod(trials, chunk)
    return [chunk] * full + ([rest] if rest else [])


def _run_point(plan: ExperimentPlan, point: int, pool) -> _ChunkStats:
    sizes = _chunk_sizes(plan.trials, plan.chunk)
    total = _ChunkStats()
    wave = max(plan.workers, 1)
    for start in range(0, len(sizes), wave):
        batch = range(start, min(start + wave, len(sizes)))
        if pool is None:
            results = (run_chunk(plan, point, c, sizes[c]) for c in batch)
        else:
            results = pool.map(run_chunk, [plan] * len(batch), [point] * len(batch), list(batch),
                               [sizes[c] for c in batch])
        for r in results:
            for f in fields(_ChunkStats):
                setattr(total, f.name, getattr(total, f.name) + getattr(r, f.name))
            if plan.min_errors is not None and total.bit_errors >= plan.min_errors:
                return total
    return total


def _row(plan: ExperimentPlan, point: int, s: _ChunkStats, arm: str) -> ResultRow:
    eta = spectral_efficiency(plan.cfg)
    bits = s.trials * eta
    return ResultRow(
        snr_db=plan.snr_db[point], bit_errors=s.bit_errors, bits_sent=bits, ber=s.bit_errors / bits,
        mean_metric_evals=s.metric_evals / s.trials, mean_qp_solves=s.qp_solves / s.trials,
        wall_time_s=s.seconds if plan.record_timing else None,
        bound_value=s.bound / s.trials if plan.bound_variant is not None else None,
        trials=s.trials, p_t_dbm=10 * math.log10(s.p_t_mw / s.trials),
        rho_n0_db=10 * math.log10(s.rho_n0 / s.trials), eta=eta, n_a=plan.cfg.n_a, arm=arm,
        precoder_stalls=s.stalls, precoder_ascents=s.ascents)


def run_ber_sweep(plan: ExperimentPlan, arm: str = "") -> list[ResultRow]:
    """One ResultRow per SNR point."""
    plan.validate()
    build_geometry(plan.cfg, plan.waveguide_y_m)        # fail early on a bad deployment
    arm = arm or f"{plan.detector}/{plan.precoding}"
    if plan.workers > 1:
        with ProcessPoolExecutor(max_workers=plan.workers) as pool:
            return [_row(plan, p, _run_point(plan, p, pool), arm) for p in range(len(plan.snr_db))]
    return [_row(plan, p, _run_point(plan, p, None), arm) for p in range(len(plan.snr_db))]


def run_complexity_sweep(plan: ExperimentPlan, mod_orders=(4, 16, 64)) -> list[ComplexityRow]:
    """BO-SD search effort per detection against the exhaustive ML count, for each M."""
    rows = []
    pool = ProcessPoolExecutor(max_workers=plan.workers) if plan.workers > 1 else None
    try:
        for m in mod_orders:
            rows += _complexity_rows(plan, int(m), pool)
    finally:
        if pool is not None:
            pool.shutdown()
    return rows


def _complexity_rows(plan: ExperimentPlan, m: int, pool) -> list[ComplexityRow]:
    rows = []
    sub = plan.with_(cfg=plan.cfg.with_(mod_order=m), detector="bosd", precoding="none",
                     min_errors=None, bound_variant=None)
    ml_evals = len(all_patterns(sub.cfg)) * m ** sub.cfg.n_wg
    for p, snr in enumerate(sub.snr_db):
        s = _run_point(sub, p, pool)
        rows.append(ComplexityRow(snr, m, "ml", s.trials, float(ml_evals), 0.0, 0.0, 0.0))
        evals = s.metric_evals / s.trials
        rows.append(ComplexityRow(snr, m, "bosd", s.trials, evals, s.qp_solves / s.trials,
                                  s.nodes / s.trials, 1.0 - evals / ml_evals))
    return rows


@dataclass
class PrecoderAb:
    rows: list[ResultRow]
    gain_db: float | None
    target_ber: float


def snr_at_ber(snr, ber, target: float) -> float | None:
    """SNR where the curve first crosses ``target``, log-linear interpolation."""
    for (s0, b0), (s1, b1) in zip(zip(snr, ber), zip(snr[1:], ber[1:])):
        if b0 >= target >= b1 and b0 > 0:
            if b1 <= 0:
                return s1
            if b0 == b1:
                return s0
            t = (math.log10(b0) - math.log10(target)) / (math.log10(b0) - math.log10(b1))
            return s0 + t * (s1 - s0)
    return None


def run_precoder_ab(plan: ExperimentPlan, target_ber: float = 1e-3) -> PrecoderAb:
    """Unprecoded and manifold-precoded arms on common random numbers."""
    none = run_ber_sweep(plan.with_(precoding="none", min_errors=None), arm="none")
    mani = run_ber_sweep(plan.with_(precoding="manifold", min_errors=None), arm="manifold")
    a = snr_at_ber([r.snr_db for r in none], [r.ber for r in none], target_ber)
    b = snr_at_ber([r.snr_db for r in mani], [r.ber for r in mani], target_ber)
    gain = None if a is None or b is None else a - b
    return PrecoderAb(none + mani, gain, target_ber)


def run_na_sweep(plan: ExperimentPlan, n_a_values=(1, 2, 4)) -> list[ResultRow]:
    """BER against the number of activated PAs at a fixed total transmit power."""
    rows = []
    for n_a in n_a_values:
        if n_a > plan.cfg.n_t:
            raise HarnessError(f"n_a={n_a} exceeds n_t={plan.cfg.n_t}")
        rows += run_ber_sweep(plan.with_(cfg=plan.cfg.with_(n_a=int(n_a))), arm=f"n_a={n_a}")
    return rows


def bound_curve(cfg: SystemConfig, snr_db, variant: str = "closed_form", seed: int = 0,
                snr_mode: str = "ptx", waveguide_y_m=None) -> list[tuple[float, BerBound]]:
    """Union bound along an SNR axis for the sweep's fixed large-scale map."""
    geom = build_geometry(cfg, waveguide_y_m)
    ls = fixed_large_scale(cfg, seed, geom)
    stats = channel_statistics(geom, ls)
    ss = SignalSet(cfg)
    out = []
    for snr in snr_db:
        _, rho, n0 = snr_to_power(float(snr), cfg, snr_mode, ls)
        out.append((float(snr), union_bound(cfg, stats, ss, rho, n0, variant)))
    return out


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------
def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    if rows:
        w = csv.writer(buf, lineterminator="\n")
        names = [f.name for f in fields(rows[0])]
        w.writerow(names)
        for r in rows:
            w.writerow([_fmt(getattr(r, n)) for n in names])
    return buf.getvalue()


def rows_to_json(rows, extra: dict | None = None) -> str:
    doc = {"rows": [asdict(r) for r in rows]}
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=2) + "\n"


def write_rows(path, rows, fmt: str = "csv", extra: dict | None = None) -> str:
    text = rows_to_csv(rows) if fmt == "csv" else rows_to_json(rows, extra)
    if path is None or str(path) == "-":
        return text
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return text
