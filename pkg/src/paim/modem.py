"""Bit mapping for pinching-antenna index modulation.

Per waveguide the bit block is ``[IM bits | APM bits]`` and waveguides are
taken in order.  IM bits pick one of the first ``2**p`` size-``n_a`` subsets
of the candidate positions in lexicographic order; APM bits pick a Gray
labelled QAM point.  Candidate indices are 0-based throughout.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .config import SystemConfig

ENUMERATION_CAP_BITS = 20


class ModemError(ValueError):
    pass


# --------------------------------------------------------------------------
# QAM
# --------------------------------------------------------------------------
def _gray(n: int) -> int:
    return n ^ (n >> 1)


def _pam_levels(bits: int) -> np.ndarray:
    """Amplitude of each Gray label on an L = 2**bits level axis (label 0 at the top)."""
    L = 1 << bits
    levels = np.empty(L)
    for pos in range(L):
        levels[_gray(pos)] = (L - 1) - 2 * pos
    return levels


@dataclass(frozen=True)
class Constellation:
    order: int
    points: np.ndarray      # points[label]
    labels: np.ndarray      # (order, log2 M) bits of each label, MSB first

    @property
    def bits_per_symbol(self) -> int:
        return self.labels.shape[1]

    @property
    def box(self) -> tuple[float, float, float, float]:
        """(re_min, re_max, im_min, im_max) over the constellation."""
        p = self.points
        return float(p.real.min()), float(p.real.max()), float(p.imag.min()), float(p.imag.max())


@lru_cache(maxsize=None)
def constellation(order: int) -> Constellation:
    """Unit-energy square (or rectangular) QAM with per-axis Gray labels.

    ``order == 2`` is BPSK on the real axis.  For an odd number of bits the
    in-phase axis takes the extra bit.
    """
    if order < 2 or order & (order - 1):
        raise ModemError(f"constellation size must be a power of two >= 2, got {order}")
    k = int(math.log2(order))
    ki, kq = (k + 1) // 2, k // 2
    lev_i = _pam_levels(ki)
    lev_q = _pam_levels(kq) if kq else np.zeros(1)
    labels = np.array([[(lab >> (k - 1 - b)) & 1 for b in range(k)] for lab in range(order)], dtype=np.uint8)
    pts = np.empty(order, dtype=complex)
    for lab in range(order):
        pts[lab] = lev_i[lab >> kq] + 1j * lev_q[lab & ((1 << kq) - 1)]
    pts /= np.sqrt(np.mean(np.abs(pts) ** 2))
    pts.setflags(write=False)
    labels.setflags(write=False)
    return Constellation(order, pts, labels)


def bits_to_int(bits) -> np.ndarray | int:
    """MSB-first integer value of the last axis."""
    b = np.asarray(bits, dtype=np.int64)
    w = 1 << np.arange(b.shape[-1] - 1, -1, -1, dtype=np.int64)
    v = b @ w
    return int(v) if np.ndim(v) == 0 else v


def popcount(v) -> np.ndarray:
    v = np.ascontiguousarray(v, dtype="<u4")
    return np.unpackbits(v.view(np.uint8)).reshape(*v.shape, 32).sum(axis=-1, dtype=np.int64)


def int_to_bits(value, width: int) -> np.ndarray:
    v = np.asarray(value, dtype=np.int64)
    shifts = np.arange(width - 1, -1, -1, dtype=np.int64)
    return ((v[..., None] >> shifts) & 1).astype(np.uint8)


def qam_map(bits, order: int) -> np.ndarray:
    """Map ``log2(order)``-bit blocks (last axis) to symbols."""
    c = constellation(order)
    b = np.asarray(bits)
    if b.shape[-1] != c.bits_per_symbol:
        raise ModemError(f"expected blocks of {c.bits_per_symbol} bits, got {b.shape[-1]}")
    return c.points[bits_to_int(b)]


def qam_demap(symbols, order: int) -> np.ndarray:
    """Nearest-point hard decision, returning bit blocks on a new last axis."""
    c = constellation(order)
    s = np.asarray(symbols, dtype=complex)
    idx = np.argmin(np.abs(s[..., None] - c.points) ** 2, axis=-1)
    return c.labels[idx]


# --------------------------------------------------------------------------
# activation patterns
# --------------------------------------------------------------------------
@lru_cache(maxsize=None)
def pattern_table(n_t: int, n_a: int) -> tuple[tuple[int, ...], ...]:
    """The legitimate index sets of one waveguide, rank order."""
    p = math.floor(math.log2(math.comb(n_t, n_a)))
    return tuple(itertools.islice(itertools.combinations(range(n_t), n_a), 1 << p))


@dataclass(frozen=True)
class ActivationPattern:
    index_sets: tuple[tuple[int, ...], ...]
    rank: tuple[int, ...]

    def selection_matrix(self, n_t: int) -> np.ndarray:
        """E_I, block diagonal with unit-vector columns, shape (n_t*n_wg, n_a*n_wg)."""
        n_wg, n_a = len(self.index_sets), len(self.index_sets[0])
        E = np.zeros((n_t * n_wg, n_a * n_wg))
        for k, idx in enumerate(self.index_sets):
            for m, i in enumerate(idx):
                E[k * n_t + i, k * n_a + m] = 1.0
        return E

    def columns(self, n_t: int) -> list[list[int]]:
        """Channel columns radiating on each waveguide."""
        return [[k * n_t + i for i in idx] for k, idx in enumerate(self.index_sets)]


def pattern_from_ranks(ranks, cfg: SystemConfig) -> ActivationPattern:
    table = pattern_table(cfg.n_t, cfg.n_a)
    ranks = tuple(int(r) for r in ranks)
    for r in ranks:
        if not 0 <= r < len(table):
            raise ModemError(f"pattern rank {r} outside the legitimate set of size {len(table)}")
    return ActivationPattern(tuple(table[r] for r in ranks), ranks)


def pattern_from_bits(bits, cfg: SystemConfig) -> ActivationPattern:
    """IM bits of all waveguides (``n_wg * p`` of them) to an activation pattern."""
    p = cfg.im_bits
    b = np.asarray(bits, dtype=np.uint8).reshape(cfg.n_wg, p)
    ranks = [bits_to_int(row) if p else 0 for row in b]
    return pattern_from_ranks(ranks, cfg)


def pattern_to_bits(pattern: ActivationPattern, cfg: SystemConfig) -> np.ndarray:
    table = pattern_table(cfg.n_t, cfg.n_a)
    out = []
    for idx in pattern.index_sets:
        try:
            r = table.index(tuple(idx))
        except ValueError:
            raise ModemError(f"index set {idx} is not a legitimate pattern") from None
        out.append(int_to_bits(r, cfg.im_bits))
    return np.concatenate(out) if out else np.zeros(0, np.uint8)


def all_patterns(cfg: SystemConfig) -> list[ActivationPattern]:
    """Every joint pattern, ordered by the IM bits they encode."""
    n = len(pattern_table(cfg.n_t, cfg.n_a))
    return [pattern_from_ranks(r, cfg) for r in itertools.product(range(n), repeat=cfg.n_wg)]


# --------------------------------------------------------------------------
# frames
# --------------------------------------------------------------------------
def spectral_efficiency(cfg: SystemConfig) -> int:
    return cfg.n_wg * cfg.im_bits + cfg.n_wg * cfg.apm_bits


@dataclass(frozen=True)
class TransmitFrame:
    bits: np.ndarray
    pattern: ActivationPattern
    symbols: np.ndarray
    x: np.ndarray


def assemble_x(pattern: ActivationPattern, symbols, cfg: SystemConfig) -> np.ndarray:
    """x = E_I (s kron 1_{n_a})."""
    s = np.asarray(symbols, dtype=complex)
    return pattern.selection_matrix(cfg.n_t) @ np.kron(s, np.ones(cfg.n_a))


def build_transmit(bits, cfg: SystemConfig) -> TransmitFrame:
    bits = np.asarray(bits, dtype=np.uint8)
    eta = spectral_efficiency(cfg)
    if bits.shape != (eta,):
        raise ModemError(f"expected {eta} bits, got shape {bits.shape}")
    blocks = bits.reshape(cfg.n_wg, cfg.im_bits + cfg.apm_bits)
    pattern = pattern_from_bits(blocks[:, :cfg.im_bits], cfg)
    symbols = qam_map(blocks[:, cfg.im_bits:], cfg.mod_order)
    return TransmitFrame(bits, pattern, symbols, assemble_x(pattern, symbols, cfg))


def frame_bits(pattern: ActivationPattern, symbol_labels, cfg: SystemConfig) -> np.ndarray:
    """Bits encoded by a pattern and per-waveguide QAM labels."""
    im = pattern_to_bits(pattern, cfg).reshape(cfg.n_wg, cfg.im_bits)
    apm = int_to_bits(np.asarray(symbol_labels), cfg.apm_bits).reshape(cfg.n_wg, cfg.apm_bits)
    return np.concatenate([im, apm], axis=1).reshape(-1)


def frame_to_bits(frame: TransmitFrame, cfg: SystemConfig) -> np.ndarray:
    """Recover the information bits from the (pattern, symbols) content of a frame."""
    labels = bits_to_int(qam_demap(frame.symbols, cfg.mod_order))
    return frame_bits(frame.pattern, np.atleast_1d(labels), cfg)


def frame_to_dict(frame: TransmitFrame) -> dict:
    return {
        "bits": frame.bits.astype(int).tolist(),
        "index_sets": [list(s) for s in frame.pattern.index_sets],
        "ranks": list(frame.pattern.rank),
        "symbols": [[float(s.real), float(s.imag)] for s in frame.symbols],
    }


def frame_from_dict(d: dict, cfg: SystemConfig) -> TransmitFrame:
    frame = build_transmit(np.array(d["bits"], dtype=np.uint8), cfg)
    if [list(s) for s in frame.pattern.index_sets] != d["index_sets"]:
        raise ModemError("serialized frame is inconsistent with its bits")
    return frame


class SignalSet:
    """All ``2**eta`` legitimate transmit vectors, ordered lexicographically by bits.

    Array views (``bits``, ``x``, ``ranks``, ``labels``) are what the
    detectors and the analysis use; indexing yields TransmitFrame objects.
    """

    def __init__(self, cfg: SystemConfig, cap_bits: int = ENUMERATION_CAP_BITS):
        eta = spectral_efficiency(cfg)
        if eta > cap_bits:
            raise ModemError(f"eta={eta} bits exceeds the enumeration cap of {cap_bits}")
        self.cfg = cfg
        self.eta = eta
        n = 1 << eta
        self.bits = int_to_bits(np.arange(n), eta)
        blocks = self.bits.reshape(n, cfg.n_wg, cfg.im_bits + cfg.apm_bits)
        w = 1 << np.arange(cfg.im_bits - 1, -1, -1)
        self.ranks = (blocks[:, :, :cfg.im_bits].astype(np.int64) @ w) if cfg.im_bits else np.zeros((n, cfg.n_wg), np.int64)
        self.labels = bits_to_int(blocks[:, :, cfg.im_bits:]).reshape(n, cfg.n_wg)
        self.symbols = constellation(cfg.mod_order).points[self.labels]
        table = np.array(pattern_table(cfg.n_t, cfg.n_a))          # (n_patterns, n_a)
        self.x = np.zeros((n, cfg.n_cols), dtype=complex)
        rows = np.arange(n)
        for k in range(cfg.n_wg):
            for m in range(cfg.n_a):
                cols = k * cfg.n_t + table[self.ranks[:, k], m]
                self.x[rows, cols] = self.symbols[:, k]

    def __len__(self):
        return len(self.bits)

    def __getitem__(self, i) -> TransmitFrame:
        pattern = pattern_from_ranks(self.ranks[i], self.cfg)
        return TransmitFrame(self.bits[i].copy(), pattern, self.symbols[i].copy(), self.x[i].copy())

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def hamming(self) -> np.ndarray:
        """n_{i,j}: pairwise bit distances, shape (2**eta, 2**eta)."""
        idx = np.arange(len(self))
        return popcount(idx[:, None] ^ idx[None, :])

    def index_of(self, bits) -> int:
        return bits_to_int(bits)


def enumerate_signal_set(cfg: SystemConfig, cap_bits: int = ENUMERATION_CAP_BITS) -> SignalSet:
    return SignalSet(cfg, cap_bits)
