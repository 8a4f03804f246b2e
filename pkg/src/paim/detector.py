"""Exhaustive ML and box-optimised sphere decoding (BO-SD) detectors.

Both detectors work on the power-normalised observation y' = y / sqrt(rho)
and score candidates with the same routine (:func:`candidate_metrics`), so a
candidate evaluated by either detector gets a bit-identical metric.  Ties are
broken towards the lowest bit string.

BO-SD searches each activation pattern separately.  For a pattern the
equivalent channel is QR factorised, the box relaxation (P1) of the symbol
problem gives a starting point whose quantisation sets the sphere radius,
and a depth-first search runs from the last layer down.  At layer k a
constellation point survives only if

    |z_k - R_kk s_k - sum_{c>k} R_kc s_c|^2  <=  d^2 - C1 - C2

with C2 the cost already accumulated on the upper layers and C1 a lower
bound on the cost of the remaining layers, obtained from the box-relaxed
problem (P2-k) over s_1..s_{k-1}.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .boxqp import BoxQpProblem, solve_box_qp, solve_with_bound
from .config import SystemConfig
from .modem import (ENUMERATION_CAP_BITS, ActivationPattern, ModemError, all_patterns, constellation,
                    frame_bits, int_to_bits, pattern_table, spectral_efficiency)

RADIUS_SLACK = 1e-9


class DetectionError(RuntimeError):
    pass


@dataclass
class SearchCounters:
    nodes_visited: int = 0
    qp_solves: int = 0
    metric_evals: int = 0

    def __add__(self, other: "SearchCounters") -> "SearchCounters":
        return SearchCounters(self.nodes_visited + other.nodes_visited,
                              self.qp_solves + other.qp_solves,
                              self.metric_evals + other.metric_evals)


@dataclass(frozen=True)
class EquivalentChannel:
    h_eq: np.ndarray
    q: np.ndarray
    r: np.ndarray       # (n_wg, n_wg) upper triangular, zero rows appended when n_r < n_wg
    z: np.ndarray       # Q^H y', zero padded alongside r
    offset: float       # ||y'||^2 - ||Q^H y'||^2, energy outside the column space


@dataclass(frozen=True)
class DetectionResult:
    pattern: ActivationPattern
    symbols: np.ndarray
    bits: np.ndarray
    metric: float               # ||y' - H x||^2 of the decision
    counters: SearchCounters = field(default_factory=SearchCounters)
    index: int = 0              # integer value of ``bits``


@dataclass(frozen=True)
class EffortRecord:
    patterns: int
    metric_evals: float         # per pattern
    qp_solves: float
    nodes_visited: float
    total_metric_evals: int


# --------------------------------------------------------------------------
# shared building blocks
# --------------------------------------------------------------------------
def normalise(y, rho) -> np.ndarray:
    return np.asarray(y) / np.sqrt(rho)


def equivalent_channel(h, pattern: ActivationPattern, n_t: int) -> np.ndarray:
    """H E_I (I kron 1_{n_a}): per waveguide, the sum of its active columns.

    Accepts a batch ``(..., n_r, n_cols)``.
    """
    h = np.asarray(h)
    cols = pattern.columns(n_t)
    out = np.empty((*h.shape[:-1], len(cols)), dtype=complex)
    for k, cs in enumerate(cols):
        acc = h[..., cs[0]]
        for c in cs[1:]:
            acc = acc + h[..., c]
        out[..., k] = acc
    return out


def candidate_metrics(y_norm, h_eq, symbols) -> np.ndarray:
    """||y' - H_eq s||^2 for every row of ``symbols``.

    y_norm (..., n_r), h_eq (..., n_r, n_wg), symbols (n_cand, n_wg) ->
    (..., n_cand).  Purely elementwise accumulation in a fixed order, so the
    value for a candidate does not depend on how many are scored together.
    """
    y_norm = np.asarray(y_norm)
    S = np.asarray(symbols)
    r = np.broadcast_to(y_norm[..., None, :], (*y_norm.shape[:-1], S.shape[0], y_norm.shape[-1])).copy()
    for k in range(S.shape[1]):
        r -= h_eq[..., None, :, k] * S[:, k][:, None]
    e = np.zeros(r.shape[:-1])
    for m in range(r.shape[-1]):
        e += r[..., m].real ** 2 + r[..., m].imag ** 2
    return e


def qr_equivalent(h_eq, y_norm) -> EquivalentChannel:
    """QR of the equivalent channel with a real non-negative diagonal of R."""
    n_r, n_wg = h_eq.shape
    q, r = np.linalg.qr(h_eq, mode="reduced")
    d = np.diagonal(r)
    ph = np.where(np.abs(d) > 0, d / np.where(np.abs(d) > 0, np.abs(d), 1.0), 1.0)
    # ph has unit modulus; fold its conjugate into R rows and the phase into Q columns
    r = r * ph.conj()[:, None]
    q = q * ph[None, :]
    r[np.diag_indices(min(r.shape))] = np.abs(np.diagonal(r))
    z = q.conj().T @ y_norm
    offset = max(float(np.vdot(y_norm, y_norm).real - np.vdot(z, z).real), 0.0)
    if r.shape[0] < n_wg:
        pad = n_wg - r.shape[0]
        r = np.vstack([r, np.zeros((pad, n_wg), dtype=complex)])
        z = np.concatenate([z, np.zeros(pad, dtype=complex)])
    return EquivalentChannel(h_eq, q, r, z, offset)


def bit_index(ranks, labels, cfg: SystemConfig) -> int:
    v = 0
    for rk, lab in zip(ranks, labels):
        v = (v << cfg.im_bits | int(rk)) << cfg.apm_bits | int(lab)
    return v


def _result(pattern, labels, metric, counters, cfg) -> DetectionResult:
    pts = constellation(cfg.mod_order).points
    labels = np.asarray(labels, dtype=np.int64)
    bits = frame_bits(pattern, labels, cfg)
    return DetectionResult(pattern, pts[labels], bits, float(metric), counters,
                           bit_index(pattern.rank, labels, cfg))


# --------------------------------------------------------------------------
# exhaustive ML
# --------------------------------------------------------------------------
@lru_cache(maxsize=32)
def _ml_tables(n_t: int, n_a: int, n_wg: int, order: int):
    cfg = SystemConfig(n_t=n_t, n_a=n_a, n_wg=n_wg, mod_order=order)
    patterns = all_patterns(cfg)
    labels = np.array(list(itertools.product(range(order), repeat=n_wg)), dtype=np.int64).reshape(-1, n_wg)
    symbols = constellation(order).points[labels]
    index = np.array([[bit_index(p.rank, lab, cfg) for lab in labels] for p in patterns]).reshape(-1)
    return patterns, labels, symbols, np.argsort(index), index


def ml_metrics(y_norm, h, cfg: SystemConfig) -> np.ndarray:
    """Metrics of every candidate, columns in bit-index order; batch over leading axes."""
    eta = spectral_efficiency(cfg)
    if eta > ENUMERATION_CAP_BITS:
        raise ModemError(f"eta={eta} exceeds the enumeration cap of {ENUMERATION_CAP_BITS} bits")
    patterns, _, symbols, order, _ = _ml_tables(cfg.n_t, cfg.n_a, cfg.n_wg, cfg.mod_order)
    blocks = [candidate_metrics(y_norm, equivalent_channel(h, p, cfg.n_t), symbols) for p in patterns]
    return np.concatenate(blocks, axis=-1)[..., order]


def ml_detect_batch(y, h, cfg: SystemConfig, rho=None) -> np.ndarray:
    """Vectorised ML decisions: bit indices for a batch (n, n_r) / (n, n_r, n_cols)."""
    rho = cfg.rho if rho is None else rho
    return np.argmin(ml_metrics(normalise(y, rho), h, cfg), axis=-1)


def ml_detect(y, h, cfg: SystemConfig, rho=None) -> DetectionResult:
    """argmin over the whole signal set of ||y - sqrt(rho) H x||^2."""
    rho = cfg.rho if rho is None else rho
    metrics = ml_metrics(normalise(y, rho), h, cfg)
    best = int(np.argmin(metrics))
    n_per = cfg.mod_order ** cfg.n_wg
    patterns, labels, *_ = _ml_tables(cfg.n_t, cfg.n_a, cfg.n_wg, cfg.mod_order)
    bits = int_to_bits(best, spectral_efficiency(cfg))
    blocks = bits.reshape(cfg.n_wg, cfg.im_bits + cfg.apm_bits)
    w_im = 1 << np.arange(cfg.im_bits - 1, -1, -1)
    w_apm = 1 << np.arange(cfg.apm_bits - 1, -1, -1)
    ranks = blocks[:, :cfg.im_bits].astype(np.int64) @ w_im if cfg.im_bits else np.zeros(cfg.n_wg, np.int64)
    labs = blocks[:, cfg.im_bits:].astype(np.int64) @ w_apm
    p_index = 0
    n_pat = len(pattern_table(cfg.n_t, cfg.n_a))
    for rk in ranks:
        p_index = p_index * n_pat + int(rk)
    counters = SearchCounters(nodes_visited=0, qp_solves=0, metric_evals=len(patterns) * n_per)
    return _result(patterns[p_index], labs, metrics[best], counters, cfg)


# --------------------------------------------------------------------------
# BO-SD
# --------------------------------------------------------------------------
class _PatternSearch:
    """Depth-first layered search over one activation pattern."""

    def __init__(self, eq: EquivalentChannel, points, box, counters, tol):
        self.r, self.z, self.pts, self.box = eq.r, eq.z, points, box
        self.counters = counters
        self.tol = tol
        self.n = eq.r.shape[1]
        self.cache: dict = {}
        self.labels = np.zeros(self.n, dtype=np.int64)

    def lower_bound_rest(self, k: int, label: int) -> float:
        """C1 for layer k: box-relaxed minimum of the layers below k."""
        key = (k, label, tuple(self.labels[k + 1:]))
        if key in self.cache:
            return self.cache[key]
        r, pts = self.r, self.pts
        t = self.z[:k] - r[:k, k] * pts[label] - r[:k, k + 1:] @ pts[self.labels[k + 1:]]
        self.counters.qp_solves += 1
        if k == 1:
            # one complex unknown with a real diagonal coefficient: separable per axis
            r00 = r[0, 0].real
            lo_r, hi_r, lo_i, hi_i = self.box
            if r00 > 0:
                s = complex(np.clip(t[0].real / r00, lo_r, hi_r), np.clip(t[0].imag / r00, lo_i, hi_i))
                c1 = abs(t[0] - r00 * s) ** 2
            else:
                c1 = abs(t[0]) ** 2
        else:
            _, c1 = solve_with_bound(BoxQpProblem(r[:k, :k], t, self.box))
        self.cache[key] = c1
        return c1

    def run(self, radius2: float, on_leaf) -> None:
        self.radius2 = radius2
        self.on_leaf = on_leaf
        self._visit(self.n - 1, 0.0)

    def _visit(self, k: int, c2: float) -> None:
        r, pts = self.r, self.pts
        interf = r[k, k + 1:] @ pts[self.labels[k + 1:]] if k + 1 < self.n else 0.0
        res = np.abs(self.z[k] - interf - r[k, k] * pts) ** 2
        for label in np.flatnonzero(res + c2 <= self.radius2 + self.tol):
            if res[label] + c2 > self.radius2 + self.tol:
                continue        # radius shrank since the mask was built
            if k > 0:
                c1 = self.lower_bound_rest(k, label)
                if res[label] + c1 + c2 > self.radius2 + self.tol:
                    continue
            self.counters.nodes_visited += 1
            self.labels[k] = label
            if k == 0:
                self.radius2 = min(self.radius2, self.on_leaf(self.labels.copy()))
            else:
                self._visit(k - 1, c2 + res[label])


def bo_sd_detect(y, h, cfg: SystemConfig, rho=None, share_radius: bool = True) -> DetectionResult:
    """Box-optimised sphere decoder; returns the same decision as :func:`ml_detect`.

    ``share_radius`` lets the best metric found on earlier patterns cap the
    radius of later ones (a pattern whose out-of-span energy already exceeds
    it is skipped after its radius initialisation).
    """
    rho = cfg.rho if rho is None else rho
    cons = constellation(cfg.mod_order)
    pts, box = cons.points, cons.box
    y_norm = normalise(y, rho)
    counters = SearchCounters()
    best = [np.inf, -1, None, None]          # metric, bit index, pattern, labels

    for pattern in all_patterns(cfg):
        h_eq = equivalent_channel(h, pattern, cfg.n_t)
        eq = qr_equivalent(h_eq, y_norm)
        scale = float(np.vdot(y_norm, y_norm).real + np.sum(np.abs(eq.r) ** 2) * np.max(np.abs(pts)) ** 2)
        tol = RADIUS_SLACK * scale
        evaluated: dict[tuple, float] = {}

        def leaf(labels, pattern=pattern, h_eq=h_eq, eq=eq, evaluated=evaluated):
            key = tuple(labels)
            m = evaluated.get(key)
            if m is None:
                m = float(candidate_metrics(y_norm, h_eq, pts[labels][None, :])[0])
                counters.metric_evals += 1
                evaluated[key] = m
                idx = bit_index(pattern.rank, labels, cfg)
                if m < best[0] or (m == best[0] and idx < best[1]):
                    best[:] = [m, idx, pattern, labels.copy()]
            return m - eq.offset

        s_tilde = solve_box_qp(BoxQpProblem(eq.r, eq.z, box))
        counters.qp_solves += 1
        quant = np.argmin(np.abs(s_tilde[:, None] - pts[None, :]) ** 2, axis=1)
        radius2 = leaf(quant)
        if share_radius:
            radius2 = min(radius2, best[0] - eq.offset)
        if radius2 + tol < 0:
            continue
        _PatternSearch(eq, pts, box, counters, tol).run(radius2, leaf)

    if best[2] is None:
        raise DetectionError("no candidate evaluated")
    return _result(best[2], best[3], best[0], counters, cfg)


def search_effort(result: DetectionResult, cfg: SystemConfig) -> EffortRecord:
    """Counters normalised per activation pattern."""
    n = len(all_patterns(cfg))
    c = result.counters
    return EffortRecord(n, c.metric_evals / n, c.qp_solves / n, c.nodes_visited / n, c.metric_evals)
