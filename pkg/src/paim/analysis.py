"""Union upper bound on the bit error rate.

For a pair of transmit vectors with difference delta, the conditional PEP is
Q(sqrt(rho ||H delta||^2 / (2 N0))).  Writing u = vec(H^H), the energy
||H delta||^2 = u^H Q u with Q = I_{n_r} kron delta delta^H is a Hermitian
form of a complex Gaussian vector, so its MGF is available in closed form and
the PEP averaged over small-scale fading follows either from the Craig
integral (quadrature) or from a two-exponential approximation of Q.

Q has rank n_r, so the MGF is evaluated on an n_r x n_r core

    A = V^H C_u V,   b = V^H u_bar,   V = I_{n_r} kron delta

giving MGF(s) = exp(s b^H (I - sA)^{-1} b) / det(I - sA).
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import erfc

from .channel import ChannelStatistics
from .config import SystemConfig
from .modem import ModemError, SignalSet

QUADRATURE_ORDER = 64
PAIR_CHUNK = 4096
VARIANTS = ("conditional", "conditional_closed_form", "closed_form", "quadrature")


class AnalysisError(ArithmeticError):
    pass


def q_function(x):
    return 0.5 * erfc(np.asarray(x) / np.sqrt(2.0))


def q_approx(x):
    """Two-exponential approximation (1/12) e^{-x^2/2} + (1/4) e^{-2x^2/3}."""
    x2 = np.asarray(x) ** 2
    return np.exp(-x2 / 2) / 12 + np.exp(-2 * x2 / 3) / 4


# --------------------------------------------------------------------------
# pair quantities
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class PairwiseContext:
    delta: np.ndarray
    q_form: np.ndarray
    n_bits: int

    @classmethod
    def from_pair(cls, signal_set: SignalSet, i: int, j: int) -> "PairwiseContext":
        delta = signal_set.x[i] - signal_set.x[j]
        n_bits = int(np.count_nonzero(signal_set.bits[i] != signal_set.bits[j]))
        return cls(delta, quadratic_form_matrix(delta, signal_set.cfg.n_r), n_bits)


def quadratic_form_matrix(delta, n_r: int) -> np.ndarray:
    d = np.asarray(delta, dtype=complex)
    return np.kron(np.eye(n_r), np.outer(d, d.conj()))


def quadratic_form_value(h, delta) -> float:
    """u^H Q u with u = vec(H^H); equals ||H delta||^2."""
    h = np.asarray(h)
    u = h.conj().reshape(-1)        # vec(H^H): rows of H, conjugated, stacked
    q = quadratic_form_matrix(delta, h.shape[0])
    return float(np.vdot(u, q @ u).real)


def conditional_pep(h, delta, rho, n0):
    """Exact PEP given H; ``delta`` may be a stack (..., n_cols)."""
    if n0 <= 0:
        raise AnalysisError("n0 must be positive")
    hd = np.asarray(delta) @ np.asarray(h).T
    gamma = np.sum(np.abs(hd) ** 2, axis=-1)
    return q_function(np.sqrt(rho * gamma / (2.0 * n0)))


# --------------------------------------------------------------------------
# MGF
# --------------------------------------------------------------------------
def pep_mgf(stats: ChannelStatistics, q_form, s: float) -> float:
    """Dense evaluation of E{exp(s u^H Q u)} through a log-determinant."""
    q_form = np.asarray(q_form, dtype=complex)
    cq = stats.c_u @ q_form
    if s > 0 and s * np.max(np.linalg.eigvals(cq).real, initial=0.0) >= 1.0:
        raise AnalysisError(f"I - s C_u Q is singular or indefinite at s={s}")
    m = np.eye(len(q_form)) - s * cq
    sign, logdet = np.linalg.slogdet(m)
    if sign == 0 or not np.isfinite(logdet):
        raise AnalysisError(f"I - s C_u Q is singular at s={s}")
    quad = s * np.vdot(stats.u_bar, q_form @ np.linalg.solve(m, stats.u_bar))
    return float(np.exp(quad.real - logdet))


@dataclass(frozen=True)
class MgfCores:
    """Eigen-decomposed n_r x n_r cores for a stack of pair differences."""
    eigvals: np.ndarray     # (P, n_r)
    weights: np.ndarray     # (P, n_r) |U^H b|^2

    def __call__(self, s) -> np.ndarray:
        """MGF values, shape (P, len(s))."""
        s = np.atleast_1d(np.asarray(s, float))
        den = 1.0 - s[None, None, :] * self.eigvals[:, :, None]
        if np.any(den <= 0):
            bad = s[np.any(den <= 0, axis=(0, 1))]
            raise AnalysisError(f"I - sA is singular or indefinite at s={bad[0]}")
        log = np.sum(s[None, None, :] * self.weights[:, :, None] / den - np.log(den), axis=1)
        return np.exp(log)


def mgf_cores(stats: ChannelStatistics, deltas) -> MgfCores:
    deltas = np.atleast_2d(np.asarray(deltas, dtype=complex))
    u = stats.mean_rows()                       # (n_r, T)
    blocks = stats.blocks()                     # (n_r, n_r, T, T)
    b = deltas.conj() @ u.T                     # (P, n_r): delta^H u_m
    cd = np.einsum("mntu,pu->pmnt", blocks, deltas)
    A = np.einsum("pt,pmnt->pmn", deltas.conj(), cd)
    A = 0.5 * (A + A.conj().transpose(0, 2, 1))
    lam, U = np.linalg.eigh(A)
    c = np.abs(np.einsum("pmk,pm->pk", U.conj(), b)) ** 2
    return MgfCores(np.clip(lam, 0.0, None), c)


_GL = {}


def _gauss_legendre(order: int):
    if order not in _GL:
        x, w = np.polynomial.legendre.leggauss(order)
        _GL[order] = (np.pi / 4 * (x + 1), np.pi / 4 * w)     # mapped to [0, pi/2]
    return _GL[order]


def _craig_arguments(rho, n0, order):
    theta, w = _gauss_legendre(order)
    return -rho / (4.0 * n0 * np.sin(theta) ** 2), w / np.pi


def pep_quadrature(stats: ChannelStatistics, q_form, rho, n0, order: int = QUADRATURE_ORDER) -> float:
    """(1/pi) int_0^{pi/2} MGF(-rho / (4 N0 sin^2 t)) dt by Gauss-Legendre."""
    s, w = _craig_arguments(rho, n0, order)
    return float(sum(wi * pep_mgf(stats, q_form, si) for si, wi in zip(s, w)))


def pep_closed_form(stats: ChannelStatistics, q_form, rho, n0) -> float:
    return pep_mgf(stats, q_form, -rho / (4 * n0)) / 12 + pep_mgf(stats, q_form, -rho / (3 * n0)) / 4


def _pep_batch(cores: MgfCores, variant: str, rho, n0, order) -> np.ndarray:
    if variant == "closed_form":
        m = cores([-rho / (4 * n0), -rho / (3 * n0)])
        return m[:, 0] / 12 + m[:, 1] / 4
    s, w = _craig_arguments(rho, n0, order)
    return cores(s) @ w


# --------------------------------------------------------------------------
# union bound
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class BerBound:
    value: float
    variant: str
    clamped: float = field(default=0.0)
    per_pair_terms: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "clamped", min(self.value, 0.5))


def signal_pairs(signal_set: SignalSet):
    """Unordered pairs i < j with their differences and Hamming distances."""
    if signal_set.eta < 1:
        raise ModemError("union bound needs at least one information bit")
    i, j = np.triu_indices(len(signal_set), 1)
    return i, j, signal_set.x[i] - signal_set.x[j], signal_set.hamming()[i, j]


def union_bound(cfg: SystemConfig, stats: ChannelStatistics | None, signal_set: SignalSet, rho: float,
                n0: float, variant: str = "closed_form", h=None, keep_terms: bool = False,
                order: int = QUADRATURE_ORDER) -> BerBound:
    """(1/(eta 2^eta)) sum_{i != j} n_ij PEP(i -> j), each PEP clipped to [0, 0.5].

    ``conditional`` and ``conditional_closed_form`` need the channel ``h``;
    the averaged variants need ``stats``.  Only i < j is evaluated since the
    pairwise term is symmetric.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown bound variant {variant!r}")
    if n0 <= 0:
        raise AnalysisError("n0 must be positive")
    _, _, deltas, n_ij = signal_pairs(signal_set)
    peps = np.empty(len(deltas))
    for lo in range(0, len(deltas), PAIR_CHUNK):
        d = deltas[lo:lo + PAIR_CHUNK]
        if variant.startswith("conditional"):
            if h is None:
                raise ValueError(f"variant {variant!r} requires the channel matrix")
            gamma = np.sum(np.abs(d @ np.asarray(h).T) ** 2, axis=-1)
            x = np.sqrt(rho * gamma / (2 * n0))
            peps[lo:lo + len(d)] = q_function(x) if variant == "conditional" else q_approx(x)
        else:
            if stats is None:
                raise ValueError(f"variant {variant!r} requires channel statistics")
            peps[lo:lo + len(d)] = _pep_batch(mgf_cores(stats, d), variant, rho, n0, order)
    terms = 2.0 * n_ij * np.clip(peps, 0.0, 0.5)
    eta = signal_set.eta
    value = math.fsum(terms) / (eta * len(signal_set))
    return BerBound(value, variant, per_pair_terms=terms if keep_terms else None)


BOUND_COLUMNS = ("snr_db", "bound", "bound_clamped", "variant")


def bound_rows_to_csv(rows) -> str:
    """rows: iterable of (snr_db, BerBound)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BOUND_COLUMNS)
    for snr, b in rows:
        w.writerow([repr(float(snr)), repr(b.value), repr(b.clamped), b.variant])
    return buf.getvalue()


def write_bound_csv(path, rows) -> None:
    Path(path).write_text(bound_rows_to_csv(rows))
