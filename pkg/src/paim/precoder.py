"""Per-waveguide transmit precoding by Riemannian gradient descent.

The precoder applies one complex weight per waveguide, W = diag(w) kron I_{n_t},
with ||w||^2 = n_wg.  Since ||H W delta||^2 = w^H G w with G = (H D)^H (H D)
and D the block-diagonal split of delta, the conditional bound

    f(w) = sum_{i<j} c_ij [ (1/12) exp(-a1 w^H G w) + (1/4) exp(-a2 w^H G w) ]

with a1 = rho / (4 N0), a2 = rho / (3 N0) is minimised over the complex
sphere.  Gradients follow the convention f(w + d) ~ f(w) + 2 Re{g^H d}.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import signal_pairs
from .config import SystemConfig
from .modem import SignalSet

ARMIJO_C = 1e-4
MAX_HALVINGS = 50
MAX_ITER = 500
GRAD_TOL = 1e-8


class PrecoderError(ArithmeticError):
    pass


@dataclass(frozen=True)
class PairDifferenceBlocks:
    d_mats: np.ndarray          # (P, n_cols, n_wg)
    hd_products: np.ndarray     # (P, n_r, n_wg)
    gram: np.ndarray            # (P, n_wg, n_wg) (HD)^H (HD)
    weights: np.ndarray         # (P,) 2 n_ij / (eta 2^eta), symmetric pairs folded


def difference_blocks(delta, n_t: int, n_wg: int) -> np.ndarray:
    """D with D w == (diag(w) kron I_{n_t}) delta; accepts a stack of deltas."""
    delta = np.asarray(delta)
    d = np.zeros((*delta.shape[:-1], n_t * n_wg, n_wg), dtype=complex)
    for k in range(n_wg):
        sl = slice(k * n_t, (k + 1) * n_t)
        d[..., sl, k] = delta[..., sl]
    return d


def pair_blocks(h, cfg: SystemConfig, signal_set: SignalSet | None = None) -> PairDifferenceBlocks:
    signal_set = signal_set or SignalSet(cfg)
    _, _, deltas, n_ij = signal_pairs(signal_set)
    keep = n_ij > 0
    d = difference_blocks(deltas[keep], cfg.n_t, cfg.n_wg)
    hd = np.asarray(h) @ d
    gram = hd.conj().transpose(0, 2, 1) @ hd
    weights = 2.0 * n_ij[keep] / (signal_set.eta * len(signal_set))
    return PairDifferenceBlocks(d, hd, gram, weights)


def _energies(w, blocks: PairDifferenceBlocks) -> np.ndarray:
    """w^H G_p w for every pair, as one product with the flattened Gram stack."""
    n = len(w)
    return (blocks.gram.reshape(-1, n * n) @ np.outer(w.conj(), w).reshape(-1)).real


def objective_f(w, blocks: PairDifferenceBlocks, rho, n0) -> float:
    g = _energies(np.asarray(w, complex), blocks)
    terms = blocks.weights * (np.exp(-rho * g / (4 * n0)) / 12 + np.exp(-rho * g / (3 * n0)) / 4)
    return float(np.sum(terms))


def euclidean_gradient(w, blocks: PairDifferenceBlocks, rho, n0) -> np.ndarray:
    """Conjugate-coordinate gradient df/dw*."""
    w = np.asarray(w, complex)
    n = len(w)
    g = _energies(w, blocks)
    coef = blocks.weights * (rho / (48 * n0) * np.exp(-rho * g / (4 * n0))
                             + rho / (12 * n0) * np.exp(-rho * g / (3 * n0)))
    return -(coef @ blocks.gram.reshape(-1, n * n)).reshape(n, n) @ w


def riemannian_gradient(w, egrad) -> np.ndarray:
    w = np.asarray(w, complex)
    return egrad - (np.vdot(egrad, w).real / np.vdot(w, w).real) * w


def retract(w, step) -> np.ndarray:
    v = np.asarray(w, complex) + step
    nrm = np.linalg.norm(v)
    if nrm == 0:
        raise PrecoderError("retraction undefined: w + step vanishes")
    return math.sqrt(len(v)) * v / nrm


@dataclass(frozen=True)
class PrecodingVector:
    w: np.ndarray
    objective: float
    history: tuple = field(default=(), repr=False)
    stalled: bool = False
    iterations: int = 0

    def matrix(self, n_t: int) -> np.ndarray:
        """W = diag(w) kron I_{n_t}."""
        return np.kron(np.diag(self.w), np.eye(n_t))

    def column_weights(self, n_t: int) -> np.ndarray:
        return np.repeat(self.w, n_t)


def optimize_precoder(h, cfg: SystemConfig, signal_set: SignalSet | None = None, tol: float = 1e-10,
                      rho=None, n0=None, max_iter: int = MAX_ITER, blocks=None) -> PrecodingVector:
    """Armijo-backtracked Riemannian descent from w0 = 1.

    Stops on relative decrease below ``tol``, Riemannian gradient norm below
    1e-8, or ``max_iter`` iterations.  The trial step of each line search
    starts at max(1, 2 x previous accepted step).
    """
    rho = cfg.rho if rho is None else rho
    n0 = cfg.n0_mw if n0 is None else n0
    blocks = blocks or pair_blocks(h, cfg, signal_set)
    w = np.ones(cfg.n_wg, dtype=complex)
    f = objective_f(w, blocks, rho, n0)
    hist = [f]
    step = 1.0
    stalled = False
    it = 0
    for it in range(1, max_iter + 1):
        grad = riemannian_gradient(w, euclidean_gradient(w, blocks, rho, n0))
        gn2 = float(np.vdot(grad, grad).real)
        if math.sqrt(gn2) < GRAD_TOL:
            it -= 1
            break
        beta = max(1.0, 2.0 * step)
        for _ in range(MAX_HALVINGS + 1):
            cand = retract(w, -beta * grad)
            fc = objective_f(cand, blocks, rho, n0)
            if fc <= f - ARMIJO_C * beta * gn2:
                break
            beta *= 0.5
        else:
            stalled = True
            break
        decrease = f - fc
        w, f, step = cand, fc, beta
        hist.append(f)
        if decrease <= tol * max(abs(hist[-2]), 1e-300):
            break
    return PrecodingVector(w, f, tuple(hist), stalled, it)


PRECODER_COLUMNS = ("waveguide", "re", "im")


def write_precoder_csv(path, w) -> None:
    with Path(path).open("w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(PRECODER_COLUMNS)
        for k, v in enumerate(np.asarray(w, complex)):
            out.writerow([k, repr(float(v.real)), repr(float(v.imag))])


def read_precoder_csv(path) -> np.ndarray:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    return np.array([float(r["re"]) + 1j * float(r["im"]) for r in rows])
