"""Hybrid in-waveguide / wireless channel model.

Each entry of the ``n_r x (n_t*n_wg)`` channel matrix is

    h = sqrt(beta) * (sqrt(K/(K+1)) * h_los + sqrt(1/(K+1)) * h_nlos) * gamma

where ``beta`` collects path loss and correlated shadowing, ``K`` is the
Rician factor of that link, ``h_los = 1`` and ``gamma`` is the phase picked
up between the feed point and the PA inside the waveguide.  Columns are
ordered waveguide-major, i.e. column ``n*n_t + j`` is candidate ``j`` on
waveguide ``n``.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import DeploymentGeometry, SystemConfig

LOS_RANGE_M = 300.0
_JITTER = 1e-12


class ChannelError(ValueError):
    pass


# --------------------------------------------------------------------------
# large-scale models
# --------------------------------------------------------------------------
def los_probability(d):
    d = np.asarray(d, dtype=float)
    p = np.where(d < LOS_RANGE_M, 1.0 - d / LOS_RANGE_M, 0.0)
    return p if p.ndim else float(p)


def rician_factor(d, has_los):
    d = np.asarray(d, dtype=float)
    k = np.where(has_los, 10.0 ** (1.3 - 0.003 * d), 0.0)
    return k if k.ndim else float(k)


def path_loss_db(d, has_los):
    """Walfisch-Ikegami gain in dB, shadowing excluded."""
    d = np.asarray(d, dtype=float)
    pl = np.where(has_los, -30.18 - 26.0 * np.log10(d), -34.53 - 38.0 * np.log10(d))
    return pl if pl.ndim else float(pl)


def waveguide_phase(feed, pa, lambda_g):
    """exp(-j 2 pi |feed - pa| / lambda_g); broadcasts over leading axes."""
    dist = np.linalg.norm(np.asarray(pa, float) - np.asarray(feed, float), axis=-1)
    g = np.exp(-2j * np.pi * dist / lambda_g)
    return g if np.ndim(g) else complex(g)


def shadow_correlation(points: np.ndarray, d_decorr: float) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    dist = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
    return 2.0 ** (-dist / d_decorr)


def correlation_factor(corr: np.ndarray) -> np.ndarray:
    """Symmetric square root of a correlation matrix.

    Tiny negative eigenvalues from rounding are handled by a 1e-12 diagonal
    jitter; anything more negative than that is reported.
    """
    w, v = np.linalg.eigh(corr)
    if w.min() < 0:
        w, v = np.linalg.eigh(corr + _JITTER * np.eye(len(corr)))
        if w.min() < -1e-9 * max(1.0, float(w.max())):
            raise ChannelError(f"shadow correlation matrix is not PSD: eigenvalue {w.min():.3e}")
        w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.T


def correlated_normal(points, sigma, d_decorr, rng, size=None) -> np.ndarray:
    """Zero-mean Gaussians over ``points`` with correlation 2**(-d/d_decorr).

    Returns shape ``(n_points,)`` or ``(size, n_points)``.
    """
    pts = np.asarray(points, dtype=float)
    L = correlation_factor(shadow_correlation(pts, d_decorr))
    shape = (len(pts),) if size is None else (size, len(pts))
    g = rng.standard_normal(shape)
    return sigma * (g @ L.T)


def sample_shadow_field(geom: DeploymentGeometry, cfg: SystemConfig, rng) -> np.ndarray:
    """Correlated shadowing F (dB), shape (n_r, n_wg*n_t).

    F[i, c] = sqrt(delta) * a[c] + sqrt(1 - delta) * b[i], with ``a`` drawn
    over the PA candidate positions and ``b`` over the receive elements.
    """
    a = correlated_normal(geom.pa_positions_flat, cfg.sigma_sf_db, cfg.d_decorr_m, rng)
    b = correlated_normal(geom.rx_elements, cfg.sigma_sf_db, cfg.d_decorr_m, rng)
    return np.sqrt(cfg.delta_sf) * a[None, :] + np.sqrt(1.0 - cfg.delta_sf) * b[:, None]


@dataclass(frozen=True)
class LargeScaleMap:
    beta: np.ndarray        # linear power gains, (n_r, n_cols)
    k_factor: np.ndarray    # Rician factors, 0 where no LoS
    has_los: np.ndarray
    shadow_db: np.ndarray

    def __post_init__(self):
        if np.any(self.beta <= 0):
            raise ChannelError("beta must be strictly positive")
        if np.any(self.k_factor < 0) or np.any(self.k_factor[~self.has_los] != 0):
            raise ChannelError("k_factor must be >= 0 and vanish on NLoS links")

    @property
    def shape(self):
        return self.beta.shape

    @classmethod
    def from_arrays(cls, beta, k_factor) -> "LargeScaleMap":
        """Synthetic map (no geometry), mostly for tests and analytical fixtures."""
        beta = np.asarray(beta, float)
        k = np.broadcast_to(np.asarray(k_factor, float), beta.shape).copy()
        return cls(beta, k, k > 0, np.zeros_like(beta))


def sample_large_scale(geom: DeploymentGeometry, cfg: SystemConfig, rng) -> LargeScaleMap:
    """One draw of LoS flags and shadowing for every (rx element, PA candidate) link."""
    d = geom.link_distances()
    has_los = rng.random(d.shape) < los_probability(d)
    k = rician_factor(d, has_los)
    shadow = sample_shadow_field(geom, cfg, rng)
    beta_db = path_loss_db(d, has_los) + shadow
    return LargeScaleMap(10.0 ** (beta_db / 10.0), k, has_los, shadow)


# --------------------------------------------------------------------------
# small-scale realisation
# --------------------------------------------------------------------------
def phase_matrix(geom: DeploymentGeometry, n_r: int | None = None) -> np.ndarray:
    """Gamma, shape (n_r, n_cols); identical rows since the phase is set inside the waveguide."""
    n_r = len(geom.rx_elements) if n_r is None else n_r
    g = waveguide_phase(geom.feed_points[:, None, :], geom.candidate_pa_positions, geom.lambda_g_m)
    return np.tile(np.asarray(g).reshape(1, -1), (n_r, 1))


@dataclass(frozen=True)
class ChannelRealization:
    h: np.ndarray
    b: np.ndarray           # sqrt(beta)
    k_los: np.ndarray       # sqrt(K/(K+1))
    k_nlos: np.ndarray      # sqrt(1/(K+1))
    h_los: np.ndarray
    h_nlos: np.ndarray
    gamma: np.ndarray
    n_t: int

    def recompose(self) -> np.ndarray:
        return self.b * (self.k_los * self.h_los + self.k_nlos * self.h_nlos) * self.gamma

    def block(self, n: int) -> dict[str, np.ndarray]:
        """Per-waveguide factor matrices B_n, K_LoS, K_NLoS, H-bar, H-tilde, Gamma_n and H_n."""
        sl = slice(n * self.n_t, (n + 1) * self.n_t)
        return {name: getattr(self, name)[:, sl]
                for name in ("h", "b", "k_los", "k_nlos", "h_los", "h_nlos", "gamma")}


def _amplitude_factors(large_scale: LargeScaleMap):
    k = large_scale.k_factor
    return np.sqrt(large_scale.beta), np.sqrt(k / (k + 1.0)), np.sqrt(1.0 / (k + 1.0))


def complex_normal(rng, shape) -> np.ndarray:
    """Circularly-symmetric CN(0, 1) samples."""
    g = rng.standard_normal((*np.atleast_1d(shape), 2))
    return (g[..., 0] + 1j * g[..., 1]) / np.sqrt(2.0)


def realize_channel(geom: DeploymentGeometry, large_scale: LargeScaleMap, rng) -> ChannelRealization:
    n_r, n_cols = large_scale.shape
    n_t = geom.candidate_pa_positions.shape[1]
    if n_cols != geom.pa_positions_flat.shape[0]:
        raise ChannelError(f"large-scale map has {n_cols} columns, geometry has {geom.pa_positions_flat.shape[0]}")
    b, k_los, k_nlos = _amplitude_factors(large_scale)
    h_los = np.ones((n_r, n_cols), dtype=complex)
    h_nlos = complex_normal(rng, (n_r, n_cols))
    gamma = phase_matrix(geom, n_r)
    h = b * (k_los * h_los + k_nlos * h_nlos) * gamma
    return ChannelRealization(h, b, k_los, k_nlos, h_los, h_nlos, gamma, n_t)


def realize_channels(geom: DeploymentGeometry, large_scale: LargeScaleMap, rng, n: int) -> np.ndarray:
    """``n`` independent small-scale draws over one large-scale map, shape (n, n_r, n_cols)."""
    b, k_los, k_nlos = _amplitude_factors(large_scale)
    gamma = phase_matrix(geom, large_scale.shape[0])
    h_nlos = complex_normal(rng, (n, *large_scale.shape))
    return b * (k_los + k_nlos * h_nlos) * gamma


# --------------------------------------------------------------------------
# second-order statistics of u = vec(H^H)
# --------------------------------------------------------------------------
def vec(a: np.ndarray) -> np.ndarray:
    """Column-stacking vectorisation."""
    return np.asarray(a).reshape(-1, order="F")


def commutation_matrix(m: int, n: int) -> np.ndarray:
    """K with K @ vec(A) == vec(A.T) for any m x n matrix A.

    Built as sum_j (e_j^T kron I_m kron e_j) with e_j the unit vectors of R^n.
    """
    eye_n = np.eye(n)
    K = np.zeros((m * n, m * n))
    for j in range(n):
        e = eye_n[:, j:j + 1]
        K += np.kron(np.kron(e.T, np.eye(m)), e)
    return K


@dataclass(frozen=True)
class ChannelStatistics:
    u_bar: np.ndarray           # E{vec(H^H)}, length n_r*n_cols
    c_u: np.ndarray             # covariance of vec(H^H)
    k_commutation: np.ndarray
    n_r: int
    n_cols: int

    def blocks(self) -> np.ndarray:
        """c_u reshaped to (n_r, n_r, n_cols, n_cols) receive-antenna blocks."""
        T = self.n_cols
        return self.c_u.reshape(self.n_r, T, self.n_r, T).transpose(0, 2, 1, 3)

    def mean_rows(self) -> np.ndarray:
        """u_bar split per receive antenna, shape (n_r, n_cols)."""
        return self.u_bar.reshape(self.n_r, self.n_cols)


def channel_statistics(geom: DeploymentGeometry, large_scale: LargeScaleMap) -> ChannelStatistics:
    """Mean and covariance of vec(H^H) given the large-scale map.

    The per-waveguide blocks are assembled in vec(H_n^*) order and permuted
    with the commutation matrix.  The mean uses the deterministic LoS matrix
    and the covariance uses the NLoS weights 1/(K+1).
    """
    n_r, n_cols = large_scale.shape
    n_wg, n_t = geom.candidate_pa_positions.shape[:2]
    if n_cols != n_wg * n_t:
        raise ChannelError("large-scale map does not match geometry")
    b, k_los, k_nlos = _amplitude_factors(large_scale)
    gamma = phase_matrix(geom, n_r)
    h_los = np.ones((n_r, n_cols))

    mean_parts, cov_blocks = [], []
    for n in range(n_wg):
        sl = slice(n * n_t, (n + 1) * n_t)
        vb, vl, vn = vec(b[:, sl]).conj(), vec(k_los[:, sl]).conj(), vec(k_nlos[:, sl]).conj()
        vg, vh = vec(gamma[:, sl]).conj(), vec(h_los[:, sl]).conj()
        mean_parts.append(vb * vl * vh * vg)
        dim = n_r * n_t
        cov_blocks.append(np.outer(vb, vb.conj()) * np.outer(vn, vn.conj())
                          * np.eye(dim) * np.outer(vg, vg.conj()))

    K = commutation_matrix(n_r, n_cols)
    block = np.zeros((n_r * n_cols, n_r * n_cols), dtype=complex)
    off = 0
    for cb in cov_blocks:
        block[off:off + len(cb), off:off + len(cb)] = cb
        off += len(cb)
    u_bar = K @ np.concatenate(mean_parts)
    c_u = K @ block @ K.T
    return ChannelStatistics(u_bar, c_u, K, n_r, n_cols)


# --------------------------------------------------------------------------
# matrix dumps
# --------------------------------------------------------------------------
_MAGIC = b"PAIMH\x00\x01\x00"


def save_channel(path, h: np.ndarray, binary: bool = False) -> None:
    """Row-major complex dump: header ``rows cols`` then (re, im) pairs."""
    h = np.asarray(h, dtype=complex)
    rows, cols = h.shape
    pairs = np.stack([h.real, h.imag], axis=-1).reshape(rows, 2 * cols)
    path = Path(path)
    if binary:
        with path.open("wb") as fh:
            fh.write(_MAGIC + struct.pack("<qq", rows, cols))
            fh.write(pairs.astype("<f8").tobytes())
    else:
        lines = [f"{rows} {cols}"] + [" ".join(repr(float(v)) for v in row) for row in pairs]
        path.write_text("\n".join(lines) + "\n")


def load_channel(path) -> np.ndarray:
    path = Path(path)
    data = path.read_bytes()
    if data.startswith(_MAGIC):
        rows, cols = struct.unpack("<qq", data[len(_MAGIC):len(_MAGIC) + 16])
        pairs = np.frombuffer(data[len(_MAGIC) + 16:], dtype="<f8")
    else:
        head, *body = data.decode().split("\n", 1)
        rows, cols = (int(t) for t in head.split())
        pairs = np.array(body[0].split(), dtype=float) if body else np.empty(0)
    if pairs.size != 2 * rows * cols:
        raise ChannelError(f"{path}: expected {2 * rows * cols} values, found {pairs.size}")
    pairs = pairs.reshape(rows, cols, 2)
    return pairs[..., 0] + 1j * pairs[..., 1]
