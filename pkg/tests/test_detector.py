import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from paim.channel import complex_normal
from paim.config import SystemConfig
from paim.detector import (SearchCounters, _PatternSearch, bo_sd_detect, candidate_metrics, equivalent_channel,
                           ml_detect, ml_detect_batch, qr_equivalent, search_effort)
from paim.modem import (ENUMERATION_CAP_BITS, ModemError, all_patterns, build_transmit, constellation,
                        frame_bits, spectral_efficiency)


def draw(cfg, rng, snr_db):
    h = complex_normal(rng, (cfg.n_r, cfg.n_cols))
    bits = rng.integers(0, 2, spectral_efficiency(cfg)).astype(np.uint8)
    x = build_transmit(bits, cfg).x
    y = h @ x + complex_normal(rng, cfg.n_r) * 10 ** (-snr_db / 20)
    return h, bits, y


def brute_force(y, h, cfg, rho):
    """Independent exhaustive search over every bit string."""
    eta = spectral_efficiency(cfg)
    best, best_bits = np.inf, None
    for bits in itertools.product((0, 1), repeat=eta):
        x = build_transmit(np.array(bits, np.uint8), cfg).x
        m = np.linalg.norm(y - np.sqrt(rho) * h @ x) ** 2
        if m < best:
            best, best_bits = m, np.array(bits, np.uint8)
    return best_bits


def test_ml_matches_brute_force(rng):
    cfgs = [SystemConfig(n_t=4, n_wg=1, n_r=2, mod_order=4), SystemConfig(n_t=4, n_wg=2, n_a=2, n_r=1, mod_order=2),
            SystemConfig(n_t=3, n_wg=1, n_r=3, mod_order=8)]
    for k in range(1000):
        cfg = cfgs[k % 3]
        h, _, y = draw(cfg, rng, 5.0)
        assert np.array_equal(ml_detect(y, h, cfg, rho=1.0).bits, brute_force(y, h, cfg, 1.0))


def test_ml_noiseless_identity_and_counts(rng):
    cfg = SystemConfig(n_t=4, n_wg=2, n_r=2, mod_order=16)
    h, bits, _ = draw(cfg, rng, 0.0)
    rho = 7.0
    y = np.sqrt(rho) * h @ build_transmit(bits, cfg).x
    r = ml_detect(y, h, cfg, rho=rho)
    assert np.array_equal(r.bits, bits)
    assert r.metric == pytest.approx(0.0, abs=1e-20)
    assert r.counters.metric_evals == 16 * 16 ** 2
    assert np.array_equal(frame_bits(r.pattern, np.argmin(np.abs(r.symbols[:, None] - constellation(16).points),
                                                          axis=1), cfg), r.bits)


@pytest.mark.parametrize("detect", [ml_detect, bo_sd_detect])
def test_zero_channel_returns_first_candidate(detect):
    cfg = SystemConfig(n_t=4, n_wg=2, n_r=2, mod_order=4)
    r = detect(np.array([0.3 + 1j, -2.0]), np.zeros((2, 8)), cfg, rho=1.0)
    assert r.index == 0 and not r.bits.any()


def test_ml_cap():
    with pytest.raises(ModemError):
        ml_detect(np.zeros(1), np.zeros((1, 12)), SystemConfig(n_t=4, n_wg=3, n_r=1, mod_order=64))
    assert spectral_efficiency(SystemConfig(n_t=4, n_wg=3, mod_order=64)) > ENUMERATION_CAP_BITS


def test_batch_matches_single(rng):
    cfg = SystemConfig(n_t=4, n_wg=2, n_r=2, mod_order=4)
    hs, ys = zip(*[(h, y) for h, _, y in (draw(cfg, rng, 10.0) for _ in range(30))])
    idx = ml_detect_batch(np.array(ys), np.array(hs), cfg, rho=1.0)
    assert [ml_detect(y, h, cfg, rho=1.0).index for y, h in zip(ys, hs)] == list(idx)


def test_qr_invariants(rng):
    for n_r, n_wg in [(4, 2), (2, 2), (1, 2), (3, 1)]:
        h_eq = complex_normal(rng, (n_r, n_wg))
        y = complex_normal(rng, n_r)
        eq = qr_equivalent(h_eq, y)
        k = min(n_r, n_wg)
        np.testing.assert_allclose(eq.q.conj().T @ eq.q, np.eye(k), atol=1e-10)
        np.testing.assert_allclose(eq.q @ eq.r[:k], h_eq, atol=1e-10)
        assert np.allclose(np.tril(eq.r, -1), 0)
        d = np.diagonal(eq.r)
        assert np.all(d.real >= 0) and np.allclose(d.imag, 0)
        # isometry up to the constant out-of-span energy
        for s in constellation(4).points[rng.integers(0, 4, size=(5, n_wg))]:
            lhs = np.linalg.norm(eq.z - eq.r @ s) ** 2 + eq.offset
            assert lhs == pytest.approx(candidate_metrics(y, h_eq, s[None])[0], rel=1e-10, abs=1e-12)


def test_equivalent_channel_sums_active_columns(rng):
    cfg = SystemConfig(n_t=4, n_wg=2, n_a=2)
    h = complex_normal(rng, (2, 8))
    p = all_patterns(cfg)[7]
    heq = equivalent_channel(h, p, cfg.n_t)
    E = p.selection_matrix(cfg.n_t)
    np.testing.assert_allclose(heq, h @ E @ np.kron(np.eye(2), np.ones((2, 1))))


@given(st.sampled_from([2, 4, 16]), st.integers(1, 2), st.sampled_from([1, 2, 4]),
       st.sampled_from([0.0, 10.0, 20.0, 30.0]), st.integers(0, 2**31))
def test_bosd_equals_ml(order, n_wg, n_r, snr, seed):
    cfg = SystemConfig(n_t=4, n_wg=n_wg, n_a=1, n_r=n_r, mod_order=order)
    rng = np.random.default_rng(seed)
    h, _, y = draw(cfg, rng, snr)
    a, b = ml_detect(y, h, cfg, rho=1.0), bo_sd_detect(y, h, cfg, rho=1.0)
    assert a.index == b.index and a.metric == b.metric


def test_bosd_without_radius_sharing(rng):
    cfg = SystemConfig(n_t=4, n_wg=2, n_r=2, mod_order=16)
    for _ in range(50):
        h, _, y = draw(cfg, rng, 10.0)
        assert bo_sd_detect(y, h, cfg, rho=1.0, share_radius=False).index == ml_detect(y, h, cfg, rho=1.0).index


def test_bosd_noiseless_single_candidate(rng):
    cfg = SystemConfig(n_t=4, n_wg=2, n_r=4, mod_order=16)
    h, bits, _ = draw(cfg, rng, 0.0)
    y = h @ build_transmit(bits, cfg).x
    r = bo_sd_detect(y, h, cfg, rho=1.0)
    assert np.array_equal(r.bits, bits)
    assert r.metric == pytest.approx(0.0, abs=1e-20)
    # every pattern is seeded by its quantised relaxation; the true one needs no further leaves
    assert r.counters.metric_evals <= len(all_patterns(cfg)) + 1


def test_pruning_inequality_direct(rng):
    """Admitted points satisfy the layer test, rejected ones violate it."""
    cons = constellation(4)
    h_eq = complex_normal(rng, (3, 3))
    y = h_eq @ cons.points[[0, 3, 1]] + 0.3 * complex_normal(rng, 3)
    eq = qr_equivalent(h_eq, y)
    admitted = []
    search = _PatternSearch(eq, cons.points, cons.box, SearchCounters(), tol=0.0)
    radius2 = 2.0
    search.run(radius2, lambda labels: (admitted.append(labels.copy()), np.inf)[1])
    # top layer: check every point against residual + C1 <= d^2
    k = 2
    for label in range(4):
        res = abs(eq.z[k] - eq.r[k, k] * cons.points[label]) ** 2
        search.labels[:] = 0
        c1 = search.lower_bound_rest(k, label)
        ok = res + c1 <= radius2
        reached = any(a[k] == label for a in admitted)
        if not ok:
            assert not reached
    for a in admitted:
        assert np.linalg.norm(eq.z - eq.r @ cons.points[a]) ** 2 <= radius2 + 1e-12


def test_search_effort(rng):
    cfg = SystemConfig(n_t=4, n_wg=1, n_r=2, mod_order=64)
    h, _, y = draw(cfg, rng, 20.0)
    e_ml = search_effort(ml_detect(y, h, cfg, rho=1.0), cfg)
    assert e_ml.total_metric_evals == 4 * 64 and e_ml.metric_evals == 64
    r = bo_sd_detect(y, h, cfg, rho=1.0)
    e = search_effort(r, cfg)
    assert e.total_metric_evals < 4 * 64
    assert r.counters.qp_solves <= 4 * (cfg.n_wg + 1) + r.counters.nodes_visited * (cfg.n_wg - 1)


def test_counters_add():
    a = SearchCounters(1, 2, 3) + SearchCounters(4, 5, 6)
    assert (a.nodes_visited, a.qp_solves, a.metric_evals) == (5, 7, 9)
