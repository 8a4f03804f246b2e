import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from paim.analysis import union_bound
from paim.channel import complex_normal
from paim.config import SystemConfig
from paim.modem import SignalSet
from paim.precoder import (PrecoderError, euclidean_gradient, objective_f, optimize_precoder, pair_blocks,
                           read_precoder_csv, retract, riemannian_gradient, write_precoder_csv)

CFG = SystemConfig(n_t=4, n_wg=2, n_a=1, n_r=2, mod_order=2)


def fixture(seed, cfg=CFG):
    r = np.random.default_rng(seed)
    h = complex_normal(r, (cfg.n_r, cfg.n_cols))
    w = complex_normal(r, cfg.n_wg)
    return h, np.sqrt(cfg.n_wg) * w / np.linalg.norm(w), pair_blocks(h, cfg)


def fd_gradient(f, w, eps=1e-6):
    g = np.zeros(len(w), complex)
    for k in range(len(w)):
        e = np.zeros(len(w), complex)
        e[k] = eps
        g[k] = (f(w + e) - f(w - e)) / (4 * eps) + 1j * (f(w + 1j * e) - f(w - 1j * e)) / (4 * eps)
    return g


def test_zero_weights_objective():
    h, _, b = fixture(0)
    assert objective_f(np.zeros(2), b, 1.0, 1.0) == pytest.approx(b.weights.sum() / 3)
    ss = SignalSet(CFG)
    assert b.weights.sum() == pytest.approx(ss.hamming().sum() / (ss.eta * len(ss)))


def test_uniform_weights_match_conditional_bound():
    h, _, b = fixture(1)
    ub = union_bound(CFG, None, SignalSet(CFG), 5.0, 1.0, "conditional_closed_form", h=h)
    assert objective_f(np.ones(2), b, 5.0, 1.0) == pytest.approx(ub.value, rel=1e-12)


def test_objective_decreases_with_rho():
    _, w, b = fixture(2)
    vals = [objective_f(w, b, r, 1.0) for r in (0.1, 1.0, 10.0)]
    assert vals[0] > vals[1] > vals[2]


def test_reformulation_identity():
    h, w, b = fixture(3)
    ss = SignalSet(CFG)
    W = np.kron(np.diag(w), np.eye(CFG.n_t))
    i, j = np.triu_indices(len(ss), 1)
    d = ss.x[i] - ss.x[j]
    lhs = np.sum(np.abs(d @ (h @ W).T) ** 2, axis=1)
    rhs = np.sum(np.abs(b.hd_products @ w) ** 2, axis=1)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12)


@given(st.integers(0, 2**31), st.sampled_from([0.5, 5.0, 50.0]))
def test_gradient_matches_finite_differences(seed, rho):
    _, w, b = fixture(seed)
    g = euclidean_gradient(w, b, rho, 1.0)
    fd = fd_gradient(lambda v: objective_f(v, b, rho, 1.0), w)
    assert np.linalg.norm(g - fd) <= 1e-5 * max(np.linalg.norm(g), 1e-12)


def test_gradient_zero_for_zero_channel():
    b = pair_blocks(np.zeros((2, 8)), CFG)
    assert np.all(euclidean_gradient(np.ones(2), b, 1.0, 1.0) == 0)


def test_descent_direction():
    _, w, b = fixture(5)
    g = riemannian_gradient(w, euclidean_gradient(w, b, 5.0, 1.0))
    assert objective_f(retract(w, -1e-4 * g), b, 5.0, 1.0) < objective_f(w, b, 5.0, 1.0)


@given(st.integers(0, 2**31))
def test_projection_properties(seed):
    r = np.random.default_rng(seed)
    w = complex_normal(r, 3)
    w *= np.sqrt(3) / np.linalg.norm(w)
    v = complex_normal(r, 3)
    p = riemannian_gradient(w, v)
    assert abs(np.vdot(p, w).real) < 1e-10
    np.testing.assert_allclose(riemannian_gradient(w, p), p, atol=1e-12)
    np.testing.assert_allclose(riemannian_gradient(w, 2.5 * w), 0, atol=1e-12)


def test_retraction():
    w = np.array([1.0, 1j])
    np.testing.assert_allclose(retract(w, np.zeros(2)), w)
    t = np.array([1j, 1.0]) * 0.3
    t = riemannian_gradient(w, t)
    assert np.linalg.norm(retract(w, 5 * t)) ** 2 == pytest.approx(2.0, abs=1e-10)
    errs = [np.linalg.norm(retract(w, e * t) - (w + e * t)) for e in (1e-2, 1e-3, 1e-4)]
    assert errs[1] / errs[0] < 0.02 and errs[2] / errs[1] < 0.02
    with pytest.raises(PrecoderError):
        retract(w, -w)


def test_single_waveguide_is_invariant():
    cfg = SystemConfig(n_t=4, n_wg=1, n_r=2, mod_order=2)
    h = complex_normal(np.random.default_rng(0), (2, 4))
    pv = optimize_precoder(h, cfg, rho=3.0, n0=1.0)
    np.testing.assert_allclose(pv.w, [1.0], atol=1e-10)
    assert pv.iterations == 0


@pytest.mark.parametrize("seed", range(5))
def test_optimizer_monotone_and_feasible(seed):
    h, _, _ = fixture(seed)
    pv = optimize_precoder(h, CFG, rho=4.0, n0=1.0)
    hist = np.array(pv.history)
    assert np.all(np.diff(hist) <= 0)
    assert pv.objective <= hist[0]
    assert np.linalg.norm(pv.w) ** 2 == pytest.approx(2.0, abs=1e-10)
    assert np.linalg.norm(pv.matrix(4), "fro") ** 2 == pytest.approx(8.0, abs=1e-9)
    assert not pv.stalled


def test_precoder_csv_round_trip(tmp_path):
    w = np.array([1.2 - 0.1j, 0.3 + 0.7j])
    p = tmp_path / "w.csv"
    write_precoder_csv(p, w)
    assert p.read_text().splitlines()[0] == "waveguide,re,im"
    assert np.array_equal(read_precoder_csv(p), w)
