import json
import math

import numpy as np
import pytest

from paim.config import (ConfigError, SystemConfig, build_geometry, config_from_dict, config_to_dict,
                         dbm_to_mw, load_config, waveguide_y)


def test_defaults_and_derived():
    cfg = SystemConfig()
    assert cfg.n_cols == 4
    assert cfg.im_bits == 2 and cfg.apm_bits == 2
    assert cfg.rho == pytest.approx(100.0)
    assert dbm_to_mw(-90) == pytest.approx(1e-9)


def test_rho_halves_when_n_a_doubles():
    cfg = SystemConfig(n_t=8, n_a=2)
    assert cfg.with_(n_a=4).rho == pytest.approx(cfg.rho / 2)


@pytest.mark.parametrize("bad", [dict(n_a=5), dict(mod_order=6), dict(mod_order=1), dict(eta_eff=0.9),
                                 dict(delta_sf=1.5), dict(n_t=0), dict(f_c_hz=-1.0),
                                 dict(rx_position_m=(1.0, 2.0))])
def test_invalid_configs_rejected(bad):
    with pytest.raises(ConfigError):
        SystemConfig(**bad)


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="bogus"):
        config_from_dict({"n_t": 4, "bogus": 1})


def test_json_and_yaml_round_trip(tmp_path):
    cfg = SystemConfig(n_t=8, n_r=1, mod_order=2, rx_position_m=(300.0, 40.0, 1.5))
    p = tmp_path / "c.json"
    p.write_text(json.dumps(config_to_dict(cfg)))
    assert load_config(p) == cfg
    y = tmp_path / "c.yaml"
    y.write_text("n_t: 8\nn_r: 1\nmod_order: 2\nrx_position_m: [300.0, 40.0, 1.5]\n")
    assert load_config(y) == cfg


def test_non_mapping_file_rejected(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_config(p)


def test_geometry_layout():
    cfg = SystemConfig(n_t=4, n_wg=2, n_r=2)
    g = build_geometry(cfg)
    lam = 299_792_458.0 / 3e9
    assert g.lambda_m == pytest.approx(lam)
    assert g.lambda_g_m == pytest.approx(lam / 1.4)
    np.testing.assert_allclose(waveguide_y(2, 500.0), [125.0, 375.0])
    np.testing.assert_allclose(g.feed_points[:, 0], 0.0)
    np.testing.assert_allclose(g.feed_points[:, 2], 12.5)
    xs = g.candidate_pa_positions[0, :, 0]
    np.testing.assert_allclose(np.diff(xs), lam / 2)
    assert xs.mean() == pytest.approx(400.0)
    np.testing.assert_allclose(np.diff(g.rx_elements[:, 0]), lam / 2)
    assert g.link_distances().shape == (2, 8)
    # the nearest candidate sits right above the receiver's x coordinate
    assert g.feed_distances()[0, 0] == pytest.approx(math.hypot(xs[0], 0.0))


def test_cluster_outside_span_rejected():
    with pytest.raises(ConfigError):
        build_geometry(SystemConfig(rx_position_m=(0.0, 10.0, 1.5)))


def test_waveguide_override_shape_checked():
    with pytest.raises(ConfigError):
        build_geometry(SystemConfig(n_wg=2), waveguide_y_m=[10.0])
