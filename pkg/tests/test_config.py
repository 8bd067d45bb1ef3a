import warnings

import pytest

from uavmec.config import (ConfigError, db_to_lin, dbm_to_w, dump_config, lin_to_db, load_config,
                           make_config, w_to_dbm)


def test_profiles():
    desk, large = make_config("desk"), make_config("large")
    assert (desk.n_uavs, desk.n_devices, desk.episodes, desk.steps_per_episode) == (3, 10, 50, 300)
    assert (large.n_uavs, large.n_devices, large.episodes) == (6, 40, 100)
    with pytest.raises(ConfigError):
        make_config("laptop")


def test_unit_helpers():
    assert dbm_to_w(30.0) == pytest.approx(1.0)
    assert w_to_dbm(1e-3) == pytest.approx(0.0)
    assert db_to_lin(lin_to_db(123.0)) == pytest.approx(123.0)


@pytest.mark.parametrize("over", [
    {"n_uavs": 0},
    {"max_hops": 5},
    {"deadline_range": (20.0, 5.0)},
    {"learn": {"alpha_time": 0.7}},
    {"learn": {"features": "cnn"}},
    {"learn": {"gat_heads": 3}},
    {"fed": {"b_min": 10, "b_max": 4}},
    {"fed": {"drop_prob": 1.5}},
    {"fed": {"quantize": "yes"}},
    {"radio": 3},
    {"nonsense": 1},
])
def test_invalid_configs_raise(over):
    with pytest.raises(ConfigError):
        make_config("desk", over)


def test_coarse_step_warns_or_raises():
    with pytest.warns(UserWarning, match="acceleration bound"):
        make_config("desk", {"dt": 1.0})
    with pytest.raises(ConfigError):
        make_config("desk", {"dt": 1.0, "strict_dt": True})
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        make_config("desk", {"dt": 8.0, "episode_len": 320.0})


def test_hash_tracks_content():
    a, b = make_config("desk"), make_config("desk")
    assert a.config_hash() == b.config_hash()
    assert make_config("desk", {"seed": 1}).config_hash() != a.config_hash()


def test_dump_load_roundtrip(tmp_path):
    cfg = make_config("large", {"fed": {"drop_prob": 0.2}, "learn": {"gat_hidden": [16, 8]}})
    dump_config(cfg, tmp_path / "c.yaml")
    back = load_config(tmp_path / "c.yaml")
    assert back.to_dict() == cfg.to_dict()
    assert back.config_hash() == cfg.config_hash()


def test_load_precedence(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("profile: large\nepisodes: 9\n")
    cfg = load_config(p)
    assert cfg.n_uavs == 6 and cfg.episodes == 9
    assert load_config(p, overrides={"episodes": 2}).episodes == 2
    assert load_config(p, profile="desk").n_uavs == 3
    p.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config(p)
