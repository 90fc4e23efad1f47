import pytest

from volterra_id.config import (
    DESK_DEFAULTS,
    PAPER_SCALE,
    ConfigError,
    apply_override,
    estimator_config,
    load_config,
    merge,
    nested,
    resolve,
    system_from_config,
)


def test_merge_is_recursive_and_pure():
    base = {"a": {"b": 1, "c": 2}, "d": 3}
    out = merge(base, {"a": {"b": 5}})
    assert out == {"a": {"b": 5, "c": 2}, "d": 3}
    assert base["a"]["b"] == 1


def test_nested_and_override():
    assert nested("x.y.z", 1) == {"x": {"y": {"z": 1}}}
    cfg = apply_override({}, "data.snr_db=inf")
    assert cfg == {"data": {"snr_db": "inf"}}
    assert apply_override({}, "memory=[3, 4]") == {"memory": [3, 4]}
    with pytest.raises(ConfigError):
        apply_override({}, "novalue")


def test_resolve_layers_and_unknown_keys():
    cfg = resolve(PAPER_SCALE, {"data": {"n": 50}})
    assert cfg["data"]["n"] == 50
    assert cfg["memory"] == 70
    assert cfg["data"]["seed"] == DESK_DEFAULTS["data"]["seed"]
    with pytest.raises(ConfigError, match="data.nn"):
        resolve({"data": {"nn": 1}})
    # free-form tables accept any keys
    resolve({"poles": {"grid_points": 101}, "tuning": {"pinned": {"beta[1]": 1.0}}})


def test_load_config_reports_line(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("data:\n  n: 5\n  seed: [1,\n")
    with pytest.raises(ConfigError, match=r"c.yaml:\d+"):
        load_config(p)
    p.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError, match="mapping"):
        load_config(p)
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.yaml")


def test_system_from_config():
    assert system_from_config({"system": {"preset": "Sys2b"}}).name == "Sys2b"
    sys_ = system_from_config({"system": {"den": [1, -0.5], "gains": [1, 2, 3]}})
    assert sys_.max_order == 3
    with pytest.raises(ConfigError, match="gains"):
        system_from_config({"system": {"den": [1, -0.5]}})
    with pytest.raises(ConfigError):
        system_from_config({"system": {"preset": "Sys9"}})
    with pytest.raises(ConfigError):
        system_from_config({"system": {"den": [1, -1.5], "gains": [1]}})


def test_estimator_config_defaults_and_errors():
    ec = estimator_config(resolve(), 2)
    assert ec.method == "LBF" and ec.memory == (30, 30) and ec.basis_size == (10, 10)
    ec = estimator_config(resolve({"memory": [20, 10], "tuning": {"starts": 3}}), 2, "ReLBF", seed=9)
    assert ec.memory == (20, 10) and ec.tuning.starts == 3 and ec.seed == 9
    ec = estimator_config(resolve({"poles": {"initial": {"1": [0.5], "2": [0.4]}}}), 2)
    assert ec.poles.initial == {1: (0.5,), 2: (0.4,)}
    with pytest.raises(ConfigError, match="2 entries"):
        estimator_config(resolve({"memory": [1, 2, 3]}), 2)
    with pytest.raises(ConfigError, match="unknown method"):
        estimator_config(resolve(), 2, "XBF")
    with pytest.raises(ConfigError, match="tuning"):
        estimator_config(resolve({"tuning": {"speed": 1}}), 2)
    with pytest.raises(ConfigError):
        estimator_config(resolve({"poles": {"max_iter": 0}}), 2)
