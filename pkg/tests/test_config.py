import pytest

from drivesim.config import (OUTPUT_ENV_VAR, ConfigError, RunConfig,
                             load_config, validate_paths)


def test_defaults():
    cfg = load_config()
    assert cfg == RunConfig()
    assert cfg.sim.horizon == 100
    assert cfg.seed == 0


def test_file_overrides_defaults(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text("[run]\nseed = 7\n\n[sim]\nhorizon = 50\n"
                 "[trpo]\nkl_step = 0.02\n")
    cfg = load_config(str(p))
    assert cfg.seed == 7
    assert cfg.sim.horizon == 50
    assert cfg.trpo.kl_step == 0.02


def test_flag_overrides_beat_file(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text("[sim]\nhorizon = 50\n")
    cfg = load_config(str(p), overrides=["sim.horizon=25", "run.seed=9"])
    assert cfg.sim.horizon == 25
    assert cfg.seed == 9


def test_env_sets_output_dir_but_flags_win():
    cfg = load_config(env={OUTPUT_ENV_VAR: "/tmp/envout"})
    assert cfg.paths.output_dir == "/tmp/envout"
    cfg = load_config(env={OUTPUT_ENV_VAR: "/tmp/envout"},
                      overrides=["paths.output_dir=/tmp/flagout"])
    assert cfg.paths.output_dir == "/tmp/flagout"


def test_tuple_coercion():
    cfg = load_config(overrides=["sim.accel_bounds=-4,4"])
    assert cfg.sim.accel_bounds == (-4.0, 4.0)


def test_unknown_section_and_key_rejected(tmp_path):
    with pytest.raises(ConfigError):
        load_config(overrides=["nosuch.key=1"])
    with pytest.raises(ConfigError):
        load_config(overrides=["sim.nosuch=1"])
    p = tmp_path / "bad.ini"
    p.write_text("[nosuch]\nkey = 1\n")
    with pytest.raises(ConfigError):
        load_config(str(p))


def test_bad_value_rejected():
    with pytest.raises(ConfigError):
        load_config(overrides=["sim.horizon=abc"])


def test_missing_config_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/run.ini")


def test_validate_paths(tmp_path):
    data = tmp_path / "d.csv"
    data.write_text("x\n")
    cfg = load_config(overrides=[f"paths.dataset={data}",
                                 "paths.centerlines=/nonexistent.csv"])
    with pytest.raises(ConfigError):
        validate_paths(cfg)
    validate_paths(cfg, need_centerlines=False)
