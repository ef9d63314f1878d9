"""Run configuration: one sectioned plain-text file (INI syntax) plus
command-line flag overrides; flags win over the file, the file wins over
defaults.  The DRIVESIM_OUT environment variable overrides the output
directory only (flags still win over it).

One master seed in [run] governs every random draw.
"""

import configparser
import os
from dataclasses import dataclass, field, fields, replace

from .learn import GailConfig, TrpoConfig
from .metrics import CampaignConfig
from .rules import ControllerNoise, IdmParams, MobilParams
from .simenv import SimConfig
from .synth import SynthConfig

OUTPUT_ENV_VAR = "DRIVESIM_OUT"


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class PathsConfig:
    dataset: str = "data/trajectories.csv"
    centerlines: str = "data/centerlines.csv"
    output_dir: str = "out"


@dataclass(frozen=True)
class FeaturesConfig:
    stats_file: str = "norm_stats.csv"  # written under the output directory


@dataclass(frozen=True)
class BaselinesConfig:
    mr_components: int = 4
    mr_max_features: int = 10
    em_iters: int = 100


@dataclass(frozen=True)
class BcConfig:
    epochs: int = 10
    step_size: float = 1e-3
    minibatch: int = 256
    heldout_fraction: float = 0.1


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    paths: PathsConfig = field(default_factory=PathsConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    idm: IdmParams = field(default_factory=IdmParams)
    mobil: MobilParams = field(default_factory=MobilParams)
    controller_noise: ControllerNoise = field(default_factory=ControllerNoise)
    features: FeaturesConfig = field(default_factory=FeaturesConfig)
    trpo: TrpoConfig = field(default_factory=TrpoConfig)
    gail: GailConfig = field(default_factory=GailConfig)
    bc: BcConfig = field(default_factory=BcConfig)
    baselines: BaselinesConfig = field(default_factory=BaselinesConfig)
    metrics: CampaignConfig = field(default_factory=CampaignConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)


_SECTIONS = {
    "paths": "paths",
    "sim": "sim",
    "idm": "idm",
    "mobil": "mobil",
    "controller_noise": "controller_noise",
    "features": "features",
    "trpo": "trpo",
    "gail": "gail",
    "bc": "bc",
    "baselines": "baselines",
    "metrics": "metrics",
    "synth": "synth",
}


def _coerce(raw, current):
    """Parse a string to the type of the default value it replaces."""
    if isinstance(current, bool):
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {raw!r}")
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    if isinstance(current, tuple):
        parts = [p for p in raw.replace(",", " ").split() if p]
        elem = current[0] if current else 0.0
        return tuple(int(p) if isinstance(elem, int) and not isinstance(elem, bool)
                     else float(p) for p in parts)
    return raw


def _apply(section_obj, key, raw):
    names = {f.name: f for f in fields(section_obj)}
    if key not in names:
        raise ConfigError(f"unknown key {key!r} in section "
                          f"[{type(section_obj).__name__}]")
    try:
        value = _coerce(raw, getattr(section_obj, key))
    except (ValueError, ConfigError) as e:
        raise ConfigError(f"bad value for {key}: {raw!r} ({e})") from None
    return replace(section_obj, **{key: value})


def load_config(path=None, overrides=None, env=None):
    """Build a RunConfig from defaults, an optional INI file, the output-dir
    environment variable, and 'section.key=value' override strings (in that
    precedence order, later wins)."""
    cfg = RunConfig()
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        parser = configparser.ConfigParser()
        try:
            parser.read(path)
        except configparser.Error as e:
            raise ConfigError(f"cannot parse {path}: {e}") from None
        for section in parser.sections():
            if section == "run":
                for key, raw in parser.items(section):
                    if key != "seed":
                        raise ConfigError(f"unknown key {key!r} in [run]")
                    cfg = replace(cfg, seed=int(raw))
                continue
            if section not in _SECTIONS:
                raise ConfigError(f"unknown section [{section}]")
            attr = _SECTIONS[section]
            obj = getattr(cfg, attr)
            for key, raw in parser.items(section):
                obj = _apply(obj, key, raw)
            cfg = replace(cfg, **{attr: obj})

    env = os.environ if env is None else env
    if env.get(OUTPUT_ENV_VAR):
        cfg = replace(cfg, paths=replace(cfg.paths,
                                         output_dir=env[OUTPUT_ENV_VAR]))

    for item in overrides or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value: {item!r}")
        dotted, raw = item.split("=", 1)
        section, key = dotted.split(".", 1)
        if section == "run" and key == "seed":
            cfg = replace(cfg, seed=int(raw))
            continue
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section {section!r} in override {item!r}")
        attr = _SECTIONS[section]
        cfg = replace(cfg, **{attr: _apply(getattr(cfg, attr), key, raw)})
    return cfg


def validate_paths(cfg, need_dataset=True, need_centerlines=True):
    """Check that the referenced input files exist."""
    if need_dataset and not os.path.exists(cfg.paths.dataset):
        raise ConfigError(f"dataset not found: {cfg.paths.dataset}")
    if need_centerlines and not os.path.exists(cfg.paths.centerlines):
        raise ConfigError(f"centerline file not found: {cfg.paths.centerlines}")
