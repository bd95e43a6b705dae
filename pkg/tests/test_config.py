"""
Tests for the config module.
Tests loading, validation and seed resolution of experiment configs.
"""

import json
from pathlib import Path

import pytest

from src.config import (
    DEFAULT_SEED,
    SEED_ENV_VAR,
    ExperimentConfig,
    describe_config,
    dump_config,
    load_config,
    resolve_seed,
)
from src.laws import Rademacher
from src.martingale_lab import ArchProcess
from src.utils import ConfigError

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture
def verify_record():
    """A valid martingale_verify record."""
    return {
        "kind": "martingale_verify",
        "experiment_id": "rad",
        "law": {"law": "rademacher"},
        "theorem": "hoeffding",
        "n_list": [30, 10],
        "grid": [0.1, 0.2],
        "replicates": 200,
    }


@pytest.fixture(autouse=True)
def no_seed_env(monkeypatch):
    """Keep the seed environment variable out of every test unless set explicitly."""
    monkeypatch.delenv(SEED_ENV_VAR, raising=False)


def test_from_dict(verify_record):
    """Test that a valid record builds a config with defaults filled in."""
    cfg = ExperimentConfig.from_dict(verify_record)
    assert cfg.horizons == [10, 30]
    assert cfg.prefix == "rad"
    assert cfg.sides == "upper"
    assert cfg.z_threshold == 3.0
    assert cfg.increment_source() == Rademacher()


def test_experiment_id_defaults_to_kind():
    """Test that a missing experiment_id falls back to the kind."""
    cfg = ExperimentConfig.from_dict({"kind": "bounds_eval", "theorem": "bernstein_tail",
                                      "grid": [1.0], "params": {"k": 1.0}})
    assert cfg.experiment_id == "bounds_eval"


@pytest.mark.parametrize("change,field", [
    ({"kind": "simulate"}, "kind"),
    ({"replicates": 50}, "replicates"),
    ({"grid": [0.2, 0.1]}, "grid"),
    ({"grid": [0.0, 0.1]}, "grid"),
    ({"theorem": "chernoff"}, "theorem"),
    ({"sides": "both"}, "sides"),
    ({"n_list": []}, "n_list"),
    ({"n_list": [True]}, "n_list"),
    ({"law": {"law": "gaussian", "sd": -1.0}}, "law"),
    ({"law": {"law": "cauchy"}}, "law"),
    ({"seed": -1}, "seed"),
    ({"z_threshold": 0}, "z_threshold"),
    ({"d": 0}, "d"),
])
def test_invalid_fields_are_named(verify_record, change, field):
    """Test that each invalid value raises ConfigError naming its field."""
    verify_record.update(change)
    with pytest.raises(ConfigError, match=field):
        ExperimentConfig.from_dict(verify_record)


def test_missing_and_unknown_fields(verify_record):
    """Test the structural checks of a record."""
    with pytest.raises(ConfigError, match="unknown config field"):
        ExperimentConfig.from_dict({**verify_record, "samples": 10})
    del verify_record["kind"]
    with pytest.raises(ConfigError, match="kind"):
        ExperimentConfig.from_dict(verify_record)
    with pytest.raises(ConfigError, match="JSON object"):
        ExperimentConfig.from_dict([1, 2])


def test_required_fields_per_kind():
    """Test that per-kind required fields are enforced."""
    with pytest.raises(ConfigError, match="beta"):
        ExperimentConfig.from_dict({"kind": "polymer_energy", "law": {"law": "gaussian"},
                                    "replicates": 200, "n_list": [10]})
    with pytest.raises(ConfigError, match="'n'"):
        ExperimentConfig.from_dict({"kind": "polymer_energy", "law": {"law": "gaussian"},
                                    "replicates": 200, "beta": 0.5})


def test_arch_law_only_for_martingales():
    """Test that the arch process is rejected as a polymer environment."""
    arch = {"law": "arch", "innovation": {"law": "rademacher"}}
    cfg = ExperimentConfig.from_dict({"kind": "martingale_verify", "law": arch, "theorem": "bernstein",
                                      "n": 10, "grid": [0.1], "replicates": 200})
    assert isinstance(cfg.increment_source(), ArchProcess)
    with pytest.raises(ConfigError, match="arch"):
        ExperimentConfig.from_dict({"kind": "polymer_energy", "law": arch, "beta": 0.5,
                                    "n": 10, "replicates": 200})


def test_polymer_config():
    """Test the polymer model built from a config."""
    cfg = ExperimentConfig.from_dict({"kind": "polymer_concentration", "law": {"law": "gaussian"},
                                      "beta": 0.5, "n": 12, "d": 2, "grid": [0.1], "replicates": 100})
    model = cfg.polymer_config(5)
    assert (model.d, model.n, model.beta) == (2, 12, 0.5)
    assert model.key.master_seed == 5
    assert cfg.polymer_config(5, 3).n == 3


def test_dump_config_round_trip(verify_record):
    """Test that a dumped config reloads to an equal config."""
    cfg = ExperimentConfig.from_dict(verify_record)
    assert ExperimentConfig.from_dict(json.loads(dump_config(cfg))) == cfg


def test_load_config(tmp_path, verify_record):
    """Test loading a config file from disk."""
    path = tmp_path / "rad.json"
    path.write_text(json.dumps(verify_record), encoding="utf-8")
    assert load_config(path).experiment_id == "rad"


def test_load_config_errors(tmp_path):
    """Test that unreadable or malformed files raise ConfigError."""
    with pytest.raises(ConfigError, match="Error loading config"):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text('{"kind": "bounds_eval",\n  "grid": [1.0,,]}', encoding="utf-8")
    with pytest.raises(ConfigError, match="line 2"):
        load_config(bad)


@pytest.mark.parametrize("path", sorted(CONFIG_DIR.glob("*.json")), ids=lambda p: p.stem)
def test_shipped_configs_are_valid(path):
    """Test that every config shipped with the project validates."""
    cfg = load_config(path)
    assert describe_config(cfg)["experiment_id"] == cfg.experiment_id


def test_resolve_seed_precedence(monkeypatch, verify_record):
    """Test env > flag > config > default."""
    cfg = ExperimentConfig.from_dict({**verify_record, "seed": 11})
    assert resolve_seed(None) == (DEFAULT_SEED, "default")
    assert resolve_seed(cfg) == (11, "config")
    assert resolve_seed(cfg, 12) == (12, "flag")
    monkeypatch.setenv(SEED_ENV_VAR, "13")
    assert resolve_seed(cfg, 12) == (13, "env")


def test_resolve_seed_rejects_bad_values(monkeypatch):
    """Test that out-of-range or non-integer seeds raise ConfigError."""
    with pytest.raises(ConfigError):
        resolve_seed(None, -5)
    monkeypatch.setenv(SEED_ENV_VAR, "abc")
    with pytest.raises(ConfigError):
        resolve_seed(None)
