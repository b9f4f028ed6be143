import pytest

from cgmevents import config
from cgmevents.config import ConfigError


def write(tmp_path, text):
    p = tmp_path / "c.yaml"
    p.write_text(text)
    return p


def test_defaults_load(tmp_path):
    cfg = config.load(write(tmp_path, ""))
    assert cfg["seed"] == 42 and cfg["impute"]["k"] == 20 and cfg["cluster"]["eps_m"] == 30.0
    assert cfg["predict"]["params"]["enet"] == {"alpha": 1.0, "lambda": 0.5}


def test_every_violation_reported(tmp_path):
    p = write(tmp_path, "seed: x\nbogus: 1\nimpute:\n  k: 0\ncluster:\n  eps_m: -1\n"
                        "predict:\n  models: [ols, svm]\n  params:\n    lasso: {gamma: 1}\n")
    with pytest.raises(ConfigError) as e:
        config.load(p)
    msgs = "\n".join(e.value.errors)
    for frag in ("seed", "bogus", "impute.k", "cluster.eps_m", "svm", "lasso.gamma"):
        assert frag in msgs
    assert len(e.value.errors) == 6


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError, match="does not exist"):
        config.load(tmp_path / "none.yaml")
    with pytest.raises(ConfigError, match="YAML"):
        config.load(write(tmp_path, "a: [1,\n"))
    with pytest.raises(ConfigError, match="mapping"):
        config.load(write(tmp_path, "- 1\n- 2\n"))


def test_referenced_files_must_exist(tmp_path):
    p = write(tmp_path, "inputs:\n  activities: a.csv\n  locations: l.csv\n  glucose: g.csv\n")
    with pytest.raises(ConfigError) as e:
        config.load(p)
    assert len(e.value.errors) == 4  # three missing files plus the absent purchases key


def test_partial_overrides_merge(tmp_path):
    cfg = config.load(write(tmp_path, "synth:\n  days: 3\n  missingness: {glucose: 0.3}\n"
                                      "predict:\n  params:\n    ridge: {lambda: 2.0}\n"))
    assert cfg["synth"]["missingness"]["glucose"] == 0.3
    assert cfg["synth"]["missingness"]["activity"] == 0.3
    assert cfg["predict"]["params"]["ridge"]["lambda"] == 2.0
    assert cfg["predict"]["params"]["lasso"]["lambda"] == 1.0
    assert config.synth_config(cfg).days == 3


def test_digest_tracks_content_not_location(tmp_path):
    a = config.load(write(tmp_path, "seed: 1\n"), {"out": "x"})
    b = config.load(write(tmp_path, "seed: 1\n"), {"out": "y"})
    c = config.load(write(tmp_path, "seed: 2\n"))
    assert config.digest(a) == config.digest(b) != config.digest(c)


def test_seed_override(tmp_path):
    assert config.load(write(tmp_path, "seed: 1\n"), {"seed": 9})["seed"] == 9
