import json

import pytest

from hnnest.config import RunConfig, load_config, load_preset, preset_names
from hnnest.errors import ConfigError

EXPECTED_PRESETS = {"fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8", "fig9",
                    "tableI-S1", "tableI-S2", "tableI-S3"}


def test_all_presets_ship():
    assert EXPECTED_PRESETS <= set(preset_names())


@pytest.mark.parametrize("name", sorted(EXPECTED_PRESETS))
def test_preset_round_trip(name):
    cfg = load_preset(name)
    again = RunConfig.from_dict(json.loads(cfg.to_json()))
    assert again.to_dict() == cfg.to_dict()


def test_preset_settings():
    fig4 = load_preset("fig4")
    assert fig4.h == 1e-5
    opts = fig4.estimators[0].options
    assert (opts["alpha"], opts["beta"], opts["eta"]) == (10.0, 250.0, 50.0)
    s3 = load_preset("tableI-S3")
    assert s3.scenario.id == "S3" and s3.h == 1e-4 and s3.horizon == 200.0
    assert s3.scenario.omega_range == [0.01, 1.0]
    s2 = load_preset("tableI-S2")
    assert s2.scenario.mu_range == [1.0, 5.0] and s2.scenario.sigma2_range == [1.0, 10.0]


def test_unknown_keys_rejected():
    base = load_preset("fig4").to_dict()
    with pytest.raises(ConfigError, match="unknown"):
        RunConfig.from_dict(dict(base, colour="red"))
    bad = json.loads(json.dumps(base))
    bad["estimators"][0]["options"]["gamma"] = 1.0
    with pytest.raises(ConfigError):
        RunConfig.from_dict(bad)


@pytest.mark.parametrize("patch", [
    {"h": -1.0},
    {"horizon": "long"},
    {"integrator": "leapfrog"},
    {"box": {"lower": [1, 1, 1, 1], "upper": [0, 0, 0, 0]}},
    {"theta0": [1.0, 2.0]},
    {"estimators": []},
    {"kind": "montecarlo"},
    {"emit_every": 0},
])
def test_invalid_values_rejected(patch):
    base = load_preset("fig4").to_dict()
    base.update(patch)
    with pytest.raises(ConfigError):
        RunConfig.from_dict(base)


def test_load_config_file_and_errors(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(load_preset("fig8").to_json())
    assert load_config(path).to_dict() == load_preset("fig8").to_dict()
    assert load_config("fig8").name == "fig8"
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    (tmp_path / "broken.json").write_text("{")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "broken.json")
