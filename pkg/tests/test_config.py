import pytest

from mtsbench.config import (ExperimentConfig, config_from_json, env_overrides, load_config,
                             parse_config_text, render_config)
from mtsbench.errors import ConfigError

TEXT = """
# comment line
dataset_name = ETTh1
dataset_path = data/ETTh1.csv   # trailing comment
T_p = 336
T_f = 336
model = dlinear
ridge = 0.5
curriculum = yes
split_ratios = 0.6, 0.2, 0.2
metrics = mae,wape
"""


def test_parse_types():
    v = parse_config_text(TEXT)
    assert v["T_p"] == 336 and v["ridge"] == 0.5 and v["curriculum"] is True
    assert v["split_ratios"] == (0.6, 0.2, 0.2) and v["metrics"] == ("mae", "wape")
    assert v["dataset_path"] == "data/ETTh1.csv"


def test_unknown_key_and_bad_value():
    with pytest.raises(ConfigError):
        parse_config_text("colour = blue")
    with pytest.raises(ConfigError):
        parse_config_text("T_p = many")


def test_precedence(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text(TEXT)
    env = {"MTSBENCH_SEED": "3", "MTSBENCH_T_P": "96", "UNRELATED": "x"}
    c = load_config(p, overrides={"T_p": 192, "seed": None}, environ=env)
    assert c.T_p == 192 and c.seed == 3 and c.model == "dlinear"
    assert load_config(p, environ=env).T_p == 96
    assert load_config(p, environ={}).T_p == 336
    assert env_overrides(env) == {"seed": 3, "T_p": 96}


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.cfg")


@pytest.mark.parametrize("kw", [{"batch_size": 0}, {"patience": 0}, {"metrics": ("mae", "r2")},
                                {"T_f": 0}])
def test_validation(kw):
    with pytest.raises(ConfigError):
        ExperimentConfig(dataset_name="x", **kw)
    with pytest.raises(ConfigError):
        ExperimentConfig()


def test_defaults_and_resolution():
    c = ExperimentConfig(dataset_name="ETTh1")
    assert c.batch_size == 64 and c.patience == 10 and c.epochs == 100
    assert c.resolved_split == (0.6, 0.2, 0.2)
    assert ExperimentConfig(dataset_name="PEMS08").resolved_split == (0.7, 0.1, 0.2)


def test_json_and_text_roundtrip():
    c = load_config(overrides=parse_config_text(TEXT), environ={})
    assert config_from_json(c.to_json()) == c.replace(split_ratios=(0.6, 0.2, 0.2))
    again = ExperimentConfig(**parse_config_text(render_config(c)))
    assert again.to_json() == c.to_json()
