import json

import pytest

from helpers import small_config_dict
from uniarm.config import ConfigError, default_config_dict, from_dict, load_config


def test_defaults_load():
    for k in (2, 3):
        cfg = from_dict(default_config_dict(k))
        assert cfg.k == k
        assert cfg.train.lam == (0.5 if k == 2 else 0.2)
        assert cfg.decode.beta == (1.0 if k == 2 else 0.1)


def test_shipped_configs_load():
    for name, k in [("desk_k2.json", 2), ("desk_k3.json", 3)]:
        assert load_config(f"configs/{name}").k == k


def test_unknown_field_rejected():
    d = default_config_dict(2)
    d["train"]["momentum"] = 0.9
    with pytest.raises(ConfigError, match="train.momentum"):
        from_dict(d)


def test_wrong_type_names_field():
    d = default_config_dict(2)
    d["model"]["d_model"] = "big"
    with pytest.raises(ConfigError, match="model.d_model"):
        from_dict(d)


def test_overlap_names_field():
    d = default_config_dict(2)
    d["task"]["objectives"][1]["tokens"][0] = d["task"]["objectives"][0]["tokens"][0]
    with pytest.raises(ConfigError, match=r"task\.objectives\[1\]\.tokens"):
        from_dict(d)


def test_length_inconsistency_rejected():
    d = small_config_dict()
    d["task"]["response_len"] = 30
    with pytest.raises(ConfigError, match="max_seq_len"):
        from_dict(d)


def test_with_seed_propagates():
    cfg = from_dict(default_config_dict(2)).with_seed(9)
    assert cfg.seed == cfg.train.seed == cfg.decode.seed == 9


def test_invalid_json(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(p)


def test_to_dict_round_trip():
    cfg = from_dict(default_config_dict(3))
    assert from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
