"""Small experiment configs so CLI tests run in seconds."""

import json

from uniarm.config import default_config_dict


def small_config_dict(k=2, **train):
    d = default_config_dict(k)
    d["model"].update(vocab_size=32, d_model=16, n_layers=1, n_heads=2, max_seq_len=24)
    for i, o in enumerate(d["task"]["objectives"]):
        o["tokens"] = list(range(1 + 4 * i, 5 + 4 * i))
    d["task"].update(prompt_len=4, response_len=6, size=120)
    d["adapter"].update(r1=2, r2=2)
    d["train"].update(epochs=1, batch_size=8, **train)
    d["decode"]["max_new_tokens"] = 6
    d["sweep"]["max_prompts"] = 8
    return d


def write_config(path, d):
    path.write_text(json.dumps(d, indent=1))
    return str(path)
