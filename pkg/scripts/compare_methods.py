"""UniARM vs reconstructed PBLoRA vs GenARM (one ARM per objective) at matched budget, k=2.

    python3 scripts/compare_methods.py --seed 0 --out runs/compare
"""

import argparse
import dataclasses
import json
from pathlib import Path

from uniarm import decoding as dec
from uniarm import model as M
from uniarm import pipeline as pl
from uniarm import training
from uniarm.config import default_config_dict, from_dict


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="runs/compare")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    cfg = from_dict(default_config_dict(2)).with_seed(args.seed)
    splits = pl.make_data(cfg)
    train, prompts = splits["train"], [r.prompt for r in splits["test"]]
    base, E = pl.base_and_embeddings(cfg)
    fronts = {}

    res = pl.train_run(cfg, train)
    fronts["uniarm"] = pl.sweep(cfg, base, dec.UniARMReward(res.arm, E), prompts)[0]

    pb = M.with_adapters(base, M.AdapterSpec(kind="pblora", r1=4, r2=4, k=2), seed=cfg.seed)
    training.train(pb, train, None, cfg.train, k=2)
    fronts["pblora"] = pl.sweep(cfg, base, dec.PBLoRAReward(pb), prompts)[0]

    # each GenARM member is a plain shared-branch adapter trained on one objective
    arms = []
    for i in range(2):
        e = tuple(1.0 if j == i else 0.0 for j in range(2))
        arm = M.with_adapters(base, M.AdapterSpec(kind="moslora", r1=4, r2=0), seed=cfg.seed + 100 * (i + 1))
        training.train(arm, train, E, dataclasses.replace(cfg.train, fixed_alpha=e, lam=0.0), k=2)
        arms.append(arm)
    fronts["genarm"] = pl.sweep(cfg, base, dec.GenARMReward(arms), prompts)[0]
    fronts["base"] = pl.sweep(cfg, base, None, prompts)[0]

    doc = pl.evaluate(fronts)
    (out / "metrics.json").write_text(json.dumps(doc, indent=1) + "\n")
    for r in doc["results"]:
        print(f"{r['method']:>8}: HV {r['hv']:.4f}  MIP {r['mip']:.4f}")


if __name__ == "__main__":
    main()
