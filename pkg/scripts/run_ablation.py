"""Ablate the global loss weight and the shared branch at matched seeds and budget.

Variants: r1=4,r2=4 with lam 0.5 and 0.0, and modulation only (r1=0, r2=8, lam 0).
HV of every front uses one reference point shared across the whole comparison.

    python3 scripts/run_ablation.py --seeds 0 1 2 --out runs/ablation
"""

import argparse
import json
from pathlib import Path

import numpy as np

from uniarm import decoding as dec
from uniarm import metrics as mt
from uniarm import pipeline as pl
from uniarm.config import default_config_dict, from_dict

VARIANTS = {
    "lam0.5": dict(r1=4, r2=4, lam=0.5),
    "lam0.0": dict(r1=4, r2=4, lam=0.0),
    "mod-only": dict(r1=0, r2=8, lam=0.0),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--out", default="runs/ablation")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    fronts = {}
    for name, v in VARIANTS.items():
        for seed in args.seeds:
            d = default_config_dict(2)
            d["adapter"].update(r1=v["r1"], r2=v["r2"])
            d["train"]["lam"] = v["lam"]
            cfg = from_dict(d).with_seed(seed)
            splits = pl.make_data(cfg)
            res = pl.train_run(cfg, splits["train"])
            pts, _ = pl.sweep(cfg, res.base, dec.UniARMReward(res.arm, res.embeddings), [r.prompt for r in splits["test"]])
            fronts[(name, seed)] = pts
            pl.write_points(out / f"{name}_seed{seed}.json", name, pts)
            print(f"{name} seed {seed} done")

    ref = mt.shared_reference([[p.q for p in pts] for pts in fronts.values()])
    hv = {f"{n}/seed{s}": mt.hypervolume([p.q for p in pts], ref) for (n, s), pts in fronts.items()}
    med = {n: float(np.median([hv[f"{n}/seed{s}"] for s in args.seeds])) for n in VARIANTS}
    doc = {"ref": list(ref), "hv": hv, "median_hv": med}
    (out / "ablation_metrics.json").write_text(json.dumps(doc, indent=1) + "\n")
    print(json.dumps(med, indent=1))


if __name__ == "__main__":
    main()
