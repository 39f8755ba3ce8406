"""Train UniARM over several seeds and compare its front with untrained baselines.

    python3 scripts/run_alignment.py --k 2 --seeds 0 1 2 --out runs/alignment
"""

import argparse
import json
from pathlib import Path

from scipy.stats import spearmanr

from uniarm import decoding as dec
from uniarm import pipeline as pl
from uniarm.config import default_config_dict, from_dict, load_config
from uniarm.plotting import scatter_svg


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=None, help="experiment config (default: built-in desk config)")
    ap.add_argument("--k", type=int, default=2)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--out", default="runs/alignment")
    args = ap.parse_args()

    base_cfg = load_config(args.config) if args.config else from_dict(default_config_dict(args.k))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = []
    for seed in args.seeds:
        cfg = base_cfg.with_seed(seed)
        splits = pl.make_data(cfg)
        prompts = [r.prompt for r in splits["test"]]
        res = pl.train_run(cfg, splits["train"])
        fronts = {
            "uniarm": pl.sweep(cfg, res.base, dec.UniARMReward(res.arm, res.embeddings), prompts)[0],
            "fresh-init": pl.sweep(cfg, *pl.fresh_reward(cfg), prompts)[0],
            "base": pl.sweep(cfg, res.base, None, prompts)[0],
        }
        doc = pl.evaluate(fronts)
        rho = spearmanr([p.alpha[0] for p in fronts["uniarm"]], [p.q[0] for p in fronts["uniarm"]]).statistic
        doc["spearman_alpha1_q1"] = float(rho)
        (out / f"seed{seed}_metrics.json").write_text(json.dumps(doc, indent=1) + "\n")
        if cfg.k == 2:
            svg = scatter_svg(
                {m: [p.q for p in pts] for m, pts in fronts.items()},
                {m: [f"{p.alpha[0]:g}" for p in pts] for m, pts in fronts.items()},
                cfg.task.objectives[0].name, cfg.task.objectives[1].name, f"seed {seed}",
            )
            (out / f"seed{seed}_fronts.svg").write_text(svg)
        row = {"seed": seed, "spearman": rho, **{r["method"]: r["hv"] for r in doc["results"]}}
        summary.append(row)
        print(json.dumps(row))
    (out / "summary.json").write_text(json.dumps(summary, indent=1) + "\n")


if __name__ == "__main__":
    main()
