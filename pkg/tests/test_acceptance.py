"""Acceptance criteria, each reported as one PASS / FAIL line.

Run alone with ``pytest tests/test_acceptance.py -s`` to see the lines as
they happen; they are also repeated in the terminal summary.
"""

import json
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest
import torch
from scipy.stats import spearmanr

import conftest
from test_adapter import _fd_check, dense_moslora, random_moslora
from uniarm import adapter as ad
from uniarm import cli
from uniarm import decoding as dec
from uniarm import datasynth as ds
from uniarm import metrics as mt
from uniarm import model as M
from uniarm import pipeline as pl
from uniarm import preference as pref
from uniarm import training as T
from uniarm.config import default_config_dict, from_dict

SEEDS = (0, 1, 2)
REPORT_DIR = Path(os.environ.get("UNIARM_REPORT_DIR", Path(__file__).resolve().parents[1] / "reports"))


def report(num, ok, detail, soft=False):
    tag = "PASS" if ok else ("SOFT-FAIL" if soft else "FAIL")
    line = f"[criterion {num:>2}] {tag}: {detail}"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0


def test_criterion_01_merge_identity():
    rng = np.random.default_rng(0)
    worst = 0.0
    with Timer() as t:
        for i in range(100):
            m, n = int(rng.integers(4, 65)), int(rng.integers(4, 65))
            r1, r2 = int(rng.integers(0, 5)), int(rng.integers(1, 5))
            w, W, b = random_moslora(m, n, r1, r2, seed=i)
            # scale so gamma stays O(1) and the comparison is at realistic magnitudes
            w = ad.MoSLoRAWeights(**{k: v / math.sqrt(max(v.shape)) for k, v in ad.tensors(w).items()})
            g = torch.Generator().manual_seed(10_000 + i)
            o = torch.randn(n, generator=g, dtype=torch.float64)
            H = torch.randn(100, n, generator=g, dtype=torch.float64)
            diff = (ad.merge(w, W, b, o).apply(H) - ad.moslora_forward(w, W, b, H, o)).abs().max().item()
            worst = max(worst, diff)
    ok = worst <= 1e-9 and t.elapsed < 10
    report(1, ok, f"max |merged - unmerged| = {worst:.2e} (tol 1e-9) in {t.elapsed:.2f}s (< 10s)")
    assert ok


def test_criterion_02_identity_at_init():
    cfg = from_dict(default_config_dict(2))
    with Timer() as t:
        test = pl.make_data(cfg)["test"][:50]
        prompts = [r.prompt for r in test]
        base, reward = pl.fresh_reward(cfg)
        dc = dec.DecodeConfig(beta=cfg.decode.beta, max_new_tokens=cfg.decode.max_new_tokens, mode="greedy")
        got = dec.generate_batch(base, reward, prompts, (0.3, 0.7), dc)
        want = dec.generate_batch(base, None, prompts, (0.3, 0.7), dc)
    same = sum(a == b for a, b in zip(got, want))
    ok = same == 50 and t.elapsed < 30
    report(2, ok, f"{same}/50 prompts token-identical to base greedy decoding in {t.elapsed:.2f}s (< 30s)")
    assert ok


def test_criterion_03_gradient_check():
    task = ds.SynthTaskConfig.contiguous(k=2, class_size=3, vocab_size=16, prompt_len=3, response_len=4, size=32, seed=0)
    recs = ds.generate_dataset(task)
    mc = M.ModelConfig(vocab_size=16, d_model=8, n_layers=1, n_heads=2, max_seq_len=16)
    base = M.build_base(mc, seed=0)
    E = pref.stack([pref.embed_objective(d, base) for d in ("useful", "careful")])
    arm = conftest.randomize_adapters(M.with_adapters(base, M.AdapterSpec(r1=2, r2=2), seed=0), seed=1, scale=0.2)
    params = {
        f"{n}.{pn}": p for n, layer in arm.adapter_layers().items() for pn, p in layer.named_parameters() if not pn.startswith("base.")
    }
    with Timer() as t:
        errs = _fd_check(lambda: T.combined_loss([recs[:4], recs[4:8]], recs[8:14], (0.4, 0.6), arm, E, 1.0, 0.5)[2], params)
    worst = max(errs, key=errs.get)
    ok = errs[worst] < 1e-3 and t.elapsed < 60
    report(3, ok, f"{len(errs)} adapter tensors, worst relative error {errs[worst]:.2e} ({worst}) in {t.elapsed:.2f}s (< 60s)")
    assert ok


def test_criterion_04_parameter_counts():
    rng = np.random.default_rng(4)
    with Timer() as t:
        cases = []
        while len(cases) < 20:
            m, n = int(rng.integers(1, 200)), int(rng.integers(1, 200))
            r1, r2, k = int(rng.integers(0, 9)), int(rng.integers(0, 9)), int(rng.integers(1, 5))
            r1, r2 = min(r1, m, n), min(r2, m, n)
            if r1 + r2:
                cases.append((m, n, r1, r2, k))
        bad = []
        for m, n, r1, r2, k in cases:
            cfg = ad.AdapterConfig(m, n, r1, r2)
            mos = (m + n) * (r1 + r2) + r1 * r1 + 2 * r2 * r2
            pb = (m + n) * (r1 + r2) + r1 * r1 + k * r2 * r2
            if ad.count_entries(ad.init(cfg, "moslora")) != mos or ad.param_count(cfg, "moslora") != mos:
                bad.append(("moslora", m, n, r1, r2))
            if ad.count_entries(ad.init(cfg, "pblora", k=k)) != pb or ad.param_count(cfg, "pblora", k) != pb:
                bad.append(("pblora", m, n, r1, r2, k))
        big = ad.AdapterConfig(4096, 4096, 4, 4)
        equal = ad.param_count(big, "moslora") == ad.param_count(big, "pblora", 2) == 65_584
    ok = not bad and equal and t.elapsed < 1
    report(4, ok, f"20 random tuples, {len(bad)} mismatches; MoSLoRA(4,4) = PBLoRA(k=2) = 65584: {equal}; {t.elapsed:.3f}s (< 1s)")
    assert ok


def test_criterion_05_hypervolume():
    with Timer() as t:
        hand = mt.hypervolume([(2.0, 1.0), (1.0, 2.0)], (0.0, 0.0))
        rng = np.random.default_rng(5)
        rels = []
        for i in range(20):
            k = 2 if i < 5 else 3
            P = rng.uniform(0, 1, size=(int(rng.integers(5, 21)), k))
            ref = P.min(axis=0) - 1.0
            exact = mt.hypervolume(P, ref)
            rels.append(abs(mt.hypervolume_mc(P, ref, samples=1_000_000, seed=i) - exact) / exact)
    ok = hand == 3.0 and max(rels) < 0.01 and t.elapsed < 60
    report(5, ok, f"HV{{(2,1),(1,2)}} = {hand}; 20 fronts max MC relative gap {max(rels):.2e} (< 1e-2) in {t.elapsed:.2f}s (< 60s)")
    assert ok


def test_criterion_06_loss_sanity():
    with Timer() as t:
        rng = np.random.default_rng(6)
        vals = rng.normal(scale=100, size=200)
        betas = [1e-3, 0.01, 0.1, 1.0, 10.0]
        log2_err = max(abs(T.pairwise_loss(a, a, z, b) - math.log(2)) for a in vals for z in (0, 1) for b in betas)
        asym = sum(
            T.pairwise_loss(a, c, 0, b) != T.pairwise_loss(c, a, 1, b) for a, c in zip(vals[:100], vals[100:]) for b in betas
        )
    ok = log2_err <= 1e-12 and asym == 0 and t.elapsed < 1
    report(6, ok, f"max |loss(a,a) - log 2| = {log2_err:.1e}; {asym} symmetry violations; {t.elapsed:.3f}s (< 1s)")
    assert ok


# shared trained runs for criteria 7 and 8 (criterion 7 uses the default config)
_RUNS: dict = {}


def _cfg(seed, r1=4, r2=4, lam=0.5):
    d = default_config_dict(2)
    d["adapter"].update(r1=r1, r2=r2)
    d["train"]["lam"] = lam
    return from_dict(d).with_seed(seed)


def _run(seed, r1=4, r2=4, lam=0.5):
    key = (seed, r1, r2, lam)
    if key not in _RUNS:
        cfg = _cfg(seed, r1, r2, lam)
        t0 = time.perf_counter()
        splits = pl.make_data(cfg)
        res = pl.train_run(cfg, splits["train"])
        prompts = [r.prompt for r in splits["test"]]
        pts, _ = pl.sweep(cfg, res.base, dec.UniARMReward(res.arm, res.embeddings), prompts)
        _RUNS[key] = {"cfg": cfg, "splits": splits, "points": pts, "seconds": time.perf_counter() - t0, "base": res.base}
    return _RUNS[key]


def test_criterion_07_alignment_trend():
    lines, ok_all = [], True
    for seed in SEEDS:
        run = _run(seed)
        cfg, prompts = run["cfg"], [r.prompt for r in run["splits"]["test"]]
        t0 = time.perf_counter()
        base_pts, _ = pl.sweep(cfg, run["base"], None, prompts)
        fb, fr = pl.fresh_reward(cfg)
        fresh_pts, _ = pl.sweep(cfg, fb, fr, prompts)
        secs = run["seconds"] + time.perf_counter() - t0
        trained = run["points"]
        rho = spearmanr([p.alpha[0] for p in trained], [p.q[0] for p in trained]).statistic
        sets = [[p.q for p in s] for s in (trained, fresh_pts, base_pts)]
        ref = mt.shared_reference(sets)
        hv_t, hv_f, hv_b = (mt.hypervolume(s, ref) for s in sets)
        ok = rho >= 0.8 and hv_t > hv_f and hv_t > hv_b and secs < 15 * 60
        ok_all &= ok
        lines.append(f"seed {seed}: rho={rho:.3f} HV trained={hv_t:.4f} fresh-init={hv_f:.4f} base-only={hv_b:.4f} ({secs:.0f}s)")
    report(7, ok_all, "; ".join(lines))
    assert ok_all


def test_criterion_08_ablation_trend():
    variants = {"lam0.5": dict(r1=4, r2=4, lam=0.5), "lam0.0": dict(r1=4, r2=4, lam=0.0), "mod-only": dict(r1=0, r2=8, lam=0.0)}
    fronts = {name: {s: _run(s, **kw)["points"] for s in SEEDS} for name, kw in variants.items()}
    t0 = time.perf_counter()
    # one shared reference over every front in the comparison
    ref = mt.shared_reference([[p.q for p in pts] for per in fronts.values() for pts in per.values()])
    hv = {name: {s: mt.hypervolume([p.q for p in pts], ref) for s, pts in per.items()} for name, per in fronts.items()}
    med = {name: float(np.median(list(v.values()))) for name, v in hv.items()}
    first, second = med["lam0.5"] >= med["lam0.0"], med["lam0.0"] >= med["mod-only"]
    ok = first and second

    REPORT_DIR.mkdir(parents=True, exist_ok=True)
    doc = {
        "ref": list(ref),
        "median_hv": med,
        "hv": {n: {str(s): v for s, v in per.items()} for n, per in hv.items()},
        "inequalities": {"lam0.5 >= lam0.0": first, "lam0.0 >= mod-only": second},
        "fronts": {n: {str(s): [p.to_dict() for p in pts] for s, pts in per.items()} for n, per in fronts.items()},
    }
    (REPORT_DIR / "ablation.json").write_text(json.dumps(doc, indent=1) + "\n")
    md = ["# Ablation run report", "", f"Shared reference point: {tuple(round(x, 4) for x in ref)}", ""]
    md += ["| variant | " + " | ".join(f"seed {s}" for s in SEEDS) + " | median |", "|---" * (len(SEEDS) + 2) + "|"]
    for n in variants:
        md.append(f"| {n} | " + " | ".join(f"{hv[n][s]:.4f}" for s in SEEDS) + f" | {med[n]:.4f} |")
    md += ["", f"- median HV(lam0.5) >= median HV(lam0.0): {first}", f"- median HV(lam0.0) >= median HV(mod-only): {second}", ""]
    md.append("## Per-seed fronts (alpha_1 -> mean oracle scores)")
    for n in variants:
        for s in SEEDS:
            md += ["", f"### {n}, seed {s}", "", "| alpha_1 | q_1 | q_2 |", "|---|---|---|"]
            md += [f"| {p.alpha[0]:.1f} | {p.q[0]:.4f} | {p.q[1]:.4f} |" for p in fronts[n][s]]
    (REPORT_DIR / "ablation.md").write_text("\n".join(md) + "\n")
    for n in variants:
        for s in SEEDS:
            (REPORT_DIR / f"ablation_{n}_seed{s}.svg").write_text(pl.front_svgs(n, fronts[n][s], ["useful", "careful"])["pareto.svg"])

    secs = time.perf_counter() - t0 + sum(_RUNS[(s, kw["r1"], kw["r2"], kw["lam"])]["seconds"] for kw in variants.values() for s in SEEDS)
    detail = (
        f"median HV lam0.5={med['lam0.5']:.4f} lam0.0={med['lam0.0']:.4f} mod-only={med['mod-only']:.4f} "
        f"[{'>=' if first else '<'} , {'>=' if second else '<'}]; per-seed fronts in {REPORT_DIR / 'ablation.md'} ({secs:.0f}s)"
    )
    report(8, ok, detail, soft=True)
    # soft criterion: the hard requirement is a complete report when an inequality fails
    text = (REPORT_DIR / "ablation.md").read_text()
    assert all(f"### {n}, seed {s}" in text for n in variants for s in SEEDS)
    assert secs < 45 * 60


def test_criterion_09_genarm_composition():
    g = torch.Generator().manual_seed(9)
    worst_vertex = worst_uniform = 0.0
    with Timer() as t:
        for _ in range(1000):
            V = int(torch.randint(2, 50, (1,), generator=g))
            base = torch.log_softmax(3 * torch.randn(V, generator=g, dtype=torch.float64), -1)
            arms = [torch.log_softmax(3 * torch.randn(V, generator=g, dtype=torch.float64), -1) for _ in range(3)]
            beta = float(torch.rand(1, generator=g)) * 2 + 0.05
            for i in range(3):
                e = [0.0] * 3
                e[i] = 1.0
                d = (dec.compose_genarm(base, arms, e, beta) - dec.compose_single(base, arms[i], beta)).abs().max().item()
                worst_vertex = max(worst_vertex, d)
            uni = torch.full((V,), -math.log(V), dtype=torch.float64)
            a = torch.distributions.Dirichlet(torch.ones(3, dtype=torch.float64)).sample()
            a = (a / a.sum()).tolist()
            d = (dec.compose_genarm(base, [uni] * 3, a, beta) - base.exp()).abs().max().item()
            worst_uniform = max(worst_uniform, d)
    ok = worst_vertex <= 1e-12 and worst_uniform <= 1e-12 and t.elapsed < 5
    report(9, ok, f"vertex gap {worst_vertex:.1e}, uniform-ARM gap {worst_uniform:.1e} (tol 1e-12) over 1000 draws in {t.elapsed:.2f}s (< 5s)")
    assert ok


def test_criterion_10_determinism(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(default_config_dict(2)))
    outputs = []
    for rep in range(2):
        root = tmp_path / f"rep{rep}"
        data, run, sweep = root / "data", root / "run", root / "sweep"
        assert cli.main(["gen-data", "--config", str(cfg_path), "--out", str(data)]) == 0
        assert cli.main(["train", "--config", str(cfg_path), "--data", str(data), "--out", str(run)]) == 0
        ck = str(run / "checkpoint.uniarm")
        assert cli.main(["sweep", "--config", str(cfg_path), "--checkpoint", ck, "--data", str(data), "--out", str(sweep)]) == 0
        files = [data / f"{n}.jsonl" for n in pl.SPLIT_NAMES] + [run / "checkpoint.uniarm", run / "loss.csv", sweep / "points.json"]
        outputs.append([f.read_bytes() for f in files])
    same = [a == b for a, b in zip(*outputs)]
    ok = all(same)
    report(10, ok, f"{sum(same)}/{len(same)} output files byte-identical across reruns (data x3, checkpoint, loss CSV, points)")
    assert ok
