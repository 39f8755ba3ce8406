"""End-to-end steps shared by the CLI, the experiment scripts and the tests."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch

from . import datasynth as ds
from . import decoding as dec
from . import metrics
from . import model as M
from . import persistence
from . import preference as pref
from . import training
from .config import ExperimentConfig
from .plotting import scatter_svg

SPLIT_NAMES = ("train", "val", "test")


def make_data(cfg: ExperimentConfig) -> dict[str, list[ds.PreferencePairRecord]]:
    records = ds.generate_dataset(cfg.synth_task())
    parts = ds.split_dataset(records, cfg.task.split, seed=cfg.seed)
    return dict(zip(SPLIT_NAMES, parts))


def write_data(splits: dict, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name in SPLIT_NAMES:
        p = out / f"{name}.jsonl"
        ds.write_records(p, splits[name])
        paths.append(p)
    return paths


def read_split(data_dir: str | Path, name: str) -> list[ds.PreferencePairRecord]:
    p = Path(data_dir) / f"{name}.jsonl"
    if not p.exists():
        raise FileNotFoundError(f"{p} not found; run gen-data first")
    return ds.read_records(p)


def base_and_embeddings(cfg: ExperimentConfig) -> tuple[M.TinyLM, torch.Tensor]:
    base = M.build_base(cfg.model, seed=cfg.seed)
    E = pref.stack([pref.embed_objective(d, base) for d in cfg.descriptions()])
    return base, E


@dataclass
class TrainResult:
    base: M.TinyLM
    arm: M.TinyLM
    embeddings: torch.Tensor
    state: training.TrainState
    checkpoint: persistence.Checkpoint


def train_run(cfg: ExperimentConfig, records: Sequence[ds.PreferencePairRecord]) -> TrainResult:
    base, E = base_and_embeddings(cfg)
    spec = cfg.adapter_spec()
    arm = M.with_adapters(base, spec, seed=cfg.seed)
    state = training.train(arm, records, E, cfg.train, k=cfg.k)
    ck = persistence.from_models(
        base, arm, spec, embeddings=E, descriptions=cfg.descriptions(), train_seed=cfg.train.seed, steps=state.step
    )
    return TrainResult(base, arm, E, state, ck)


def fresh_reward(cfg: ExperimentConfig):
    """Untrained UniARM reward (adapters at identity) and the base model."""
    base, E = base_and_embeddings(cfg)
    arm = M.with_adapters(base, cfg.adapter_spec(), seed=cfg.seed)
    return base, dec.UniARMReward(arm, E)


def reward_from_checkpoints(checkpoints: Sequence[persistence.Checkpoint]):
    """(base model, reward spec) for one UniARM/PBLoRA/merged checkpoint or k GenARM ones."""
    if not checkpoints:
        raise ValueError("need at least one checkpoint")
    models = [persistence.build_models(ck) for ck in checkpoints]
    base = models[0][0]
    if len(checkpoints) > 1:
        return base, dec.GenARMReward([arm for _, arm in models])
    ck, (_, arm) = checkpoints[0], models[0]
    if ck.adapter_kind is None:
        return base, dec.NoReward()
    if ck.adapter_kind == "merged":
        return base, dec.MergedReward(arm)
    if ck.adapter_kind == "pblora":
        return base, dec.PBLoRAReward(arm)
    return base, dec.UniARMReward(arm, ck.embeddings)


def sub_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def sweep(
    cfg: ExperimentConfig,
    base: M.TinyLM,
    reward,
    prompts: Sequence[Sequence[int]],
    alphas: Optional[Sequence[pref.PreferenceVector]] = None,
) -> tuple[list[metrics.ParetoPoint], list[dict]]:
    """Mean oracle reward per preference vector, plus the raw generations."""
    task = cfg.synth_task()
    alphas = alphas if alphas is not None else pref.sweep_grid(cfg.k, cfg.sweep.scheme)
    prompts = list(prompts)[: cfg.sweep.max_prompts]
    points, rows = [], []
    for idx, a in enumerate(alphas):
        dc = dec.DecodeConfig(
            beta=cfg.decode.beta,
            max_new_tokens=cfg.decode.max_new_tokens,
            mode=cfg.decode.mode,
            temperature=cfg.decode.temperature,
            seed=sub_seed(cfg.decode.seed, idx),
        )
        ys = dec.generate_batch(base, reward, prompts, a, dc)
        scores = [ds.oracle_scores(y, task) for y in ys]
        q = tuple(float(x) for x in np.mean(scores, axis=0))
        points.append(metrics.ParetoPoint(alpha=tuple(a), q=q))
        for p, y, s in zip(prompts, ys, scores):
            rows.append({"prompt": list(p), "alpha": list(a), "tokens": list(y), "scores": list(s)})
    return points, rows


def write_points(path: str | Path, method: str, points: Sequence[metrics.ParetoPoint]) -> None:
    k = len(points[0].alpha) if points else 0
    doc = {"method": method, "k": k, "points": [p.to_dict() for p in points]}
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def write_points_csv(path: str | Path, points: Sequence[metrics.ParetoPoint]) -> None:
    k = len(points[0].alpha) if points else 0
    lines = [",".join([f"alpha_{i + 1}" for i in range(k)] + [f"q_{i + 1}" for i in range(k)])]
    for p in points:
        lines.append(",".join(repr(x) for x in (*p.alpha, *p.q)))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_generations(path: str | Path, rows: Sequence[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in rows:
            fh.write(json.dumps(r, separators=(",", ":")) + "\n")


def read_points(path: str | Path) -> tuple[str, list[metrics.ParetoPoint]]:
    """Points from a ``points.json`` file, or aggregated from a generations ``.jsonl`` file."""
    path = Path(path)
    if path.suffix == ".jsonl":
        by_alpha: dict[tuple, list] = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    row = json.loads(line)
                    by_alpha.setdefault(tuple(row["alpha"]), []).append(row["scores"])
        pts = [metrics.ParetoPoint(alpha=a, q=tuple(float(x) for x in np.mean(s, axis=0))) for a, s in by_alpha.items()]
        return path.stem, pts
    doc = json.loads(path.read_text(encoding="utf-8"))
    pts = [metrics.ParetoPoint(alpha=tuple(p["alpha"]), q=tuple(p["q"])) for p in doc["points"]]
    if pts and any(len(p.q) != doc["k"] for p in pts):
        raise ValueError(f"{path}: points disagree with k={doc['k']}")
    return doc["method"], pts


def front_svgs(method: str, points: Sequence[metrics.ParetoPoint], names: Sequence[str]) -> dict[str, str]:
    """One scatter for k=2; for k=3 one projection per face of the simplex (one weight fixed at zero)."""
    k = len(points[0].alpha)
    labels = {method: [",".join(f"{a:g}" for a in p.alpha) for p in points]}
    if k == 2:
        return {"pareto.svg": scatter_svg({method: [p.q for p in points]}, labels, names[0], names[1], method)}
    out = {}
    for zero in range(k):
        i, j = [c for c in range(k) if c != zero]
        sel = [p for p in points if p.alpha[zero] == 0.0]
        sel_labels = {method: [",".join(f"{a:g}" for a in p.alpha) for p in sel]}
        out[f"pareto_{names[i]}_{names[j]}.svg"] = scatter_svg(
            {method: [(p.q[i], p.q[j]) for p in sel]}, sel_labels, names[i], names[j], f"{method} ({names[zero]} = 0)"
        )
    return out


def evaluate(point_sets: dict[str, Sequence[metrics.ParetoPoint]], margin: float = 1.0, ref=None) -> dict:
    ks = {len(p.q) for pts in point_sets.values() for p in pts}
    if len(ks) != 1:
        raise ValueError(f"point files disagree on the number of objectives: {sorted(ks)}")
    k = ks.pop()
    if ref is None:
        ref = metrics.shared_reference([[p.q for p in pts] for pts in point_sets.values()], margin)
    results = []
    for method, pts in point_sets.items():
        results.append(
            {
                "method": method,
                "k": k,
                "ref": list(ref),
                "hv": metrics.hypervolume([p.q for p in pts], ref),
                "mip": metrics.mip(pts),
                "points": [p.to_dict() for p in pts],
            }
        )
    return {"k": k, "ref": list(ref), "results": results}
