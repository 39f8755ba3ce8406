"""Command-line entry point: ``uniarm {gen-data,train,sweep,eval,merge}``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import torch

from . import model as M
from . import pipeline as pl
from . import persistence
from . import preference as pref
from .config import ConfigError, ExperimentConfig, load_config
from .training import TrainingDiverged, write_loss_csv

log = logging.getLogger("uniarm")

EXIT_USAGE = 2
EXIT_DIVERGED = 3


class UsageError(Exception):
    pass


def _threads():
    n = os.environ.get("UNIARM_THREADS")
    if n:
        torch.set_num_threads(max(1, int(n)))


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _out(args, default: str) -> Path:
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen_data(args) -> int:
    cfg = _load(args)
    out = _out(args, cfg.paths.data_dir)
    splits = pl.make_data(cfg)
    for p in pl.write_data(splits, out):
        log.info("wrote %s", p)
    return 0


def cmd_train(args) -> int:
    cfg = _load(args)
    out = _out(args, cfg.paths.run_dir)
    records = pl.read_split(args.data or cfg.paths.data_dir, "train")
    if len(records[0].labels) != cfg.k:
        raise UsageError(f"dataset has {len(records[0].labels)} objectives, config has {cfg.k}")
    res = pl.train_run(cfg, records)
    persistence.save(res.checkpoint, out / "checkpoint.uniarm")
    write_loss_csv(out / "loss.csv", res.state.history)
    log.info("trained %d steps; wrote %s", res.state.step, out / "checkpoint.uniarm")
    return 0


def _parse_alpha(text: str, k: int | None = None) -> pref.PreferenceVector:
    try:
        a = pref.PreferenceVector(tuple(float(x) for x in text.split(",")))
    except ValueError as exc:
        raise UsageError(f"--alpha: {exc}") from exc
    if k is not None and a.k != k:
        raise UsageError(f"--alpha has {a.k} entries, expected {k}")
    return a


def cmd_sweep(args) -> int:
    cfg = _load(args)
    out = _out(args, str(Path(cfg.paths.run_dir) / "sweep"))
    cks = [persistence.load(p) for p in args.checkpoint]
    if len(cks) == 1 and cks[0].k is not None and cks[0].k != cfg.k:
        raise UsageError(f"checkpoint has k={cks[0].k}, config has k={cfg.k}")
    if len(cks) > 1 and len(cks) != cfg.k:
        raise UsageError(f"GenARM needs one checkpoint per objective ({cfg.k}), got {len(cks)}")
    base, reward = pl.reward_from_checkpoints(cks)
    if args.base_only:
        reward = None
    alphas = [_parse_alpha(args.alpha, cfg.k)] if args.alpha else None
    if alphas is None and cks[0].adapter_kind == "merged" and len(cks) == 1:
        raise UsageError("a merged checkpoint is locked to one preference; pass --alpha matching its lock")
    prompts = [r.prompt for r in pl.read_split(args.data or cfg.paths.data_dir, "test")]
    try:
        points, rows = pl.sweep(cfg, base, reward, prompts, alphas)
    except ValueError as exc:
        if "locked" in str(exc):
            raise UsageError(str(exc)) from exc
        raise
    method = args.method or cfg.sweep.method
    pl.write_points(out / "points.json", method, points)
    pl.write_points_csv(out / "points.csv", points)
    pl.write_generations(out / "generations.jsonl", rows)
    names = [o.name for o in cfg.task.objectives]
    if cfg.k in (2, 3) and len(points) > 1:
        for name, svg in pl.front_svgs(method, points, names).items():
            (out / name).write_text(svg, encoding="utf-8")
    log.info("swept %d preference vectors; wrote %s", len(points), out / "points.json")
    return 0


def cmd_eval(args) -> int:
    sets = {}
    for p in args.points:
        method, pts = pl.read_points(p)
        if not pts:
            raise UsageError(f"{p}: no points")
        name = method
        n = 2
        while name in sets:
            name = f"{method}#{n}"
            n += 1
        sets[name] = pts
    ref = [float(x) for x in args.ref.split(",")] if args.ref else None
    try:
        doc = pl.evaluate(sets, margin=args.margin, ref=ref)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    text = json.dumps(doc, indent=1) + "\n"
    if args.out:
        out = Path(args.out)
        if out.suffix != ".json":
            out.mkdir(parents=True, exist_ok=True)
            out = out / "metrics.json"
        out.write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_merge(args) -> int:
    ck = persistence.load(args.checkpoint)
    if ck.adapter_kind != "moslora":
        raise UsageError(f"merge needs a UniARM (MoSLoRA) checkpoint, got adapter kind {ck.adapter_kind!r}")
    alpha = _parse_alpha(args.alpha, ck.k)
    base, arm = persistence.build_models(ck)
    merged = M.merge_model(arm, pref.mix(alpha, ck.embeddings), alpha.alpha)
    out_ck = persistence.from_models(
        base, merged, ck.adapter_spec, embeddings=ck.embeddings, descriptions=ck.descriptions,
        train_seed=ck.train_seed, steps=ck.steps,
    )
    out = _out(args, str(Path(args.checkpoint).parent))
    path = out / "merged.uniarm"
    persistence.save(out_ck, path)
    log.info("wrote preference-locked checkpoint %s", path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uniarm", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="experiment config JSON")
            p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="output directory")

    p = sub.add_parser("gen-data", help="write train/val/test preference pairs")
    common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train the reward model adapters")
    common(p)
    p.add_argument("--data", default=None, help="dataset directory (default: paths.data_dir)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="decode over a preference sweep and record mean oracle rewards")
    common(p)
    p.add_argument("--checkpoint", action="append", required=True, help="repeat once per ARM for GenARM")
    p.add_argument("--data", default=None)
    p.add_argument("--method", default=None)
    p.add_argument("--alpha", default=None, help="decode one preference only, e.g. 0.3,0.7")
    p.add_argument("--base-only", action="store_true", help="ignore the reward model")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("eval", help="hypervolume and mean inner product with a shared reference point")
    p.add_argument("points", nargs="+", help="points.json or generations.jsonl files")
    p.add_argument("--margin", type=float, default=1.0)
    p.add_argument("--ref", default=None, help="explicit reference point, e.g. -1,-1")
    common(p, config=False)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("merge", help="fold adapters into the weights for one preference")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--alpha", required=True)
    common(p, config=False)
    p.set_defaults(func=cmd_merge)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    _threads()
    try:
        return args.func(args)
    except (ConfigError, UsageError, persistence.CheckpointError) as exc:
        print(f"uniarm {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDiverged as exc:
        print(f"uniarm {args.command}: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except FileNotFoundError as exc:
        print(f"uniarm {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
