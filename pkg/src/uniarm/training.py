"""Preference-conditioned pairwise loss and the UniARM training loop."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from . import preference as pref
from .datasynth import TIE, PreferencePairRecord, aggregate_label
from .model import TinyLM, base_state, checksum, response_log_probs

logger = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    """Desk-scale defaults; see README for how they relate to the 7B settings."""

    epochs: int = 2
    beta_r: float = 0.1
    learning_rate: float = 5e-3
    batch_size: int = 16
    lam: float = 0.5
    seed: int = 0
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    steps: Optional[int] = None  # overrides epochs when set
    fixed_alpha: Optional[tuple[float, ...]] = None  # train at one preference only

    def __post_init__(self):
        if self.epochs <= 0 or self.batch_size <= 0:
            raise ValueError("epochs and batch_size must be positive")
        if self.beta_r < 0 or self.learning_rate <= 0 or self.lam < 0:
            raise ValueError("beta_r and lam must be nonnegative, learning_rate positive")
        if self.steps is not None and self.steps <= 0:
            raise ValueError("steps must be positive")

    def num_steps(self, n_records: int) -> int:
        if self.steps is not None:
            return self.steps
        return self.epochs * math.ceil(n_records / self.batch_size)


@dataclass
class TrainState:
    model: TinyLM
    step: int = 0
    history: list[dict] = field(default_factory=list)
    base_checksum: str = ""


def pairwise_loss(logp1, logp2, z, beta_r: float):
    """-log sigmoid((-1)^z * beta_r * (logp1 - logp2)); works on floats or tensors."""
    if any(isinstance(v, torch.Tensor) for v in (logp1, logp2, z)):
        logp1, logp2 = torch.as_tensor(logp1), torch.as_tensor(logp2)
        sign = 1.0 - 2.0 * torch.as_tensor(z, dtype=logp1.dtype)
        return -F.logsigmoid(sign * beta_r * (logp1 - logp2))
    x = (1 - 2 * int(z)) * beta_r * (float(logp1) - float(logp2))
    # softplus(-x) without overflow
    return math.log1p(math.exp(-x)) if x >= 0 else -x + math.log1p(math.exp(x))


def condition(model: TinyLM, alpha, embeddings: Optional[torch.Tensor]) -> dict:
    """Keyword arguments conditioning the reward model on preference ``alpha``."""
    kind = model.adapter_kind
    if kind == "moslora":
        if embeddings is None:
            raise ValueError("MoSLoRA conditioning needs objective embeddings")
        return {"o_mixed": pref.mix(alpha, embeddings)}
    if kind == "pblora":
        return {"alpha": torch.tensor(tuple(alpha), dtype=model.config.dtype)}
    return {}


def _pair_logps(model, records: Sequence[PreferencePairRecord], cond: dict):
    prompts = [r.prompt for r in records] * 2
    responses = [r.y1 for r in records] + [r.y2 for r in records]
    lp = response_log_probs(model, prompts, responses, **cond)
    n = len(records)
    return lp[:n], lp[n:]


def _mean_loss(lp1, lp2, labels: Sequence[int], beta_r):
    z = torch.tensor(labels, dtype=lp1.dtype)
    return pairwise_loss(lp1, lp2, z, beta_r).mean()


def _global_labels(records, alpha):
    keep, labels = [], []
    for j, r in enumerate(records):
        z = aggregate_label(r, alpha)
        if z is not TIE:
            keep.append(j)
            labels.append(z)
    return keep, labels


def local_loss(batches, alpha, model, embeddings, beta_r: float) -> torch.Tensor:
    """sum_i alpha_i * mean pairwise loss of batch i against objective-i labels."""
    alpha = tuple(alpha)
    if len(batches) != len(alpha):
        raise ValueError(f"need one batch per objective ({len(alpha)}), got {len(batches)}")
    cond = condition(model, alpha, embeddings)
    total = torch.zeros((), dtype=model.config.dtype)
    for i, batch in enumerate(batches):
        if not batch:
            raise ValueError(f"batch for objective {i} is empty")
        lp1, lp2 = _pair_logps(model, batch, cond)
        total = total + alpha[i] * _mean_loss(lp1, lp2, [r.labels[i] for r in batch], beta_r)
    return total


def global_loss(batch_alpha, alpha, model, embeddings, beta_r: float) -> torch.Tensor:
    """Mean pairwise loss on the batch relabelled by alpha-weighted oracle scores."""
    keep, labels = _global_labels(batch_alpha, alpha)
    if not keep:
        logger.warning("every pair in the global batch ties under alpha=%s; global loss set to 0", tuple(alpha))
        return torch.zeros((), dtype=model.config.dtype)
    cond = condition(model, alpha, embeddings)
    lp1, lp2 = _pair_logps(model, [batch_alpha[j] for j in keep], cond)
    return _mean_loss(lp1, lp2, labels, beta_r)


def combined_loss(batches, batch_alpha, alpha, model, embeddings, beta_r: float, lam: float):
    """(local, global, local + lam * global), sharing one forward pass.

    Numerically equal to calling :func:`local_loss` and :func:`global_loss`.
    """
    alpha = tuple(alpha)
    keep, glabels = _global_labels(batch_alpha, alpha)
    groups = list(batches) + [[batch_alpha[j] for j in keep]]
    flat = [r for g in groups for r in g]
    cond = condition(model, alpha, embeddings)
    lp1, lp2 = _pair_logps(model, flat, cond)
    loc = torch.zeros((), dtype=model.config.dtype)
    start = 0
    for i, batch in enumerate(batches):
        if not batch:
            raise ValueError(f"batch for objective {i} is empty")
        sl = slice(start, start + len(batch))
        loc = loc + alpha[i] * _mean_loss(lp1[sl], lp2[sl], [r.labels[i] for r in batch], beta_r)
        start += len(batch)
    if keep:
        glob = _mean_loss(lp1[start:], lp2[start:], glabels, beta_r)
    else:
        logger.warning("every pair in the global batch ties under alpha=%s; global loss set to 0", alpha)
        glob = torch.zeros((), dtype=model.config.dtype)
    return loc, glob, loc + lam * glob


def train(
    model: TinyLM,
    records: Sequence[PreferencePairRecord],
    embeddings: Optional[torch.Tensor],
    config: TrainConfig,
    k: Optional[int] = None,
) -> TrainState:
    """Train the adapters of ``model`` in place; base tensors stay frozen.

    Every record carries all k labels, so D_i is the record list read through
    objective i and D_alpha is the same list relabelled by alpha.
    """
    if model.adapter_kind is None:
        raise ValueError("train needs a model with conditioned adapters")
    k = k or len(records[0].labels)
    params = model.adapter_parameters()
    opt = torch.optim.Adam(params, lr=config.learning_rate, betas=config.adam_betas, eps=config.adam_eps)
    rng = np.random.default_rng(config.seed)
    n = len(records)
    bs = min(config.batch_size, n)
    state = TrainState(model=model, base_checksum=checksum(base_state(model)))

    for step in range(config.num_steps(n)):
        if config.fixed_alpha is not None:
            alpha = pref.PreferenceVector(tuple(config.fixed_alpha))
        else:
            alpha = pref.sample_simplex(k, rng)
        batches = [[records[j] for j in rng.choice(n, bs, replace=False)] for _ in range(k)]
        batch_alpha = [records[j] for j in rng.choice(n, bs, replace=False)]

        opt.zero_grad()
        loc, glob, total = combined_loss(batches, batch_alpha, alpha, model, embeddings, config.beta_r, config.lam)
        if not torch.isfinite(total):
            raise TrainingDiverged(f"combined loss became {total.item()} at step {step}")
        total.backward()
        opt.step()

        state.step = step + 1
        state.history.append(
            {"step": step, "alpha": alpha.alpha, "local": loc.item(), "global": glob.item(), "combined": total.item()}
        )
    return state


def write_loss_csv(path, history: Sequence[dict]) -> None:
    k = len(history[0]["alpha"]) if history else 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", *[f"alpha_{i + 1}" for i in range(k)], "local", "global", "combined"])
        for row in history:
            w.writerow([row["step"], *map(repr, row["alpha"]), repr(row["local"]), repr(row["global"]), repr(row["combined"])])
