"""Guided decoding: a frozen base model steered by autoregressive reward models.

All composition happens in log space; the per-step normaliser absorbs the
sequence-level partition function.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Optional, Sequence

import torch

from . import preference as pref
from .datasynth import EOS
from .model import TinyLM

LOCK_TOL = 1e-12


@dataclass(frozen=True)
class DecodeConfig:
    beta: float = 1.0
    max_new_tokens: int = 12
    mode: Literal["greedy", "sample"] = "greedy"
    temperature: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be at least 1")
        if self.mode not in ("greedy", "sample"):
            raise ValueError(f"mode must be 'greedy' or 'sample', got {self.mode!r}")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")


def _check(*dists: torch.Tensor):
    shape = dists[0].shape
    for d in dists:
        if d.shape != shape:
            raise ValueError(f"log-distributions differ in shape: {tuple(d.shape)} vs {tuple(shape)}")
        if not torch.isfinite(d).all():
            raise ValueError("log-distributions must be finite")


def compose_single_logits(base_logprobs, arm_logprobs, beta: float) -> torch.Tensor:
    """Normalised log of base * arm^(1/beta)."""
    _check(base_logprobs, arm_logprobs)
    return torch.log_softmax(base_logprobs + arm_logprobs / beta, dim=-1)


def compose_single(base_logprobs, arm_logprobs, beta: float) -> torch.Tensor:
    return compose_single_logits(base_logprobs, arm_logprobs, beta).exp()


def compose_genarm_logits(base_logprobs, arm_logprobs_list: Sequence[torch.Tensor], alpha, beta: float) -> torch.Tensor:
    """Normalised log of base * prod_i arm_i^(alpha_i / beta)."""
    alpha = tuple(alpha)
    if len(alpha) != len(arm_logprobs_list):
        raise ValueError(f"{len(arm_logprobs_list)} ARMs but alpha has {len(alpha)} entries")
    _check(base_logprobs, *arm_logprobs_list)
    total = base_logprobs
    for a, arm in zip(alpha, arm_logprobs_list):
        total = total + (a / beta) * arm
    return torch.log_softmax(total, dim=-1)


def compose_genarm(base_logprobs, arm_logprobs_list, alpha, beta: float) -> torch.Tensor:
    return compose_genarm_logits(base_logprobs, arm_logprobs_list, alpha, beta).exp()


def _next_logprobs(model: TinyLM, tokens: torch.Tensor, **cond) -> torch.Tensor:
    return torch.log_softmax(model(tokens, **cond)[:, -1], dim=-1)


class NoReward:
    name = "base"

    def compose(self, base_lp, tokens, alpha, beta):
        return base_lp


class UniARMReward:
    """One preference-conditioned ARM; conditioned on o' = mix(alpha)."""

    name = "uniarm"

    def __init__(self, model: TinyLM, embeddings: torch.Tensor):
        if model.adapter_kind != "moslora":
            raise ValueError("UniARM reward needs a MoSLoRA model")
        self.model, self.embeddings = model, embeddings

    def compose(self, base_lp, tokens, alpha, beta):
        arm = _next_logprobs(self.model, tokens, o_mixed=pref.mix(alpha, self.embeddings))
        return compose_single_logits(base_lp, arm, beta)


class PBLoRAReward:
    """Single ARM whose cores are merged by alpha."""

    name = "pblora"

    def __init__(self, model: TinyLM):
        if model.adapter_kind != "pblora":
            raise ValueError("PBLoRA reward needs a PBLoRA model")
        self.model = model

    def compose(self, base_lp, tokens, alpha, beta):
        a = torch.tensor(tuple(alpha), dtype=self.model.config.dtype)
        return compose_single_logits(base_lp, _next_logprobs(self.model, tokens, alpha=a), beta)


class MergedReward:
    """A preference-locked ARM produced by merging; rejects any other alpha."""

    name = "merged"

    def __init__(self, model: TinyLM):
        if model.preference_lock is None:
            raise ValueError("model is not a merged, preference-locked ARM")
        self.model = model

    def compose(self, base_lp, tokens, alpha, beta):
        lock = self.model.preference_lock
        alpha = tuple(alpha)
        if len(alpha) != len(lock) or max(abs(a - b) for a, b in zip(alpha, lock)) > LOCK_TOL:
            raise ValueError(f"merged ARM is locked to alpha={lock}; got alpha={alpha}")
        return compose_single_logits(base_lp, _next_logprobs(self.model, tokens), beta)


class GenARMReward:
    """k independent ARMs combined with alpha-weighted exponents."""

    name = "genarm"

    def __init__(self, models: Sequence[TinyLM], embeddings: Optional[torch.Tensor] = None):
        self.models = list(models)
        self.embeddings = embeddings

    def _arm_lp(self, model, tokens):
        # GenARM members are unconditioned; a rank-r2 branch, if present, sees o' = 0
        if model.adapter_kind == "moslora":
            d = model.config.d_model
            return _next_logprobs(model, tokens, o_mixed=torch.zeros(d, dtype=model.config.dtype))
        return _next_logprobs(model, tokens)

    def compose(self, base_lp, tokens, alpha, beta):
        arms = [self._arm_lp(m, tokens) for m in self.models]
        return compose_genarm_logits(base_lp, arms, alpha, beta)


def _check_dims(base: TinyLM, reward) -> None:
    models = getattr(reward, "models", None) or ([reward.model] if hasattr(reward, "model") else [])
    for m in models:
        if m.config.vocab_size != base.config.vocab_size:
            raise ValueError(
                f"reward model vocabulary {m.config.vocab_size} does not match base model {base.config.vocab_size}"
            )


@torch.no_grad()
def generate_batch(
    base_model: TinyLM,
    reward,
    prompts: Sequence[Sequence[int]],
    alpha,
    config: DecodeConfig,
) -> list[tuple[int, ...]]:
    """Decode a batch of equal-length prompts; returns responses without the end token."""
    reward = reward or NoReward()
    _check_dims(base_model, reward)
    if len({len(p) for p in prompts}) != 1:
        raise ValueError("generate_batch needs equal-length prompts")
    P = len(prompts[0])
    if P + config.max_new_tokens > base_model.config.max_seq_len:
        raise ValueError(
            f"prompt length {P} + max_new_tokens {config.max_new_tokens} exceeds max_seq_len"
        )
    tokens = torch.tensor([list(p) for p in prompts], dtype=torch.long)
    B = tokens.shape[0]
    done = torch.zeros(B, dtype=torch.bool)
    gen = torch.Generator().manual_seed(config.seed)
    out: list[list[int]] = [[] for _ in range(B)]
    for _ in range(config.max_new_tokens):
        base_lp = _next_logprobs(base_model, tokens)
        lp = reward.compose(base_lp, tokens, alpha, config.beta)
        if config.mode == "greedy":
            # argmax returns the first maximum, i.e. the lowest token id on ties
            nxt = torch.argmax(lp, dim=-1)
        else:
            probs = torch.softmax(lp / config.temperature, dim=-1)
            nxt = torch.multinomial(probs, 1, generator=gen).squeeze(-1)
        for i in range(B):
            if not done[i]:
                if int(nxt[i]) == EOS:
                    done[i] = True
                else:
                    out[i].append(int(nxt[i]))
        if bool(done.all()):
            break
        nxt = torch.where(done, torch.full_like(nxt, EOS), nxt)
        tokens = torch.cat([tokens, nxt.unsqueeze(-1)], dim=1)
    return [tuple(o) for o in out]


def generate(base_model: TinyLM, reward, prompt: Sequence[int], alpha, config: DecodeConfig) -> tuple[int, ...]:
    return generate_batch(base_model, reward, [prompt], alpha, config)[0]
