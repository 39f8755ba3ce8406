"""Tiny causal transformer used as the frozen base model and as the reward model.

The reward model is a copy of the base model whose Q/K/V projections carry
trainable adapters; everything else stays frozen.
"""

from __future__ import annotations

import copy
import hashlib
import math
from dataclasses import dataclass, asdict
from typing import Optional, Sequence

import torch
import torch.nn.functional as F
from torch import nn

from . import adapter as ad

DTYPES = {"float64": torch.float64, "float32": torch.float32}
ADAPTED_PROJECTIONS = ("q", "k", "v")


class LengthError(ValueError):
    pass


@dataclass(frozen=True)
class AdapterSpec:
    kind: str = "moslora"
    r1: int = 4
    r2: int = 4
    k: int = 2

    def __post_init__(self):
        if self.kind not in ad.ADAPTER_KINDS:
            raise ValueError(f"adapter kind must be one of {ad.ADAPTER_KINDS}, got {self.kind!r}")


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int = 64
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    max_seq_len: int = 64
    precision: str = "float64"

    def __post_init__(self):
        for name in ("vocab_size", "d_model", "n_layers", "n_heads", "max_seq_len"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.d_model % self.n_heads:
            raise ValueError(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")
        if self.precision not in DTYPES:
            raise ValueError(f"precision must be one of {sorted(DTYPES)}")

    @property
    def dtype(self) -> torch.dtype:
        return DTYPES[self.precision]

    def to_dict(self) -> dict:
        return asdict(self)


class Block(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        d = config.d_model
        self.n_heads = config.n_heads
        self.ln1 = nn.LayerNorm(d)
        self.q = nn.Linear(d, d)
        self.k = nn.Linear(d, d)
        self.v = nn.Linear(d, d)
        self.proj = nn.Linear(d, d)
        self.ln2 = nn.LayerNorm(d)
        self.fc = nn.Linear(d, 4 * d)
        self.fc_out = nn.Linear(4 * d, d)

    def _project(self, layer, h, o_mixed, alpha):
        if isinstance(layer, ad.AdaptedLinear):
            return layer(h, o_mixed=o_mixed, alpha=alpha)
        return layer(h)

    def forward(self, x, o_mixed=None, alpha=None):
        B, T, d = x.shape
        hd = d // self.n_heads
        h = self.ln1(x)
        q, k, v = (
            self._project(getattr(self, name), h, o_mixed, alpha).view(B, T, self.n_heads, hd).transpose(1, 2)
            for name in ADAPTED_PROJECTIONS
        )
        scores = (q @ k.transpose(-2, -1)) / math.sqrt(hd)
        mask = torch.ones(T, T, dtype=torch.bool, device=x.device).triu(1)
        scores = scores.masked_fill(mask, float("-inf"))
        att = torch.softmax(scores, dim=-1) @ v
        x = x + self.proj(att.transpose(1, 2).reshape(B, T, d))
        x = x + self.fc_out(F.gelu(self.fc(self.ln2(x))))
        return x


class TinyLM(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.tok_emb = nn.Embedding(config.vocab_size, config.d_model)
        self.pos_emb = nn.Embedding(config.max_seq_len, config.d_model)
        self.blocks = nn.ModuleList(Block(config) for _ in range(config.n_layers))
        self.ln_f = nn.LayerNorm(config.d_model)
        self.unembed = nn.Linear(config.d_model, config.vocab_size, bias=False)
        # alpha this model was merged for, if any
        self.preference_lock: Optional[tuple[float, ...]] = None

    @property
    def adapter_kind(self) -> Optional[str]:
        for block in self.blocks:
            if isinstance(block.q, ad.AdaptedLinear):
                return block.q.kind
        return None

    def forward(self, tokens: torch.Tensor, o_mixed=None, alpha=None) -> torch.Tensor:
        squeeze = tokens.dim() == 1
        if squeeze:
            tokens = tokens.unsqueeze(0)
        T = tokens.shape[1]
        if T > self.config.max_seq_len:
            raise LengthError(f"sequence length {T} exceeds max_seq_len={self.config.max_seq_len}")
        kind = self.adapter_kind
        if kind == "moslora" and o_mixed is None:
            raise ValueError("this model has MoSLoRA adapters; pass o_mixed")
        if kind == "pblora" and alpha is None:
            raise ValueError("this model has PBLoRA adapters; pass alpha")
        dtype = self.tok_emb.weight.dtype
        if o_mixed is not None:
            o_mixed = torch.as_tensor(o_mixed, dtype=dtype)
        if alpha is not None:
            alpha = torch.as_tensor(alpha, dtype=dtype)
        pos = torch.arange(T, device=tokens.device)
        x = self.tok_emb(tokens) + self.pos_emb(pos)
        for block in self.blocks:
            x = block(x, o_mixed=o_mixed, alpha=alpha)
        logits = self.unembed(self.ln_f(x))
        return logits[0] if squeeze else logits

    def adapter_layers(self) -> dict[str, ad.AdaptedLinear]:
        out = {}
        for i, block in enumerate(self.blocks):
            for name in ADAPTED_PROJECTIONS:
                layer = getattr(block, name)
                if isinstance(layer, ad.AdaptedLinear):
                    out[f"blocks.{i}.{name}"] = layer
        return out

    def adapter_parameters(self) -> list[nn.Parameter]:
        return [p for layer in self.adapter_layers().values() for n, p in layer.named_parameters() if not n.startswith("base.")]


def build_base(config: ModelConfig, seed: int = 0) -> TinyLM:
    """Seeded random transformer standing in for a pretrained frozen base model."""
    gen = torch.Generator().manual_seed(seed)
    dtype = config.dtype
    model = TinyLM(config).to(dtype)
    with torch.no_grad():
        for name, p in model.named_parameters():
            if name.endswith("emb.weight"):
                p.copy_(torch.randn(p.shape, generator=gen, dtype=dtype))
            elif ".ln" in name or name.startswith("ln_f"):
                continue
            elif name.endswith("weight"):
                p.copy_(torch.randn(p.shape, generator=gen, dtype=dtype) / math.sqrt(p.shape[1]))
            elif name.endswith("bias"):
                p.copy_(0.02 * torch.randn(p.shape, generator=gen, dtype=dtype))
    model.requires_grad_(False)
    return model


def with_adapters(base: TinyLM, spec: AdapterSpec, seed: int = 0) -> TinyLM:
    """Copy of ``base`` with fresh adapters on every Q/K/V projection."""
    model = copy.deepcopy(base)
    model.requires_grad_(False)
    d = model.config.d_model
    cfg = ad.AdapterConfig(m=d, n=d, r1=spec.r1, r2=spec.r2)
    for i, block in enumerate(model.blocks):
        for j, name in enumerate(ADAPTED_PROJECTIONS):
            w = ad.init(cfg, spec.kind, k=spec.k, seed=seed * 1000 + 10 * i + j, dtype=model.config.dtype)
            setattr(block, name, ad.AdaptedLinear(getattr(block, name), w))
    return model


def merge_model(model: TinyLM, o_mixed: torch.Tensor, alpha: Sequence[float]) -> TinyLM:
    """Replace every MoSLoRA layer by its merged affine layer for ``o_mixed``."""
    if model.adapter_kind != "moslora":
        raise ValueError("merge requires a model with MoSLoRA adapters")
    merged = copy.deepcopy(model)
    o_mixed = torch.as_tensor(o_mixed, dtype=model.config.dtype)
    for i, block in enumerate(merged.blocks):
        for name in ADAPTED_PROJECTIONS:
            layer = getattr(block, name)
            if not isinstance(layer, ad.AdaptedLinear):
                continue
            ml = layer.merged(o_mixed)
            lin = nn.Linear(layer.config.n, layer.config.m).to(model.config.dtype)
            with torch.no_grad():
                lin.weight.copy_(ml.weight)
                lin.bias.copy_(ml.bias)
            setattr(block, name, lin)
    merged.requires_grad_(False)
    merged.preference_lock = tuple(float(a) for a in alpha)
    return merged


def base_state(model: TinyLM) -> dict[str, torch.Tensor]:
    """Non-adapter tensors under canonical (unwrapped) names."""
    adapted = model.adapter_layers()
    out = {}
    for name, t in model.state_dict().items():
        prefix, _, _ = name.rpartition(".")
        if prefix in adapted:
            continue
        out[name.replace(".base.", ".")] = t
    return out


def adapter_state(model: TinyLM) -> dict[str, torch.Tensor]:
    out = {}
    for prefix, layer in model.adapter_layers().items():
        for name, t in ad.tensors(layer.weights()).items():
            out[f"{prefix}.{name}"] = t.detach()
    return out


def checksum(state: dict[str, torch.Tensor]) -> str:
    h = hashlib.sha256()
    for name in sorted(state):
        h.update(name.encode())
        h.update(state[name].detach().contiguous().numpy().tobytes())
    return h.hexdigest()


def forward_logits(model: TinyLM, tokens: Sequence[int], o_mixed=None, alpha=None) -> torch.Tensor:
    """Logits ``(len(tokens), vocab)``; row t scores the token at position t+1."""
    t = torch.as_tensor(list(tokens), dtype=torch.long)
    if len(t) and (t.min() < 0 or t.max() >= model.config.vocab_size):
        raise ValueError("token id out of range for vocabulary")
    return model(t, o_mixed=o_mixed, alpha=alpha)


def response_log_probs(
    model: TinyLM,
    prompts: Sequence[Sequence[int]],
    responses: Sequence[Sequence[int]],
    o_mixed=None,
    alpha=None,
) -> torch.Tensor:
    """Sum of response-token log-probs for each (prompt, response) pair, differentiable.

    Sequences are right-padded with 0; padding sits after every scored
    position so causality keeps it from leaking in.
    """
    lengths = [len(p) + len(r) for p, r in zip(prompts, responses)]
    T = max(lengths)
    if T > model.config.max_seq_len:
        raise LengthError(f"prompt + response length {T} exceeds max_seq_len={model.config.max_seq_len}")
    B = len(prompts)
    tokens = torch.zeros(B, T, dtype=torch.long)
    mask = torch.zeros(B, T, dtype=torch.bool)  # True where the target token is a response token
    for i, (p, r) in enumerate(zip(prompts, responses)):
        seq = list(p) + list(r)
        if seq:
            tokens[i, : len(seq)] = torch.tensor(seq, dtype=torch.long)
        mask[i, len(p) : len(seq)] = True
    if T < 2:
        return torch.zeros(B, dtype=model.config.dtype)
    logits = model(tokens[:, :-1], o_mixed=o_mixed, alpha=alpha)
    logp = torch.log_softmax(logits, dim=-1)
    picked = logp.gather(-1, tokens[:, 1:].unsqueeze(-1)).squeeze(-1)
    return (picked * mask[:, 1:]).sum(dim=-1)


def sequence_log_prob(model: TinyLM, prompt: Sequence[int], response: Sequence[int], o_mixed=None, alpha=None) -> float:
    if len(prompt) == 0 and len(response):
        raise ValueError("a nonempty response needs at least one prompt token to condition on")
    if len(prompt) + len(response) > model.config.max_seq_len:
        raise LengthError(
            f"prompt + response length {len(prompt) + len(response)} exceeds max_seq_len={model.config.max_seq_len}"
        )
    if not response:
        return 0.0
    with torch.no_grad():
        return float(response_log_probs(model, [prompt], [response], o_mixed=o_mixed, alpha=alpha)[0])
