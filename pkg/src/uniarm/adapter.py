"""MoSLoRA adapter, the reconstructed PBLoRA baseline, and exact merging.

The functional API works on plain tensors so it can be checked against dense
oracles; :class:`AdaptedLinear` wraps a frozen ``nn.Linear`` for use inside
the transformer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Literal

import torch
from torch import nn

AdapterKind = Literal["moslora", "pblora"]
ADAPTER_KINDS = ("moslora", "pblora")


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class AdapterConfig:
    m: int
    n: int
    r1: int
    r2: int

    def __post_init__(self):
        if self.m <= 0 or self.n <= 0:
            raise ValueError(f"adapter dims must be positive, got m={self.m}, n={self.n}")
        if self.r1 < 0 or self.r2 < 0:
            raise ValueError("adapter ranks must be nonnegative")
        if self.r1 + self.r2 < 1:
            raise ValueError("r1 + r2 must be at least 1")
        if max(self.r1, self.r2) > min(self.m, self.n):
            raise ValueError("adapter ranks may not exceed min(m, n)")


@dataclass(frozen=True)
class MoSLoRAWeights:
    A1: torch.Tensor  # r1 x n
    W1: torch.Tensor  # r1 x r1
    B1: torch.Tensor  # m x r1
    A2: torch.Tensor  # r2 x n
    B2: torch.Tensor  # m x r2
    W_gamma: torch.Tensor  # r2 x r2
    W_eta: torch.Tensor  # r2 x r2

    def expected_shapes(self, config: AdapterConfig) -> dict[str, tuple[int, ...]]:
        m, n, r1, r2 = config.m, config.n, config.r1, config.r2
        return {
            "A1": (r1, n), "W1": (r1, r1), "B1": (m, r1),
            "A2": (r2, n), "B2": (m, r2), "W_gamma": (r2, r2), "W_eta": (r2, r2),
        }


@dataclass(frozen=True)
class PBLoRAWeights:
    A1: torch.Tensor  # r1 x n
    W1: torch.Tensor  # r1 x r1
    B1: torch.Tensor  # m x r1
    A2: torch.Tensor  # r2 x n
    B2: torch.Tensor  # m x r2
    W2: torch.Tensor  # k x r2 x r2, one core per objective

    def expected_shapes(self, config: AdapterConfig) -> dict[str, tuple[int, ...]]:
        m, n, r1, r2 = config.m, config.n, config.r1, config.r2
        return {
            "A1": (r1, n), "W1": (r1, r1), "B1": (m, r1),
            "A2": (r2, n), "B2": (m, r2), "W2": (self.W2.shape[0], r2, r2),
        }


def config_of(weights: MoSLoRAWeights | PBLoRAWeights) -> AdapterConfig:
    m, r1 = weights.B1.shape
    r2, n = weights.A2.shape
    return AdapterConfig(m=m, n=n, r1=r1, r2=r2)


def tensors(weights) -> dict[str, torch.Tensor]:
    return {f.name: getattr(weights, f.name) for f in fields(weights)}


def check_shapes(weights, config: AdapterConfig) -> None:
    for name, shape in weights.expected_shapes(config).items():
        actual = tuple(getattr(weights, name).shape)
        if actual != shape:
            raise ShapeError(f"adapter tensor {name} has shape {actual}, expected {shape}")


@dataclass(frozen=True)
class MergedLayer:
    """A plain affine layer equivalent to a MoSLoRA layer for one fixed o'."""

    weight: torch.Tensor  # m x n
    bias: torch.Tensor  # m

    def apply(self, h: torch.Tensor) -> torch.Tensor:
        return h @ self.weight.T + self.bias


def _check_base(W_base: torch.Tensor, b: torch.Tensor | None, config: AdapterConfig):
    if tuple(W_base.shape) != (config.m, config.n):
        raise ShapeError(f"W_base has shape {tuple(W_base.shape)}, expected {(config.m, config.n)}")
    if b is not None and tuple(b.shape) != (config.m,):
        raise ShapeError(f"bias b has shape {tuple(b.shape)}, expected {(config.m,)}")


def _check_last(x: torch.Tensor, size: int, name: str):
    if x.shape[-1] != size:
        raise ShapeError(f"{name} has trailing dim {x.shape[-1]}, expected {size}")


def modulation(weights: MoSLoRAWeights, o_mixed: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Return (gamma, eta) for a mixed preference vector, batched over leading dims."""
    z = o_mixed @ weights.A2.T
    gamma = (z @ weights.W_gamma.T) @ weights.B2.T
    eta = (z @ weights.W_eta.T) @ weights.B2.T
    return gamma, eta


def _broadcast_cond(v: torch.Tensor, h: torch.Tensor) -> torch.Tensor:
    # per-example conditioning (B, m) against activations (B, T, m)
    while v.dim() < h.dim() and v.dim() > 1:
        v = v.unsqueeze(-2)
    return v


def moslora_forward(
    weights: MoSLoRAWeights,
    W_base: torch.Tensor,
    b: torch.Tensor | None,
    h: torch.Tensor,
    o_mixed: torch.Tensor,
) -> torch.Tensor:
    """(gamma + 1) * ((W_base + B1 W1 A1) h) + eta + b.

    ``h`` may carry any leading batch dims. ``o_mixed`` is either a single
    vector, or one vector per leading batch element of ``h``.
    """
    config = config_of(weights)
    check_shapes(weights, config)
    _check_base(W_base, b, config)
    _check_last(h, config.n, "input h")
    _check_last(o_mixed, config.n, "o_mixed")

    shared = h @ W_base.T + ((h @ weights.A1.T) @ weights.W1.T) @ weights.B1.T
    gamma, eta = modulation(weights, o_mixed)
    gamma, eta = _broadcast_cond(gamma, h), _broadcast_cond(eta, h)
    out = (gamma + 1.0) * shared + eta
    if b is not None:
        out = out + b
    return out


def pblora_core(weights: PBLoRAWeights, alpha: torch.Tensor) -> torch.Tensor:
    """Preference-weighted core sum_i alpha_i W2_i; batched alpha gives (B, r2, r2)."""
    if alpha.shape[-1] != weights.W2.shape[0]:
        raise ShapeError(f"alpha has {alpha.shape[-1]} entries, adapter has {weights.W2.shape[0]} cores")
    return torch.einsum("...k,kij->...ij", alpha, weights.W2)


def pblora_forward(
    weights: PBLoRAWeights,
    W_base: torch.Tensor,
    b: torch.Tensor | None,
    h: torch.Tensor,
    alpha: torch.Tensor,
) -> torch.Tensor:
    """(W_base + B1 W1 A1 + B2 (sum_i alpha_i W2_i) A2) h + b."""
    config = config_of(weights)
    check_shapes(weights, config)
    _check_base(W_base, b, config)
    _check_last(h, config.n, "input h")

    out = h @ W_base.T + ((h @ weights.A1.T) @ weights.W1.T) @ weights.B1.T
    core = pblora_core(weights, alpha)
    z = h @ weights.A2.T
    if core.dim() == 2:
        z = z @ core.T
    else:
        # batched alpha: (B, r2, r2) against (B, ..., r2)
        z = torch.einsum("b...j,bij->b...i", z, core)
    out = out + z @ weights.B2.T
    if b is not None:
        out = out + b
    return out


def merge(
    weights: MoSLoRAWeights,
    W_base: torch.Tensor,
    b: torch.Tensor | None,
    o_mixed: torch.Tensor,
) -> MergedLayer:
    config = config_of(weights)
    check_shapes(weights, config)
    _check_base(W_base, b, config)
    if tuple(o_mixed.shape) != (config.n,):
        raise ShapeError(f"o_mixed must be a single vector of length {config.n}, got {tuple(o_mixed.shape)}")
    gamma, eta = modulation(weights, o_mixed)
    W_shared = W_base + weights.B1 @ weights.W1 @ weights.A1
    W_tilde = (gamma + 1.0).unsqueeze(-1) * W_shared
    bias = eta if b is None else b + eta
    return MergedLayer(weight=W_tilde, bias=bias)


def param_count(config: AdapterConfig, kind: AdapterKind = "moslora", k: int = 1) -> int:
    base = (config.m + config.n) * (config.r1 + config.r2) + config.r1**2
    if kind == "moslora":
        return base + 2 * config.r2**2
    if kind == "pblora":
        return base + k * config.r2**2
    raise ValueError(f"unknown adapter kind {kind!r}")


def count_entries(weights) -> int:
    return sum(t.numel() for t in tensors(weights).values())


def init(
    config: AdapterConfig,
    kind: AdapterKind = "moslora",
    k: int = 2,
    seed: int = 0,
    dtype: torch.dtype = torch.float64,
) -> MoSLoRAWeights | PBLoRAWeights:
    """B matrices start at zero so the adapted layer equals the base layer."""
    gen = torch.Generator().manual_seed(seed)
    m, n, r1, r2 = config.m, config.n, config.r1, config.r2

    def normal(*shape, scale):
        return torch.randn(*shape, generator=gen, dtype=dtype) * scale

    def core_scale(r):
        return 1.0 / math.sqrt(r) if r else 1.0

    A1 = normal(r1, n, scale=1 / math.sqrt(n))
    W1 = normal(r1, r1, scale=core_scale(r1))
    B1 = torch.zeros(m, r1, dtype=dtype)
    A2 = normal(r2, n, scale=1 / math.sqrt(n))
    B2 = torch.zeros(m, r2, dtype=dtype)
    if kind == "moslora":
        W_gamma = normal(r2, r2, scale=core_scale(r2))
        W_eta = normal(r2, r2, scale=core_scale(r2))
        return MoSLoRAWeights(A1=A1, W1=W1, B1=B1, A2=A2, B2=B2, W_gamma=W_gamma, W_eta=W_eta)
    if kind == "pblora":
        if k < 1:
            raise ValueError("pblora needs k >= 1 cores")
        W2 = normal(k, r2, r2, scale=core_scale(r2))
        return PBLoRAWeights(A1=A1, W1=W1, B1=B1, A2=A2, B2=B2, W2=W2)
    raise ValueError(f"unknown adapter kind {kind!r}")


class AdaptedLinear(nn.Module):
    """A frozen ``nn.Linear`` plus a trainable MoSLoRA or PBLoRA adapter."""

    def __init__(self, base: nn.Linear, weights: MoSLoRAWeights | PBLoRAWeights):
        super().__init__()
        self.base = base
        for p in self.base.parameters():
            p.requires_grad_(False)
        self.kind: AdapterKind = "moslora" if isinstance(weights, MoSLoRAWeights) else "pblora"
        self.config = config_of(weights)
        if (self.config.m, self.config.n) != (base.out_features, base.in_features):
            raise ShapeError(
                f"adapter is {self.config.m}x{self.config.n}, base layer is "
                f"{base.out_features}x{base.in_features}"
            )
        for name, t in tensors(weights).items():
            setattr(self, name, nn.Parameter(t.clone()))

    def weights(self) -> MoSLoRAWeights | PBLoRAWeights:
        cls = MoSLoRAWeights if self.kind == "moslora" else PBLoRAWeights
        return cls(**{f.name: getattr(self, f.name) for f in fields(cls)})

    def forward(self, h, o_mixed=None, alpha=None):
        if self.kind == "moslora":
            if o_mixed is None:
                raise ValueError("MoSLoRA adapter requires a mixed preference vector o_mixed")
            return moslora_forward(self.weights(), self.base.weight, self.base.bias, h, o_mixed)
        if alpha is None:
            raise ValueError("PBLoRA adapter requires a preference vector alpha")
        return pblora_forward(self.weights(), self.base.weight, self.base.bias, h, alpha)

    def merged(self, o_mixed: torch.Tensor) -> MergedLayer:
        if self.kind != "moslora":
            raise ValueError("only MoSLoRA adapters support merging by o_mixed")
        return merge(self.weights(), self.base.weight, self.base.bias, o_mixed)
