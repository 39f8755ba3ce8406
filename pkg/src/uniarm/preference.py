"""Preference vectors on the simplex, objective embeddings and sweep grids."""

from __future__ import annotations

import itertools
import zlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch

SIMPLEX_TOL = 1e-12


@dataclass(frozen=True)
class PreferenceVector:
    alpha: tuple[float, ...]

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=float)
        if a.ndim != 1 or a.size < 1:
            raise ValueError("alpha must be a nonempty vector")
        if np.any(a < 0) or abs(a.sum() - 1.0) > SIMPLEX_TOL:
            raise ValueError(f"alpha {tuple(a)} is not on the simplex")
        object.__setattr__(self, "alpha", tuple(float(x) for x in a))

    @property
    def k(self) -> int:
        return len(self.alpha)

    def __len__(self):
        return len(self.alpha)

    def __iter__(self):
        return iter(self.alpha)

    def as_tensor(self, dtype=torch.float64) -> torch.Tensor:
        return torch.tensor(self.alpha, dtype=dtype)


@dataclass(frozen=True)
class ObjectiveEmbedding:
    vector: torch.Tensor
    description: str


def tokenize(text: str, vocab_size: int) -> list[int]:
    """Deterministic word-hash tokenizer; never emits the reserved id 0."""
    words = text.lower().split()
    return [zlib.crc32(w.encode("utf-8")) % (vocab_size - 1) + 1 for w in words]


def embed_objective(description: str, model) -> ObjectiveEmbedding:
    """Mean-pool the base embedding rows of the description's tokens."""
    if not description or not description.strip():
        raise ValueError("objective description must be nonempty")
    table = model.tok_emb.weight.detach()
    ids = tokenize(description, table.shape[0])
    return ObjectiveEmbedding(vector=table[ids].mean(dim=0).clone(), description=description)


def embed_tokens(token_ids: Sequence[int], model, description: str = "") -> ObjectiveEmbedding:
    table = model.tok_emb.weight.detach()
    if not len(token_ids):
        raise ValueError("need at least one token")
    return ObjectiveEmbedding(vector=table[list(token_ids)].mean(dim=0).clone(), description=description)


def stack(embeddings: Sequence[ObjectiveEmbedding]) -> torch.Tensor:
    if not embeddings:
        raise ValueError("no objective embeddings")
    sizes = {e.vector.shape for e in embeddings}
    if len(sizes) != 1:
        raise ValueError(f"objective embeddings differ in shape: {sorted(sizes)}")
    return torch.stack([e.vector for e in embeddings])


def mix(alpha, embeddings) -> torch.Tensor:
    """o' = sum_i alpha_i o_i. ``embeddings`` may be a (k, d) tensor or a list."""
    O = embeddings if isinstance(embeddings, torch.Tensor) else stack(embeddings)
    a = torch.as_tensor(tuple(alpha), dtype=O.dtype)
    if a.shape[-1] != O.shape[0]:
        raise ValueError(f"alpha has {a.shape[-1]} entries but there are {O.shape[0]} objective embeddings")
    return a @ O


def sample_simplex(k: int, seed: int | np.random.Generator) -> PreferenceVector:
    """Uniform draw from the (k-1)-simplex via a symmetric Dirichlet(1)."""
    if k < 2:
        raise ValueError("need k >= 2 objectives to sample a preference vector")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    a = rng.dirichlet(np.ones(k))
    # renormalise so the sum is exactly 1 within SIMPLEX_TOL
    a = a / a.sum()
    return PreferenceVector(tuple(a))


def _compositions(total: int, parts: int):
    for cut in itertools.combinations(range(total + parts - 1), parts - 1):
        bounds = (-1, *cut, total + parts - 1)
        yield tuple(bounds[i + 1] - bounds[i] - 1 for i in range(parts))


def _normalized(counts: Sequence[int], steps: int) -> PreferenceVector:
    return PreferenceVector(tuple(c / steps for c in counts))


def sweep_grid(k: int, scheme: str = "default") -> list[PreferenceVector]:
    """Evaluation sweep: 11 points for k=2, 30 edge + 6 interior points for k=3."""
    if scheme != "default":
        raise ValueError(f"unknown sweep scheme {scheme!r}")
    if k == 2:
        return [_normalized((i, 10 - i), 10) for i in range(11)]
    if k == 3:
        edge = []
        seen = set()
        for counts in _compositions(10, 3):
            if 0 in counts and counts not in seen:
                seen.add(counts)
                edge.append(_normalized(counts, 10))
        interior = [_normalized(c, 5) for c in _compositions(5, 3) if 0 not in c]
        return edge + interior
    raise ValueError(f"sweep protocol defined only for k in (2, 3), got {k}")
