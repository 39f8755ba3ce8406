"""Versioned checkpoint container.

Layout::

    b"UNIARMCK"                 magic, 8 bytes
    uint32 LE                   format version
    uint64 LE                   header length in bytes
    header                      UTF-8 JSON (sorted keys): configs, seeds and a
                                tensor manifest of (name, shape, offset)
    tensor blocks               little-endian float64, offsets relative to
                                the first byte after the header
"""

from __future__ import annotations

import copy
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch
from torch import nn

from . import model as M

MAGIC = b"UNIARMCK"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    model_config: M.ModelConfig
    base: dict[str, torch.Tensor]
    adapter_kind: Optional[str] = None  # "moslora" | "pblora" | "merged" | None
    adapter_spec: Optional[M.AdapterSpec] = None
    adapter: dict[str, torch.Tensor] = field(default_factory=dict)
    embeddings: Optional[torch.Tensor] = None  # (k, d_model)
    descriptions: tuple[str, ...] = ()
    train_seed: int = 0
    steps: int = 0
    preference_lock: Optional[tuple[float, ...]] = None
    format_version: int = FORMAT_VERSION

    @property
    def k(self) -> Optional[int]:
        if self.embeddings is not None:
            return int(self.embeddings.shape[0])
        return self.adapter_spec.k if self.adapter_spec else None

    def _header(self) -> dict:
        return {
            "model_config": self.model_config.to_dict(),
            "adapter_kind": self.adapter_kind,
            "adapter_spec": asdict(self.adapter_spec) if self.adapter_spec else None,
            "descriptions": list(self.descriptions),
            "train_seed": self.train_seed,
            "steps": self.steps,
            "preference_lock": list(self.preference_lock) if self.preference_lock is not None else None,
        }

    def _tensors(self) -> list[tuple[str, torch.Tensor]]:
        out = [(f"base/{n}", t) for n, t in sorted(self.base.items())]
        out += [(f"adapter/{n}", t) for n, t in sorted(self.adapter.items())]
        if self.embeddings is not None:
            out.append(("objectives/embeddings", self.embeddings))
        return out


def to_bytes(ck: Checkpoint) -> bytes:
    header = ck._header()
    manifest, blocks, offset = [], [], 0
    for name, t in ck._tensors():
        arr = t.detach().to(torch.float64).contiguous().numpy().astype("<f8", copy=False)
        manifest.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blocks.append(arr.tobytes())
        offset += arr.nbytes
    header["tensors"] = manifest
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<IQ", ck.format_version, len(hbytes)) + hbytes + b"".join(blocks)


def from_bytes(data: bytes) -> Checkpoint:
    if data[:8] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    version, hlen = struct.unpack("<IQ", data[8:20])
    if version != FORMAT_VERSION:
        raise CheckpointError(f"checkpoint format version {version} is not supported (expected {FORMAT_VERSION})")
    header = json.loads(data[20 : 20 + hlen].decode("utf-8"))
    body = data[20 + hlen :]
    cfg = M.ModelConfig(**header["model_config"])
    base, adapter, emb = {}, {}, None
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(body, dtype="<f8", count=count, offset=start).reshape(shape)
        t = torch.from_numpy(arr.copy()).to(cfg.dtype)
        kind, _, name = entry["name"].partition("/")
        if kind == "base":
            base[name] = t
        elif kind == "adapter":
            adapter[name] = t
        elif entry["name"] == "objectives/embeddings":
            emb = t
        else:
            raise CheckpointError(f"unknown tensor {entry['name']!r} in manifest")
    spec = header["adapter_spec"]
    lock = header["preference_lock"]
    return Checkpoint(
        model_config=cfg,
        base=base,
        adapter_kind=header["adapter_kind"],
        adapter_spec=M.AdapterSpec(**spec) if spec else None,
        adapter=adapter,
        embeddings=emb,
        descriptions=tuple(header["descriptions"]),
        train_seed=header["train_seed"],
        steps=header["steps"],
        preference_lock=tuple(lock) if lock is not None else None,
        format_version=version,
    )


def save(ck: Checkpoint, path: str | Path) -> None:
    Path(path).write_bytes(to_bytes(ck))


def load(path: str | Path) -> Checkpoint:
    return from_bytes(Path(path).read_bytes())


def from_models(
    base: M.TinyLM,
    arm: Optional[M.TinyLM] = None,
    spec: Optional[M.AdapterSpec] = None,
    embeddings: Optional[torch.Tensor] = None,
    descriptions=(),
    train_seed: int = 0,
    steps: int = 0,
) -> Checkpoint:
    ck = Checkpoint(
        model_config=base.config,
        base={n: t.detach().clone() for n, t in M.base_state(base).items()},
        embeddings=None if embeddings is None else embeddings.detach().clone(),
        descriptions=tuple(descriptions),
        train_seed=train_seed,
        steps=steps,
    )
    if arm is not None:
        if arm.preference_lock is not None:
            ck.adapter_kind = "merged"
            ck.preference_lock = arm.preference_lock
            ck.adapter_spec = spec
            ck.adapter = {
                f"blocks.{i}.{p}.{leaf}": getattr(getattr(b, p), leaf).detach().clone()
                for i, b in enumerate(arm.blocks)
                for p in M.ADAPTED_PROJECTIONS
                for leaf in ("weight", "bias")
            }
        else:
            ck.adapter_kind = arm.adapter_kind
            ck.adapter_spec = spec
            ck.adapter = {n: t.clone() for n, t in M.adapter_state(arm).items()}
    return ck


def build_models(ck: Checkpoint) -> tuple[M.TinyLM, Optional[M.TinyLM]]:
    """(frozen base model, reward model or None) reconstructed from a checkpoint."""
    base = M.TinyLM(ck.model_config).to(ck.model_config.dtype)
    missing = set(base.state_dict()) ^ set(ck.base)
    if missing:
        raise CheckpointError(f"base tensors do not match the model config: {sorted(missing)[:5]}")
    base.load_state_dict(ck.base)
    base.requires_grad_(False)
    if ck.adapter_kind is None:
        return base, None
    if ck.adapter_kind == "merged":
        arm = copy.deepcopy(base)
        with torch.no_grad():
            for name, t in ck.adapter.items():
                prefix, _, leaf = name.rpartition(".")
                layer = arm.get_submodule(prefix)
                getattr(layer, leaf).copy_(t)
        arm.preference_lock = ck.preference_lock
        return base, arm
    if ck.adapter_spec is None:
        raise CheckpointError("adapter checkpoint is missing its adapter spec")
    arm = M.with_adapters(base, ck.adapter_spec)
    layers = arm.adapter_layers()
    with torch.no_grad():
        for name, t in ck.adapter.items():
            prefix, _, leaf = name.rpartition(".")
            if prefix not in layers:
                raise CheckpointError(f"adapter tensor {name!r} has no matching layer")
            p: nn.Parameter = getattr(layers[prefix], leaf)
            if p.shape != t.shape:
                raise CheckpointError(f"adapter tensor {name!r} has shape {tuple(t.shape)}, expected {tuple(p.shape)}")
            p.copy_(t)
    return base, arm
