"""Parameter container for the cell localization module.

Parameters live in a flat name -> float64 tensor mapping so they can be
serialized to a versioned text file with an explicit shape header and
flattened into a single vector for gradient checking.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import torch

from .types import SgclConfig

FORMAT_VERSION = 1

_ATTN_MATS = ("q_w", "k_w", "v_w", "o_w")
_ATTN_VECS = ("q_b", "k_b", "v_b", "o_b")


def _attn_shapes(prefix: str, d: int) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    for m in _ATTN_MATS:
        shapes[f"{prefix}_{m}"] = (d, d)
    for v in _ATTN_VECS:
        shapes[f"{prefix}_{v}"] = (d,)
    return shapes


def parameter_shapes(cfg: SgclConfig) -> dict[str, tuple[int, ...]]:
    d = cfg.d_model
    shapes: dict[str, tuple[int, ...]] = {
        "layer_weights": (cfg.decoder_layers,),
        "p3_main_w": (d, cfg.p3_channels),
        "p3_main_b": (d,),
        "p3_up_w": (d, cfg.p4_channels),
        "p3_up_b": (d,),
        "p4_main_w": (d, cfg.p4_channels),
        "p4_main_b": (d,),
        "p4_up_w": (d, cfg.p5_channels),
        "p4_up_b": (d,),
        "pos_table": (cfg.p4_height, cfg.p4_width, d),
        "row_proj_w": (d, d),
        "row_proj_b": (d,),
        "col_proj_w": (d, d),
        "col_proj_b": (d,),
        "reg_w1": (d, d),
        "reg_b1": (d,),
        "reg_w2": (4, d),
        "reg_b2": (4,),
        "mask_proj_w": (d, d),
        "mask_proj_b": (d,),
    }
    for branch in ("row", "col"):
        for block in ("self1", "self2", "cross"):
            shapes.update(_attn_shapes(f"{branch}_{block}", d))
    for layer in range(cfg.refine_layers):
        shapes.update(_attn_shapes(f"ref{layer}_attn", d))
        shapes[f"ref{layer}_delta_w1"] = (d, d)
        shapes[f"ref{layer}_delta_b1"] = (d,)
        shapes[f"ref{layer}_delta_w2"] = (4, d)
        shapes[f"ref{layer}_delta_b2"] = (4,)
    return shapes


class SgclParams:
    """Named float64 parameter tensors plus the shape configuration."""

    def __init__(self, config: SgclConfig, tensors: dict[str, torch.Tensor]) -> None:
        expected = parameter_shapes(config)
        if set(tensors) != set(expected):
            missing = set(expected) - set(tensors)
            extra = set(tensors) - set(expected)
            raise ValueError(f"parameter names mismatch: missing={missing} extra={extra}")
        for name, shape in expected.items():
            if tuple(tensors[name].shape) != shape:
                raise ValueError(
                    f"{name}: expected shape {shape}, got {tuple(tensors[name].shape)}"
                )
        self.config = config
        self.tensors = {k: tensors[k].to(torch.float64) for k in sorted(tensors)}

    def __getitem__(self, name: str) -> torch.Tensor:
        return self.tensors[name]

    def clone(self) -> "SgclParams":
        return SgclParams(self.config, {k: v.detach().clone() for k, v in self.tensors.items()})

    @staticmethod
    def init(config: SgclConfig, seed: int = 0, scale: float = 0.25) -> "SgclParams":
        """Deterministic random initialization (small scale keeps attention tame)."""
        gen = torch.Generator().manual_seed(seed)
        tensors = {}
        for name, shape in parameter_shapes(config).items():
            fan_in = shape[-1] if len(shape) > 1 else max(shape[0], 1)
            std = scale / (fan_in ** 0.5)
            tensors[name] = torch.randn(shape, generator=gen, dtype=torch.float64) * std
        return SgclParams(config, tensors)

    # -- serialization ---------------------------------------------------

    def save(self, path: str | Path) -> None:
        payload = {
            "version": FORMAT_VERSION,
            "config": asdict(self.config),
            "tensors": {
                name: {"shape": list(t.shape), "data": t.reshape(-1).tolist()}
                for name, t in self.tensors.items()
            },
        }
        Path(path).write_text(json.dumps(payload, sort_keys=True))

    @staticmethod
    def load(path: str | Path) -> "SgclParams":
        payload = json.loads(Path(path).read_text())
        if payload.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported parameter file version {payload.get('version')}")
        config = SgclConfig(**payload["config"])
        tensors = {}
        for name, rec in payload["tensors"].items():
            tensors[name] = torch.tensor(rec["data"], dtype=torch.float64).reshape(rec["shape"])
        return SgclParams(config, tensors)

    # -- flattening for gradient checks -----------------------------------

    def flat_names(self) -> list[str]:
        return list(self.tensors)  # already sorted

    def flatten(self) -> torch.Tensor:
        return torch.cat([self.tensors[n].reshape(-1) for n in self.flat_names()])

    def unflatten(self, vector: torch.Tensor) -> dict[str, torch.Tensor]:
        """Views into `vector` shaped like the parameters (autograd-friendly)."""
        out = {}
        offset = 0
        for name in self.flat_names():
            shape = self.tensors[name].shape
            size = self.tensors[name].numel()
            out[name] = vector[offset : offset + size].reshape(shape)
            offset += size
        if offset != vector.numel():
            raise ValueError("vector length does not match parameter count")
        return out
