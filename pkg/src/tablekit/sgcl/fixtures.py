"""Seeded toy instances for numerically verifying the localization module.

An instance bundles random-but-valid decoder states, feature pyramids, td
token spans, and a small table layout (6 cells drawn from a few templates,
most containing a span cell) together with its supervision targets.
Instances serialize to a single JSON dump so verification runs are
reproducible from files alone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import torch

from ..geometry import LogicalCoords
from .params import SgclParams
from .types import (
    AdjacencyTargets,
    FeatureMap,
    HiddenStates,
    SgclConfig,
    SgclInputs,
    SgclTargets,
    TokenSpanIndex,
    adjacency_targets,
)
from .forward import mask_targets

FIXTURE_VERSION = 1

# Six-cell layouts on small grids; all but the first contain a span cell.
_LAYOUTS: tuple[tuple[tuple[int, int, int, int], ...], ...] = (
    # 2x3, all unit cells
    ((0, 0, 0, 0), (0, 0, 1, 1), (0, 0, 2, 2), (1, 1, 0, 0), (1, 1, 1, 1), (1, 1, 2, 2)),
    # 3x3 with a 2x2 span
    ((0, 1, 0, 1), (0, 0, 2, 2), (1, 1, 2, 2), (2, 2, 0, 0), (2, 2, 1, 1), (2, 2, 2, 2)),
    # 2x4 with two horizontal spans
    ((0, 0, 0, 1), (0, 0, 2, 2), (0, 0, 3, 3), (1, 1, 0, 0), (1, 1, 1, 1), (1, 1, 2, 3)),
    # 4x2 with two vertical spans
    ((0, 1, 0, 0), (0, 0, 1, 1), (1, 1, 1, 1), (2, 2, 0, 0), (2, 3, 1, 1), (3, 3, 0, 0)),
)

N_TOKENS = 40


@dataclass
class ToyInstance:
    params: SgclParams
    inputs: SgclInputs
    targets: SgclTargets

    @property
    def config(self) -> SgclConfig:
        return self.params.config


def _layout_boxes(
    logicals: tuple[LogicalCoords, ...], gen: torch.Generator
) -> torch.Tensor:
    """Corner boxes from a random monotone partition of the unit square."""
    rows = max(lg.end_row for lg in logicals) + 1
    cols = max(lg.end_col for lg in logicals) + 1
    row_cuts = torch.sort(torch.rand(rows - 1, generator=gen, dtype=torch.float64)).values
    col_cuts = torch.sort(torch.rand(cols - 1, generator=gen, dtype=torch.float64)).values
    row_bounds = [0.0] + [0.1 + 0.8 * float(v) for v in row_cuts] + [1.0]
    col_bounds = [0.0] + [0.1 + 0.8 * float(v) for v in col_cuts] + [1.0]
    boxes = []
    for lg in logicals:
        boxes.append(
            [
                col_bounds[lg.start_col],
                row_bounds[lg.start_row],
                col_bounds[lg.end_col + 1],
                row_bounds[lg.end_row + 1],
            ]
        )
    return torch.tensor(boxes, dtype=torch.float64)


def _spans(gen: torch.Generator, n_cells: int) -> TokenSpanIndex:
    spans = []
    for i in range(n_cells):
        start = 2 + 6 * i
        length = int(torch.randint(1, 5, (1,), generator=gen)) + 1
        spans.append((start, start + length - 1))
    return TokenSpanIndex(spans=tuple(spans), n_tokens=N_TOKENS)


def make_toy_instance(
    seed: int = 0, cfg: SgclConfig = SgclConfig(), layout_index: int | None = None
) -> ToyInstance:
    """Deterministic toy instance (N=6 cells) for invariant and grad checks."""
    gen = torch.Generator().manual_seed(seed)
    params = SgclParams.init(cfg, seed=seed ^ 0x5EED)

    raw_layout = _LAYOUTS[
        int(torch.randint(len(_LAYOUTS), (1,), generator=gen)) if layout_index is None
        else layout_index % len(_LAYOUTS)
    ]
    logicals = tuple(LogicalCoords(*entry) for entry in raw_layout)

    inputs = SgclInputs(
        p3=FeatureMap(torch.randn(cfg.p3_channels, cfg.p3_height, cfg.p3_width, generator=gen, dtype=torch.float64)),
        p4=FeatureMap(torch.randn(cfg.p4_channels, cfg.p4_height, cfg.p4_width, generator=gen, dtype=torch.float64)),
        p5=FeatureMap(torch.randn(cfg.p5_channels, cfg.p5_height, cfg.p5_width, generator=gen, dtype=torch.float64)),
        hidden=HiddenStates(torch.randn(cfg.decoder_layers, N_TOKENS, cfg.d_model, generator=gen, dtype=torch.float64)),
        spans=_spans(gen, len(logicals)),
        token_logits=torch.randn(N_TOKENS, cfg.vocab_size, generator=gen, dtype=torch.float64),
    )
    boxes = _layout_boxes(logicals, gen)
    targets = SgclTargets(
        token_ids=torch.randint(cfg.vocab_size, (N_TOKENS,), generator=gen),
        boxes=boxes,
        mask=mask_targets(boxes, cfg.p4_height, cfg.p4_width),
        adjacency=adjacency_targets(list(logicals)),
        logicals=logicals,
    )
    return ToyInstance(params=params, inputs=inputs, targets=targets)


def _dump_tensor(t: torch.Tensor) -> dict:
    return {"shape": list(t.shape), "data": t.reshape(-1).tolist()}


def _load_tensor(rec: dict, dtype=torch.float64) -> torch.Tensor:
    return torch.tensor(rec["data"], dtype=dtype).reshape(rec["shape"])


def save_instance(path: str | Path, inst: ToyInstance) -> None:
    from dataclasses import asdict

    payload = {
        "version": FIXTURE_VERSION,
        "config": asdict(inst.config),
        "params": {k: _dump_tensor(v) for k, v in inst.params.tensors.items()},
        "inputs": {
            "p3": _dump_tensor(inst.inputs.p3.data),
            "p4": _dump_tensor(inst.inputs.p4.data),
            "p5": _dump_tensor(inst.inputs.p5.data),
            "hidden": _dump_tensor(inst.inputs.hidden.data),
            "token_logits": _dump_tensor(inst.inputs.token_logits),
            "spans": [list(s) for s in inst.inputs.spans.spans],
            "n_tokens": inst.inputs.spans.n_tokens,
        },
        "targets": {
            "token_ids": inst.targets.token_ids.tolist(),
            "boxes": _dump_tensor(inst.targets.boxes),
            "mask": _dump_tensor(inst.targets.mask),
            "adjacency_row": _dump_tensor(inst.targets.adjacency.row),
            "adjacency_col": _dump_tensor(inst.targets.adjacency.col),
            "logicals": [
                [lg.start_row, lg.end_row, lg.start_col, lg.end_col]
                for lg in inst.targets.logicals
            ],
        },
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True))


def load_instance(path: str | Path) -> ToyInstance:
    payload = json.loads(Path(path).read_text())
    if payload.get("version") != FIXTURE_VERSION:
        raise ValueError(f"unsupported fixture version {payload.get('version')}")
    cfg = SgclConfig(**payload["config"])
    params = SgclParams(cfg, {k: _load_tensor(v) for k, v in payload["params"].items()})
    raw_inputs = payload["inputs"]
    inputs = SgclInputs(
        p3=FeatureMap(_load_tensor(raw_inputs["p3"])),
        p4=FeatureMap(_load_tensor(raw_inputs["p4"])),
        p5=FeatureMap(_load_tensor(raw_inputs["p5"])),
        hidden=HiddenStates(_load_tensor(raw_inputs["hidden"])),
        spans=TokenSpanIndex(
            spans=tuple(tuple(s) for s in raw_inputs["spans"]),
            n_tokens=raw_inputs["n_tokens"],
        ),
        token_logits=_load_tensor(raw_inputs["token_logits"]),
    )
    raw_targets = payload["targets"]
    logicals = tuple(LogicalCoords(*rec) for rec in raw_targets["logicals"])
    targets = SgclTargets(
        token_ids=torch.tensor(raw_targets["token_ids"], dtype=torch.int64),
        boxes=_load_tensor(raw_targets["boxes"]),
        mask=_load_tensor(raw_targets["mask"]),
        adjacency=AdjacencyTargets(
            row=_load_tensor(raw_targets["adjacency_row"]),
            col=_load_tensor(raw_targets["adjacency_col"]),
        ),
        logicals=logicals,
    )
    return ToyInstance(params=params, inputs=inputs, targets=targets)
