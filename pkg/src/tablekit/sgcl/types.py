"""Dense numeric containers for the structure-guided cell localization module.

Everything is double precision so gradient checks against central finite
differences are meaningful at tight tolerances.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch

from ..geometry import LogicalCoords


@dataclass(frozen=True)
class SgclConfig:
    """Shape configuration of the localization module.

    d_model must be divisible by 8 so sine encodings of anchor boxes
    (4 scalars) and of 2-D pixel positions (2 scalars) tile it evenly.
    """

    d_model: int = 16
    decoder_layers: int = 3
    vocab_size: int = 12
    p3_channels: int = 8
    p4_channels: int = 12
    p5_channels: int = 16
    p4_height: int = 8
    p4_width: int = 8
    refine_layers: int = 3
    pe_temperature: float = 10000.0

    def __post_init__(self) -> None:
        if self.d_model % 8 != 0:
            raise ValueError("d_model must be divisible by 8")

    @property
    def p3_height(self) -> int:
        return self.p4_height * 2

    @property
    def p3_width(self) -> int:
        return self.p4_width * 2

    @property
    def p5_height(self) -> int:
        return self.p4_height // 2

    @property
    def p5_width(self) -> int:
        return self.p4_width // 2


@dataclass(frozen=True)
class FeatureMap:
    """Dense channels x height x width feature tensor."""

    data: torch.Tensor

    def __post_init__(self) -> None:
        if self.data.ndim != 3:
            raise ValueError("feature map must be (channels, height, width)")
        if not torch.isfinite(self.data).all():
            raise ValueError("feature map contains non-finite values")

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class HiddenStates:
    """Stacked decoder hidden states, one tokens x d matrix per layer."""

    data: torch.Tensor  # (layers, tokens, d)

    def __post_init__(self) -> None:
        if self.data.ndim != 3:
            raise ValueError("hidden states must be (layers, tokens, d)")

    @property
    def layers(self) -> int:
        return self.data.shape[0]

    @property
    def tokens(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class TokenSpanIndex:
    """Per-cell inclusive (start, end) token positions of the cell markup."""

    spans: tuple[tuple[int, int], ...]
    n_tokens: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "spans", tuple(tuple(s) for s in self.spans))
        prev_end = -1
        for start, end in self.spans:
            if not (0 <= start <= end < self.n_tokens):
                raise ValueError(f"span ({start},{end}) outside token range")
            if start <= prev_end:
                raise ValueError("spans must be ordered and non-overlapping")
            prev_end = end

    def __len__(self) -> int:
        return len(self.spans)


@dataclass(frozen=True)
class LossWeights:
    """Loss-term coefficients; defaults follow the balanced training recipe."""

    ce: float = 1.0
    b: float = 0.05
    iou: float = 0.03
    m: float = 0.03
    s: float = 0.05

    def __post_init__(self) -> None:
        if min(self.ce, self.b, self.iou, self.m, self.s) < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass(frozen=True)
class AdjacencyTargets:
    """Binary same-row / same-column matrices with forced unit diagonal."""

    row: torch.Tensor  # (N, N) float64
    col: torch.Tensor


def adjacency_targets(cells: list[LogicalCoords]) -> AdjacencyTargets:
    """Targets for the structure-relationship loss: 1 iff index ranges meet."""
    n = len(cells)
    row = torch.zeros((n, n), dtype=torch.float64)
    col = torch.zeros((n, n), dtype=torch.float64)
    for x in range(n):
        for y in range(n):
            if cells[x].rows_intersect(cells[y]):
                row[x, y] = 1.0
            if cells[x].cols_intersect(cells[y]):
                col[x, y] = 1.0
    row.fill_diagonal_(1.0)
    col.fill_diagonal_(1.0)
    return AdjacencyTargets(row=row, col=col)


@dataclass
class SgclInputs:
    """Everything the forward pass consumes besides the parameters."""

    p3: FeatureMap
    p4: FeatureMap
    p5: FeatureMap
    hidden: HiddenStates
    spans: TokenSpanIndex
    token_logits: torch.Tensor  # (tokens, vocab) decoder output logits


@dataclass
class SgclTargets:
    """Supervision bundle aligned with one forward pass."""

    token_ids: torch.Tensor  # (tokens,) int64
    boxes: torch.Tensor  # (N, 4) corner form
    mask: torch.Tensor  # (N, H4, W4) binary
    adjacency: AdjacencyTargets
    logicals: tuple[LogicalCoords, ...] = field(default=())
