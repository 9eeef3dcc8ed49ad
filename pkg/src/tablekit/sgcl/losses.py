"""Training losses for the localization module and their composition.

Five terms: token cross-entropy, box L1 regression, box GIoU, mask
alignment (binary cross-entropy plus dice, per cell), and the structure
loss (BCE on the row/column relationship logits, diagonal excluded). The
total is the coefficient-weighted sum.
"""

from __future__ import annotations

import math

import torch

from .forward import SgclOutputs
from .types import AdjacencyTargets, LossWeights, SgclTargets


def loss_cross_entropy(token_logits: torch.Tensor, token_ids: torch.Tensor) -> torch.Tensor:
    """Mean next-token cross-entropy over the provided positions."""
    log_probs = token_logits - torch.logsumexp(token_logits, dim=1, keepdim=True)
    picked = log_probs.gather(1, token_ids[:, None].to(torch.int64)).squeeze(1)
    return -picked.mean()


def loss_l1(pred_boxes: torch.Tensor, gt_boxes: torch.Tensor) -> torch.Tensor:
    """Mean absolute corner difference (mean over cells of the per-box mean)."""
    return (pred_boxes - gt_boxes).abs().mean()


def pairwise_giou(pred: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    """Elementwise GIoU of aligned corner-form boxes."""
    inter_w = (torch.minimum(pred[:, 2], gt[:, 2]) - torch.maximum(pred[:, 0], gt[:, 0])).clamp(min=0)
    inter_h = (torch.minimum(pred[:, 3], gt[:, 3]) - torch.maximum(pred[:, 1], gt[:, 1])).clamp(min=0)
    inter = inter_w * inter_h
    area_p = (pred[:, 2] - pred[:, 0]) * (pred[:, 3] - pred[:, 1])
    area_g = (gt[:, 2] - gt[:, 0]) * (gt[:, 3] - gt[:, 1])
    union = area_p + area_g - inter
    enclose = (torch.maximum(pred[:, 2], gt[:, 2]) - torch.minimum(pred[:, 0], gt[:, 0])) * (
        torch.maximum(pred[:, 3], gt[:, 3]) - torch.minimum(pred[:, 1], gt[:, 1])
    )
    eps = 1e-12
    iou = inter / (union + eps)
    return iou - (enclose - union) / (enclose + eps)


def loss_giou(pred_boxes: torch.Tensor, gt_boxes: torch.Tensor) -> torch.Tensor:
    return (1.0 - pairwise_giou(pred_boxes, gt_boxes)).mean()


def _bce_with_logits(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    # Stable form: max(x, 0) - x*t + log(1 + exp(-|x|))
    return logits.clamp(min=0) - logits * targets + torch.log1p(torch.exp(-logits.abs()))


def loss_mask(mask_logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Per-cell BCE plus dice between sigmoid score maps and binary targets."""
    probs = torch.sigmoid(mask_logits)
    bce = _bce_with_logits(mask_logits, targets).mean(dim=(1, 2))
    inter = (probs * targets).sum(dim=(1, 2))
    denom = probs.sum(dim=(1, 2)) + targets.sum(dim=(1, 2))
    dice = 1.0 - (2.0 * inter + 1.0) / (denom + 1.0)
    return (bce + dice).mean()


def loss_structure(
    logits_row: torch.Tensor, logits_col: torch.Tensor, targets: AdjacencyTargets
) -> torch.Tensor:
    """BCE over both relationship matrices, self-pairs excluded."""
    n = logits_row.shape[0]
    off_diag = ~torch.eye(n, dtype=torch.bool)
    values = torch.cat(
        [
            _bce_with_logits(logits_row[off_diag], targets.row[off_diag]),
            _bce_with_logits(logits_col[off_diag], targets.col[off_diag]),
        ]
    )
    if values.numel() == 0:
        return logits_row.sum() * 0.0
    return values.mean()


def combine_losses(terms: dict[str, float], weights: LossWeights = LossWeights()) -> float:
    """Exact weighted sum of the five component losses (fsum, order-free)."""
    return math.fsum(
        [
            weights.ce * terms["ce"],
            weights.b * terms["b"],
            weights.iou * terms["iou"],
            weights.m * terms["m"],
            weights.s * terms["s"],
        ]
    )


def loss_total(
    token_logits: torch.Tensor,
    outputs: SgclOutputs,
    targets: SgclTargets,
    weights: LossWeights = LossWeights(),
) -> tuple[torch.Tensor, dict[str, float]]:
    """Weighted fine-tuning loss and its per-term breakdown.

    The returned tensor carries gradients; the breakdown holds the term
    values plus the exactly-composed total ("total").
    """
    n = outputs.boxes.shape[0]
    if targets.boxes.shape[0] != n or targets.mask.shape[0] != n:
        raise ValueError("target bundle not aligned with predictions")
    if targets.token_ids.shape[0] != token_logits.shape[0]:
        raise ValueError("token targets not aligned with logits")

    terms = {
        "ce": loss_cross_entropy(token_logits, targets.token_ids),
        "b": loss_l1(outputs.boxes, targets.boxes),
        "iou": loss_giou(outputs.boxes, targets.boxes),
        "m": loss_mask(outputs.mask_logits, targets.mask),
        "s": loss_structure(outputs.logits_row, outputs.logits_col, targets.adjacency),
    }
    total = (
        weights.ce * terms["ce"]
        + weights.b * terms["b"]
        + weights.iou * terms["iou"]
        + weights.m * terms["m"]
        + weights.s * terms["s"]
    )
    breakdown = {key: float(value.detach()) for key, value in terms.items()}
    breakdown["total"] = combine_losses(breakdown, weights)
    return total, breakdown
