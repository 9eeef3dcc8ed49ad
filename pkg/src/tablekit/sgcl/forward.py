"""Forward computation of structure-guided cell localization.

Pipeline: fuse adjacent feature-pyramid levels, aggregate decoder hidden
states across layers, pool per-cell representations over their td token
spans, derive row/column structure masks from projected inner products,
enhance cells with mask-guided bidirectional attention, regress initial
boxes, and refine them against multi-resolution visual tokens with
anchor-conditioned attention (one query per cell, no matching step).

All functions are pure given the parameter mapping; `params` may be an
SgclParams instance or any name -> tensor mapping with the same keys.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch

from .types import FeatureMap, HiddenStates, SgclConfig, SgclInputs, TokenSpanIndex


def conv1x1(x: torch.Tensor, weight: torch.Tensor, bias: torch.Tensor) -> torch.Tensor:
    """Per-pixel channel projection of a (C, H, W) map."""
    return torch.einsum("oc,chw->ohw", weight, x) + bias[:, None, None]


def upsample2x(x: torch.Tensor) -> torch.Tensor:
    """Nearest-neighbour 2x spatial upsampling of a (C, H, W) map."""
    return x.repeat_interleave(2, dim=-2).repeat_interleave(2, dim=-1)


def fuse_pyramid(
    p3: FeatureMap, p4: FeatureMap, p5: FeatureMap, params
) -> tuple[FeatureMap, FeatureMap]:
    """Fuse adjacent resolutions: each level plus its upsampled coarser one."""
    for fine, coarse in ((p3, p4), (p4, p5)):
        if fine.height != 2 * coarse.height or fine.width != 2 * coarse.width:
            raise ValueError("pyramid levels must halve in spatial size")
    p3p = conv1x1(p3.data, params["p3_main_w"], params["p3_main_b"]) + conv1x1(
        upsample2x(p4.data), params["p3_up_w"], params["p3_up_b"]
    )
    p4p = conv1x1(p4.data, params["p4_main_w"], params["p4_main_b"]) + conv1x1(
        upsample2x(p5.data), params["p4_up_w"], params["p4_up_b"]
    )
    return FeatureMap(p3p), FeatureMap(p4p)


def flatten_with_pos(p4p: FeatureMap, pos_table: torch.Tensor) -> torch.Tensor:
    """Row-major flatten of (features + learnable 2-D position embeddings)."""
    if pos_table.shape != (p4p.height, p4p.width, p4p.channels):
        raise ValueError("pos_table shape must be (height, width, channels)")
    return (p4p.data.permute(1, 2, 0) + pos_table).reshape(-1, p4p.channels)


def unflatten_tokens(tokens: torch.Tensor, height: int, width: int) -> torch.Tensor:
    return tokens.reshape(height, width, -1).permute(2, 0, 1)


def aggregate_layers(hidden: HiddenStates, layer_weights: torch.Tensor) -> torch.Tensor:
    """Convex combination of per-layer hidden states (softmax weights)."""
    if layer_weights.numel() != hidden.layers:
        raise ValueError("one weight per hidden-state layer required")
    w = torch.softmax(layer_weights, dim=0)
    return torch.einsum("l,ltd->td", w, hidden.data)


def pool_cells(h: torch.Tensor, spans: TokenSpanIndex) -> torch.Tensor:
    """Average-pool token rows over each cell's inclusive span."""
    if spans.n_tokens != h.shape[0]:
        raise ValueError("span index built for a different token count")
    return torch.stack([h[start : end + 1].mean(dim=0) for start, end in spans.spans])


def structure_masks(c: torch.Tensor, params):
    """Row/column structure masks from thresholded projected inner products.

    logits[x, y] = <proj(c_x), proj(c_y)> / proj_dim; the mask is logit > 0
    (sigmoid above one half) with the diagonal forced on.
    """
    out = []
    for k in ("row", "col"):
        ck = c @ params[f"{k}_proj_w"].T + params[f"{k}_proj_b"]
        logits = (ck @ ck.T) / float(ck.shape[1])
        mask = logits > 0
        mask = mask | torch.eye(c.shape[0], dtype=torch.bool)
        out.append((mask, logits))
    (m_row, logits_row), (m_col, logits_col) = out
    return m_row, m_col, logits_row, logits_col


def masked_attention(
    q: torch.Tensor, k: torch.Tensor, v: torch.Tensor, mask: torch.Tensor | None
) -> torch.Tensor:
    """Scaled dot-product attention; weights are exactly zero where masked."""
    scores = (q @ k.T) / math.sqrt(q.shape[1])
    if mask is not None:
        scores = scores.masked_fill(~mask, float("-inf"))
    return torch.softmax(scores, dim=1) @ v


def _attn_block(
    x: torch.Tensor,
    kv: torch.Tensor,
    params,
    prefix: str,
    mask: torch.Tensor | None = None,
    q_extra: torch.Tensor | None = None,
    k_extra: torch.Tensor | None = None,
) -> torch.Tensor:
    """Residual attention block; optional additive query/key position terms."""
    q_in = x if q_extra is None else x + q_extra
    k_in = kv if k_extra is None else kv + k_extra
    q = q_in @ params[f"{prefix}_q_w"].T + params[f"{prefix}_q_b"]
    k = k_in @ params[f"{prefix}_k_w"].T + params[f"{prefix}_k_b"]
    v = kv @ params[f"{prefix}_v_w"].T + params[f"{prefix}_v_b"]
    out = masked_attention(q, k, v, mask)
    return x + out @ params[f"{prefix}_o_w"].T + params[f"{prefix}_o_b"]


def enhance_cells(
    c: torch.Tensor,
    m_row: torch.Tensor,
    m_col: torch.Tensor,
    v: torch.Tensor,
    params,
) -> torch.Tensor:
    """Mask-guided bidirectional enhancement.

    Each branch runs two masked self-attention blocks over the cells (the
    branch's structure mask gates which cells may interact) followed by one
    cross-attention block reading the visual tokens; the result combines
    residually: c + row_branch(c) + col_branch(c).
    """

    def branch(name: str, mask: torch.Tensor) -> torch.Tensor:
        x = _attn_block(c, c, params, f"{name}_self1", mask=mask)
        x = _attn_block(x, x, params, f"{name}_self2", mask=mask)
        return _attn_block(x, v, params, f"{name}_cross")

    return c + branch("row", m_row) + branch("col", m_col)


def regress_initial(c_enh: torch.Tensor, params) -> tuple[torch.Tensor, torch.Tensor]:
    """Initial anchors from a 2-layer MLP.

    Returns (raw_logits, boxes): raw (cx, cy, w, h) logits kept for exact
    additive refinement, and the corner-form clipped boxes.
    """
    hidden = torch.tanh(c_enh @ params["reg_w1"].T + params["reg_b1"])
    raw = hidden @ params["reg_w2"].T + params["reg_b2"]
    return raw, anchors_to_corners(torch.sigmoid(raw))


def anchors_to_corners(cxcywh: torch.Tensor) -> torch.Tensor:
    cx, cy, w, h = cxcywh.unbind(dim=1)
    corners = torch.stack([cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2], dim=1)
    return corners.clamp(0.0, 1.0)


def sine_embedding(values: torch.Tensor, dim: int, temperature: float) -> torch.Tensor:
    """Sine/cosine features of scalar positions: (..., ) -> (..., dim)."""
    if dim % 2 != 0:
        raise ValueError("sine embedding dim must be even")
    exponents = torch.arange(dim // 2, dtype=torch.float64) * 2.0 / dim
    freqs = temperature ** exponents
    angles = values[..., None] / freqs
    return torch.cat([torch.sin(angles), torch.cos(angles)], dim=-1)


def anchor_position_encoding(
    cxcywh: torch.Tensor, d: int, temperature: float
) -> torch.Tensor:
    """Concatenated sine encodings of anchor center and size, one d-vector per box."""
    parts = [sine_embedding(cxcywh[:, i], d // 4, temperature) for i in range(4)]
    return torch.cat(parts, dim=1)


def grid_position_encoding(
    height: int, width: int, d: int, temperature: float
) -> torch.Tensor:
    """Sine encoding of pixel-center coordinates of an h x w grid, row-major."""
    ys = (torch.arange(height, dtype=torch.float64) + 0.5) / height
    xs = (torch.arange(width, dtype=torch.float64) + 0.5) / width
    y_grid = ys[:, None].expand(height, width).reshape(-1)
    x_grid = xs[None, :].expand(height, width).reshape(-1)
    return torch.cat(
        [
            sine_embedding(x_grid, d // 2, temperature),
            sine_embedding(y_grid, d // 2, temperature),
        ],
        dim=1,
    )


def refine_boxes(
    raw_anchors: torch.Tensor,
    c_enh: torch.Tensor,
    p3p: FeatureMap,
    p4p: FeatureMap,
    params,
    cfg: SgclConfig,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Iterative anchor refinement against multi-resolution visual tokens.

    One query per cell (initialized from the enhanced representations, in
    order, with no matching step). Each layer cross-attends the queries,
    positioned by a sine encoding of the current anchor, to the concatenated
    P3'/P4' tokens and adds a predicted delta to the anchor in logit space.
    Zero delta heads therefore leave the anchors untouched.
    """
    tokens = torch.cat(
        [
            p3p.data.permute(1, 2, 0).reshape(-1, p3p.channels),
            p4p.data.permute(1, 2, 0).reshape(-1, p4p.channels),
        ],
        dim=0,
    )
    key_pos = torch.cat(
        [
            grid_position_encoding(p3p.height, p3p.width, cfg.d_model, cfg.pe_temperature),
            grid_position_encoding(p4p.height, p4p.width, cfg.d_model, cfg.pe_temperature),
        ],
        dim=0,
    )
    raw = raw_anchors
    queries = c_enh
    for layer in range(cfg.refine_layers):
        anchors = torch.sigmoid(raw)
        q_pos = anchor_position_encoding(anchors, cfg.d_model, cfg.pe_temperature)
        queries = _attn_block(
            queries, tokens, params, f"ref{layer}_attn", q_extra=q_pos, k_extra=key_pos
        )
        hidden = torch.tanh(queries @ params[f"ref{layer}_delta_w1"].T + params[f"ref{layer}_delta_b1"])
        delta = hidden @ params[f"ref{layer}_delta_w2"].T + params[f"ref{layer}_delta_b2"]
        raw = raw + delta
    return raw, anchors_to_corners(torch.sigmoid(raw))


def mask_alignment_logits(c_enh: torch.Tensor, p4p: FeatureMap, params) -> torch.Tensor:
    """Per-cell score maps: projected cell representation dotted with P4'."""
    proj = c_enh @ params["mask_proj_w"].T + params["mask_proj_b"]
    return torch.einsum("nd,dhw->nhw", proj, p4p.data)


def mask_targets(boxes: torch.Tensor, height: int, width: int) -> torch.Tensor:
    """Rasterize corner boxes: a pixel is on iff its center lies inside.

    Containment is half-open ([x1, x2) x [y1, y2)) so degenerate boxes
    rasterize to all zeros while the full unit box covers every pixel.
    """
    ys = (torch.arange(height, dtype=torch.float64) + 0.5) / height
    xs = (torch.arange(width, dtype=torch.float64) + 0.5) / width
    cy = ys[None, :, None]
    cx = xs[None, None, :]
    x1, y1, x2, y2 = (boxes[:, i][:, None, None] for i in range(4))
    inside = (cx >= x1) & (cx < x2) & (cy >= y1) & (cy < y2)
    return inside.to(torch.float64)


@dataclass
class SgclOutputs:
    """Everything the loss needs from one forward pass."""

    p3p: FeatureMap
    p4p: FeatureMap
    visual_tokens: torch.Tensor
    pooled: torch.Tensor
    mask_row: torch.Tensor
    mask_col: torch.Tensor
    logits_row: torch.Tensor
    logits_col: torch.Tensor
    enhanced: torch.Tensor
    raw_init: torch.Tensor
    boxes_init: torch.Tensor
    raw_refined: torch.Tensor
    boxes: torch.Tensor
    mask_logits: torch.Tensor


def forward_sgcl(params, inputs: SgclInputs, cfg: SgclConfig) -> SgclOutputs:
    """Run the whole localization pipeline on one table instance."""
    p3p, p4p = fuse_pyramid(inputs.p3, inputs.p4, inputs.p5, params)
    v = flatten_with_pos(p4p, params["pos_table"])
    h = aggregate_layers(inputs.hidden, params["layer_weights"])
    c = pool_cells(h, inputs.spans)
    m_row, m_col, logits_row, logits_col = structure_masks(c, params)
    c_enh = enhance_cells(c, m_row, m_col, v, params)
    raw_init, boxes_init = regress_initial(c_enh, params)
    raw_refined, boxes = refine_boxes(raw_init, c_enh, p3p, p4p, params, cfg)
    mask_logits = mask_alignment_logits(c_enh, p4p, params)
    return SgclOutputs(
        p3p=p3p,
        p4p=p4p,
        visual_tokens=v,
        pooled=c,
        mask_row=m_row,
        mask_col=m_col,
        logits_row=logits_row,
        logits_col=logits_col,
        enhanced=c_enh,
        raw_init=raw_init,
        boxes_init=boxes_init,
        raw_refined=raw_refined,
        boxes=boxes,
        mask_logits=mask_logits,
    )
