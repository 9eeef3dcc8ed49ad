"""Structural invariant checks for the localization module.

Each check returns (name, passed, detail) so the CLI can print a pass/fail
table and tests can assert individual properties.
"""

from __future__ import annotations

import torch

from ..geometry import LogicalCoords
from .fixtures import ToyInstance
from .forward import enhance_cells, forward_sgcl, refine_boxes
from .losses import loss_total
from .types import SgclInputs, SgclTargets, adjacency_targets


class _UnorderedSpans:
    """Span container without the ordering invariant (for permutation tests)."""

    def __init__(self, spans: tuple[tuple[int, int], ...], n_tokens: int) -> None:
        self.spans = spans
        self.n_tokens = n_tokens

    def __len__(self) -> int:
        return len(self.spans)


def _zeroed_cross(params: dict[str, torch.Tensor]) -> dict[str, torch.Tensor]:
    out = dict(params)
    for branch in ("row", "col"):
        out[f"{branch}_cross_o_w"] = torch.zeros_like(params[f"{branch}_cross_o_w"])
        out[f"{branch}_cross_o_b"] = torch.zeros_like(params[f"{branch}_cross_o_b"])
    return out


def check_mask_isolation(inst: ToyInstance, perturb_scale: float = 10.0) -> tuple[str, bool, str]:
    """Cells isolated by both structure masks ignore each other's features.

    Uses partition masks (same-row / same-column relations of a span-free
    unit grid), under which "not connected" is closed under composition, so
    the enhanced representation of cell x must be bitwise unaffected by any
    perturbation of cell y with mask_row[x,y] = mask_col[x,y] = 0 once the
    cross-attention contribution is zeroed.
    """
    n = len(inst.inputs.spans)
    grid = [LogicalCoords(i // 3, i // 3, i % 3, i % 3) for i in range(n)]
    adj = adjacency_targets(grid)
    m_row, m_col = adj.row > 0.5, adj.col > 0.5
    params = _zeroed_cross(inst.params.tensors)
    c = torch.randn(n, inst.config.d_model, dtype=torch.float64,
                    generator=torch.Generator().manual_seed(7))
    v = torch.randn(inst.config.p4_height * inst.config.p4_width, inst.config.d_model,
                    dtype=torch.float64, generator=torch.Generator().manual_seed(8))
    base = enhance_cells(c, m_row, m_col, v, params)
    for x in range(n):
        for y in range(n):
            if x == y or m_row[x, y] or m_col[x, y]:
                continue
            perturbed = c.clone()
            perturbed[y] += perturb_scale
            out = enhance_cells(perturbed, m_row, m_col, v, params)
            if not torch.equal(out[x], base[x]):
                return ("mask_isolation", False, f"cell {x} leaked from cell {y}")
    return ("mask_isolation", True, "")


def check_permutation_equivariance(
    inst: ToyInstance, seed: int = 0, atol: float = 1e-9
) -> tuple[str, bool, str]:
    """Permuting cells permutes boxes and leaves the total loss unchanged."""
    n = len(inst.inputs.spans)
    gen = torch.Generator().manual_seed(seed)
    perm = torch.randperm(n, generator=gen)

    base_out = forward_sgcl(inst.params, inst.inputs, inst.config)
    base_loss, _ = loss_total(inst.inputs.token_logits, base_out, inst.targets)

    # Permuting the span list (cells keep their own token ranges); the
    # permuted list is deliberately unordered, so bypass the index type.
    spans = _UnorderedSpans(
        tuple(inst.inputs.spans.spans[i] for i in perm), inst.inputs.spans.n_tokens
    )
    perm_inputs = SgclInputs(
        p3=inst.inputs.p3,
        p4=inst.inputs.p4,
        p5=inst.inputs.p5,
        hidden=inst.inputs.hidden,
        spans=spans,
        token_logits=inst.inputs.token_logits,
    )
    logicals = tuple(inst.targets.logicals[i] for i in perm)
    perm_targets = SgclTargets(
        token_ids=inst.targets.token_ids,
        boxes=inst.targets.boxes[perm],
        mask=inst.targets.mask[perm],
        adjacency=adjacency_targets(list(logicals)),
        logicals=logicals,
    )
    perm_out = forward_sgcl(inst.params, perm_inputs, inst.config)
    perm_loss, _ = loss_total(perm_inputs.token_logits, perm_out, perm_targets)

    if not torch.allclose(perm_out.boxes_init, base_out.boxes_init[perm], atol=atol):
        return ("permutation_equivariance", False, "initial boxes not equivariant")
    if not torch.allclose(perm_out.boxes, base_out.boxes[perm], atol=atol):
        return ("permutation_equivariance", False, "refined boxes not equivariant")
    if abs(float(perm_loss) - float(base_loss)) > atol:
        return ("permutation_equivariance", False, "loss changed under permutation")
    return ("permutation_equivariance", True, "")


def check_zero_update_fixed_point(inst: ToyInstance) -> tuple[str, bool, str]:
    """Zeroed delta heads make refinement the identity on anchors (bitwise)."""
    params = dict(inst.params.tensors)
    for layer in range(inst.config.refine_layers):
        for suffix in ("delta_w2", "delta_b2"):
            name = f"ref{layer}_{suffix}"
            params[name] = torch.zeros_like(params[name])
    out = forward_sgcl(params, inst.inputs, inst.config)
    if not torch.equal(out.boxes, out.boxes_init):
        return ("zero_update_fixed_point", False, "refined boxes differ from initial")
    if not torch.equal(out.raw_refined, out.raw_init):
        return ("zero_update_fixed_point", False, "raw anchors changed")
    return ("zero_update_fixed_point", True, "")


def check_adjacency_properties(inst: ToyInstance) -> tuple[str, bool, str]:
    """Targets are symmetric with a unit diagonal."""
    adj = adjacency_targets(list(inst.targets.logicals))
    for name, matrix in (("row", adj.row), ("col", adj.col)):
        if not torch.equal(matrix, matrix.T):
            return ("adjacency_targets", False, f"{name} matrix not symmetric")
        if not torch.equal(torch.diagonal(matrix), torch.ones_like(torch.diagonal(matrix))):
            return ("adjacency_targets", False, f"{name} diagonal not all ones")
    return ("adjacency_targets", True, "")


def check_aggregation_convexity(inst: ToyInstance) -> tuple[str, bool, str]:
    """Layer weights softmax to 1; output within per-coordinate hull."""
    w = torch.softmax(inst.params["layer_weights"], dim=0)
    if abs(float(w.sum()) - 1.0) > 1e-12:
        return ("aggregation_convexity", False, "softmax weights do not sum to 1")
    h = inst.inputs.hidden.data
    combined = torch.einsum("l,ltd->td", w, h)
    lo, hi = h.min(dim=0).values, h.max(dim=0).values
    if not bool(((combined >= lo - 1e-12) & (combined <= hi + 1e-12)).all()):
        return ("aggregation_convexity", False, "output escapes the convex hull")
    return ("aggregation_convexity", True, "")


def check_refinement_count(inst: ToyInstance) -> tuple[str, bool, str]:
    """Refinement is one-to-one: output box count equals input count."""
    out = forward_sgcl(inst.params, inst.inputs, inst.config)
    raw, boxes = refine_boxes(
        out.raw_init, out.enhanced, out.p3p, out.p4p, inst.params, inst.config
    )
    n = len(inst.inputs.spans)
    if boxes.shape != (n, 4) or raw.shape != (n, 4):
        return ("refinement_one_to_one", False, f"expected {n} boxes, got {boxes.shape}")
    return ("refinement_one_to_one", True, "")


ALL_CHECKS = (
    check_mask_isolation,
    check_permutation_equivariance,
    check_zero_update_fixed_point,
    check_adjacency_properties,
    check_aggregation_convexity,
    check_refinement_count,
)


def run_invariant_suite(inst: ToyInstance) -> list[tuple[str, bool, str]]:
    return [check(inst) for check in ALL_CHECKS]
