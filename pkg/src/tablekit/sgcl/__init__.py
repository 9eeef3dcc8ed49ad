"""Structure-guided cell localization: forward computation, losses, checks."""

from .types import (
    AdjacencyTargets,
    FeatureMap,
    HiddenStates,
    LossWeights,
    SgclConfig,
    SgclInputs,
    SgclTargets,
    TokenSpanIndex,
    adjacency_targets,
)
from .params import SgclParams, parameter_shapes
from .forward import (
    SgclOutputs,
    aggregate_layers,
    anchors_to_corners,
    enhance_cells,
    flatten_with_pos,
    forward_sgcl,
    fuse_pyramid,
    mask_alignment_logits,
    mask_targets,
    pool_cells,
    refine_boxes,
    regress_initial,
    structure_masks,
)
from .losses import (
    combine_losses,
    loss_cross_entropy,
    loss_giou,
    loss_l1,
    loss_mask,
    loss_structure,
    loss_total,
)
from .gradcheck import LossPoint, check_instance, grad_check, random_direction
from .fixtures import ToyInstance, load_instance, make_toy_instance, save_instance

__all__ = [
    "AdjacencyTargets",
    "FeatureMap",
    "HiddenStates",
    "LossPoint",
    "LossWeights",
    "SgclConfig",
    "SgclInputs",
    "SgclOutputs",
    "SgclParams",
    "SgclTargets",
    "TokenSpanIndex",
    "ToyInstance",
    "adjacency_targets",
    "aggregate_layers",
    "anchors_to_corners",
    "check_instance",
    "combine_losses",
    "enhance_cells",
    "flatten_with_pos",
    "forward_sgcl",
    "fuse_pyramid",
    "grad_check",
    "load_instance",
    "loss_cross_entropy",
    "loss_giou",
    "loss_l1",
    "loss_mask",
    "loss_structure",
    "loss_total",
    "make_toy_instance",
    "mask_alignment_logits",
    "mask_targets",
    "parameter_shapes",
    "pool_cells",
    "random_direction",
    "refine_boxes",
    "regress_initial",
    "save_instance",
    "structure_masks",
]
