"""Finite-difference verification harness for the localization losses.

Compares analytic directional derivatives against central differences at a
point, returning the relative error. Loss closures expose every loss term
(and the weighted total) as a scalar function of one flat vector holding
all module parameters plus the differentiable inputs (decoder hidden states
and token logits).
"""

from __future__ import annotations

from typing import Callable

import numpy as np
import torch

from .fixtures import ToyInstance
from .forward import forward_sgcl
from .losses import (
    loss_cross_entropy,
    loss_giou,
    loss_l1,
    loss_mask,
    loss_structure,
    loss_total,
)
from .types import LossWeights, SgclInputs

LOSS_TERMS = ("ce", "b", "iou", "m", "s", "total")


def grad_check(
    f: Callable[[np.ndarray], float],
    grad_fn: Callable[[np.ndarray], np.ndarray],
    point: np.ndarray,
    direction: np.ndarray,
    eps: float = 1e-5,
) -> float:
    """Relative error between analytic and central-difference derivatives.

    analytic = <grad_fn(point), direction>; numeric = (f(x+eps d) - f(x-eps d)) / 2eps;
    returns |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
    """
    analytic = float(np.dot(grad_fn(point), direction))
    f_plus = f(point + eps * direction)
    f_minus = f(point - eps * direction)
    for value in (analytic, f_plus, f_minus):
        if not np.isfinite(value):
            raise FloatingPointError("non-finite value in gradient check")
    numeric = (f_plus - f_minus) / (2.0 * eps)
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)


class LossPoint:
    """One toy instance's loss as a function of a flat parameter/input vector."""

    def __init__(self, inst: ToyInstance, term: str = "total", weights: LossWeights = LossWeights()):
        if term not in LOSS_TERMS:
            raise ValueError(f"unknown loss term {term!r}")
        self.inst = inst
        self.term = term
        self.weights = weights
        self._sections = [
            ("params", inst.params.flatten().numel()),
            ("hidden", inst.inputs.hidden.data.numel()),
            ("token_logits", inst.inputs.token_logits.numel()),
        ]

    def point(self) -> np.ndarray:
        inst = self.inst
        return (
            torch.cat(
                [
                    inst.params.flatten(),
                    inst.inputs.hidden.data.reshape(-1),
                    inst.inputs.token_logits.reshape(-1),
                ]
            )
            .numpy()
            .copy()
        )

    def _evaluate(self, vector: torch.Tensor) -> torch.Tensor:
        inst = self.inst
        sizes = [size for _, size in self._sections]
        if vector.numel() != sum(sizes):
            raise ValueError("vector length mismatch")
        flat_params, flat_hidden, flat_logits = torch.split(vector, sizes)
        params = self.inst.params.unflatten(flat_params)
        from .types import FeatureMap, HiddenStates  # local to avoid cycle noise

        inputs = SgclInputs(
            p3=inst.inputs.p3,
            p4=inst.inputs.p4,
            p5=inst.inputs.p5,
            hidden=HiddenStates(flat_hidden.reshape(inst.inputs.hidden.data.shape)),
            spans=inst.inputs.spans,
            token_logits=flat_logits.reshape(inst.inputs.token_logits.shape),
        )
        outputs = forward_sgcl(params, inputs, inst.config)
        targets = inst.targets
        if self.term == "ce":
            return loss_cross_entropy(inputs.token_logits, targets.token_ids)
        if self.term == "b":
            return loss_l1(outputs.boxes, targets.boxes)
        if self.term == "iou":
            return loss_giou(outputs.boxes, targets.boxes)
        if self.term == "m":
            return loss_mask(outputs.mask_logits, targets.mask)
        if self.term == "s":
            return loss_structure(outputs.logits_row, outputs.logits_col, targets.adjacency)
        total, _ = loss_total(inputs.token_logits, outputs, targets, self.weights)
        return total

    def f(self, x: np.ndarray) -> float:
        with torch.no_grad():
            return float(self._evaluate(torch.from_numpy(np.ascontiguousarray(x))))

    def grad(self, x: np.ndarray) -> np.ndarray:
        vector = torch.from_numpy(np.ascontiguousarray(x)).clone().requires_grad_(True)
        value = self._evaluate(vector)
        value.backward()
        assert vector.grad is not None
        return vector.grad.numpy().copy()


def random_direction(size: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    direction = rng.standard_normal(size)
    return direction / np.linalg.norm(direction)


def check_instance(
    inst: ToyInstance,
    term: str,
    seed: int,
    eps: float = 1e-5,
    perturb: float = 0.0,
) -> float:
    """Run one directional gradient check; optionally jitter the base point."""
    lp = LossPoint(inst, term=term)
    point = lp.point()
    rng = np.random.default_rng(seed)
    if perturb:
        point = point + perturb * rng.standard_normal(point.size)
    direction = rng.standard_normal(point.size)
    direction /= np.linalg.norm(direction)
    return grad_check(lp.f, lp.grad, point, direction, eps=eps)
