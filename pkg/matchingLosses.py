#!/usr/bin/env python3
"""
File: matchingLosses.py
    Box geometry, bipartite matching of predicted queries to targets, and the training objectives:
        detection (L1 + GIoU + weighted cross entropy), auxiliary detection on the QA queries, focal + dice masks.
"""
import logging
import math
from dataclasses import dataclass, field, fields
from typing import Final, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

import tensorEngine as te
from cliExceptions import ContractError, DimensionError
from tensorEngine import Tensor

#####################################
# Constants:
#####################################
UNION_FLOOR: Final[float] = 1e-12
ENCLOSING_FLOOR: Final[float] = 1e-7
PROBABILITY_CLAMP: Final[float] = 1e-7
FOCAL_ALPHA: Final[float] = 0.25
FOCAL_GAMMA: Final[int] = 2
DICE_SMOOTHING: Final[float] = 1.0
TIE_TOLERANCE: Final[float] = 1e-9
"""Relative slack when testing whether a constrained assignment is still optimal."""
NON_FINITE_COST: Final[float] = 1e6
"""Stand-in for NaN/Inf match costs; a diverged batch still gets matched."""


#####################################
# Config:
#####################################
@dataclass(frozen=True)
class LossWeights:
    iou: float = 3.0
    l1: float = 1.0
    ce: float = 1.0
    aux: float = 0.1
    focal: float = 5.0
    dice: float = 1.0
    no_object: float = 0.1
    """Cross entropy weight of queries left unmatched."""

    def validate(self) -> None:
        """
        :raises ContractError: On a negative or non-finite weight.
        """
        for item in fields(self):
            value: float = getattr(self, item.name)
            if not math.isfinite(value) or value < 0:
                raise ContractError('LossWeights', "weight '%s' must be finite and >= 0, got %r" % (item.name, value))
        return


@dataclass
class MatchAssignment:
    pairs: list[tuple[int, int]]
    """(query, target) pairs in ascending query order."""
    total_cost: float

    @property
    def query_indices(self) -> list[int]:
        return [pair[0] for pair in self.pairs]

    @property
    def target_indices(self) -> list[int]:
        return [pair[1] for pair in self.pairs]


@dataclass
class LossTerms:
    """Named, already weighted loss terms. total is their sum."""
    terms: dict[str, Tensor] = field(default_factory=dict)

    @property
    def total(self) -> Tensor:
        total: Optional[Tensor] = None
        for value in self.terms.values():
            total = value if total is None else total + value
        return total if total is not None else te.as_tensor(0.0)

    def values(self) -> dict[str, float]:
        return {name: float(value.data) for name, value in self.terms.items()}


#####################################
# Box geometry:
#####################################
def _stack_last(parts: Sequence[Tensor]) -> Tensor:
    return te.concat([part.reshape(part.shape + (1,)) for part in parts], axis=-1)


def _unpack(boxes: Tensor) -> tuple[Tensor, Tensor, Tensor, Tensor]:
    if boxes.shape[-1] != 4:
        raise DimensionError('box', (boxes.shape, (4,)))
    return boxes[..., 0], boxes[..., 1], boxes[..., 2], boxes[..., 3]


def box_cxcywh_to_xyxy(boxes: Tensor) -> Tensor:
    """(cx, cy, w, h) -> (x1, y1, x2, y2) over the last axis."""
    cx, cy, w, h = _unpack(te.as_tensor(boxes))
    return _stack_last([cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h])


def box_xyxy_to_cxcywh(boxes: Tensor) -> Tensor:
    """(x1, y1, x2, y2) -> (cx, cy, w, h) over the last axis."""
    x1, y1, x2, y2 = _unpack(te.as_tensor(boxes))
    return _stack_last([0.5 * (x1 + x2), 0.5 * (y1 + y2), x2 - x1, y2 - y1])


def _area(x1: Tensor, y1: Tensor, x2: Tensor, y2: Tensor) -> Tensor:
    return te.maximum(x2 - x1, 0.0) * te.maximum(y2 - y1, 0.0)


def _overlap(a: Tensor, b: Tensor) -> tuple[Tensor, Tensor, tuple[Tensor, ...], tuple[Tensor, ...]]:
    a, b = te.as_tensor(a), te.as_tensor(b)
    a_parts = _unpack(a)
    b_parts = _unpack(b)
    inter_w: Tensor = te.maximum(te.minimum(a_parts[2], b_parts[2]) - te.maximum(a_parts[0], b_parts[0]), 0.0)
    inter_h: Tensor = te.maximum(te.minimum(a_parts[3], b_parts[3]) - te.maximum(a_parts[1], b_parts[1]), 0.0)
    inter: Tensor = inter_w * inter_h
    union: Tensor = _area(*a_parts) + _area(*b_parts) - inter
    return inter, union, a_parts, b_parts


def iou(a: Tensor, b: Tensor) -> Tensor:
    """
    Intersection over union of corner boxes, broadcast over leading axes; 0 when the union is empty.
    """
    inter, union, _, _ = _overlap(a, b)
    return inter / te.maximum(union, UNION_FLOOR)


def giou(a: Tensor, b: Tensor) -> Tensor:
    """
    Generalized IoU of corner boxes: IoU - (enclosing - union) / enclosing.
    """
    inter, union, a_parts, b_parts = _overlap(a, b)
    enclosing_w: Tensor = te.maximum(a_parts[2], b_parts[2]) - te.minimum(a_parts[0], b_parts[0])
    enclosing_h: Tensor = te.maximum(a_parts[3], b_parts[3]) - te.minimum(a_parts[1], b_parts[1])
    enclosing: Tensor = te.maximum(enclosing_w * enclosing_h, ENCLOSING_FLOOR)
    return inter / te.maximum(union, UNION_FLOOR) - (enclosing - union) / enclosing


#####################################
# Matching:
#####################################
def match_cost(boxes: np.ndarray, logits: np.ndarray, targets: np.ndarray, weights: LossWeights) -> np.ndarray:
    """
    cost[q, t] = l1 * |b_q - b_t|_1 + iou * (1 - giou) - ce * p_q(object).
    :param boxes: np.ndarray: [N_q, 4] cxcywh.
    :param logits: np.ndarray: [N_q, 2]
    :param targets: np.ndarray: [T, 4] cxcywh.
    :param weights: LossWeights: The term weights.
    :return: np.ndarray: [N_q, T]
    """
    boxes = np.asarray(boxes, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64).reshape(-1, 4)
    if boxes.shape[0] == 0 or targets.shape[0] == 0:
        raise ContractError('match_cost', "needs at least one prediction and one target")
    l1_cost: np.ndarray = np.abs(boxes[:, None, :] - targets[None, :, :]).sum(axis=-1)
    overlap: np.ndarray = giou(box_cxcywh_to_xyxy(Tensor(boxes[:, None, :])),
                               box_cxcywh_to_xyxy(Tensor(targets[None, :, :]))).data
    shifted: np.ndarray = np.asarray(logits, dtype=np.float64)
    shifted = np.exp(shifted - shifted.max(axis=-1, keepdims=True))
    object_probability: np.ndarray = shifted[:, 1] / shifted.sum(axis=-1)
    return weights.l1 * l1_cost + weights.iou * (1.0 - overlap) - weights.ce * object_probability[:, None]


def _constrained_total(cost: np.ndarray, allowed: np.ndarray, forbidden_cost: float) -> float:
    masked: np.ndarray = np.where(allowed, cost, forbidden_cost)
    rows, cols = linear_sum_assignment(masked)
    return float(masked[rows, cols].sum())


def hungarian_assign(cost: np.ndarray) -> MatchAssignment:
    """
    Minimum total cost one-to-one assignment of rows (queries) to columns (targets).
    Among equally cheap assignments the lexicographically smallest pair list wins: each row in turn takes the
    lowest column that still admits an optimal completion.
    :param cost: np.ndarray: [N_q, T] finite costs.
    :raises ContractError: On an empty or non-finite matrix.
    :return: MatchAssignment: min(N_q, T) pairs and their total cost.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.size == 0:
        raise ContractError('hungarian_assign', "cost matrix must be a non-empty 2D array")
    if not np.isfinite(cost).all():
        raise ContractError('hungarian_assign', "cost matrix has non-finite entries")
    rows, cols = linear_sum_assignment(cost)
    optimum: float = float(cost[rows, cols].sum())
    count: int = min(cost.shape)
    slack: float = TIE_TOLERANCE * (1.0 + abs(optimum))
    forbidden_cost: float = (2.0 * count + 1.0) * (float(np.abs(cost).max()) + 1.0)

    allowed: np.ndarray = np.ones(cost.shape, dtype=bool)
    pairs: list[tuple[int, int]] = []
    for row in range(cost.shape[0]):
        if len(pairs) == count:
            break
        for col in range(cost.shape[1]):
            if not allowed[row, col]:
                continue
            trial: np.ndarray = allowed.copy()
            trial[row, :] = False
            trial[:, col] = False
            trial[row, col] = True
            if _constrained_total(cost, trial, forbidden_cost) <= optimum + slack:
                allowed = trial
                pairs.append((row, col))
                break
        else:
            allowed[row, :] = False
    total: float = float(sum(cost[row, col] for row, col in pairs))
    return MatchAssignment(pairs, total)


def match_batch(boxes: np.ndarray,
                logits: np.ndarray,
                targets: np.ndarray,
                weights: LossWeights,
                ) -> list[MatchAssignment]:
    """
    Match every sample of a batch independently.
    :param boxes: np.ndarray: [B, N_q, 4]
    :param logits: np.ndarray: [B, N_q, 2]
    :param targets: np.ndarray: [B, T, 4] or [B, 4] for one target per sample.
    :return: list[MatchAssignment]: One assignment per sample. Non-finite costs are clamped to NON_FINITE_COST.
    """
    targets = np.asarray(targets)
    if targets.ndim == 2:
        targets = targets[:, None, :]
    assignments: list[MatchAssignment] = []
    for index in range(boxes.shape[0]):
        cost: np.ndarray = match_cost(boxes[index], logits[index], targets[index], weights)
        assignments.append(hungarian_assign(np.nan_to_num(cost, nan=NON_FINITE_COST, posinf=NON_FINITE_COST,
                                                          neginf=-NON_FINITE_COST)))
    return assignments


#####################################
# Losses:
#####################################
def _gather_matches(assignments: Sequence[MatchAssignment]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    batch_index: list[int] = []
    query_index: list[int] = []
    target_index: list[int] = []
    for sample, assignment in enumerate(assignments):
        for query, target in assignment.pairs:
            batch_index.append(sample)
            query_index.append(query)
            target_index.append(target)
    return (np.asarray(batch_index, dtype=np.int64), np.asarray(query_index, dtype=np.int64),
            np.asarray(target_index, dtype=np.int64))


def detection_loss(boxes: Tensor,
                   logits: Tensor,
                   targets: np.ndarray,
                   assignments: Sequence[MatchAssignment],
                   weights: LossWeights,
                   ) -> LossTerms:
    """
    Box terms averaged over matched pairs, class cross entropy averaged over all queries with unmatched queries
    (no-object label) down-weighted.
    :param boxes: Tensor: [B, N_q, 4] cxcywh.
    :param logits: Tensor: [B, N_q, 2]
    :param targets: np.ndarray: [B, T, 4] or [B, 4].
    :param assignments: Sequence[MatchAssignment]: One per sample.
    :param weights: LossWeights: The term weights.
    :return: LossTerms: 'l1', 'giou' and 'ce', each weighted.
    """
    targets = np.asarray(targets)
    if targets.ndim == 2:
        targets = targets[:, None, :]
    if len(assignments) != boxes.shape[0]:
        raise ContractError('detection_loss', "%i assignments for %i samples" % (len(assignments), boxes.shape[0]))
    batch_index, query_index, target_index = _gather_matches(assignments)
    terms: LossTerms = LossTerms()
    if batch_index.size > 0:
        matched: Tensor = boxes[batch_index, query_index]
        target: Tensor = te.as_tensor(targets[batch_index, target_index], matched)
        l1: Tensor = te.tensor_abs(matched - target).sum(axis=-1).mean()
        overlap: Tensor = giou(box_cxcywh_to_xyxy(matched), box_cxcywh_to_xyxy(target))
        terms.terms['l1'] = weights.l1 * l1
        terms.terms['giou'] = weights.iou * (1.0 - overlap).mean()
    else:
        terms.terms['l1'] = te.as_tensor(0.0, boxes)
        terms.terms['giou'] = te.as_tensor(0.0, boxes)

    batch, num_queries = logits.shape[0], logits.shape[1]
    labels: np.ndarray = np.zeros((batch, num_queries), dtype=np.int64)
    labels[batch_index, query_index] = 1
    query_weight: np.ndarray = np.where(labels == 1, 1.0, weights.no_object)
    probability: Tensor = te.softmax(logits, axis=-1)
    rows, cols = np.meshgrid(np.arange(batch), np.arange(num_queries), indexing='ij')
    picked: Tensor = probability[rows, cols, labels]
    picked = te.minimum(te.maximum(picked, PROBABILITY_CLAMP), 1.0 - PROBABILITY_CLAMP)
    weighted: Tensor = te.neg(te.log(picked)) * te.as_tensor(query_weight, picked)
    terms.terms['ce'] = weights.ce * (weighted.sum() / float(query_weight.sum()))
    return terms


def focal_loss(probabilities: Tensor, target: np.ndarray) -> Tensor:
    """
    Binary focal loss (alpha 0.25, gamma 2) averaged over pixels and masks.
    :param probabilities: Tensor: [..., H, W] in [0, 1].
    :param target: np.ndarray: Same shape, values in {0, 1}.
    :raises DimensionError: On a shape mismatch.
    :return: Tensor: Scalar.
    """
    target = np.asarray(target)
    if probabilities.shape != target.shape:
        raise DimensionError('focal_loss', (probabilities.shape, target.shape))
    p: Tensor = te.minimum(te.maximum(probabilities, PROBABILITY_CLAMP), 1.0 - PROBABILITY_CLAMP)
    positive: Tensor = te.as_tensor(target.astype(p.dtype), p)
    negative: Tensor = 1.0 - positive
    one_minus: Tensor = 1.0 - p
    positive_term: Tensor = FOCAL_ALPHA * positive * one_minus * one_minus * te.log(p)
    negative_term: Tensor = (1.0 - FOCAL_ALPHA) * negative * p * p * te.log(one_minus)
    return te.neg(positive_term + negative_term).mean()


def dice_loss(probabilities: Tensor, target: np.ndarray) -> Tensor:
    """
    1 - (2 |s * g| + 1) / (|s| + |g| + 1) per mask, averaged over masks.
    :param probabilities: Tensor: [..., H, W] in [0, 1].
    :param target: np.ndarray: Same shape, values in {0, 1}.
    :raises DimensionError: On a shape mismatch.
    :return: Tensor: Scalar.
    """
    target = np.asarray(target)
    if probabilities.shape != target.shape:
        raise DimensionError('dice_loss', (probabilities.shape, target.shape))
    truth: Tensor = te.as_tensor(target.astype(probabilities.dtype), probabilities)
    pixel_axes: tuple[int, int] = (-2, -1)
    overlap: Tensor = (probabilities * truth).sum(axis=pixel_axes)
    total: Tensor = probabilities.sum(axis=pixel_axes) + truth.sum(axis=pixel_axes)
    return (1.0 - (2.0 * overlap + DICE_SMOOTHING) / (total + DICE_SMOOTHING)).mean()


def segmentation_loss(masks: Tensor,
                      target_masks: np.ndarray,
                      assignments: Sequence[MatchAssignment],
                      weights: LossWeights,
                      ) -> LossTerms:
    """
    Focal and dice on the matched queries' masks only.
    :param masks: Tensor: [B, N_q, H, W]
    :param target_masks: np.ndarray: [B, H, W] for one target per sample, or [B, T, H, W].
    :return: LossTerms: 'focal' and 'dice', each weighted.
    """
    target_masks = np.asarray(target_masks)
    if target_masks.ndim == 3:
        target_masks = target_masks[:, None]
    batch_index, query_index, target_index = _gather_matches(assignments)
    terms: LossTerms = LossTerms()
    if batch_index.size == 0:
        terms.terms['focal'] = te.as_tensor(0.0, masks)
        terms.terms['dice'] = te.as_tensor(0.0, masks)
        return terms
    matched: Tensor = masks[batch_index, query_index]
    truth: np.ndarray = target_masks[batch_index, target_index]
    terms.terms['focal'] = weights.focal * focal_loss(matched, truth)
    terms.terms['dice'] = weights.dice * dice_loss(matched, truth)
    return terms


def aux_loss(query_predictions: Sequence[tuple[Tensor, Tensor]],
             targets: np.ndarray,
             weights: LossWeights,
             ) -> Tensor:
    """
    lambda_aux times the sum over QA layers of the detection loss of that layer's auxiliary predictions,
    each layer matched on its own.
    :param query_predictions: Sequence[tuple[Tensor, Tensor]]: Per layer (boxes [B, N_q, 4], logits [B, N_q, 2]).
    :param targets: np.ndarray: [B, 4] or [B, T, 4].
    :param weights: LossWeights: The term weights.
    :return: Tensor: Scalar.
    """
    logger: logging.Logger = logging.getLogger(__name__ + '.' + aux_loss.__name__)
    total: Optional[Tensor] = None
    for boxes, logits in query_predictions:
        assignments: list[MatchAssignment] = match_batch(boxes.data, logits.data, targets, weights)
        layer_loss: Tensor = detection_loss(boxes, logits, targets, assignments, weights).total
        total = layer_loss if total is None else total + layer_loss
    if total is None:
        logger.debug("no QA layers, auxiliary loss is zero")
        return te.as_tensor(0.0)
    return weights.aux * total
