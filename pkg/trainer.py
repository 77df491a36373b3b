#!/usr/bin/env python3
"""
File: trainer.py
    Contrastive backbone pretraining, the grounding training loop, evaluation and the multi-run experiments
    (query-strategy convergence and configuration ablations) built on top of them.
"""
import csv
import logging
import math
import os
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Final, Optional, Sequence

import numpy as np

import checkpoint
import common
import tensorEngine as te
from backbone import Backbone, ModelConfig
from cliExceptions import ContractError, NonFiniteLossError
from common import GlobalToken, QADirection, QueryStrategy
from decoder import FusionConfig, PredictionSet, Selection, object_probability, select_prediction
from matchingLosses import (LossTerms, LossWeights, MatchAssignment, aux_loss, box_cxcywh_to_xyxy, detection_loss,
                            iou, match_batch, segmentation_loss)
from optimizer import AdamW
from qaModule import QAConfig
from refFormer import ModelOutput, RefFormer
from runCallback import Callback, CallbackError, __run_callback__
from syntheticData import Batch, GroundingSample, collate, iterate_batches
from tensorEngine import Rng, Tensor

#####################################
# Constants:
#####################################
TERM_ORDER: Final[tuple[str, ...]] = ('l1', 'giou', 'ce', 'aux', 'focal', 'dice')
"""Loss terms in the order they are checked for non-finite values."""
NORMALIZE_FLOOR: Final[float] = 1e-12
"""Guard under the root when L2-normalizing contrastive features."""
EVAL_BATCH_SIZE: Final[int] = 64
TRAIN_LOG_COLUMNS: Final[tuple[str, ...]] = ('step', 'L_det', 'L_aux', 'L_focal', 'L_dice', 'total', 'lr')
"""Columns of the per-step training log."""
CONVERGENCE_THRESHOLD: Final[float] = 0.8
"""Prec@0.5 a median curve must reach to count as converged."""


#####################################
# Config:
#####################################
@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-4
    weight_decay: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_clip: Optional[float] = 1.0
    seed: int = 0
    strategy: QueryStrategy = QueryStrategy.REFERENTIAL
    direction: QADirection = QADirection.BOTH
    freeze_backbone: bool = True
    use_aux_loss: bool = True
    weights: LossWeights = field(default_factory=LossWeights)
    pretrain_steps: int = 300
    pretrain_batch_size: int = 32
    pretrain_learning_rate: float = 1e-3
    temperature: float = 0.07

    def validate(self) -> None:
        """
        :raises ContractError: On a non-positive count or rate, or an out of range beta.
        """
        for name in ('epochs', 'batch_size', 'pretrain_batch_size'):
            if getattr(self, name) < 1:
                raise ContractError('TrainConfig', "'%s' must be >= 1" % name)
        if self.pretrain_steps < 0:
            raise ContractError('TrainConfig', "'pretrain_steps' must be >= 0")
        for name in ('learning_rate', 'pretrain_learning_rate', 'eps', 'temperature'):
            if not getattr(self, name) > 0:
                raise ContractError('TrainConfig', "'%s' must be > 0" % name)
        if self.weight_decay < 0:
            raise ContractError('TrainConfig', "'weight_decay' must be >= 0")
        for name in ('beta1', 'beta2'):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ContractError('TrainConfig', "'%s' must be in [0, 1)" % name)
        if self.grad_clip is not None and not self.grad_clip > 0:
            raise ContractError('TrainConfig', "'grad_clip' must be > 0")
        self.weights.validate()
        return


def build_model(model: ModelConfig, qa: QAConfig, fusion: FusionConfig, train: TrainConfig) -> RefFormer:
    """
    Assemble a model whose QA direction and query strategy follow the training config.
    :return: RefFormer: The model, initialized from train.seed.
    """
    qa = replace(qa, direction=train.direction)
    qa.validate(model)
    fusion.validate(model)
    return RefFormer(model, qa, fusion, train.strategy, train.seed)


#####################################
# Reports:
#####################################
@dataclass
class StepBreakdown:
    step: int
    l_det: float
    l_aux: float
    l_focal: float
    l_dice: float
    total: float
    lr: float
    grad_norm: float = 0.0

    def as_row(self) -> dict[str, Any]:
        return {'step': self.step, 'L_det': self.l_det, 'L_aux': self.l_aux, 'L_focal': self.l_focal,
                'L_dice': self.l_dice, 'total': self.total, 'lr': self.lr}


@dataclass
class EvalReport:
    prec_at_05: float
    """Fraction of samples whose selected box has IoU > 0.5."""
    box_miou: float
    count: int
    miou: Optional[float] = None
    """Mean IoU of binarized masks, only with the segmentation head."""
    referential_prec_at_05: Optional[float] = None
    """Prec@0.5 of the last QA layer's auxiliary prediction, when there is a QA layer."""
    loss_curve: list[float] = field(default_factory=list)
    accuracy_curve: list[float] = field(default_factory=list)

    def as_dict(self) -> dict[str, Any]:
        return {'prec@0.5': self.prec_at_05, 'box_miou': self.box_miou, 'miou': self.miou,
                'referential_prec@0.5': self.referential_prec_at_05, 'count': self.count,
                'loss_curve': list(self.loss_curve), 'accuracy_curve': list(self.accuracy_curve)}


@dataclass
class EpochSummary:
    epoch: int
    mean_terms: dict[str, float]
    val_prec_at_05: float
    report: EvalReport


@dataclass
class TrainResult:
    history: list[EpochSummary]
    report: EvalReport
    steps: list[StepBreakdown]


#####################################
# Losses:
#####################################
def compute_losses(output: ModelOutput, batch: Batch, train: TrainConfig) -> LossTerms:
    """
    Match, then collect every weighted term of the training objective.
    :param output: ModelOutput: A forward pass on batch.
    :param batch: Batch: The targets.
    :param train: TrainConfig: Weights and the auxiliary loss switch.
    :return: LossTerms: 'l1', 'giou', 'ce', 'aux', 'focal' and 'dice'.
    """
    predictions: PredictionSet = output.predictions
    weights: LossWeights = train.weights
    assignments: list[MatchAssignment] = match_batch(predictions.boxes.data, predictions.logits.data,
                                                     batch.boxes, weights)
    terms: LossTerms = detection_loss(predictions.boxes, predictions.logits, batch.boxes, assignments, weights)
    if train.use_aux_loss and weights.aux > 0 and len(output.aux_predictions) > 0:
        terms.terms['aux'] = aux_loss(output.aux_predictions, batch.boxes, weights)
    else:
        terms.terms['aux'] = te.as_tensor(0.0, predictions.boxes)
    if predictions.masks is not None:
        terms.terms.update(segmentation_loss(predictions.masks, batch.masks, assignments, weights).terms)
    else:
        terms.terms['focal'] = te.as_tensor(0.0, predictions.boxes)
        terms.terms['dice'] = te.as_tensor(0.0, predictions.boxes)
    return terms


def first_non_finite(values: dict[str, float]) -> Optional[str]:
    for name in TERM_ORDER:
        if name in values and not math.isfinite(values[name]):
            return name
    return None


def train_step(model: RefFormer, optimizer: AdamW, batch: Batch, train: TrainConfig, step: int) -> StepBreakdown:
    """
    One optimizer step on one batch.
    :param model: RefFormer: The model, updated in place.
    :param optimizer: AdamW: Holds the trainable parameters.
    :param batch: Batch: The samples.
    :param train: TrainConfig: Loss weights and switches.
    :param step: int: The global step index, for diagnostics.
    :raises NonFiniteLossError: Naming the first NaN/Inf loss term, or 'grad_norm' when the loss is finite but
        its gradient is not; no parameter or optimizer state is changed.
    :return: StepBreakdown: The loss terms of this step.
    """
    with te.Tape() as tape:
        output: ModelOutput = model.forward(batch.images, batch.tokens, with_aux=train.use_aux_loss)
        terms: LossTerms = compute_losses(output, batch, train)
        values: dict[str, float] = terms.values()
        bad_term: Optional[str] = first_non_finite(values)
        if bad_term is not None:
            tape.clear()
            raise NonFiniteLossError(bad_term, step)
        total: Tensor = terms.total
        optimizer.zero_grad()
        tape.backward(total)
        grad_norm: float = optimizer.step()
    tape.clear()
    if not math.isfinite(grad_norm):
        raise NonFiniteLossError('grad_norm', step)
    return StepBreakdown(step=step,
                         l_det=values['l1'] + values['giou'] + values['ce'],
                         l_aux=values['aux'],
                         l_focal=values['focal'],
                         l_dice=values['dice'],
                         total=float(total.data),
                         lr=optimizer.learning_rate,
                         grad_norm=grad_norm)


#####################################
# Evaluation:
#####################################
def box_iou(predicted: np.ndarray, target: np.ndarray) -> np.ndarray:
    """
    IoU of cxcywh boxes, row by row.
    :return: np.ndarray: [B]
    """
    a: Tensor = box_cxcywh_to_xyxy(Tensor(np.asarray(predicted, dtype=np.float64)))
    b: Tensor = box_cxcywh_to_xyxy(Tensor(np.asarray(target, dtype=np.float64)))
    return np.asarray(iou(a, b).data, dtype=np.float64)


def mask_iou(predicted: np.ndarray, truth: np.ndarray, threshold: float = common.MASK_THRESHOLD) -> float:
    """
    IoU of a mask binarized at threshold against a {0, 1} mask. Two empty masks score 1.
    """
    predicted_bits: np.ndarray = np.asarray(predicted) > threshold
    truth_bits: np.ndarray = np.asarray(truth) > 0
    union: int = int(np.logical_or(predicted_bits, truth_bits).sum())
    if union == 0:
        return 1.0
    return float(np.logical_and(predicted_bits, truth_bits).sum()) / union


def evaluate(model: RefFormer, samples: Sequence[GroundingSample], batch_size: int = EVAL_BATCH_SIZE) -> EvalReport:
    """
    Score the selected prediction of every sample.
    :param model: RefFormer: The model; not modified.
    :param samples: Sequence[GroundingSample]: The evaluation set.
    :param batch_size: int: Forward batch size, does not change the result.
    :raises ContractError: If samples is empty.
    :return: EvalReport: Prec@0.5 (strict), box mIoU, mask mIoU with the segmentation head, and the
        referential-query readout.
    """
    logger: logging.Logger = logging.getLogger(__name__ + '.' + evaluate.__name__)
    if len(samples) == 0:
        raise ContractError('evaluate', "empty dataset")
    box_ious: list[np.ndarray] = []
    mask_ious: list[float] = []
    referential_ious: list[np.ndarray] = []
    for indices in iterate_batches(np.arange(len(samples)), batch_size):
        batch: Batch = collate([samples[int(index)] for index in indices])
        output: ModelOutput = model.forward(batch.images, batch.tokens, with_aux=True)
        selection: Selection = select_prediction(output.predictions)
        box_ious.append(box_iou(selection.boxes, batch.boxes))
        if selection.masks is not None:
            mask_ious.extend(mask_iou(selection.masks[row], batch.masks[row]) for row in range(len(batch)))
        if len(output.aux_predictions) > 0:
            aux_boxes, aux_logits = output.aux_predictions[-1]
            chosen: np.ndarray = np.argmax(object_probability(aux_logits.data), axis=1)
            picked: np.ndarray = aux_boxes.data[np.arange(chosen.shape[0]), chosen]
            referential_ious.append(box_iou(picked, batch.boxes))
    ious: np.ndarray = np.concatenate(box_ious)
    report: EvalReport = EvalReport(prec_at_05=float(np.mean(ious > common.IOU_THRESHOLD)),
                                    box_miou=float(np.mean(ious)),
                                    count=int(ious.size))
    if len(mask_ious) > 0:
        report.miou = float(np.mean(mask_ious))
    if len(referential_ious) > 0:
        report.referential_prec_at_05 = float(np.mean(np.concatenate(referential_ious) > common.IOU_THRESHOLD))
    logger.debug("evaluated %i samples: prec@0.5 %.4f" % (report.count, report.prec_at_05))
    return report


#####################################
# Contrastive pretraining:
#####################################
def _normalized(x: Tensor) -> Tensor:
    return x / te.sqrt((x * x).sum(axis=-1, keepdims=True) + NORMALIZE_FLOOR)


def contrastive_loss(image_features: Tensor, text_features: Tensor, temperature: float) -> Tensor:
    """
    Symmetric cross entropy of temperature-scaled cosine similarities; pair i of the batch is the positive of row
    and column i.
    :param image_features: Tensor: [B, E]
    :param text_features: Tensor: [B, E]
    :param temperature: float: Similarity divisor, > 0.
    :return: Tensor: Scalar.
    """
    if image_features.shape != text_features.shape:
        raise ContractError('contrastive_loss', "feature shapes differ: %s vs %s"
                            % (str(image_features.shape), str(text_features.shape)))
    logits: Tensor = (_normalized(image_features) @ _normalized(text_features).swap_last()) / temperature
    diagonal: np.ndarray = np.arange(logits.shape[0])
    image_to_text: Tensor = te.log_softmax(logits, axis=1)[diagonal, diagonal]
    text_to_image: Tensor = te.log_softmax(logits, axis=0)[diagonal, diagonal]
    return te.neg(image_to_text.mean() + text_to_image.mean()) * 0.5


def retrieval_accuracy(backbone: Backbone, batch: Batch, which: GlobalToken = GlobalToken.SOS) -> float:
    """
    Fraction of images whose most similar caption in the batch is their own.
    """
    image_features, text_features = backbone.contrastive_features(batch.images, batch.tokens, which)
    similarity: np.ndarray = image_features.data @ text_features.data.T
    return float(np.mean(np.argmax(similarity, axis=1) == np.arange(similarity.shape[0])))


def contrastive_pretrain(backbone: Backbone,
                         samples: Sequence[GroundingSample],
                         train: TrainConfig,
                         which: GlobalToken = GlobalToken.SOS,
                         ) -> list[float]:
    """
    Align image class tokens with the global text token of each sample's expression, then freeze the backbone
    if train.freeze_backbone.
    :param backbone: Backbone: Trained in place.
    :param samples: Sequence[GroundingSample]: Scenes paired with their referring expressions.
    :param train: TrainConfig: Steps, batch size, learning rate, temperature and seed.
    :param which: GlobalToken: The text token read as the caption feature.
    :raises ContractError: If samples is empty.
    :raises NonFiniteLossError: If the loss or its gradient norm turns NaN/Inf.
    :return: list[float]: The loss of every step.
    """
    logger: logging.Logger = logging.getLogger(__name__ + '.' + contrastive_pretrain.__name__)
    if len(samples) == 0:
        raise ContractError('contrastive_pretrain', "empty dataset")
    backbone.unfreeze()
    optimizer: AdamW = AdamW(backbone.named_parameters(), train.pretrain_learning_rate, train.weight_decay,
                             (train.beta1, train.beta2), train.eps, train.grad_clip)
    losses: list[float] = []
    rng: Rng = Rng(train.seed, 'pretrain')
    batches = iter(())
    while len(losses) < train.pretrain_steps:
        indices: Optional[np.ndarray] = next(batches, None)
        if indices is None:
            batches = iterate_batches(np.arange(len(samples)), train.pretrain_batch_size, rng)
            continue
        batch: Batch = collate([samples[int(index)] for index in indices])
        with te.Tape() as tape:
            image_features, text_features = backbone.contrastive_features(batch.images, batch.tokens, which)
            loss: Tensor = contrastive_loss(image_features, text_features, train.temperature)
            value: float = float(loss.data)
            if not math.isfinite(value):
                tape.clear()
                raise NonFiniteLossError('contrastive', len(losses))
            optimizer.zero_grad()
            tape.backward(loss)
            grad_norm: float = optimizer.step()
        tape.clear()
        if not math.isfinite(grad_norm):
            raise NonFiniteLossError('grad_norm', len(losses))
        losses.append(value)
        if len(losses) % 50 == 0:
            logger.info("pretrain step %i: contrastive loss %.4f" % (len(losses), value))
    if train.freeze_backbone:
        backbone.freeze()
    return losses


#####################################
# Training loop:
#####################################
def train(model: RefFormer,
          train_samples: Sequence[GroundingSample],
          val_samples: Sequence[GroundingSample],
          config: TrainConfig,
          output_dir: Optional[str] = None,
          callback: Callback = None,
          ) -> TrainResult:
    """
    Train for config.epochs epochs, evaluating on val_samples after each.
    :param model: RefFormer: Trained in place.
    :param train_samples: Sequence[GroundingSample]: Training set.
    :param val_samples: Sequence[GroundingSample]: Held-out set.
    :param config: TrainConfig: Schedule and loss settings.
    :param output_dir: Optional[str]: Where the step CSV and per-epoch checkpoints go; None writes nothing.
    :param callback: Callback: Run after every epoch with (epoch, model, EpochSummary).
    :raises ContractError: If a sample set is empty.
    :raises NonFiniteLossError: If a loss term turns NaN/Inf.
    :return: TrainResult: Per-epoch summaries, every step's breakdown and the final held-out report.
    """
    logger: logging.Logger = logging.getLogger(__name__ + '.' + train.__name__)
    if len(train_samples) == 0 or len(val_samples) == 0:
        raise ContractError('train', "training and validation sets must be nonempty")
    config.validate()
    if config.freeze_backbone:
        model.backbone.freeze()
    optimizer: AdamW = AdamW(model.trainable_parameters(), config.learning_rate, config.weight_decay,
                             (config.beta1, config.beta2), config.eps, config.grad_clip)
    log_file = None
    log_writer: Optional[csv.DictWriter] = None
    if output_dir is not None:
        os.makedirs(output_dir, exist_ok=True)
        log_file = open(os.path.join(output_dir, common.TRAIN_LOG_FILE_NAME), 'w', newline='', encoding='utf-8')
        log_writer = csv.DictWriter(log_file, fieldnames=list(TRAIN_LOG_COLUMNS))
        log_writer.writeheader()

    history: list[EpochSummary] = []
    steps: list[StepBreakdown] = []
    report: Optional[EvalReport] = None
    try:
        for epoch in range(1, config.epochs + 1):
            rng: Rng = Rng(config.seed, 'epoch%i' % epoch)
            epoch_steps: list[StepBreakdown] = []
            for indices in iterate_batches(np.arange(len(train_samples)), config.batch_size, rng):
                batch: Batch = collate([train_samples[int(index)] for index in indices])
                breakdown: StepBreakdown = train_step(model, optimizer, batch, config, len(steps))
                steps.append(breakdown)
                epoch_steps.append(breakdown)
                if log_writer is not None:
                    log_writer.writerow(breakdown.as_row())
            mean_terms: dict[str, float] = {
                name: float(np.mean([row.as_row()[name] for row in epoch_steps]))
                for name in ('L_det', 'L_aux', 'L_focal', 'L_dice', 'total')
            }
            report = evaluate(model, val_samples)
            history.append(EpochSummary(epoch, mean_terms, report.prec_at_05, report))
            logger.info("epoch %i/%i: L_det %.4f, L_aux %.4f, total %.4f, val prec@0.5 %.4f"
                        % (epoch, config.epochs, mean_terms['L_det'], mean_terms['L_aux'], mean_terms['total'],
                           report.prec_at_05))
            if output_dir is not None:
                checkpoint.save(os.path.join(output_dir, 'epoch_%03i.rfck' % epoch), model)
            response = __run_callback__(callback, epoch, model, history[-1])
            if isinstance(response, CallbackError):
                logger.warning("epoch %i callback failed: %s" % (epoch, response.message))
    finally:
        if log_file is not None:
            log_file.close()
    report.loss_curve = [summary.mean_terms['total'] for summary in history]
    report.accuracy_curve = [summary.val_prec_at_05 for summary in history]
    if output_dir is not None:
        checkpoint.save(os.path.join(output_dir, 'last.rfck'), model)
    return TrainResult(history, report, steps)


#####################################
# Experiments:
#####################################
ModelFactory = Callable[[QueryStrategy, int], RefFormer]
"""Builds a fresh model for (strategy, seed)."""


@dataclass
class ConvergenceTable:
    rows: list[tuple[str, int, int, float]]
    """(strategy, seed, epoch, prec@0.5) for every trained run and epoch."""
    median_curves: dict[str, list[float]]
    epochs_to_threshold: dict[str, Optional[int]]
    threshold: float
    delta_referential_random: Optional[float] = None
    """Median final-epoch Prec@0.5 of referential minus random-init, when both ran."""


def _record_point(epoch: int, model: RefFormer, summary: EpochSummary, curve: list[float]) -> None:
    curve.append(summary.val_prec_at_05)
    return


def convergence_experiment(strategies: Sequence[QueryStrategy],
                           seeds: Sequence[int],
                           factory: ModelFactory,
                           train_samples: Sequence[GroundingSample],
                           val_samples: Sequence[GroundingSample],
                           config: TrainConfig,
                           threshold: float = CONVERGENCE_THRESHOLD,
                           ) -> ConvergenceTable:
    """
    Train every (strategy, seed) pair under one budget and compare held-out accuracy curves.
    :param strategies: Sequence[QueryStrategy]: At least two.
    :param seeds: Sequence[int]: At least three.
    :param factory: ModelFactory: Fresh model per run.
    :param threshold: float: Prec@0.5 that counts as converged.
    :raises ContractError: On too few strategies or seeds.
    :return: ConvergenceTable: Raw rows, per-strategy median curves and epochs to threshold.
    """
    logger: logging.Logger = logging.getLogger(__name__ + '.' + convergence_experiment.__name__)
    if len(set(strategies)) < 2:
        raise ContractError('convergence_experiment', "needs at least 2 strategies")
    if len(set(seeds)) < 3:
        raise ContractError('convergence_experiment', "needs at least 3 seeds")
    rows: list[tuple[str, int, int, float]] = []
    median_curves: dict[str, list[float]] = {}
    epochs_to_threshold: dict[str, Optional[int]] = {}
    for strategy in strategies:
        curves: list[list[float]] = []
        for seed in seeds:
            curve: list[float] = []
            run_config: TrainConfig = replace(config, seed=seed, strategy=strategy)
            train(factory(strategy, seed), train_samples, val_samples, run_config,
                  callback=(_record_point, (curve,)))
            rows.extend((strategy.value, seed, epoch, value) for epoch, value in enumerate(curve, start=1))
            curves.append(curve)
            logger.info("%s seed %i: final prec@0.5 %.4f" % (strategy.value, seed, curve[-1]))
        median: list[float] = [float(value) for value in np.median(np.asarray(curves), axis=0)]
        median_curves[strategy.value] = median
        reached: list[int] = [epoch for epoch, value in enumerate(median, start=1) if value >= threshold]
        epochs_to_threshold[strategy.value] = reached[0] if len(reached) > 0 else None
    table: ConvergenceTable = ConvergenceTable(rows, median_curves, epochs_to_threshold, threshold)
    referential, random_init = QueryStrategy.REFERENTIAL.value, QueryStrategy.RANDOM_INIT.value
    if referential in median_curves and random_init in median_curves:
        table.delta_referential_random = median_curves[referential][-1] - median_curves[random_init][-1]
    return table


@dataclass
class AblationRow:
    axis: str
    value: str
    seed: int
    prec_at_05: float
    miou: Optional[float]
    diverged: bool

    def as_row(self) -> dict[str, Any]:
        return {'axis': self.axis, 'value': self.value, 'seed': self.seed, 'prec@0.5': self.prec_at_05,
                'miou': '' if self.miou is None else self.miou, 'diverged': str(self.diverged).lower()}


def ablation_sweep(axis: str,
                   values: Sequence[str],
                   seeds: Sequence[int],
                   run_one: Callable[[str, int], EvalReport],
                   ) -> list[AblationRow]:
    """
    Run one training per (value, seed); a NaN/Inf abort is recorded as diverged and the sweep goes on.
    :param axis: str: The swept setting, for the report.
    :param values: Sequence[str]: Its values, as written on the command line.
    :param seeds: Sequence[int]: Seeds per value.
    :param run_one: Callable[[str, int], EvalReport]: Trains and evaluates one configuration.
    :return: list[AblationRow]: One row per run, in value then seed order.
    """
    logger: logging.Logger = logging.getLogger(__name__ + '.' + ablation_sweep.__name__)
    rows: list[AblationRow] = []
    for value in values:
        for seed in seeds:
            try:
                report: EvalReport = run_one(value, seed)
            except NonFiniteLossError as e:
                logger.warning("%s=%r seed %i diverged: %s" % (axis, value, seed, e.message))
                rows.append(AblationRow(axis, value, seed, float('nan'), None, True))
                continue
            rows.append(AblationRow(axis, value, seed, report.prec_at_05, report.miou, False))
    return rows
