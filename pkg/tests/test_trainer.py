"""Tests for trainer: losses, a training step, evaluation, pretraining and the experiment drivers."""
import csv
import math
import os
from dataclasses import replace

import numpy as np
import pytest

import common
import tensorEngine as te
from cliExceptions import ContractError, NonFiniteLossError
from common import QueryStrategy
from matchingLosses import LossWeights
from optimizer import AdamW
from syntheticData import collate
from tensorEngine import Rng, Tensor, grad_check
from trainer import (TRAIN_LOG_COLUMNS, EvalReport, TrainConfig, ablation_sweep, box_iou, build_model,
                     compute_losses, contrastive_loss, contrastive_pretrain, convergence_experiment, evaluate,
                     first_non_finite, mask_iou, retrieval_accuracy, train, train_step)


@pytest.fixture
def model(model_config, qa_config, fusion_config, train_config):
    return build_model(model_config, qa_config, fusion_config, train_config)


def _optimizer(model, config: TrainConfig) -> AdamW:
    return AdamW(model.trainable_parameters(), config.learning_rate, config.weight_decay,
                 (config.beta1, config.beta2), config.eps, config.grad_clip)


class TestConfig:
    @pytest.mark.parametrize('changes', [{'epochs': 0}, {'learning_rate': 0.0}, {'beta2': 1.0},
                                         {'grad_clip': -1.0}, {'pretrain_steps': -1},
                                         {'weights': LossWeights(iou=-1.0)}])
    def test_rejects(self, changes):
        with pytest.raises(ContractError):
            replace(TrainConfig(), **changes).validate()

    def test_build_model_takes_strategy_and_direction(self, model_config, qa_config, fusion_config):
        config = TrainConfig(strategy=QueryStrategy.ZERO, direction=common.QADirection.TEXT_ONLY)
        model = build_model(model_config, qa_config, fusion_config, config)
        assert model.strategy == QueryStrategy.ZERO
        assert model.qa_config.direction == common.QADirection.TEXT_ONLY


class TestMetrics:
    def test_box_iou(self):
        boxes = np.asarray([[0.5, 0.5, 0.2, 0.2], [0.25, 0.25, 0.5, 0.5]])
        targets = np.asarray([[0.5, 0.5, 0.2, 0.2], [0.5, 0.25, 0.5, 0.5]])
        np.testing.assert_allclose(box_iou(boxes, targets), [1.0, 1.0 / 3.0], rtol=1e-6)

    def test_mask_iou(self):
        truth = np.zeros((4, 4))
        truth[:2] = 1
        predicted = np.zeros((4, 4))
        predicted[1:3] = 0.9
        assert mask_iou(predicted, truth) == pytest.approx(1.0 / 3.0)

    def test_two_empty_masks(self):
        assert mask_iou(np.zeros((3, 3)), np.zeros((3, 3))) == 1.0

    def test_first_non_finite_follows_term_order(self):
        assert first_non_finite({'giou': math.nan, 'l1': math.inf, 'ce': 0.0}) == 'l1'
        assert first_non_finite({'dice': math.nan, 'aux': 1.0}) == 'dice'
        assert first_non_finite({'l1': 0.5}) is None


class TestContrastive:
    def test_single_pair_has_zero_loss(self):
        features = Tensor(np.asarray([[0.3, -1.2, 0.5]]))
        assert contrastive_loss(features, features, 0.07).item() == pytest.approx(0.0, abs=1e-6)

    def test_aligned_pairs(self):
        eye = Tensor(np.eye(3))
        assert contrastive_loss(eye, eye, 0.01).item() == pytest.approx(0.0, abs=1e-6)
        swapped = Tensor(np.eye(3)[[1, 0, 2]])
        assert contrastive_loss(eye, swapped, 0.01).item() > 10.0

    def test_shape_mismatch(self):
        with pytest.raises(ContractError):
            contrastive_loss(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 3))), 0.07)

    def test_pretrain_freezes_when_asked(self, model, samples, train_config):
        losses = contrastive_pretrain(model.backbone, samples[:8], train_config)
        assert len(losses) == train_config.pretrain_steps
        assert all(math.isfinite(loss) for loss in losses)
        assert model.backbone.frozen

    def test_pretrain_can_leave_backbone_trainable(self, model, samples, train_config):
        contrastive_pretrain(model.backbone, samples[:8], replace(train_config, freeze_backbone=False))
        assert not model.backbone.frozen

    def test_pretrain_needs_samples(self, model, train_config):
        with pytest.raises(ContractError):
            contrastive_pretrain(model.backbone, [], train_config)

    def test_retrieval_accuracy_range(self, model, samples):
        accuracy = retrieval_accuracy(model.backbone, collate(samples[:4]))
        assert 0.0 <= accuracy <= 1.0


class TestTrainStep:
    def test_terms_and_update(self, model, samples, train_config):
        model.backbone.freeze()
        backbone_before = model.backbone.checksum()
        before = model.checksum()
        breakdown = train_step(model, _optimizer(model, train_config), collate(samples[:4]), train_config, 0)
        assert math.isfinite(breakdown.total)
        assert breakdown.l_aux > 0.0
        assert breakdown.l_focal == 0.0 and breakdown.l_dice == 0.0
        assert breakdown.lr == train_config.learning_rate
        assert model.checksum() != before
        assert model.backbone.checksum() == backbone_before

    def test_no_aux_loss(self, model, samples, train_config):
        config = replace(train_config, use_aux_loss=False)
        breakdown = train_step(model, _optimizer(model, config), collate(samples[:4]), config, 0)
        assert breakdown.l_aux == 0.0

    def test_segmentation_terms(self, model_config, qa_config, fusion_config, samples, train_config):
        model = build_model(model_config, qa_config, replace(fusion_config, seg_head=True), train_config)
        output = model.forward(collate(samples[:2]).images, collate(samples[:2]).tokens)
        terms = compute_losses(output, collate(samples[:2]), train_config).values()
        assert set(terms) == {'l1', 'giou', 'ce', 'aux', 'focal', 'dice'}
        assert terms['focal'] > 0.0 and terms['dice'] > 0.0

    def test_non_finite_loss_leaves_parameters_alone(self, model, samples, train_config):
        batch = collate(samples[:2])
        batch.images[0] = np.nan
        before = model.checksum()
        with pytest.raises(NonFiniteLossError) as error:
            train_step(model, _optimizer(model, train_config), batch, train_config, 3)
        assert error.value.term == 'l1'
        assert error.value.step == 3
        assert model.checksum() == before

    def test_non_finite_gradient_leaves_parameters_alone(self, model, samples, train_config, monkeypatch):
        backward = te.Tape.backward

        def backward_then_poison(tape, loss):
            backward(tape, loss)
            weight = model.decoder.head.cls.weight
            weight.grad = np.full(weight.shape, np.nan)

        monkeypatch.setattr(te.Tape, 'backward', backward_then_poison)
        optimizer = _optimizer(model, train_config)
        before = model.checksum()
        with pytest.raises(NonFiniteLossError) as error:
            train_step(model, optimizer, collate(samples[:2]), train_config, 5)
        assert error.value.term == 'grad_norm'
        assert error.value.step == 5
        assert model.checksum() == before
        assert optimizer.state.step == 0 and optimizer.state.first_moments == {}

    @pytest.mark.parametrize('name', ['decoder.head.cls.weight', 'aux_head.cls.weight',
                                      'decoder.head.box.fc.2.weight'])
    def test_total_loss_gradient(self, name, model, samples, train_config):
        model.astype(np.float64)
        batch = collate(samples[:2])
        parameter = dict(model.named_parameters())[name]

        def total(_):
            return compute_losses(model.forward(batch.images, batch.tokens), batch, train_config).total

        assert grad_check(total, parameter, probes=20, rng=Rng(0, name)) < 1e-3


class TestEvaluate:
    def test_report(self, model, samples):
        report = evaluate(model, samples[:5])
        assert report.count == 5
        assert 0.0 <= report.prec_at_05 <= 1.0
        assert 0.0 <= report.box_miou <= 1.0
        assert report.miou is None
        assert report.referential_prec_at_05 is not None

    def test_batch_size_does_not_matter(self, model, samples):
        small, large = evaluate(model, samples[:5], batch_size=2), evaluate(model, samples[:5])
        assert small.box_miou == pytest.approx(large.box_miou, rel=1e-4)

    def test_mask_miou_with_segmentation_head(self, model_config, qa_config, fusion_config, train_config, samples):
        model = build_model(model_config, qa_config, replace(fusion_config, seg_head=True), train_config)
        report = evaluate(model, samples[:3])
        assert 0.0 <= report.miou <= 1.0

    def test_no_qa_layers_means_no_referential_readout(self, model_config, qa_config, fusion_config, train_config,
                                                       samples):
        model = build_model(model_config, replace(qa_config, layers=()), fusion_config, train_config)
        assert evaluate(model, samples[:2]).referential_prec_at_05 is None

    def test_empty(self, model):
        with pytest.raises(ContractError):
            evaluate(model, [])


class TestTrain:
    def test_outputs(self, model, samples, train_config, tmp_path):
        seen: list[int] = []

        def record(epoch, _model, summary, into):
            into.append(epoch)
            assert summary.report.count == 4

        result = train(model, samples[:8], samples[8:], train_config, str(tmp_path), (record, (seen,)))
        assert seen == [1]
        assert len(result.history) == 1
        assert len(result.steps) == 2
        assert result.report.loss_curve == [result.history[0].mean_terms['total']]
        with open(tmp_path / common.TRAIN_LOG_FILE_NAME, newline='') as file_handle:
            rows = list(csv.DictReader(file_handle))
        assert list(rows[0].keys()) == list(TRAIN_LOG_COLUMNS)
        assert [int(row['step']) for row in rows] == [0, 1]
        assert os.path.isfile(tmp_path / 'epoch_001.rfck')
        assert os.path.isfile(tmp_path / 'last.rfck')

    def test_frozen_backbone_is_untouched(self, model, samples, train_config):
        before = model.backbone.checksum()
        train(model, samples[:8], samples[8:], train_config)
        assert model.backbone.checksum() == before

    def test_needs_both_sets(self, model, samples, train_config):
        with pytest.raises(ContractError):
            train(model, samples[:8], [], train_config)


class TestExperiments:
    def test_ablation_records_divergence(self):
        def run_one(value, seed):
            if value == 'bad':
                raise NonFiniteLossError('giou', 0)
            return EvalReport(prec_at_05=0.5 + seed / 10.0, box_miou=0.4, count=10)

        rows = ablation_sweep('learning_rate', ['good', 'bad'], [0, 1], run_one)
        assert [(row.value, row.seed, row.diverged) for row in rows] == [
            ('good', 0, False), ('good', 1, False), ('bad', 0, True), ('bad', 1, True)]
        assert rows[1].prec_at_05 == pytest.approx(0.6)
        assert math.isnan(rows[2].prec_at_05)
        assert rows[2].as_row()['diverged'] == 'true'
        assert rows[0].as_row()['miou'] == ''

    @pytest.mark.parametrize('strategies, seeds', [([QueryStrategy.REFERENTIAL], [0, 1, 2]),
                                                   ([QueryStrategy.REFERENTIAL, QueryStrategy.ZERO], [0, 1])])
    def test_convergence_needs_enough_runs(self, strategies, seeds, samples, train_config):
        with pytest.raises(ContractError):
            convergence_experiment(strategies, seeds, lambda strategy, seed: None, samples[:8], samples[8:],
                                   train_config)

    def test_convergence_table(self, model_config, qa_config, fusion_config, samples, train_config):
        def factory(strategy, seed):
            return build_model(model_config, qa_config, fusion_config, replace(train_config, strategy=strategy,
                                                                               seed=seed))

        strategies = [QueryStrategy.REFERENTIAL, QueryStrategy.RANDOM_INIT]
        table = convergence_experiment(strategies, [0, 1, 2], factory, samples[:8], samples[8:], train_config,
                                       threshold=0.0)
        assert len(table.rows) == 6
        assert set(table.median_curves) == {'referential', 'random-init'}
        assert table.epochs_to_threshold == {'referential': 1, 'random-init': 1}
        assert table.delta_referential_random == pytest.approx(
            table.median_curves['referential'][-1] - table.median_curves['random-init'][-1])
