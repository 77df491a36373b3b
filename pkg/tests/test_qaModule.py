"""Tests for qaModule: block layout, zero-initialized injection, directions and the trace."""
from dataclasses import replace

import numpy as np
import pytest

from backbone import Backbone, ModelConfig, text_padding_mask
from cliExceptions import ContractError, DimensionError
from common import QADirection
from qaModule import QAConfig, QAModule, QAStack
from tensorEngine import Rng, Tape, Tensor


@pytest.fixture
def streams(model_config, images, tokens) -> tuple[Tensor, Tensor, np.ndarray]:
    backbone = Backbone(model_config, Rng(0, 'backbone'))
    mask = text_padding_mask(tokens)
    z_v = backbone.image_layer(1, backbone.embed_image(images))
    z_t = backbone.text_layer(1, backbone.embed_text(tokens), mask)
    return z_v, z_t, mask


class TestConfig:
    def test_defaults_fit_default_backbone(self):
        QAConfig().validate(ModelConfig())

    @pytest.mark.parametrize('layers', [(2, 1), (0,), (3,), (1, 1)])
    def test_layers_must_increase_within_depth(self, layers, model_config):
        with pytest.raises(ContractError):
            QAConfig(layers=layers, width=8, heads=2).validate(model_config)

    def test_width_below_backbone(self, model_config):
        with pytest.raises(ContractError):
            QAConfig(layers=(1,), width=model_config.width, heads=2).validate(model_config)

    def test_empty_layer_set_is_allowed(self, model_config):
        QAConfig(layers=(), width=8, heads=2).validate(model_config)


class TestBlock:
    def test_fresh_block_leaves_backbone_features_unchanged(self, model_config, qa_config, streams):
        z_v, z_t, mask = streams
        block = QAModule(1, model_config, qa_config, Rng(0, 'qa'))
        queries = QAStack(model_config, qa_config, Rng(0, 'stack')).start(2)
        refined, z_v_hat, z_t_hat, entry = block(z_v, z_t, queries, mask)
        np.testing.assert_array_equal(z_v_hat.data, z_v.data)
        np.testing.assert_array_equal(z_t_hat.data, z_t.data)
        assert refined.shape == (2, qa_config.num_queries, qa_config.width)
        assert entry.layer == 1

    def test_attention_shapes(self, model_config, qa_config, streams):
        z_v, z_t, mask = streams
        block = QAModule(1, model_config, qa_config, Rng(0, 'qa'))
        queries = QAStack(model_config, qa_config, Rng(0, 'stack')).start(2)
        _, _, _, entry = block(z_v, z_t, queries, mask)
        tokens_v = model_config.num_patches + 1
        assert entry.query_image_attention.shape == (2, qa_config.num_queries, tokens_v)
        np.testing.assert_allclose(entry.query_image_attention.sum(axis=-1), 1.0, atol=1e-5)
        assert entry.fusion_attention.shape == (2, 1 + qa_config.num_queries + tokens_v, model_config.max_text_len)
        assert entry.text_fusion_attention.shape == (2, 1 + model_config.max_text_len, tokens_v)

    def test_padding_gets_no_fusion_attention(self, model_config, qa_config, streams):
        z_v, z_t, mask = streams
        block = QAModule(1, model_config, qa_config, Rng(0, 'qa'))
        queries = QAStack(model_config, qa_config, Rng(0, 'stack')).start(2)
        _, _, _, entry = block(z_v, z_t, queries, mask)
        assert np.all(entry.fusion_attention[0][:, mask[0]] == 0.0)

    def test_image_only_leaves_text_alone(self, model_config, qa_config, streams):
        z_v, z_t, mask = streams
        config = replace(qa_config, direction=QADirection.IMAGE_ONLY)
        block = QAModule(1, model_config, config, Rng(0, 'qa'))
        block.image_up.weight.data = Rng(1, 'up').normal(0.0, 0.1, block.image_up.weight.shape).astype(np.float32)
        block.text_up.weight.data = Rng(2, 'up').normal(0.0, 0.1, block.text_up.weight.shape).astype(np.float32)
        queries = QAStack(model_config, config, Rng(0, 'stack')).start(2)
        _, z_v_hat, z_t_hat, entry = block(z_v, z_t, queries, mask)
        np.testing.assert_array_equal(z_t_hat.data, z_t.data)
        assert not np.array_equal(z_v_hat.data, z_v.data)
        assert entry.text_fusion_attention is None

    def test_no_injection(self, model_config, qa_config, streams):
        z_v, z_t, mask = streams
        config = replace(qa_config, direction=QADirection.NONE)
        block = QAModule(1, model_config, config, Rng(0, 'qa'))
        block.image_up.weight.data = np.ones(block.image_up.weight.shape, dtype=np.float32)
        queries = QAStack(model_config, config, Rng(0, 'stack')).start(2)
        refined, z_v_hat, z_t_hat, _ = block(z_v, z_t, queries, mask)
        np.testing.assert_array_equal(z_v_hat.data, z_v.data)
        np.testing.assert_array_equal(z_t_hat.data, z_t.data)
        assert refined.shape == queries.shape

    def test_wrong_backbone_width(self, model_config, qa_config):
        block = QAModule(1, model_config, qa_config, Rng(0, 'qa'))
        with pytest.raises(DimensionError):
            block.down_project(Tensor(np.zeros((1, 17, 4))), Tensor(np.zeros((1, 12, 4))))

    def test_zero_init_still_trains_the_up_projection(self, model_config, qa_config, streams):
        z_v, z_t, mask = streams
        block = QAModule(1, model_config, qa_config, Rng(0, 'qa'))
        queries = QAStack(model_config, qa_config, Rng(0, 'stack')).start(2)
        with Tape() as tape:
            _, z_v_hat, _, _ = block(z_v, z_t, queries, mask)
            tape.backward((z_v_hat * z_v_hat).sum())
        assert block.image_up.weight.grad is not None
        assert np.abs(block.image_up.weight.grad).sum() > 0


class TestStack:
    def test_start_repeats_initial_queries(self, model_config, qa_config):
        stack = QAStack(model_config, qa_config, Rng(0, 'stack'))
        start = stack.start(3)
        assert start.shape == (3, qa_config.num_queries, qa_config.width)
        np.testing.assert_array_equal(start.data[2], stack.initial_queries.data)

    def test_unknown_layer(self, model_config, streams):
        z_v, z_t, mask = streams
        config = QAConfig(layers=(2,), width=8, heads=2)
        stack = QAStack(model_config, config, Rng(0, 'stack'))
        assert not stack.is_insertion_layer(1)
        with pytest.raises(ContractError):
            stack.qa_forward(1, z_v, z_t, stack.start(2), mask)
