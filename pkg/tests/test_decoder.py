"""Tests for decoder: fusion levels, prior queries, heads and the inference rule."""
from dataclasses import replace

import numpy as np
import pytest

from backbone import Backbone, text_padding_mask
from cliExceptions import ContractError
from common import DecoderResidual, GlobalToken, MaskUpsample
from decoder import (Decoder, FusionConfig, PredictionSet, interpolation_matrix, object_probability,
                     select_prediction, upsample)
from tensorEngine import Rng, Tensor


@pytest.fixture
def encoded(model_config, images, tokens) -> tuple[dict[int, Tensor], Tensor, np.ndarray]:
    backbone = Backbone(model_config, Rng(0, 'backbone'))
    mask = text_padding_mask(tokens)
    z_v, z_t = backbone.embed_image(images), backbone.embed_text(tokens)
    levels: dict[int, Tensor] = {}
    for index in range(1, backbone.num_layers + 1):
        z_v = backbone.image_layer(index, z_v)
        z_t = backbone.text_layer(index, z_t, mask)
        levels[index] = z_v
    return levels, z_t, tokens


def _decoder(model_config, qa_config, fusion_config) -> Decoder:
    return Decoder(model_config, fusion_config, qa_config.num_queries, qa_config.width, Rng(0, 'decoder'))


class TestInterpolation:
    @pytest.mark.parametrize('mode', list(MaskUpsample))
    def test_rows_sum_to_one(self, mode):
        np.testing.assert_allclose(interpolation_matrix(16, 4, mode).sum(axis=1), 1.0)

    def test_nearest_repeats_cells(self):
        grid = Tensor(np.arange(4.0).reshape(1, 2, 2))
        out = upsample(grid, 4, 4, MaskUpsample.NEAREST)
        np.testing.assert_array_equal(out.data[0], np.kron(np.arange(4.0).reshape(2, 2), np.ones((2, 2))))

    def test_bilinear_keeps_constants(self):
        out = upsample(Tensor(np.full((2, 3, 3), 0.25)), 12, 12, MaskUpsample.BILINEAR)
        assert out.shape == (2, 12, 12)
        np.testing.assert_allclose(out.data, 0.25)


class TestFusionConfig:
    def test_needs_a_level(self, model_config):
        with pytest.raises(ContractError):
            FusionConfig(layers=()).validate(model_config)

    def test_levels_within_depth(self, model_config):
        with pytest.raises(ContractError):
            FusionConfig(layers=(1, 3)).validate(model_config)


class TestDecoder:
    def test_fusion_shapes(self, model_config, qa_config, fusion_config, encoded):
        levels, z_t, tokens = encoded
        decoder = _decoder(model_config, qa_config, fusion_config)
        h_vml, h_t, h_global = decoder.language_guided_fusion(levels, z_t, tokens)
        assert h_vml.shape == (2, model_config.num_patches + 1, model_config.width)
        assert h_t.shape == z_t.shape
        assert h_global.shape == (2, 1, model_config.width)

    def test_missing_level(self, model_config, qa_config, fusion_config, encoded):
        levels, z_t, tokens = encoded
        decoder = _decoder(model_config, qa_config, fusion_config)
        with pytest.raises(ContractError):
            decoder.language_guided_fusion({1: levels[1]}, z_t, tokens)

    def test_eos_global_token(self, model_config, qa_config, fusion_config, encoded):
        levels, z_t, tokens = encoded
        sos = _decoder(model_config, qa_config, fusion_config)
        eos = _decoder(model_config, qa_config, replace(fusion_config, global_token=GlobalToken.EOS))
        _, _, from_sos = sos.language_guided_fusion(levels, z_t, tokens)
        _, _, from_eos = eos.language_guided_fusion(levels, z_t, tokens)
        assert not np.allclose(from_sos.data, from_eos.data)

    def test_query_seed(self, model_config, qa_config, fusion_config):
        decoder = _decoder(model_config, qa_config, fusion_config)
        assert decoder.query_seed(None, 2).shape == (2, qa_config.num_queries, model_config.width)
        prior = Tensor(np.ones((2, qa_config.num_queries, qa_config.width)))
        assert decoder.query_seed(prior, 2).shape == (2, qa_config.num_queries, model_config.width)
        with pytest.raises(ContractError):
            decoder.query_seed(Tensor(np.ones((2, qa_config.num_queries + 1, qa_config.width))), 2)

    @pytest.mark.parametrize('residual', list(DecoderResidual))
    def test_predictions(self, residual, model_config, qa_config, fusion_config, encoded):
        levels, z_t, tokens = encoded
        decoder = _decoder(model_config, qa_config, replace(fusion_config, residual=residual))
        h_vml, h_t, _ = decoder.language_guided_fusion(levels, z_t, tokens)
        prior = Tensor(Rng(0, 'prior').normal(0.0, 1.0, (2, qa_config.num_queries, qa_config.width)))
        output = decoder.decode(prior, h_vml, h_t, text_padding_mask(tokens))
        assert output.attention.shape == (2, qa_config.num_queries, model_config.num_patches + 1)
        predictions = decoder.predict(output)
        assert predictions.boxes.shape == (2, qa_config.num_queries, 4)
        assert predictions.logits.shape == (2, qa_config.num_queries, 2)
        assert np.all((predictions.boxes.data > 0) & (predictions.boxes.data < 1))
        assert predictions.masks is None

    def test_segmentation_head(self, model_config, qa_config, fusion_config, encoded):
        levels, z_t, tokens = encoded
        decoder = _decoder(model_config, qa_config, replace(fusion_config, seg_head=True))
        h_vml, h_t, _ = decoder.language_guided_fusion(levels, z_t, tokens)
        predictions = decoder.predict(decoder.decode(None, h_vml, h_t))
        size = model_config.image_size
        assert predictions.masks.shape == (2, qa_config.num_queries, size, size)
        assert np.all((predictions.masks.data >= 0) & (predictions.masks.data <= 1))

    def test_segmentation_head_needs_the_flag(self, model_config, qa_config, fusion_config, encoded):
        levels, z_t, tokens = encoded
        decoder = _decoder(model_config, qa_config, fusion_config)
        h_vml, h_t, _ = decoder.language_guided_fusion(levels, z_t, tokens)
        output = decoder.decode(None, h_vml, h_t)
        with pytest.raises(ContractError):
            decoder.segmentation_head(output.embeddings, output.multimodal)

    def test_zero_query_gate_degenerates_to_plain_queries(self, model_config, qa_config, fusion_config, encoded):
        levels, z_t, tokens = encoded
        decoder = _decoder(model_config, qa_config, fusion_config)
        last = decoder.query_gate.fc[len(decoder.query_gate.fc) - 1]
        last.weight.data = np.zeros_like(last.weight.data)
        last.bias.data = np.zeros_like(last.bias.data)
        h_vml, h_t, _ = decoder.language_guided_fusion(levels, z_t, tokens)
        prior = Rng(0, 'prior').normal(0.0, 1.0, (2, qa_config.num_queries, qa_config.width))
        first = decoder.decode(Tensor(prior), h_vml, h_t)
        second = decoder.decode(Tensor(prior * 3.0 + 1.0), h_vml, h_t)
        plain = decoder.decode(None, h_vml, h_t)
        np.testing.assert_allclose(first.embeddings.data, second.embeddings.data, atol=1e-6)
        np.testing.assert_allclose(first.embeddings.data, plain.embeddings.data, atol=1e-6)


class TestSelection:
    @staticmethod
    def _predictions(logits) -> PredictionSet:
        logits = np.asarray(logits, dtype=np.float32)[None]
        boxes = np.tile(np.arange(logits.shape[1], dtype=np.float32)[None, :, None] / 10.0, (1, 1, 4))
        return PredictionSet(Tensor(boxes), Tensor(logits))

    def test_highest_object_probability(self):
        selection = select_prediction(self._predictions([[5, 0], [0, 5], [0, 0]]))
        assert selection.indices.tolist() == [1]
        np.testing.assert_allclose(selection.boxes[0], [0.1] * 4)

    def test_ties_take_lowest_index(self):
        assert select_prediction(self._predictions([[0, 1], [0, 1]])).indices.tolist() == [0]

    def test_empty_prediction_set(self):
        empty = PredictionSet(Tensor(np.zeros((1, 0, 4))), Tensor(np.zeros((1, 0, 2))))
        with pytest.raises(ContractError):
            select_prediction(empty)

    def test_object_probability(self):
        np.testing.assert_allclose(object_probability(np.asarray([[0.0, 0.0], [0.0, np.log(3.0)]])), [0.5, 0.75])
