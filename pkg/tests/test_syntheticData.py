"""Tests for syntheticData: scenes, expressions, tokens, splits, dataset files and batching."""
import numpy as np
import pytest

from cliExceptions import ContractError, DimensionError, VocabularyError
from common import SpecialToken
from syntheticData import (COLOURS, RELATIONS, SHAPES, SIZES, VOCABULARY, WORD_IDS, GeneratorConfig, SceneObject,
                           collate, dataset_hash, dataset_split, decode_mask, denoted, detokenize, encode_mask,
                           generate_dataset, generate_scene, iterate_batches, load_dataset, minimal_expression,
                           parse_expression, render_shape, tight_box, tokenize, write_dataset)
from tensorEngine import Rng


class TestVocabulary:
    def test_reserved_ids(self):
        assert VOCABULARY[SpecialToken.PAD] == '<pad>'
        assert VOCABULARY[SpecialToken.SOS] == '<sos>'
        assert VOCABULARY[SpecialToken.EOS] == '<eos>'

    def test_covers_every_word(self):
        for word in (*SHAPES, *COLOURS, *SIZES, *RELATIONS, 'the', 'on', 'at'):
            assert word in WORD_IDS
        assert sorted(WORD_IDS.values()) == list(range(len(VOCABULARY)))


class TestTokens:
    def test_bracketed_and_padded(self):
        ids = tokenize(['red', 'circle'], 8)
        expected = [SpecialToken.SOS, WORD_IDS['red'], WORD_IDS['circle'], SpecialToken.EOS, 0, 0, 0, 0]
        assert ids.tolist() == expected

    def test_empty_expression(self):
        assert tokenize([], 4).tolist() == [SpecialToken.SOS, SpecialToken.EOS, 0, 0]

    def test_round_trip(self):
        words = ['the', 'small', 'square', 'on', 'the', 'left']
        assert detokenize(tokenize(words)) == words

    def test_unknown_word(self):
        with pytest.raises(VocabularyError):
            tokenize(['purple', 'circle'])

    def test_too_long(self):
        with pytest.raises(DimensionError):
            tokenize(['the'] * 11, 12)


class TestRendering:
    def test_circle_area(self):
        mask = render_shape('circle', 32.0, 32.0, 10.0, 64)
        ring = 2.0 * np.pi * 10.0
        assert abs(int(mask.sum()) - np.pi * 100.0) <= ring

    def test_tight_box(self):
        mask = np.zeros((64, 64), dtype=np.uint8)
        mask[10:20, 30:50] = 1
        np.testing.assert_allclose(tight_box(mask), [40 / 64, 15 / 64, 20 / 64, 10 / 64])

    def test_empty_mask_has_no_box(self):
        with pytest.raises(ContractError):
            tight_box(np.zeros((8, 8)))

    def test_unknown_shape(self):
        with pytest.raises(VocabularyError):
            render_shape('hexagon', 5.0, 5.0, 2.0, 16)


class TestExpressions:
    @staticmethod
    def _scene() -> list[SceneObject]:
        return [SceneObject('circle', 'red', 'small', 10.0, 30.0, 5.0),
                SceneObject('circle', 'red', 'small', 50.0, 30.0, 5.0),
                SceneObject('square', 'blue', 'big', 30.0, 50.0, 10.0)]

    def test_relation_separates_twins(self):
        assert minimal_expression(self._scene(), 0) == ['the', 'circle', 'on', 'the', 'left']
        assert minimal_expression(self._scene(), 1) == ['the', 'circle', 'on', 'the', 'right']

    def test_shortest_attribute_expression(self):
        assert minimal_expression(self._scene(), 2) == ['the', 'square']

    def test_dead_zone(self):
        scene = [SceneObject('circle', 'red', 'small', 30.0, 30.0, 5.0),
                 SceneObject('circle', 'red', 'small', 32.0, 10.0, 5.0)]
        assert denoted(scene, {'shape': 'circle'}, 'left') == []


class TestScenes:
    def test_deterministic(self):
        first, second = generate_scene(0), generate_scene(0)
        np.testing.assert_array_equal(first.image, second.image)
        np.testing.assert_array_equal(first.tokens, second.tokens)
        np.testing.assert_array_equal(first.mask, second.mask)

    def test_sample_invariants(self, samples):
        for sample in samples:
            assert sample.image.shape == (64, 64, 3)
            assert sample.image.min() >= 0.0 and sample.image.max() <= 1.0
            np.testing.assert_allclose(sample.box, tight_box(sample.mask))
            attributes, relation = parse_expression(sample.expression)
            assert denoted(sample.objects, attributes, relation) == [sample.referent]
            referent = sample.objects[sample.referent]
            assert referent.has(attributes)
            assert detokenize(sample.tokens) == sample.expression

    def test_object_count_range(self, samples):
        for sample in samples:
            assert 2 <= len(sample.objects) <= 5

    def test_generator_config(self):
        with pytest.raises(ContractError):
            GeneratorConfig(min_objects=3, max_objects=2).validate()

    def test_dataset_is_a_function_of_its_seed(self):
        first = generate_dataset(3, 4)
        second = generate_dataset(3, 4)
        assert [sample.seed for sample in first] == [sample.seed for sample in second]
        assert len({sample.seed for sample in first}) == 4

    def test_negative_count(self):
        with pytest.raises(ContractError):
            generate_dataset(0, -1)


class TestSplit:
    def test_ten_samples(self):
        train, val = dataset_split(10, 0)
        assert (train.size, val.size) == (9, 1)

    def test_disjoint_and_covering(self):
        train, val = dataset_split(57, 4)
        assert set(train.tolist()).isdisjoint(val.tolist())
        assert sorted(train.tolist() + val.tolist()) == list(range(57))

    def test_same_seed_same_split(self):
        np.testing.assert_array_equal(dataset_split(40, 9)[1], dataset_split(40, 9)[1])

    def test_needs_two_samples(self):
        with pytest.raises(ContractError):
            dataset_split(1, 0)


class TestFiles:
    def test_mask_run_lengths(self):
        mask = np.asarray([[1, 1, 0], [0, 1, 1]], dtype=np.uint8)
        encoded = encode_mask(mask)
        assert encoded['counts'] == [0, 2, 2, 2]
        np.testing.assert_array_equal(decode_mask(encoded), mask)

    @pytest.mark.parametrize('seeds_only', [False, True])
    def test_write_then_load(self, tmp_path, samples, seeds_only):
        path = str(tmp_path / 'data.jsonl')
        digest = write_dataset(path, samples[:3], seeds_only)
        assert digest == dataset_hash(path)
        loaded = load_dataset(path)
        assert len(loaded) == 3
        for original, restored in zip(samples[:3], loaded):
            np.testing.assert_array_equal(original.image, restored.image)
            np.testing.assert_array_equal(original.tokens, restored.tokens)
            np.testing.assert_array_equal(original.mask, restored.mask)
            np.testing.assert_array_equal(original.box, restored.box)

    def test_same_samples_same_hash(self, tmp_path, samples):
        assert (write_dataset(str(tmp_path / 'a.jsonl'), samples[:2])
                == write_dataset(str(tmp_path / 'b.jsonl'), samples[:2]))

    def test_malformed_record(self, tmp_path):
        path = tmp_path / 'bad.jsonl'
        path.write_text('{"tokens": [1, 2]}\n')
        with pytest.raises(ContractError):
            load_dataset(str(path))


class TestBatching:
    def test_collate(self, samples):
        batch = collate(samples[:3])
        assert len(batch) == 3
        assert batch.images.shape == (3, 64, 64, 3)
        assert batch.tokens.shape == (3, 12)
        assert batch.boxes.shape == (3, 4)
        assert batch.masks.shape == (3, 64, 64)

    def test_collate_nothing(self):
        with pytest.raises(ContractError):
            collate([])

    def test_batches_cover_indices(self):
        chunks = list(iterate_batches(np.arange(10), 4))
        assert [chunk.size for chunk in chunks] == [4, 4, 2]
        shuffled = np.concatenate(list(iterate_batches(np.arange(10), 4, Rng(0, 'shuffle'))))
        assert sorted(shuffled.tolist()) == list(range(10))
