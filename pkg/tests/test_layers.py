"""Tests for layers: parameter registry, freezing, state dicts and the attention blocks."""
import numpy as np
import pytest

import tensorEngine as te
from cliExceptions import ContractError, DimensionError
from layers import Linear, Mlp, Module, ModuleList, MultiHeadAttention, TransformerLayer
from tensorEngine import Rng, Tape, Tensor


class _Pair(Module):
    def __init__(self, rng: Rng) -> None:
        Module.__init__(self)
        self.first = Linear(3, 4, rng.child('first'))
        self.blocks = ModuleList([Linear(4, 2, rng.child('b0')), Linear(2, 2, rng.child('b1'), bias=False)])
        return

    def forward(self, x: Tensor) -> Tensor:
        x = self.first(x)
        for block in self.blocks:
            x = block(x)
        return x


class TestModule:
    def test_canonical_names(self, rng):
        names = [name for name, _ in _Pair(rng).named_parameters()]
        assert names == ['first.weight', 'first.bias', 'blocks.0.weight', 'blocks.0.bias', 'blocks.1.weight']

    def test_parameter_count(self, rng):
        assert _Pair(rng).parameter_count() == 3 * 4 + 4 + 4 * 2 + 2 + 2 * 2

    def test_same_seed_same_weights(self):
        assert _Pair(Rng(1)).checksum() == _Pair(Rng(1)).checksum()
        assert _Pair(Rng(1)).checksum() != _Pair(Rng(2)).checksum()

    def test_state_dict_round_trip(self):
        source, target = _Pair(Rng(1)), _Pair(Rng(2))
        target.load_state_dict(source.state_dict())
        assert target.checksum() == source.checksum()

    def test_load_rejects_missing_and_unexpected(self, rng):
        model = _Pair(rng)
        state = model.state_dict()
        del state['first.bias']
        with pytest.raises(ContractError):
            model.load_state_dict(state)
        state = model.state_dict()
        state['extra'] = np.zeros(1)
        with pytest.raises(ContractError):
            model.load_state_dict(state)

    def test_load_rejects_wrong_shape(self, rng):
        model = _Pair(rng)
        state = model.state_dict()
        state['first.weight'] = np.zeros((4, 3))
        with pytest.raises(DimensionError):
            model.load_state_dict(state)

    def test_frozen_module_gets_no_gradient_but_passes_one(self, rng):
        model = _Pair(rng)
        model.first.freeze()
        x = Tensor(np.ones((2, 3)), requires_grad=True)
        with Tape() as tape:
            tape.backward(model(x).sum())
        assert model.first.weight.grad is None
        assert model.blocks[0].weight.grad is not None
        assert x.grad is not None and np.abs(x.grad).sum() > 0

    def test_freeze_then_unfreeze(self, rng):
        model = _Pair(rng)
        model.freeze()
        assert model.frozen
        model.unfreeze()
        assert not model.frozen


class TestBlocks:
    def test_linear_shape_check(self, rng):
        with pytest.raises(DimensionError):
            Linear(3, 2, rng)(Tensor(np.ones((1, 4))))

    def test_zero_init(self, rng):
        layer = Linear(3, 2, rng, zero_init=True)
        np.testing.assert_array_equal(layer(Tensor(np.ones((5, 3)))).data, np.zeros((5, 2)))

    def test_mlp_needs_two_extents(self, rng):
        with pytest.raises(ContractError):
            Mlp((4,), rng)

    def test_attention_weights_are_distributions(self, rng):
        attention = MultiHeadAttention(8, 6, 8, 2, rng)
        query = Tensor(rng.child('q').normal(0.0, 1.0, (2, 3, 8)))
        key = Tensor(rng.child('k').normal(0.0, 1.0, (2, 5, 6)))
        out, weights = attention(query, key)
        assert out.shape == (2, 3, 8)
        assert weights.shape == (2, 3, 5)
        np.testing.assert_allclose(weights.sum(axis=-1), np.ones((2, 3)), atol=1e-5)

    def test_padding_keys_get_no_attention(self, rng):
        attention = MultiHeadAttention(4, 4, 4, 2, rng)
        tokens = Tensor(rng.child('x').normal(0.0, 1.0, (1, 4, 4)))
        mask = np.asarray([[False, False, True, True]])
        _, weights = attention(tokens, tokens, tokens, mask)
        np.testing.assert_array_equal(weights[..., 2:], 0.0)

    def test_heads_must_divide_width(self, rng):
        with pytest.raises(ContractError):
            MultiHeadAttention(6, 6, 6, 4, rng)

    def test_transformer_layer_gradient(self):
        layer = TransformerLayer(4, 2, 2, Rng(0, 'layer')).astype(np.float64)
        x = Tensor(Rng(0, 'x').normal(0.0, 1.0, (1, 3, 4)), requires_grad=True)
        error = te.grad_check(lambda t: (layer(t)[0] * layer(t)[0]).sum(), x)
        assert error < 1e-3
