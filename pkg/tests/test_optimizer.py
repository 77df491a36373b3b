"""Tests for optimizer: the AdamW update, clipping and frozen parameters."""
import math

import numpy as np
import pytest

from cliExceptions import ContractError, ParameterError
from optimizer import AdamW, OptimState, adamw_step
from tensorEngine import Parameter, Tape


class TestAdamWStep:
    def test_first_step_moves_by_learning_rate(self):
        parameter = Parameter(np.asarray([1.0], dtype=np.float64))
        state = OptimState(learning_rate=0.1, weight_decay=0.0)
        adamw_step({'p': parameter}, {'p': np.asarray([2.5])}, state)
        np.testing.assert_allclose(parameter.data, [0.9], rtol=1e-6)
        assert state.step == 1

    def test_decay_is_decoupled(self):
        parameter = Parameter(np.asarray([1.0], dtype=np.float64))
        state = OptimState(learning_rate=0.1, weight_decay=0.01)
        adamw_step({'p': parameter}, {'p': np.asarray([1.0])}, state)
        np.testing.assert_allclose(parameter.data, [1.0 - 0.001 - 0.1], rtol=1e-6)

    def test_keeps_dtype(self):
        parameter = Parameter(np.ones(3, dtype=np.float32))
        adamw_step({'p': parameter}, {'p': np.ones(3)}, OptimState())
        assert parameter.dtype == np.float32

    def test_shape_mismatch(self):
        parameter = Parameter(np.ones(3))
        with pytest.raises(ContractError):
            adamw_step({'p': parameter}, {'p': np.ones(4)}, OptimState())

    def test_frozen_parameter_has_no_state(self):
        parameter = Parameter(np.ones(2))
        parameter.requires_grad = False
        state = OptimState()
        adamw_step({'p': parameter}, {'p': np.ones(2)}, state)
        np.testing.assert_array_equal(parameter.data, np.ones(2))
        assert 'p' not in state.first_moments


class TestAdamW:
    def test_clips_global_norm(self):
        parameter = Parameter(np.zeros(2, dtype=np.float64))
        parameter.grad = np.asarray([3.0, 4.0])
        optimizer = AdamW([('p', parameter)], learning_rate=0.1, weight_decay=0.0, grad_clip=1.0)
        assert optimizer.step() == pytest.approx(5.0)
        np.testing.assert_allclose(optimizer.state.first_moments['p'], [0.06, 0.08], rtol=1e-5)

    def test_no_clip(self):
        parameter = Parameter(np.zeros(2, dtype=np.float64))
        parameter.grad = np.asarray([3.0, 4.0])
        optimizer = AdamW([('p', parameter)], learning_rate=0.1, weight_decay=0.0, grad_clip=None)
        optimizer.step()
        np.testing.assert_allclose(optimizer.state.first_moments['p'], [0.3, 0.4])

    @pytest.mark.parametrize('bad', [np.nan, np.inf])
    def test_non_finite_gradient_skips_the_update(self, bad):
        parameter = Parameter(np.ones(2, dtype=np.float64))
        parameter.grad = np.asarray([1.0, bad])
        optimizer = AdamW([('p', parameter)], learning_rate=0.1, grad_clip=1.0)
        assert not math.isfinite(optimizer.step())
        np.testing.assert_array_equal(parameter.data, np.ones(2))
        assert optimizer.state.step == 0
        assert optimizer.state.first_moments == {} and optimizer.state.second_moments == {}

    def test_skips_parameters_without_gradient(self):
        used, unused = Parameter(np.ones(1)), Parameter(np.ones(1))
        used.grad = np.ones(1)
        optimizer = AdamW([('used', used), ('unused', unused)], learning_rate=0.1)
        optimizer.step()
        np.testing.assert_array_equal(unused.data, np.ones(1))
        assert not np.array_equal(used.data, np.ones(1))

    def test_minimizes_a_quadratic(self):
        parameter = Parameter(np.asarray([0.0], dtype=np.float64))
        optimizer = AdamW([('p', parameter)], learning_rate=0.1, weight_decay=0.0)
        for _ in range(300):
            optimizer.zero_grad()
            with Tape() as tape:
                gap = parameter - 3.0
                tape.backward((gap * gap).sum())
            optimizer.step()
        np.testing.assert_allclose(parameter.data, [3.0], atol=0.1)

    @pytest.mark.parametrize('changes, name', [({'learning_rate': 0.0}, 'learning_rate'),
                                               ({'betas': (0.9, 1.0)}, 'betas'),
                                               ({'weight_decay': -0.1}, 'weight_decay'),
                                               ({'eps': 0.0}, 'eps')])
    def test_rejects_bad_hyperparameters(self, changes, name):
        with pytest.raises(ParameterError) as error:
            AdamW([('p', Parameter(np.ones(1)))], **changes)
        assert error.value.param_name == name
