"""Tests for typeError: state dict checks and the logged TypeError."""
import logging

import numpy as np
import pytest

import checkpoint
from layers import Linear
from tensorEngine import Rng
from typeError import __type_error__, check_state_dict


class TestStateDict:
    def test_accepts_numeric_arrays(self):
        state = {'w': np.zeros(2, np.float32), 'steps': np.arange(3)}
        assert check_state_dict(state) is state

    @pytest.mark.parametrize('state', [[('w', np.zeros(2))], {1: np.zeros(2)}, {'w': [0.0, 1.0]},
                                       {'w': np.asarray(['a', 'b'])}])
    def test_rejects(self, state):
        with pytest.raises(TypeError):
            check_state_dict(state)

    def test_checkpoint_encode_checks_types(self):
        with pytest.raises(TypeError):
            checkpoint.encode({'w': 'not an array'})

    def test_load_state_dict_checks_types(self):
        layer = Linear(2, 2, Rng(0, 'layer'))
        with pytest.raises(TypeError):
            layer.load_state_dict({'weight': [[0.0, 0.0], [0.0, 0.0]], 'bias': np.zeros(2)})


def test_type_error_is_logged(caplog):
    with caplog.at_level(logging.CRITICAL, logger='typeError'):
        with pytest.raises(TypeError, match="'count'"):
            __type_error__('count', 'int', 'three')
    assert "received 'str' type" in caplog.text
