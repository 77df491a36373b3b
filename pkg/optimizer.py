#!/usr/bin/env python3
"""
File: optimizer.py
    AdamW with decoupled weight decay, bias correction and global norm clipping.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from cliExceptions import ContractError, ParameterError
from tensorEngine import Parameter


@dataclass
class OptimState:
    learning_rate: float = 1e-4
    weight_decay: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first_moments: dict[str, np.ndarray] = field(default_factory=dict)
    second_moments: dict[str, np.ndarray] = field(default_factory=dict)


def adamw_step(parameters: dict[str, Parameter], grads: dict[str, np.ndarray], state: OptimState) -> None:
    """
    One AdamW update of every parameter that has a gradient; frozen parameters are skipped and get no state.
    :param parameters: dict[str, Parameter]: Name -> parameter.
    :param grads: dict[str, np.ndarray]: Name -> gradient, for the parameters to update.
    :param state: OptimState: Moments and hyperparameters, updated in place.
    :raises ContractError: If a gradient's shape differs from its parameter's, or the step count is negative.
    :return: None
    """
    if state.step < 0:
        raise ContractError('adamw_step', "step count must be >= 0")
    state.step += 1
    first_correction: float = 1.0 - state.beta1 ** state.step
    second_correction: float = 1.0 - state.beta2 ** state.step
    for name, grad in grads.items():
        parameter: Parameter = parameters[name]
        if not parameter.requires_grad:
            continue
        if grad.shape != parameter.shape:
            raise ContractError('adamw_step', "gradient of '%s' has shape %s, parameter %s"
                                % (name, str(grad.shape), str(parameter.shape)))
        if name not in state.first_moments:
            state.first_moments[name] = np.zeros_like(parameter.data)
            state.second_moments[name] = np.zeros_like(parameter.data)
        m: np.ndarray = state.beta1 * state.first_moments[name] + (1.0 - state.beta1) * grad
        v: np.ndarray = state.beta2 * state.second_moments[name] + (1.0 - state.beta2) * grad * grad
        state.first_moments[name], state.second_moments[name] = m, v
        update: np.ndarray = (m / first_correction) / (np.sqrt(v / second_correction) + state.eps)
        decayed: np.ndarray = parameter.data - state.learning_rate * state.weight_decay * parameter.data
        parameter.data = (decayed - state.learning_rate * update).astype(parameter.dtype)
    return


class AdamW(object):
    """
    Holds the named parameters and the optimizer state between steps.
    """
    def __init__(self,
                 named_parameters: Iterable[tuple[str, Parameter]],
                 learning_rate: float = 1e-4,
                 weight_decay: float = 1e-2,
                 betas: tuple[float, float] = (0.9, 0.999),
                 eps: float = 1e-8,
                 grad_clip: Optional[float] = 1.0,
                 ) -> None:
        """
        Initialize the optimizer.
        :param named_parameters: Iterable[tuple[str, Parameter]]: Every parameter it may update, by name.
        :param learning_rate: float: Step size.
        :param weight_decay: float: Decoupled decay rate.
        :param betas: tuple[float, float]: Moment decay rates.
        :param eps: float: Denominator guard.
        :param grad_clip: Optional[float]: Global gradient norm limit, None disables clipping.
        :raises ParameterError: On a non-positive learning rate or eps, negative decay, or a beta outside [0, 1).
        """
        if not learning_rate > 0:
            raise ParameterError('learning_rate', "must be > 0, got %r" % learning_rate)
        if not eps > 0:
            raise ParameterError('eps', "must be > 0, got %r" % eps)
        if weight_decay < 0:
            raise ParameterError('weight_decay', "must be >= 0, got %r" % weight_decay)
        if not all(0.0 <= beta < 1.0 for beta in betas):
            raise ParameterError('betas', "both must be in [0, 1), got %r" % (betas,))
        self._parameters: dict[str, Parameter] = dict(named_parameters)
        self.grad_clip: Optional[float] = grad_clip
        self.state: OptimState = OptimState(learning_rate, weight_decay, betas[0], betas[1], eps)
        return

    @property
    def learning_rate(self) -> float:
        return self.state.learning_rate

    def zero_grad(self) -> None:
        for parameter in self._parameters.values():
            parameter.zero_grad()
        return

    def step(self) -> float:
        """
        Clip and apply the accumulated gradients of trainable parameters.
        A NaN/Inf norm skips the update: no parameter, moment or step count changes.
        :return: float: The global gradient norm before clipping.
        """
        logger: logging.Logger = logging.getLogger(__name__ + '.' + self.step.__name__)
        grads: dict[str, np.ndarray] = {name: parameter.grad for name, parameter in self._parameters.items()
                                        if parameter.requires_grad and parameter.grad is not None}
        norm: float = float(np.sqrt(sum(float(np.sum(np.square(grad, dtype=np.float64))) for grad in grads.values())))
        if not math.isfinite(norm):
            logger.warning("non-finite grad norm at step %i, update skipped" % (self.state.step + 1))
            return norm
        if self.grad_clip is not None and norm > self.grad_clip:
            scale: float = self.grad_clip / (norm + 1e-6)
            grads = {name: grad * scale for name, grad in grads.items()}
        adamw_step(self._parameters, grads, self.state)
        logger.debug("step %i, grad norm %.4f" % (self.state.step, norm))
        return norm
