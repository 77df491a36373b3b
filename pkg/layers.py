#!/usr/bin/env python3
"""
File: layers.py
    Parameter containers and the transformer building blocks shared by the encoders, the QA modules and the
    decoder. Everything works on batched token tensors [batch, tokens, channels].
"""
import hashlib
import logging
from typing import Any, Iterator, Optional, Sequence

import numpy as np

import tensorEngine as te
from cliExceptions import ContractError, DimensionError
from tensorEngine import Parameter, Rng, Tensor
from typeError import __type_error__, check_state_dict


#####################################
# Initializers:
#####################################
def uniform_weight(rng: Rng, fan_in: int, shape: tuple[int, ...], dtype: type = te.DEFAULT_DTYPE) -> Parameter:
    """
    Symmetric uniform weights in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
    :param rng: Rng: The stream to draw from.
    :param fan_in: int: The input extent.
    :param shape: tuple[int, ...]: The parameter shape.
    :param dtype: type: The float type.
    :return: Parameter: The new parameter.
    """
    bound: float = 1.0 / np.sqrt(fan_in)
    return Parameter(rng.uniform(-bound, bound, shape), dtype=dtype)


def zeros(shape: tuple[int, ...], dtype: type = te.DEFAULT_DTYPE) -> Parameter:
    return Parameter(np.zeros(shape), dtype=dtype)


def ones(shape: tuple[int, ...], dtype: type = te.DEFAULT_DTYPE) -> Parameter:
    return Parameter(np.ones(shape), dtype=dtype)


#####################################
# Module:
#####################################
class Module(object):
    """
    Base for everything holding parameters. Parameter and Module attributes register themselves, and
    named_parameters() walks them in registration order under dotted names.
    """
    def __init__(self) -> None:
        object.__setattr__(self, '_parameters', {})
        object.__setattr__(self, '_modules', {})
        return

    def __setattr__(self, name: str, value: Any) -> None:
        if isinstance(value, Parameter):
            self._parameters[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)
        return

    def __call__(self, *args, **kwargs) -> Any:
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs) -> Any:
        raise NotImplementedError

    ###########################
    # Parameter access:
    ###########################
    def named_parameters(self, prefix: str = '') -> Iterator[tuple[str, Parameter]]:
        """
        Every parameter under its canonical dotted name.
        :param prefix: str: Prepended to every name.
        :return: Iterator[tuple[str, Parameter]]: (name, parameter) pairs.
        """
        for name, parameter in self._parameters.items():
            yield prefix + name, parameter
        for name, module in self._modules.items():
            yield from module.named_parameters(prefix + name + '.')

    def parameters(self) -> Iterator[Parameter]:
        for _, parameter in self.named_parameters():
            yield parameter

    def parameter_count(self) -> int:
        return sum(parameter.size for parameter in self.parameters())

    def zero_grad(self) -> None:
        for parameter in self.parameters():
            parameter.zero_grad()
        return

    ###########################
    # Freezing:
    ###########################
    def freeze(self) -> None:
        """
        Stop every parameter below this module from accumulating gradients.
        Gradients still flow through the module into whatever feeds it.
        :return: None
        """
        for parameter in self.parameters():
            parameter.requires_grad = False
            parameter.grad = None
        return

    def unfreeze(self) -> None:
        for parameter in self.parameters():
            parameter.requires_grad = True
        return

    @property
    def frozen(self) -> bool:
        """
        True when no parameter below this module is trainable.
        :return: bool: The frozen state.
        """
        return not any(parameter.requires_grad for parameter in self.parameters())

    ###########################
    # State:
    ###########################
    def state_dict(self) -> dict[str, np.ndarray]:
        """
        Copies of every parameter value keyed by canonical name.
        :return: dict[str, np.ndarray]: The state.
        """
        return {name: parameter.numpy() for name, parameter in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        """
        Overwrite parameter values by canonical name.
        :param state: dict[str, np.ndarray]: The values; every parameter must appear exactly once.
        :raises ContractError: On a missing or unexpected name.
        :raises TypeError: If state is not str -> numeric ndarray.
        :raises DimensionError: On a shape mismatch.
        :return: None
        """
        check_state_dict(state)
        own: dict[str, Parameter] = dict(self.named_parameters())
        missing: list[str] = sorted(set(own) - set(state))
        unexpected: list[str] = sorted(set(state) - set(own))
        if len(missing) > 0:
            raise ContractError('load_state_dict', "missing parameters: %s" % ', '.join(missing))
        if len(unexpected) > 0:
            raise ContractError('load_state_dict', "unexpected parameters: %s" % ', '.join(unexpected))
        for name, parameter in own.items():
            value: np.ndarray = np.asarray(state[name])
            if value.shape != parameter.shape:
                raise DimensionError('load_state_dict:' + name, (parameter.shape, value.shape))
            parameter.data = value.astype(parameter.dtype).copy()
            parameter.grad = None
        return

    def astype(self, dtype: type) -> 'Module':
        """
        Convert every parameter in place, e.g. to float64 for gradient checks.
        :param dtype: type: The float type.
        :return: Module: self.
        """
        for parameter in self.parameters():
            parameter.data = parameter.data.astype(dtype)
            parameter.grad = None
        return self

    def checksum(self) -> str:
        """
        SHA-256 over every parameter's name and bytes, in canonical order.
        :return: str: The hex digest.
        """
        digest = hashlib.sha256()
        for name, parameter in self.named_parameters():
            digest.update(name.encode('utf-8'))
            digest.update(np.ascontiguousarray(parameter.data).tobytes())
        return digest.hexdigest()


class ModuleList(Module):
    """
    An indexable list of modules, registered under their position.
    """
    def __init__(self, modules: Sequence[Module] = ()) -> None:
        Module.__init__(self)
        self._items: list[Module] = []
        for module in modules:
            self.append(module)
        return

    def append(self, module: Module) -> None:
        if not isinstance(module, Module):
            __type_error__('module', 'Module', module)
        setattr(self, str(len(self._items)), module)
        self._items.append(module)
        return

    def __len__(self) -> int:
        return len(self._items)

    def __getitem__(self, index: int) -> Module:
        return self._items[index]

    def __iter__(self) -> Iterator[Module]:
        return iter(self._items)


#####################################
# Layers:
#####################################
class Linear(Module):
    """
    y = x W + b, with W stored [in, out].
    """
    def __init__(self,
                 in_features: int,
                 out_features: int,
                 rng: Rng,
                 bias: bool = True,
                 zero_init: bool = False,
                 dtype: type = te.DEFAULT_DTYPE,
                 ) -> None:
        """
        Initialize a Linear layer.
        :param in_features: int: Input channels.
        :param out_features: int: Output channels.
        :param rng: Rng: Initialization stream.
        :param bias: bool: Add a bias.
        :param zero_init: bool: Start with an all zero weight.
        :param dtype: type: The float type.
        """
        Module.__init__(self)
        self.in_features: int = in_features
        self.out_features: int = out_features
        if zero_init:
            self.weight: Parameter = zeros((in_features, out_features), dtype)
        else:
            self.weight = uniform_weight(rng, in_features, (in_features, out_features), dtype)
        self.bias: Optional[Parameter] = None
        if bias:
            self.bias = zeros((out_features,), dtype)
        return

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_features:
            raise DimensionError('linear', (x.shape, self.weight.shape))
        y: Tensor = te.matmul(x, self.weight)
        if self.bias is not None:
            y = y + self.bias
        return y


class LayerNorm(Module):
    def __init__(self, width: int, eps: float = 1e-5, dtype: type = te.DEFAULT_DTYPE) -> None:
        Module.__init__(self)
        self.eps: float = eps
        self.gain: Parameter = ones((width,), dtype)
        self.bias: Parameter = zeros((width,), dtype)
        return

    def forward(self, x: Tensor) -> Tensor:
        return te.layer_norm(x, self.gain, self.bias, self.eps)


class Mlp(Module):
    """
    Linear layers with an activation between consecutive ones, none after the last.
    """
    def __init__(self,
                 dims: Sequence[int],
                 rng: Rng,
                 activation: str = 'gelu',
                 zero_last: bool = False,
                 dtype: type = te.DEFAULT_DTYPE,
                 ) -> None:
        """
        Initialize an Mlp.
        :param dims: Sequence[int]: Channel extents, input first; at least two.
        :param rng: Rng: Initialization stream.
        :param activation: str: 'gelu' or 'relu'.
        :param zero_last: bool: Zero-initialize the last weight.
        :param dtype: type: The float type.
        """
        Module.__init__(self)
        if len(dims) < 2:
            raise ContractError('Mlp', "needs at least an input and an output extent")
        if activation not in ('gelu', 'relu'):
            raise ContractError('Mlp', "unknown activation '%s'" % activation)
        self.activation: str = activation
        self.fc: ModuleList = ModuleList()
        for index in range(len(dims) - 1):
            is_last: bool = index == len(dims) - 2
            self.fc.append(Linear(dims[index], dims[index + 1], rng.child('fc%i' % index),
                                  zero_init=zero_last and is_last, dtype=dtype))
        return

    def forward(self, x: Tensor) -> Tensor:
        for index, layer in enumerate(self.fc):
            x = layer(x)
            if index < len(self.fc) - 1:
                x = te.gelu(x) if self.activation == 'gelu' else te.relu(x)
        return x


class MultiHeadAttention(Module):
    """
    Scaled dot product attention over several heads, with separate query and key/value inputs.
    """
    def __init__(self,
                 query_dim: int,
                 key_dim: int,
                 width: int,
                 heads: int,
                 rng: Rng,
                 out_dim: Optional[int] = None,
                 dtype: type = te.DEFAULT_DTYPE,
                 ) -> None:
        """
        Initialize the attention block.
        :param query_dim: int: Channels of the query tokens.
        :param key_dim: int: Channels of the key/value tokens.
        :param width: int: Inner width, split evenly over heads.
        :param heads: int: Number of heads.
        :param rng: Rng: Initialization stream.
        :param out_dim: Optional[int]: Output channels, defaults to query_dim.
        :param dtype: type: The float type.
        :raises ContractError: If width is not divisible by heads.
        """
        Module.__init__(self)
        if heads < 1 or width % heads != 0:
            raise ContractError('MultiHeadAttention', "width %i is not divisible by %i heads" % (width, heads))
        self.heads: int = heads
        self.width: int = width
        self.head_dim: int = width // heads
        self.scale: float = 1.0 / float(np.sqrt(self.head_dim))
        self.q_proj: Linear = Linear(query_dim, width, rng.child('q'), dtype=dtype)
        self.k_proj: Linear = Linear(key_dim, width, rng.child('k'), dtype=dtype)
        self.v_proj: Linear = Linear(key_dim, width, rng.child('v'), dtype=dtype)
        self.out_proj: Linear = Linear(width, out_dim or query_dim, rng.child('out'), dtype=dtype)
        return

    def _split_heads(self, x: Tensor) -> Tensor:
        batch, tokens, _ = x.shape
        return x.reshape(batch, tokens, self.heads, self.head_dim).permute(0, 2, 1, 3)

    def forward(self,
                query: Tensor,
                key: Tensor,
                value: Optional[Tensor] = None,
                key_padding_mask: Optional[np.ndarray] = None,
                ) -> tuple[Tensor, np.ndarray]:
        """
        Attend from query tokens to key/value tokens.
        :param query: Tensor: [batch, n_query, query_dim]
        :param key: Tensor: [batch, n_key, key_dim]
        :param value: Optional[Tensor]: [batch, n_key, key_dim], defaults to key.
        :param key_padding_mask: Optional[np.ndarray]: [batch, n_key] bool, True keys receive no attention.
        :return: tuple[Tensor, np.ndarray]: The output [batch, n_query, out_dim] and the head averaged
            attention weights [batch, n_query, n_key].
        """
        if value is None:
            value = key
        if query.ndim != 3 or key.ndim != 3 or query.shape[0] != key.shape[0] or key.shape[:2] != value.shape[:2]:
            raise DimensionError('attention', (query.shape, key.shape, value.shape))
        batch, n_query, _ = query.shape
        q: Tensor = self._split_heads(self.q_proj(query))
        k: Tensor = self._split_heads(self.k_proj(key))
        v: Tensor = self._split_heads(self.v_proj(value))
        logits: Tensor = te.matmul(q, k.swap_last()) * self.scale
        if key_padding_mask is not None:
            key_padding_mask = np.asarray(key_padding_mask, dtype=bool)
            if key_padding_mask.shape != key.shape[:2]:
                raise DimensionError('attention mask', (key_padding_mask.shape, key.shape))
            bias: np.ndarray = np.where(key_padding_mask, te.MASK_FILL, 0.0)[:, None, None, :]
            logits = logits + te.as_tensor(bias, logits)
        weights: Tensor = te.softmax(logits, axis=-1)
        mixed: Tensor = te.matmul(weights, v).permute(0, 2, 1, 3).reshape(batch, n_query, self.width)
        return self.out_proj(mixed), weights.data.mean(axis=1)


class TransformerLayer(Module):
    """
    Pre-norm block: z + MHSA(LN(z)), then z + MLP(LN(z)).
    """
    def __init__(self, width: int, heads: int, mlp_ratio: int, rng: Rng, dtype: type = te.DEFAULT_DTYPE) -> None:
        Module.__init__(self)
        self.ln_1: LayerNorm = LayerNorm(width, dtype=dtype)
        self.attn: MultiHeadAttention = MultiHeadAttention(width, width, width, heads, rng.child('attn'), dtype=dtype)
        self.ln_2: LayerNorm = LayerNorm(width, dtype=dtype)
        self.mlp: Mlp = Mlp((width, width * mlp_ratio, width), rng.child('mlp'), dtype=dtype)
        return

    def forward(self, z: Tensor, key_padding_mask: Optional[np.ndarray] = None) -> tuple[Tensor, np.ndarray]:
        logger: logging.Logger = logging.getLogger(__name__ + '.' + self.forward.__name__)
        normed: Tensor = self.ln_1(z)
        attended, weights = self.attn(normed, normed, normed, key_padding_mask)
        z = z + attended
        z = z + self.mlp(self.ln_2(z))
        logger.debug("transformer layer out %s" % str(z.shape))
        return z, weights
