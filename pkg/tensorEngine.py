#!/usr/bin/env python3
"""
File: tensorEngine.py
    Dense tensor arithmetic with reverse-mode differentiation over numpy arrays.
        Classes:
            Tape: The ordered record of one forward pass.
            Tensor: An n-dimensional float array that may take part in a tape.
            Rng: A named, seeded, counter-based (Philox) random stream.
        Functions:
            matmul, softmax, log_softmax, layer_norm, concat, maximum, minimum, embedding, where_mask,
            backward, grad_check.
    Recording only happens inside an active Tape, and only for ops with at least one input that requires a
    gradient. Outside a tape every op is a plain numpy evaluation.
"""
import logging
import threading
import zlib
from typing import Any, Callable, Final, Iterable, Optional, Sequence

import numpy as np

from cliExceptions import ContractError, DimensionError
from typeError import __type_error__

#####################################
# Constants:
#####################################
DEFAULT_DTYPE: Final[type] = np.float32
"""Training precision."""
CHECK_DTYPE: Final[type] = np.float64
"""Gradient checking precision."""
MASK_FILL: Final[float] = -1e9
"""Additive logit for masked attention keys; exp() of it underflows to exactly zero."""

_GELU_C: Final[float] = float(np.sqrt(2.0 / np.pi))

#####################################
# Variables:
#####################################
_THREAD_STATE: threading.local = threading.local()
"""Per thread stack of active tapes."""

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


def _tape_stack() -> list['Tape']:
    if not hasattr(_THREAD_STATE, 'stack'):
        _THREAD_STATE.stack = []
    return _THREAD_STATE.stack


def active_tape() -> Optional['Tape']:
    """
    The innermost tape active on this thread.
    :return: Optional[Tape]: The tape, or None when not recording.
    """
    stack: list[Tape] = _tape_stack()
    if len(stack) == 0:
        return None
    return stack[-1]


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


#####################################
# Tape:
#####################################
class _TapeEntry(object):
    __slots__ = ('output', 'parents', 'backward_fn', 'op')

    def __init__(self, output: 'Tensor', parents: tuple['Tensor', ...], backward_fn: BackwardFn, op: str) -> None:
        self.output: Tensor = output
        self.parents: tuple[Tensor, ...] = parents
        self.backward_fn: BackwardFn = backward_fn
        self.op: str = op
        return


class Tape(object):
    """
    Ordered record of the primitive ops of one forward pass.
    Use as a context manager; entries stay until clear() so backward can be replayed.
    """
    def __init__(self) -> None:
        self._entries: list[_TapeEntry] = []
        return

    def __enter__(self) -> 'Tape':
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc_val, exc_tb) -> None:
        stack: list[Tape] = _tape_stack()
        if len(stack) > 0 and stack[-1] is self:
            stack.pop()
        return

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def ops(self) -> list[str]:
        """
        The recorded op names, in recording order.
        :return: list[str]: The op names.
        """
        return [entry.op for entry in self._entries]

    def record(self, output: 'Tensor', parents: tuple['Tensor', ...], backward_fn: BackwardFn, op: str) -> None:
        """
        Append an op to the tape.
        :param output: Tensor: The op result.
        :param parents: tuple[Tensor, ...]: The op inputs, in the order backward_fn returns gradients.
        :param backward_fn: BackwardFn: Maps the output gradient to one gradient (or None) per parent.
        :param op: str: The op name.
        :return: None
        """
        output._tape = self
        output._is_leaf = False
        self._entries.append(_TapeEntry(output, parents, backward_fn, op))
        return

    def clear(self) -> None:
        """
        Drop every recorded op.
        :return: None
        """
        self._entries.clear()
        return

    def backward(self, loss: 'Tensor') -> None:
        """
        Accumulate d(loss)/d(leaf) into .grad of every leaf that requires a gradient.
        Entries are visited once each in reverse recording order, which is a reverse topological order.
        :param loss: Tensor: A scalar recorded on this tape.
        :raises ContractError: If loss is not a scalar, or was not recorded on this tape.
        :return: None
        """
        if loss.size != 1:
            raise ContractError('backward', "loss must be a scalar, got shape %s" % str(loss.shape))
        if loss._tape is not self:
            raise ContractError('backward', "loss was not recorded on this tape")
        pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for entry in reversed(self._entries):
            out_grad: Optional[np.ndarray] = pending.pop(id(entry.output), None)
            if out_grad is None:
                continue
            parent_grads: Sequence[Optional[np.ndarray]] = entry.backward_fn(out_grad)
            for parent, parent_grad in zip(entry.parents, parent_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                parent_grad = _unbroadcast(np.asarray(parent_grad, dtype=parent.dtype), parent.shape)
                if parent._is_leaf:
                    if parent.grad is None:
                        parent.grad = parent_grad.copy()
                    else:
                        parent.grad = parent.grad + parent_grad
                elif id(parent) in pending:
                    pending[id(parent)] = pending[id(parent)] + parent_grad
                else:
                    pending[id(parent)] = parent_grad
        return


#####################################
# Tensor:
#####################################
class Tensor(object):
    """
    Dense row-major float array. Immutable once created, except for gradient accumulation.
    """
    __array_priority__ = 100

    def __init__(self, data: Any, requires_grad: bool = False, dtype: Optional[type] = None) -> None:
        """
        Initialize a tensor.
        :param data: Any: Array-like values.
        :param requires_grad: bool: Accumulate a gradient into .grad during backward.
        :param dtype: Optional[type]: Float type; defaults to the data's float type, else DEFAULT_DTYPE.
        """
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            array: np.ndarray = np.asarray(data)
            if array.dtype not in (np.float32, np.float64):
                array = array.astype(DEFAULT_DTYPE)
        else:
            array = np.asarray(data, dtype=dtype)
        if not isinstance(requires_grad, bool):
            __type_error__('requires_grad', 'bool', requires_grad)
        self.data: np.ndarray = array
        self.requires_grad: bool = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._tape: Optional[Tape] = None
        self._is_leaf: bool = True
        return

    def __repr__(self) -> str:
        return 'Tensor(shape=%s, dtype=%s, requires_grad=%s)' % (self.shape, self.dtype.name, self.requires_grad)

    ###########################
    # Properties:
    ###########################
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._is_leaf

    def numpy(self) -> np.ndarray:
        """
        A copy of the values.
        :return: np.ndarray: The values.
        """
        return self.data.copy()

    def item(self) -> float:
        """
        The value of a one element tensor.
        :return: float: The value.
        """
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        """
        Forget the accumulated gradient.
        :return: None
        """
        self.grad = None
        return

    def backward(self) -> None:
        """
        Run backward from this scalar on the tape it was recorded on.
        :return: None
        """
        backward(self)
        return

    ###########################
    # Operators:
    ###########################
    def __add__(self, other: Any) -> 'Tensor':
        return add(self, other)

    def __radd__(self, other: Any) -> 'Tensor':
        return add(other, self)

    def __sub__(self, other: Any) -> 'Tensor':
        return sub(self, other)

    def __rsub__(self, other: Any) -> 'Tensor':
        return sub(other, self)

    def __mul__(self, other: Any) -> 'Tensor':
        return mul(self, other)

    def __rmul__(self, other: Any) -> 'Tensor':
        return mul(other, self)

    def __truediv__(self, other: Any) -> 'Tensor':
        return div(self, other)

    def __rtruediv__(self, other: Any) -> 'Tensor':
        return div(other, self)

    def __neg__(self) -> 'Tensor':
        return neg(self)

    def __matmul__(self, other: 'Tensor') -> 'Tensor':
        return matmul(self, other)

    def __getitem__(self, index: Any) -> 'Tensor':
        return getitem(self, index)

    ###########################
    # Methods:
    ###########################
    def sum(self, axis: Optional[int | tuple[int, ...]] = None, keepdims: bool = False) -> 'Tensor':
        return tensor_sum(self, axis, keepdims)

    def mean(self, axis: Optional[int | tuple[int, ...]] = None, keepdims: bool = False) -> 'Tensor':
        return mean(self, axis, keepdims)

    def reshape(self, *shape: int) -> 'Tensor':
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def permute(self, *axes: int) -> 'Tensor':
        return permute(self, axes)

    def swap_last(self) -> 'Tensor':
        axes: list[int] = list(range(self.ndim))
        axes[-1], axes[-2] = axes[-2], axes[-1]
        return permute(self, tuple(axes))

    def broadcast_to(self, shape: tuple[int, ...]) -> 'Tensor':
        return broadcast_to(self, shape)

    def exp(self) -> 'Tensor':
        return exp(self)

    def log(self) -> 'Tensor':
        return log(self)

    def sqrt(self) -> 'Tensor':
        return sqrt(self)

    def abs(self) -> 'Tensor':
        return tensor_abs(self)

    def sigmoid(self) -> 'Tensor':
        return sigmoid(self)

    def relu(self) -> 'Tensor':
        return relu(self)

    def gelu(self) -> 'Tensor':
        return gelu(self)

    def softmax(self, axis: int = -1) -> 'Tensor':
        return softmax(self, axis)

    def astype(self, dtype: type) -> 'Tensor':
        """
        A detached copy at another precision.
        :param dtype: type: The float type.
        :return: Tensor: The copy.
        """
        return Tensor(self.data.astype(dtype), requires_grad=self.requires_grad)


class Parameter(Tensor):
    """
    A trainable leaf tensor.
    """
    def __init__(self, data: Any, dtype: Optional[type] = None) -> None:
        Tensor.__init__(self, data, requires_grad=True, dtype=dtype)
        return


#####################################
# Op plumbing:
#####################################
def as_tensor(value: Any, like: Optional[Tensor] = None) -> Tensor:
    """
    Wrap a constant as a tensor, matching the float type of like when given.
    :param value: Any: A Tensor, array or scalar.
    :param like: Optional[Tensor]: The tensor whose dtype constants should take.
    :return: Tensor: The tensor.
    """
    if isinstance(value, Tensor):
        return value
    dtype: type = like.dtype.type if like is not None else DEFAULT_DTYPE
    return Tensor(np.asarray(value, dtype=dtype))


def _result(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn: BackwardFn, op: str) -> Tensor:
    out: Tensor = Tensor(data)
    if any(parent.requires_grad for parent in parents):
        tape: Optional[Tape] = active_tape()
        if tape is not None:
            out.requires_grad = True
            tape.record(out, parents, backward_fn, op)
    return out


def _check_broadcast(operation: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(operation, (a.shape, b.shape))
    return


def _pair(a: Any, b: Any) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, as_tensor(b, a)
    b = as_tensor(b)
    return as_tensor(a, b), b


#####################################
# Elementwise binary ops:
#####################################
def add(a: Any, b: Any) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast('add', a, b)
    return _result(a.data + b.data, (a, b), lambda g: (g, g), 'add')


def sub(a: Any, b: Any) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast('sub', a, b)
    return _result(a.data - b.data, (a, b), lambda g: (g, -g), 'sub')


def mul(a: Any, b: Any) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast('mul', a, b)
    return _result(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data), 'mul')


def div(a: Any, b: Any) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast('div', a, b)
    out_data: np.ndarray = a.data / b.data

    def backward_fn(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return g / b.data, -g * out_data / b.data
    return _result(out_data, (a, b), backward_fn, 'div')


def maximum(a: Any, b: Any) -> Tensor:
    """
    Elementwise maximum; ties send the gradient to a.
    """
    a, b = _pair(a, b)
    _check_broadcast('maximum', a, b)
    pick_a: np.ndarray = a.data >= b.data
    return _result(np.where(pick_a, a.data, b.data), (a, b),
                   lambda g: (g * pick_a, g * ~pick_a), 'maximum')


def minimum(a: Any, b: Any) -> Tensor:
    """
    Elementwise minimum; ties send the gradient to a.
    """
    a, b = _pair(a, b)
    _check_broadcast('minimum', a, b)
    pick_a: np.ndarray = a.data <= b.data
    return _result(np.where(pick_a, a.data, b.data), (a, b),
                   lambda g: (g * pick_a, g * ~pick_a), 'minimum')


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    Matrix product over the last two axes, leading axes broadcast.
    :param a: Tensor: [..., m, k]
    :param b: Tensor: [..., k, n]
    :raises DimensionError: When the inner extents differ.
    :return: Tensor: [..., m, n]
    """
    a, b = _pair(a, b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError('matmul', (a.shape, b.shape))

    def backward_fn(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return np.matmul(g, np.swapaxes(b.data, -1, -2)), np.matmul(np.swapaxes(a.data, -1, -2), g)
    return _result(np.matmul(a.data, b.data), (a, b), backward_fn, 'matmul')


#####################################
# Elementwise unary ops:
#####################################
def neg(x: Tensor) -> Tensor:
    return _result(-x.data, (x,), lambda g: (-g,), 'neg')


def exp(x: Tensor) -> Tensor:
    out_data: np.ndarray = np.exp(x.data)
    return _result(out_data, (x,), lambda g: (g * out_data,), 'exp')


def log(x: Tensor) -> Tensor:
    return _result(np.log(x.data), (x,), lambda g: (g / x.data,), 'log')


def sqrt(x: Tensor) -> Tensor:
    out_data: np.ndarray = np.sqrt(x.data)
    return _result(out_data, (x,), lambda g: (g * 0.5 / out_data,), 'sqrt')


def tensor_abs(x: Tensor) -> Tensor:
    return _result(np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),), 'abs')


def sigmoid(x: Tensor) -> Tensor:
    z: np.ndarray = np.exp(-np.abs(x.data))
    out_data: np.ndarray = np.where(x.data >= 0, 1.0 / (1.0 + z), z / (1.0 + z)).astype(x.dtype)
    return _result(out_data, (x,), lambda g: (g * out_data * (1.0 - out_data),), 'sigmoid')


def relu(x: Tensor) -> Tensor:
    positive: np.ndarray = x.data > 0
    return _result(x.data * positive, (x,), lambda g: (g * positive,), 'relu')


def gelu(x: Tensor) -> Tensor:
    """
    GELU, tanh approximation.
    """
    cube_term: np.ndarray = 0.044715 * x.data ** 3
    t: np.ndarray = np.tanh(_GELU_C * (x.data + cube_term))
    out_data: np.ndarray = 0.5 * x.data * (1.0 + t)

    def backward_fn(g: np.ndarray) -> tuple[np.ndarray]:
        inner_grad: np.ndarray = _GELU_C * (1.0 + 3.0 * 0.044715 * x.data ** 2)
        return (g * (0.5 * (1.0 + t) + 0.5 * x.data * (1.0 - t * t) * inner_grad),)
    return _result(out_data, (x,), backward_fn, 'gelu')


#####################################
# Reductions and shape ops:
#####################################
def tensor_sum(x: Tensor, axis: Optional[int | tuple[int, ...]] = None, keepdims: bool = False) -> Tensor:
    out_data: np.ndarray = np.sum(x.data, axis=axis, keepdims=keepdims)

    def backward_fn(g: np.ndarray) -> tuple[np.ndarray]:
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape),)
    return _result(np.asarray(out_data), (x,), backward_fn, 'sum')


def mean(x: Tensor, axis: Optional[int | tuple[int, ...]] = None, keepdims: bool = False) -> Tensor:
    out_data: np.ndarray = np.mean(x.data, axis=axis, keepdims=keepdims)
    count: int = x.size // max(np.asarray(out_data).size, 1)

    def backward_fn(g: np.ndarray) -> tuple[np.ndarray]:
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, x.shape),)
    return _result(np.asarray(out_data), (x,), backward_fn, 'mean')


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    try:
        out_data: np.ndarray = x.data.reshape(shape)
    except ValueError:
        raise DimensionError('reshape', (x.shape, tuple(shape)))
    return _result(out_data, (x,), lambda g: (g.reshape(x.shape),), 'reshape')


def permute(x: Tensor, axes: tuple[int, ...]) -> Tensor:
    inverse: np.ndarray = np.argsort(axes)
    return _result(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inverse),), 'permute')


def broadcast_to(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    try:
        out_data: np.ndarray = np.broadcast_to(x.data, shape)
    except ValueError:
        raise DimensionError('broadcast_to', (x.shape, tuple(shape)))
    return _result(out_data, (x,), lambda g: (g,), 'broadcast_to')


def getitem(x: Tensor, index: Any) -> Tensor:
    """
    Slice or gather; repeated gather indices accumulate their gradients.
    """
    out_data: np.ndarray = x.data[index]
    parts: tuple = index if isinstance(index, tuple) else (index,)
    advanced: bool = any(isinstance(part, (np.ndarray, list)) for part in parts)

    def backward_fn(g: np.ndarray) -> tuple[np.ndarray]:
        full: np.ndarray = np.zeros_like(x.data)
        if advanced:
            np.add.at(full, index, g)
        else:
            full[index] += g
        return (full,)
    return _result(np.array(out_data), (x,), backward_fn, 'getitem')


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """
    Join tensors along an existing axis.
    :raises DimensionError: When the other extents differ.
    """
    if len(tensors) == 0:
        raise ContractError('concat', "nothing to concatenate")
    tensors = [as_tensor(tensor) for tensor in tensors]
    try:
        out_data: np.ndarray = np.concatenate([tensor.data for tensor in tensors], axis=axis)
    except ValueError:
        raise DimensionError('concat', [tensor.shape for tensor in tensors])
    boundaries: np.ndarray = np.cumsum([tensor.shape[axis] for tensor in tensors])[:-1]

    def backward_fn(g: np.ndarray) -> list[np.ndarray]:
        return np.split(g, boundaries, axis=axis)
    return _result(out_data, tuple(tensors), backward_fn, 'concat')


def split(x: Tensor, sizes: Sequence[int], axis: int = 0) -> list[Tensor]:
    """
    Cut a tensor into consecutive pieces along an axis.
    :param x: Tensor: The tensor to cut.
    :param sizes: Sequence[int]: The piece extents, must add up to the axis extent.
    :param axis: int: The axis.
    :return: list[Tensor]: The pieces.
    """
    if sum(sizes) != x.shape[axis]:
        raise DimensionError('split', (x.shape, tuple(sizes)))
    pieces: list[Tensor] = []
    start: int = 0
    axis = axis % x.ndim
    for size in sizes:
        index: list[slice] = [slice(None)] * x.ndim
        index[axis] = slice(start, start + size)
        pieces.append(getitem(x, tuple(index)))
        start += size
    return pieces


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """
    Row lookup, table[ids].
    """
    ids = np.asarray(ids, dtype=np.int64)

    def backward_fn(g: np.ndarray) -> tuple[np.ndarray]:
        full: np.ndarray = np.zeros_like(table.data)
        np.add.at(full, ids, g)
        return (full,)
    return _result(table.data[ids], (table,), backward_fn, 'embedding')


#####################################
# Normalizations:
#####################################
def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """
    Softmax along axis, with max subtraction.
    """
    shifted: np.ndarray = x.data - np.max(x.data, axis=axis, keepdims=True)
    exps: np.ndarray = np.exp(shifted)
    out_data: np.ndarray = exps / np.sum(exps, axis=axis, keepdims=True)

    def backward_fn(g: np.ndarray) -> tuple[np.ndarray]:
        return (out_data * (g - np.sum(g * out_data, axis=axis, keepdims=True)),)
    return _result(out_data, (x,), backward_fn, 'softmax')


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted: np.ndarray = x.data - np.max(x.data, axis=axis, keepdims=True)
    log_norm: np.ndarray = np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))
    out_data: np.ndarray = shifted - log_norm

    def backward_fn(g: np.ndarray) -> tuple[np.ndarray]:
        return (g - np.exp(out_data) * np.sum(g, axis=axis, keepdims=True),)
    return _result(out_data, (x,), backward_fn, 'log_softmax')


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """
    Normalize the last axis to zero mean and unit variance, then apply gain and bias.
    :param x: Tensor: [..., n]
    :param gain: Tensor: [n]
    :param bias: Tensor: [n]
    :param eps: float: Added to the variance under the square root.
    :raises DimensionError: When gain or bias don't match the last extent.
    :return: Tensor: [..., n]
    """
    if gain.shape != (x.shape[-1],) or bias.shape != (x.shape[-1],):
        raise DimensionError('layer_norm', (x.shape, gain.shape, bias.shape))
    centred: np.ndarray = x.data - x.data.mean(axis=-1, keepdims=True)
    inv_std: np.ndarray = 1.0 / np.sqrt((centred * centred).mean(axis=-1, keepdims=True) + eps)
    normed: np.ndarray = centred * inv_std
    out_data: np.ndarray = normed * gain.data + bias.data

    def backward_fn(g: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        lead_axes: tuple[int, ...] = tuple(range(g.ndim - 1))
        g_normed: np.ndarray = g * gain.data
        g_x: np.ndarray = inv_std * (g_normed - g_normed.mean(axis=-1, keepdims=True)
                                     - normed * (g_normed * normed).mean(axis=-1, keepdims=True))
        return g_x, (g * normed).sum(axis=lead_axes), g.sum(axis=lead_axes)
    return _result(out_data.astype(x.dtype), (x, gain, bias), backward_fn, 'layer_norm')


def where_mask(mask: np.ndarray, x: Tensor, fill: float) -> Tensor:
    """
    Replace positions where mask is True with a constant.
    """
    mask = np.asarray(mask, dtype=bool)
    return _result(np.where(mask, np.asarray(fill, dtype=x.dtype), x.data), (x,),
                   lambda g: (np.where(mask, 0.0, g),), 'where_mask')


#####################################
# Differentiation entry points:
#####################################
def backward(loss: Tensor) -> None:
    """
    Run backward for a scalar on the tape it was recorded on.
    :param loss: Tensor: The scalar.
    :raises ContractError: If loss was never recorded or is not a scalar.
    :return: None
    """
    if loss.size != 1:
        raise ContractError('backward', "loss must be a scalar, got shape %s" % str(loss.shape))
    if loss._tape is None:
        raise ContractError('backward', "loss is not on a tape")
    loss._tape.backward(loss)
    return


def grad_check(f: Callable[[Tensor], Tensor],
               x: Tensor,
               step: float = 1e-4,
               probes: Optional[int] = None,
               rng: Optional['Rng'] = None,
               floor: float = 1e-6,
               ) -> float:
    """
    Compare the taped gradient of f at x against central finite differences.
    :param f: Callable[[Tensor], Tensor]: Deterministic map to a scalar.
    :param x: Tensor: A leaf that requires a gradient; probed in place and restored.
    :param step: float: The finite difference half width h.
    :param probes: Optional[int]: Check this many random coordinates instead of all of them.
    :param rng: Optional[Rng]: Chooses the probed coordinates.
    :param floor: float: Lower bound of the relative error denominator.
    :return: float: max |analytic - numeric| / max(|analytic|, |numeric|, floor).
    """
    logger: logging.Logger = logging.getLogger(__name__ + '.' + grad_check.__name__)
    if step <= 0:
        raise ContractError('grad_check', "step must be positive")
    if not x.requires_grad or not x.is_leaf:
        raise ContractError('grad_check', "x must be a leaf that requires a gradient")
    saved_grad: Optional[np.ndarray] = x.grad
    x.grad = None
    with Tape() as tape:
        value: Tensor = f(x)
        if value._tape is not tape:
            analytic: np.ndarray = np.zeros_like(x.data)
        else:
            tape.backward(value)
            analytic = x.grad if x.grad is not None else np.zeros_like(x.data)
    x.grad = saved_grad

    coordinates: Iterable[tuple[int, ...]]
    if probes is None:
        coordinates = list(np.ndindex(*x.shape))
    else:
        rng = rng if rng is not None else Rng(0, 'grad_check')
        flat: np.ndarray = rng.generator.choice(x.size, size=min(probes, x.size), replace=False)
        coordinates = [np.unravel_index(int(i), x.shape) for i in flat]

    worst: float = 0.0
    for coordinate in coordinates:
        original = x.data[coordinate].copy()
        x.data[coordinate] = original + step
        f_plus: float = float(f(x).data.sum())
        x.data[coordinate] = original - step
        f_minus: float = float(f(x).data.sum())
        x.data[coordinate] = original
        numeric: float = (f_plus - f_minus) / (2.0 * step)
        exact: float = float(analytic[coordinate])
        error: float = abs(exact - numeric) / max(abs(exact), abs(numeric), floor)
        worst = max(worst, error)
    logger.debug("max relative error %.3e over %i coordinates" % (worst, len(list(coordinates))))
    return worst


#####################################
# Random streams:
#####################################
class Rng(object):
    """
    Seeded counter-based random stream. Named children give independent, reproducible sub-streams.
    """
    def __init__(self, seed: int, stream: str = '') -> None:
        """
        Initialize the stream.
        :param seed: int: The run seed.
        :param stream: str: The stream name.
        """
        if not isinstance(seed, (int, np.integer)):
            __type_error__('seed', 'int', seed)
        self._seed: int = int(seed)
        self._stream: str = stream
        key: np.random.SeedSequence = np.random.SeedSequence([self._seed, zlib.crc32(stream.encode('utf-8'))])
        self._generator: np.random.Generator = np.random.Generator(np.random.Philox(key))
        return

    @property
    def seed(self) -> int:
        return self._seed

    @property
    def stream(self) -> str:
        return self._stream

    @property
    def generator(self) -> np.random.Generator:
        return self._generator

    def child(self, name: str) -> 'Rng':
        """
        An independent stream derived from this one's seed and name.
        :param name: str: The child name.
        :return: Rng: The child stream.
        """
        return Rng(self._seed, self._stream + '/' + name)

    def uniform(self, low: float, high: float, shape: tuple[int, ...]) -> np.ndarray:
        return self._generator.uniform(low, high, size=shape)

    def normal(self, mean_value: float, std: float, shape: tuple[int, ...]) -> np.ndarray:
        return self._generator.normal(mean_value, std, size=shape)

    def integers(self, low: int, high: int, size: Optional[int | tuple[int, ...]] = None) -> Any:
        return self._generator.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._generator.permutation(n)
