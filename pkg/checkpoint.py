#!/usr/bin/env python3
"""
File: checkpoint.py
    Named float32 tensor files.
    Layout, all integers little-endian u32:
        magic 'RFCK', version, tensor count,
        per tensor: name length, utf-8 name, ndim, dims..., float32 data,
        CRC32 of every preceding byte.
"""
import logging
import os
import struct
import zlib
from typing import Final

import numpy as np

import common
from cliExceptions import CheckpointError
from layers import Module
from typeError import check_state_dict

_U32: Final[struct.Struct] = struct.Struct('<I')


def encode(state: dict[str, np.ndarray]) -> bytes:
    """
    Serialize a state dict, in its iteration order.
    :param state: dict[str, np.ndarray]: Name -> values, stored as float32.
    :raises TypeError: If state is not str -> numeric ndarray.
    :return: bytes: The file contents.
    """
    check_state_dict(state)
    chunks: list[bytes] = [common.CHECKPOINT_MAGIC, _U32.pack(common.CHECKPOINT_VERSION), _U32.pack(len(state))]
    for name, values in state.items():
        encoded_name: bytes = name.encode('utf-8')
        array: np.ndarray = np.ascontiguousarray(values, dtype='<f4')
        chunks.append(_U32.pack(len(encoded_name)))
        chunks.append(encoded_name)
        chunks.append(_U32.pack(array.ndim))
        chunks.extend(_U32.pack(extent) for extent in array.shape)
        chunks.append(array.tobytes())
    body: bytes = b''.join(chunks)
    return body + _U32.pack(zlib.crc32(body))


class _Reader(object):
    def __init__(self, path: str, payload: bytes) -> None:
        self.path: str = path
        self.payload: bytes = payload
        self.offset: int = 0
        return

    def take(self, count: int, what: str) -> bytes:
        if self.offset + count > len(self.payload):
            raise CheckpointError(self.path, self.offset, "truncated while reading %s" % what)
        chunk: bytes = self.payload[self.offset:self.offset + count]
        self.offset += count
        return chunk

    def u32(self, what: str) -> int:
        return _U32.unpack(self.take(4, what))[0]


def decode(payload: bytes, path: str = '<memory>') -> dict[str, np.ndarray]:
    """
    Parse checkpoint bytes.
    :param payload: bytes: The file contents.
    :param path: str: Named in errors.
    :raises CheckpointError: On a bad magic, version, CRC, truncation, duplicate name or trailing bytes, naming
        the byte offset.
    :return: dict[str, np.ndarray]: Name -> float32 values, in file order.
    """
    if len(payload) < 16:
        raise CheckpointError(path, len(payload), "file too short")
    body, stored_crc = payload[:-4], _U32.unpack(payload[-4:])[0]
    reader: _Reader = _Reader(path, body)
    if reader.take(4, 'magic') != common.CHECKPOINT_MAGIC:
        raise CheckpointError(path, 0, "bad magic")
    version: int = reader.u32('version')
    if version != common.CHECKPOINT_VERSION:
        raise CheckpointError(path, 4, "unsupported version %i" % version)
    if zlib.crc32(body) != stored_crc:
        raise CheckpointError(path, len(body), "CRC mismatch")
    count: int = reader.u32('tensor count')
    state: dict[str, np.ndarray] = {}
    for _ in range(count):
        name_offset: int = reader.offset
        try:
            name: str = reader.take(reader.u32('name length'), 'name').decode('utf-8')
        except UnicodeDecodeError:
            raise CheckpointError(path, name_offset, "name is not utf-8")
        if name in state:
            raise CheckpointError(path, name_offset, "duplicate tensor '%s'" % name)
        ndim: int = reader.u32('ndim')
        shape: tuple[int, ...] = tuple(reader.u32('dims') for _ in range(ndim))
        size: int = int(np.prod(shape, dtype=np.int64))
        data: bytes = reader.take(4 * size, "data of '%s'" % name)
        state[name] = np.frombuffer(data, dtype='<f4').astype(np.float32).reshape(shape)
    if reader.offset != len(body):
        raise CheckpointError(path, reader.offset, "trailing bytes after the tensor table")
    return state


def save(path: str, model: Module) -> None:
    """
    Write every parameter of a model under its canonical name.
    :raises OSError: If the file can't be written.
    :return: None
    """
    logger: logging.Logger = logging.getLogger(__name__ + '.' + save.__name__)
    directory: str = os.path.dirname(path)
    if directory != '':
        os.makedirs(directory, exist_ok=True)
    payload: bytes = encode(model.state_dict())
    with open(path, 'wb') as file_handle:
        file_handle.write(payload)
    logger.info("saved %i bytes to %s" % (len(payload), path))
    return


def load(path: str) -> dict[str, np.ndarray]:
    """
    Read a checkpoint file.
    :raises OSError: If the file can't be read.
    :raises CheckpointError: If the contents are invalid.
    """
    with open(path, 'rb') as file_handle:
        return decode(file_handle.read(), path)


def load_into(path: str, model: Module) -> None:
    """
    Read a checkpoint and overwrite the model's parameters with it.
    """
    model.load_state_dict(load(path))
    return
