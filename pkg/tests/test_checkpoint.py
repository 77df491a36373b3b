"""Tests for checkpoint: the tensor file layout and its failure modes."""
import struct
import zlib

import numpy as np
import pytest

import checkpoint
from cliExceptions import CheckpointError, ContractError
from layers import Linear
from tensorEngine import Rng


@pytest.fixture
def state() -> dict[str, np.ndarray]:
    return {'a.weight': np.arange(6, dtype=np.float32).reshape(2, 3), 'a.bias': np.asarray([0.5, -1.5], np.float32),
            'scalar': np.asarray(2.0, np.float32)}


def _reseal(body: bytes) -> bytes:
    return body + struct.pack('<I', zlib.crc32(body))


class TestEncoding:
    def test_header(self, state):
        payload = checkpoint.encode(state)
        assert payload[:4] == b'RFCK'
        assert struct.unpack('<II', payload[4:12]) == (1, 3)

    def test_decode_restores_names_shapes_and_order(self, state):
        restored = checkpoint.decode(checkpoint.encode(state))
        assert list(restored) == list(state)
        for name, values in state.items():
            np.testing.assert_array_equal(restored[name], values)
            assert restored[name].dtype == np.float32

    def test_empty_state(self):
        assert checkpoint.decode(checkpoint.encode({})) == {}

    def test_bad_magic(self, state):
        payload = checkpoint.encode(state)
        with pytest.raises(CheckpointError) as error:
            checkpoint.decode(_reseal(b'XXXX' + payload[4:-4]))
        assert error.value.offset == 0

    def test_bad_version(self, state):
        payload = checkpoint.encode(state)
        with pytest.raises(CheckpointError):
            checkpoint.decode(_reseal(payload[:4] + struct.pack('<I', 9) + payload[8:-4]))

    def test_crc_mismatch(self, state):
        payload = bytearray(checkpoint.encode(state))
        payload[-10] ^= 0xFF
        with pytest.raises(CheckpointError):
            checkpoint.decode(bytes(payload))

    def test_truncated(self, state):
        payload = checkpoint.encode(state)
        with pytest.raises(CheckpointError):
            checkpoint.decode(_reseal(payload[:-12]))

    def test_trailing_bytes(self, state):
        payload = checkpoint.encode(state)
        with pytest.raises(CheckpointError):
            checkpoint.decode(_reseal(payload[:-4] + b'\x00\x00'))

    def test_duplicate_name(self):
        single = checkpoint.encode({'w': np.ones(1, np.float32)})[12:-4]
        body = b'RFCK' + struct.pack('<II', 1, 2) + single + single
        with pytest.raises(CheckpointError):
            checkpoint.decode(_reseal(body))

    def test_too_short(self):
        with pytest.raises(CheckpointError):
            checkpoint.decode(b'RFCK')


class TestFiles:
    def test_save_then_load_into(self, tmp_path):
        source = Linear(4, 3, Rng(0, 'source'))
        target = Linear(4, 3, Rng(1, 'target'))
        path = str(tmp_path / 'nested' / 'model.ckpt')
        checkpoint.save(path, source)
        checkpoint.load_into(path, target)
        assert target.checksum() == source.checksum()

    def test_wrong_model(self, tmp_path):
        path = str(tmp_path / 'model.ckpt')
        checkpoint.save(path, Linear(4, 3, Rng(0, 'source')))
        with pytest.raises(ContractError):
            checkpoint.load_into(path, Linear(4, 3, Rng(0, 'other'), bias=False))

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            checkpoint.load(str(tmp_path / 'absent.ckpt'))
