"""Tests for the command line: exit codes and the gen-data -> pretrain -> train -> eval -> dump-attn flow."""
import hashlib
import json
import os

import pytest

import common
from main import main
from syntheticData import dataset_hash

TINY_CONFIG: str = """
# tiny model for command line tests
image_size = 64
patch_size = 16
width = 16
layers = 2
heads = 2
mlp_ratio = 2
qa_layers = 1,2
qa_width = 8
qa_heads = 2
fusion_layers = 1,2
epochs = 1
batch_size = 4
pretrain_steps = 2
pretrain_batch_size = 4
data_seed = 7
data_count = 12
val_fraction = 0.25
"""


@pytest.fixture
def workspace(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / 'tiny.config').write_text(TINY_CONFIG)
    return tmp_path


class TestUsage:
    def test_no_command(self, workspace):
        assert main([]) == common.EXIT_USAGE

    def test_bad_flag_value(self, workspace):
        assert main(['train', '--nq', 'three']) == common.EXIT_USAGE

    def test_unknown_config_key(self, workspace):
        (workspace / 'bad.config').write_text("depth = 3\n")
        assert main(['train', '--config', 'bad.config']) == common.EXIT_USAGE

    def test_invalid_layer_set(self, workspace):
        assert main(['train', '--config', 'tiny.config', '--qa-layers', '2,1']) == common.EXIT_USAGE

    @pytest.mark.parametrize('override', ['depth=3', 'epochs', 'epochs=many'])
    def test_bad_set_override(self, workspace, override):
        assert main(['train', '--config', 'tiny.config', '--set', override]) == common.EXIT_USAGE

    def test_eval_needs_a_checkpoint(self, workspace):
        assert main(['eval', '--config', 'tiny.config']) == common.EXIT_USAGE

    def test_missing_checkpoint_file(self, workspace):
        assert main(['eval', '--config', 'tiny.config', '--checkpoint', 'absent.rfck']) == common.EXIT_RUNTIME


class TestGenData:
    def test_hash_is_printed_and_stable(self, workspace, capsys):
        assert main(['gen-data', '--seed', '3', '--count', '2', '--out', 'a.jsonl']) == common.EXIT_SUCCESS
        first = capsys.readouterr().out.strip()
        assert main(['gen-data', '--seed', '3', '--count', '2', '--out', 'b.jsonl']) == common.EXIT_SUCCESS
        assert capsys.readouterr().out.strip() == first == dataset_hash('a.jsonl')

    def test_empty_dataset(self, workspace, capsys):
        assert main(['gen-data', '--count', '0', '--out', 'empty.jsonl']) == common.EXIT_SUCCESS
        assert capsys.readouterr().out.strip() == hashlib.sha256(b'').hexdigest()
        assert os.path.getsize('empty.jsonl') == 0

    def test_writes_nothing_under_the_run_directory(self, workspace):
        assert main(['gen-data', '--count', '1', '--out', 'data/one.jsonl']) == common.EXIT_SUCCESS
        assert os.path.isfile(os.path.join('data', 'one.jsonl'))
        assert not os.path.exists(common.DEFAULT_SETTINGS['output_dir'])

    def test_unwritable_path(self, workspace):
        (workspace / 'blocker').write_text('')
        assert main(['gen-data', '--count', '1', '--out', 'blocker/data.jsonl']) == common.EXIT_RUNTIME

    @pytest.mark.slow
    def test_thousand_scenes(self, workspace):
        assert main(['gen-data', '--count', '1000', '--out', 'big.jsonl', '--seeds-only']) == common.EXIT_SUCCESS


class TestPipeline:
    def test_end_to_end(self, workspace, capsys):
        base = ['--config', 'tiny.config', '--data', 'data.jsonl']
        assert main(['gen-data', '--config', 'tiny.config', '--out', 'data.jsonl']) == common.EXIT_SUCCESS
        capsys.readouterr()

        assert main(['pretrain', *base, '--out', 'pre']) == common.EXIT_SUCCESS
        pretrain_report = json.loads(capsys.readouterr().out)
        assert pretrain_report['steps'] == 2
        assert os.path.isfile('pre/backbone.rfck')
        assert os.path.isfile(os.path.join('pre', common.CONFIG_FILE_NAME))

        assert main(['train', *base, '--checkpoint', 'pre/backbone.rfck', '--out', 'run']) == common.EXIT_SUCCESS
        capsys.readouterr()
        for name in ('last.rfck', 'epoch_001.rfck', common.TRAIN_LOG_FILE_NAME, 'eval_report.json',
                     common.CONFIG_FILE_NAME):
            assert os.path.isfile(os.path.join('run', name))

        assert main(['eval', *base, '--checkpoint', 'run/last.rfck', '--out', 'eval']) == common.EXIT_SUCCESS
        evaluated = json.loads(capsys.readouterr().out)
        with open('run/eval_report.json') as file_handle:
            trained = json.load(file_handle)
        assert evaluated['prec@0.5'] == trained['prec@0.5']
        assert evaluated['box_miou'] == trained['box_miou']

        assert main(['dump-attn', *base, '--checkpoint', 'run/last.rfck', '--out', 'dump', '--sample', '1',
                     '--stats', '2']) == common.EXIT_SUCCESS
        stats = json.loads(capsys.readouterr().out)
        assert stats['count'] == 2
        with open('dump/attention_1.json') as file_handle:
            dump = json.load(file_handle)
        assert len(dump['qa_layers']) == 2

        assert main(['dump-attn', *base, '--checkpoint', 'run/last.rfck', '--out', 'dump',
                     '--sample', '99']) == common.EXIT_RUNTIME

    def test_corrupt_checkpoint(self, workspace, capsys):
        assert main(['gen-data', '--config', 'tiny.config', '--out', 'data.jsonl']) == common.EXIT_SUCCESS
        assert main(['train', '--config', 'tiny.config', '--data', 'data.jsonl', '--out', 'run']) == 0
        with open('run/last.rfck', 'r+b') as file_handle:
            file_handle.seek(20)
            byte = file_handle.read(1)
            file_handle.seek(20)
            file_handle.write(bytes([byte[0] ^ 0xFF]))
        capsys.readouterr()
        assert main(['eval', '--config', 'tiny.config', '--data', 'data.jsonl', '--checkpoint', 'run/last.rfck',
                     '--out', 'eval']) == common.EXIT_RUNTIME
        assert 'offset' in capsys.readouterr().err
