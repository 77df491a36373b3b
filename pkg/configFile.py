#!/usr/bin/env python3
"""
File: configFile.py
    Flat 'key = value' run configuration.
        Classes:
            ConfigFileError(Error): Errors generated by ConfigFile.
            RunConfig: Every typed config a command needs.
            ConfigFile(object): Read, override and write a config file.

        Notes:
            Keys and their types come from common.DEFAULT_SETTINGS. One key per line, '#' starts a comment,
            int lists are comma separated and may be empty.
"""
import logging
import os
from dataclasses import dataclass
from enum import Enum
from typing import Any, Final, Optional

import common
from backbone import ModelConfig
from cliExceptions import ContractError, DimensionError, Error
from common import DecoderResidual, GlobalToken, MaskUpsample, QADirection, QueryStrategy
from decoder import FusionConfig
from matchingLosses import LossWeights
from qaModule import QAConfig
from syntheticData import VOCABULARY, GeneratorConfig
from trainer import TrainConfig

# Version:
VERSION: Final[float] = 2.0

SettingValue = int | float | bool | str | list[int]

CHOICES: Final[dict[str, type[Enum]]] = {
    'direction': QADirection,
    'global_token': GlobalToken,
    'decoder_residual': DecoderResidual,
    'mask_upsample': MaskUpsample,
    'query_strategy': QueryStrategy,
}
"""String keys restricted to an enumeration's values."""

ABLATION_AXES: Final[dict[str, str]] = {
    'qa-layers': 'qa_layers',
    'direction': 'direction',
    'fusion-layers': 'fusion_layers',
    'nq': 'num_queries',
    'aux': 'use_aux_loss',
}
"""Ablation axis name -> the setting it sweeps."""

_TRUE_WORDS: Final[tuple[str, ...]] = ('true', 'yes', 'on', '1')
_FALSE_WORDS: Final[tuple[str, ...]] = ('false', 'no', 'off', '0')


class ConfigFileError(Error):
    """
        Config file exception.
            Defines:
                .error_number: int, The error_number number.
                .error_message: str, The message associated with the error_number.
                .str_args: Optional[str], Detail of what went wrong.
    """
    _error_messages: dict[int, str] = {
        0: "No error.",
        1: "Unspecified error.",
        2: "File not found, user specified config file doesn't exist.",
        3: "Permission denied while attempting to read from config file.",
        4: "Permission denied while attempting to write to config file.",
        5: "Malformed line, expected 'key = value'.",
        6: "Unknown config key.",
        7: "Config key given more than once.",
        8: "Value has the wrong type for its key.",
        9: "Value is not one of the allowed choices.",
        10: "Invalid configuration.",
        11: "Unknown ablation axis.",
    }

    def __init__(self, error_number: int, error_message: Optional[str] = None, str_args: Optional[str] = None) -> None:
        """
        Initialize a config file error.
        :param error_number: int: The error number.
        :param error_message: Optional[str]: The error message, defaults to the table entry.
        :param str_args: Optional[str]: Detail of what went wrong.
        """
        self.error_number: int = error_number
        self.error_message: str = error_message if error_message is not None else self._error_messages[error_number]
        self.str_args: Optional[str] = str_args
        message: str = self.error_message if str_args is None else "%s %s" % (self.error_message, str_args)
        super().__init__(message)
        return


#####################################
# Values:
#####################################
def parse_value(key: str, raw: str) -> SettingValue:
    """
    Convert the text of a value to the type of its key's default.
    :param key: str: The setting name.
    :param raw: str: The value text, already stripped.
    :raises ConfigFileError: On an unknown key, wrong type or bad choice.
    :return: SettingValue: The typed value.
    """
    if key not in common.DEFAULT_SETTINGS:
        raise ConfigFileError(6, str_args="'%s'" % key)
    default: SettingValue = common.DEFAULT_SETTINGS[key]
    try:
        if isinstance(default, bool):
            if raw.lower() in _TRUE_WORDS:
                return True
            if raw.lower() in _FALSE_WORDS:
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, list):
            return [int(part) for part in raw.split(',') if part.strip() != '']
    except ValueError:
        raise ConfigFileError(8, str_args="%s = %r, expected %s" % (key, raw, type(default).__name__))
    if key in CHOICES:
        allowed: list[str] = [member.value for member in CHOICES[key]]
        if raw not in allowed:
            raise ConfigFileError(9, str_args="%s = %r, one of %s" % (key, raw, ', '.join(allowed)))
    return raw


def format_value(value: SettingValue) -> str:
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return ','.join(str(item) for item in value)
    return str(value)


def parse_text(text: str) -> dict[str, SettingValue]:
    """
    Parse config text.
    :param text: str: The file contents.
    :raises ConfigFileError: On a malformed line, unknown or repeated key, or bad value; str_args names the line.
    :return: dict[str, SettingValue]: Only the keys present in the text.
    """
    settings: dict[str, SettingValue] = {}
    for line_number, line in enumerate(text.splitlines(), start=1):
        content: str = line.split('#', 1)[0].strip()
        if content == '':
            continue
        if '=' not in content:
            raise ConfigFileError(5, str_args="line %i: %r" % (line_number, line))
        key, raw = (part.strip() for part in content.split('=', 1))
        if key in settings:
            raise ConfigFileError(7, str_args="line %i: '%s'" % (line_number, key))
        settings[key] = parse_value(key, raw)
    return settings


def format_settings(settings: dict[str, SettingValue]) -> str:
    """Every setting, in DEFAULT_SETTINGS order, as config text."""
    lines: list[str] = ["# refGround configuration, version %s" % str(VERSION)]
    lines.extend("%s = %s" % (key, format_value(settings[key])) for key in common.DEFAULT_SETTINGS)
    return '\n'.join(lines) + '\n'


#####################################
# Typed configuration:
#####################################
@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig
    qa: QAConfig
    fusion: FusionConfig
    train: TrainConfig
    generator: GeneratorConfig
    data_seed: int
    data_count: int
    val_fraction: float
    train_data: str
    checkpoint: str
    output_dir: str


def build_run_config(settings: dict[str, Any]) -> RunConfig:
    """
    Build and validate the typed configs.
    :param settings: dict[str, Any]: A complete settings dict.
    :raises ConfigFileError: Error 10 if any config is invalid, e.g. a bad layer set.
    :return: RunConfig: The run configuration.
    """
    try:
        model: ModelConfig = ModelConfig(image_size=settings['image_size'],
                                         patch_size=settings['patch_size'],
                                         width=settings['width'],
                                         layers=settings['layers'],
                                         heads=settings['heads'],
                                         mlp_ratio=settings['mlp_ratio'],
                                         max_text_len=settings['max_text_len'],
                                         vocab_size=len(VOCABULARY),
                                         embed_dim=settings['width'])
        qa: QAConfig = QAConfig(layers=tuple(settings['qa_layers']),
                                width=settings['qa_width'],
                                num_queries=settings['num_queries'],
                                heads=settings['qa_heads'],
                                direction=QADirection(settings['direction']))
        fusion: FusionConfig = FusionConfig(layers=tuple(settings['fusion_layers']),
                                            heads=settings['heads'],
                                            global_token=GlobalToken(settings['global_token']),
                                            residual=DecoderResidual(settings['decoder_residual']),
                                            seg_head=settings['seg_head'],
                                            mask_upsample=MaskUpsample(settings['mask_upsample']))
        weights: LossWeights = LossWeights(iou=settings['lambda_iou'],
                                           l1=settings['lambda_l1'],
                                           ce=settings['lambda_ce'],
                                           aux=settings['lambda_aux'],
                                           focal=settings['lambda_focal'],
                                           dice=settings['lambda_dice'],
                                           no_object=settings['no_object_weight'])
        train: TrainConfig = TrainConfig(epochs=settings['epochs'],
                                         batch_size=settings['batch_size'],
                                         learning_rate=settings['learning_rate'],
                                         weight_decay=settings['weight_decay'],
                                         beta1=settings['beta1'],
                                         beta2=settings['beta2'],
                                         eps=settings['adam_eps'],
                                         grad_clip=settings['grad_clip'] if settings['grad_clip'] > 0 else None,
                                         seed=settings['seed'],
                                         strategy=QueryStrategy(settings['query_strategy']),
                                         direction=QADirection(settings['direction']),
                                         freeze_backbone=settings['freeze_backbone'],
                                         use_aux_loss=settings['use_aux_loss'],
                                         weights=weights,
                                         pretrain_steps=settings['pretrain_steps'],
                                         pretrain_batch_size=settings['pretrain_batch_size'],
                                         pretrain_learning_rate=settings['pretrain_learning_rate'],
                                         temperature=settings['temperature'])
        generator: GeneratorConfig = GeneratorConfig(image_size=settings['image_size'],
                                                     min_objects=settings['min_objects'],
                                                     max_objects=settings['max_objects'],
                                                     max_text_len=settings['max_text_len'])
        qa.validate(model)
        fusion.validate(model)
        train.validate()
        generator.validate()
    except (ContractError, DimensionError) as e:
        raise ConfigFileError(10, str_args=e.message)
    if not 0.0 < settings['val_fraction'] < 1.0:
        raise ConfigFileError(10, str_args="val_fraction must be in (0, 1)")
    if settings['data_count'] < 0:
        raise ConfigFileError(10, str_args="data_count must be >= 0")
    return RunConfig(model, qa, fusion, train, generator,
                     data_seed=settings['data_seed'],
                     data_count=settings['data_count'],
                     val_fraction=settings['val_fraction'],
                     train_data=settings['train_data'],
                     checkpoint=settings['checkpoint'],
                     output_dir=settings['output_dir'])


class ConfigFile(object):
    """Settings loaded from a config file, over the defaults."""
    def __init__(self, file_path: Optional[str] = None, do_load: bool = True) -> None:
        """
        Initialize the config file.
        :param file_path: Optional[str]: The config file, None for defaults only.
        :param do_load: bool: Load the file immediately.
        :raises ConfigFileError: On file and parse errors.
        """
        if file_path is not None and not isinstance(file_path, str):
            raise ConfigFileError(1, str_args="file_path must be str or None")
        self._path: Optional[str] = file_path
        self.settings: dict[str, SettingValue] = {
            key: list(value) if isinstance(value, list) else value for key, value in common.DEFAULT_SETTINGS.items()
        }
        if file_path is not None and do_load:
            self.load()
        return

    @property
    def path(self) -> Optional[str]:
        return self._path

    def load(self) -> None:
        """
        Load the config file over the current settings.
        :raises ConfigFileError: On read or parse errors.
        :return: None
        """
        logger: logging.Logger = logging.getLogger(__name__ + '.' + self.load.__name__)
        try:
            with open(self._path, 'r', encoding='utf-8') as file_handle:
                text: str = file_handle.read()
        except FileNotFoundError as err:
            raise ConfigFileError(2, str_args=str(err.args))
        except PermissionError as err:
            raise ConfigFileError(3, str_args=str(err.args))
        except OSError as err:
            raise ConfigFileError(1, str_args=str(err.args))
        loaded: dict[str, SettingValue] = parse_text(text)
        self.settings.update(loaded)
        logger.debug("loaded %i settings from %s" % (len(loaded), self._path))
        return

    def set(self, key: str, value: SettingValue) -> None:
        """
        Override one setting with an already typed value.
        :raises ConfigFileError: On an unknown key or a value of the wrong type.
        :return: None
        """
        self.settings[key] = parse_value(key, format_value(value))
        return

    def set_text(self, key: str, raw: str) -> None:
        self.settings[key] = parse_value(key, raw.strip())
        return

    def set_axis(self, axis: str, raw: str) -> None:
        """
        Override the setting an ablation axis sweeps.
        :param axis: str: One of ABLATION_AXES.
        :param raw: str: The value as written on the command line; layer sets use ':' or ',' between layers.
        :raises ConfigFileError: On an unknown axis or bad value.
        :return: None
        """
        if axis not in ABLATION_AXES:
            raise ConfigFileError(11, str_args="'%s', one of %s" % (axis, ', '.join(ABLATION_AXES)))
        key: str = ABLATION_AXES[axis]
        if raw.strip().lower() == 'none' and isinstance(common.DEFAULT_SETTINGS[key], list):
            raw = ''
        self.set_text(key, raw.replace(':', ','))
        return

    @property
    def run_config(self) -> RunConfig:
        return build_run_config(self.settings)

    def save(self, file_path: Optional[str] = None) -> str:
        """
        Write every setting.
        :param file_path: Optional[str]: Where to write, defaults to the loaded path.
        :raises ConfigFileError: If the file can't be written.
        :return: str: The path written.
        """
        path: Optional[str] = file_path if file_path is not None else self._path
        if path is None:
            raise ConfigFileError(1, str_args="no path to save to")
        try:
            directory: str = os.path.dirname(path)
            if directory != '':
                os.makedirs(directory, exist_ok=True)
            with open(path, 'w', encoding='utf-8') as file_handle:
                file_handle.write(format_settings(self.settings))
        except PermissionError as err:
            raise ConfigFileError(4, str_args=str(err.args))
        except OSError as err:
            raise ConfigFileError(1, str_args=str(err.args))
        return path

    def save_effective(self, output_dir: str) -> str:
        """Write effective.config into output_dir."""
        return self.save(os.path.join(output_dir, common.CONFIG_FILE_NAME))

    def copy(self) -> 'ConfigFile':
        """An independent ConfigFile with the same path and settings."""
        duplicate: ConfigFile = ConfigFile(self._path, do_load=False)
        duplicate.settings = {key: list(value) if isinstance(value, list) else value
                              for key, value in self.settings.items()}
        return duplicate
