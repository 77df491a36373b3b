#!/usr/bin/env python3
"""
File: common.py
-> Store common constants variables, Enums, etc.
"""
import logging
from enum import Enum, IntEnum
from typing import Optional, Final

from prettyPrint import print_debug, print_error, print_info, print_warning

#####################################
# refGround version:
#####################################
APP_VERSION: Final[str] = '1.0.0'

#####################################
# Settings:
#####################################
# Every key a config file may hold, with its default. The type of the default is the type of the key.
DEFAULT_SETTINGS: Final[dict[str, int | float | bool | str | list[int]]] = {
    # Backbone:
    'image_size': 64,
    'patch_size': 8,
    'width': 64,
    'layers': 6,
    'heads': 4,
    'mlp_ratio': 4,
    'max_text_len': 12,
    # Query adaptation:
    'qa_layers': [2, 4, 6],
    'qa_width': 32,
    'qa_heads': 4,
    'num_queries': 3,
    'direction': 'both',
    # Decoder:
    'fusion_layers': [2, 4, 6],
    'global_token': 'sos',
    'decoder_residual': 'printed',
    'seg_head': False,
    'mask_upsample': 'bilinear',
    'query_strategy': 'referential',
    # Losses:
    'lambda_iou': 3.0,
    'lambda_l1': 1.0,
    'lambda_ce': 1.0,
    'lambda_aux': 0.1,
    'lambda_focal': 5.0,
    'lambda_dice': 1.0,
    'no_object_weight': 0.1,
    'use_aux_loss': True,
    # Training:
    'seed': 0,
    'epochs': 30,
    'batch_size': 32,
    'learning_rate': 1e-4,
    'weight_decay': 1e-2,
    'beta1': 0.9,
    'beta2': 0.999,
    'adam_eps': 1e-8,
    'grad_clip': 1.0,
    'freeze_backbone': True,
    # Contrastive pretraining:
    'pretrain_steps': 300,
    'pretrain_batch_size': 32,
    'pretrain_learning_rate': 1e-3,
    'temperature': 0.07,
    # Synthetic data:
    'data_seed': 0,
    'data_count': 5000,
    'min_objects': 2,
    'max_objects': 5,
    'val_fraction': 0.1,
    # Paths:
    'train_data': '',
    'checkpoint': '',
    'output_dir': 'runs',
}
"""The settings for refGround."""

#########################################
# Constants:
#########################################
CONFIG_FILE_NAME: Final[str] = 'effective.config'
"""Name of the effective config file written into every output directory."""
LOG_FILE_NAME: Final[str] = 'refGround.log'
"""Name of the refGround log file."""
TRAIN_LOG_FILE_NAME: Final[str] = 'train_log.csv'
"""Name of the per-step training CSV."""
CHECKPOINT_MAGIC: Final[bytes] = b'RFCK'
"""Checkpoint file magic."""
CHECKPOINT_VERSION: Final[int] = 1
"""Checkpoint format version."""
IOU_THRESHOLD: Final[float] = 0.5
"""Prec@0.5 counts IoU strictly greater than this."""
MASK_THRESHOLD: Final[float] = 0.5
"""Mask probabilities above this are foreground."""

#####################################
# Exit codes:
#####################################
EXIT_SUCCESS: Final[int] = 0
EXIT_USAGE: Final[int] = 1
EXIT_RUNTIME: Final[int] = 2


###################################
# Enumerations:
###################################
class QueryStrategy(Enum):
    """Where the decoder's query seed comes from."""
    REFERENTIAL = 'referential'
    """The last QA module's refined queries."""
    RANDOM_INIT = 'random-init'
    """A randomly initialized learnable query matrix, QA output ignored."""
    LINGUISTIC = 'linguistic-embedding'
    """The projected global text token replicated per query."""
    ZERO = 'zero'
    """Only the zero-initialized decoder queries (vanilla query)."""


class QADirection(Enum):
    """Which backbone streams the QA modules inject into."""
    BOTH = 'both'
    IMAGE_ONLY = 'image-only'
    TEXT_ONLY = 'text-only'
    NONE = 'none'

    @property
    def injects_image(self) -> bool:
        return self in (QADirection.BOTH, QADirection.IMAGE_ONLY)

    @property
    def injects_text(self) -> bool:
        return self in (QADirection.BOTH, QADirection.TEXT_ONLY)


class GlobalToken(Enum):
    """Which text position stands for the whole expression."""
    SOS = 'sos'
    EOS = 'eos'


class DecoderResidual(Enum):
    """How the first decoder attention's residual is formed."""
    PRINTED = 'printed'
    """LN(x) + x on the attention output itself."""
    STANDARD = 'standard'
    """LN(x) + input, a conventional residual."""


class MaskUpsample(Enum):
    """Patch-grid to pixel interpolation for masks."""
    BILINEAR = 'bilinear'
    NEAREST = 'nearest'


class SpecialToken(IntEnum):
    """Reserved vocabulary ids."""
    PAD = 0
    SOS = 1
    EOS = 2


#########################################
# Vars:
#########################################
DEBUG: bool = False
"""True if we should produce debug output."""
VERBOSE: bool = False
"""True if we should produce verbose output."""
LOGGER: Optional[logging.Logger] = None
"""The logger for this module."""
LOG_LEVEL: int = logging.WARNING
"""The level logging was started at."""


def out_info(message: str, force: bool = False) -> None:
    """
    Output an info message to both the log file if logging started, and the console.
    :param message: str: The message to output
    :param force: bool: Override VERBOSE
    :return: None
    """
    global LOGGER
    print_info(message, force=force)
    if LOGGER is not None:
        LOGGER.info(message)
    return


def out_error(message: str) -> None:
    """
    Output an error message to both the log file if logging started and the console.
    :param message: str: The message to output.
    :return: None
    """
    global LOGGER
    print_error(message)
    if LOGGER is not None:
        LOGGER.error(message)
    return


def out_debug(message: str) -> None:
    """
    Output a debug message to both the log file if logging started, and the console.
    :param message: str: The message to output.
    :return: None
    """
    global LOGGER
    print_debug(message)
    if LOGGER is not None:
        LOGGER.debug(message)
    return


def out_warning(message: str) -> None:
    """
    Output a warning message to both the log file if logging started and the console.
    :param message: str: The message to output.
    :return: None
    """
    global LOGGER
    print_warning(message)
    if LOGGER is not None:
        LOGGER.warning(message)
    return
