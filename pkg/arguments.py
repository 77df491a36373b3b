#!/usr/bin/env python3
"""
File: arguments.py
    Functions to create and handle the arguments to the program.
"""
import argparse
import sys
from typing import NoReturn

import common
from common import QADirection, QueryStrategy
from configFile import ABLATION_AXES, ConfigFile, ConfigFileError


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that exits with the usage exit code."""
    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        common.out_error("%s: %s" % (self.prog, message))
        raise SystemExit(common.EXIT_USAGE)


def _run_options() -> argparse.ArgumentParser:
    """Options shared by every command that builds or trains a model."""
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument('--config',
                        help="A 'key = value' config file, values override the defaults.",
                        type=str
                        )
    parent.add_argument('--set',
                        help="Override one config setting, repeatable. Named options win over it.",
                        dest='overrides',
                        metavar='KEY=VALUE',
                        action='append',
                        default=[]
                        )
    parent.add_argument('--data',
                        help="Dataset file, default is generating 'data_count' scenes from 'data_seed'.",
                        type=str
                        )
    parent.add_argument('--checkpoint',
                        help="Checkpoint file. For train / ablate / converge: a pretrained backbone.",
                        type=str
                        )
    parent.add_argument('--out',
                        help="Output directory.",
                        type=str
                        )
    parent.add_argument('--strategy',
                        help="Decoder query prior.",
                        choices=[strategy.value for strategy in QueryStrategy]
                        )
    parent.add_argument('--direction',
                        help="Which backbone streams QA modules inject into.",
                        choices=[direction.value for direction in QADirection]
                        )
    parent.add_argument('--qa-layers',
                        help="Comma separated QA insertion layers, \"\" for no QA.",
                        dest='qa_layers',
                        type=str
                        )
    parent.add_argument('--fusion-layers',
                        help="Comma separated backbone layers fused by the decoder.",
                        dest='fusion_layers',
                        type=str
                        )
    parent.add_argument('--nq',
                        help="Number of queries.",
                        type=int
                        )
    parent.add_argument('--seed',
                        help="Training / initialization seed.",
                        type=int
                        )
    parent.add_argument('--epochs',
                        help="Training epochs.",
                        type=int
                        )
    parent.add_argument('--seg-head',
                        help="Enable the segmentation head.",
                        dest='seg_head',
                        action='store_true',
                        default=None
                        )
    freeze = parent.add_mutually_exclusive_group()
    freeze.add_argument('--freeze',
                        help="Freeze the backbone while training.",
                        action='store_true',
                        default=None
                        )
    freeze.add_argument('--no-freeze',
                        help="Train the backbone too.",
                        action='store_false',
                        dest='freeze'
                        )
    return parent


def create_parser() -> argparse.ArgumentParser:
    """
    Create and return an argument parser:
    :return: argparse.ArgumentParser
    """
    # Create the parser:
    parser = _Parser(description="Visual grounding with query-adapted frozen dual encoders, on synthetic scenes.")

    # DEBUG or verbose:
    debug_or_verbose = parser.add_mutually_exclusive_group()
    debug_or_verbose.add_argument('--debug',
                                  help="Debugging mode, callback errors are raised. Implies --verbose.",
                                  action='store_true',
                                  default=False
                                  )
    debug_or_verbose.add_argument('--verbose',
                                  help="Produce verbose output.",
                                  action='store_true',
                                  default=False
                                  )
    commands = parser.add_subparsers(dest='command', metavar='COMMAND')
    commands.required = True
    run_options: argparse.ArgumentParser = _run_options()

    # gen-data:
    gen_data = commands.add_parser('gen-data', help="Generate a synthetic grounding dataset.")
    gen_data.add_argument('--config', help="A 'key = value' config file.", type=str)
    gen_data.add_argument('--seed', help="Dataset seed, default 'data_seed'.", type=int)
    gen_data.add_argument('--count', help="Number of scenes, default 'data_count'.", type=int)
    gen_data.add_argument('--out', help="The dataset file to write.", type=str, required=True)
    gen_data.add_argument('--seeds-only',
                          help="Store only scene seeds, regenerated on load.",
                          dest='seeds_only',
                          action='store_true',
                          default=False
                          )

    # pretrain / train / eval:
    commands.add_parser('pretrain', parents=[run_options], help="Contrastively pretrain the backbone.")
    train = commands.add_parser('train', parents=[run_options], help="Train the grounding model.")
    train.add_argument('--pretrain',
                       help="Run contrastive pretraining first when no --checkpoint is given.",
                       action='store_true',
                       default=False
                       )
    commands.add_parser('eval', parents=[run_options], help="Evaluate a checkpoint, JSON report on stdout.")

    # dump-attn:
    dump_attn = commands.add_parser('dump-attn', parents=[run_options], help="Dump QA and decoder attention.")
    dump_attn.add_argument('--sample', help="Validation sample index.", type=int, default=0)
    dump_attn.add_argument('--stats',
                           help="Report the box attention statistic over the first N validation samples.",
                           type=int
                           )

    # ablate:
    ablate = commands.add_parser('ablate', parents=[run_options], help="Sweep one configuration axis.")
    ablate.add_argument('--axis', help="The axis to sweep.", choices=list(ABLATION_AXES), required=True)
    ablate.add_argument('--values',
                        help="Axis values, layer sets written as '2:4:6' or 'none'.",
                        nargs='+',
                        required=True
                        )
    ablate.add_argument('--seeds', help="Seeds per value.", type=int, nargs='+')

    # converge:
    converge = commands.add_parser('converge', parents=[run_options], help="Compare query strategies over epochs.")
    converge.add_argument('--strategies',
                          help="Strategies to compare.",
                          choices=[strategy.value for strategy in QueryStrategy],
                          nargs='+',
                          default=[QueryStrategy.REFERENTIAL.value, QueryStrategy.RANDOM_INIT.value,
                                   QueryStrategy.LINGUISTIC.value]
                          )
    converge.add_argument('--seeds', help="Seeds per strategy.", type=int, nargs='+', default=[0, 1, 2])
    return parser


def act_on_settings(args: argparse.Namespace, config_file: ConfigFile) -> None:
    """
    Override config settings with the command line.
    :param args: argparse.Namespace: The parsed arguments.
    :param config_file: ConfigFile: Updated in place.
    :raises ConfigFileError: On a bad value.
    :return: None
    """
    if args.command == 'gen-data':
        return
    # --set key=value:
    for override in args.overrides:
        key, separator, raw = override.partition('=')
        if separator == '':
            raise ConfigFileError(5, str_args="--set %r" % override)
        config_file.set_text(key.strip(), raw)

    # --data / --checkpoint / --out:
    if args.data is not None:
        config_file.set('train_data', args.data)
    if args.checkpoint is not None:
        config_file.set('checkpoint', args.checkpoint)
    if args.out is not None:
        config_file.set('output_dir', args.out)
    common.out_debug("data = '%s', checkpoint = '%s', out = '%s'"
                     % (config_file.settings['train_data'], config_file.settings['checkpoint'],
                        config_file.settings['output_dir']))

    # --strategy / --direction:
    if args.strategy is not None:
        config_file.set('query_strategy', args.strategy)
    if args.direction is not None:
        config_file.set('direction', args.direction)
    common.out_debug("strategy = %s, direction = %s"
                     % (config_file.settings['query_strategy'], config_file.settings['direction']))

    # --qa-layers / --fusion-layers:
    if args.qa_layers is not None:
        config_file.set_text('qa_layers', args.qa_layers)
    if args.fusion_layers is not None:
        config_file.set_text('fusion_layers', args.fusion_layers)
    common.out_debug("qa layers = %s, fusion layers = %s"
                     % (str(config_file.settings['qa_layers']), str(config_file.settings['fusion_layers'])))

    # --nq / --seed / --epochs:
    if args.nq is not None:
        config_file.set('num_queries', args.nq)
    if args.seed is not None:
        config_file.set('seed', args.seed)
    if args.epochs is not None:
        config_file.set('epochs', args.epochs)

    # --seg-head / --freeze / --no-freeze:
    if args.seg_head is not None:
        config_file.set('seg_head', args.seg_head)
    if args.freeze is not None:
        config_file.set('freeze_backbone', args.freeze)
    common.out_debug("seg head = %s, freeze = %s"
                     % (str(config_file.settings['seg_head']), str(config_file.settings['freeze_backbone'])))
    return
