#!/usr/bin/env python3
"""
File: main.py
    Command line entry point: gen-data, pretrain, train, eval, dump-attn, ablate and converge.
"""
import argparse
import logging
import os
import sys
from dataclasses import replace
from typing import Callable, Optional, Sequence

import arguments
import checkpoint
import common
import prettyPrint
import reports
import runCallback
import trainer
import typeError
from backbone import Backbone
from cliExceptions import CheckpointError, Error, GenerationError, NonFiniteLossError
from common import QueryStrategy, out_error, out_info, out_debug
from configFile import ConfigFile, ConfigFileError, RunConfig
from refFormer import RefFormer
from syntheticData import GroundingSample, collate, dataset_split, generate_dataset, load_dataset, write_dataset

runCallback.set_suppress_error(True)  # Suppress errors calling callbacks.
typeError.set_use_logging(True)  # Use Logging.

BACKBONE_CHECKPOINT: str = 'backbone.rfck'
RETRIEVAL_BATCH: int = 16

Command = Callable[[argparse.Namespace, ConfigFile, RunConfig], int]


#########################################
# Helpers:
#########################################
def load_samples(run: RunConfig) -> tuple[list[GroundingSample], list[GroundingSample]]:
    """
    The train and validation samples: from 'train_data' if set, else generated from 'data_seed'.
    :raises ContractError: With fewer than two samples.
    """
    samples: list[GroundingSample]
    if run.train_data != '':
        samples = load_dataset(run.train_data, run.generator)
    else:
        samples = generate_dataset(run.data_seed, run.data_count, run.generator)
    train_indices, val_indices = dataset_split(len(samples), run.data_seed, run.val_fraction)
    out_debug("%i training, %i validation samples" % (train_indices.size, val_indices.size))
    return [samples[int(i)] for i in train_indices], [samples[int(i)] for i in val_indices]


def load_backbone(path: str, backbone: Backbone) -> None:
    """
    Load a backbone from a backbone checkpoint or from the backbone part of a full model checkpoint.
    """
    state = checkpoint.load(path)
    prefix: str = 'backbone.'
    if any(name.startswith(prefix) for name in state):
        state = {name[len(prefix):]: values for name, values in state.items() if name.startswith(prefix)}
    backbone.load_state_dict(state)
    return


def model_for(run: RunConfig, strategy: Optional[QueryStrategy] = None, seed: Optional[int] = None) -> RefFormer:
    """
    A fresh model for run, with a pretrained backbone when 'checkpoint' is set.
    """
    train_config: trainer.TrainConfig = run.train
    if strategy is not None:
        train_config = replace(train_config, strategy=strategy)
    if seed is not None:
        train_config = replace(train_config, seed=seed)
    model: RefFormer = trainer.build_model(run.model, run.qa, run.fusion, train_config)
    if run.checkpoint != '':
        load_backbone(run.checkpoint, model.backbone)
    return model


def trained_model(run: RunConfig) -> RefFormer:
    """A model restored from a full checkpoint."""
    if run.checkpoint == '':
        raise ConfigFileError(10, str_args="--checkpoint is required")
    model: RefFormer = trainer.build_model(run.model, run.qa, run.fusion, run.train)
    checkpoint.load_into(run.checkpoint, model)
    return model


def print_json(value) -> None:
    print(reports.to_json(value))
    return


#########################################
# Commands:
#########################################
def cmd_gen_data(args: argparse.Namespace, config_file: ConfigFile, run: RunConfig) -> int:
    seed: int = args.seed if args.seed is not None else run.data_seed
    count: int = args.count if args.count is not None else run.data_count
    if count < 0:
        raise ConfigFileError(10, str_args="--count must be >= 0")
    samples: list[GroundingSample] = generate_dataset(seed, count, run.generator)
    digest: str = write_dataset(args.out, samples, args.seeds_only)
    out_info("wrote %i samples to %s" % (count, args.out))
    print(digest)
    return common.EXIT_SUCCESS


def cmd_pretrain(args: argparse.Namespace, config_file: ConfigFile, run: RunConfig) -> int:
    train_samples, val_samples = load_samples(run)
    model: RefFormer = model_for(run)
    losses: list[float] = trainer.contrastive_pretrain(model.backbone, train_samples, run.train,
                                                       run.fusion.global_token)
    held_out = collate(val_samples[:RETRIEVAL_BATCH])
    accuracy: float = trainer.retrieval_accuracy(model.backbone, held_out, run.fusion.global_token)
    path: str = os.path.join(run.output_dir, BACKBONE_CHECKPOINT)
    checkpoint.save(path, model.backbone)
    out_info("pretrained for %i steps, held-out retrieval accuracy %.4f" % (len(losses), accuracy))
    print_json({'steps': len(losses), 'final_loss': losses[-1] if len(losses) > 0 else None,
                'retrieval_accuracy': accuracy, 'chance': 1.0 / len(held_out), 'checkpoint': path})
    return common.EXIT_SUCCESS


def cmd_train(args: argparse.Namespace, config_file: ConfigFile, run: RunConfig) -> int:
    train_samples, val_samples = load_samples(run)
    model: RefFormer = model_for(run)
    if run.checkpoint == '' and args.pretrain:
        trainer.contrastive_pretrain(model.backbone, train_samples, run.train, run.fusion.global_token)
    result: trainer.TrainResult = trainer.train(model, train_samples, val_samples, run.train, run.output_dir)
    reports.write_json(os.path.join(run.output_dir, 'eval_report.json'), result.report.as_dict())
    print(reports.eval_report_json(result.report))
    return common.EXIT_SUCCESS


def cmd_eval(args: argparse.Namespace, config_file: ConfigFile, run: RunConfig) -> int:
    model: RefFormer = trained_model(run)
    _, val_samples = load_samples(run)
    print(reports.eval_report_json(trainer.evaluate(model, val_samples)))
    return common.EXIT_SUCCESS


def cmd_dump_attn(args: argparse.Namespace, config_file: ConfigFile, run: RunConfig) -> int:
    model: RefFormer = trained_model(run)
    _, val_samples = load_samples(run)
    if args.stats is not None:
        if args.stats < 1:
            raise ConfigFileError(10, str_args="--stats must be >= 1")
        stats: reports.AttentionStats = reports.attention_statistics(model, val_samples[:args.stats])
        print_json(stats.as_dict())
    path: str = os.path.join(run.output_dir, 'attention_%i.json' % args.sample)
    reports.dump_attention(model, val_samples, args.sample, path)
    out_info("attention maps written to %s" % path)
    return common.EXIT_SUCCESS


def cmd_ablate(args: argparse.Namespace, config_file: ConfigFile, run: RunConfig) -> int:
    seeds: Sequence[int] = args.seeds if args.seeds is not None else [run.train.seed]
    configs: dict[str, RunConfig] = {}
    for value in args.values:
        variant: ConfigFile = config_file.copy()
        variant.set_axis(args.axis, value)
        configs[value] = variant.run_config
    train_samples, val_samples = load_samples(run)

    def run_one(value: str, seed: int) -> trainer.EvalReport:
        variant_run: RunConfig = configs[value]
        model: RefFormer = model_for(variant_run, seed=seed)
        return trainer.train(model, train_samples, val_samples, replace(variant_run.train, seed=seed)).report

    rows: list[trainer.AblationRow] = trainer.ablation_sweep(args.axis, args.values, seeds, run_one)
    path: str = os.path.join(run.output_dir, 'ablation_%s.csv' % args.axis)
    reports.write_ablation_csv(path, rows)
    out_info("%i ablation runs written to %s" % (len(rows), path))
    return common.EXIT_SUCCESS


def cmd_converge(args: argparse.Namespace, config_file: ConfigFile, run: RunConfig) -> int:
    train_samples, val_samples = load_samples(run)
    strategies: list[QueryStrategy] = [QueryStrategy(value) for value in args.strategies]

    def factory(strategy: QueryStrategy, seed: int) -> RefFormer:
        return model_for(run, strategy, seed)

    table: trainer.ConvergenceTable = trainer.convergence_experiment(strategies, args.seeds, factory,
                                                                     train_samples, val_samples, run.train)
    reports.write_convergence_csv(os.path.join(run.output_dir, 'convergence.csv'), table)
    summary: dict = reports.convergence_summary(table)
    reports.write_json(os.path.join(run.output_dir, 'convergence_summary.json'), summary)
    print_json(summary)
    return common.EXIT_SUCCESS


COMMANDS: dict[str, Command] = {
    'gen-data': cmd_gen_data,
    'pretrain': cmd_pretrain,
    'train': cmd_train,
    'eval': cmd_eval,
    'dump-attn': cmd_dump_attn,
    'ablate': cmd_ablate,
    'converge': cmd_converge,
}
"""Command name -> handler."""
WRITES_EFFECTIVE_CONFIG: tuple[str, ...] = ('pretrain', 'train', 'ablate', 'converge')


#########################################
# Main:
#########################################
def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run one command.
    :param argv: Optional[Sequence[str]]: Arguments, default sys.argv[1:].
    :return: int: 0 on success, 1 on a usage or config error, 2 on a runtime error.
    """
    # Setup command line arguments:
    parser = arguments.create_parser()
    try:
        _args: argparse.Namespace = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else common.EXIT_USAGE

    # Parse --debug and --verbose options:
    common.LOG_LEVEL = logging.WARNING
    if _args.debug:
        common.DEBUG = True
        common.VERBOSE = True
        prettyPrint.DEBUG = True
        prettyPrint.VERBOSE = True
        common.LOG_LEVEL = logging.DEBUG
        runCallback.set_suppress_error(False)
    elif _args.verbose:
        common.VERBOSE = True
        prettyPrint.VERBOSE = True
        common.LOG_LEVEL = logging.INFO

    # Load config, and act on arguments:
    try:
        config_file: ConfigFile = ConfigFile(_args.config)
        arguments.act_on_settings(_args, config_file)
        run: RunConfig = config_file.run_config
    except ConfigFileError as e:
        out_error("ConfigFileError: %s" % e.message)
        return common.EXIT_USAGE

    # Start logging, gen-data logs beside its dataset:
    log_dir: str = run.output_dir
    if _args.command == 'gen-data':
        log_dir = os.path.dirname(os.path.abspath(_args.out))
    try:
        os.makedirs(log_dir, exist_ok=True)
    except OSError as e:
        out_error("Failed to create output directory '%s': %s" % (log_dir, str(e.args)))
        return common.EXIT_RUNTIME
    logging.basicConfig(filename=os.path.join(log_dir, common.LOG_FILE_NAME), encoding='utf-8',
                        level=common.LOG_LEVEL, format='%(levelname)s : [%(asctime)s] : (%(name)s) : %(message)s')
    common.LOGGER = logging.getLogger(__name__)
    common.LOGGER.debug("Logging started.")

    try:
        if _args.command in WRITES_EFFECTIVE_CONFIG:
            config_file.save_effective(run.output_dir)
        return COMMANDS[_args.command](_args, config_file, run)
    except ConfigFileError as e:
        out_error("ConfigFileError: %s" % e.message)
        return common.EXIT_USAGE
    except CheckpointError as e:
        out_error("Failed to load checkpoint: %s" % e.message)
    except NonFiniteLossError as e:
        out_error("Training aborted: %s" % e.message)
    except GenerationError as e:
        out_error("Data generation failed: %s" % e.message)
    except Error as e:
        out_error(e.message)
    except OSError as e:
        out_error("I/O error: %s" % str(e))
    return common.EXIT_RUNTIME


if __name__ == '__main__':
    sys.exit(main())
