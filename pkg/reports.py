#!/usr/bin/env python3
"""
File: reports.py
    Result files: evaluation JSON, convergence and ablation CSVs, attention dumps, and the statistic that checks
    whether QA attention concentrates inside the target box as depth grows.
"""
import csv
import json
import logging
import os
from dataclasses import dataclass
from typing import Any, Final, Sequence

import numpy as np
from scipy.stats import binomtest

from cliExceptions import ContractError
from common import QueryStrategy
from decoder import select_prediction
from matchingLosses import box_cxcywh_to_xyxy
from refFormer import ModelOutput, RefFormer
from syntheticData import Batch, GroundingSample, collate, iterate_batches
from tensorEngine import Tensor
from trainer import EVAL_BATCH_SIZE, AblationRow, ConvergenceTable, EvalReport

#####################################
# Constants:
#####################################
CONVERGENCE_COLUMNS: Final[tuple[str, ...]] = ('strategy', 'seed', 'epoch', 'prec@0.5')
ABLATION_COLUMNS: Final[tuple[str, ...]] = ('axis', 'value', 'seed', 'prec@0.5', 'miou', 'diverged')
STRATEGY_LABELS: Final[dict[str, str]] = {
    QueryStrategy.REFERENTIAL.value: 'referential (last QA module output)',
    QueryStrategy.RANDOM_INIT.value: 'random-init (learned query matrix, QA output unused)',
    QueryStrategy.LINGUISTIC.value: 'linguistic-embedding (global text token replicated per query)',
    QueryStrategy.ZERO.value: 'zero (decoder queries only)',
}
"""How each query strategy is described in reports."""


#####################################
# Writers:
#####################################
def _make_parent(path: str) -> None:
    directory: str = os.path.dirname(path)
    if directory != '':
        os.makedirs(directory, exist_ok=True)
    return


def to_json(value: Any) -> str:
    """Deterministic JSON: sorted keys, two space indent, NaN written as null."""
    def clean(item: Any) -> Any:
        if isinstance(item, dict):
            return {str(key): clean(inner) for key, inner in item.items()}
        if isinstance(item, (list, tuple)):
            return [clean(inner) for inner in item]
        if isinstance(item, np.ndarray):
            return clean(item.tolist())
        if isinstance(item, (np.floating, float)):
            return None if not np.isfinite(item) else float(item)
        if isinstance(item, np.integer):
            return int(item)
        return item
    return json.dumps(clean(value), sort_keys=True, indent=2)


def write_json(path: str, value: Any) -> None:
    """
    Write a value as deterministic JSON.
    :raises OSError: If the file can't be written.
    :return: None
    """
    _make_parent(path)
    with open(path, 'w', encoding='utf-8') as file_handle:
        file_handle.write(to_json(value) + '\n')
    return


def write_csv(path: str, columns: Sequence[str], rows: Sequence[dict[str, Any]]) -> None:
    _make_parent(path)
    with open(path, 'w', newline='', encoding='utf-8') as file_handle:
        writer: csv.DictWriter = csv.DictWriter(file_handle, fieldnames=list(columns))
        writer.writeheader()
        writer.writerows(rows)
    return


def eval_report_json(report: EvalReport) -> str:
    return to_json(report.as_dict())


def write_convergence_csv(path: str, table: ConvergenceTable) -> None:
    rows: list[dict[str, Any]] = [dict(zip(CONVERGENCE_COLUMNS, row)) for row in table.rows]
    write_csv(path, CONVERGENCE_COLUMNS, rows)
    return


def convergence_summary(table: ConvergenceTable) -> dict[str, Any]:
    """
    The JSON summary of a convergence experiment.
    :param table: ConvergenceTable: The experiment result.
    :return: dict[str, Any]: Median curves, epochs to threshold, the referential minus random-init gap and a label
        per strategy.
    """
    return {
        'threshold': table.threshold,
        'median_curves': table.median_curves,
        'epochs_to_threshold': table.epochs_to_threshold,
        'delta_referential_minus_random_init': table.delta_referential_random,
        'strategies': {name: STRATEGY_LABELS.get(name, name) for name in table.median_curves},
    }


def write_ablation_csv(path: str, rows: Sequence[AblationRow]) -> None:
    write_csv(path, ABLATION_COLUMNS, [row.as_row() for row in rows])
    return


#####################################
# Attention maps:
#####################################
def patch_grid_map(attention: np.ndarray, grid: int) -> np.ndarray:
    """
    Drop the class-token column of query->image attention, renormalize rows and lay them out as patch grids.
    :param attention: np.ndarray: [N_q, N_v + 1]
    :param grid: int: Patches per side.
    :raises ContractError: If the token count is not grid * grid + 1.
    :return: np.ndarray: [N_q, grid, grid], each grid summing to 1.
    """
    attention = np.asarray(attention, dtype=np.float64)
    if attention.shape[-1] != grid * grid + 1:
        raise ContractError('patch_grid_map', "%i image tokens for a %ix%i grid" % (attention.shape[-1], grid, grid))
    spatial: np.ndarray = attention[..., 1:]
    totals: np.ndarray = spatial.sum(axis=-1, keepdims=True)
    spatial = np.where(totals > 0, spatial / np.where(totals > 0, totals, 1.0), 1.0 / (grid * grid))
    return spatial.reshape(spatial.shape[:-1] + (grid, grid))


def box_patch_mask(box: np.ndarray, grid: int) -> np.ndarray:
    """
    Patches whose centre lies inside a normalized cxcywh box.
    :return: np.ndarray: [grid, grid] bool.
    """
    x1, y1, x2, y2 = box_cxcywh_to_xyxy(Tensor(np.asarray(box, dtype=np.float64))).data
    centres: np.ndarray = (np.arange(grid) + 0.5) / grid
    inside_x: np.ndarray = (centres >= x1) & (centres <= x2)
    inside_y: np.ndarray = (centres >= y1) & (centres <= y2)
    return inside_y[:, None] & inside_x[None, :]


def attention_mass_in_box(grid_map: np.ndarray, box: np.ndarray) -> float:
    """
    Share of a row-normalized patch-grid attention map that falls on patches inside box.
    :param grid_map: np.ndarray: [grid, grid]
    :param box: np.ndarray: [4] normalized cxcywh.
    """
    grid_map = np.asarray(grid_map, dtype=np.float64)
    return float(grid_map[box_patch_mask(box, grid_map.shape[0])].sum())


def attention_maps(output: ModelOutput, row: int, grid: int) -> dict[str, Any]:
    """
    Patch-grid attention of one batch row: one N_q map per QA layer plus the decoder map.
    """
    return {
        'qa_layers': [{'layer': entry.layer, 'attention': patch_grid_map(entry.query_image_attention[row], grid)}
                      for entry in output.trace.entries],
        'decoder': patch_grid_map(output.decoder.attention[row], grid),
    }


def dump_attention(model: RefFormer, samples: Sequence[GroundingSample], index: int, path: str) -> dict[str, Any]:
    """
    Write the attention maps of one sample as JSON.
    :param model: RefFormer: The model.
    :param samples: Sequence[GroundingSample]: The dataset.
    :param index: int: Which sample.
    :param path: str: Output file.
    :raises ContractError: If index is out of range.
    :return: dict[str, Any]: What was written.
    """
    logger: logging.Logger = logging.getLogger(__name__ + '.' + dump_attention.__name__)
    if not 0 <= index < len(samples):
        raise ContractError('dump_attention', "sample %i out of range [0, %i)" % (index, len(samples)))
    sample: GroundingSample = samples[index]
    batch: Batch = collate([sample])
    output: ModelOutput = model.forward(batch.images, batch.tokens, with_aux=False)
    dump: dict[str, Any] = {'sample': index, 'seed': sample.seed, 'box': sample.box, 'grid': model.model_config.grid}
    dump.update(attention_maps(output, 0, model.model_config.grid))
    write_json(path, dump)
    logger.info("wrote %i QA maps for sample %i to %s" % (len(dump['qa_layers']), index, path))
    return dump


#####################################
# Attention statistic:
#####################################
@dataclass
class AttentionStats:
    count: int
    mean_first: float
    mean_last: float
    wins: int
    """Samples where the last QA layer puts more mass inside the box than the first."""
    ties: int
    p_value: float
    """One-sided sign test of last > first, ties dropped."""

    def as_dict(self) -> dict[str, Any]:
        return {'count': self.count, 'mean_mass_first': self.mean_first, 'mean_mass_last': self.mean_last,
                'last_greater': self.wins, 'ties': self.ties, 'sign_test_p': self.p_value}


def sign_test(wins: int, losses: int) -> float:
    """
    One-sided sign test p-value of wins against losses, ties already removed.
    :return: float: P(X >= wins) for X ~ Binomial(wins + losses, 1/2); 1.0 with no trials.
    """
    trials: int = wins + losses
    if trials == 0:
        return 1.0
    return float(binomtest(wins, trials, 0.5, alternative='greater').pvalue)


def attention_statistics(model: RefFormer,
                         samples: Sequence[GroundingSample],
                         batch_size: int = EVAL_BATCH_SIZE,
                         ) -> AttentionStats:
    """
    For the selected query of every sample, compare the box mass of the first and last QA layer attention.
    :raises ContractError: With fewer than two QA layers, or no samples.
    :return: AttentionStats: Means, win count and sign-test p-value.
    """
    logger: logging.Logger = logging.getLogger(__name__ + '.' + attention_statistics.__name__)
    if len(model.qa_config.layers) < 2:
        raise ContractError('attention_statistics', "needs at least two QA layers")
    if len(samples) == 0:
        raise ContractError('attention_statistics', "empty dataset")
    grid: int = model.model_config.grid
    first_mass: list[float] = []
    last_mass: list[float] = []
    for indices in iterate_batches(np.arange(len(samples)), batch_size):
        batch: Batch = collate([samples[int(index)] for index in indices])
        output: ModelOutput = model.forward(batch.images, batch.tokens, with_aux=False)
        chosen: np.ndarray = select_prediction(output.predictions).indices
        first, last = output.trace.entries[0], output.trace.entries[-1]
        for row in range(len(batch)):
            query: int = int(chosen[row])
            first_mass.append(attention_mass_in_box(
                patch_grid_map(first.query_image_attention[row, query], grid), batch.boxes[row]))
            last_mass.append(attention_mass_in_box(
                patch_grid_map(last.query_image_attention[row, query], grid), batch.boxes[row]))
    first_values, last_values = np.asarray(first_mass), np.asarray(last_mass)
    wins: int = int(np.sum(last_values > first_values))
    losses: int = int(np.sum(last_values < first_values))
    stats: AttentionStats = AttentionStats(count=len(first_mass),
                                           mean_first=float(first_values.mean()),
                                           mean_last=float(last_values.mean()),
                                           wins=wins,
                                           ties=len(first_mass) - wins - losses,
                                           p_value=sign_test(wins, losses))
    logger.debug("attention mass first %.4f, last %.4f, p %.3g" % (stats.mean_first, stats.mean_last, stats.p_value))
    return stats
