#!/usr/bin/env python3
"""
File: decoder.py
    Language guided multi-level fusion, decoding with prior queries, and the box/confidence/mask heads.
"""
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Final, Optional

import numpy as np

import tensorEngine as te
from backbone import ModelConfig, global_token_index, select_tokens
from cliExceptions import ContractError, DimensionError
from common import DecoderResidual, GlobalToken, MaskUpsample
from layers import LayerNorm, Linear, Mlp, Module, ModuleList, MultiHeadAttention, zeros
from tensorEngine import Parameter, Rng, Tensor

#####################################
# Constants:
#####################################
BOX_MLP_DEPTH: Final[int] = 3
"""Linear layers in the box head."""


#####################################
# Config:
#####################################
@dataclass(frozen=True)
class FusionConfig:
    layers: tuple[int, ...] = (2, 4, 6)
    """K, the backbone layers whose (injected) image features are fused."""
    heads: int = 4
    global_token: GlobalToken = GlobalToken.SOS
    residual: DecoderResidual = DecoderResidual.PRINTED
    seg_head: bool = False
    mask_upsample: MaskUpsample = MaskUpsample.BILINEAR

    def validate(self, model: ModelConfig) -> None:
        """
        :raises ContractError: On an empty, unordered or out of range level set.
        """
        if len(self.layers) == 0:
            raise ContractError('FusionConfig', "at least one fusion layer is required")
        previous: int = 0
        for layer in self.layers:
            if layer <= previous or layer > model.layers:
                raise ContractError('FusionConfig', "fusion layers %s must be strictly increasing within 1..%i"
                                    % (list(self.layers), model.layers))
            previous = layer
        return


#####################################
# Outputs:
#####################################
@dataclass
class PredictionSet:
    boxes: Tensor
    """[B, N_q, 4] normalized (cx, cy, w, h), each in (0, 1)."""
    logits: Tensor
    """[B, N_q, 2] as (no-object, object)."""
    masks: Optional[Tensor] = None
    """[B, N_q, H, W] in (0, 1)."""

    @property
    def num_queries(self) -> int:
        return self.boxes.shape[1]


@dataclass
class DecoderOutput:
    embeddings: Tensor
    """O, [B, N_q, D]."""
    multimodal: Tensor
    """H_mm, [B, N_v + 1, D]."""
    attention: np.ndarray
    """O_c -> H_mm attention, [B, N_q, N_v + 1]."""


@dataclass
class Selection:
    indices: np.ndarray
    """[B] chosen query per sample."""
    boxes: np.ndarray
    """[B, 4]"""
    masks: Optional[np.ndarray] = None
    """[B, H, W]"""


#####################################
# Interpolation:
#####################################
@lru_cache(maxsize=16)
def interpolation_matrix(out_size: int, in_size: int, mode: MaskUpsample) -> np.ndarray:
    """
    Rows of weights mapping in_size samples to out_size samples along one axis.
    Bilinear uses half pixel centres, clamped at the borders; every row sums to 1.
    :param out_size: int: Output extent.
    :param in_size: int: Input extent.
    :param mode: MaskUpsample: Bilinear or nearest.
    :return: np.ndarray: [out_size, in_size]
    """
    matrix: np.ndarray = np.zeros((out_size, in_size))
    scale: float = in_size / out_size
    for out_index in range(out_size):
        if mode == MaskUpsample.NEAREST:
            matrix[out_index, min(int(np.floor(out_index * scale)), in_size - 1)] = 1.0
            continue
        source: float = min(max((out_index + 0.5) * scale - 0.5, 0.0), in_size - 1.0)
        low: int = int(np.floor(source))
        high: int = min(low + 1, in_size - 1)
        fraction: float = source - low
        matrix[out_index, low] += 1.0 - fraction
        matrix[out_index, high] += fraction
    matrix.setflags(write=False)
    return matrix


def upsample(grid: Tensor, height: int, width: int, mode: MaskUpsample) -> Tensor:
    """
    Resize the last two axes of grid to (height, width): U X V^T.
    """
    rows: np.ndarray = interpolation_matrix(height, grid.shape[-2], mode)
    cols: np.ndarray = interpolation_matrix(width, grid.shape[-1], mode)
    left: Tensor = te.as_tensor(rows, grid)
    right: Tensor = te.as_tensor(cols.T.copy(), grid)
    return te.matmul(te.matmul(left, grid), right)


#####################################
# Heads:
#####################################
class GroundingHead(Module):
    """
    Box MLP with a sigmoid, and a two class confidence projection.
    """
    def __init__(self, width: int, rng: Rng) -> None:
        Module.__init__(self)
        self.box: Mlp = Mlp([width] * BOX_MLP_DEPTH + [4], rng.child('box'), activation='relu')
        self.cls: Linear = Linear(width, 2, rng.child('cls'))
        return

    def forward(self, embeddings: Tensor) -> tuple[Tensor, Tensor]:
        """
        :param embeddings: Tensor: [B, N_q, width]
        :return: tuple[Tensor, Tensor]: boxes [B, N_q, 4], logits [B, N_q, 2].
        """
        return te.sigmoid(self.box(embeddings)), self.cls(embeddings)


#####################################
# Decoder:
#####################################
class Decoder(Module):
    """
    Fuses the selected image levels under the global text token, then decodes N_q prior queries.
    """
    def __init__(self, model: ModelConfig, config: FusionConfig, num_queries: int, query_width: int, rng: Rng) -> None:
        """
        Initialize the decoder.
        :param model: ModelConfig: Backbone extents, D is the decoder width.
        :param config: FusionConfig: Fusion levels and decoder options.
        :param num_queries: int: N_q.
        :param query_width: int: Width of the prior queries fed to the query gate (D_l).
        :param rng: Rng: Initialization stream.
        """
        Module.__init__(self)
        config.validate(model)
        self.model: ModelConfig = model
        self.config: FusionConfig = config
        self.num_queries: int = num_queries
        width, heads = model.width, config.heads
        self.text_proj: Linear = Linear(width, width, rng.child('text_proj'))
        self.level_proj: ModuleList = ModuleList([Linear(width, width, rng.child('level_proj%i' % layer))
                                                  for layer in config.layers])
        self.level_attn: ModuleList = ModuleList([MultiHeadAttention(width, width, width, heads,
                                                                     rng.child('level_attn%i' % layer))
                                                  for layer in config.layers])
        self.merge: Linear = Linear(width * len(config.layers), width, rng.child('merge'))
        self.query_gate: Mlp = Mlp((query_width, width, width), rng.child('query_gate'), activation='relu')
        self.query_offset: Parameter = zeros((num_queries, width))
        self.condition_attn: MultiHeadAttention = MultiHeadAttention(width, width, width, heads,
                                                                     rng.child('condition'))
        self.query_ln: LayerNorm = LayerNorm(width)
        self.multimodal_ln: LayerNorm = LayerNorm(width)
        self.target_attn: MultiHeadAttention = MultiHeadAttention(width, width, width, heads, rng.child('target'))
        self.target_proj: Linear = Linear(width, width, rng.child('target_proj'))
        self.target_ln: LayerNorm = LayerNorm(width)
        self.head: GroundingHead = GroundingHead(width, rng.child('head'))
        self.mask_embed: Optional[Mlp] = None
        if config.seg_head:
            self.mask_embed = Mlp((width, width, width), rng.child('mask_embed'), activation='relu')
        return

    def language_guided_fusion(self,
                               levels: dict[int, Tensor],
                               z_t_last: Tensor,
                               token_ids: np.ndarray,
                               ) -> tuple[Tensor, Tensor, Tensor]:
        """
        H_t = phi_mt(Z_t), H_v^k = phi_mv^k(Z_v^k), H_v^k += MHCA(H_v^k, H_gt, H_gt), H_vml = phi_vml(concat_k).
        :param levels: dict[int, Tensor]: Layer index -> injected image features [B, N_v + 1, D].
        :param z_t_last: Tensor: Final text features [B, N_t, D].
        :param token_ids: np.ndarray: [B, N_t], locates the global token.
        :raises ContractError: If a fusion level is missing.
        :return: tuple[Tensor, Tensor, Tensor]: H_vml [B, N_v + 1, D], H_t [B, N_t, D], H_gt [B, 1, D].
        """
        missing: list[int] = [layer for layer in self.config.layers if layer not in levels]
        if len(missing) > 0:
            raise ContractError('language_guided_fusion', "missing fusion levels %s" % missing)
        h_t: Tensor = self.text_proj(z_t_last)
        h_global: Tensor = select_tokens(h_t, global_token_index(token_ids, self.config.global_token))
        fused_levels: list[Tensor] = []
        for position, layer in enumerate(self.config.layers):
            h_v: Tensor = self.level_proj[position](levels[layer])
            attended, _ = self.level_attn[position](h_v, h_global, h_global)
            fused_levels.append(attended + h_v)
        return self.merge(te.concat(fused_levels, axis=2)), h_t, h_global

    def query_seed(self, queries: Optional[Tensor], batch: int, project: bool = True) -> Tensor:
        """
        phi_q(Q) + Q', or Q' alone when queries is None.
        :param queries: Optional[Tensor]: Prior queries [B, N_q, D_l], or [B, N_q, D] with project False.
        :param batch: int: B.
        :param project: bool: Pass queries through the gate phi_q.
        :raises ContractError: If the prior has a different query count than Q'.
        :return: Tensor: [B, N_q, D]
        """
        width: int = self.model.width
        offset: Tensor = te.broadcast_to(self.query_offset.reshape(1, self.num_queries, width),
                                         (batch, self.num_queries, width))
        if queries is None:
            return offset
        if queries.shape[1] != self.num_queries:
            raise ContractError('decode', "%i prior queries against %i decoder queries"
                                % (queries.shape[1], self.num_queries))
        if project:
            queries = self.query_gate(queries)
        return queries + offset

    def decode(self,
               queries: Optional[Tensor],
               h_vml: Tensor,
               h_t: Tensor,
               text_mask: Optional[np.ndarray] = None,
               project: bool = True,
               ) -> DecoderOutput:
        """
        [seed; H_vml] attends to H_t, split into (O_c_bar, H_mm_bar), residual LN on each;
        O_bar = MHCA(O_c, H_mm, H_mm); O = LN(phi_r(O_bar)) + O_bar.
        :param queries: Optional[Tensor]: The prior queries, None for the zero query.
        :param h_vml: Tensor: [B, N_v + 1, D]
        :param h_t: Tensor: [B, N_t, D]
        :param text_mask: Optional[np.ndarray]: [B, N_t] True at PAD.
        :param project: bool: Gate the prior through phi_q.
        :return: DecoderOutput: O, H_mm and the O_c -> H_mm attention.
        """
        batch: int = h_vml.shape[0]
        seed: Tensor = self.query_seed(queries, batch, project)
        stacked: Tensor = te.concat([seed, h_vml], axis=1)
        conditioned, _ = self.condition_attn(stacked, h_t, h_t, text_mask)
        o_c_bar, h_mm_bar = te.split(conditioned, (self.num_queries, h_vml.shape[1]), axis=1)
        if self.config.residual == DecoderResidual.PRINTED:
            o_c: Tensor = self.query_ln(o_c_bar) + o_c_bar
            h_mm: Tensor = self.multimodal_ln(h_mm_bar) + h_mm_bar
        else:
            o_c = self.query_ln(o_c_bar) + seed
            h_mm = self.multimodal_ln(h_mm_bar) + h_vml
        o_bar, attention = self.target_attn(o_c, h_mm, h_mm)
        embeddings: Tensor = self.target_ln(self.target_proj(o_bar)) + o_bar
        return DecoderOutput(embeddings, h_mm, attention)

    def grounding_head(self, embeddings: Tensor) -> tuple[Tensor, Tensor]:
        return self.head(embeddings)

    def segmentation_head(self, embeddings: Tensor, h_mm: Tensor) -> Tensor:
        """
        Mask embeddings dotted with the spatial rows of H_mm, upsampled to pixels, then a sigmoid.
        :param embeddings: Tensor: O, [B, N_q, D].
        :param h_mm: Tensor: [B, N_v + 1, D], the class token row is dropped.
        :raises ContractError: If the decoder was built without a mask head.
        :raises DimensionError: If the spatial rows don't form the patch grid.
        :return: Tensor: [B, N_q, H, W]
        """
        if self.mask_embed is None:
            raise ContractError('segmentation_head', "decoder built without a mask head")
        grid: int = self.model.grid
        spatial: Tensor = h_mm[:, 1:, :]
        if spatial.shape[1] != grid * grid:
            raise DimensionError('segmentation_head', (spatial.shape, (grid, grid)))
        mask_embeddings: Tensor = self.mask_embed(embeddings)
        logits: Tensor = te.matmul(mask_embeddings, spatial.swap_last())
        batch, num_queries = logits.shape[0], logits.shape[1]
        logits = logits.reshape(batch, num_queries, grid, grid)
        size: int = self.model.image_size
        return te.sigmoid(upsample(logits, size, size, self.config.mask_upsample))

    def predict(self, output: DecoderOutput) -> PredictionSet:
        logger: logging.Logger = logging.getLogger(__name__ + '.' + self.predict.__name__)
        boxes, logits = self.grounding_head(output.embeddings)
        masks: Optional[Tensor] = None
        if self.mask_embed is not None:
            masks = self.segmentation_head(output.embeddings, output.multimodal)
        logger.debug("predicted %i queries for %i samples" % (boxes.shape[1], boxes.shape[0]))
        return PredictionSet(boxes, logits, masks)


#####################################
# Inference rule:
#####################################
def object_probability(logits: np.ndarray) -> np.ndarray:
    """Softmax probability of the object class, [..., 2] -> [...]."""
    logits = np.asarray(logits, dtype=np.float64)
    shifted: np.ndarray = logits - logits.max(axis=-1, keepdims=True)
    exps: np.ndarray = np.exp(shifted)
    return exps[..., 1] / exps.sum(axis=-1)


def select_prediction(predictions: PredictionSet) -> Selection:
    """
    Pick, per sample, the query with the highest object probability; ties go to the lowest index.
    :param predictions: PredictionSet: The decoder output.
    :raises ContractError: If there are no queries.
    :return: Selection: The chosen index, box and mask of every sample.
    """
    if predictions.num_queries == 0:
        raise ContractError('select_prediction', "empty prediction set")
    probability: np.ndarray = object_probability(predictions.logits.data)
    indices: np.ndarray = np.argmax(probability, axis=1)
    rows: np.ndarray = np.arange(indices.shape[0])
    boxes: np.ndarray = predictions.boxes.data[rows, indices]
    masks: Optional[np.ndarray] = None
    if predictions.masks is not None:
        masks = predictions.masks.data[rows, indices]
    return Selection(indices, boxes, masks)
