#!/usr/bin/env python3
"""
File: qaModule.py
    Query adaptation blocks grafted between backbone layers.
        Each block down-projects both streams, fuses them with the running referential queries (condition
        aggregation), refines the queries against the fused image context, and injects the refined streams back
        into the backbone through gated, zero-initialized up-projections.
        Classes:
            QAConfig: insertion layers, inner width, query count, heads and injection direction.
            QATraceEntry: per insertion layer queries and attention maps.
            QAModule: one block.
            QAStack: the initial queries plus one block per insertion layer.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

import tensorEngine as te
from backbone import ModelConfig
from cliExceptions import ContractError, DimensionError
from common import QADirection
from layers import LayerNorm, Linear, Mlp, Module, ModuleList, MultiHeadAttention, zeros
from tensorEngine import Parameter, Rng, Tensor


#####################################
# Config:
#####################################
@dataclass(frozen=True)
class QAConfig:
    layers: tuple[int, ...] = (2, 4, 6)
    """Backbone layer indices (1 based) followed by a QA block."""
    width: int = 32
    """D_l."""
    num_queries: int = 3
    """N_q."""
    heads: int = 4
    direction: QADirection = QADirection.BOTH
    mlp_ratio: int = 2

    def validate(self, model: ModelConfig) -> None:
        """
        Check the block layout against a backbone.
        :param model: ModelConfig: The backbone extents.
        :raises ContractError: On a layer set that is not strictly increasing within 1..L, or D_l >= D.
        :return: None
        """
        previous: int = 0
        for layer in self.layers:
            if layer <= previous or layer > model.layers:
                raise ContractError('QAConfig', "insertion layers %s must be strictly increasing within 1..%i"
                                    % (list(self.layers), model.layers))
            previous = layer
        if not 0 < self.width < model.width:
            raise ContractError('QAConfig', "QA width %i must be below the backbone width %i"
                                % (self.width, model.width))
        if self.width % self.heads != 0:
            raise ContractError('QAConfig', "QA width %i not divisible by %i heads" % (self.width, self.heads))
        if self.num_queries < 1:
            raise ContractError('QAConfig', "at least one query is required")
        return


#####################################
# Trace:
#####################################
@dataclass
class QATraceEntry:
    """What one block produced, kept for auxiliary losses and attention dumps."""
    layer: int
    queries: Tensor
    """Q^i, [B, N_q, D_l]."""
    query_image_attention: np.ndarray
    """Refinement query->image attention, [B, N_q, N_v + 1]."""
    fusion_attention: np.ndarray
    """Condition aggregation [r_v; Q; F_v]->text attention, [B, 1 + N_q + N_v + 1, N_t]."""
    text_fusion_attention: Optional[np.ndarray] = None
    """[r_t; F_t]->image attention, [B, 1 + N_t, N_v + 1], absent when the text stream is not refined."""


@dataclass
class QATrace:
    entries: list[QATraceEntry] = field(default_factory=list)

    @property
    def layers(self) -> list[int]:
        return [entry.layer for entry in self.entries]

    @property
    def queries(self) -> list[Tensor]:
        return [entry.queries for entry in self.entries]


def _broadcast_token(token: Parameter, batch: int) -> Tensor:
    return te.broadcast_to(token.reshape(1, 1, token.shape[0]), (batch, 1, token.shape[0]))


#####################################
# QA block:
#####################################
class QAModule(Module):
    """
    One query adaptation block, attached after one backbone layer.
    """
    def __init__(self, layer: int, model: ModelConfig, config: QAConfig, rng: Rng) -> None:
        """
        Initialize a QA block.
        :param layer: int: The backbone layer this block follows.
        :param model: ModelConfig: The backbone extents.
        :param config: QAConfig: The block layout.
        :param rng: Rng: Initialization stream.
        """
        Module.__init__(self)
        self.layer: int = layer
        self.config: QAConfig = config
        self.backbone_width: int = model.width
        width, heads = config.width, config.heads
        hidden: int = width * config.mlp_ratio
        # Projections:
        self.image_down: Linear = Linear(model.width, width, rng.child('image_down'))
        self.text_down: Linear = Linear(model.width, width, rng.child('text_down'))
        self.image_up: Linear = Linear(width, model.width, rng.child('image_up'), zero_init=True)
        self.text_up: Linear = Linear(width, model.width, rng.child('text_up'), zero_init=True)
        # Regulation tokens:
        self.image_regulation: Parameter = zeros((width,))
        self.text_regulation: Parameter = zeros((width,))
        # Condition aggregation and fusion:
        self.fusion_image_attn: MultiHeadAttention = MultiHeadAttention(width, width, width, heads,
                                                                        rng.child('fusion_image'))
        self.fusion_query_ln: LayerNorm = LayerNorm(width)
        self.fusion_image_ln: LayerNorm = LayerNorm(width)
        self.fusion_text_attn: MultiHeadAttention = MultiHeadAttention(width, width, width, heads,
                                                                       rng.child('fusion_text'))
        self.fusion_text_ln: LayerNorm = LayerNorm(width)
        # Target refinement:
        self.refine_query_attn: MultiHeadAttention = MultiHeadAttention(width, width, width, heads,
                                                                        rng.child('refine_query'))
        self.refine_query_mlp: Mlp = Mlp((width, hidden, width), rng.child('refine_query_mlp'))
        self.refine_query_ln: LayerNorm = LayerNorm(width)
        self.refine_image_attn: MultiHeadAttention = MultiHeadAttention(width, width, width, heads,
                                                                        rng.child('refine_image'))
        self.refine_image_mlp: Mlp = Mlp((width, hidden, width), rng.child('refine_image_mlp'))
        self.refine_image_ln: LayerNorm = LayerNorm(width)
        self.refine_text_attn: MultiHeadAttention = MultiHeadAttention(width, width, width, heads,
                                                                       rng.child('refine_text'))
        self.refine_text_mlp: Mlp = Mlp((width, hidden, width), rng.child('refine_text_mlp'))
        self.refine_text_ln: LayerNorm = LayerNorm(width)
        return

    ###########################
    # Stages:
    ###########################
    def down_project(self, z_v: Tensor, z_t: Tensor) -> tuple[Tensor, Tensor]:
        """
        F_v = phi_vd(Z_v), F_t = phi_td(Z_t).
        :param z_v: Tensor: [B, N_v + 1, D]
        :param z_t: Tensor: [B, N_t, D]
        :raises DimensionError: If either stream is not D wide.
        :return: tuple[Tensor, Tensor]: F_v [B, N_v + 1, D_l], F_t [B, N_t, D_l].
        """
        if z_v.shape[-1] != self.backbone_width or z_t.shape[-1] != self.backbone_width:
            raise DimensionError('down_project', (z_v.shape, z_t.shape))
        return self.image_down(z_v), self.text_down(z_t)

    def camf(self,
             queries: Tensor,
             f_v: Tensor,
             f_t: Tensor,
             text_mask: Optional[np.ndarray] = None,
             ) -> tuple[Tensor, Tensor, Tensor, Optional[Tensor], Optional[Tensor], np.ndarray, Optional[np.ndarray]]:
        """
        Condition aggregation and multi-modal fusion.
            [r_v; Q; F_v] attends to F_t; Q_c = LN(Q_bar) + Q, F_v_hat = LN(F_v_bar) + F_v.
            [r_t; F_t] attends to F_v; F_t_hat = LN(F_t_bar) + F_t. Skipped when the text stream is not refined.
        The regulation token rows are returned as raw attention outputs.
        :param queries: Tensor: Q^{i-1}, [B, N_q, D_l].
        :param f_v: Tensor: [B, N_v + 1, D_l]
        :param f_t: Tensor: [B, N_t, D_l]
        :param text_mask: Optional[np.ndarray]: [B, N_t] True at PAD.
        :return: (r_v_bar, Q_c_hat, F_v_hat, r_t_bar, F_t_hat, image side attention, text side attention).
        """
        batch, num_queries, width = queries.shape
        if num_queries != self.config.num_queries or width != self.config.width:
            raise DimensionError('camf', (queries.shape, (self.config.num_queries, self.config.width)))
        num_image: int = f_v.shape[1]
        stacked: Tensor = te.concat([_broadcast_token(self.image_regulation, batch), queries, f_v], axis=1)
        fused, image_attention = self.fusion_image_attn(stacked, f_t, f_t, text_mask)
        r_v_bar, q_bar, f_v_bar = te.split(fused, (1, num_queries, num_image), axis=1)
        q_hat: Tensor = self.fusion_query_ln(q_bar) + queries
        f_v_hat: Tensor = self.fusion_image_ln(f_v_bar) + f_v

        r_t_bar: Optional[Tensor] = None
        f_t_hat: Optional[Tensor] = None
        text_attention: Optional[np.ndarray] = None
        if self.config.direction.injects_text:
            stacked_text: Tensor = te.concat([_broadcast_token(self.text_regulation, batch), f_t], axis=1)
            fused_text, text_attention = self.fusion_text_attn(stacked_text, f_v, f_v)
            r_t_bar, f_t_bar = te.split(fused_text, (1, f_t.shape[1]), axis=1)
            f_t_hat = self.fusion_text_ln(f_t_bar) + f_t
        return r_v_bar, q_hat, f_v_hat, r_t_bar, f_t_hat, image_attention, text_attention

    def target_refine(self,
                      q_hat: Tensor,
                      f_v_hat: Tensor,
                      f_t_hat: Optional[Tensor],
                      r_v_bar: Tensor,
                      r_t_bar: Optional[Tensor],
                      text_mask: Optional[np.ndarray] = None,
                      ) -> tuple[Tensor, Optional[Tensor], Optional[Tensor], Optional[Tensor], Optional[Tensor],
                                 np.ndarray]:
        """
        Target-related context refinement.
            Q_v = MHCA(Q_c_hat, F_v_hat, F_v_hat); Q^i = LN(MLP(Q_v)) + Q_c_hat.
            [r_v_bar; F_v_hat] attends to F_v_hat; G_v = LN(MLP(F_v_tilde)) + F_v_hat.
            [r_t_bar; F_t_hat] attends to F_t_hat; G_t = LN(MLP(F_t_tilde)) + F_t_hat.
        Image and text refinement only run for the streams that get injected.
        :return: (Q^i, G_v, G_t, r_v_tilde, r_t_tilde, query->image attention [B, N_q, N_v + 1]).
        """
        q_v, query_attention = self.refine_query_attn(q_hat, f_v_hat, f_v_hat)
        queries: Tensor = self.refine_query_ln(self.refine_query_mlp(q_v)) + q_hat

        g_v: Optional[Tensor] = None
        r_v_tilde: Optional[Tensor] = None
        if self.config.direction.injects_image:
            stacked: Tensor = te.concat([r_v_bar, f_v_hat], axis=1)
            refined, _ = self.refine_image_attn(stacked, f_v_hat, f_v_hat)
            r_v_tilde, f_v_tilde = te.split(refined, (1, f_v_hat.shape[1]), axis=1)
            g_v = self.refine_image_ln(self.refine_image_mlp(f_v_tilde)) + f_v_hat

        g_t: Optional[Tensor] = None
        r_t_tilde: Optional[Tensor] = None
        if self.config.direction.injects_text and f_t_hat is not None and r_t_bar is not None:
            stacked_text: Tensor = te.concat([r_t_bar, f_t_hat], axis=1)
            refined_text, _ = self.refine_text_attn(stacked_text, f_t_hat, f_t_hat, text_mask)
            r_t_tilde, f_t_tilde = te.split(refined_text, (1, f_t_hat.shape[1]), axis=1)
            g_t = self.refine_text_ln(self.refine_text_mlp(f_t_tilde)) + f_t_hat
        return queries, g_v, g_t, r_v_tilde, r_t_tilde, query_attention

    def up_project_inject(self,
                          g_v: Optional[Tensor],
                          g_t: Optional[Tensor],
                          r_v_tilde: Optional[Tensor],
                          r_t_tilde: Optional[Tensor],
                          z_v: Tensor,
                          z_t: Tensor,
                          ) -> tuple[Tensor, Tensor]:
        """
        Z_v_hat = phi_vu(G_v * sigmoid(r_v_tilde)) + Z_v, and the same for text.
        A stream with no refined features passes through untouched.
        :return: tuple[Tensor, Tensor]: Z_v_hat [B, N_v + 1, D], Z_t_hat [B, N_t, D].
        """
        if g_v is not None and r_v_tilde is not None:
            z_v = self.image_up(g_v * te.sigmoid(r_v_tilde)) + z_v
        if g_t is not None and r_t_tilde is not None:
            z_t = self.text_up(g_t * te.sigmoid(r_t_tilde)) + z_t
        return z_v, z_t

    def forward(self,
                z_v: Tensor,
                z_t: Tensor,
                queries: Tensor,
                text_mask: Optional[np.ndarray] = None,
                ) -> tuple[Tensor, Tensor, Tensor, QATraceEntry]:
        """
        down_project, camf, target_refine, up_project_inject.
        :param z_v: Tensor: Z_v^i, [B, N_v + 1, D].
        :param z_t: Tensor: Z_t^i, [B, N_t, D].
        :param queries: Tensor: Q^{i-1}, [B, N_q, D_l].
        :param text_mask: Optional[np.ndarray]: [B, N_t] True at PAD.
        :return: tuple[Tensor, Tensor, Tensor, QATraceEntry]: Q^i, Z_v_hat, Z_t_hat, the trace entry.
        """
        f_v, f_t = self.down_project(z_v, z_t)
        r_v_bar, q_hat, f_v_hat, r_t_bar, f_t_hat, fusion_attention, text_attention = \
            self.camf(queries, f_v, f_t, text_mask)
        refined_queries, g_v, g_t, r_v_tilde, r_t_tilde, query_attention = \
            self.target_refine(q_hat, f_v_hat, f_t_hat, r_v_bar, r_t_bar, text_mask)
        z_v_hat, z_t_hat = self.up_project_inject(g_v, g_t, r_v_tilde, r_t_tilde, z_v, z_t)
        entry: QATraceEntry = QATraceEntry(self.layer, refined_queries, query_attention, fusion_attention,
                                           text_attention)
        return refined_queries, z_v_hat, z_t_hat, entry


#####################################
# QA stack:
#####################################
class QAStack(Module):
    """
    The randomly initialized queries Q^0 and one QA block per insertion layer.
    """
    def __init__(self, model: ModelConfig, config: QAConfig, rng: Rng) -> None:
        Module.__init__(self)
        config.validate(model)
        self.config: QAConfig = config
        self.initial_queries: Parameter = Parameter(rng.child('queries').normal(0.0, 1.0,
                                                                               (config.num_queries, config.width)),
                                                    dtype=te.DEFAULT_DTYPE)
        self.blocks: ModuleList = ModuleList([QAModule(layer, model, config, rng.child('qa%i' % layer))
                                              for layer in config.layers])
        self._by_layer: dict[int, QAModule] = {block.layer: block for block in self.blocks}
        return

    def is_insertion_layer(self, layer: int) -> bool:
        return layer in self._by_layer

    def start(self, batch: int) -> Tensor:
        """
        Q^0 for every sample of a batch.
        :param batch: int: B.
        :return: Tensor: [B, N_q, D_l]
        """
        width: int = self.config.width
        return te.broadcast_to(self.initial_queries.reshape(1, self.config.num_queries, width),
                               (batch, self.config.num_queries, width))

    def qa_forward(self,
                   layer: int,
                   z_v: Tensor,
                   z_t: Tensor,
                   queries: Tensor,
                   text_mask: Optional[np.ndarray] = None,
                   ) -> tuple[Tensor, Tensor, Tensor, QATraceEntry]:
        """
        Run the block attached after a backbone layer.
        :param layer: int: The backbone layer index.
        :raises ContractError: If no block is attached after that layer.
        :return: tuple[Tensor, Tensor, Tensor, QATraceEntry]: Q^i, Z_v_hat, Z_t_hat, the trace entry.
        """
        logger: logging.Logger = logging.getLogger(__name__ + '.' + self.qa_forward.__name__)
        if layer not in self._by_layer:
            raise ContractError('qa_forward', "layer %i is not an insertion layer %s"
                                % (layer, list(self.config.layers)))
        logger.debug("QA block after layer %i" % layer)
        return self._by_layer[layer](z_v, z_t, queries, text_mask)
