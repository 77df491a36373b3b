#!/usr/bin/env python3
"""
File: refFormer.py
    The assembled grounding model: backbone layers stepped one at a time, a QA block after every insertion layer,
    the selected image levels handed to the decoder, and auxiliary heads over every QA block's queries.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

import tensorEngine as te
from backbone import Backbone, ModelConfig, text_padding_mask
from common import QueryStrategy
from decoder import Decoder, DecoderOutput, FusionConfig, GroundingHead, PredictionSet
from layers import Module
from qaModule import QAConfig, QAStack, QATrace
from tensorEngine import Parameter, Rng, Tensor


@dataclass
class ModelOutput:
    predictions: PredictionSet
    decoder: DecoderOutput
    trace: QATrace
    aux_predictions: list[tuple[Tensor, Tensor]] = field(default_factory=list)
    """Per QA block (boxes [B, N_q, 4], logits [B, N_q, 2]) from the auxiliary head."""


class RefFormer(Module):
    """
    Backbone + QA stack + decoder + auxiliary heads.
    """
    def __init__(self,
                 model: ModelConfig,
                 qa: QAConfig,
                 fusion: FusionConfig,
                 strategy: QueryStrategy = QueryStrategy.REFERENTIAL,
                 seed: int = 0,
                 ) -> None:
        """
        Initialize the model.
        :param model: ModelConfig: Backbone extents.
        :param qa: QAConfig: QA insertion layers and widths.
        :param fusion: FusionConfig: Decoder fusion levels and options.
        :param strategy: QueryStrategy: Where the decoder's prior queries come from.
        :param seed: int: Initialization seed.
        """
        Module.__init__(self)
        rng: Rng = Rng(seed, 'model')
        self.model_config: ModelConfig = model
        self.qa_config: QAConfig = qa
        self.fusion_config: FusionConfig = fusion
        self.strategy: QueryStrategy = strategy
        self.backbone: Backbone = Backbone(model, rng.child('backbone'))
        self.qa: QAStack = QAStack(model, qa, rng.child('qa'))
        self.decoder: Decoder = Decoder(model, fusion, qa.num_queries, qa.width, rng.child('decoder'))
        self.aux_head: GroundingHead = GroundingHead(qa.width, rng.child('aux_head'))
        self.random_queries: Optional[Parameter] = None
        if strategy == QueryStrategy.RANDOM_INIT:
            self.random_queries = Parameter(rng.child('random_queries').normal(0.0, 1.0, (qa.num_queries, qa.width)),
                                            dtype=te.DEFAULT_DTYPE)
        return

    def _prior(self, referential: Tensor, h_global: Tensor) -> tuple[Optional[Tensor], bool]:
        batch, num_queries = referential.shape[0], referential.shape[1]
        if self.strategy == QueryStrategy.REFERENTIAL:
            return referential, True
        if self.strategy == QueryStrategy.RANDOM_INIT:
            width: int = self.random_queries.shape[1]
            return te.broadcast_to(self.random_queries.reshape(1, num_queries, width),
                                   (batch, num_queries, width)), True
        if self.strategy == QueryStrategy.LINGUISTIC:
            return te.broadcast_to(h_global, (batch, num_queries, h_global.shape[2])), False
        return None, True

    def forward(self, images: np.ndarray, token_ids: np.ndarray, with_aux: bool = True) -> ModelOutput:
        """
        Run the whole model on a batch.
        :param images: np.ndarray: [B, H, W, 3]
        :param token_ids: np.ndarray: [B, N_t]
        :param with_aux: bool: Also run the auxiliary head on every QA block's queries.
        :return: ModelOutput: Predictions, decoder internals, the QA trace and auxiliary predictions.
        """
        logger: logging.Logger = logging.getLogger(__name__ + '.' + self.forward.__name__)
        token_ids = np.asarray(token_ids, dtype=np.int64)
        mask: np.ndarray = text_padding_mask(token_ids)
        z_v: Tensor = self.backbone.embed_image(images)
        z_t: Tensor = self.backbone.embed_text(token_ids)
        queries: Tensor = self.qa.start(z_v.shape[0])
        trace: QATrace = QATrace()
        levels: dict[int, Tensor] = {}
        for layer in range(1, self.backbone.num_layers + 1):
            z_v = self.backbone.image_layer(layer, z_v)
            z_t = self.backbone.text_layer(layer, z_t, mask)
            if self.qa.is_insertion_layer(layer):
                queries, z_v, z_t, entry = self.qa.qa_forward(layer, z_v, z_t, queries, mask)
                trace.entries.append(entry)
            if layer in self.fusion_config.layers:
                levels[layer] = z_v
        h_vml, h_t, h_global = self.decoder.language_guided_fusion(levels, z_t, token_ids)
        prior, project = self._prior(queries, h_global)
        decoded: DecoderOutput = self.decoder.decode(prior, h_vml, h_t, mask, project)
        predictions: PredictionSet = self.decoder.predict(decoded)
        aux_predictions: list[tuple[Tensor, Tensor]] = []
        if with_aux:
            aux_predictions = [self.aux_head(entry.queries) for entry in trace.entries]
        logger.debug("forward: %i samples, %i QA blocks" % (z_v.shape[0], len(trace.entries)))
        return ModelOutput(predictions, decoded, trace, aux_predictions)

    def trainable_parameters(self) -> list[tuple[str, Parameter]]:
        return [(name, parameter) for name, parameter in self.named_parameters() if parameter.requires_grad]
