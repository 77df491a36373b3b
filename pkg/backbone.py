#!/usr/bin/env python3
"""
File: backbone.py
    Toy dual encoder: a patch based image transformer and a token based text transformer of equal width.
    Layers are stepped one at a time by the caller so adapter blocks can be interleaved between them.
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

import tensorEngine as te
from cliExceptions import ContractError, DimensionError, VocabularyError
from common import GlobalToken, SpecialToken
from layers import LayerNorm, Linear, Module, ModuleList, TransformerLayer, uniform_weight
from tensorEngine import Parameter, Rng, Tensor


#####################################
# Config:
#####################################
@dataclass(frozen=True)
class ModelConfig:
    """Backbone extents."""
    image_size: int = 64
    patch_size: int = 8
    width: int = 64
    layers: int = 6
    heads: int = 4
    mlp_ratio: int = 4
    max_text_len: int = 12
    vocab_size: int = 32
    embed_dim: int = 64

    def __post_init__(self) -> None:
        if self.patch_size < 1 or self.image_size % self.patch_size != 0:
            raise DimensionError('ModelConfig', ((self.image_size, self.image_size), (self.patch_size,)))
        if self.width % self.heads != 0:
            raise ContractError('ModelConfig', "width %i not divisible by %i heads" % (self.width, self.heads))
        if self.layers < 1:
            raise ContractError('ModelConfig', "at least one layer is required")
        if self.max_text_len < 2:
            raise ContractError('ModelConfig', "text length must leave room for SOS and EOS")
        return

    @property
    def grid(self) -> int:
        """Patches per image side."""
        return self.image_size // self.patch_size

    @property
    def num_patches(self) -> int:
        """N_v."""
        return self.grid * self.grid

    @property
    def patch_dim(self) -> int:
        return 3 * self.patch_size * self.patch_size


#####################################
# Patches:
#####################################
def patchify(image: np.ndarray, patch_size: int) -> np.ndarray:
    """
    Cut an image into raster ordered, flattened, non-overlapping patches.
    :param image: np.ndarray: [H, W, C] or batched [B, H, W, C].
    :param patch_size: int: P.
    :raises DimensionError: If H or W is not divisible by P.
    :return: np.ndarray: [N_v, P*P*C] or [B, N_v, P*P*C].
    """
    array: np.ndarray = np.asarray(image)
    single: bool = array.ndim == 3
    if single:
        array = array[None]
    if array.ndim != 4:
        raise DimensionError('patchify', (array.shape,))
    batch, height, width, channels = array.shape
    if patch_size < 1 or height % patch_size != 0 or width % patch_size != 0:
        raise DimensionError('patchify', ((height, width), (patch_size, patch_size)))
    rows, cols = height // patch_size, width // patch_size
    patches: np.ndarray = (array.reshape(batch, rows, patch_size, cols, patch_size, channels)
                           .transpose(0, 1, 3, 2, 4, 5)
                           .reshape(batch, rows * cols, patch_size * patch_size * channels))
    return patches[0] if single else patches


def unpatchify(patches: np.ndarray, patch_size: int, height: int, width: int) -> np.ndarray:
    """
    Reassemble patchify() output into an image.
    :param patches: np.ndarray: [N_v, P*P*C] or [B, N_v, P*P*C].
    :param patch_size: int: P.
    :param height: int: H.
    :param width: int: W.
    :return: np.ndarray: [H, W, C] or [B, H, W, C].
    """
    array: np.ndarray = np.asarray(patches)
    single: bool = array.ndim == 2
    if single:
        array = array[None]
    rows, cols = height // patch_size, width // patch_size
    batch, count, length = array.shape
    channels: int = length // (patch_size * patch_size)
    if count != rows * cols or channels * patch_size * patch_size != length:
        raise DimensionError('unpatchify', (array.shape, (height, width, patch_size)))
    image: np.ndarray = (array.reshape(batch, rows, cols, patch_size, patch_size, channels)
                         .transpose(0, 1, 3, 2, 4, 5)
                         .reshape(batch, height, width, channels))
    return image[0] if single else image


def text_padding_mask(token_ids: np.ndarray) -> np.ndarray:
    """True where the token is PAD."""
    return np.asarray(token_ids) == SpecialToken.PAD


def global_token_index(token_ids: np.ndarray, which: GlobalToken) -> np.ndarray:
    """
    Per sequence position of the token standing for the whole expression.
    :param token_ids: np.ndarray: [B, N_t]
    :param which: GlobalToken: SOS or EOS.
    :return: np.ndarray: [B] positions.
    """
    token_ids = np.asarray(token_ids)
    if which == GlobalToken.SOS:
        return np.zeros(token_ids.shape[0], dtype=np.int64)
    is_eos: np.ndarray = token_ids == SpecialToken.EOS
    if not is_eos.any(axis=1).all():
        raise ContractError('global_token_index', "a sequence has no EOS token")
    return np.argmax(is_eos, axis=1)


def select_tokens(z: Tensor, positions: np.ndarray) -> Tensor:
    """
    Gather one token per batch row.
    :param z: Tensor: [B, N, D]
    :param positions: np.ndarray: [B]
    :return: Tensor: [B, 1, D]
    """
    rows: np.ndarray = np.arange(z.shape[0])
    return z[rows, np.asarray(positions)].reshape(z.shape[0], 1, z.shape[2])


#####################################
# Encoders:
#####################################
class ImageEncoder(Module):
    """
    Patch projection, class token and positions, then pre-norm transformer layers.
    """
    def __init__(self, config: ModelConfig, rng: Rng) -> None:
        Module.__init__(self)
        self.config: ModelConfig = config
        width: int = config.width
        self.patch_embed: Linear = Linear(config.patch_dim, width, rng.child('patch'), bias=False)
        self.class_token: Parameter = uniform_weight(rng.child('cls'), width, (width,))
        self.pos_embed: Parameter = uniform_weight(rng.child('pos'), width, (config.num_patches + 1, width))
        self.ln_pre: LayerNorm = LayerNorm(width)
        self.layers: ModuleList = ModuleList([
            TransformerLayer(width, config.heads, config.mlp_ratio, rng.child('layer%i' % index))
            for index in range(config.layers)
        ])
        self.ln_post: LayerNorm = LayerNorm(width)
        self.proj: Linear = Linear(width, config.embed_dim, rng.child('proj'), bias=False)
        return

    def embed(self, images: np.ndarray) -> Tensor:
        """
        Z_v^0 = LN([x_cls; patches W_e] + E_v).
        :param images: np.ndarray: [B, H, W, 3]
        :return: Tensor: [B, N_v + 1, D]
        """
        images = np.asarray(images)
        if images.shape[1:3] != (self.config.image_size, self.config.image_size):
            raise DimensionError('embed_image', (images.shape, (self.config.image_size, self.config.image_size)))
        patches: Tensor = Tensor(patchify(images, self.config.patch_size), dtype=self.patch_embed.weight.dtype)
        tokens: Tensor = self.patch_embed(patches)
        batch, width = tokens.shape[0], self.config.width
        cls: Tensor = te.broadcast_to(self.class_token.reshape(1, 1, width), (batch, 1, width))
        return self.ln_pre(te.concat([cls, tokens], axis=1) + self.pos_embed)

    def layer(self, index: int, z: Tensor) -> tuple[Tensor, np.ndarray]:
        """
        Run layer index (1 based).
        :raises ContractError: If index is outside 1..L.
        """
        if not 1 <= index <= len(self.layers):
            raise ContractError('image_layer', "layer %i outside 1..%i" % (index, len(self.layers)))
        return self.layers[index - 1](z)

    def pooled(self, z: Tensor) -> Tensor:
        """Projected class token, [B, embed_dim]."""
        return self.proj(self.ln_post(z[:, 0, :]))


class TextEncoder(Module):
    """
    Token table and positions, then pre-norm transformer layers with PAD keys masked.
    """
    def __init__(self, config: ModelConfig, rng: Rng) -> None:
        Module.__init__(self)
        self.config: ModelConfig = config
        width: int = config.width
        self.token_embed: Parameter = uniform_weight(rng.child('tokens'), width, (config.vocab_size, width))
        self.pos_embed: Parameter = uniform_weight(rng.child('pos'), width, (config.max_text_len, width))
        self.layers: ModuleList = ModuleList([
            TransformerLayer(width, config.heads, config.mlp_ratio, rng.child('layer%i' % index))
            for index in range(config.layers)
        ])
        self.ln_final: LayerNorm = LayerNorm(width)
        self.proj: Linear = Linear(width, config.embed_dim, rng.child('proj'), bias=False)
        return

    def embed(self, token_ids: np.ndarray) -> Tensor:
        """
        Z_t^0 = token table rows + E_t.
        :param token_ids: np.ndarray: [B, n] with n <= N_t.
        :raises VocabularyError: On an id outside the vocabulary.
        :raises DimensionError: If the sequence is longer than N_t.
        :return: Tensor: [B, n, D]
        """
        token_ids = np.asarray(token_ids, dtype=np.int64)
        if token_ids.ndim != 2 or token_ids.shape[1] > self.config.max_text_len:
            raise DimensionError('embed_text', (token_ids.shape, (self.config.max_text_len,)))
        bad: np.ndarray = (token_ids < 0) | (token_ids >= self.config.vocab_size)
        if bad.any():
            raise VocabularyError(int(token_ids[bad][0]))
        length: int = token_ids.shape[1]
        return te.embedding(self.token_embed, token_ids) + self.pos_embed[:length]

    def layer(self, index: int, z: Tensor, key_padding_mask: Optional[np.ndarray]) -> tuple[Tensor, np.ndarray]:
        if not 1 <= index <= len(self.layers):
            raise ContractError('text_layer', "layer %i outside 1..%i" % (index, len(self.layers)))
        return self.layers[index - 1](z, key_padding_mask)

    def pooled(self, z: Tensor, token_ids: np.ndarray, which: GlobalToken) -> Tensor:
        """Projected global text token, [B, embed_dim]."""
        token: Tensor = select_tokens(z, global_token_index(token_ids, which))
        return self.proj(self.ln_final(token.reshape(z.shape[0], z.shape[2])))


class Backbone(Module):
    """
    The image and text encoders together, with a freeze switch.
    """
    def __init__(self, config: ModelConfig, rng: Rng) -> None:
        Module.__init__(self)
        self.config: ModelConfig = config
        self.image: ImageEncoder = ImageEncoder(config, rng.child('image'))
        self.text: TextEncoder = TextEncoder(config, rng.child('text'))
        return

    @property
    def num_layers(self) -> int:
        return self.config.layers

    def embed_image(self, images: np.ndarray) -> Tensor:
        return self.image.embed(images)

    def image_layer(self, index: int, z_v: Tensor) -> Tensor:
        return self.image.layer(index, z_v)[0]

    def embed_text(self, token_ids: np.ndarray) -> Tensor:
        return self.text.embed(token_ids)

    def text_layer(self, index: int, z_t: Tensor, key_padding_mask: Optional[np.ndarray] = None) -> Tensor:
        return self.text.layer(index, z_t, key_padding_mask)[0]

    def encode(self, images: np.ndarray, token_ids: np.ndarray) -> tuple[Tensor, Tensor]:
        """
        Run both encoders through every layer.
        :param images: np.ndarray: [B, H, W, 3]
        :param token_ids: np.ndarray: [B, N_t]
        :return: tuple[Tensor, Tensor]: Z_v^L [B, N_v + 1, D], Z_t^L [B, N_t, D].
        """
        logger: logging.Logger = logging.getLogger(__name__ + '.' + self.encode.__name__)
        mask: np.ndarray = text_padding_mask(token_ids)
        z_v: Tensor = self.embed_image(images)
        z_t: Tensor = self.embed_text(token_ids)
        for index in range(1, self.num_layers + 1):
            z_v = self.image_layer(index, z_v)
            z_t = self.text_layer(index, z_t, mask)
        logger.debug("encoded batch of %i" % z_v.shape[0])
        return z_v, z_t

    def contrastive_features(self,
                             images: np.ndarray,
                             token_ids: np.ndarray,
                             which: GlobalToken = GlobalToken.SOS,
                             ) -> tuple[Tensor, Tensor]:
        """
        Projected image class tokens and global text tokens for image/text similarity.
        :return: tuple[Tensor, Tensor]: Image features [B, E], text features [B, E].
        """
        z_v, z_t = self.encode(images, token_ids)
        return self.image.pooled(z_v), self.text.pooled(z_t, token_ids, which)
