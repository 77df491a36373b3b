#!/usr/bin/env python3
"""
File: syntheticData.py
    Deterministic grounding scenes: filled shapes on a plain background, one referent per scene, and the
    shortest templated expression that singles it out.
        Classes:
            GeneratorConfig, SceneObject, GroundingSample, Batch.
        Functions:
            generate_scene, generate_dataset, tokenize, detokenize, dataset_split, write_dataset, load_dataset,
            collate, iterate_batches.
"""
import base64
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Final, Iterator, Optional, Sequence

import numpy as np

from cliExceptions import ContractError, DimensionError, GenerationError, VocabularyError
from common import SpecialToken
from tensorEngine import Rng

#####################################
# Vocabulary:
#####################################
SHAPES: Final[tuple[str, ...]] = ('circle', 'square', 'triangle')
COLOURS: Final[dict[str, tuple[float, float, float]]] = {
    'red': (0.9, 0.1, 0.1),
    'green': (0.1, 0.75, 0.2),
    'blue': (0.1, 0.25, 0.9),
    'yellow': (0.95, 0.85, 0.1),
}
SIZES: Final[dict[str, tuple[float, float]]] = {
    'small': (5.0, 7.0),
    'big': (10.0, 13.0),
}
"""Radius range in pixels per size word."""
RELATIONS: Final[dict[str, str]] = {
    'left': 'on',
    'right': 'on',
    'top': 'at',
    'bottom': 'at',
}
"""Relation word -> its preposition."""
VOCABULARY: Final[tuple[str, ...]] = (
    '<pad>', '<sos>', '<eos>', 'the', 'on', 'at',
    *SHAPES, *COLOURS.keys(), *SIZES.keys(), *RELATIONS.keys(),
)
"""Every word, at its id."""
WORD_IDS: Final[dict[str, int]] = {word: index for index, word in enumerate(VOCABULARY)}

#####################################
# Constants:
#####################################
BACKGROUND: Final[tuple[float, float, float]] = (0.12, 0.12, 0.12)
RELATION_DEAD_ZONE: Final[float] = 4.0
"""Centroids must differ by at least this many pixels for a relation to hold."""
MAX_ATTEMPTS: Final[int] = 100
PLACEMENT_TRIES: Final[int] = 200
OBJECT_GAP: Final[float] = 2.0
"""Minimum pixels between object bounding squares."""


#####################################
# Types:
#####################################
@dataclass(frozen=True)
class GeneratorConfig:
    image_size: int = 64
    min_objects: int = 2
    max_objects: int = 5
    max_text_len: int = 12

    def validate(self) -> None:
        if not 1 <= self.min_objects <= self.max_objects:
            raise ContractError('GeneratorConfig', "object count range %i..%i is empty"
                                % (self.min_objects, self.max_objects))
        if self.image_size < 32:
            raise ContractError('GeneratorConfig', "image size %i leaves no room for shapes" % self.image_size)
        return


@dataclass
class SceneObject:
    shape: str
    colour: str
    size: str
    cx: float
    cy: float
    radius: float
    mask: np.ndarray = field(repr=False, default=None)

    def has(self, attributes: dict[str, str]) -> bool:
        return all(getattr(self, name) == value for name, value in attributes.items())


@dataclass
class GroundingSample:
    image: np.ndarray
    """[H, W, 3] float32 in [0, 1]."""
    tokens: np.ndarray
    """[N_t] int64, SOS ... EOS then PAD."""
    box: np.ndarray
    """[4] float32 normalized (cx, cy, w, h), the tight box of mask."""
    mask: np.ndarray
    """[H, W] uint8 in {0, 1}."""
    seed: int
    expression: list[str] = field(default_factory=list)
    objects: list[SceneObject] = field(default_factory=list, repr=False)
    """The rendered objects, only for freshly generated samples."""
    referent: int = -1


@dataclass
class Batch:
    images: np.ndarray
    tokens: np.ndarray
    boxes: np.ndarray
    masks: np.ndarray

    def __len__(self) -> int:
        return self.images.shape[0]


#####################################
# Tokens:
#####################################
def tokenize(words: Sequence[str] | str, max_len: int = 12) -> np.ndarray:
    """
    [SOS, words..., EOS] right padded with PAD.
    :param words: Sequence[str] | str: The expression, a word list or space separated.
    :param max_len: int: N_t.
    :raises VocabularyError: On an unknown word.
    :raises DimensionError: If the bracketed expression is longer than max_len.
    :return: np.ndarray: [max_len] int64.
    """
    if isinstance(words, str):
        words = words.split()
    ids: list[int] = [int(SpecialToken.SOS)]
    for word in words:
        if word not in WORD_IDS or WORD_IDS[word] <= SpecialToken.EOS:
            raise VocabularyError(word)
        ids.append(WORD_IDS[word])
    ids.append(int(SpecialToken.EOS))
    if len(ids) > max_len:
        raise DimensionError('tokenize', ((len(ids),), (max_len,)))
    return np.asarray(ids + [int(SpecialToken.PAD)] * (max_len - len(ids)), dtype=np.int64)


def detokenize(ids: Sequence[int]) -> list[str]:
    """
    The words between SOS and EOS.
    :raises VocabularyError: On an id outside the vocabulary.
    """
    words: list[str] = []
    for token in ids:
        token = int(token)
        if not 0 <= token < len(VOCABULARY):
            raise VocabularyError(token)
        if token == SpecialToken.EOS:
            break
        if token in (SpecialToken.SOS, SpecialToken.PAD):
            continue
        words.append(VOCABULARY[token])
    return words


#####################################
# Rendering:
#####################################
def render_shape(shape: str, cx: float, cy: float, radius: float, size: int) -> np.ndarray:
    """
    Rasterize a filled shape by testing pixel centres.
    :param shape: str: circle, square or triangle.
    :param cx: float: Centre column in pixels.
    :param cy: float: Centre row in pixels.
    :param radius: float: Circle radius, square half side, triangle half base / half height.
    :param size: int: Image side.
    :return: np.ndarray: [size, size] uint8 mask.
    """
    ys, xs = np.mgrid[0:size, 0:size] + 0.5
    dx, dy = xs - cx, ys - cy
    if shape == 'circle':
        inside: np.ndarray = dx * dx + dy * dy <= radius * radius
    elif shape == 'square':
        inside = (np.abs(dx) <= radius) & (np.abs(dy) <= radius)
    elif shape == 'triangle':
        # apex up at (cx, cy - r), base corners at (cx -/+ r, cy + r)
        inside = (dy <= radius) & (np.abs(dx) <= (dy + radius) / 2.0)
    else:
        raise VocabularyError(shape)
    return inside.astype(np.uint8)


def tight_box(mask: np.ndarray) -> np.ndarray:
    """
    Normalized (cx, cy, w, h) of the pixel extent of a mask.
    :raises ContractError: On an empty mask.
    """
    ys, xs = np.nonzero(mask)
    if xs.size == 0:
        raise ContractError('tight_box', "mask is empty")
    height, width = mask.shape
    x1, x2 = xs.min(), xs.max() + 1
    y1, y2 = ys.min(), ys.max() + 1
    return np.asarray([(x1 + x2) / 2.0 / width, (y1 + y2) / 2.0 / height,
                       (x2 - x1) / width, (y2 - y1) / height], dtype=np.float32)


def _place_objects(rng: Rng, config: GeneratorConfig) -> Optional[list[SceneObject]]:
    count: int = int(rng.integers(config.min_objects, config.max_objects + 1))
    objects: list[SceneObject] = []
    size_words: list[str] = list(SIZES.keys())
    colour_words: list[str] = list(COLOURS.keys())
    for _ in range(count):
        size_word: str = size_words[int(rng.integers(0, len(size_words)))]
        low, high = SIZES[size_word]
        radius: float = float(rng.uniform(low, high, ()))
        placed: bool = False
        for _ in range(PLACEMENT_TRIES):
            cx: float = float(rng.uniform(radius + 1.0, config.image_size - radius - 1.0, ()))
            cy: float = float(rng.uniform(radius + 1.0, config.image_size - radius - 1.0, ()))
            clear: bool = all(abs(cx - other.cx) >= radius + other.radius + OBJECT_GAP
                              or abs(cy - other.cy) >= radius + other.radius + OBJECT_GAP for other in objects)
            if clear:
                objects.append(SceneObject(SHAPES[int(rng.integers(0, len(SHAPES)))],
                                           colour_words[int(rng.integers(0, len(colour_words)))],
                                           size_word, cx, cy, radius))
                placed = True
                break
        if not placed:
            return None
    for item in objects:
        item.mask = render_shape(item.shape, item.cx, item.cy, item.radius, config.image_size)
    return objects


#####################################
# Expressions:
#####################################
_ATTRIBUTE_ORDERS: Final[tuple[tuple[str, ...], ...]] = (
    ('shape',), ('colour', 'shape'), ('size', 'shape'), ('size', 'colour', 'shape'),
)


def _holds(relation: str, item: SceneObject, other: SceneObject) -> bool:
    if relation == 'left':
        return item.cx + RELATION_DEAD_ZONE <= other.cx
    if relation == 'right':
        return item.cx - RELATION_DEAD_ZONE >= other.cx
    if relation == 'top':
        return item.cy + RELATION_DEAD_ZONE <= other.cy
    return item.cy - RELATION_DEAD_ZONE >= other.cy


def denoted(objects: Sequence[SceneObject], attributes: dict[str, str], relation: Optional[str]) -> list[int]:
    """
    Indices of the objects an expression describes.
    With a relation, an object qualifies when it holds the relation against every other object sharing the
    attributes.
    :param objects: Sequence[SceneObject]: The scene.
    :param attributes: dict[str, str]: Attribute name -> word, e.g. {'colour': 'red', 'shape': 'circle'}.
    :param relation: Optional[str]: left, right, top, bottom or None.
    :return: list[int]: The matching indices.
    """
    candidates: list[int] = [index for index, item in enumerate(objects) if item.has(attributes)]
    if relation is None:
        return candidates
    return [index for index in candidates
            if all(_holds(relation, objects[index], objects[other]) for other in candidates if other != index)]


def expression_words(attributes: dict[str, str], relation: Optional[str]) -> list[str]:
    words: list[str] = ['the']
    for name in ('size', 'colour', 'shape'):
        if name in attributes:
            words.append(attributes[name])
    if relation is not None:
        words += [RELATIONS[relation], 'the', relation]
    return words


def parse_expression(words: Sequence[str]) -> tuple[dict[str, str], Optional[str]]:
    """
    Recover the attributes and relation of an expression_words() phrase.
    """
    attributes: dict[str, str] = {}
    relation: Optional[str] = None
    for word in words:
        if word in SHAPES:
            attributes['shape'] = word
        elif word in COLOURS:
            attributes['colour'] = word
        elif word in SIZES:
            attributes['size'] = word
        elif word in RELATIONS:
            relation = word
        elif word not in WORD_IDS:
            raise VocabularyError(word)
    return attributes, relation


def minimal_expression(objects: Sequence[SceneObject], referent: int) -> Optional[list[str]]:
    """
    The shortest expression denoting exactly the referent, or None.
    """
    item: SceneObject = objects[referent]
    options: list[tuple[dict[str, str], Optional[str]]] = []
    for relation in (None, 'left', 'right', 'top', 'bottom'):
        for order in _ATTRIBUTE_ORDERS:
            options.append(({name: getattr(item, name) for name in order}, relation))
    options.sort(key=lambda option: len(expression_words(*option)))
    for attributes, relation in options:
        if denoted(objects, attributes, relation) == [referent]:
            return expression_words(attributes, relation)
    return None


#####################################
# Scenes:
#####################################
def derive_seed(seed: int, index: int) -> int:
    """The scene seed of sample index in a dataset built from seed."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def generate_scene(seed: int, config: GeneratorConfig = GeneratorConfig()) -> GroundingSample:
    """
    Render one scene and its referring expression.
    :param seed: int: The scene seed; equal seeds give bit identical samples.
    :param config: GeneratorConfig: Scene layout.
    :raises GenerationError: If no unambiguous referent turns up within MAX_ATTEMPTS scenes.
    :return: GroundingSample: The sample.
    """
    logger: logging.Logger = logging.getLogger(__name__ + '.' + generate_scene.__name__)
    config.validate()
    rng: Rng = Rng(seed, 'scene')
    for attempt in range(MAX_ATTEMPTS):
        objects: Optional[list[SceneObject]] = _place_objects(rng, config)
        if objects is None:
            continue
        referent: int = int(rng.integers(0, len(objects)))
        words: Optional[list[str]] = minimal_expression(objects, referent)
        if words is None:
            logger.debug("seed %i attempt %i: referent not separable, resampling" % (seed, attempt))
            continue
        image: np.ndarray = np.empty((config.image_size, config.image_size, 3), dtype=np.float32)
        image[:, :] = BACKGROUND
        for item in objects:
            image[item.mask.astype(bool)] = COLOURS[item.colour]
        mask: np.ndarray = objects[referent].mask
        return GroundingSample(image, tokenize(words, config.max_text_len), tight_box(mask), mask, seed, words,
                              objects, referent)
    raise GenerationError(seed, MAX_ATTEMPTS)


def generate_dataset(seed: int, count: int, config: GeneratorConfig = GeneratorConfig()) -> list[GroundingSample]:
    """
    count scenes, sample i built from derive_seed(seed, i).
    """
    logger: logging.Logger = logging.getLogger(__name__ + '.' + generate_dataset.__name__)
    if count < 0:
        raise ContractError('generate_dataset', "count must be >= 0")
    samples: list[GroundingSample] = [generate_scene(derive_seed(seed, index), config) for index in range(count)]
    logger.info("generated %i samples from seed %i" % (count, seed))
    return samples


def dataset_split(total: int, seed: int, val_fraction: float = 0.1) -> tuple[np.ndarray, np.ndarray]:
    """
    Disjoint, covering train/validation index sets.
    :param total: int: Number of samples, at least 2.
    :param seed: int: Split seed.
    :param val_fraction: float: Share of validation samples, at least one sample each side.
    :raises ContractError: If total < 2.
    :return: tuple[np.ndarray, np.ndarray]: Sorted train indices, sorted validation indices.
    """
    if total < 2:
        raise ContractError('dataset_split', "needs at least 2 samples, got %i" % total)
    order: np.ndarray = Rng(seed, 'split').permutation(total)
    val_count: int = min(max(1, int(round(total * val_fraction))), total - 1)
    return np.sort(order[val_count:]), np.sort(order[:val_count])


#####################################
# Dataset files:
#####################################
def encode_mask(mask: np.ndarray) -> dict:
    """Run lengths of the row-major flattened mask, starting with a run of zeros."""
    flat: np.ndarray = np.asarray(mask, dtype=np.uint8).reshape(-1)
    change: np.ndarray = np.flatnonzero(np.diff(flat)) + 1
    bounds: np.ndarray = np.concatenate([[0], change, [flat.size]])
    counts: list[int] = np.diff(bounds).tolist()
    if flat.size > 0 and flat[0] == 1:
        counts = [0] + counts
    return {'size': list(mask.shape), 'counts': counts}


def decode_mask(encoded: dict) -> np.ndarray:
    counts: list[int] = encoded['counts']
    values: np.ndarray = np.arange(len(counts)) % 2
    return np.repeat(values, counts).astype(np.uint8).reshape(encoded['size'])


def _record(sample: GroundingSample, seeds_only: bool) -> dict:
    if seeds_only:
        return {'seed': sample.seed}
    return {
        'seed': sample.seed,
        'tokens': sample.tokens.tolist(),
        'box': [float(value) for value in sample.box],
        'image': base64.b64encode(sample.image.astype('<f4').tobytes()).decode('ascii'),
        'mask': encode_mask(sample.mask),
    }


def write_dataset(path: str, samples: Sequence[GroundingSample], seeds_only: bool = False) -> str:
    """
    Write one JSON record per line.
    :param path: str: The file to write.
    :param samples: Sequence[GroundingSample]: The samples.
    :param seeds_only: bool: Store only the scene seeds; load_dataset regenerates the rest.
    :raises OSError: If the file can't be written.
    :return: str: SHA-256 of the file bytes.
    """
    payload: bytes = ''.join(json.dumps(_record(sample, seeds_only), sort_keys=True, separators=(',', ':')) + '\n'
                             for sample in samples).encode('utf-8')
    directory: str = os.path.dirname(path)
    if directory != '':
        os.makedirs(directory, exist_ok=True)
    with open(path, 'wb') as file_handle:
        file_handle.write(payload)
    return hashlib.sha256(payload).hexdigest()


def load_dataset(path: str, config: GeneratorConfig = GeneratorConfig()) -> list[GroundingSample]:
    """
    Read a dataset file; seed-only records are regenerated.
    :raises OSError: If the file can't be read.
    :raises ContractError: On a malformed record.
    """
    logger: logging.Logger = logging.getLogger(__name__ + '.' + load_dataset.__name__)
    samples: list[GroundingSample] = []
    with open(path, 'r', encoding='utf-8') as file_handle:
        for line_number, line in enumerate(file_handle, start=1):
            if line.strip() == '':
                continue
            try:
                record: dict = json.loads(line)
                if 'image' not in record:
                    samples.append(generate_scene(int(record['seed']), config))
                    continue
                size: int = config.image_size
                image: np.ndarray = np.frombuffer(base64.b64decode(record['image']), dtype='<f4')
                samples.append(GroundingSample(
                    image.astype(np.float32).reshape(size, size, 3),
                    np.asarray(record['tokens'], dtype=np.int64),
                    np.asarray(record['box'], dtype=np.float32),
                    decode_mask(record['mask']),
                    int(record['seed']),
                    detokenize(record['tokens']),
                ))
            except (KeyError, ValueError, TypeError) as e:
                raise ContractError('load_dataset', "%s line %i: %s" % (path, line_number, str(e.args)))
    logger.info("loaded %i samples from %s" % (len(samples), path))
    return samples


def dataset_hash(path: str) -> str:
    with open(path, 'rb') as file_handle:
        return hashlib.sha256(file_handle.read()).hexdigest()


#####################################
# Batching:
#####################################
def collate(samples: Sequence[GroundingSample]) -> Batch:
    """
    Stack samples: images [B, H, W, 3], tokens [B, N_t], boxes [B, 4], masks [B, H, W].
    """
    if len(samples) == 0:
        raise ContractError('collate', "empty batch")
    return Batch(np.stack([sample.image for sample in samples]).astype(np.float32),
                 np.stack([sample.tokens for sample in samples]).astype(np.int64),
                 np.stack([sample.box for sample in samples]).astype(np.float32),
                 np.stack([sample.mask for sample in samples]).astype(np.uint8))


def iterate_batches(indices: np.ndarray, batch_size: int, rng: Optional[Rng] = None) -> Iterator[np.ndarray]:
    """
    Consecutive index chunks, shuffled first when rng is given. The last chunk may be short.
    """
    if batch_size < 1:
        raise ContractError('iterate_batches', "batch size must be >= 1")
    indices = np.asarray(indices)
    if rng is not None:
        indices = indices[rng.permutation(indices.size)]
    for start in range(0, indices.size, batch_size):
        yield indices[start:start + batch_size]
