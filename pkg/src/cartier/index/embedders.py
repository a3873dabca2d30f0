"""Text/pixel embedders used by the embedding grid.

Real vision-language models are not bundled. :class:`HashingEmbedder` is a
deterministic bag-of-words embedder: each lowercase word maps to a fixed
pseudo-random unit vector and a text embeds to the normalized sum of its word
vectors. :class:`SyntheticPixelEmbedder` adds per-pixel embeddings for frames
that carry detections, painting each pixel with the embedding of the label
whose bbox covers it.
"""

from __future__ import annotations

import hashlib
import re
from typing import Protocol, runtime_checkable

import numpy as np

_WORD = re.compile(r"[a-z0-9]+")


@runtime_checkable
class Embedder(Protocol):
    identity: str
    dimension: int
    # largest value the similarity returned by a grid query can take
    similarity_bound: float

    def embed_text(self, text: str) -> np.ndarray: ...


def supports_pixels(embedder) -> bool:
    return callable(getattr(embedder, "embed_pixels", None))


class HashingEmbedder:
    similarity_bound = 1.0

    def __init__(self, dimension: int = 64, salt: str = "cartier"):
        if dimension <= 0:
            raise ValueError("dimension must be positive")
        self.dimension = dimension
        self.salt = salt
        self.identity = f"hashing-bow/d={dimension}/salt={salt}"
        self._cache: dict[str, np.ndarray] = {}

    def word_vector(self, word: str) -> np.ndarray:
        vec = self._cache.get(word)
        if vec is None:
            digest = hashlib.sha256(f"{self.salt}\x00{word}".encode()).digest()
            rng = np.random.default_rng(int.from_bytes(digest[:16], "little"))
            vec = rng.standard_normal(self.dimension)
            vec /= np.linalg.norm(vec)
            self._cache[word] = vec
        return vec

    def embed_text(self, text: str) -> np.ndarray:
        words = _WORD.findall(text.lower().replace("_", " "))
        if not words:
            return np.zeros(self.dimension)
        total = np.sum([self.word_vector(w) for w in words], axis=0)
        n = np.linalg.norm(total)
        return total / n if n > 0 else total


class SyntheticPixelEmbedder(HashingEmbedder):
    """Hashing embedder that can also embed the pixels of a trajectory frame.

    Pixels covered by a detection bbox take that label's text embedding (the
    smallest covering bbox wins); all other pixels take ``background``'s.
    """

    def __init__(self, dimension: int = 64, salt: str = "cartier", background: str = "background"):
        super().__init__(dimension, salt)
        self.background = background
        self.identity = f"synthetic-pixel/d={dimension}/salt={salt}"

    def embed_pixels(self, frame) -> np.ndarray:
        h, w = frame.depth.shape
        label_ids = np.full((h, w), -1, dtype=np.int64)
        labels: list[str] = []
        # paint large boxes first so smaller ones end up on top
        order = sorted(range(len(frame.detections)), key=lambda i: (-frame.detections[i].bbox.area, i))
        for i in order:
            det = frame.detections[i]
            if det.label not in labels:
                labels.append(det.label)
            b = det.bbox
            label_ids[b.ymin : b.ymax, b.xmin : b.xmax] = labels.index(det.label)
        table = np.stack([self.embed_text(lb) for lb in labels] + [self.embed_text(self.background)])
        return table[label_ids]  # -1 indexes the trailing background row
