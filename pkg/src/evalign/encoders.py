"""Embedding providers.

Two implementations of one interface: ``TableProvider`` serves precomputed
vectors from an :class:`~evalign.io.EmbeddingTable`, and ``ToyEncoder`` is a
deterministic trainable featurizer small enough to optimize on a desk.

Vectors are returned unnormalized; cosine normalizes. Providers are read-only
during inference and safe to query concurrently.
"""

from __future__ import annotations

import math
import re
from abc import ABC, abstractmethod
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .errors import DataError, MissingEmbeddingError, UndefinedSimilarityError, UnregisteredTokenError
from .hashing import derive_seed, stable_hash
from .io import EmbeddingTable, embedding_key
from .types import CorpusRecord, Ontology, ReservedToken

__all__ = [
    "cosine",
    "cosine_distance",
    "EmbeddingProvider",
    "TableProvider",
    "ToyEncoder",
    "TextParts",
    "DEFAULT_RESERVED_TOKENS",
    "save_checkpoint",
    "load_checkpoint",
]

_TOKEN_RE = re.compile(r"[0-9a-z]+")
DEFAULT_RESERVED_TOKENS = ("X0", "X1", "X2", "X3")

# float32 cannot represent every integer above 2**24, and checkpoints store
# metadata (including the seed) as float32
_MAX_EXACT_F32_INT = 2**24


def cosine(u, v) -> float:
    """Cosine similarity in [-1, 1]; raises UndefinedSimilarityError on zero vectors."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1:
        raise DataError(f"cosine needs two equal-length vectors, got {u.shape} and {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise UndefinedSimilarityError("cosine of a zero vector is undefined")
    sim = float(np.dot(u, v) / (nu * nv))
    return max(-1.0, min(1.0, sim))


def cosine_distance(u, v) -> float:
    """1 - cosine, in [0, 2]."""
    return 1.0 - cosine(u, v)


class EmbeddingProvider(ABC):
    """Resolves records, spans, regions, and ontology labels to vectors."""

    @property
    @abstractmethod
    def dim(self) -> int: ...

    @property
    def supports_text(self) -> bool:
        """Whether arbitrary strings can be embedded (False for table lookups)."""
        return False

    @abstractmethod
    def sentence(self, record: CorpusRecord) -> np.ndarray:
        """Whole-caption embedding."""

    @abstractmethod
    def image(self, record: CorpusRecord) -> np.ndarray:
        """Whole-image embedding."""

    @abstractmethod
    def span(self, record: CorpusRecord, start: int, end: int) -> np.ndarray:
        """Contextualized embedding of a caption span."""

    @abstractmethod
    def region(self, record: CorpusRecord, index: int) -> np.ndarray:
        """Embedding of the record's ``index``-th detected object."""

    @abstractmethod
    def label(self, ident: str) -> np.ndarray:
        """Embedding of an ontology identifier.

        ``ident`` is an event/entity type id, or ``"<type_id>/<role>"`` for a
        role-of-type description (rendered as "<role> of <type label>").
        """

    def text(self, text: str) -> np.ndarray:
        """Standalone embedding of an arbitrary string (optional capability)."""
        raise MissingEmbeddingError(f"txt:{text}")


class TableProvider(EmbeddingProvider):
    """Serves embeddings from a file-backed table by canonical key."""

    def __init__(self, table: EmbeddingTable) -> None:
        self.table = table

    @property
    def dim(self) -> int:
        return self.table.dim

    def sentence(self, record: CorpusRecord) -> np.ndarray:
        return self.table.vector(embedding_key("txt", record.record_id))

    def image(self, record: CorpusRecord) -> np.ndarray:
        return self.table.vector(embedding_key("img", record.record_id))

    def span(self, record: CorpusRecord, start: int, end: int) -> np.ndarray:
        return self.table.vector(embedding_key("span", record.record_id, start, end))

    def region(self, record: CorpusRecord, index: int) -> np.ndarray:
        return self.table.vector(embedding_key("bbox", record.record_id, index))

    def label(self, ident: str) -> np.ndarray:
        return self.table.vector(embedding_key("label", ident))


@dataclass(frozen=True)
class TextParts:
    """Linear decomposition of a text embedding, for analytic gradients.

    embedding = base_mean @ W + sum(weight * reserved_vector). ``base_mean``
    averages the hashed token features; reserved tokens contribute their
    trainable output-space vectors with weight count/total_items.
    """

    base_mean: np.ndarray
    reserved_weights: Mapping[str, float]
    item_count: int


class ToyEncoder(EmbeddingProvider):
    """Deterministic trainable featurizer.

    Text tokens (maximal alphanumeric runs, lowercased) are hashed into a
    bag of character 2/3-grams; images are a fixed grid of 32x32-pixel
    patches with per-record seeded pseudo-random features, so a bbox region
    is the mean of its intersecting patches. Everything passes through one
    trainable projection ``W`` (base_dim x dim). Reserved tokens (continuous
    prompts) are trainable vectors directly in the output space.

    Identical inputs give identical outputs for fixed parameters; nothing
    here depends on process state.
    """

    def __init__(
        self,
        dim: int = 16,
        base_dim: int = 64,
        seed: int = 0,
        ontology: Ontology | None = None,
        patch_size: int = 32,
        reserved_tokens: Sequence[str] = DEFAULT_RESERVED_TOKENS,
    ) -> None:
        if dim <= 0 or base_dim <= 0:
            raise DataError("dim and base_dim must be positive")
        self._dim = int(dim)
        self.base_dim = int(base_dim)
        self.seed = int(seed)
        self.ontology = ontology
        self.patch_size = int(patch_size)
        rng = np.random.default_rng(derive_seed(seed, "projection"))
        self.projection = rng.normal(scale=1.0 / math.sqrt(base_dim), size=(base_dim, dim))
        self.reserved: dict[str, np.ndarray] = {}
        for token_id in reserved_tokens:
            self.register_reserved_token(token_id)
        self._token_cache: dict[str, np.ndarray] = {}
        self._patch_cache: dict[tuple[str, int, int], np.ndarray] = {}

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def supports_text(self) -> bool:
        return True

    def register_reserved_token(self, token_id: str) -> None:
        if token_id not in self.reserved:
            rng = np.random.default_rng(derive_seed(self.seed, "reserved", token_id))
            self.reserved[token_id] = rng.normal(scale=0.1, size=self._dim)

    # -- base features ------------------------------------------------------

    def _token_feature(self, token: str) -> np.ndarray:
        cached = self._token_cache.get(token)
        if cached is not None:
            return cached
        v = np.zeros(self.base_dim)
        padded = f"^{token}$"
        for n in (2, 3):
            for i in range(len(padded) - n + 1):
                gram = padded[i : i + n]
                h = stable_hash("gram", gram)
                sign = 1.0 if (h >> 32) & 1 == 0 else -1.0
                v[h % self.base_dim] += sign
        norm = np.linalg.norm(v)
        if norm > 0:
            v /= norm
        self._token_cache[token] = v
        return v

    def _tokenize(self, text: str) -> list[tuple[str, int, int]]:
        return [(m.group(0), m.start(), m.end()) for m in _TOKEN_RE.finditer(text.lower())]

    def _text_base(self, text: str) -> np.ndarray:
        tokens = self._tokenize(text)
        if not tokens:
            return np.zeros(self.base_dim)
        return np.mean([self._token_feature(t) for t, _, _ in tokens], axis=0)

    def _span_base(self, record: CorpusRecord, start: int, end: int) -> np.ndarray:
        tokens = self._tokenize(record.caption)
        inside = [self._token_feature(t) for t, s, e in tokens if s >= start and e <= end]
        if not inside:
            # span cuts through tokens; fall back to any overlap
            inside = [self._token_feature(t) for t, s, e in tokens if s < end and e > start]
        if not inside:
            return np.zeros(self.base_dim)
        return np.mean(inside, axis=0)

    def _patch_grid(self, record: CorpusRecord) -> np.ndarray:
        w, h = record.image_size
        key = (record.record_id, w, h)
        grid = self._patch_cache.get(key)
        if grid is None:
            cols = max(1, math.ceil(w / self.patch_size))
            rows = max(1, math.ceil(h / self.patch_size))
            rng = np.random.default_rng(derive_seed(self.seed, "image", record.record_id, w, h))
            grid = rng.standard_normal((rows, cols, self.base_dim))
            self._patch_cache[key] = grid
        return grid

    def _image_base(self, record: CorpusRecord) -> np.ndarray:
        return self._patch_grid(record).mean(axis=(0, 1))

    def _region_base(self, record: CorpusRecord, bbox: Sequence[float]) -> np.ndarray:
        grid = self._patch_grid(record)
        rows, cols, _ = grid.shape
        x0, y0, x1, y1 = (float(c) for c in bbox)
        if x1 <= x0 or y1 <= y0:
            raise DataError(f"degenerate bbox {bbox!r}")
        p = self.patch_size
        # patches with positive-area intersection; a sub-patch bbox still hits one
        c0 = max(0, int(x0 // p))
        c1 = min(cols, int(math.ceil(x1 / p)))
        r0 = max(0, int(y0 // p))
        r1 = min(rows, int(math.ceil(y1 / p)))
        if c1 <= c0 or r1 <= r0:
            raise DataError(f"bbox {bbox!r} lies outside the image")
        return grid[r0:r1, c0:c1].mean(axis=(0, 1))

    def _label_phrase(self, ident: str) -> str:
        if "/" in ident:
            type_id, role = ident.split("/", 1)
            if self.ontology is not None:
                return f"{self.ontology.role_phrase(role)} of {self.ontology.label_of(type_id)}"
            return f"{role} of {type_id}"
        if self.ontology is not None:
            return self.ontology.label_of(ident)
        return ident

    def base_vector(self, ref: tuple) -> np.ndarray:
        """Pre-projection feature for a symbolic embedding reference.

        Refs: ("image", record), ("region", record, index),
        ("span", record, start, end), ("label", ident), ("text", s).
        Used by the trainer to form analytic gradients through ``projection``.
        """
        kind = ref[0]
        if kind == "image":
            return self._image_base(ref[1])
        if kind == "region":
            record, index = ref[1], ref[2]
            return self._region_base(record, record.objects[index].bbox)
        if kind == "span":
            return self._span_base(ref[1], ref[2], ref[3])
        if kind == "label":
            return self._text_base(self._label_phrase(ref[1]))
        if kind == "text":
            return self._text_base(ref[1])
        raise ValueError(f"unknown embedding ref kind {kind!r}")

    def _project(self, base: np.ndarray) -> np.ndarray:
        return base @ self.projection

    # -- provider interface -------------------------------------------------

    def text(self, text: str) -> np.ndarray:
        return self._project(self._text_base(text))

    def sentence(self, record: CorpusRecord) -> np.ndarray:
        return self._project(self._span_base(record, 0, len(record.caption)))

    def span(self, record: CorpusRecord, start: int, end: int) -> np.ndarray:
        return self._project(self._span_base(record, start, end))

    def image(self, record: CorpusRecord) -> np.ndarray:
        return self._project(self._image_base(record))

    def region(self, record: CorpusRecord, index: int) -> np.ndarray:
        return self._project(self._region_base(record, record.objects[index].bbox))

    def region_bbox(self, record: CorpusRecord, bbox: Sequence[float]) -> np.ndarray:
        """Embedding of an arbitrary bbox (not necessarily a detected object)."""
        return self._project(self._region_base(record, bbox))

    def label(self, ident: str) -> np.ndarray:
        return self._project(self._text_base(self._label_phrase(ident)))

    # -- segmented text (continuous prompts) --------------------------------

    def text_parts(self, segments: Iterable[str | ReservedToken] | str) -> TextParts:
        """Decompose plain text or a segment sequence into gradient-ready parts."""
        if isinstance(segments, str):
            segments = [segments]
        base_sum = np.zeros(self.base_dim)
        reserved_counts: dict[str, int] = {}
        items = 0
        for seg in segments:
            if isinstance(seg, ReservedToken):
                if seg.token_id not in self.reserved:
                    raise UnregisteredTokenError(seg.token_id)
                reserved_counts[seg.token_id] = reserved_counts.get(seg.token_id, 0) + 1
                items += 1
            else:
                for token, _, _ in self._tokenize(seg):
                    base_sum += self._token_feature(token)
                    items += 1
        if items == 0:
            return TextParts(np.zeros(self.base_dim), {}, 0)
        weights = {tid: count / items for tid, count in reserved_counts.items()}
        return TextParts(base_sum / items, weights, items)

    def embed_parts(self, parts: TextParts) -> np.ndarray:
        out = self._project(parts.base_mean)
        for token_id, weight in parts.reserved_weights.items():
            out = out + weight * self.reserved[token_id]
        return out

    def embed_segments(self, segments: Iterable[str | ReservedToken]) -> np.ndarray:
        """Embedding of mixed literal/reserved-token segments."""
        return self.embed_parts(self.text_parts(list(segments)))


# ---------------------------------------------------------------------------
# checkpoints: ToyEncoder parameters in the embedding-table container

_META_KEY = "meta:0"
_PROJ_PREFIX = "proj:"
_RESERVED_PREFIX = "reserved:"


def save_checkpoint(encoder: ToyEncoder, path) -> None:
    """Persist trainable parameters (projection rows + reserved vectors).

    Values are truncated to float32 by the container format. A metadata row
    carries (version, base_dim, dim, patch_size, seed) so the encoder can be
    reconstructed; the seed must stay below 2**24 to survive the float32 trip.
    """
    from .io import save_embeddings  # local import keeps module load cheap

    if encoder.seed >= _MAX_EXACT_F32_INT:
        raise DataError(f"seed {encoder.seed} too large to store exactly in a checkpoint")
    meta = np.zeros(encoder.dim, dtype=np.float64)
    meta[:5] = [1, encoder.base_dim, encoder.dim, encoder.patch_size, encoder.seed]
    pairs: list[tuple[str, np.ndarray]] = [(_META_KEY, meta)]
    for i in range(encoder.base_dim):
        pairs.append((f"{_PROJ_PREFIX}{i:05d}", encoder.projection[i]))
    for token_id in sorted(encoder.reserved):
        pairs.append((f"{_RESERVED_PREFIX}{token_id}", encoder.reserved[token_id]))
    save_embeddings(EmbeddingTable.from_pairs(pairs), path)


def load_checkpoint(path, ontology: Ontology | None = None) -> ToyEncoder:
    from .io import load_embeddings

    table = load_embeddings(path)
    if _META_KEY not in table:
        raise DataError("checkpoint is missing its metadata row")
    meta = table.vector(_META_KEY)
    if meta.shape[0] < 5 or int(meta[0]) != 1:
        raise DataError("unsupported checkpoint metadata")
    base_dim, dim, patch_size, seed = (int(v) for v in meta[1:5])
    reserved_ids = [k[len(_RESERVED_PREFIX):] for k in table.keys if k.startswith(_RESERVED_PREFIX)]
    enc = ToyEncoder(dim=dim, base_dim=base_dim, seed=seed, ontology=ontology,
                     patch_size=patch_size, reserved_tokens=reserved_ids)
    for i in range(base_dim):
        enc.projection[i] = table.vector(f"{_PROJ_PREFIX}{i:05d}")
    for token_id in reserved_ids:
        enc.reserved[token_id] = table.vector(f"{_RESERVED_PREFIX}{token_id}")
    return enc
