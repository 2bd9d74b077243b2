"""Composite contrastive training over the toy encoder.

The objective is L = lambda1 * L1 + lambda2 * L2 where L1 is a binary
cross-entropy over description/image cosine similarities (own positive and
both structure negatives, plus the other batch items' positives as in-batch
negatives) and L2 sums the entropic graph-transport distances of the
positive pairs.

Gradients with respect to the projection and the reserved-token vectors are
analytic. L2 uses the regularized transport objective (transport cost plus
the gamma-weighted entropy term), for which the envelope identity
dL2/dC_ij = T_ij holds exactly at a converged plan.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .encoders import TextParts, ToyEncoder
from .errors import BatchTooSmallError, DataError, DivergedError
from .hashing import derive_seed
from .io import ConfusionMatrix
from .negatives import NegativePair, generate_negative_pair
from .primary import select_primary
from .prompts import CompletionClient, DescriptionSet, Exemplar, RenderedText, build_description_set
from .transport import cost_term_refs, sinkhorn
from .types import CorpusRecord, EventGraph, Ontology, image_graph, text_graph

__all__ = [
    "CLAMP_EPS",
    "binary_alignment_term",
    "BatchItem",
    "Batch",
    "LossReport",
    "TrainConfig",
    "TrainResult",
    "prepare_batch",
    "contrastive_loss",
    "graph_loss",
    "composite_loss",
    "train",
    "description_image_scores",
]

CLAMP_EPS = 1e-7


def binary_alignment_term(similarity: float, positive: bool) -> float:
    """Cross-entropy of one description/image pair.

    The cosine similarity is mapped to s_hat = (s + 1) / 2 and clamped to
    [1e-7, 1 - 1e-7]; positives contribute -log(s_hat), negatives
    -log(1 - s_hat).
    """
    s_hat = (float(similarity) + 1.0) / 2.0
    s_hat = min(max(s_hat, CLAMP_EPS), 1.0 - CLAMP_EPS)
    return -math.log(s_hat) if positive else -math.log(1.0 - s_hat)


def _term_grad(similarity: float, positive: bool) -> float:
    """d(term)/d(similarity); zero where the clamp is active."""
    s_hat = (float(similarity) + 1.0) / 2.0
    if s_hat < CLAMP_EPS or s_hat > 1.0 - CLAMP_EPS:
        return 0.0
    return -0.5 / s_hat if positive else 0.5 / (1.0 - s_hat)


@dataclass(frozen=True)
class BatchItem:
    record: CorpusRecord
    pair: NegativePair
    descriptions: DescriptionSet
    text_graph: EventGraph
    image_graph: EventGraph


@dataclass(frozen=True)
class Batch:
    items: tuple[BatchItem, ...]

    def __post_init__(self) -> None:
        if len(self.items) < 2:
            raise BatchTooSmallError(
                f"need at least 2 items for in-batch negatives, got {len(self.items)}")

    def __len__(self) -> int:
        return len(self.items)


@dataclass(frozen=True)
class LossReport:
    l1: float
    l2: float
    lambda1: float
    lambda2: float
    total: float

    @classmethod
    def combine(cls, l1: float, l2: float, lambda1: float, lambda2: float) -> LossReport:
        return cls(l1=l1, l2=l2, lambda1=lambda1, lambda2=lambda2,
                   total=lambda1 * l1 + lambda2 * l2)


# ---------------------------------------------------------------------------
# batch preparation

def prepare_batch(
    records: Sequence[CorpusRecord],
    ont: Ontology,
    provider,
    event_cm: ConfusionMatrix,
    arg_cm: ConfusionMatrix,
    *,
    seed: int = 0,
    prompt_kind: str = "composed",
    client: CompletionClient | None = None,
    exemplars: Sequence[Exemplar] = (),
) -> Batch:
    """Select each record's primary event, build negatives, render descriptions."""
    items = []
    for record in records:
        idx = select_primary(record, ont, provider)
        pair = generate_negative_pair(
            record.events[idx], ont, event_cm, arg_cm,
            derive_seed(seed, record.record_id, idx))
        descriptions = build_description_set(
            record, pair, prompt_kind, ont,
            client=client, exemplars=exemplars, provider=provider)
        items.append(BatchItem(
            record=record,
            pair=pair,
            descriptions=descriptions,
            text_graph=text_graph(record, pair.positive),
            image_graph=image_graph(record),
        ))
    return Batch(tuple(items))


# ---------------------------------------------------------------------------
# L1: contrastive description/image loss

def _embed_description(provider, rendered: RenderedText) -> np.ndarray:
    if rendered.segments is not None:
        return provider.embed_segments(rendered.segments)
    return provider.text(rendered.text)


def _cosine_with_grads(u: np.ndarray, v: np.ndarray):
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise DataError("zero-length embedding in loss computation")
    c = float(u @ v) / (nu * nv)
    du = v / (nu * nv) - (c / nu**2) * u
    dv = u / (nu * nv) - (c / nv**2) * v
    return c, du, dv


def _description_pairs(batch: Batch):
    """Yield (item_index, rendered, positive, label) covering the L1 pair set."""
    for i, item in enumerate(batch.items):
        rid = item.record.record_id
        d = item.descriptions
        yield i, d.positive, True, f"{rid}/positive"
        yield i, d.negative_event, False, f"{rid}/negative_event"
        if not d.degenerate_negative_args:
            yield i, d.negative_args, False, f"{rid}/negative_args"
        for j, other in enumerate(batch.items):
            if j != i:
                yield i, other.descriptions.positive, False, (
                    f"{rid}/in_batch:{other.record.record_id}")


def contrastive_loss(batch: Batch, provider) -> float:
    """L1 over the batch; provider only needs description and image embeddings."""
    images = [provider.image(item.record) for item in batch.items]
    cache: dict[int, np.ndarray] = {}

    def emb(rendered: RenderedText) -> np.ndarray:
        key = id(rendered)
        if key not in cache:
            cache[key] = _embed_description(provider, rendered)
        return cache[key]

    total = 0.0
    for i, rendered, positive, label in _description_pairs(batch):
        c, _, _ = _cosine_with_grads(emb(rendered), images[i])
        term = binary_alignment_term(c, positive)
        if not math.isfinite(term):
            raise DivergedError(f"L1 term {label} is not finite")
        total += term
    return total


def contrastive_gradients(batch: Batch, encoder: ToyEncoder):
    """(L1, dL1/dW, dL1/dreserved) with analytic derivatives."""
    W = encoder.projection
    grad_W = np.zeros_like(W)
    grad_reserved = {tid: np.zeros(encoder.dim) for tid in encoder.reserved}

    image_bases = [encoder.base_vector(("image", item.record)) for item in batch.items]
    image_embs = [qb @ W for qb in image_bases]

    parts_cache: dict[int, TextParts] = {}

    def parts_of(rendered: RenderedText) -> TextParts:
        key = id(rendered)
        if key not in parts_cache:
            parts_cache[key] = encoder.text_parts(
                rendered.segments if rendered.segments is not None else rendered.text)
        return parts_cache[key]

    total = 0.0
    for i, rendered, positive, label in _description_pairs(batch):
        parts = parts_of(rendered)
        u = encoder.embed_parts(parts)
        v = image_embs[i]
        c, du, dv = _cosine_with_grads(u, v)
        term = binary_alignment_term(c, positive)
        if not math.isfinite(term):
            raise DivergedError(f"L1 term {label} is not finite")
        total += term
        g = _term_grad(c, positive)
        if g != 0.0:
            grad_W += np.outer(parts.base_mean, g * du)
            grad_W += np.outer(image_bases[i], g * dv)
            for tid, weight in parts.reserved_weights.items():
                grad_reserved[tid] += g * weight * du
    return total, grad_W, grad_reserved


# ---------------------------------------------------------------------------
# L2: graph transport loss

def _item_graphs(item: BatchItem, on: str) -> list[EventGraph]:
    graphs = [item.text_graph]
    if on == "all":
        graphs.append(text_graph(item.record, item.pair.negative_event))
        if item.pair.provenance.get("negative_args") != "degenerate":
            graphs.append(text_graph(item.record, item.pair.negative_args))
    return graphs


def graph_loss(
    batch: Batch,
    provider,
    ont: Ontology,
    gamma: float = 0.1,
    *,
    on: str = "positive",
    **sinkhorn_kwargs,
) -> float:
    """L2: summed regularized transport objectives of the graph alignments.

    ``on`` is "positive" or "all" descriptions.
    """
    from .transport import entropic_objective, graph_distance

    if on not in ("positive", "all"):
        raise DataError(f"graph_loss 'on' must be 'positive' or 'all', got {on!r}")
    total = 0.0
    for item in batch.items:
        for gt in _item_graphs(item, on):
            result = graph_distance(gt, item.image_graph, provider, ont, gamma, **sinkhorn_kwargs)
            value = entropic_objective(result.plan, result.cost)
            if not math.isfinite(value):
                raise DivergedError(
                    f"L2 objective for record {item.record.record_id} is not finite")
            total += value
    return total


def graph_gradients(
    batch: Batch,
    encoder: ToyEncoder,
    ont: Ontology,
    gamma: float = 0.1,
    *,
    on: str = "positive",
    **sinkhorn_kwargs,
):
    """(L2, dL2/dW) via the envelope identity dL2/dC = T at the converged plan."""
    from .transport import entropic_objective

    W = encoder.projection
    grad_W = np.zeros_like(W)
    total = 0.0
    for item in batch.items:
        for gt in _item_graphs(item, on):
            rows, cols, terms = cost_term_refs(gt, item.image_graph, ont)
            base_cache: dict[tuple, np.ndarray] = {}

            def base(ref: tuple) -> np.ndarray:
                key = (ref[0],) + tuple(
                    part.record_id if hasattr(part, "record_id") else part
                    for part in ref[1:])
                if key not in base_cache:
                    base_cache[key] = encoder.base_vector(ref)
                return base_cache[key]

            C = np.zeros((len(rows), len(cols)))
            for i, row_terms in enumerate(terms):
                for j, pairs in enumerate(row_terms):
                    C[i, j] = sum(
                        1.0 - _cosine_with_grads(base(tref) @ W, base(iref) @ W)[0]
                        for tref, iref in pairs)
            plan = sinkhorn(C, gamma, **sinkhorn_kwargs)
            value = entropic_objective(plan, C)
            if not math.isfinite(value):
                raise DivergedError(
                    f"L2 objective for record {item.record.record_id} is not finite")
            total += value
            for i, row_terms in enumerate(terms):
                for j, pairs in enumerate(row_terms):
                    t_ij = plan.matrix[i, j]
                    if t_ij == 0.0:
                        continue
                    for tref, iref in pairs:
                        p, q = base(tref), base(iref)
                        _, du, dv = _cosine_with_grads(p @ W, q @ W)
                        grad_W -= t_ij * (np.outer(p, du) + np.outer(q, dv))
    return total, grad_W


def composite_loss(
    batch: Batch,
    provider,
    ont: Ontology,
    *,
    gamma: float = 0.1,
    lambda1: float = 1.0,
    lambda2: float = 1.0,
    on: str = "positive",
) -> LossReport:
    l1 = contrastive_loss(batch, provider)
    l2 = graph_loss(batch, provider, ont, gamma, on=on) if lambda2 != 0.0 else 0.0
    return LossReport.combine(l1, l2, lambda1, lambda2)


# ---------------------------------------------------------------------------
# training loop

@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for ``train``; everything is deterministic given ``seed``."""

    prompt_kind: str = "composed"
    gamma: float = 0.1
    lambda1: float = 1.0
    lambda2: float = 1.0
    epochs: int = 50
    learning_rate: float = 0.05
    momentum: float = 0.0
    seed: int = 0
    dim: int = 16
    base_dim: int = 64
    batch_size: int | None = None
    graph_loss_on: str = "positive"
    sinkhorn_tol: float = 1e-6
    sinkhorn_max_iter: int = 500
    exemplars: tuple[Exemplar, ...] = ()
    client: CompletionClient | None = None


@dataclass(frozen=True)
class TrainResult:
    provider: ToyEncoder
    history: tuple[LossReport, ...]
    items: tuple[BatchItem, ...]


def _epoch_chunks(items, batch_size, rng):
    if batch_size is None or batch_size >= len(items):
        return [list(items)]
    order = rng.permutation(len(items))
    chunks = []
    for start in range(0, len(items), batch_size):
        chunk = [items[k] for k in order[start : start + batch_size]]
        if len(chunk) >= 2:
            chunks.append(chunk)
    return chunks


def train(
    records: Sequence[CorpusRecord],
    ont: Ontology,
    event_cm: ConfusionMatrix,
    arg_cm: ConfusionMatrix,
    config: TrainConfig = TrainConfig(),
) -> TrainResult:
    """Gradient descent on the composite loss over the toy encoder's parameters.

    Returns the trained encoder together with the per-epoch loss curve.
    Raises DivergedError as soon as any loss term goes non-finite.
    """
    if config.epochs < 1:
        raise DataError("epochs must be at least 1")
    encoder = ToyEncoder(dim=config.dim, base_dim=config.base_dim,
                         seed=config.seed, ontology=ont)
    batch = prepare_batch(
        records, ont, encoder, event_cm, arg_cm,
        seed=config.seed, prompt_kind=config.prompt_kind,
        client=config.client, exemplars=config.exemplars)

    velocity_W = np.zeros_like(encoder.projection)
    velocity_reserved = {tid: np.zeros(encoder.dim) for tid in encoder.reserved}
    history: list[LossReport] = []
    sk = {"tol": config.sinkhorn_tol, "max_iter": config.sinkhorn_max_iter}

    for epoch in range(config.epochs):
        rng = np.random.default_rng(derive_seed(config.seed, "order", epoch))
        epoch_l1 = 0.0
        epoch_l2 = 0.0
        for chunk in _epoch_chunks(batch.items, config.batch_size, rng):
            sub = Batch(tuple(chunk))
            l1, grad_W, grad_reserved = contrastive_gradients(sub, encoder)
            if config.lambda2 != 0.0:
                l2, grad_W2 = graph_gradients(
                    sub, encoder, ont, config.gamma, on=config.graph_loss_on, **sk)
            else:
                l2, grad_W2 = 0.0, 0.0
            epoch_l1 += l1
            epoch_l2 += l2
            total_grad = config.lambda1 * grad_W + config.lambda2 * grad_W2
            velocity_W = config.momentum * velocity_W - config.learning_rate * total_grad
            encoder.projection += velocity_W
            for tid, g in grad_reserved.items():
                velocity_reserved[tid] = (
                    config.momentum * velocity_reserved[tid]
                    - config.learning_rate * config.lambda1 * g)
                encoder.reserved[tid] += velocity_reserved[tid]
        history.append(LossReport.combine(
            epoch_l1, epoch_l2, config.lambda1, config.lambda2))
    return TrainResult(provider=encoder, history=tuple(history), items=batch.items)


def description_image_scores(items: Sequence[BatchItem], provider) -> np.ndarray:
    """Similarity matrix s(positive description of item i, image of item j)."""
    from .encoders import cosine

    texts = [_embed_description(provider, item.descriptions.positive) for item in items]
    images = [provider.image(item.record) for item in items]
    return np.array([[cosine(t, v) for v in images] for t in texts])
