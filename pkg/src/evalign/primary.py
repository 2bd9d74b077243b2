"""Primary event selection.

A caption can annotate several events but the image usually depicts one.
Each event is ranked under four criteria and the one placed first most often
wins; ties fall back to the criterion priority order, then the lowest index.
"""

from __future__ import annotations

from dataclasses import dataclass

from .encoders import EmbeddingProvider, cosine
from .errors import NoEventError
from .types import CorpusRecord, Ontology

__all__ = ["select_primary", "primary_rankings", "EventRanking"]

# criterion priority for tie-breaking, in order:
#   dependency depth (shallower first), argument count (more first),
#   ontology type frequency (higher first), trigger/image similarity (higher first)
_CRITERIA = ("depth", "arguments", "frequency", "similarity")


@dataclass(frozen=True)
class EventRanking:
    """Per-event audit row: competition rank under each criterion."""

    index: int
    first_places: int
    ranks: tuple[int, int, int, int]  # same order as _CRITERIA

    @property
    def sort_key(self) -> tuple:
        return (-self.first_places, *self.ranks, self.index)


def _competition_ranks(scores: list[float]) -> list[int]:
    # rank = 1 + number of strictly better scores; ties share the best rank
    return [1 + sum(1 for other in scores if other > s) for s in scores]


def primary_rankings(
    record: CorpusRecord, ont: Ontology, provider: EmbeddingProvider
) -> list[EventRanking]:
    """Rank every event of the record under the four criteria."""
    if not record.events:
        raise NoEventError(f"record {record.record_id!r} has no events")
    image_vec = provider.image(record)
    # each criterion is phrased so that higher is better
    by_criterion: list[list[float]] = [
        [-float(ev.dependency_depth) for ev in record.events],
        [float(len(ev.arguments)) for ev in record.events],
        [float(ont.frequency(ev.event_type)) for ev in record.events],
        [
            cosine(provider.span(record, ev.trigger.start, ev.trigger.end), image_vec)
            for ev in record.events
        ],
    ]
    ranks_per_criterion = [_competition_ranks(scores) for scores in by_criterion]
    out = []
    for i in range(len(record.events)):
        ranks = tuple(ranks_per_criterion[c][i] for c in range(len(_CRITERIA)))
        out.append(EventRanking(index=i, first_places=sum(r == 1 for r in ranks), ranks=ranks))
    return out


def select_primary(record: CorpusRecord, ont: Ontology, provider: EmbeddingProvider) -> int:
    """Index of the record's primary event (majority of first places)."""
    rankings = primary_rankings(record, ont, provider)
    return min(rankings, key=lambda r: r.sort_key).index
