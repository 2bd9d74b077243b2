"""Event-structure hard negatives.

Two manipulations per positive event: replace the event type with a
confusable one (drawn from a confusion-matrix row), and rotate the argument
roles one step while the entities stay put. Both are deterministic given a
seed; per-record seeds derive from the global seed plus the record id.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DataError, RotationNotApplicable
from .hashing import derive_seed
from .io import ConfusionMatrix
from .types import Argument, CorpusRecord, EventStructure, Ontology

__all__ = [
    "TypeSample",
    "RoleSample",
    "NegativePair",
    "zero_confusion",
    "sample_negative_type",
    "rotate_arguments",
    "sample_negative_role",
    "substitute_event_type",
    "generate_negative_pair",
    "generate_negatives",
]


def zero_confusion(labels) -> ConfusionMatrix:
    """All-zero counts over ``labels``; sampling against it is uniform fallback."""
    labels = tuple(labels)
    return ConfusionMatrix(labels, np.zeros((len(labels), len(labels)), dtype=np.int64))


class TypeSample(NamedTuple):
    label: str
    fallback: bool  # True when the confusion row had no off-diagonal mass


class RoleSample(NamedTuple):
    event: EventStructure
    role: str
    fallback: bool


def _as_rng(rng_seed: int | np.random.Generator) -> np.random.Generator:
    if isinstance(rng_seed, np.random.Generator):
        return rng_seed
    return np.random.default_rng(rng_seed)


def _draw(labels: list[str], weights: np.ndarray, rng: np.random.Generator) -> str:
    probs = weights / weights.sum()
    return labels[int(rng.choice(len(labels), p=probs))]


def sample_negative_type(
    gold_type: str, cm: ConfusionMatrix, rng_seed: int | np.random.Generator
) -> TypeSample:
    """Draw a confusable wrong type, proportional to the gold row's off-diagonal.

    An all-zero off-diagonal row falls back to a uniform draw over the other
    labels; ``fallback`` reports when that happened.
    """
    rng = _as_rng(rng_seed)
    gold_idx = cm.index(gold_type)
    if len(cm.labels) < 2:
        raise DataError("confusion matrix needs at least two labels to sample a negative")
    others = [lbl for lbl in cm.labels if lbl != gold_type]
    weights = np.array([float(cm.counts[gold_idx, cm.index(lbl)]) for lbl in others])
    if weights.sum() <= 0:
        return TypeSample(label=others[int(rng.integers(len(others)))], fallback=True)
    return TypeSample(label=_draw(others, weights, rng), fallback=False)


def rotate_arguments(ev: EventStructure) -> EventStructure:
    """Rotate roles one step against fixed entities.

    With arguments in role order, the i-th role is handed to the (i+1)-th
    entity (wrapping), which keeps the output sorted by the same role order.
    Applying this len(arguments) times is the identity.
    """
    k = len(ev.arguments)
    if k < 2:
        raise RotationNotApplicable("rotation needs at least two arguments")
    new_args = tuple(
        Argument(role=ev.arguments[i].role, entity=ev.arguments[(i + 1) % k].entity)
        for i in range(k)
    )
    return EventStructure(
        event_type=ev.event_type,
        trigger=ev.trigger,
        arguments=new_args,
        dependency_depth=ev.dependency_depth,
    )


def sample_negative_role(
    ev: EventStructure,
    arg_cm: ConfusionMatrix,
    ont: Ontology,
    rng_seed: int | np.random.Generator,
) -> RoleSample:
    """Swap the role of a single-argument event for a confusable wrong one.

    Candidates keep to the event type's own role set when any such candidate
    has confusion mass; otherwise any ontology role with mass is allowed, and
    an all-zero row falls back to a uniform draw over the type's other roles.
    """
    if len(ev.arguments) != 1:
        raise DataError("sample_negative_role applies to single-argument events only")
    gold_role = ev.arguments[0].role
    rng = _as_rng(rng_seed)
    own_roles = [r for r in ont.roles_of(ev.event_type) if r != gold_role]
    all_roles = sorted({r for et in ont.event_types for r in et.roles if r != gold_role})

    def mass(role: str) -> float:
        if gold_role not in arg_cm.labels or role not in arg_cm.labels:
            return 0.0
        return float(arg_cm.counts[arg_cm.index(gold_role), arg_cm.index(role)])

    fallback = False
    pool = [r for r in own_roles if mass(r) > 0]
    if not pool:
        pool = [r for r in all_roles if mass(r) > 0]
    if pool:
        new_role = _draw(pool, np.array([mass(r) for r in pool]), rng)
    else:
        fallback = True
        pool = own_roles if own_roles else all_roles
        if not pool:
            raise DataError(f"no alternative role exists for {gold_role!r}")
        new_role = pool[int(rng.integers(len(pool)))]

    new_ev = EventStructure(
        event_type=ev.event_type,
        trigger=ev.trigger,
        arguments=(Argument(role=new_role, entity=ev.arguments[0].entity),),
        dependency_depth=ev.dependency_depth,
    )
    return RoleSample(event=new_ev, role=new_role, fallback=fallback)


def substitute_event_type(ev: EventStructure, new_type: str, ont: Ontology) -> EventStructure:
    """Re-type an event; entities keep their order and take the new type's roles.

    Roles are assigned positionally from the new type's ontology role list.
    If the new type has fewer roles than the event has arguments, the extra
    arguments are dropped.
    """
    new_roles = ont.roles_of(new_type)
    kept = min(len(ev.arguments), len(new_roles))
    new_args = tuple(
        Argument(role=new_roles[i], entity=ev.arguments[i].entity) for i in range(kept)
    )
    return EventStructure(
        event_type=new_type,
        trigger=ev.trigger,
        arguments=new_args,
        dependency_depth=ev.dependency_depth,
    )


@dataclass(frozen=True)
class NegativePair:
    """Positive event plus its two manipulated variants.

    ``provenance`` records how each negative was produced, e.g.
    negative_event: "confusion" or "uniform_fallback"; negative_args:
    "rotation", "role_confusion", "role_uniform_fallback", or "degenerate"
    (zero-argument events, where negative_args equals the positive).
    """

    positive: EventStructure
    negative_event: EventStructure
    negative_args: EventStructure
    provenance: dict = field(default_factory=dict)


def generate_negative_pair(
    ev: EventStructure,
    ont: Ontology,
    event_cm: ConfusionMatrix | None,
    arg_cm: ConfusionMatrix | None,
    seed: int,
) -> NegativePair:
    """Build both negatives for one event, deterministically from ``seed``.

    Passing ``None`` for either confusion matrix samples uniformly (the
    all-zero-row fallback path, flagged in provenance).
    """
    if event_cm is None:
        event_cm = zero_confusion(ont.type_ids)
    if arg_cm is None:
        arg_cm = zero_confusion(sorted({r for et in ont.event_types for r in et.roles}))
    provenance: dict = {}
    type_sample = sample_negative_type(ev.event_type, event_cm, derive_seed(seed, "type"))
    negative_event = substitute_event_type(ev, type_sample.label, ont)
    provenance["negative_event"] = "uniform_fallback" if type_sample.fallback else "confusion"
    if type_sample.fallback:
        provenance["negative_event_note"] = "confusion row had no off-diagonal mass"

    if len(ev.arguments) >= 2:
        negative_args = rotate_arguments(ev)
        provenance["negative_args"] = "rotation"
    elif len(ev.arguments) == 1:
        role_sample = sample_negative_role(ev, arg_cm, ont, derive_seed(seed, "role"))
        negative_args = role_sample.event
        provenance["negative_args"] = (
            "role_uniform_fallback" if role_sample.fallback else "role_confusion"
        )
    else:
        negative_args = ev
        provenance["negative_args"] = "degenerate"
    return NegativePair(
        positive=ev,
        negative_event=negative_event,
        negative_args=negative_args,
        provenance=provenance,
    )


def generate_negatives(
    record: CorpusRecord,
    event_index: int,
    ont: Ontology,
    event_cm: ConfusionMatrix | None,
    arg_cm: ConfusionMatrix | None,
    global_seed: int,
) -> NegativePair:
    """Negatives for one record's event, seeded per record for reproducibility."""
    ev = record.events[event_index]
    seed = derive_seed(global_seed, record.record_id, event_index)
    return generate_negative_pair(ev, ont, event_cm, arg_cm, seed)
