"""Core domain vocabulary: ontologies, event structures, detections, graphs.

All dataclasses here are frozen and treated as immutable after construction.
Validation that needs an ontology is reported as data (ValidationReport)
rather than raised, so pipelines can aggregate problems per record.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

from .errors import DataError
from .validation import bbox_problems, span_problems

__all__ = [
    "Span",
    "EntityMention",
    "Argument",
    "EventStructure",
    "ObjectDetection",
    "EventType",
    "EntityType",
    "Ontology",
    "CorpusRecord",
    "EventGraph",
    "ReservedToken",
    "ValidationReport",
    "validate_graph",
    "text_graph",
    "image_graph",
]


@dataclass(frozen=True)
class Span:
    """Character span into a caption, with the resolved surface text."""

    start: int
    end: int
    text: str


@dataclass(frozen=True)
class EntityMention:
    """Entity mention: caption span plus its entity type."""

    start: int
    end: int
    text: str
    entity_type: str


@dataclass(frozen=True)
class Argument:
    role: str
    entity: EntityMention


@dataclass(frozen=True)
class EventStructure:
    """One event: type, trigger span, and role-ordered arguments.

    Arguments are kept sorted by the position of their role in the event
    type's ontology role list; ``validate_graph`` checks this.
    """

    event_type: str
    trigger: Span
    arguments: tuple[Argument, ...] = ()
    dependency_depth: int = 0

    @property
    def roles(self) -> tuple[str, ...]:
        return tuple(a.role for a in self.arguments)

    @property
    def mentions(self) -> tuple[EntityMention, ...]:
        return tuple(a.entity for a in self.arguments)

    def mention_of(self, role: str) -> EntityMention | None:
        for a in self.arguments:
            if a.role == role:
                return a.entity
        return None


@dataclass(frozen=True)
class ObjectDetection:
    """Detected image region: pixel bbox (x0, y0, x1, y1), type label, confidence."""

    bbox: tuple[float, float, float, float]
    object_type: str
    confidence: float = 1.0


@dataclass(frozen=True)
class EventType:
    """Ontology entry for one event type.

    ``template`` uses the single-template syntax: literal text with ``{argK}``
    slots (argK = the K-th role in ``roles``) and ``[...]`` optional groups
    that are dropped together with their slot when the argument is absent.
    ``verb_forms`` maps tense names ("present", "past") to trigger lemmas.
    """

    type_id: str
    label: str
    roles: tuple[str, ...]
    template: str | None = None
    verb_forms: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class EntityType:
    type_id: str
    label: str


@dataclass(frozen=True)
class Ontology:
    """Event-type inventory plus the lookup tables the renderers need."""

    event_types: tuple[EventType, ...]
    role_descriptions: Mapping[str, str] = field(default_factory=dict)
    entity_types: tuple[EntityType, ...] = ()
    type_frequency: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for et in self.event_types:
            if et.type_id in seen:
                raise DataError(f"duplicate event type {et.type_id!r}")
            seen.add(et.type_id)
            if not et.roles:
                raise DataError(f"event type {et.type_id!r} declares no roles")
            if len(set(et.roles)) != len(et.roles):
                raise DataError(f"event type {et.type_id!r} has duplicate roles")
        all_roles = {r for et in self.event_types for r in et.roles}
        for role in self.role_descriptions:
            if role not in all_roles:
                raise DataError(f"role description for unknown role {role!r}")
        for type_id, count in self.type_frequency.items():
            if type_id not in seen:
                raise DataError(f"type_frequency names unknown event type {type_id!r}")
            if int(count) < 0:
                raise DataError(f"type_frequency for {type_id!r} is negative")

    def event_type(self, type_id: str) -> EventType:
        for et in self.event_types:
            if et.type_id == type_id:
                return et
        raise KeyError(type_id)

    def has_event_type(self, type_id: str) -> bool:
        return any(et.type_id == type_id for et in self.event_types)

    def roles_of(self, type_id: str) -> tuple[str, ...]:
        return self.event_type(type_id).roles

    def label_of(self, ident: str) -> str:
        """Display label for an event or entity type id; falls back to the id."""
        for et in self.event_types:
            if et.type_id == ident:
                return et.label
        for nt in self.entity_types:
            if nt.type_id == ident:
                return nt.label
        return ident

    def role_phrase(self, role: str) -> str:
        return self.role_descriptions.get(role, role)

    def frequency(self, type_id: str) -> int:
        return int(self.type_frequency.get(type_id, 0))

    @property
    def type_ids(self) -> tuple[str, ...]:
        return tuple(et.type_id for et in self.event_types)


@dataclass(frozen=True)
class CorpusRecord:
    """One caption/image pair with its event, entity, and object annotations."""

    record_id: str
    caption: str
    image: str
    image_size: tuple[int, int]
    events: tuple[EventStructure, ...] = ()
    entities: tuple[EntityMention, ...] = ()
    objects: tuple[ObjectDetection, ...] = ()


@dataclass(frozen=True)
class ReservedToken:
    """Placeholder token (e.g. X0) whose embedding is a trainable vector."""

    token_id: str


@dataclass(frozen=True)
class EventGraph:
    """Star-shaped alignment graph for one side of a caption/image pair.

    Text flavor: center = the event node, leaves = its arguments.
    Image flavor: center = the whole image, leaves = detected objects.
    The source record rides along so providers can resolve spans and regions.
    """

    record: CorpusRecord
    event: EventStructure | None = None
    objects: tuple[ObjectDetection, ...] = ()

    @property
    def flavor(self) -> str:
        return "image" if self.event is None else "text"

    @property
    def node_count(self) -> int:
        if self.event is None:
            return 1 + len(self.objects)
        return 1 + len(self.event.arguments)


def text_graph(record: CorpusRecord, event: EventStructure | int) -> EventGraph:
    """Build the text-side graph for one of the record's events.

    ``event`` may be the structure itself (e.g. a generated negative) or an
    index into ``record.events``.
    """
    if isinstance(event, int):
        event = record.events[event]
    return EventGraph(record=record, event=event)


def image_graph(record: CorpusRecord) -> EventGraph:
    return EventGraph(record=record, objects=record.objects)


@dataclass(frozen=True)
class ValidationReport:
    """Violations found in a graph; empty means the graph is well-formed."""

    violations: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations


def _validate_event(ev: EventStructure, record: CorpusRecord, ont: Ontology) -> list[str]:
    out: list[str] = []
    n = len(record.caption)
    if not ont.has_event_type(ev.event_type):
        out.append(f"event type {ev.event_type!r} not in ontology")
        return out
    roles = ont.roles_of(ev.event_type)
    out.extend(span_problems(ev.trigger.start, ev.trigger.end, n, "trigger"))
    if not out and record.caption[ev.trigger.start : ev.trigger.end] != ev.trigger.text:
        out.append("trigger text does not match its caption span")
    seen_roles: list[str] = []
    for i, arg in enumerate(ev.arguments):
        label = f"argument {i} ({arg.role!r})"
        if arg.role in seen_roles:
            out.append(f"{label}: duplicate role")
        seen_roles.append(arg.role)
        if arg.role not in roles:
            out.append(f"{label}: role not valid for event type {ev.event_type!r}")
        out.extend(span_problems(arg.entity.start, arg.entity.end, n, label))
    order = [roles.index(a.role) for a in ev.arguments if a.role in roles]
    if order != sorted(order):
        out.append("arguments are not sorted by the ontology role order")
    return out


def validate_graph(graph: EventGraph, ont: Ontology) -> ValidationReport:
    """Check a graph against the ontology and the record it came from.

    Returns violations as data; an empty report means the graph is valid.
    """
    out: list[str] = []
    record = graph.record
    if graph.flavor == "text":
        assert graph.event is not None
        out.extend(_validate_event(graph.event, record, ont))
    else:
        for i, obj in enumerate(graph.objects):
            out.extend(bbox_problems(obj.bbox, record.image_size, f"object {i}"))
            if not 0.0 <= obj.confidence <= 1.0:
                out.append(f"object {i}: confidence {obj.confidence} outside [0, 1]")
    return ValidationReport(tuple(out))
