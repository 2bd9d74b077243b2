"""Rendering event structures into image descriptions.

Five renderers produce the positive text plus the two hard-negative texts:

* single template: per-type natural sentence with ``{argK}`` slots
* composed template: "The image is about T." + one sentence per argument
* continuous: reserved trainable tokens interleaved with labels and mentions
* caption editing: minimal edits of the original caption
* completion service: few-shot prompt against a text-completion endpoint

All renderers are deterministic (the completion renderer under a fixed
client). Sentence renderers capitalize the first letter and end with a
period; mentions are inserted as stored otherwise.
"""

from __future__ import annotations

import logging
import re
import time
from abc import ABC, abstractmethod
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

from .errors import (
    CannotEditError,
    CompletionError,
    CompletionTransportError,
    DataError,
    FormatError,
    TemplateNotFoundError,
    UnregisteredTokenError,
)
from .negatives import NegativePair
from .types import CorpusRecord, EventStructure, Ontology, ReservedToken

__all__ = [
    "PROMPT_KINDS",
    "RenderedText",
    "DescriptionSet",
    "Exemplar",
    "CompletionClient",
    "MockCompletionClient",
    "HttpCompletionClient",
    "render_single_template",
    "render_composed_template",
    "render_continuous",
    "edit_caption",
    "render_via_completion",
    "build_description_set",
    "type_description",
    "invert_composed_template",
]

log = logging.getLogger(__name__)

PROMPT_KINDS = ("single", "composed", "continuous", "edit", "completion")


@dataclass(frozen=True)
class RenderedText:
    """One rendered description; continuous prompts also carry their segments.

    ``source`` names the renderer that produced the text, or
    "single_template_fallback" when a completion came back empty.
    """

    text: str
    segments: tuple[str | ReservedToken, ...] | None = None
    source: str = "template"

    def __post_init__(self) -> None:
        if not self.text:
            raise DataError("rendered description must be nonempty")


@dataclass(frozen=True)
class DescriptionSet:
    """The positive description and its two event-structure negatives."""

    positive: RenderedText
    negative_event: RenderedText
    negative_args: RenderedText
    prompt_kind: str

    @property
    def degenerate_negative_args(self) -> bool:
        """True when the argument negative collapsed onto the positive text."""
        return self.negative_args.text == self.positive.text


# ---------------------------------------------------------------------------
# shared sentence plumbing

def _finish_sentence(text: str) -> str:
    text = " ".join(text.split())
    if text and text[0].isalpha():
        text = text[0].upper() + text[1:]
    if text and text[-1] not in ".!?":
        text += "."
    return text


def _ordered_arguments(ev: EventStructure, ont: Ontology):
    roles = ont.roles_of(ev.event_type)
    for arg in ev.arguments:
        if arg.role not in roles:
            raise DataError(
                f"role {arg.role!r} is not valid for event type {ev.event_type!r}")
    return sorted(ev.arguments, key=lambda a: roles.index(a.role))


# ---------------------------------------------------------------------------
# single template

_SLOT_RE = re.compile(r"\{arg(\d+)\}")


def _parse_template(template: str) -> list[tuple]:
    """Parse into ("lit", s) / ("slot", k) / ("group", [nodes]) nodes."""

    def parse(chunk: str) -> list[tuple]:
        nodes: list[tuple] = []
        i = 0
        while i < len(chunk):
            ch = chunk[i]
            if ch == "[":
                depth, j = 1, i + 1
                while j < len(chunk) and depth:
                    if chunk[j] == "[":
                        depth += 1
                    elif chunk[j] == "]":
                        depth -= 1
                    j += 1
                if depth:
                    raise FormatError(f"unbalanced '[' in template {template!r}")
                nodes.append(("group", parse(chunk[i + 1 : j - 1])))
                i = j
            elif ch == "]":
                raise FormatError(f"unbalanced ']' in template {template!r}")
            else:
                j = i
                while j < len(chunk) and chunk[j] not in "[]":
                    j += 1
                literal = chunk[i:j]
                pos = 0
                for m in _SLOT_RE.finditer(literal):
                    if m.start() > pos:
                        nodes.append(("lit", literal[pos : m.start()]))
                    nodes.append(("slot", int(m.group(1))))
                    pos = m.end()
                if pos < len(literal):
                    nodes.append(("lit", literal[pos:]))
                i = j
        return nodes

    return parse(template)


def _template_slots(nodes: list[tuple]) -> set[int]:
    out: set[int] = set()
    for node in nodes:
        if node[0] == "slot":
            out.add(node[1])
        elif node[0] == "group":
            out |= _template_slots(node[1])
    return out


def _render_nodes(nodes: list[tuple], values: Mapping[int, str]) -> str:
    parts: list[str] = []
    for node in nodes:
        if node[0] == "lit":
            parts.append(node[1])
        elif node[0] == "slot":
            if node[1] in values:
                parts.append(values[node[1]])
        else:  # group: drop it entirely when any of its slots is absent
            slots = _template_slots(node[1])
            if slots <= values.keys():
                parts.append(_render_nodes(node[1], values))
    return "".join(parts)


def render_single_template(ev: EventStructure, ont: Ontology) -> RenderedText:
    """Fill the event type's single template with the argument mentions.

    Slot ``{argK}`` takes the mention whose role is the K-th role of the
    event type; absent arguments drop their slot together with the optional
    ``[...]`` group around it.
    """
    et = ont.event_type(ev.event_type)
    if et.template is None:
        raise TemplateNotFoundError(ev.event_type)
    nodes = _parse_template(et.template)
    slots = _template_slots(nodes)
    values: dict[int, str] = {}
    for arg in _ordered_arguments(ev, ont):
        k = et.roles.index(arg.role) + 1
        if k not in slots:
            raise DataError(
                f"role {arg.role!r} has no slot in the template for {ev.event_type!r}")
        values[k] = arg.entity.text
    return RenderedText(text=_finish_sentence(_render_nodes(nodes, values)), source="single")


# ---------------------------------------------------------------------------
# composed template

def type_description(type_id: str, ont: Ontology) -> str:
    """Zero-argument composed description, used for zero-shot typing candidates."""
    return f"The image is about {ont.label_of(type_id)}."


def render_composed_template(ev: EventStructure, ont: Ontology) -> RenderedText:
    """One sentence announcing the type plus one per argument, in role order."""
    parts = [type_description(ev.event_type, ont)]
    for arg in _ordered_arguments(ev, ont):
        parts.append(f"The {arg.role} is {arg.entity.text}.")
    return RenderedText(text=" ".join(parts), source="composed")


_COMPOSED_HEAD_RE = re.compile(r"^The image is about (.+?)\.(?: |$)")
_COMPOSED_ARG_RE = re.compile(r"The (\S+) is (.+?)\.(?= The \S+ is |$)")


def invert_composed_template(text: str) -> tuple[str, list[tuple[str, str]]]:
    """Read (type label, [(role, mention), ...]) back out of a composed description."""
    head = _COMPOSED_HEAD_RE.match(text)
    if head is None:
        raise FormatError(f"not a composed description: {text!r}")
    rest = text[head.end():]
    args = [(m.group(1), m.group(2)) for m in _COMPOSED_ARG_RE.finditer(rest)]
    return head.group(1), args


# ---------------------------------------------------------------------------
# continuous prompt

_CONTINUOUS_TOKENS = ("X0", "X1", "X2", "X3")


def render_continuous(ev: EventStructure, ont: Ontology, provider=None) -> RenderedText:
    """Reserved-token sequence: [X0] TYPE [X1] then role [X2] mention [X3] per argument.

    A k-argument event therefore uses 2k + 2 reserved-token occurrences. When
    ``provider`` is given, its registered reserved tokens are checked first.
    """
    if provider is not None:
        registered = getattr(provider, "reserved", {})
        for token_id in _CONTINUOUS_TOKENS:
            if token_id not in registered:
                raise UnregisteredTokenError(token_id)
    et = ont.event_type(ev.event_type)
    segments: list[str | ReservedToken] = [ReservedToken("X0"), et.label, ReservedToken("X1")]
    for arg in _ordered_arguments(ev, ont):
        segments.extend([arg.role, ReservedToken("X2"), arg.entity.text, ReservedToken("X3")])
    display = " ".join(
        f"[{s.token_id}]" if isinstance(s, ReservedToken) else s for s in segments
    )
    return RenderedText(text=display, segments=tuple(segments), source="continuous")


# ---------------------------------------------------------------------------
# caption editing

def _recase(text: str, at_sentence_start: bool) -> str:
    if not text:
        return text
    head = text[0].upper() if at_sentence_start else text[0].lower()
    return head + text[1:]


def _apply_edits(caption: str, edits: list[tuple[int, int, str]]) -> str:
    out = caption
    for start, end, replacement in sorted(edits, reverse=True):
        out = out[:start] + _recase(replacement, start == 0) + out[end:]
    return out


def _check_disjoint(spans: list[tuple[int, int, str]]) -> None:
    ordered = sorted(spans)
    for (s0, e0, a), (s1, e1, b) in zip(ordered, ordered[1:]):
        if s1 < e0:
            raise CannotEditError(f"spans overlap: {a} [{s0},{e0}) and {b} [{s1},{e1})")


def edit_caption(
    record: CorpusRecord,
    pair: NegativePair,
    ont: Ontology,
    tense: str = "present",
) -> DescriptionSet:
    """Caption-editing descriptions: the caption itself plus two minimal edits.

    The event negative swaps the trigger span for the wrong type's verb form
    (ontology lemma table; lowercased type label when the form is missing).
    The argument negative permutes the argument mention texts according to
    the rotated structure; a replacement moved to the start of the caption is
    capitalized, one moved inside it is lowercased. Argument negatives other
    than rotations cannot surface in the caption, so the text degenerates to
    the caption itself.
    """
    ev = pair.positive
    spans = [(ev.trigger.start, ev.trigger.end, "trigger")]
    for i, arg in enumerate(ev.arguments):
        spans.append((arg.entity.start, arg.entity.end, f"argument {i} ({arg.role})"))
    _check_disjoint(spans)

    positive = RenderedText(text=record.caption, source="edit")

    neg_type = pair.negative_event.event_type
    et = ont.event_type(neg_type)
    verb = et.verb_forms.get(tense) or et.label.lower()
    negative_event = RenderedText(
        text=_apply_edits(record.caption, [(ev.trigger.start, ev.trigger.end, verb)]),
        source="edit",
    )

    if pair.provenance.get("negative_args") == "rotation":
        edits = []
        for arg in ev.arguments:
            replacement = pair.negative_args.mention_of(arg.role)
            if replacement is None:
                raise DataError(f"rotated structure lost role {arg.role!r}")
            edits.append((arg.entity.start, arg.entity.end, replacement.text))
        negative_args = RenderedText(text=_apply_edits(record.caption, edits), source="edit")
    else:
        log.info(
            "record %s: argument negative %r cannot be surfaced by caption editing; "
            "using the caption itself",
            record.record_id,
            pair.provenance.get("negative_args"),
        )
        negative_args = RenderedText(text=record.caption, source="edit_degenerate")

    return DescriptionSet(
        positive=positive,
        negative_event=negative_event,
        negative_args=negative_args,
        prompt_kind="edit",
    )


# ---------------------------------------------------------------------------
# completion service

@dataclass(frozen=True)
class Exemplar:
    """Few-shot example: an event structure and its hand-written description."""

    event: EventStructure
    description: str


class CompletionClient(ABC):
    """Text-completion endpoint: prompt in, completion text out."""

    @abstractmethod
    def complete(self, prompt: str, max_tokens: int, temperature: float) -> str: ...


def _event_block(ev: EventStructure, ont: Ontology) -> str:
    args = _ordered_arguments(ev, ont)
    if args:
        rendered = "; ".join(f"{a.role}: {a.entity.text}" for a in args)
    else:
        rendered = "none"
    return f"Event: {ont.label_of(ev.event_type)}\nArguments: {rendered}"


def completion_prompt(ev: EventStructure, exemplars: Sequence[Exemplar], ont: Ontology) -> str:
    """Few-shot prompt: exemplar blocks with descriptions, then the input block."""
    blocks = [
        f"{_event_block(ex.event, ont)}\nDescription: {ex.description}" for ex in exemplars
    ]
    blocks.append(f"{_event_block(ev, ont)}\nDescription:")
    return "\n\n".join(blocks)


class MockCompletionClient(CompletionClient):
    """Offline client: maps input event blocks to canned completions.

    ``mapping`` keys are the "Event: ...\\nArguments: ..." block of the input
    event; unmapped events complete to the empty string (which makes the
    renderer fall back to the single template). ``fail_times`` makes the
    first N calls raise a transport error, for retry testing.
    """

    def __init__(self, mapping: Mapping[str, str], fail_times: int = 0) -> None:
        self.mapping = dict(mapping)
        self.fail_times = fail_times
        self.calls = 0

    def complete(self, prompt: str, max_tokens: int, temperature: float) -> str:
        self.calls += 1
        if self.calls <= self.fail_times:
            raise CompletionTransportError("simulated transport failure")
        block = prompt.rsplit("\n\n", 1)[-1]
        block = block.removesuffix("\nDescription:")
        return self.mapping.get(block, "")


class HttpCompletionClient(CompletionClient):
    """Minimal JSON-over-HTTP client: POST {prompt, max_tokens, temperature} -> {text}."""

    def __init__(self, url: str, timeout: float = 10.0) -> None:
        self.url = url
        self.timeout = timeout

    def complete(self, prompt: str, max_tokens: int, temperature: float) -> str:
        import json
        import urllib.error
        import urllib.request

        payload = json.dumps(
            {"prompt": prompt, "max_tokens": max_tokens, "temperature": temperature}
        ).encode("utf-8")
        request = urllib.request.Request(
            self.url, data=payload, headers={"Content-Type": "application/json"}
        )
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as response:
                body = json.loads(response.read().decode("utf-8"))
        except (urllib.error.URLError, OSError, json.JSONDecodeError) as exc:
            raise CompletionTransportError(str(exc)) from exc
        if not isinstance(body, dict) or "text" not in body:
            raise CompletionTransportError(f"malformed completion response: {body!r}")
        return str(body["text"])


def render_via_completion(
    ev: EventStructure,
    exemplars: Sequence[Exemplar],
    client: CompletionClient,
    ont: Ontology,
    *,
    max_tokens: int = 60,
    temperature: float = 0.0,
    retries: int = 3,
    backoff: float = 0.1,
    sleep=time.sleep,
) -> RenderedText:
    """Ask the completion endpoint to describe the event.

    Transport failures are retried up to ``retries`` attempts with exponential
    backoff. An empty completion falls back to the single template and the
    result is flagged via ``source="single_template_fallback"``.
    """
    prompt = completion_prompt(ev, exemplars, ont)
    last_error: CompletionTransportError | None = None
    completion = None
    for attempt in range(retries):
        try:
            completion = client.complete(prompt, max_tokens, temperature)
            break
        except CompletionTransportError as exc:
            last_error = exc
            if attempt + 1 < retries:
                sleep(backoff * (2**attempt))
    else:
        raise CompletionError(
            f"completion failed after {retries} attempts: {last_error}") from last_error

    lines = [line.strip() for line in (completion or "").splitlines()]
    text = next((line for line in lines if line), "")
    if not text:
        fallback = render_single_template(ev, ont)
        return RenderedText(text=fallback.text, source="single_template_fallback")
    return RenderedText(text=text, source="completion")


# ---------------------------------------------------------------------------
# driver

def build_description_set(
    record: CorpusRecord,
    pair: NegativePair,
    kind: str,
    ont: Ontology,
    *,
    client: CompletionClient | None = None,
    exemplars: Sequence[Exemplar] = (),
    tense: str = "present",
    provider=None,
) -> DescriptionSet:
    """Render the positive and both negatives with one prompt kind."""
    if kind not in PROMPT_KINDS:
        raise DataError(f"unknown prompt kind {kind!r}; expected one of {PROMPT_KINDS}")
    if kind == "edit":
        return edit_caption(record, pair, ont, tense=tense)
    if kind == "completion":
        if client is None:
            raise DataError("prompt kind 'completion' needs a completion client")
        render = lambda ev: render_via_completion(ev, exemplars, client, ont)
    elif kind == "single":
        render = lambda ev: render_single_template(ev, ont)
    elif kind == "composed":
        render = lambda ev: render_composed_template(ev, ont)
    else:
        render = lambda ev: render_continuous(ev, ont, provider)
    return DescriptionSet(
        positive=render(pair.positive),
        negative_event=render(pair.negative_event),
        negative_args=render(pair.negative_args),
        prompt_kind=kind,
    )
