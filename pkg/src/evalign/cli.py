"""Command line interface.

Subcommands mirror the pipeline: pick primary events, generate hard
negatives, render descriptions, align graphs, train the toy encoder, and
score predictions. Every command reads corpora/ontologies from files and
writes JSON (or JSONL/CSV) reports; ``--output -`` means stdout.
"""

from __future__ import annotations

import dataclasses
import functools
import json
import logging

import click

from .encoders import TableProvider, ToyEncoder, load_checkpoint, save_checkpoint
from .errors import EvalignError
from .evaluate import (
    ArgumentPrediction,
    ExtractionResult,
    RoleSlot,
    SituationFrame,
    TextCandidate,
    confusion_from_predictions,
    rank_texts,
    retrieval_scores,
    score_event_extraction,
    score_gsr,
    score_retrieval,
    zero_shot_arguments,
    zero_shot_type,
)
from .io import (
    event_from_dict,
    event_to_dict,
    load_confusion,
    load_corpus,
    load_embeddings,
    load_ontology,
    save_confusion,
)
from .negatives import NegativePair, generate_negative_pair
from .prompts import (
    PROMPT_KINDS,
    HttpCompletionClient,
    MockCompletionClient,
    build_description_set,
)
from .primary import primary_rankings, select_primary
from .training import TrainConfig, train
from .transport import graph_distance, write_plan_csv
from .types import image_graph, text_graph

_CRITERIA = ("depth", "arguments", "frequency", "similarity")


def _friendly_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except EvalignError as exc:
            raise click.ClickException(str(exc)) from exc

    return wrapper


def _provider_options(fn):
    for option in reversed([
        click.option("--embeddings", type=click.Path(exists=True, dir_okay=False),
                     default=None, help="Precomputed embedding table (binary format)."),
        click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False),
                     default=None, help="Trained encoder checkpoint."),
        click.option("--toy-seed", type=int, default=0, show_default=True,
                     help="Seed for the built-in deterministic encoder."),
        click.option("--dim", type=int, default=16, show_default=True,
                     help="Output dimension of the built-in encoder."),
        click.option("--base-dim", type=int, default=64, show_default=True,
                     help="Feature dimension of the built-in encoder."),
    ]):
        fn = option(fn)
    return fn


def _make_provider(ont, embeddings, checkpoint, toy_seed, dim, base_dim):
    if embeddings and checkpoint:
        raise click.UsageError("--embeddings and --checkpoint are mutually exclusive")
    if embeddings:
        return TableProvider(load_embeddings(embeddings))
    if checkpoint:
        return load_checkpoint(checkpoint, ontology=ont)
    return ToyEncoder(dim=dim, base_dim=base_dim, seed=toy_seed, ontology=ont)


def _make_client(mock_completions, completion_url):
    if mock_completions and completion_url:
        raise click.UsageError("--mock-completions and --completion-url are mutually exclusive")
    if mock_completions:
        with open(mock_completions, encoding="utf-8") as fh:
            mapping = json.load(fh)
        if not isinstance(mapping, dict):
            raise click.UsageError("--mock-completions must hold a JSON object")
        return MockCompletionClient(mapping)
    if completion_url:
        return HttpCompletionClient(completion_url)
    return None


def _dump_json(doc, output) -> None:
    output.write(json.dumps(doc, indent=2, sort_keys=True))
    output.write("\n")


def _dump_jsonl(docs, output) -> None:
    for doc in docs:
        output.write(json.dumps(doc, sort_keys=True))
        output.write("\n")


def _pick_event(record, ont, provider, event_index: int):
    """Explicit index, or the primary event when the index is negative."""
    if event_index >= 0:
        if event_index >= len(record.events):
            raise click.ClickException(
                f"record {record.record_id!r} has no event {event_index}")
        return event_index
    return select_primary(record, ont, provider)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log at INFO level.")
def main(verbose: bool) -> None:
    """Event-structure alignment toolkit."""
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )


@main.command("extract-primary")
@click.option("--corpus", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--ontology", required=True, type=click.Path(exists=True, dir_okay=False))
@_provider_options
@click.option("--output", type=click.File("w"), default="-")
@_friendly_errors
def extract_primary_cmd(corpus, ontology, embeddings, checkpoint, toy_seed, dim,
                        base_dim, output):
    """Pick each record's primary event and report the per-criterion ranks."""
    ont = load_ontology(ontology)
    provider = _make_provider(ont, embeddings, checkpoint, toy_seed, dim, base_dim)
    rows = []
    for record in load_corpus(corpus):
        if not record.events:
            rows.append({"record_id": record.record_id, "primary_index": None,
                         "rankings": []})
            continue
        rankings = primary_rankings(record, ont, provider)
        primary = min(rankings, key=lambda r: r.sort_key).index
        rows.append({
            "record_id": record.record_id,
            "primary_index": primary,
            "rankings": [
                {
                    "index": r.index,
                    "first_places": r.first_places,
                    "ranks": dict(zip(_CRITERIA, r.ranks)),
                }
                for r in rankings
            ],
        })
    _dump_json(rows, output)


@main.command("gen-negatives")
@click.option("--corpus", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--ontology", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--event-cm", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Event-type confusion CSV; omitted means uniform sampling.")
@click.option("--arg-cm", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Argument-role confusion CSV; omitted means uniform sampling.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--event-index", type=int, default=-1, show_default=True,
              help="Event to negate per record; negative means the primary event.")
@_provider_options
@click.option("--output", type=click.File("w"), default="-")
@_friendly_errors
def gen_negatives_cmd(corpus, ontology, event_cm, arg_cm, seed, event_index,
                      embeddings, checkpoint, toy_seed, dim, base_dim, output):
    """Write one hard-negative pair per record as JSONL."""
    from .hashing import derive_seed

    ont = load_ontology(ontology)
    provider = _make_provider(ont, embeddings, checkpoint, toy_seed, dim, base_dim)
    ev_cm = load_confusion(event_cm) if event_cm else None
    ar_cm = load_confusion(arg_cm) if arg_cm else None
    rows = []
    for record in load_corpus(corpus):
        if not record.events:
            click.echo(f"skipping {record.record_id}: no events", err=True)
            continue
        idx = _pick_event(record, ont, provider, event_index)
        pair = generate_negative_pair(
            record.events[idx], ont, ev_cm, ar_cm,
            derive_seed(seed, record.record_id, idx))
        rows.append({
            "record_id": record.record_id,
            "event_index": idx,
            "positive": event_to_dict(record, pair.positive),
            "negative_event": event_to_dict(record, pair.negative_event),
            "negative_args": event_to_dict(record, pair.negative_args),
            "provenance": pair.provenance,
        })
    _dump_jsonl(rows, output)


@main.command("gen-prompts")
@click.option("--corpus", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--ontology", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--negatives", required=True, type=click.Path(exists=True, dir_okay=False),
              help="JSONL produced by gen-negatives.")
@click.option("--kind", type=click.Choice(PROMPT_KINDS), required=True)
@click.option("--tense", default="present", show_default=True,
              help="Verb form used when editing captions.")
@click.option("--mock-completions", type=click.Path(exists=True, dir_okay=False),
              default=None, help="JSON map from event block to canned completion.")
@click.option("--completion-url", default=None,
              help="HTTP completion endpoint for the completion prompt kind.")
@_provider_options
@click.option("--output", type=click.File("w"), default="-")
@_friendly_errors
def gen_prompts_cmd(corpus, ontology, negatives, kind, tense, mock_completions,
                    completion_url, embeddings, checkpoint, toy_seed, dim, base_dim,
                    output):
    """Render positive and negative descriptions for stored negative pairs."""
    ont = load_ontology(ontology)
    records = {r.record_id: r for r in load_corpus(corpus)}
    client = _make_client(mock_completions, completion_url)
    if kind == "completion" and client is None:
        raise click.UsageError(
            "the completion kind needs --mock-completions or --completion-url")
    provider = None
    if kind == "continuous":
        provider = _make_provider(ont, embeddings, checkpoint, toy_seed, dim, base_dim)
    rows = []
    with open(negatives, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            doc = json.loads(line)
            record = records.get(doc["record_id"])
            if record is None:
                raise click.ClickException(
                    f"{negatives}:{line_no}: unknown record {doc['record_id']!r}")
            pair = NegativePair(
                positive=event_from_dict(record, doc["positive"]),
                negative_event=event_from_dict(record, doc["negative_event"]),
                negative_args=event_from_dict(record, doc["negative_args"]),
                provenance=doc.get("provenance", {}),
            )
            ds = build_description_set(
                record, pair, kind, ont,
                client=client, tense=tense, provider=provider)
            rows.append({
                "record_id": record.record_id,
                "event_index": doc.get("event_index"),
                "kind": kind,
                "positive": ds.positive.text,
                "negative_event": ds.negative_event.text,
                "negative_args": ds.negative_args.text,
                "degenerate_negative_args": ds.degenerate_negative_args,
                "sources": {
                    "positive": ds.positive.source,
                    "negative_event": ds.negative_event.source,
                    "negative_args": ds.negative_args.source,
                },
            })
    _dump_jsonl(rows, output)


@main.command("align")
@click.option("--corpus", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--ontology", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--record", "record_id", default=None,
              help="Align only this record (default: every record with events).")
@click.option("--event-index", type=int, default=-1, show_default=True,
              help="Text-side event; negative means the primary event.")
@click.option("--gamma", type=float, default=0.1, show_default=True)
@click.option("--plan-csv", type=click.Path(dir_okay=False), default=None,
              help="Write the transport plan as CSV (single record only).")
@_provider_options
@click.option("--output", type=click.File("w"), default="-")
@_friendly_errors
def align_cmd(corpus, ontology, record_id, event_index, gamma, plan_csv,
              embeddings, checkpoint, toy_seed, dim, base_dim, output):
    """Optimal-transport alignment between text and image event graphs."""
    ont = load_ontology(ontology)
    provider = _make_provider(ont, embeddings, checkpoint, toy_seed, dim, base_dim)
    records = load_corpus(corpus)
    if record_id is not None:
        records = [r for r in records if r.record_id == record_id]
        if not records:
            raise click.ClickException(f"record {record_id!r} not in corpus")
    records = [r for r in records if r.events]
    if not records:
        raise click.ClickException("no records with events to align")
    if plan_csv and len(records) != 1:
        raise click.UsageError("--plan-csv needs --record to select a single record")
    rows = []
    for record in records:
        idx = _pick_event(record, ont, provider, event_index)
        result = graph_distance(
            text_graph(record, idx), image_graph(record), provider, ont, gamma)
        rows.append({
            "record_id": record.record_id,
            "event_index": idx,
            "gamma": gamma,
            "distance": result.distance,
            "iterations": result.plan.iterations,
            "converged": result.plan.converged,
            "max_violation": result.plan.max_violation,
            "row_nodes": list(result.cost.row_nodes),
            "col_nodes": list(result.cost.col_nodes),
        })
        if plan_csv:
            write_plan_csv(result, plan_csv)
    _dump_json(rows, output)


@main.command("train")
@click.option("--corpus", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--ontology", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--event-cm", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--arg-cm", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--prompt-kind", type=click.Choice(PROMPT_KINDS), default="composed",
              show_default=True)
@click.option("--gamma", type=float, default=0.1, show_default=True)
@click.option("--lambda1", type=float, default=1.0, show_default=True)
@click.option("--lambda2", type=float, default=1.0, show_default=True)
@click.option("--epochs", type=int, default=50, show_default=True)
@click.option("--learning-rate", type=float, default=0.05, show_default=True)
@click.option("--momentum", type=float, default=0.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--dim", type=int, default=16, show_default=True)
@click.option("--base-dim", type=int, default=64, show_default=True)
@click.option("--batch-size", type=int, default=None,
              help="Mini-batch size; omitted means full batch.")
@click.option("--graph-loss-on", type=click.Choice(["positive", "all"]),
              default="positive", show_default=True)
@click.option("--mock-completions", type=click.Path(exists=True, dir_okay=False),
              default=None)
@click.option("--completion-url", default=None)
@click.option("--checkpoint-out", required=True, type=click.Path(dir_okay=False))
@click.option("--curve-out", type=click.Path(dir_okay=False), default=None,
              help="Write the per-epoch loss curve as CSV.")
@_friendly_errors
def train_cmd(corpus, ontology, event_cm, arg_cm, prompt_kind, gamma, lambda1,
              lambda2, epochs, learning_rate, momentum, seed, dim, base_dim,
              batch_size, graph_loss_on, mock_completions, completion_url,
              checkpoint_out, curve_out):
    """Fit the toy encoder with the composite contrastive objective."""
    ont = load_ontology(ontology)
    records = load_corpus(corpus)
    config = TrainConfig(
        prompt_kind=prompt_kind,
        gamma=gamma,
        lambda1=lambda1,
        lambda2=lambda2,
        epochs=epochs,
        learning_rate=learning_rate,
        momentum=momentum,
        seed=seed,
        dim=dim,
        base_dim=base_dim,
        batch_size=batch_size,
        graph_loss_on=graph_loss_on,
        client=_make_client(mock_completions, completion_url),
    )
    result = train(
        records, ont,
        load_confusion(event_cm) if event_cm else None,
        load_confusion(arg_cm) if arg_cm else None,
        config)
    save_checkpoint(result.provider, checkpoint_out)
    if curve_out:
        import csv as _csv

        with open(curve_out, "w", newline="", encoding="utf-8") as fh:
            writer = _csv.writer(fh)
            writer.writerow(["epoch", "l1", "l2", "total"])
            for epoch, report in enumerate(result.history):
                writer.writerow([epoch, f"{report.l1:.10g}", f"{report.l2:.10g}",
                                 f"{report.total:.10g}"])
    first, last = result.history[0], result.history[-1]
    click.echo(json.dumps({
        "epochs": len(result.history),
        "initial_total": first.total,
        "final_total": last.total,
        "final_l1": last.l1,
        "final_l2": last.l2,
        "checkpoint": checkpoint_out,
    }, indent=2, sort_keys=True))


def _load_gold_extractions(path) -> list[ExtractionResult]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            doc = json.loads(line)
            out.append(ExtractionResult(
                record_id=doc["record_id"],
                events=tuple(doc.get("events", [])),
                arguments=tuple(
                    ArgumentPrediction(a["event_type"], a["role"], tuple(a["bbox"]))
                    for a in doc.get("arguments", [])
                ),
            ))
    return out


@main.command("eval-m2e2")
@click.option("--corpus", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--ontology", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--gold", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Gold events and grounded arguments, JSONL.")
@click.option("--threshold", type=float, default=0.0, show_default=True,
              help="Role-assignment threshold on the [0, 1] similarity.")
@click.option("--emit-confusion", type=click.Path(dir_okay=False), default=None,
              help="Write the event-type confusion matrix as CSV.")
@click.option("--diagnostics", type=click.Path(dir_okay=False), default=None,
              help="Write per-record predictions as CSV.")
@_provider_options
@click.option("--output", type=click.File("w"), default="-")
@_friendly_errors
def eval_m2e2_cmd(corpus, ontology, gold, threshold, emit_confusion, diagnostics,
                  embeddings, checkpoint, toy_seed, dim, base_dim, output):
    """Zero-shot multimedia event extraction scored against gold annotations."""
    ont = load_ontology(ontology)
    provider = _make_provider(ont, embeddings, checkpoint, toy_seed, dim, base_dim)
    records = load_corpus(corpus)
    golds = _load_gold_extractions(gold)
    preds = []
    per_record = []
    for record in records:
        typing = zero_shot_type(record, ont.type_ids, provider, ont)
        top = typing.prediction
        assignments = zero_shot_arguments(record, top, provider, ont, threshold)
        arguments = tuple(
            ArgumentPrediction(top, a.role, record.objects[a.object_index].bbox)
            for a in assignments if a.role is not None
        )
        preds.append(ExtractionResult(record_id=record.record_id, events=(top,),
                                      arguments=arguments))
        per_record.append((record, top))
    scores = score_event_extraction(preds, golds)
    if emit_confusion:
        gold_by_id = {g.record_id: g for g in golds}
        gold_labels, pred_labels = [], []
        for record, top in per_record:
            gold_events = gold_by_id[record.record_id].events
            if gold_events:
                gold_labels.append(gold_events[0])
                pred_labels.append(top)
        save_confusion(
            confusion_from_predictions(gold_labels, pred_labels, ont.type_ids),
            emit_confusion)
    if diagnostics:
        import csv as _csv

        gold_by_id = {g.record_id: g for g in golds}
        with open(diagnostics, "w", newline="", encoding="utf-8") as fh:
            writer = _csv.writer(fh)
            writer.writerow(["record_id", "prediction", "gold", "correct"])
            for record, top in per_record:
                gold_events = gold_by_id[record.record_id].events
                gold_label = gold_events[0] if gold_events else ""
                writer.writerow([record.record_id, top, gold_label,
                                 int(top == gold_label)])
    _dump_json({
        "event": dataclasses.asdict(scores.event),
        "argument": dataclasses.asdict(scores.argument),
    }, output)


def _load_frames(path) -> list[SituationFrame]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            doc = json.loads(line)
            roles = {
                role: RoleSlot(
                    value=slot.get("value"),
                    bbox=tuple(slot["bbox"]) if slot.get("bbox") else None,
                )
                for role, slot in doc.get("roles", {}).items()
            }
            out.append(SituationFrame(record_id=doc["record_id"], verb=doc["verb"],
                                      roles=roles))
    return out


@main.command("eval-gsr")
@click.option("--pred", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Predicted situation frames, JSONL.")
@click.option("--gold", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--output", type=click.File("w"), default="-")
@_friendly_errors
def eval_gsr_cmd(pred, gold, output):
    """Score verb and grounded role predictions."""
    scores = score_gsr(_load_frames(pred), _load_frames(gold))
    _dump_json(dataclasses.asdict(scores), output)


@main.command("eval-retrieval")
@click.option("--corpus", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--ontology", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--gamma", type=float, default=0.1, show_default=True)
@click.option("--graph-weight", type=float, default=1.0, show_default=True,
              help="Weight of the graph-transport term; 0 disables it.")
@click.option("--ks", default="1,5,10", show_default=True,
              help="Comma-separated recall cutoffs.")
@_provider_options
@click.option("--output", type=click.File("w"), default="-")
@_friendly_errors
def eval_retrieval_cmd(corpus, ontology, gamma, graph_weight, ks, embeddings,
                       checkpoint, toy_seed, dim, base_dim, output):
    """Caption/image retrieval with graph-transport reranking."""
    ont = load_ontology(ontology)
    provider = _make_provider(ont, embeddings, checkpoint, toy_seed, dim, base_dim)
    records = load_corpus(corpus)
    cutoffs = tuple(int(k) for k in ks.split(","))
    matrix = retrieval_scores(records, provider, ont, gamma=gamma,
                              graph_weight=graph_weight)
    scores = score_retrieval(matrix, ks=cutoffs)
    _dump_json({
        "records": len(records),
        "text_to_image": {str(k): v for k, v in scores.text_to_image.items()},
        "image_to_text": {str(k): v for k, v in scores.image_to_text.items()},
    }, output)


@main.command("rank")
@click.option("--corpus", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--ontology", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--record", "record_id", required=True,
              help="Record whose image the candidates are ranked against.")
@click.option("--candidates", required=True, type=click.Path(exists=True, dir_okay=False),
              help="JSONL: {\"text\": ...} or {\"record_id\": ..., \"event_index\": ...}.")
@click.option("--gamma", type=float, default=0.1, show_default=True)
@click.option("--graph-weight", type=float, default=1.0, show_default=True)
@_provider_options
@click.option("--output", type=click.File("w"), default="-")
@_friendly_errors
def rank_cmd(corpus, ontology, record_id, candidates, gamma, graph_weight,
             embeddings, checkpoint, toy_seed, dim, base_dim, output):
    """Rank candidate descriptions against one record's image."""
    ont = load_ontology(ontology)
    provider = _make_provider(ont, embeddings, checkpoint, toy_seed, dim, base_dim)
    records = {r.record_id: r for r in load_corpus(corpus)}
    if record_id not in records:
        raise click.ClickException(f"record {record_id!r} not in corpus")
    cands = []
    with open(candidates, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            doc = json.loads(line)
            if "record_id" in doc:
                rec = records.get(doc["record_id"])
                if rec is None:
                    raise click.ClickException(
                        f"{candidates}:{line_no}: unknown record {doc['record_id']!r}")
                cands.append(TextCandidate(
                    text=doc.get("text", rec.caption),
                    record=rec,
                    event_index=doc.get("event_index", 0) if rec.events else None,
                ))
            else:
                cands.append(TextCandidate(text=doc["text"]))
    ranked = rank_texts(records[record_id], cands, provider, ont,
                        gamma=gamma, graph_weight=graph_weight)
    _dump_json([
        {
            "rank": position + 1,
            "candidate": r.index,
            "text": cands[r.index].text,
            "distance": r.distance,
            "text_distance": r.text_distance,
            "graph_distance": r.graph_distance,
        }
        for position, r in enumerate(ranked)
    ], output)


if __name__ == "__main__":
    main()
