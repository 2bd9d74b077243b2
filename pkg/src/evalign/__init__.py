"""Event-structure alignment between captions and images.

The package covers the full pipeline: corpus and ontology I/O, a
deterministic toy encoder (plus a file-backed provider for real embeddings),
primary-event selection, event-structure hard negatives, five description
renderers, entropic optimal-transport graph alignment, a composite
contrastive objective with analytic gradients, and zero-shot evaluation.
"""

from .encoders import (
    EmbeddingProvider,
    TableProvider,
    ToyEncoder,
    cosine,
    cosine_distance,
    load_checkpoint,
    save_checkpoint,
)
from .errors import (
    CannotEditError,
    CorpusError,
    DataError,
    DivergedError,
    EvalignError,
    FormatError,
    MissingEmbeddingError,
    NoEventError,
    RotationNotApplicable,
    TemplateNotFoundError,
)
from .evaluate import (
    ExtractionResult,
    RetrievalScores,
    SituationFrame,
    iou,
    rank_texts,
    score_event_extraction,
    score_gsr,
    score_retrieval,
    union_ground,
    zero_shot_arguments,
    zero_shot_type,
)
from .io import (
    ConfusionMatrix,
    EmbeddingTable,
    embedding_key,
    load_confusion,
    load_corpus,
    load_embeddings,
    load_ontology,
    save_confusion,
    save_corpus,
    save_embeddings,
    save_ontology,
)
from .model import EventAlignmentModel
from .negatives import (
    NegativePair,
    generate_negative_pair,
    generate_negatives,
    rotate_arguments,
    sample_negative_role,
    sample_negative_type,
    substitute_event_type,
    zero_confusion,
)
from .primary import primary_rankings, select_primary
from .prompts import (
    PROMPT_KINDS,
    DescriptionSet,
    Exemplar,
    HttpCompletionClient,
    MockCompletionClient,
    build_description_set,
    completion_prompt,
    edit_caption,
    invert_composed_template,
    render_composed_template,
    render_continuous,
    render_single_template,
    render_via_completion,
    type_description,
)
from .training import (
    Batch,
    LossReport,
    TrainConfig,
    TrainResult,
    composite_loss,
    contrastive_loss,
    graph_loss,
    prepare_batch,
    train,
)
from .transport import (
    AlignmentResult,
    CostMatrix,
    TransportPlan,
    build_cost,
    entropic_objective,
    graph_distance,
    sinkhorn,
    transport_cost,
)
from .types import (
    Argument,
    CorpusRecord,
    EntityMention,
    EntityType,
    EventGraph,
    EventStructure,
    EventType,
    ObjectDetection,
    Ontology,
    ReservedToken,
    Span,
    image_graph,
    text_graph,
    validate_graph,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # types
    "Span", "EntityMention", "Argument", "EventStructure", "ObjectDetection",
    "EventType", "EntityType", "Ontology", "CorpusRecord", "ReservedToken",
    "EventGraph", "text_graph", "image_graph", "validate_graph",
    # errors
    "EvalignError", "FormatError", "CorpusError", "DataError",
    "MissingEmbeddingError", "NoEventError", "TemplateNotFoundError",
    "RotationNotApplicable", "CannotEditError", "DivergedError",
    # io
    "EmbeddingTable", "ConfusionMatrix", "embedding_key",
    "load_ontology", "save_ontology", "load_corpus", "save_corpus",
    "load_embeddings", "save_embeddings", "load_confusion", "save_confusion",
    # encoders
    "EmbeddingProvider", "TableProvider", "ToyEncoder",
    "cosine", "cosine_distance", "save_checkpoint", "load_checkpoint",
    # pipeline
    "primary_rankings", "select_primary",
    "NegativePair", "zero_confusion", "sample_negative_type", "rotate_arguments",
    "sample_negative_role", "substitute_event_type", "generate_negative_pair",
    "generate_negatives",
    "PROMPT_KINDS", "DescriptionSet", "Exemplar", "type_description",
    "render_single_template", "render_composed_template", "invert_composed_template",
    "render_continuous", "edit_caption", "completion_prompt", "render_via_completion",
    "MockCompletionClient", "HttpCompletionClient", "build_description_set",
    # alignment
    "CostMatrix", "TransportPlan", "AlignmentResult",
    "build_cost", "sinkhorn", "transport_cost", "entropic_objective", "graph_distance",
    # training
    "Batch", "LossReport", "TrainConfig", "TrainResult", "prepare_batch",
    "contrastive_loss", "graph_loss", "composite_loss", "train",
    # evaluation
    "iou", "union_ground", "zero_shot_type", "zero_shot_arguments",
    "ExtractionResult", "score_event_extraction", "SituationFrame", "score_gsr",
    "RetrievalScores", "score_retrieval", "rank_texts",
    # estimator
    "EventAlignmentModel",
]
