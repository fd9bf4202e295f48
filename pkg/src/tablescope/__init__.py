"""tablescope: table-centric semantic document parsing, retrieval, and
annotation tooling over layout-analyzed block JSON."""

from .model import (
    Block,
    BlockType,
    CorpusStats,
    Document,
    DuplicateIdError,
    GeometryError,
    IngestError,
    Page,
    SchemaError,
    SourceCounts,
    TEXTUAL_KINDS,
    canonical_json_bytes,
    canonicalize,
    corpus_stats,
    parse_document_json,
    select_blocks,
)
from .lexical import DocumentVocabulary, lexical_score, tokenize
from .association import (
    HeuristicScorer,
    ProtocolError,
    RemoteScorer,
    ScoredPair,
    ScorerConfig,
    ScorerError,
    ScorerKind,
    TableNumberRefs,
    TransportError,
    build_llm_prompt,
    decide,
    extract_table_numbers,
    heuristic_score,
    own_table_number,
    parse_llm_reply,
    remote_score_batch,
    remote_score_query,
)
from .parsing import ParsedDocument, ParseEntry, export_parse, import_parse, parse_semantics
from .retrieval import (
    EmptyQueryError,
    InvalidK,
    MismatchError,
    Query,
    RankedTable,
    RetrievalRanking,
    retrieve,
    score_query_tables,
    top_k,
)
from .dataset import (
    AnnotationTriplet,
    CompletenessWarning,
    ConflictRecord,
    DocumentMismatchError,
    TrainingSample,
    build_training_pairs,
    completeness_check,
    merge_annotations,
    split_train_test,
)
from .metrics import (
    ConfusionCounts,
    DocLevelResult,
    LatencyReport,
    PrfResult,
    confusion,
    doc_level,
    latency_batches,
    prf,
    recall_at_k,
)

__version__ = "0.1.0"
