"""Table-text association scoring.

Three interchangeable scorers sit behind one interface: the native
heuristic (number matching + tf-idf cosine), a remote model-scorer client
speaking the /score wire protocol, and an offline prompt-based adapter for
LLM baselines. The threshold decision (label = 1 iff score >= theta) is
shared by all of them.
"""

from __future__ import annotations

import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Protocol, Sequence

import httpx

from .lexical import DocumentVocabulary, lexical_score
from .model import Block, Document


class ScorerError(Exception):
    """Base class for scoring failures."""


class TransportError(ScorerError):
    """Scoring endpoint unreachable or timed out."""


class ProtocolError(ScorerError):
    """Malformed reply, wrong score count, or score out of range."""


class EmptyContentError(ValueError):
    """Prompt content empty after trimming."""


class ParseFailure(ValueError):
    """LLM reply is not a bare 0 or 1."""


class ScorerKind(str, Enum):
    HEURISTIC = "heuristic"
    REMOTE = "remote"
    LLM_BASELINE = "llm-prompt"


@dataclass(frozen=True)
class ScorerConfig:
    theta: float = 0.5
    scorer_kind: ScorerKind = ScorerKind.HEURISTIC
    lexical_weight: float = 0.9
    remote_endpoint: str | None = None
    batch_size: int = 32
    max_in_flight: int = 4
    timeout_s: float = 30.0

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must be in [0,1], got {self.theta}")
        if not 0.0 <= self.lexical_weight <= 1.0:
            raise ValueError(f"lexical_weight must be in [0,1], got {self.lexical_weight}")
        if self.batch_size < 1 or self.max_in_flight < 1:
            raise ValueError("batch_size and max_in_flight must be positive")


@dataclass(frozen=True)
class ScoredPair:
    table_block_id: str
    text_block_id: str
    score: float
    label: int


@dataclass(frozen=True)
class TableNumberRefs:
    numbers: frozenset[int]


# ---------------------------------------------------------------------------
# Number matching
# ---------------------------------------------------------------------------

_ROMAN_VALUES = {"i": 1, "v": 5, "x": 10}
_NUMBER_RE = re.compile(r"\b(?:table|tab\.)\s+(\d{1,3}|[ivx]{1,6})\b", re.IGNORECASE)


def _roman_to_int(token: str) -> int | None:
    total = 0
    prev = 0
    for ch in reversed(token):
        value = _ROMAN_VALUES[ch]
        if value < prev:
            total -= value
        else:
            total += value
            prev = value
    # round-trip check rejects malformed sequences like "iix"
    if total < 1 or total > 20 or _int_to_roman(total) != token:
        return None
    return total


def _int_to_roman(n: int) -> str:
    out = []
    for value, sym in ((10, "x"), (9, "ix"), (5, "v"), (4, "iv"), (1, "i")):
        while n >= value:
            out.append(sym)
            n -= value
    return "".join(out)


def _iter_number_matches(text: str):
    for match in _NUMBER_RE.finditer(text):
        token = match.group(1).lower()
        if token.isdigit():
            number = int(token)
            if 1 <= number <= 999:
                yield number
        else:
            number = _roman_to_int(token)
            if number is not None:
                yield number


def extract_table_numbers(text: str) -> TableNumberRefs:
    """Table numbers explicitly referenced as "Table <n>" / "Tab. <n>".

    Arabic 1-999 and roman I-XX are recognized (case-insensitive); roman
    numerals normalize to their arabic value.
    """
    return TableNumberRefs(numbers=frozenset(_iter_number_matches(text)))


def own_table_number(table_text: str) -> int | None:
    """The table's own number: the first "Table <n>" reference in its OCR text."""
    return next(_iter_number_matches(table_text), None)


# ---------------------------------------------------------------------------
# Heuristic scoring and the threshold decision
# ---------------------------------------------------------------------------


def heuristic_score(
    table: Block,
    table_number: int | None,
    text: Block,
    vocab: DocumentVocabulary,
    cfg: ScorerConfig,
) -> float:
    """1.0 on an explicit number match, lexical_weight * cosine otherwise."""
    if table_number is not None and table_number in extract_table_numbers(text.text).numbers:
        return 1.0
    return cfg.lexical_weight * lexical_score(table, text, vocab)


def decide(score: float, cfg: ScorerConfig) -> int:
    """Threshold decision: related iff score >= theta (boundary inclusive)."""
    return 1 if score >= cfg.theta else 0


# ---------------------------------------------------------------------------
# Scorer interface
# ---------------------------------------------------------------------------


class PairScorer(Protocol):
    def score_pairs(self, doc: Document | None, pairs: Sequence[tuple[Block, Block]]) -> list[float]: ...


class QueryScorer(Protocol):
    def score_query(self, doc: Document | None, query: str, tables: Sequence[Block]) -> list[float]: ...


class HeuristicScorer:
    """Pure in-process scorer; vocabularies are cached per document id."""

    def __init__(self, cfg: ScorerConfig):
        self.cfg = cfg
        self._vocab_cache: dict[str, DocumentVocabulary] = {}

    def _vocab(self, doc: Document | None, fallback_texts: Sequence[str]) -> DocumentVocabulary:
        if doc is None:
            return DocumentVocabulary(fallback_texts)
        vocab = self._vocab_cache.get(doc.doc_id)
        if vocab is None:
            vocab = DocumentVocabulary.from_document(doc)
            self._vocab_cache[doc.doc_id] = vocab
        return vocab

    def score_pairs(self, doc: Document | None, pairs: Sequence[tuple[Block, Block]]) -> list[float]:
        if not pairs:
            return []
        vocab = self._vocab(doc, [t.text for t, _ in pairs] + [s.text for _, s in pairs])
        tables = sorted({t.block_id: t for t, _ in pairs}.values(), key=lambda b: b.block_id)
        texts = sorted({s.block_id: s for _, s in pairs}.values(), key=lambda b: b.block_id)
        t_index = {b.block_id: i for i, b in enumerate(tables)}
        s_index = {b.block_id: i for i, b in enumerate(texts)}
        cosines = vocab.similarity_matrix([b.text for b in tables], [b.text for b in texts])
        own_numbers = {b.block_id: own_table_number(b.text) for b in tables}
        refs = {b.block_id: extract_table_numbers(b.text).numbers for b in texts}
        scores = []
        for table, text in pairs:
            number = own_numbers[table.block_id]
            if number is not None and number in refs[text.block_id]:
                scores.append(1.0)
            else:
                scores.append(
                    self.cfg.lexical_weight * float(cosines[t_index[table.block_id], s_index[text.block_id]])
                )
        return scores

    def score_query(self, doc: Document | None, query: str, tables: Sequence[Block]) -> list[float]:
        if not tables:
            return []
        vocab = self._vocab(doc, [b.text for b in tables])
        row = vocab.similarity_matrix([query], [b.text for b in tables])
        return [float(v) for v in row[0]]


# ---------------------------------------------------------------------------
# Remote scorer client (wire protocol: POST /score, POST /score_query)
# ---------------------------------------------------------------------------


def _post_json(url: str, body: dict, timeout_s: float) -> dict:
    try:
        response = httpx.post(url, json=body, timeout=timeout_s)
    except httpx.HTTPError as exc:
        raise TransportError(f"POST {url} failed: {exc}") from exc
    if response.status_code != 200:
        raise ProtocolError(f"POST {url} returned HTTP {response.status_code}: {response.text[:200]}")
    try:
        return response.json()
    except ValueError as exc:
        raise ProtocolError(f"POST {url} returned non-JSON body") from exc


def _extract_scores(payload: dict, expected: int, url: str) -> list[float]:
    scores = payload.get("scores") if isinstance(payload, dict) else None
    if not isinstance(scores, list):
        raise ProtocolError(f"{url}: reply missing 'scores' list")
    if len(scores) != expected:
        raise ProtocolError(f"{url}: expected {expected} scores, got {len(scores)}")
    out = []
    for value in scores:
        if not isinstance(value, (int, float)) or isinstance(value, bool) or not math.isfinite(value):
            raise ProtocolError(f"{url}: non-numeric score {value!r}")
        out.append(float(value))
    return out


def remote_score_batch(pairs: Sequence[tuple[str, str]], cfg: ScorerConfig) -> list[float]:
    """Score (table_text, text_text) pairs via POST /score; order-preserving."""
    if not pairs:
        raise ValueError("remote_score_batch requires a non-empty batch")
    if not cfg.remote_endpoint:
        raise ValueError("ScorerConfig.remote_endpoint is not set")
    url = cfg.remote_endpoint.rstrip("/") + "/score"
    body = {"pairs": [{"table_text": t, "text_text": s} for t, s in pairs]}
    scores = _extract_scores(_post_json(url, body, cfg.timeout_s), len(pairs), url)
    for value in scores:
        if not 0.0 <= value <= 1.0:
            raise ProtocolError(f"{url}: score {value} outside [0,1]")
    return scores


def remote_score_query(query: str, tables: Sequence[str], cfg: ScorerConfig) -> list[float]:
    """Score a query against table texts via POST /score_query (unbounded reals)."""
    if not tables:
        return []
    if not cfg.remote_endpoint:
        raise ValueError("ScorerConfig.remote_endpoint is not set")
    url = cfg.remote_endpoint.rstrip("/") + "/score_query"
    body = {"query": query, "tables": list(tables)}
    return _extract_scores(_post_json(url, body, cfg.timeout_s), len(tables), url)


class RemoteScorer:
    """Chunks pairs into batches and allows bounded concurrent requests.

    Replies correlate to requests by order within one request; chunk results
    are reassembled by chunk index, so the output order always matches the
    input order regardless of in-flight concurrency.
    """

    def __init__(self, cfg: ScorerConfig):
        if not cfg.remote_endpoint:
            raise ValueError("RemoteScorer requires remote_endpoint")
        self.cfg = cfg

    def score_pairs(self, doc: Document | None, pairs: Sequence[tuple[Block, Block]]) -> list[float]:
        if not pairs:
            return []
        texts = [(t.text, s.text) for t, s in pairs]
        chunks = [texts[i : i + self.cfg.batch_size] for i in range(0, len(texts), self.cfg.batch_size)]
        if len(chunks) == 1 or self.cfg.max_in_flight == 1:
            results = [remote_score_batch(chunk, self.cfg) for chunk in chunks]
        else:
            with ThreadPoolExecutor(max_workers=self.cfg.max_in_flight) as pool:
                results = list(pool.map(lambda chunk: remote_score_batch(chunk, self.cfg), chunks))
        return [score for chunk_scores in results for score in chunk_scores]

    def score_query(self, doc: Document | None, query: str, tables: Sequence[Block]) -> list[float]:
        return remote_score_query(query, [b.text for b in tables], self.cfg)


# ---------------------------------------------------------------------------
# LLM baseline adapter (prompt construction + reply parsing only)
# ---------------------------------------------------------------------------

LLM_PROMPT_TEMPLATE = """You are an expert in document analysis. Your task is to determine whether the provided text block is a descriptive explanation of the given table block.
Please reply with only a single number:

Reply `1' if the text block describes or explains the table block.

Reply `0' if the text block is unrelated to the table block.

Here is the content:

- Table Block:
  [table_content]

- Text Block:
  [text_content]"""


def build_llm_prompt(table_text: str, text_text: str) -> str:
    """The baseline classification prompt with both contents substituted."""
    if not table_text.strip() or not text_text.strip():
        raise EmptyContentError("prompt requires non-empty table and text content")
    return LLM_PROMPT_TEMPLATE.replace("[table_content]", table_text).replace("[text_content]", text_text)


def parse_llm_reply(reply: str) -> int:
    """Map a trimmed reply of "1"/"0" to related/unrelated."""
    trimmed = reply.strip()
    if trimmed == "1":
        return 1
    if trimmed == "0":
        return 0
    raise ParseFailure(f"expected bare 0 or 1, got {reply!r}")


class ReplayScorer:
    """Feeds pre-recorded LLM replies back as scores, in pair order."""

    def __init__(self, replies: Sequence[str]):
        self._replies = list(replies)
        self._cursor = 0

    def score_pairs(self, doc: Document | None, pairs: Sequence[tuple[Block, Block]]) -> list[float]:
        if self._cursor + len(pairs) > len(self._replies):
            raise ParseFailure(
                f"not enough replies: need {len(pairs)} more, have {len(self._replies) - self._cursor}"
            )
        out = []
        for _ in pairs:
            out.append(float(parse_llm_reply(self._replies[self._cursor])))
            self._cursor += 1
        return out


def make_pair_scorer(cfg: ScorerConfig, replies: Sequence[str] | None = None):
    if cfg.scorer_kind is ScorerKind.HEURISTIC:
        return HeuristicScorer(cfg)
    if cfg.scorer_kind is ScorerKind.REMOTE:
        return RemoteScorer(cfg)
    if replies is None:
        raise ValueError("llm-prompt scoring requires recorded replies")
    return ReplayScorer(replies)
