"""Domain-specific table retrieval: score a query against each table, rank,
and return the top-K with the associated text from the parse attached.

Ranking scores are uncalibrated reals (remote) or cosines (heuristic
fallback); only their order matters. Ties break by (page_id, block_id) so
rankings are reproducible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Sequence

from .association import ProtocolError, QueryScorer, ScorerConfig
from .model import Block, BlockType, Document, SchemaError, canonical_json_bytes, select_blocks
from .parsing import ParsedDocument


class EmptyQueryError(ValueError):
    """Query text empty after trimming."""


class InvalidK(ValueError):
    """Requested K is not a positive integer."""


class MismatchError(ValueError):
    """Parse result and document disagree on doc_id."""


@dataclass(frozen=True)
class Query:
    query_id: str
    text: str
    gold_table_id: str | None = None
    doc_id: str | None = None

    def __post_init__(self):
        if not self.text.strip():
            raise EmptyQueryError(f"query {self.query_id!r} has empty text")


@dataclass(frozen=True)
class RankedTable:
    table_block_id: str
    score: float
    related_text: tuple[str, ...] = ()


@dataclass(frozen=True)
class RetrievalRanking:
    query_id: str
    k: int
    ranked: tuple[RankedTable, ...]


def score_query_tables(
    query: Query,
    tables: Sequence[Block],
    scorer: QueryScorer,
    cfg: ScorerConfig,
    doc: Document | None = None,
) -> list[float]:
    """One relevance score per table, order-preserving."""
    if not query.text.strip():
        raise EmptyQueryError(f"query {query.query_id!r} has empty text")
    if not tables:
        return []
    scores = scorer.score_query(doc, query.text, tables)
    if len(scores) != len(tables):
        raise ProtocolError(f"query scorer returned {len(scores)} scores for {len(tables)} tables")
    for value in scores:
        if not math.isfinite(value):
            raise ProtocolError(f"non-finite query score {value!r}")
    return scores


def top_k(scored: Sequence[tuple[Block, float]], k: int, query_id: str = "") -> RetrievalRanking:
    """min(K, N) items by score descending; ties by (page_id, block_id)."""
    if not isinstance(k, int) or k <= 0:
        raise InvalidK(f"K must be a positive integer, got {k!r}")
    ordered = sorted(scored, key=lambda item: (-item[1], item[0].page_id, item[0].block_id))
    ranked = tuple(
        RankedTable(table_block_id=block.block_id, score=float(score)) for block, score in ordered[:k]
    )
    return RetrievalRanking(query_id=query_id, k=k, ranked=ranked)


def retrieve(
    parsed: ParsedDocument,
    doc: Document,
    query: Query,
    k: int,
    scorer: QueryScorer,
    cfg: ScorerConfig,
) -> RetrievalRanking:
    """score_query_tables + top_k, with each hit carrying its related text."""
    if parsed.doc_id != doc.doc_id:
        raise MismatchError(f"parse is for {parsed.doc_id!r}, document is {doc.doc_id!r}")
    tables = select_blocks(doc, {BlockType.TABLE})
    scores = score_query_tables(query, tables, scorer, cfg, doc=doc)
    ranking = top_k(list(zip(tables, scores)), k, query_id=query.query_id)
    related = {entry.table_block_id: entry.related for entry in parsed.entries}
    ranked = tuple(replace(item, related_text=related.get(item.table_block_id, ())) for item in ranking.ranked)
    return RetrievalRanking(query_id=ranking.query_id, k=ranking.k, ranked=ranked)


def ranking_to_dict(ranking: RetrievalRanking) -> dict:
    return {
        "query_id": ranking.query_id,
        "k": ranking.k,
        "ranked": [
            {
                "table_block_id": item.table_block_id,
                "score": item.score,
                "related_text": list(item.related_text),
            }
            for item in ranking.ranked
        ],
    }


def export_ranking(ranking: RetrievalRanking) -> bytes:
    return canonical_json_bytes(ranking_to_dict(ranking))


def ranking_from_dict(data: dict) -> RetrievalRanking:
    return RetrievalRanking(
        query_id=data["query_id"],
        k=int(data["k"]),
        ranked=tuple(
            RankedTable(
                table_block_id=item["table_block_id"],
                score=float(item["score"]),
                related_text=tuple(item.get("related_text", ())),
            )
            for item in data["ranked"]
        ),
    )


def load_queries(lines: Sequence[str]) -> list[Query]:
    """Queries from JSON Lines: {"query_id","text","gold_table_id","doc_id"}."""
    queries = []
    for i, line in enumerate(lines):
        line = line.strip()
        if not line:
            continue
        try:
            data = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"queries line {i + 1}: invalid JSON: {exc}") from None
        if "query_id" not in data or "text" not in data:
            raise SchemaError(f"queries line {i + 1}: query_id and text are required")
        queries.append(
            Query(
                query_id=data["query_id"],
                text=data["text"],
                gold_table_id=data.get("gold_table_id"),
                doc_id=data.get("doc_id"),
            )
        )
    return queries
