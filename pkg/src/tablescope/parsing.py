"""Table-centric semantic parsing.

Every Table block anchors one entry; the configured scorer rates it against
every Text/List block of the whole document and the threshold decides the
related set. The result keeps raw scores so downstream tools can
re-threshold without re-scoring.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping

from .association import PairScorer, ScorerConfig, ScorerError, decide
from .model import (
    Block,
    BlockType,
    Document,
    SchemaError,
    TEXTUAL_KINDS,
    canonical_json_bytes,
    select_blocks,
)


@dataclass(frozen=True)
class ParseEntry:
    table_block_id: str
    page_id: int
    related: tuple[str, ...]
    scores: Mapping[str, float]


@dataclass(frozen=True)
class ParsedDocument:
    doc_id: str
    entries: tuple[ParseEntry, ...]

    def entry_for(self, table_block_id: str) -> ParseEntry:
        for entry in self.entries:
            if entry.table_block_id == table_block_id:
                return entry
        raise KeyError(table_block_id)


def parse_semantics(
    doc: Document,
    scorer: PairScorer,
    cfg: ScorerConfig,
    page_window: int | None = None,
) -> ParsedDocument:
    """Score every (table, text) pair and threshold into related sets.

    Candidates span the whole document; page_window optionally restricts
    them to +-window pages around each table (off by default). Scoring is
    all-or-nothing: a scorer failure discards partial results.
    """
    tables = select_blocks(doc, {BlockType.TABLE})
    texts = select_blocks(doc, TEXTUAL_KINDS)

    pairs: list[tuple[Block, Block]] = []
    for table in tables:
        for text in texts:
            if page_window is not None and abs(text.page_id - table.page_id) > page_window:
                continue
            pairs.append((table, text))

    flat_scores = scorer.score_pairs(doc, pairs)
    if len(flat_scores) != len(pairs):
        raise ScorerError(f"scorer returned {len(flat_scores)} scores for {len(pairs)} pairs")

    by_table: dict[str, dict[str, float]] = {t.block_id: {} for t in tables}
    for (table, text), score in zip(pairs, flat_scores):
        by_table[table.block_id][text.block_id] = score

    order = {b.block_id: (b.page_id, b.block_id) for b in texts}
    entries = []
    for table in tables:
        scores = by_table[table.block_id]
        related = tuple(sorted((s for s in scores if decide(scores[s], cfg) == 1), key=order.__getitem__))
        entries.append(
            ParseEntry(
                table_block_id=table.block_id,
                page_id=table.page_id,
                related=related,
                scores=dict(sorted(scores.items())),
            )
        )
    return ParsedDocument(doc_id=doc.doc_id, entries=tuple(entries))


def parsed_to_dict(parsed: ParsedDocument) -> dict:
    return {
        "doc_id": parsed.doc_id,
        "entries": [
            {
                "table_block_id": e.table_block_id,
                "page_id": e.page_id,
                "related": list(e.related),
                "scores": dict(e.scores),
            }
            for e in parsed.entries
        ],
    }


def export_parse(parsed: ParsedDocument) -> bytes:
    """Canonical JSON bytes, scores included."""
    return canonical_json_bytes(parsed_to_dict(parsed))


def import_parse(raw: bytes | str) -> ParsedDocument:
    if isinstance(raw, bytes):
        raw = raw.decode("utf-8")
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"parse result is not valid JSON: {exc}") from None
    if not isinstance(data, dict) or "doc_id" not in data or "entries" not in data:
        raise SchemaError("parse result must carry doc_id and entries")
    entries = []
    for raw_entry in data["entries"]:
        entries.append(
            ParseEntry(
                table_block_id=raw_entry["table_block_id"],
                page_id=int(raw_entry["page_id"]),
                related=tuple(raw_entry["related"]),
                scores={k: float(v) for k, v in raw_entry["scores"].items()},
            )
        )
    return ParsedDocument(doc_id=data["doc_id"], entries=tuple(entries))
