"""Annotation triplets, two-annotator consensus, and training-set construction.

A triplet <table_id, page_id, related_paragraphs> is one annotator's verdict
for one table. Consensus keeps only unanimous decisions; every disagreement
becomes a conflict record that must be resolved explicitly before the
annotation set counts as final.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

from .model import BlockType, Document, SchemaError, TEXTUAL_KINDS, canonical_jsonl_line, select_blocks


class DocumentMismatchError(ValueError):
    """Annotation sets reference different documents or inconsistent pages."""


class UnknownBlockError(ValueError):
    """Annotation references a block id the document does not contain."""


@dataclass(frozen=True)
class AnnotationTriplet:
    doc_id: str
    table_id: str
    page_id: int
    related_paragraphs: frozenset[str]
    annotator_id: str


@dataclass(frozen=True)
class ConflictRecord:
    table_id: str
    text_block_id: str
    labels: Mapping[str, int]  # annotator_id -> 0/1
    resolution: int | None = None
    resolver_note: str = ""


@dataclass(frozen=True)
class CompletenessWarning:
    table_id: str
    page_id: int
    message: str


@dataclass(frozen=True)
class TrainingSample:
    doc_id: str
    table_block_id: str
    text_block_id: str
    label: int
    table_text: str
    text_text: str


CONSENSUS_ANNOTATOR = "consensus"


def merge_annotations(
    a1: Sequence[AnnotationTriplet], a2: Sequence[AnnotationTriplet]
) -> tuple[list[AnnotationTriplet], list[ConflictRecord]]:
    """Unanimous pairs enter consensus; every disagreement becomes a conflict.

    A table missing from one annotator's set counts as annotated with an
    empty related set. The consensus is incomplete until conflicts is empty.
    """
    doc_ids = {t.doc_id for t in a1} | {t.doc_id for t in a2}
    if len(doc_ids) > 1:
        raise DocumentMismatchError(f"annotations span documents {sorted(doc_ids)}")

    def index(triplets: Sequence[AnnotationTriplet]) -> dict[str, AnnotationTriplet]:
        by_table: dict[str, AnnotationTriplet] = {}
        for triplet in triplets:
            existing = by_table.get(triplet.table_id)
            if existing is not None:
                if existing.page_id != triplet.page_id:
                    raise DocumentMismatchError(f"table {triplet.table_id!r}: inconsistent page_id")
                triplet = replace(
                    existing, related_paragraphs=existing.related_paragraphs | triplet.related_paragraphs
                )
            by_table[triplet.table_id] = triplet
        return by_table

    first, second = index(a1), index(a2)
    doc_id = next(iter(doc_ids)) if doc_ids else ""

    consensus: list[AnnotationTriplet] = []
    conflicts: list[ConflictRecord] = []
    for table_id in sorted(set(first) | set(second)):
        t1, t2 = first.get(table_id), second.get(table_id)
        if t1 is not None and t2 is not None and t1.page_id != t2.page_id:
            raise DocumentMismatchError(f"table {table_id!r}: annotators disagree on page_id")
        page_id = (t1 or t2).page_id
        r1 = t1.related_paragraphs if t1 else frozenset()
        r2 = t2.related_paragraphs if t2 else frozenset()
        ann1 = t1.annotator_id if t1 else "annotator-1"
        ann2 = t2.annotator_id if t2 else "annotator-2"
        consensus.append(
            AnnotationTriplet(
                doc_id=doc_id,
                table_id=table_id,
                page_id=page_id,
                related_paragraphs=frozenset(r1 & r2),
                annotator_id=CONSENSUS_ANNOTATOR,
            )
        )
        for paragraph in sorted(r1 ^ r2):
            conflicts.append(
                ConflictRecord(
                    table_id=table_id,
                    text_block_id=paragraph,
                    labels={ann1: int(paragraph in r1), ann2: int(paragraph in r2)},
                )
            )
    return consensus, conflicts


def apply_resolutions(
    consensus: Sequence[AnnotationTriplet], conflicts: Sequence[ConflictRecord]
) -> list[AnnotationTriplet]:
    """Fold resolved conflicts into the consensus; all must carry a resolution."""
    unresolved = [c for c in conflicts if c.resolution is None]
    if unresolved:
        first = unresolved[0]
        raise ValueError(f"{len(unresolved)} unresolved conflicts, e.g. ({first.table_id}, {first.text_block_id})")
    additions: dict[str, set[str]] = {}
    for conflict in conflicts:
        if conflict.resolution == 1:
            additions.setdefault(conflict.table_id, set()).add(conflict.text_block_id)
    return [
        replace(t, related_paragraphs=frozenset(t.related_paragraphs | additions.get(t.table_id, set())))
        for t in consensus
    ]


def completeness_check(doc: Document, triplets: Sequence[AnnotationTriplet]) -> list[CompletenessWarning]:
    """One warning per Table block with zero related paragraphs.

    Surfaces orphans so a reviewer can decide whether each is an annotation
    oversight or a table genuinely without textual reference.
    """
    related_by_table: dict[str, set[str]] = {}
    for triplet in triplets:
        related_by_table.setdefault(triplet.table_id, set()).update(triplet.related_paragraphs)
    warnings = []
    for table in select_blocks(doc, {BlockType.TABLE}):
        if not related_by_table.get(table.block_id):
            warnings.append(
                CompletenessWarning(
                    table_id=table.block_id,
                    page_id=table.page_id,
                    message=f"table {table.block_id!r} (page {table.page_id}) has no related paragraphs",
                )
            )
    return warnings


def build_training_pairs(
    doc: Document, triplets: Sequence[AnnotationTriplet], seed: int
) -> list[TrainingSample]:
    """Balanced pair construction: per table, one positive per related
    paragraph plus min(#positives, #available) negatives sampled uniformly
    without replacement from the document's non-related Text/List blocks.
    Deterministic for a fixed seed.
    """
    text_blocks = select_blocks(doc, TEXTUAL_KINDS)
    text_by_id = {b.block_id: b for b in text_blocks}
    table_by_id = {b.block_id: b for b in select_blocks(doc, {BlockType.TABLE})}

    related_by_table: dict[str, set[str]] = {}
    for triplet in triplets:
        if triplet.doc_id and triplet.doc_id != doc.doc_id:
            raise DocumentMismatchError(f"triplet for {triplet.doc_id!r} applied to {doc.doc_id!r}")
        if triplet.table_id not in table_by_id:
            raise UnknownBlockError(f"unknown table {triplet.table_id!r}")
        for paragraph in triplet.related_paragraphs:
            if paragraph not in text_by_id:
                raise UnknownBlockError(f"unknown text block {paragraph!r}")
        related_by_table.setdefault(triplet.table_id, set()).update(triplet.related_paragraphs)

    rng = random.Random(seed)
    samples: list[TrainingSample] = []
    ordered_text_ids = [b.block_id for b in text_blocks]
    for table_id in sorted(related_by_table, key=lambda t: (table_by_id[t].page_id, t)):
        table = table_by_id[table_id]
        related = related_by_table[table_id]
        positives = [b for b in text_blocks if b.block_id in related]
        pool = [bid for bid in ordered_text_ids if bid not in related]
        n_neg = min(len(positives), len(pool))
        negatives = rng.sample(pool, n_neg)
        for block in positives:
            samples.append(
                TrainingSample(
                    doc_id=doc.doc_id,
                    table_block_id=table_id,
                    text_block_id=block.block_id,
                    label=1,
                    table_text=table.text,
                    text_text=block.text,
                )
            )
        for block_id in negatives:
            samples.append(
                TrainingSample(
                    doc_id=doc.doc_id,
                    table_block_id=table_id,
                    text_block_id=block_id,
                    label=0,
                    table_text=table.text,
                    text_text=text_by_id[block_id].text,
                )
            )
    return samples


def split_train_test(
    samples: Sequence[TrainingSample], ratio: tuple[int, int], seed: int
) -> tuple[list[TrainingSample], list[TrainingSample]]:
    """Seeded shuffle then prefix split: train size = floor(n*r1/(r1+r2))."""
    r1, r2 = ratio
    if r1 <= 0 or r2 <= 0:
        raise ValueError(f"ratio components must be positive, got {ratio}")
    shuffled = list(samples)
    random.Random(seed).shuffle(shuffled)
    n_train = len(shuffled) * r1 // (r1 + r2)
    return shuffled[:n_train], shuffled[n_train:]


# ---------------------------------------------------------------------------
# JSON Lines I/O
# ---------------------------------------------------------------------------


def triplet_to_dict(triplet: AnnotationTriplet) -> dict:
    return {
        "doc_id": triplet.doc_id,
        "table_id": triplet.table_id,
        "page_id": triplet.page_id,
        "related_paragraphs": sorted(triplet.related_paragraphs),
        "annotator_id": triplet.annotator_id,
    }


def triplets_to_jsonl(triplets: Iterable[AnnotationTriplet]) -> str:
    return "".join(canonical_jsonl_line(triplet_to_dict(t)) + "\n" for t in triplets)


def triplets_from_jsonl(lines: Iterable[str]) -> list[AnnotationTriplet]:
    triplets = []
    for i, line in enumerate(lines):
        line = line.strip()
        if not line:
            continue
        try:
            data = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"triplets line {i + 1}: invalid JSON: {exc}") from None
        try:
            triplets.append(
                AnnotationTriplet(
                    doc_id=data.get("doc_id", ""),
                    table_id=data["table_id"],
                    page_id=int(data["page_id"]),
                    related_paragraphs=frozenset(data["related_paragraphs"]),
                    annotator_id=data.get("annotator_id", ""),
                )
            )
        except KeyError as exc:
            raise SchemaError(f"triplets line {i + 1}: missing field {exc}") from None
    return triplets


def samples_to_jsonl(samples: Iterable[TrainingSample]) -> str:
    return "".join(
        canonical_jsonl_line(
            {
                "doc_id": s.doc_id,
                "table_block_id": s.table_block_id,
                "text_block_id": s.text_block_id,
                "label": s.label,
                "table_text": s.table_text,
                "text_text": s.text_text,
            }
        )
        + "\n"
        for s in samples
    )


def samples_from_jsonl(lines: Iterable[str]) -> list[TrainingSample]:
    samples = []
    for i, line in enumerate(lines):
        line = line.strip()
        if not line:
            continue
        try:
            data = json.loads(line)
            samples.append(
                TrainingSample(
                    doc_id=data["doc_id"],
                    table_block_id=data["table_block_id"],
                    text_block_id=data["text_block_id"],
                    label=int(data["label"]),
                    table_text=data["table_text"],
                    text_text=data["text_text"],
                )
            )
        except (json.JSONDecodeError, KeyError) as exc:
            raise SchemaError(f"training pairs line {i + 1}: {exc}") from None
    return samples
