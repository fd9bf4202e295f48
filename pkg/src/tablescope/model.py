"""Canonical document/block data model and its bit-exact serialization.

Layout analysis and OCR happen upstream (external tools); this module owns
the block-JSON contract they feed. Documents are immutable after ingestion
and every operation here is a pure function, safe to share across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator, Mapping


class IngestError(ValueError):
    """Base class for document ingestion failures."""


class SchemaError(IngestError):
    """Missing/extra field, wrong type, or unknown block type."""


class GeometryError(IngestError):
    """Inverted or negative bbox, or bbox outside its page."""


class DuplicateIdError(IngestError):
    """block_id reused within one document."""


class BlockType(str, Enum):
    TEXT = "Text"
    LIST = "List"
    TABLE = "Table"
    TITLE = "Title"
    FIGURE = "Figure"


# "Text block" in the annotation sense: Text and List blocks collectively.
TEXTUAL_KINDS = frozenset({BlockType.TEXT, BlockType.LIST})


@dataclass(frozen=True)
class Block:
    """One detected layout region with its OCR text.

    bbox is (x0, y0, x1, y1) in rendered-page pixels; Figure blocks carry
    empty text (OCR is applied to the other four kinds only).
    """

    block_id: str
    page_id: int
    kind: BlockType
    bbox: tuple[float, float, float, float]
    text: str


@dataclass(frozen=True)
class Page:
    page_id: int
    width_px: float
    height_px: float
    blocks: tuple[Block, ...]


@dataclass(frozen=True)
class Document:
    doc_id: str
    source: str
    pages: tuple[Page, ...]

    def iter_blocks(self) -> Iterator[Block]:
        """All blocks in (page_id, block_id) order."""
        for page in self.pages:
            yield from page.blocks

    def block_by_id(self, block_id: str) -> Block:
        for block in self.iter_blocks():
            if block.block_id == block_id:
                return block
        raise KeyError(block_id)


@dataclass(frozen=True)
class SourceCounts:
    n_pdf: int = 0
    n_page: int = 0
    n_table_block: int = 0
    n_text_block: int = 0

    def __add__(self, other: "SourceCounts") -> "SourceCounts":
        return SourceCounts(
            self.n_pdf + other.n_pdf,
            self.n_page + other.n_page,
            self.n_table_block + other.n_table_block,
            self.n_text_block + other.n_text_block,
        )


@dataclass(frozen=True)
class CorpusStats:
    per_source: Mapping[str, SourceCounts]
    total: SourceCounts


# ---------------------------------------------------------------------------
# Canonical JSON
# ---------------------------------------------------------------------------


def _strip_integral_floats(obj):
    # Canonical form writes numbers without trailing zeros: 10.0 -> 10.
    if isinstance(obj, bool):
        return obj
    if isinstance(obj, float):
        return int(obj) if obj.is_integer() else obj
    if isinstance(obj, dict):
        return {k: _strip_integral_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_strip_integral_floats(v) for v in obj]
    return obj


def canonical_json_bytes(obj) -> bytes:
    """UTF-8 JSON with sorted keys, 2-space indent, LF endings."""
    payload = json.dumps(_strip_integral_floats(obj), ensure_ascii=False, sort_keys=True, indent=2)
    return (payload + "\n").encode("utf-8")


def canonical_jsonl_line(obj) -> str:
    """One compact, key-sorted JSON line (no trailing newline)."""
    return json.dumps(_strip_integral_floats(obj), ensure_ascii=False, sort_keys=True, separators=(",", ":"))


# ---------------------------------------------------------------------------
# Parsing / validation
# ---------------------------------------------------------------------------

_BLOCK_KEYS = {"block_id", "type", "bbox", "text"}
_PAGE_KEYS = {"page_id", "width_px", "height_px", "blocks"}
_DOC_KEYS = {"doc_id", "source", "pages"}


def _require(mapping, key, kind, where):
    if not isinstance(mapping, dict):
        raise SchemaError(f"{where}: expected object, got {type(mapping).__name__}")
    if key not in mapping:
        raise SchemaError(f"{where}: missing field {key!r}")
    value = mapping[key]
    if not isinstance(value, kind) or isinstance(value, bool):
        raise SchemaError(f"{where}: field {key!r} has wrong type {type(value).__name__}")
    return value


def _parse_block(raw: dict, page_id: int, where: str) -> Block:
    block_id = _require(raw, "block_id", str, where)
    type_name = _require(raw, "type", str, where)
    try:
        kind = BlockType(type_name)
    except ValueError:
        raise SchemaError(f"{where}: unknown block type {type_name!r}") from None
    bbox_raw = _require(raw, "bbox", list, where)
    if len(bbox_raw) != 4 or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in bbox_raw):
        raise SchemaError(f"{where}: bbox must be four numbers")
    text = _require(raw, "text", str, where)
    x0, y0, x1, y1 = (float(v) for v in bbox_raw)
    if min(x0, y0, x1, y1) < 0:
        raise GeometryError(f"{where}: negative bbox coordinate")
    if x0 > x1 or y0 > y1:
        raise GeometryError(f"{where}: inverted bbox ({x0},{y0},{x1},{y1})")
    if kind is BlockType.FIGURE and text != "":
        raise SchemaError(f"{where}: Figure blocks carry no OCR text")
    return Block(block_id=block_id, page_id=page_id, kind=kind, bbox=(x0, y0, x1, y1), text=text)


def document_from_dict(raw: dict) -> Document:
    """Validate a Document mapping and normalize block/page ordering."""
    doc_id = _require(raw, "doc_id", str, "document")
    source = _require(raw, "source", str, "document")
    pages_raw = _require(raw, "pages", list, "document")

    pages = []
    seen_ids: set[str] = set()
    for page_raw in pages_raw:
        where = "page"
        page_id = _require(page_raw, "page_id", int, where)
        if page_id < 0:
            raise SchemaError(f"{where}: negative page_id {page_id}")
        width = float(_require(page_raw, "width_px", (int, float), where))
        height = float(_require(page_raw, "height_px", (int, float), where))
        if width <= 0 or height <= 0:
            raise GeometryError(f"page {page_id}: non-positive page size")
        blocks = []
        for block_raw in _require(page_raw, "blocks", list, where):
            block = _parse_block(block_raw, page_id, f"page {page_id} block")
            if block.block_id in seen_ids:
                raise DuplicateIdError(f"duplicate block_id {block.block_id!r}")
            seen_ids.add(block.block_id)
            x0, y0, x1, y1 = block.bbox
            if x1 > width or y1 > height:
                raise GeometryError(
                    f"page {page_id} block {block.block_id!r}: bbox exceeds page ({width}x{height})"
                )
            blocks.append(block)
        blocks.sort(key=lambda b: b.block_id)
        pages.append(Page(page_id=page_id, width_px=width, height_px=height, blocks=tuple(blocks)))

    pages.sort(key=lambda p: p.page_id)
    if [p.page_id for p in pages] != list(range(len(pages))):
        raise SchemaError("page_id values must be contiguous 0..n-1")
    return Document(doc_id=doc_id, source=source, pages=tuple(pages))


def parse_document_json(raw: bytes | str) -> Document:
    """Parse and validate Document JSON (the upstream layout/OCR contract)."""
    if isinstance(raw, bytes):
        try:
            raw = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise SchemaError(f"document is not UTF-8: {exc}") from None
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"document is not valid JSON: {exc}") from None
    return document_from_dict(data)


def document_to_dict(doc: Document) -> dict:
    return {
        "doc_id": doc.doc_id,
        "source": doc.source,
        "pages": [
            {
                "page_id": page.page_id,
                "width_px": page.width_px,
                "height_px": page.height_px,
                "blocks": [
                    {
                        "block_id": b.block_id,
                        "type": b.kind.value,
                        "bbox": list(b.bbox),
                        "text": b.text,
                    }
                    for b in page.blocks
                ],
            }
            for page in doc.pages
        ],
    }


def canonicalize(doc: Document) -> bytes:
    """Deterministic byte serialization; parse_document_json inverts it."""
    return canonical_json_bytes(document_to_dict(doc))


# ---------------------------------------------------------------------------
# Block selection / corpus statistics
# ---------------------------------------------------------------------------


def select_blocks(doc: Document, kinds: Iterable[BlockType]) -> list[Block]:
    """Blocks of the given kinds in (page_id, block_id) order.

    select_blocks(doc, {Table}) yields the anchor set; {Text, List} yields
    the candidate text-block set.
    """
    wanted = frozenset(kinds)
    return [b for b in doc.iter_blocks() if b.kind in wanted]


def corpus_stats(docs: Iterable[Document]) -> CorpusStats:
    """Per-source and total counts of PDFs, pages, Table and Text+List blocks."""
    per_source: dict[str, SourceCounts] = {}
    total = SourceCounts()
    for doc in docs:
        counts = SourceCounts(
            n_pdf=1,
            n_page=len(doc.pages),
            n_table_block=sum(1 for b in doc.iter_blocks() if b.kind is BlockType.TABLE),
            n_text_block=sum(1 for b in doc.iter_blocks() if b.kind in TEXTUAL_KINDS),
        )
        per_source[doc.source] = per_source.get(doc.source, SourceCounts()) + counts
        total = total + counts
    return CorpusStats(per_source=per_source, total=total)
