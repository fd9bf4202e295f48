"""TF-IDF vocabulary and cosine scoring over a single document's blocks.

Each block is treated as one mini-document; inverse document frequency is
smoothed as ln(1 + N / (1 + df)). This lexical scorer is the runnable
stand-in for the trained pair model when no scoring server is available.
"""

from __future__ import annotations

import math
import re
from typing import Sequence

import numpy as np

from ._kernels import CsrRows, pairwise_cosine
from .model import Block, BlockType, Document, TEXTUAL_KINDS

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercased ASCII-alphanumeric tokens."""
    return _TOKEN_RE.findall(text.lower())


class DocumentVocabulary:
    """TF-IDF statistics built from the blocks of one document.

    Blocks that tokenize to nothing do not count as documents. Terms never
    seen in the document (e.g. from an external query) get df = 0.
    """

    def __init__(self, texts: Sequence[str]):
        df: dict[str, int] = {}
        n_docs = 0
        for text in texts:
            tokens = set(tokenize(text))
            if not tokens:
                continue
            n_docs += 1
            for token in tokens:
                df[token] = df.get(token, 0) + 1
        self.n_docs = n_docs
        self._df = df
        self._index = {term: i for i, term in enumerate(sorted(df))}

    @classmethod
    def from_document(cls, doc: Document) -> "DocumentVocabulary":
        return cls([b.text for b in doc.iter_blocks()])

    def idf(self, term: str) -> float:
        return math.log(1.0 + self.n_docs / (1.0 + self._df.get(term, 0)))

    def _oov_index(self, texts: Sequence[str]) -> dict[str, int]:
        # one shared index per unseen term so matches stay term-determined;
        # indices follow sorted-term order, keeping summation order stable
        # across batch compositions
        oov: set[str] = set()
        for text in texts:
            for token in tokenize(text):
                if token not in self._index:
                    oov.add(token)
        return {term: len(self._index) + i for i, term in enumerate(sorted(oov))}

    def vector(self, text: str, oov_index: dict[str, int] | None = None) -> tuple[np.ndarray, np.ndarray]:
        """L2-normalized tf-idf row as (sorted indices, values); empty if no tokens.

        Out-of-vocabulary terms get virtual indices past the vocabulary; they
        contribute to the norm and can only match the same term elsewhere.
        """
        counts: dict[str, int] = {}
        for token in tokenize(text):
            counts[token] = counts.get(token, 0) + 1
        if not counts:
            return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64)
        if oov_index is None:
            oov_index = self._oov_index([text])
        pairs = sorted(
            (self._index.get(term, oov_index.get(term)), count * self.idf(term))
            for term, count in counts.items()
        )
        indices = np.array([p[0] for p in pairs], dtype=np.int64)
        values = np.array([p[1] for p in pairs], dtype=np.float64)
        norm = math.sqrt(float(np.dot(values, values)))
        if norm > 0.0:
            values = values / norm
        return indices, values

    def rows(self, texts: Sequence[str], oov_index: dict[str, int] | None = None) -> CsrRows:
        if oov_index is None:
            oov_index = self._oov_index(texts)
        indptr = np.zeros(len(texts) + 1, dtype=np.int64)
        all_indices = []
        all_values = []
        for i, text in enumerate(texts):
            indices, values = self.vector(text, oov_index)
            all_indices.append(indices)
            all_values.append(values)
            indptr[i + 1] = indptr[i] + len(indices)
        if all_indices:
            indices = np.concatenate(all_indices)
            data = np.concatenate(all_values)
        else:
            indices = np.empty(0, dtype=np.int64)
            data = np.empty(0, dtype=np.float64)
        return CsrRows(indptr=indptr, indices=indices, data=data)

    def similarity_matrix(self, texts_a: Sequence[str], texts_b: Sequence[str]) -> np.ndarray:
        """Pairwise tf-idf cosine in [0,1]; zero rows score 0 against everything."""
        oov_index = self._oov_index(list(texts_a) + list(texts_b))
        return pairwise_cosine(self.rows(texts_a, oov_index), self.rows(texts_b, oov_index))

    def similarity(self, text_a: str, text_b: str) -> float:
        return float(self.similarity_matrix([text_a], [text_b])[0, 0])


def lexical_score(table: Block, text: Block, vocab: DocumentVocabulary) -> float:
    """TF-IDF cosine between a Table block and a Text/List block."""
    if table.kind is not BlockType.TABLE:
        raise ValueError(f"expected a Table block, got {table.kind.value}")
    if text.kind not in TEXTUAL_KINDS:
        raise ValueError(f"expected a Text/List block, got {text.kind.value}")
    return vocab.similarity(table.text, text.text)
