"""Pairwise sparse-cosine kernels.

Scoring a document means taking the dot product of every (table, text)
TF-IDF row pair, which is the one hot loop in the package. The CSR merge
kernel below is compiled with numba when available; setting
TABLESCOPE_NO_NUMBA=1 (or running without numba installed) selects the
pure-numpy fallback. Rows are pre-normalized, so per-pair results are
bit-identical across batch shapes within either path: the fallback sums
each row's products in the same ascending-index order the merge loop uses
(interleaved exact zeros do not perturb an IEEE sum).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dep, flag path tested instead
    _HAVE_NUMBA = False


@dataclass(frozen=True)
class CsrRows:
    """Row-major sparse matrix; indices sorted ascending within each row."""

    indptr: np.ndarray  # int64, len n_rows + 1
    indices: np.ndarray  # int64
    data: np.ndarray  # float64

    @property
    def n_rows(self) -> int:
        return len(self.indptr) - 1


def numba_enabled() -> bool:
    if os.environ.get("TABLESCOPE_NO_NUMBA", "").strip().lower() in ("1", "true", "yes"):
        return False
    return _HAVE_NUMBA


def _pairwise_dot_merge(a_indptr, a_indices, a_data, b_indptr, b_indices, b_data, out):
    n_a = a_indptr.shape[0] - 1
    n_b = b_indptr.shape[0] - 1
    for i in range(n_a):
        a_lo = a_indptr[i]
        a_hi = a_indptr[i + 1]
        if a_lo == a_hi:
            continue
        for j in range(n_b):
            b_lo = b_indptr[j]
            b_hi = b_indptr[j + 1]
            acc = 0.0
            p = a_lo
            q = b_lo
            while p < a_hi and q < b_hi:
                ia = a_indices[p]
                ib = b_indices[q]
                if ia == ib:
                    acc += a_data[p] * b_data[q]
                    p += 1
                    q += 1
                elif ia < ib:
                    p += 1
                else:
                    q += 1
            out[i, j] = acc
    return out


if _HAVE_NUMBA:
    _pairwise_dot_merge_jit = njit(cache=True)(_pairwise_dot_merge)


def _pairwise_dot_numpy(a: CsrRows, b: CsrRows, out: np.ndarray) -> np.ndarray:
    if len(a.data) == 0 or len(b.data) == 0:
        return out
    seg_len = np.diff(b.indptr)
    nonempty = seg_len > 0
    starts = b.indptr[:-1][nonempty]
    n_cols = int(max(a.indices.max(), b.indices.max())) + 1
    dense = np.zeros(n_cols, dtype=np.float64)
    for i in range(a.n_rows):
        lo, hi = a.indptr[i], a.indptr[i + 1]
        if lo == hi:
            continue
        cols = a.indices[lo:hi]
        dense[cols] = a.data[lo:hi]
        prod = b.data * dense[b.indices]
        # reduceat sums each segment left-to-right, matching the merge loop
        out[i, nonempty] = np.add.reduceat(prod, starts)
        dense[cols] = 0.0
    return out


def pairwise_cosine(a: CsrRows, b: CsrRows) -> np.ndarray:
    """Cosine matrix (n_a x n_b) for L2-normalized CSR rows, clamped to [0,1]."""
    out = np.zeros((a.n_rows, b.n_rows), dtype=np.float64)
    if numba_enabled():
        _pairwise_dot_merge_jit(a.indptr, a.indices, a.data, b.indptr, b.indices, b.data, out)
    else:
        _pairwise_dot_numpy(a, b, out)
    np.clip(out, 0.0, 1.0, out=out)
    return out
