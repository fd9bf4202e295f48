"""Evaluation metric suite: pair-level confusion/P/R/F1, document-level
All/POS/NEG Correct, Retrieval Recall@K, and batched latency statistics.

Percentages are computed on exact rationals and rounded half-up to two
decimals only for reporting.
"""

from __future__ import annotations

import random
import statistics
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from typing import Mapping, NamedTuple, Sequence

from .retrieval import InvalidK, RetrievalRanking


class LengthMismatch(ValueError):
    pass


class EmptyGroupError(ValueError):
    pass


class MissingGoldError(ValueError):
    pass


class InvalidBatchCount(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")


@dataclass(frozen=True)
class DocLevelResult:
    all_correct: int
    pos_correct: int
    neg_correct: int
    n_docs: int


@dataclass(frozen=True)
class LatencyReport:
    mean_s: float
    median_s: float
    batch_means: tuple[float, ...]
    batch_medians: tuple[float, ...]
    batch_sizes: tuple[int, ...]
    n_batches: int
    seed: int


class PrfResult(NamedTuple):
    precision: float
    recall: float
    f1: float


def round2(value: Fraction | float) -> float:
    """Half-up rounding to two decimals, as reported in the result tables."""
    if isinstance(value, Fraction):
        dec = Decimal(value.numerator) / Decimal(value.denominator)
    else:
        dec = Decimal(repr(float(value)))
    return float(dec.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def confusion(pred: Sequence[int], gold: Sequence[int]) -> ConfusionCounts:
    """Standard 2x2 counts over parallel 0/1 label vectors."""
    if len(pred) != len(gold):
        raise LengthMismatch(f"{len(pred)} predictions vs {len(gold)} gold labels")
    tp = fp = tn = fn = 0
    for p, g in zip(pred, gold):
        if g == 1:
            if p == 1:
                tp += 1
            else:
                fn += 1
        else:
            if p == 1:
                fp += 1
            else:
                tn += 1
    return ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)


def prf_fractions(c: ConfusionCounts) -> tuple[Fraction, Fraction, Fraction]:
    """Exact precision/recall/F1 percentages; 0 where a denominator is 0."""
    precision = Fraction(100 * c.tp, c.tp + c.fp) if c.tp + c.fp else Fraction(0)
    recall = Fraction(100 * c.tp, c.tp + c.fn) if c.tp + c.fn else Fraction(0)
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else Fraction(0)
    return precision, recall, f1


def prf(c: ConfusionCounts) -> PrfResult:
    """Precision/Recall/F1 as percentages, two decimals, half-up."""
    precision, recall, f1 = prf_fractions(c)
    return PrfResult(round2(precision), round2(recall), round2(f1))


def doc_level(groups: Mapping[str, Sequence[tuple[int, int]]]) -> DocLevelResult:
    """All/POS/NEG Correct document counts over (pred, gold) pair groups.

    A document lacking gold positives counts toward POS Correct vacuously,
    and symmetrically for negatives.
    """
    all_correct = pos_correct = neg_correct = 0
    for doc_id, pairs in groups.items():
        if not pairs:
            raise EmptyGroupError(f"document {doc_id!r} has no pairs")
        ok_all = all(p == g for p, g in pairs)
        ok_pos = all(p == 1 for p, g in pairs if g == 1)
        ok_neg = all(p == 0 for p, g in pairs if g == 0)
        all_correct += ok_all
        pos_correct += ok_pos
        neg_correct += ok_neg
    return DocLevelResult(
        all_correct=all_correct,
        pos_correct=pos_correct,
        neg_correct=neg_correct,
        n_docs=len(groups),
    )


def recall_at_k(rankings: Sequence[RetrievalRanking], gold: Mapping[str, str], k: int) -> float:
    """Percentage of queries whose gold table appears in the top K, 2 decimals."""
    if not rankings:
        raise ValueError("recall_at_k requires at least one ranking")
    if k <= 0:
        raise InvalidK(f"K must be positive, got {k}")
    hits = 0
    for ranking in rankings:
        if ranking.query_id not in gold:
            raise MissingGoldError(f"no gold table for query {ranking.query_id!r}")
        wanted = gold[ranking.query_id]
        if any(item.table_block_id == wanted for item in ranking.ranked[:k]):
            hits += 1
    return round2(Fraction(100 * hits, len(rankings)))


def latency_batches(durations: Sequence[float], n_batches: int, seed: int) -> LatencyReport:
    """Seeded shuffle + round-robin split into n_batches (sizes differ <= 1),
    with per-batch and overall mean/median seconds."""
    if not durations:
        raise ValueError("latency_batches requires at least one duration")
    if n_batches < 1 or n_batches > len(durations):
        raise InvalidBatchCount(f"n_batches must be in [1, {len(durations)}], got {n_batches}")
    shuffled = list(durations)
    random.Random(seed).shuffle(shuffled)
    batches = [shuffled[i::n_batches] for i in range(n_batches)]
    return LatencyReport(
        mean_s=statistics.fmean(durations),
        median_s=float(statistics.median(durations)),
        batch_means=tuple(statistics.fmean(batch) for batch in batches),
        batch_medians=tuple(float(statistics.median(batch)) for batch in batches),
        batch_sizes=tuple(len(batch) for batch in batches),
        n_batches=n_batches,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Report rendering
# ---------------------------------------------------------------------------


def render_table(headers: Sequence[str], rows: Sequence[Sequence[object]]) -> str:
    """Aligned plain-text table in the style of the result tables."""
    cells = [[str(v) for v in row] for row in rows]
    widths = [max(len(h), *(len(r[i]) for r in cells)) if cells else len(h) for i, h in enumerate(headers)]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)),
        "  ".join("-" * w for w in widths),
    ]
    lines.extend("  ".join(r[i].ljust(widths[i]) for i in range(len(headers))) for r in cells)
    return "\n".join(lines) + "\n"


def pair_report(c: ConfusionCounts, scheme: str = "tablescope") -> dict:
    p, r, f1 = prf(c)
    return {
        "scheme": scheme,
        "tp": c.tp,
        "fp": c.fp,
        "tn": c.tn,
        "fn": c.fn,
        "precision": p,
        "recall": r,
        "f1": f1,
    }


def render_pair_report(report: dict) -> str:
    headers = ["Scheme", "TP", "FP", "TN", "FN", "Precision", "Recall", "F1"]
    row = [
        report["scheme"],
        report["tp"],
        report["fp"],
        report["tn"],
        report["fn"],
        f"{report['precision']:.2f}",
        f"{report['recall']:.2f}",
        f"{report['f1']:.2f}",
    ]
    return render_table(headers, [row])


def doc_level_report(result: DocLevelResult, scheme: str = "tablescope") -> dict:
    return {
        "scheme": scheme,
        "all_correct": result.all_correct,
        "pos_correct": result.pos_correct,
        "neg_correct": result.neg_correct,
        "n_docs": result.n_docs,
    }


def render_doc_level_report(report: dict) -> str:
    headers = ["Scheme", "All Correct", "POS Correct", "NEG Correct", "#Sum"]
    row = [report["scheme"], report["all_correct"], report["pos_correct"], report["neg_correct"], report["n_docs"]]
    return render_table(headers, [row])


def retrieval_report(recalls: Mapping[int, float], scheme: str = "tablescope") -> dict:
    return {"scheme": scheme, "recall_at_k": {str(k): v for k, v in sorted(recalls.items())}}


def render_retrieval_report(report: dict) -> str:
    headers = ["Scheme", "Retrieval Recall@K"]
    rows = [
        [f"{report['scheme']}@K={k}", f"{v:.2f}"]
        for k, v in sorted(report["recall_at_k"].items(), key=lambda kv: int(kv[0]))
    ]
    return render_table(headers, rows)


def latency_report_dict(report: LatencyReport) -> dict:
    return {
        "mean_s": report.mean_s,
        "median_s": report.median_s,
        "n_batches": report.n_batches,
        "seed": report.seed,
        "batches": [
            {"batch_id": i, "size": report.batch_sizes[i], "mean_s": report.batch_means[i], "median_s": report.batch_medians[i]}
            for i in range(report.n_batches)
        ],
    }


def render_latency_report(report: LatencyReport, scheme: str = "tablescope") -> str:
    overall = render_table(
        ["Scheme", "Mean Time Cost (s)", "Median Time Cost (s)"],
        [[scheme, f"{report.mean_s:.4f}", f"{report.median_s:.4f}"]],
    )
    batches = render_table(
        ["Batch", "Size", "Mean (s)", "Median (s)"],
        [
            [i, report.batch_sizes[i], f"{report.batch_means[i]:.4f}", f"{report.batch_medians[i]:.4f}"]
            for i in range(report.n_batches)
        ],
    )
    return overall + "\n" + batches


def latency_plot_csv(report: LatencyReport) -> str:
    """Per-batch CSV (batch_id, mean_s, median_s) for external plotting."""
    lines = ["batch_id,mean_s,median_s"]
    for i in range(report.n_batches):
        lines.append(f"{i},{report.batch_means[i]!r},{report.batch_medians[i]!r}")
    return "\n".join(lines) + "\n"
