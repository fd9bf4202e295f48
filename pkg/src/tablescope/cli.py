"""Command-line entry point for batch use and CI.

Exit codes: 0 success, 1 validation failure, 2 scorer/transport failure,
3 usage error. Stdout carries data (canonical JSON unless noted), stderr
diagnostics. Randomized subcommands require --seed so reruns are
byte-identical.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from . import __version__
from .association import (
    ScorerConfig,
    ScorerError,
    ScorerKind,
    build_llm_prompt,
    make_pair_scorer,
)
from .dataset import (
    build_training_pairs,
    samples_from_jsonl,
    samples_to_jsonl,
    triplets_from_jsonl,
    split_train_test,
)
from .metrics import (
    confusion,
    doc_level,
    doc_level_report,
    latency_batches,
    latency_plot_csv,
    latency_report_dict,
    pair_report,
    recall_at_k,
    render_doc_level_report,
    render_latency_report,
    render_pair_report,
    render_retrieval_report,
    retrieval_report,
)
from .model import (
    BlockType,
    IngestError,
    TEXTUAL_KINDS,
    canonical_json_bytes,
    canonical_jsonl_line,
    canonicalize,
    corpus_stats,
    parse_document_json,
    select_blocks,
)
from .parsing import export_parse, parse_semantics
from .retrieval import (
    EmptyQueryError,
    InvalidK,
    Query,
    export_ranking,
    load_queries,
    ranking_from_dict,
    ranking_to_dict,
    retrieve,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # exit 3, not argparse's default 2
        raise UsageError(message)


def _read(path: str) -> bytes:
    if path == "-":
        return sys.stdin.buffer.read()
    return Path(path).read_bytes()


def _write_out(data: bytes, out: str | None) -> None:
    if out:
        Path(out).write_bytes(data)
    else:
        sys.stdout.buffer.write(data)


def _load_doc(path: str):
    return parse_document_json(_read(path))


def _scorer_args(sub: argparse.ArgumentParser, with_theta: bool = True) -> None:
    sub.add_argument("--scorer", choices=[k.value for k in ScorerKind], default="heuristic")
    sub.add_argument("--endpoint", default=os.environ.get("TABLESCOPE_ENDPOINT"))
    sub.add_argument("--lexical-weight", type=float, default=0.9)
    sub.add_argument("--replies", help="file of LLM replies (one per line) for --scorer llm-prompt")
    sub.add_argument("--jobs", type=int, default=1, help="max concurrent remote batches")
    sub.add_argument("--batch-size", type=int, default=32)
    if with_theta:
        sub.add_argument("--theta", type=float, default=0.5)


def _make_config(args, theta: float | None = None) -> ScorerConfig:
    kind = ScorerKind(args.scorer)
    if kind is ScorerKind.REMOTE and not args.endpoint:
        raise UsageError("--scorer remote needs --endpoint or TABLESCOPE_ENDPOINT")
    if kind is ScorerKind.LLM_BASELINE and not args.replies:
        raise UsageError("--scorer llm-prompt needs --replies (see the llm-prompts subcommand)")
    return ScorerConfig(
        theta=theta if theta is not None else getattr(args, "theta", 0.5),
        scorer_kind=kind,
        lexical_weight=args.lexical_weight,
        remote_endpoint=args.endpoint,
        batch_size=args.batch_size,
        max_in_flight=max(1, args.jobs),
    )


def _load_replies(args) -> list[str] | None:
    if args.replies is None:
        return None
    return Path(args.replies).read_text(encoding="utf-8").splitlines()


def build_parser() -> _Parser:
    parser = _Parser(prog="tablescope", description=__doc__)
    parser.add_argument("--version", action="version", version=f"tablescope {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate block JSON and emit canonical form")
    p.add_argument("--doc", required=True)
    p.add_argument("--out")

    p = sub.add_parser("validate", help="validate block JSON; exit 1 on violation")
    p.add_argument("--doc", required=True, nargs="+")

    p = sub.add_parser("stats", help="corpus statistics over document files")
    p.add_argument("--doc", required=True, nargs="+")
    p.add_argument("--out")

    p = sub.add_parser("parse", help="table-centric semantic parse of one document")
    p.add_argument("--doc", required=True)
    p.add_argument("--page-window", type=int, default=None)
    p.add_argument("--out")
    _scorer_args(p)

    p = sub.add_parser("retrieve", help="rank tables of a document against a query")
    p.add_argument("--doc", required=True)
    p.add_argument("--query", help="query text (or use --queries)")
    p.add_argument("--queries", help="JSON Lines query file")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--out")
    _scorer_args(p)

    p = sub.add_parser("build-training", help="balanced training pairs from triplets")
    p.add_argument("--doc", required=True, nargs="+")
    p.add_argument("--annotations", required=True, help="consensus triplets JSONL")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out")

    p = sub.add_parser("split", help="seeded train/test split of training pairs")
    p.add_argument("--pairs", required=True)
    p.add_argument("--ratio", default="7:3")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--train-out", required=True)
    p.add_argument("--test-out", required=True)

    p = sub.add_parser("evaluate-pairs", help="pair-level confusion and P/R/F1")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--scheme", default="tablescope")
    p.add_argument("--text", action="store_true", help="aligned text table instead of JSON")
    p.add_argument("--out")

    p = sub.add_parser("evaluate-docs", help="document-level All/POS/NEG Correct")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--scheme", default="tablescope")
    p.add_argument("--text", action="store_true")
    p.add_argument("--out")

    p = sub.add_parser("evaluate-retrieval", help="Recall@K over exported rankings")
    p.add_argument("--rankings", required=True, help="JSON Lines, one ranking per line")
    p.add_argument("--queries", required=True, help="JSON Lines with gold_table_id")
    p.add_argument("--k", type=int, nargs="+", default=[1, 2, 3])
    p.add_argument("--scheme", default="tablescope")
    p.add_argument("--text", action="store_true")
    p.add_argument("--out")

    p = sub.add_parser("bench", help="latency statistics over batched durations")
    p.add_argument("--durations", help="JSON array of per-pair seconds")
    p.add_argument("--measure-doc", help="measure per-pair scorer latency on a document")
    p.add_argument("--batches", type=int, default=10)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--emit-plot-data", help="write per-batch CSV here")
    p.add_argument("--text", action="store_true")
    p.add_argument("--out")
    _scorer_args(p, with_theta=False)

    p = sub.add_parser("serve", help="run the annotation/parsing HTTP service")
    p.add_argument("--store", help="event-log path (omit for in-memory)")
    p.add_argument("--pages-dir", help="sidecar page-image directory")
    p.add_argument("--ui-dir", help="static annotation UI bundle")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8400)

    p = sub.add_parser("llm-prompts", help="print baseline prompts for all pairs of a document")
    p.add_argument("--doc", required=True)
    p.add_argument("--out")
    return parser


# ---------------------------------------------------------------------------
# Subcommand bodies
# ---------------------------------------------------------------------------


def _cmd_ingest(args) -> int:
    doc = _load_doc(args.doc)
    _write_out(canonicalize(doc), args.out)
    return 0


def _cmd_validate(args) -> int:
    failures = 0
    for path in args.doc:
        try:
            doc = parse_document_json(_read(path))
            print(f"{path}: OK ({len(doc.pages)} pages)", file=sys.stderr)
        except IngestError as exc:
            failures += 1
            print(f"{path}: {type(exc).__name__}: {exc}", file=sys.stderr)
    return 1 if failures else 0


def _cmd_stats(args) -> int:
    docs = [_load_doc(path) for path in args.doc]
    stats = corpus_stats(docs)
    payload = {
        "per_source": {
            source: {
                "n_pdf": c.n_pdf,
                "n_page": c.n_page,
                "n_table_block": c.n_table_block,
                "n_text_block": c.n_text_block,
            }
            for source, c in sorted(stats.per_source.items())
        },
        "total": {
            "n_pdf": stats.total.n_pdf,
            "n_page": stats.total.n_page,
            "n_table_block": stats.total.n_table_block,
            "n_text_block": stats.total.n_text_block,
        },
    }
    _write_out(canonical_json_bytes(payload), args.out)
    return 0


def _cmd_parse(args) -> int:
    doc = _load_doc(args.doc)
    cfg = _make_config(args)
    scorer = make_pair_scorer(cfg, _load_replies(args))
    parsed = parse_semantics(doc, scorer, cfg, page_window=args.page_window)
    _write_out(export_parse(parsed), args.out)
    return 0


def _cmd_retrieve(args) -> int:
    if bool(args.query) == bool(args.queries):
        raise UsageError("provide exactly one of --query or --queries")
    doc = _load_doc(args.doc)
    cfg = _make_config(args)
    scorer = make_pair_scorer(cfg, _load_replies(args))
    parsed = parse_semantics(doc, scorer, cfg)
    if args.query:
        queries = [Query(query_id="q", text=args.query, doc_id=doc.doc_id)]
    else:
        queries = load_queries(Path(args.queries).read_text(encoding="utf-8").splitlines())
    if len(queries) == 1:
        _write_out(export_ranking(retrieve(parsed, doc, queries[0], args.k, scorer, cfg)), args.out)
        return 0
    lines = [
        canonical_jsonl_line(ranking_to_dict(retrieve(parsed, doc, query, args.k, scorer, cfg)))
        for query in queries
    ]
    _write_out(("\n".join(lines) + "\n").encode("utf-8"), args.out)
    return 0


def _cmd_build_training(args) -> int:
    docs = {d.doc_id: d for d in (_load_doc(path) for path in args.doc)}
    triplets = triplets_from_jsonl(Path(args.annotations).read_text(encoding="utf-8").splitlines())
    by_doc: dict[str, list] = {}
    for triplet in triplets:
        by_doc.setdefault(triplet.doc_id, []).append(triplet)
    samples = []
    for doc_id in sorted(by_doc):
        if doc_id not in docs:
            raise IngestError(f"annotations reference unknown document {doc_id!r}")
        samples.extend(build_training_pairs(docs[doc_id], by_doc[doc_id], seed=args.seed))
    _write_out(samples_to_jsonl(samples).encode("utf-8"), args.out)
    return 0


def _cmd_split(args) -> int:
    try:
        r1, r2 = (int(v) for v in args.ratio.split(":"))
    except ValueError:
        raise UsageError(f"--ratio must look like 7:3, got {args.ratio!r}") from None
    samples = samples_from_jsonl(Path(args.pairs).read_text(encoding="utf-8").splitlines())
    train, test = split_train_test(samples, (r1, r2), seed=args.seed)
    Path(args.train_out).write_text(samples_to_jsonl(train), encoding="utf-8")
    Path(args.test_out).write_text(samples_to_jsonl(test), encoding="utf-8")
    print(f"train={len(train)} test={len(test)}", file=sys.stderr)
    return 0


def _load_labeled(path: str) -> dict[tuple[str, str, str], int]:
    out = {}
    for i, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines()):
        line = line.strip()
        if not line:
            continue
        try:
            data = json.loads(line)
            key = (data["doc_id"], data["table_block_id"], data["text_block_id"])
            out[key] = int(data["label"])
        except (json.JSONDecodeError, KeyError) as exc:
            raise IngestError(f"{path}:{i + 1}: {exc}") from None
    return out


def _aligned_labels(pred_path: str, gold_path: str):
    pred = _load_labeled(pred_path)
    gold = _load_labeled(gold_path)
    missing = sorted(set(gold) - set(pred))
    if missing:
        raise IngestError(f"predictions missing {len(missing)} gold pairs, e.g. {missing[0]}")
    keys = sorted(gold)
    return keys, [pred[k] for k in keys], [gold[k] for k in keys]


def _cmd_evaluate_pairs(args) -> int:
    _, pred, gold = _aligned_labels(args.pred, args.gold)
    report = pair_report(confusion(pred, gold), scheme=args.scheme)
    if args.text:
        _write_out(render_pair_report(report).encode("utf-8"), args.out)
    else:
        _write_out(canonical_json_bytes(report), args.out)
    return 0


def _cmd_evaluate_docs(args) -> int:
    keys, pred, gold = _aligned_labels(args.pred, args.gold)
    groups: dict[str, list[tuple[int, int]]] = {}
    for key, p, g in zip(keys, pred, gold):
        groups.setdefault(key[0], []).append((p, g))
    report = doc_level_report(doc_level(groups), scheme=args.scheme)
    if args.text:
        _write_out(render_doc_level_report(report).encode("utf-8"), args.out)
    else:
        _write_out(canonical_json_bytes(report), args.out)
    return 0


def _cmd_evaluate_retrieval(args) -> int:
    rankings = []
    for line in Path(args.rankings).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line:
            rankings.append(ranking_from_dict(json.loads(line)))
    queries = load_queries(Path(args.queries).read_text(encoding="utf-8").splitlines())
    gold = {q.query_id: q.gold_table_id for q in queries if q.gold_table_id}
    recalls = {k: recall_at_k(rankings, gold, k) for k in args.k}
    report = retrieval_report(recalls, scheme=args.scheme)
    if args.text:
        _write_out(render_retrieval_report(report).encode("utf-8"), args.out)
    else:
        _write_out(canonical_json_bytes(report), args.out)
    return 0


def _cmd_bench(args) -> int:
    if bool(args.durations) == bool(args.measure_doc):
        raise UsageError("provide exactly one of --durations or --measure-doc")
    if args.durations:
        durations = [float(v) for v in json.loads(_read(args.durations))]
    else:
        # wall-clock measurement of per-pair scorer invocations (nondeterministic)
        doc = _load_doc(args.measure_doc)
        cfg = _make_config(args)
        scorer = make_pair_scorer(cfg, _load_replies(args))
        durations = []
        for table in select_blocks(doc, {BlockType.TABLE}):
            for text in select_blocks(doc, TEXTUAL_KINDS):
                start = time.perf_counter()
                scorer.score_pairs(doc, [(table, text)])
                durations.append(time.perf_counter() - start)
        if not durations:
            raise IngestError("document yields no (table, text) pairs to measure")
    report = latency_batches(durations, n_batches=args.batches, seed=args.seed)
    if args.emit_plot_data:
        Path(args.emit_plot_data).write_text(latency_plot_csv(report), encoding="utf-8")
    if args.text:
        _write_out(render_latency_report(report).encode("utf-8"), args.out)
    else:
        _write_out(canonical_json_bytes(latency_report_dict(report)), args.out)
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(store_path=args.store, pages_dir=args.pages_dir, ui_dir=args.ui_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def _cmd_llm_prompts(args) -> int:
    doc = _load_doc(args.doc)
    chunks = []
    for table in select_blocks(doc, {BlockType.TABLE}):
        for text in select_blocks(doc, TEXTUAL_KINDS):
            if not table.text.strip() or not text.text.strip():
                continue
            header = f"### pair {table.block_id} {text.block_id}\n"
            chunks.append(header + build_llm_prompt(table.text, text.text) + "\n")
    _write_out("\n".join(chunks).encode("utf-8"), args.out)
    return 0


_COMMANDS = {
    "ingest": _cmd_ingest,
    "validate": _cmd_validate,
    "stats": _cmd_stats,
    "parse": _cmd_parse,
    "retrieve": _cmd_retrieve,
    "build-training": _cmd_build_training,
    "split": _cmd_split,
    "evaluate-pairs": _cmd_evaluate_pairs,
    "evaluate-docs": _cmd_evaluate_docs,
    "evaluate-retrieval": _cmd_evaluate_retrieval,
    "bench": _cmd_bench,
    "serve": _cmd_serve,
    "llm-prompts": _cmd_llm_prompts,
}


def run(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 3
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 3
    except (ScorerError,) as exc:
        print(f"scorer error: {exc}", file=sys.stderr)
        return 2
    except (IngestError, EmptyQueryError, InvalidK, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
