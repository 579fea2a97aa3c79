"""Command-line surface: ingest, query, eval, cohesion.

One JSON config file drives every command; individual flags override its
values. Exit codes are stable for scripting: 0 success, 1 usage error,
2 data error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from collections import defaultdict
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import evalkit, hca, index, retriever
from .corpus import CorpusError, load_corpus
from .formatter import (
    ConversionError,
    HeadingPromotionConverter,
    convert_document,
    count_words,
    parse_markdown,
    plan_windows,
)

log = logging.getLogger(__name__)

COHESION_COLUMNS = [
    "record",
    "variant",
    "id",
    "group",
    "mean_pairwise_cosine",
    "centroid_norm",
    "count",
    "x",
    "y",
]


class UsageError(Exception):
    """Bad flags or config; maps to exit code 1."""


class DataError(Exception):
    """Bad corpus, index, or question-bank data; maps to exit code 2."""


@dataclass(frozen=True)
class AppConfig:
    corpus_dir: str = "corpus"
    index_dir: str = "index"
    window: int = 400
    padding: int = 50
    alpha: float = 0.5
    beta: float = 0.1
    gamma: float = 1.0
    top_k: int = 5
    k1: float = 1.2
    b: float = 0.75
    embedder: dict | None = None  # None means the default hashing embedder
    keyword_dict: str | None = None
    captioner: dict | None = None

    def retrieval(self) -> retriever.RetrievalConfig:
        try:
            return retriever.RetrievalConfig(
                alpha=self.alpha, beta=self.beta, top_k=self.top_k, gamma=self.gamma
            )
        except ValueError as exc:
            raise UsageError(str(exc)) from exc

    def embedder_spec(self) -> dict:
        return self.embedder or {"kind": "hash", "dim": index.DEFAULT_DIM}


def load_config(path: str | Path | None) -> AppConfig:
    if path is None:
        return AppConfig()
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    known = {f.name for f in fields(AppConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise UsageError(f"config {path} has unknown keys: {unknown}")
    return AppConfig(**data)


def _apply_overrides(cfg: AppConfig, args: argparse.Namespace) -> AppConfig:
    overrides = {}
    for name, attr in [
        ("corpus_dir", "corpus_dir"),
        ("index_dir", "index_dir"),
        ("window", "window"),
        ("padding", "padding"),
        ("alpha", "alpha"),
        ("beta", "beta"),
        ("gamma", "gamma"),
        ("top_k", "top_k"),
        ("k1", "k1"),
        ("b", "b"),
        ("keyword_dict", "keywords"),
    ]:
        value = getattr(args, attr, None)
        if value is not None:
            overrides[name] = value
    return replace(cfg, **overrides) if overrides else cfg


def _load_keyword_dict(path: str | None) -> list[str]:
    if not path:
        return []
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read keyword dictionary {path}: {exc}") from exc
    return [line.strip() for line in lines if line.strip()]


def _make_captioner(spec: dict | None):
    if not spec:
        return None
    if spec.get("kind") == "subprocess":
        from . import plugins

        return plugins.SubprocessCaptioner(list(spec["command"]))
    raise UsageError(f"unknown captioner kind: {spec.get('kind')!r}")


def run_ingest(cfg: AppConfig) -> dict:
    """Convert, augment, and index the corpus; returns the ingest report."""
    records = load_corpus(cfg.corpus_dir)
    if not records:
        log.warning("corpus %s holds no documents; writing empty indices", cfg.corpus_dir)

    if cfg.window < 1:
        raise UsageError(f"window must be >= 1, got {cfg.window}")
    if cfg.padding < 0:
        raise UsageError(f"padding must be >= 0, got {cfg.padding}")

    converter = HeadingPromotionConverter()
    captioner = _make_captioner(cfg.captioner)
    embedder = index.make_embedder(cfg.embedder_spec())
    warnings: list[str] = []
    all_segments = []
    try:
        for doc in records:
            plan = plan_windows(count_words(doc.text), cfg.window, cfg.padding)
            markdown = convert_document(doc.text, converter, plan)
            doc.attach_segments(parse_markdown(markdown, doc.title, warnings))
            hca.augment_document(doc, captioner=captioner, warnings=warnings)
            all_segments.extend(doc.segments)

        bundle = index.build_indices(
            all_segments,
            embedder,
            k1=cfg.k1,
            b=cfg.b,
            user_keywords=_load_keyword_dict(cfg.keyword_dict),
        )
        index.save_index(bundle, cfg.index_dir)
    finally:
        _close_quietly(embedder)
        _close_quietly(captioner)
    return {
        "documents": len(records),
        "segments": len(all_segments),
        "skipped": len(bundle.keys) - len(bundle.vectors.entries),
        "warnings": len(warnings),
        "warning_messages": warnings,
        "index_dir": str(cfg.index_dir),
    }


def _load_bundle(cfg: AppConfig) -> index.IndexBundle:
    try:
        return index.load_index(cfg.index_dir)
    except index.IndexFormatError as exc:
        raise DataError(f"{exc} (run 'hiret ingest' to build the index)") from exc


def _close_quietly(obj) -> None:
    close = getattr(obj, "close", None)
    if callable(close):
        close()


def run_query(cfg: AppConfig, query_text: str) -> dict:
    """Retrieve top-k segments; returns the serializable context bundle."""
    bundle = _load_bundle(cfg)
    embedder = index.make_embedder(bundle.embedder_spec)
    try:
        outcome = retriever.retrieve(
            query_text,
            bundle,
            cfg.retrieval(),
            user_keywords=set(bundle.user_keywords),
            embedder=embedder,
        )
    finally:
        _close_quietly(embedder)
    by_key = bundle.segment_by_key()
    results = []
    for row in outcome.top:
        seg = by_key.get(row.segment_key)
        results.append(
            {
                "rank": row.rank,
                "segment_key": row.segment_key,
                "fused_score": row.fused_score,
                "score_v": row.score_v,
                "score_r": row.score_r,
                "keyword_hits": row.keyword_hits,
                "metadata_path": seg.metadata_path if seg else [],
                "title": seg.title if seg else "",
                "kind": seg.kind if seg else "",
                "content": seg.content if seg else "",
            }
        )
    return {"query": query_text, "top_k": cfg.top_k, "results": results}


def run_eval(cfg: AppConfig, bank_path: str | Path) -> evalkit.EvalReport:
    """Evaluate a JSONL question bank against the persisted index."""
    bundle = _load_bundle(cfg)
    try:
        queries = evalkit.load_question_bank(bank_path)
    except evalkit.QuestionBankError as exc:
        raise DataError(str(exc)) from exc

    universe = set(bundle.keys)
    offenders = [
        eq.query_id for eq in queries if not eq.relevant_keys.issubset(universe)
    ]
    if offenders:
        raise DataError(
            f"question bank references unknown segment keys in queries: {offenders}"
        )

    rcfg = cfg.retrieval()
    base_keywords = set(bundle.user_keywords)
    embedder = index.make_embedder(bundle.embedder_spec)

    def rank_fn(eq: evalkit.EvalQuery):
        return retriever.retrieve(
            eq.query,
            bundle,
            rcfg,
            user_keywords=base_keywords | set(eq.user_keywords),
            embedder=embedder,
        ).ranking

    try:
        return evalkit.evaluate_dataset(queries, rank_fn, cfg.gamma)
    except (ValueError, evalkit.EvalError) as exc:
        raise DataError(str(exc)) from exc
    finally:
        _close_quietly(embedder)


def write_eval_csv(report: evalkit.EvalReport, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["query_id", "score"])
        for query_id, score in report.per_query_scores.items():
            writer.writerow([query_id, repr(score)])
        writer.writerow(["summary", repr(report.mean)])


def run_cohesion(cfg: AppConfig, grouping: str) -> list[list]:
    """Cohesion stats plus PCA coordinates, for augmented and raw texts."""
    if grouping not in ("by-document", "by-section-title"):
        raise UsageError(f"unknown grouping: {grouping!r}")
    bundle = _load_bundle(cfg)
    embedder = index.make_embedder(bundle.embedder_spec)

    def group_label(seg) -> str:
        return seg.doc_id if grouping == "by-document" else seg.title

    group_of = {seg.key: group_label(seg) for seg in bundle.segments}
    raw_vectors: dict[str, np.ndarray] = {}
    try:
        for seg in bundle.segments:
            vec = np.asarray(embedder.embed(seg.content), dtype=np.float64)
            if index.is_embeddable(vec):
                raw_vectors[seg.key] = vec / np.linalg.norm(vec)
            else:
                log.warning("segment %s has no embeddable raw content; skipped", seg.key)
    finally:
        _close_quietly(embedder)

    rows: list[list] = []
    variants = [
        ("augmented", {k: np.asarray(v, dtype=np.float64) for k, v in bundle.vectors.entries.items()}),
        ("raw", raw_vectors),
    ]
    for variant, vectors in variants:
        grouped: dict[str, list[np.ndarray]] = defaultdict(list)
        for key, vec in vectors.items():
            grouped[group_of[key]].append(vec / np.linalg.norm(vec))
        try:
            stats = evalkit.cohesion_stats(grouped)
            projection = evalkit.export_coordinates(vectors, group_of)
        except ValueError as exc:
            raise DataError(f"cohesion ({variant}): {exc}") from exc
        for group_id in sorted(stats):
            stat = stats[group_id]
            mpc = "" if stat.mean_pairwise_cosine is None else repr(stat.mean_pairwise_cosine)
            rows.append(
                ["stat", variant, group_id, group_id, mpc, repr(stat.centroid_norm),
                 stat.count, "", ""]
            )
        for key, x, y, group in projection.rows:
            rows.append(["point", variant, key, group, "", "", "", repr(x), repr(y)])
    return rows


def write_cohesion_csv(rows: list[list], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(COHESION_COLUMNS)
        writer.writerows(rows)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit code 1 for usage errors, not argparse's 2
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hiret", description="Hierarchical multi-route retrieval engine")
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--corpus-dir", dest="corpus_dir")
    parser.add_argument("--index-dir", dest="index_dir")
    parser.add_argument("--window", type=int)
    parser.add_argument("--padding", type=int)
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--beta", type=float)
    parser.add_argument("--gamma", type=float)
    parser.add_argument("--top-k", dest="top_k", type=int)
    parser.add_argument("--k1", type=float)
    parser.add_argument("--b", type=float)
    parser.add_argument("--keywords", help="user keyword dictionary (one per line)")

    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("ingest", help="convert, augment, and index the corpus")

    query = commands.add_parser("query", help="retrieve top-k segments")
    query.add_argument("text", help="query text")
    query.add_argument("--json", action="store_true", help="emit the context bundle as JSON")

    evaluate = commands.add_parser("eval", help="score a JSONL question bank")
    evaluate.add_argument("bank", help="question bank (JSONL)")
    evaluate.add_argument("--output", default="eval_report.csv", help="per-query CSV path")

    cohesion = commands.add_parser("cohesion", help="embedding cohesion statistics")
    cohesion.add_argument(
        "--grouping",
        choices=["by-document", "by-section-title"],
        default="by-document",
    )
    cohesion.add_argument("--output", default="cohesion_report.csv", help="CSV path")
    return parser


def _print_query_result(result: dict) -> None:
    if not result["results"]:
        print("no results (empty index)")
        return
    for row in result["results"]:
        path = " > ".join(row["metadata_path"])
        snippet = " ".join(row["content"].split())
        if len(snippet) > 160:
            snippet = snippet[:157] + "..."
        print(
            f"{row['rank']:>3}  fused={row['fused_score']:.6f}  "
            f"v={row['score_v']:.4f}  r={row['score_r']:.4f}  C={row['keyword_hits']}  "
            f"[{row['segment_key']}]"
        )
        print(f"     {path}")
        if snippet:
            print(f"     {snippet}")


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = _apply_overrides(load_config(args.config), args)

        if args.command == "ingest":
            report = run_ingest(cfg)
            print(
                f"ingested {report['documents']} documents, {report['segments']} segments "
                f"({report['skipped']} skipped, {report['warnings']} warnings) "
                f"-> {report['index_dir']}"
            )
            return 0

        if args.command == "query":
            result = run_query(cfg, args.text)
            if args.json:
                print(json.dumps(result, ensure_ascii=False, indent=2))
            else:
                _print_query_result(result)
            return 0

        if args.command == "eval":
            report = run_eval(cfg, args.bank)
            write_eval_csv(report, args.output)
            print(
                f"queries={len(report.per_query_scores)} mean={report.mean:.6f} "
                f"max={report.max:.6f} min={report.min:.6f} std={report.std:.6f} "
                f"(gamma={report.gamma}, N={report.corpus_size}) -> {args.output}"
            )
            return 0

        if args.command == "cohesion":
            rows = run_cohesion(cfg, args.grouping)
            write_cohesion_csv(rows, args.output)
            print(f"wrote {len(rows)} rows -> {args.output}")
            return 0

        raise UsageError(f"unknown command {args.command!r}")
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (CorpusError, ConversionError, DataError, index.IndexFormatError,
            retriever.InconsistentIndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
