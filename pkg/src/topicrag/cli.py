"""Command-line entry point.

Subcommands wire the modules together and stay logic-free:

    fit-topics   cluster a corpus into topics and save the model
    ingest       embed a corpus and populate a persistent store
    query        answer one question (atrag | onestep | multistep)
    eval         judge a sampled QA set and write report.json/rows.jsonl
    topics       print the store's normalized topic densities
    anova        one-way ANOVA over the per-example scores of eval runs

Exit codes: 0 success, 1 runtime error, 2 usage error.
"""

import argparse
import sys
from pathlib import Path

from . import ingestion, judge_eval, pipeline
from . import topic_model as tm
from .config import EngineConfig
from .errors import EngineError
from .jsonio import canonical_pretty, read_jsonl
from .vector_store import VectorStore, open_store


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="topicrag")
    parser.add_argument("--config", help="engine config JSON file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit-topics", help="fit a topic model over a corpus")
    p.add_argument("--corpus", required=True, help="corpus JSONL file")
    p.add_argument("--k", type=int, default=16, help="number of topics (default 16)")
    p.add_argument("--seed", type=int, default=0, help="clustering seed (default 0)")
    p.add_argument("--out", required=True, help="output model directory")
    p.add_argument("--outlier-threshold", type=float, default=tm.DEFAULT_OUTLIER_THRESHOLD,
                   help="cosine threshold below which queries are outliers (default 0.0)")
    p.add_argument("--softmax-temperature", type=float, default=tm.DEFAULT_SOFTMAX_TEMPERATURE,
                   help="softmax temperature for topic probabilities (default 0.1)")

    p = sub.add_parser("ingest", help="embed a corpus into a persistent store")
    p.add_argument("--corpus", required=True)
    p.add_argument("--store", required=True, help="store directory (created if missing)")
    p.add_argument("--topic-model", required=True, help="fitted model directory")
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--strict", action="store_true", help="abort on malformed corpus lines")

    p = sub.add_parser("query", help="answer a single question")
    p.add_argument("--store", required=True)
    p.add_argument("--topic-model", help="required for --mode atrag")
    p.add_argument("--question", required=True)
    p.add_argument("--mode", choices=("atrag", "onestep", "multistep"), default="atrag")
    p.add_argument("--trace-dir", help="write the run trace JSON here")
    p.add_argument("--retrieval-k", type=int, help="documents per retrieval (default 4)")
    p.add_argument("--max-iterations", type=int, help="iteration cap (default 3)")

    p = sub.add_parser("eval", help="run a system over sampled QA pairs and judge it")
    p.add_argument("--qa", required=True, help="QA JSONL file")
    p.add_argument("--store", required=True)
    p.add_argument("--topic-model")
    p.add_argument("--mode", choices=("atrag", "onestep", "multistep"), default="atrag")
    p.add_argument("--sample-n", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory for report.json + rows.jsonl")
    p.add_argument("--retrieval-k", type=int)
    p.add_argument("--max-iterations", type=int)

    p = sub.add_parser("topics", help="print normalized topic densities of a store")
    p.add_argument("--store", required=True)
    p.add_argument("--topic-model", help="include top terms per topic")
    p.add_argument("--top", type=int, default=5, help="number of topics to print (default 5)")

    p = sub.add_parser("anova", help="one-way ANOVA over eval runs' per-example overall scores")
    p.add_argument("--reports", nargs="+", required=True,
                   help="eval output dirs or report.json paths")

    p = sub.add_parser("normalize", help="flatten a benchmark dataset into corpus + QA JSONL")
    p.add_argument("--raw", required=True)
    p.add_argument("--format", choices=ingestion.DATASET_FORMATS, required=True)
    p.add_argument("--out-corpus", required=True)
    p.add_argument("--out-qa", required=True)

    return parser


def _open_store_checked(path: str, embedder) -> VectorStore:
    return open_store(path, expected_dimension=embedder.dimension)


def _make_system(mode: str, store, model, embedder, llm, pipe_cfg):
    if mode == "atrag":
        if model is None:
            raise EngineError("--topic-model is required for mode atrag")
        return lambda q: pipeline.answer_query(q, store, model, embedder, llm, pipe_cfg).final_answer
    if mode == "onestep":
        return lambda q: pipeline.one_step_rag(q, store, embedder, llm, pipe_cfg).final_answer
    return lambda q: pipeline.multi_step_rag(q, store, embedder, llm, pipe_cfg).final_answer


def _cmd_fit_topics(cfg: EngineConfig, args) -> int:
    embedder = cfg.build_embedder()
    records, skipped = ingestion.read_corpus(args.corpus)
    texts = [ingestion.embedding_text(r.title, r.text) for r in records]
    if not texts:
        raise EngineError(f"{args.corpus} holds no usable records")
    vectors = embedder.embed_batch(texts)
    model = tm.fit(
        vectors,
        texts,
        k=args.k,
        seed=args.seed,
        outlier_threshold=args.outlier_threshold,
        softmax_temperature=args.softmax_temperature,
    )
    tm.save(model, args.out)
    print(f"fit {model.k} topics over {len(texts)} documents "
          f"({skipped} skipped) -> {args.out}")
    for warning in model.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    return 0


def _cmd_ingest(cfg: EngineConfig, args) -> int:
    embedder = cfg.build_embedder()
    model = tm.load(args.topic_model)
    fingerprint = tm.fingerprint(model)
    store_dir = Path(args.store)
    if (store_dir / "manifest.json").exists():
        store = _open_store_checked(args.store, embedder)
        if store.topic_model_fingerprint and store.topic_model_fingerprint != fingerprint:
            raise EngineError("store was built with a different topic model")
    else:
        store = VectorStore(embedder.dimension, topic_model_fingerprint=fingerprint)
    report = ingestion.ingest_corpus(
        args.corpus, store, model, embedder, batch_size=args.batch_size, strict=args.strict
    )
    store.persist(args.store)
    print(
        f"ingested {report.docs_stored}/{report.docs_in} docs in {report.batches} batches "
        f"({report.outlier_count} outliers, {report.skipped} skipped) -> {args.store}"
    )
    return 0


def _cmd_query(cfg: EngineConfig, args) -> int:
    embedder = cfg.build_embedder()
    llm = cfg.build_llm("llm")
    store = _open_store_checked(args.store, embedder)
    pipe_cfg = cfg.build_pipeline_config(
        retrieval_k=args.retrieval_k, max_iterations=args.max_iterations
    )
    if args.mode == "atrag":
        if not args.topic_model:
            raise EngineError("--topic-model is required for mode atrag")
        state = pipeline.answer_query(
            args.question, store, tm.load(args.topic_model), embedder, llm, pipe_cfg
        )
    elif args.mode == "onestep":
        state = pipeline.one_step_rag(args.question, store, embedder, llm, pipe_cfg)
    else:
        state = pipeline.multi_step_rag(args.question, store, embedder, llm, pipe_cfg)
    if args.trace_dir:
        pipeline.write_trace(state, args.trace_dir)
    print(state.final_answer)
    return 0


def _cmd_eval(cfg: EngineConfig, args) -> int:
    embedder = cfg.build_embedder()
    llm = cfg.build_llm("llm")
    judge = cfg.build_llm("judge")
    store = _open_store_checked(args.store, embedder)
    model = tm.load(args.topic_model) if args.topic_model else None
    pipe_cfg = cfg.build_pipeline_config(
        retrieval_k=args.retrieval_k, max_iterations=args.max_iterations
    )
    system = _make_system(args.mode, store, model, embedder, llm, pipe_cfg)
    report = judge_eval.run_eval(
        args.qa,
        system,
        judge,
        sample_n=args.sample_n,
        seed=args.seed,
        system_label=args.mode,
        out_dir=args.out,
    )
    print(canonical_pretty(report.aggregates()), end="")
    if report.failures * 10 > report.sample_size:
        print(f"error: {report.failures}/{report.sample_size} examples failed", file=sys.stderr)
        return 1
    return 0


def _cmd_topics(cfg: EngineConfig, args) -> int:
    embedder = cfg.build_embedder()
    store = _open_store_checked(args.store, embedder)
    assignments = [
        tm.TopicAssignment(doc.topic_id, doc.topic_probability) for doc in store.documents()
    ]
    distribution = tm.topic_distribution(assignments)
    model = tm.load(args.topic_model) if args.topic_model else None
    ranked = sorted(distribution.items(), key=lambda kv: (-kv[1], kv[0]))
    for topic_id, density in ranked[: args.top]:
        line = f"topic={topic_id}\tdensity={density!r}"
        if model is not None and topic_id >= 0:
            terms = ",".join(term for term, _ in tm.top_terms(model, topic_id, 5))
            line += f"\tterms={terms}"
        elif topic_id == -1:
            line += "\t(outliers)"
        print(line)
    return 0


def _cmd_anova(args) -> int:
    groups = []
    for report_path in args.reports:
        path = Path(report_path)
        rows_path = (path if path.is_dir() else path.parent) / "rows.jsonl"
        scores = [row["overall"] for _, row in read_jsonl(rows_path) if "overall" in row]
        if len(scores) < 2:
            raise EngineError(f"{rows_path} holds fewer than 2 scored rows")
        groups.append(scores)
    result = judge_eval.anova_oneway(groups)
    print(
        canonical_pretty(
            {
                "F": result.F,
                "df_between": result.df_between,
                "df_within": result.df_within,
                "p_value": result.p_value,
            }
        ),
        end="",
    )
    return 0


def _cmd_normalize(args) -> int:
    counts = ingestion.normalize_dataset(args.raw, args.format, args.out_corpus, args.out_qa)
    print(
        f"normalized {counts['questions']} questions, {counts['corpus_records']} corpus records "
        f"({counts['empty_context_questions']} with empty context)"
    )
    return 0


def run(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = EngineConfig.from_file(args.config)
        cfg.apply()
        if args.command == "fit-topics":
            return _cmd_fit_topics(cfg, args)
        if args.command == "ingest":
            return _cmd_ingest(cfg, args)
        if args.command == "query":
            return _cmd_query(cfg, args)
        if args.command == "eval":
            return _cmd_eval(cfg, args)
        if args.command == "topics":
            return _cmd_topics(cfg, args)
        if args.command == "anova":
            return _cmd_anova(args)
        if args.command == "normalize":
            return _cmd_normalize(args)
        parser.error(f"unknown command {args.command!r}")
    except (EngineError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
