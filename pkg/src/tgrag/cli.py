"""``tgrag`` command line.

Exit codes: 0 ok, 2 config or input error, 3 missing/invalid workdir state,
4 bad data file, 5 model provider failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import defaultdict
from pathlib import Path
from typing import Sequence

from . import benchgen, evalharness, kgraph, prompts
from .config import EngineConfig, load_config, make_embedder, make_llm
from .corpus import ALL_TIMES, ChunkStore, TimeLabel, chunk_corpus, ingest, load_chunks
from .errors import ConfigError, CorpusError, DataError, StateError, TGRAGError
from .estimator import TemporalGraphRAG

logger = logging.getLogger("tgrag")

EXIT_OK, EXIT_CONFIG, EXIT_STATE, EXIT_DATA, EXIT_PROVIDER = 0, 2, 3, 4, 5


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _emit_json(obj) -> None:
    sys.stdout.write(json.dumps(obj, ensure_ascii=False, indent=2) + "\n")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="INI file with [engine] and [providers] sections")
    p.add_argument("--workdir")
    p.add_argument("--corpus", dest="corpus_root")
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--t", type=int)
    p.add_argument("--budget", dest="graph_token_budget", type=int)
    p.add_argument("--chunk-size", dest="chunk_size_retrieval", type=int)
    p.add_argument("--max-in-flight", dest="max_in_flight", type=int, help="global cap on concurrent model calls")
    p.add_argument("--llm-provider", choices=["openai", "mock"])
    p.add_argument("--llm-script", help="JSON script for the mock chat provider")
    p.add_argument("--embed-provider", choices=["openai", "hash", "token-hash"])
    p.add_argument("--prompt-dir", help="directory of template overrides")
    return p


OVERRIDE_KEYS = (
    "workdir",
    "corpus_root",
    "n",
    "k",
    "t",
    "graph_token_budget",
    "chunk_size_retrieval",
    "max_in_flight",
    "llm_provider",
    "llm_script",
    "embed_provider",
    "prompt_dir",
    "tek_threshold",
)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tgrag", description="Temporal graph retrieval-augmented QA")
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = _common()

    sub.add_parser("index", parents=[common], help="build the temporal graph and indexes").add_argument(
        "--reuse-extractions", action="store_true", help="parse archived completions instead of re-calling the model"
    )

    q = sub.add_parser("query", parents=[common], help="answer a question")
    q.add_argument("question")
    q.add_argument("--trace", action="store_true", help="print the full per-stage trace as JSON")
    q.add_argument("--no-decompose", action="store_true", help="skip temporal decomposition")

    e = sub.add_parser("eval", parents=[common], help="judge answers over a QA dataset")
    e.add_argument("dataset")
    e.add_argument("--mode", choices=evalharness.MODES, default="tgrag")
    e.add_argument("--out", help="output directory (default <workdir>/eval-<mode>)")

    b = sub.add_parser("build-dataset", parents=[common], help="generate temporal QA pairs from the corpus")
    b.add_argument("--classes", default=",".join(benchgen.TIME_CLASSES))
    b.add_argument("--tek-threshold", dest="tek_threshold", type=float)
    b.add_argument("--max-per-class", type=int)
    b.add_argument("--out", help="dataset path (default <workdir>/dataset.jsonl)")

    i = sub.add_parser("inspect", parents=[common], help="dump a subgraph as JSON")
    i.add_argument("--time", default=ALL_TIMES.raw, help="time label, or ALL")

    s = sub.add_parser("tek-sweep", parents=[common], help="count evolution chains per threshold")
    s.add_argument("--thresholds", default="0.5,0.6,0.7,0.75,0.8,0.9")
    return parser


def _config(args: argparse.Namespace) -> EngineConfig:
    overrides = {k: getattr(args, k, None) for k in OVERRIDE_KEYS}
    cfg = load_config(args.config, overrides)
    prompts.override_dir = Path(cfg.prompt_dir) if cfg.prompt_dir else None
    return cfg


def _engine(cfg: EngineConfig, llm=None, embedder=None) -> TemporalGraphRAG:
    workdir = Path(cfg.workdir)
    return TemporalGraphRAG(
        llm=llm if llm is not None else make_llm(cfg),
        embedder=embedder if embedder is not None else make_embedder(cfg, workdir / "embed_cache"),
        chunk_size=cfg.chunk_size_retrieval,
        chunk_overlap=cfg.chunk_overlap,
        n=cfg.n,
        k=cfg.k,
        t=cfg.t,
        graph_token_budget=cfg.graph_token_budget,
        max_subqueries=cfg.max_subqueries,
        literal_two_stage=cfg.literal_two_stage,
        node_aggregation=cfg.node_aggregation,
        max_workers=cfg.max_in_flight,
        answer_temperature=cfg.answer_temperature,
        archive_dir=str(workdir / "extractions"),
    )


def _require_corpus(cfg: EngineConfig) -> Path:
    if not cfg.corpus_root:
        raise ConfigError("no corpus root given (--corpus or corpus_root in config)")
    root = Path(cfg.corpus_root)
    if not root.is_dir():
        raise CorpusError(f"corpus root not found: {root}")
    return root


def cmd_index(cfg: EngineConfig, args: argparse.Namespace) -> int:
    root = _require_corpus(cfg)
    engine = _engine(cfg)
    engine.replay_extractions = args.reuse_extractions
    engine.fit(root)
    engine.save(cfg.workdir)
    for label, s in engine.graph_.stats().items():
        print(f"{label}: entities={s['entities']} relations={s['relations']} knowledge={s['knowledge']}")
    report = engine.extraction_report_
    print(f"chunks={report['chunks']} malformed_lines={report['malformed_lines']}")
    em = engine.embedder
    if hasattr(em, "hits"):
        print(f"embedding cache: hits={em.hits} misses={em.misses}")
    return EXIT_OK


def _load_engine(cfg: EngineConfig) -> TemporalGraphRAG:
    workdir = Path(cfg.workdir)
    if not (workdir / "graph.json").is_file():
        raise StateError(f"no built graph in {workdir}; run 'tgrag index' first")
    return _engine(cfg).load(workdir)


def cmd_query(cfg: EngineConfig, args: argparse.Namespace) -> int:
    if not args.question.strip():
        raise ConfigError("question must be non-empty")
    engine = _load_engine(cfg)
    trace: dict = {}
    final = engine.answer(args.question, use_tqd=not args.no_decompose, trace=trace)
    with open(Path(cfg.workdir) / "answers.jsonl", "a", encoding="utf-8") as fh:
        fh.write(json.dumps(final.to_record(), ensure_ascii=False) + "\n")
    if args.trace:
        _emit_json(trace)
    else:
        print(final.answer)
    return EXIT_OK


def _chunks_for_eval(cfg: EngineConfig) -> ChunkStore:
    path = Path(cfg.workdir) / "chunks.jsonl"
    if path.is_file():
        return ChunkStore.from_chunks(load_chunks(path))
    documents = ingest(_require_corpus(cfg))
    return ChunkStore.from_chunks(chunk_corpus(documents, cfg.chunk_size_retrieval, cfg.chunk_overlap))


def cmd_eval(cfg: EngineConfig, args: argparse.Namespace) -> int:
    dataset = benchgen.load_dataset(args.dataset)
    if not dataset:
        raise DataError(f"dataset {args.dataset} is empty")
    llm = make_llm(cfg)
    if args.mode == "tgrag":
        engine = _load_engine(cfg)
        answerer = engine.answer
    elif args.mode == "norag":
        answerer = evalharness.norag_answerer(llm, cfg.answer_temperature)
    else:
        em = make_embedder(cfg, Path(cfg.workdir) / "embed_cache")
        answerer = evalharness.vanilla_answerer(_chunks_for_eval(cfg), llm, em, cfg.t, cfg.answer_temperature)
    judge_temperature = 0.0 if cfg.llm_provider == "mock" else cfg.judge_temperature
    report, verdicts = evalharness.evaluate(
        dataset, answerer, llm, cfg.judge_runs, judge_temperature, cfg.max_in_flight
    )
    out = Path(args.out) if args.out else Path(cfg.workdir) / f"eval-{args.mode}"
    evalharness.save_results(report, verdicts, out)
    print(report.table())
    if report.failures:
        print(f"failures: {', '.join(report.failures)}", file=sys.stderr)
    print(f"wrote {out / 'report.json'} and {out / 'verdicts.jsonl'}")
    return EXIT_OK


def _parse_classes(raw: str) -> list[str]:
    classes = [c.strip() for c in raw.split(",") if c.strip()]
    bad = [c for c in classes if c not in benchgen.TIME_CLASSES]
    if bad or not classes:
        raise ConfigError(f"unknown time class(es) {bad}; choose from {', '.join(benchgen.TIME_CLASSES)}")
    return classes


def _dataset_chunks(cfg: EngineConfig):
    documents = ingest(_require_corpus(cfg))
    return chunk_corpus(documents, cfg.chunk_size_dataset)


def cmd_build_dataset(cfg: EngineConfig, args: argparse.Namespace) -> int:
    classes = _parse_classes(args.classes)
    chunks = _dataset_chunks(cfg)
    build = benchgen.build_dataset(
        chunks,
        make_llm(cfg),
        make_embedder(cfg, Path(cfg.workdir) / "embed_cache"),
        classes,
        cfg.tek_threshold,
        args.max_per_class,
    )
    out = Path(args.out) if args.out else Path(cfg.workdir) / "dataset.jsonl"
    benchgen.save_dataset(build.items, out)
    benchgen.write_review(build.items, out.with_suffix(".review.md"))
    per_class = defaultdict(int)
    for it in build.items:
        per_class[it.time_class] += 1
    for cls in classes:
        print(f"{cls}: {per_class[cls]}")
    if (benchgen.DUAL in classes or benchgen.MULTI in classes) and not build.chains:
        print(f"warning: no evolution chains at threshold {cfg.tek_threshold}", file=sys.stderr)
    dropped = {k: v for k, v in sorted(build.counts.items()) if k.startswith("rejected")}
    if dropped:
        print("dropped: " + ", ".join(f"{k}={v}" for k, v in dropped.items()))
    for failure in build.failures:
        print(f"failed: {failure}", file=sys.stderr)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_inspect(cfg: EngineConfig, args: argparse.Namespace) -> int:
    path = Path(cfg.workdir) / "graph.json"
    if not path.is_file():
        raise StateError(f"no built graph in {cfg.workdir}")
    try:
        label = TimeLabel.parse(args.time)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    sub = kgraph.subgraph_at(kgraph.load(path), label)
    _emit_json(
        {
            "time_label": sub.time_label.raw,
            "entities": [
                {
                    "name": name,
                    "entity_type": e.entity_type,
                    "knowledge": [{"text": u.text, "time_label": u.time_label.raw} for u in e.knowledge],
                }
                for name, e in sorted(sub.entities.items())
            ],
            "relations": [
                {
                    "source": r.source,
                    "target": r.target,
                    "strength": r.strength(),
                    "knowledge": [{"text": u.text, "time_label": u.time_label.raw} for u in r.knowledge],
                }
                for _, r in sorted(sub.relations.items())
            ],
        }
    )
    return EXIT_OK


def cmd_tek_sweep(cfg: EngineConfig, args: argparse.Namespace) -> int:
    try:
        thresholds = [float(x) for x in args.thresholds.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --thresholds: {exc}") from exc
    llm = make_llm(cfg)
    points = []
    for c in _dataset_chunks(cfg):
        points.extend(benchgen.extract_keypoints(benchgen.summarize_chunk(c, llm), c.time_label, llm, c.chunk_id))
    benchgen.embed_keypoints(points, make_embedder(cfg, Path(cfg.workdir) / "embed_cache"))
    by_year: dict = defaultdict(list)
    for p in points:
        by_year[p.time_label].append(p)
    if len(by_year) < 2:
        raise ConfigError("threshold sweep needs key points from at least two years")
    counts = benchgen.tek_sweep(by_year, thresholds)
    _emit_json({f"{th:g}": n for th, n in counts.items()})
    return EXIT_OK


COMMANDS = {
    "index": cmd_index,
    "query": cmd_query,
    "eval": cmd_eval,
    "build-dataset": cmd_build_dataset,
    "inspect": cmd_inspect,
    "tek-sweep": cmd_tek_sweep,
}


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        print(f"tgrag: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        return COMMANDS[args.command](cfg, args)
    except TGRAGError as exc:
        stage = getattr(exc, "stage", None)
        tag = f" [{stage}]" if stage else ""
        print(f"tgrag {args.command}{tag}: {exc}", file=sys.stderr)
        return exc.exit_code if exc.exit_code in (2, 3, 4, 5) else 1
    except ValueError as exc:
        print(f"tgrag {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
