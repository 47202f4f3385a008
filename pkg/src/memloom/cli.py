"""Operator command line: ingest, consolidate, build-cards, query, eval,
stats, export-card, plot-clusters."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Optional

from .config import load_config
from .engine import MemoryEngine
from .errors import MemloomError
from .search import SearchMode


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="memloom", description="Narrative conversational memory engine")
    parser.add_argument("--config", help="path to an INI config file")
    parser.add_argument("--data-dir", help="engine data directory (overrides config)")
    parser.add_argument("--seed", type=int, help="clustering seed (overrides config)")
    parser.add_argument("--json", action="store_true", help="machine-readable output")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate and register a conversation file")
    p.add_argument("conversation_file")

    p = sub.add_parser("consolidate", help="build memory for a registered conversation")
    p.add_argument("conversation_id")

    p = sub.add_parser("build-cards", help="re-cluster stored traces and rebuild cards")
    p.add_argument("conversation_id")

    p = sub.add_parser("query", help="answer a question from consolidated memory")
    p.add_argument("conversation_id")
    p.add_argument("question")
    p.add_argument("--mode", default="full", choices=[m.value for m in SearchMode])
    p.add_argument("--k", type=int, default=None, help="episodic retrieval depth")
    p.add_argument("--user", default=None, help="user hint for card selection")

    p = sub.add_parser("eval", help="score a QA file against the pipeline")
    p.add_argument("conversation_id")
    p.add_argument("qa_file")
    p.add_argument("--mode", default="full", choices=[m.value for m in SearchMode])
    p.add_argument("--score-mode", default="offline_match", choices=["offline_match", "llm_judge"])
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--out", default=None, help="write the report JSON here")

    p = sub.add_parser("stats", help="print consolidation statistics")
    p.add_argument("conversation_id")

    p = sub.add_parser("export-card", help="print one user's memory card")
    p.add_argument("conversation_id")
    p.add_argument("user_id")
    p.add_argument("--format", default="markdown", choices=["json", "markdown"])

    p = sub.add_parser("plot-clusters", help="emit clustering diagnostics JSON and a figure")
    p.add_argument("conversation_id")
    p.add_argument("--out", default=None, help="output PNG path")

    return parser


def _make_engine(args: argparse.Namespace) -> MemoryEngine:
    flag_overrides: dict[str, dict[str, str]] = {"engine": {}, "backend": {}}
    if args.data_dir:
        flag_overrides["engine"]["data_dir"] = args.data_dir
    if args.seed is not None:
        flag_overrides["engine"]["seed"] = str(args.seed)
    config = load_config(path=args.config, flag_overrides=flag_overrides)
    return MemoryEngine(config)


def _emit(args: argparse.Namespace, payload: dict, human: str) -> None:
    if args.json:
        print(json.dumps(payload, indent=2, default=str))
    else:
        print(human)


def main(argv: Optional[list[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        with _make_engine(args) as engine:
            return _dispatch(args, engine)
    except MemloomError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _dispatch(args: argparse.Namespace, engine: MemoryEngine) -> int:
    if args.command == "ingest":
        info = engine.ingest(args.conversation_file)
        note = " (replaced existing version)" if info["replaced"] else ""
        _emit(args, info, f"ingested 1 conversation, {info['sessions']} sessions, "
                          f"{info['utterances']} utterances{note}")
        return 0

    if args.command == "consolidate":
        stats = engine.consolidate(args.conversation_id)
        _emit(
            args,
            asdict(stats),
            f"consolidated {args.conversation_id}: {stats.n_episodes} episodes, "
            f"{stats.n_experiences} experiences, {stats.n_threads} threads, "
            f"discard rate {stats.discard_rate:.2%}",
        )
        return 0

    if args.command == "build-cards":
        versions = engine.build_cards(args.conversation_id)
        _emit(args, versions, "rebuilt cards: " + ", ".join(f"{u} v{v}" for u, v in versions.items()))
        return 0

    if args.command == "query":
        answer, bundle = engine.query(
            args.conversation_id,
            args.question,
            mode=SearchMode(args.mode),
            k=args.k,
            user_hint=args.user,
        )
        payload = {
            "answer": answer.text,
            "cited_episode_ids": list(answer.cited_episode_ids),
            "cited_thread_ids": list(answer.cited_thread_ids),
            "bundle": {
                "episodic_hits": len(bundle.episodic_hits),
                "fact_hits": len(bundle.fact_hits),
                "selected_cards": bundle.selected_cards,
                "missing_thread_ids": bundle.missing_thread_ids,
            },
        }
        human = answer.text
        if answer.cited_episode_ids:
            human += "\n\nepisodes: " + ", ".join(answer.cited_episode_ids)
        if answer.cited_thread_ids:
            human += "\nthreads: " + ", ".join(answer.cited_thread_ids)
        _emit(args, payload, human)
        return 0

    if args.command == "eval":
        report = engine.evaluate(
            args.conversation_id,
            args.qa_file,
            score_mode=args.score_mode,
            search_mode=SearchMode(args.mode),
            k=args.k,
        )
        payload = report.to_dict()
        if args.out:
            Path(args.out).write_text(json.dumps(payload, indent=2), encoding="utf-8")
        lines = [f"{key}: {value:.4f}" for key, value in payload.items() if key != "detail"]
        _emit(args, payload, "\n".join(lines))
        return 0

    if args.command == "stats":
        stats = engine.stats(args.conversation_id)
        _emit(args, stats, "\n".join(f"{key}: {value}" for key, value in stats.items()))
        return 0

    if args.command == "export-card":
        print(engine.export_card(args.conversation_id, args.user_id, args.format))
        return 0

    if args.command == "plot-clusters":
        from .plotting import plot_cluster_diagnostics

        diagnostics = engine.diagnostics(args.conversation_id)
        out = args.out or str(engine.data_dir / "plots" / f"{args.conversation_id}.png")
        path = plot_cluster_diagnostics(diagnostics, out)
        _emit(args, {"figure": str(path), "users": sorted(diagnostics)}, f"wrote {path}")
        return 0

    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    raise SystemExit(main())
