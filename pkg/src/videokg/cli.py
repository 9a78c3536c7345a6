"""Command-line surface: ingest fixture bundles, build graphs, query, serve."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, RunConfig
from .graph import video_to_kg
from .kb import load_kb
from .lexicon import load_lexicon
from .retrieval import NoKnownTermsError, retrieve
from .store import GraphStore


def _load_config(args) -> RunConfig:
    config = RunConfig.load(args.config) if args.config else RunConfig()
    if getattr(args, "store", None):
        config.store = Path(args.store)
    if getattr(args, "stub_manifest", None):
        config.stub_manifest = Path(args.stub_manifest)
    if getattr(args, "lexicon", None):
        config.lexicon = Path(args.lexicon)
    return config


def cmd_ingest(args) -> int:
    from .recipe import ingest_bundle

    config = _load_config(args)
    result = ingest_bundle(args.bundle, config)
    print(f"kb written: {result.kb_path}")
    print(
        f"windows={result.windows} keyframes={result.keyframes} triplets={result.triplets}"
    )
    if result.failures:
        for failure in result.failures:
            print(f"stage-failure: {failure.stage} on {failure.window_id}: {failure.error}",
                  file=sys.stderr)
        return 1
    return 0


def _open_lexicon(config: RunConfig, store: GraphStore):
    if config.lexicon is None:
        raise ConfigError("a lexicon path is required (config.lexicon or --lexicon)")
    lexicon = load_lexicon(config.lexicon)
    if store.virtual_registry.exists():
        lexicon.load_virtual_registry(store.virtual_registry)
    return lexicon


def cmd_build_kg(args) -> int:
    config = _load_config(args)
    store = GraphStore(config.store)
    lexicon = _open_lexicon(config, store)
    kb = load_kb(args.kb)
    graph = video_to_kg(kb, lexicon)
    version = store.put(graph)
    print(
        f"graph for {kb.video_id}: v{version} "
        f"({len(graph.nodes)} nodes, {len(graph.edges)} edges)"
    )
    return 0


def cmd_query(args) -> int:
    config = _load_config(args)
    store = GraphStore(config.store)
    lexicon = _open_lexicon(config, store)
    snapshot = store.snapshot()
    try:
        hits = retrieve(args.q, snapshot, lexicon, top_k=args.top_k)
    except NoKnownTermsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if not hits:
        print("no results")
        return 0
    print(f"{'video':<16} {'score':>6} {'spec':>5}  matched / top frames")
    for hit in hits:
        frames = ", ".join(f"{f.frame_index}@{f.timestamp:g}s" for f in hit.frames[:4])
        print(
            f"{hit.video_id:<16} {hit.score:>6.3f} {hit.specificity:>5}  "
            f"{', '.join(hit.matched)} | {frames}"
        )
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app_from_config

    config = _load_config(args)
    app = create_app_from_config(config)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="videokg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", help="run the pipeline over a video bundle")
    p_ingest.add_argument("bundle", help="bundle directory (frames/ + transcript.json)")
    p_ingest.add_argument("--config", help="run config YAML")
    p_ingest.add_argument("--store", help="store root directory")
    p_ingest.add_argument("--stub-manifest", help="stub adapter manifest JSON")
    p_ingest.set_defaults(fn=cmd_ingest)

    p_build = sub.add_parser("build-kg", help="convert a KB file into a knowledge graph")
    p_build.add_argument("kb", help="path to a KB JSON document")
    p_build.add_argument("--config", help="run config YAML")
    p_build.add_argument("--store", help="store root directory")
    p_build.add_argument("--lexicon", help="lexicon path (WordNet dir or fixture file)")
    p_build.set_defaults(fn=cmd_build_kg)

    p_query = sub.add_parser("query", help="rank stored videos against a text query")
    p_query.add_argument("q", help="query text")
    p_query.add_argument("--config", help="run config YAML")
    p_query.add_argument("--store", help="store root directory")
    p_query.add_argument("--lexicon", help="lexicon path")
    p_query.add_argument("--top-k", type=int, default=10)
    p_query.set_defaults(fn=cmd_query)

    p_serve = sub.add_parser("serve", help="start the annotation/query service")
    p_serve.add_argument("--config", required=True, help="run config YAML")
    p_serve.add_argument("--store", help="store root directory")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.set_defaults(fn=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
