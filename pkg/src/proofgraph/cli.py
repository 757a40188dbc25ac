"""Command-line client for the proofgraph service.

Every subcommand except ``serve`` talks HTTP to the service layer. With
no ``--server`` the app runs in-process, so single-machine use needs no
running daemon; pointing ``--server`` at a remote instance sends the
same requests over the network (paths then refer to the server's disk).

Exit codes: 0 success, 1 the proof attempt or a bench problem errored,
2 configuration or usage trouble.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Any

import httpx

from .config import ServiceConfig
from .errors import ProofGraphError

logger = logging.getLogger(__name__)


def _make_client(args: argparse.Namespace) -> httpx.Client:
    if args.server:
        return httpx.Client(base_url=args.server.rstrip("/"), timeout=600.0)
    from fastapi.testclient import TestClient

    from .service.app import create_app

    cfg = ServiceConfig.from_file(args.config) if args.config else ServiceConfig()
    return TestClient(create_app(cfg), raise_server_exceptions=False)


def _check(resp: httpx.Response) -> dict[str, Any]:
    if resp.status_code >= 400:
        try:
            detail = resp.json().get("detail", resp.text)
        except ValueError:
            detail = resp.text
        print(f"error: {detail}", file=sys.stderr)
        raise SystemExit(2)
    return resp.json()


def _config_payload(args: argparse.Namespace) -> dict[str, Any]:
    payload = {
        "method": args.method,
        "attempts": args.attempts,
        "max_depth": args.max_depth,
        "top_k": args.top_k,
        "temperature": args.temperature,
        "top_p": args.top_p,
        "max_tokens": args.max_tokens,
        "sampling_seed": args.sampling_seed,
        "seed": args.seed,
        "n_candidates": args.n_candidates,
        "beam_width": args.beam_width,
        "search_depth": args.search_depth,
    }
    return payload


def _add_run_config_args(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("run configuration")
    group.add_argument("--method", choices=["base", "rag", "graph"], default="graph")
    group.add_argument("--attempts", type=int, default=3, help="max proof attempts per problem")
    group.add_argument("--max-depth", type=int, default=2, help="max graph expansion depth")
    group.add_argument("--top-k", type=int, default=5, help="retrieval seed count")
    group.add_argument("--temperature", type=float, default=0.0)
    group.add_argument("--top-p", type=float, default=1.0)
    group.add_argument("--max-tokens", type=int, default=2048)
    group.add_argument("--sampling-seed", type=int, default=None)
    group.add_argument("--seed", type=int, default=None, help="retrieval shuffle seed")
    group.add_argument("--n-candidates", type=int, default=5)
    group.add_argument("--beam-width", type=int, default=4)
    group.add_argument("--search-depth", type=int, default=2)


def _add_problem_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--dataset", help="problem JSONL file")
    parser.add_argument("--name", help="problem name inside --dataset")
    parser.add_argument("--problem-file", help="JSON file holding a single problem object")
    parser.add_argument("--graph-dir", help="graph directory for retrieval methods")
    parser.add_argument("--mock-dir", help="directory with scripted chat/verifier responses")


def _problem_payload(args: argparse.Namespace) -> dict[str, Any]:
    payload: dict[str, Any] = {
        "config": _config_payload(args),
        "graph_dir": args.graph_dir,
        "mock_dir": args.mock_dir,
    }
    if args.problem_file:
        with open(args.problem_file, "r", encoding="utf-8") as fh:
            payload["problem"] = json.load(fh)
    else:
        payload["dataset_path"] = args.dataset
        payload["problem_name"] = args.name
    return payload


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service.app import create_app

    cfg = ServiceConfig.from_file(args.config) if args.config else ServiceConfig()
    uvicorn.run(create_app(cfg), host=args.host, port=args.port)
    return 0


def _cmd_ingest(args: argparse.Namespace) -> int:
    with _make_client(args) as client:
        body = _check(client.post("/ingest", json={"dump_path": args.dump, "out_dir": args.out_dir}))
    print(f"ingested {body['nodes']} nodes, {body['edges']} edges -> {body['out_dir']}")
    for key, value in sorted(body["stats"].items()):
        print(f"  {key}: {value}")
    return 0


def _cmd_embed(args: argparse.Namespace) -> int:
    payload = {
        "graph_dir": args.graph_dir,
        "provider": args.provider,
        "dimension": args.dimension,
        "mock_dir": args.mock_dir,
    }
    with _make_client(args) as client:
        body = _check(client.post("/embed", json=payload))
    print(f"embedded {body['embedded']} nodes at dimension {body['dimension']}")
    return 0


def _cmd_stats(args: argparse.Namespace) -> int:
    with _make_client(args) as client:
        body = _check(client.get("/graph/stats", params={"graph_dir": args.graph_dir}))
    print(json.dumps(body, indent=2, sort_keys=True))
    return 0


def _cmd_query(args: argparse.Namespace) -> int:
    payload = {
        "graph_dir": args.graph_dir,
        "text": args.text,
        "k": args.top_k,
        "depth": args.depth,
        "seed": args.seed,
        "subset_size": args.subset_size,
        "provider": args.provider,
        "mock_dir": args.mock_dir,
    }
    with _make_client(args) as client:
        body = _check(client.post("/query", json=payload))
    for entry in body["entries"]:
        print(f"{entry['score']:+.4f}  hop {entry['hop']}  [{entry['node_id']}] {entry['title']}")
    print(f"-- {len(body['entries'])} nodes, ~{body['token_estimate']} tokens of context")
    if args.show_context:
        print(body["rendered"])
    return 0


def _cmd_prove(args: argparse.Namespace) -> int:
    payload = _problem_payload(args)
    with _make_client(args) as client:
        body = _check(client.post("/prove", json=payload))
    outcome = body["outcome"]
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(outcome, fh, indent=2)
            fh.write("\n")
    print(f"{outcome['problem_name']}: {outcome['status']}", end="")
    if outcome["status"] == "verified":
        print(f" on attempt {outcome['winning_attempt']}")
    elif outcome["status"] == "failed":
        print(f" ({outcome['failure_class']})")
    else:
        print(f" ({outcome['error_message']})")
    for attempt in outcome["attempts"]:
        verification = attempt["verification"]
        print(
            f"  attempt {attempt['attempt_index']}: depth {attempt['context_depth_used']}, "
            f"{len(attempt['context_node_ids'])} context nodes, {verification['status']}"
        )
    return 0 if outcome["status"] == "verified" else 1


def _cmd_bench(args: argparse.Namespace) -> int:
    payload = {
        "dataset_path": args.dataset,
        "out_dir": args.out_dir,
        "config": _config_payload(args),
        "graph_dir": args.graph_dir,
        "mock_dir": args.mock_dir,
        "workers": args.workers,
        "format_hint": args.format_hint,
        "limit": args.limit,
    }
    with _make_client(args) as client:
        body = _check(client.post("/bench", json=payload))
    print(f"run {body['run_id']}: {body['n_problems']} problems, accuracy {body['accuracy']:.4f}")
    by_attempt = ", ".join(f"{v:.4f}" for v in body["accuracy_by_attempt"])
    print(f"  by attempt: [{by_attempt}]")
    for label, count in sorted(body["failure_histogram"].items()):
        print(f"  {label}: {count}")
    print(f"  reports in {body['out_dir']}")
    return 1 if body["failure_histogram"].get("error") else 0


def _cmd_tree_search(args: argparse.Namespace) -> int:
    payload = _problem_payload(args)
    with _make_client(args) as client:
        body = _check(client.post("/tree-search", json=payload))
    best = body["best"]
    state = "verified" if best["verified"] else "unverified"
    print(f"best candidate #{best['index']}: score {best['judge_score']}, {state}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(body, fh, indent=2)
            fh.write("\n")
    if best["formal_code"]:
        print(best["formal_code"])
    return 0 if best["verified"] else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="proofgraph",
        description="Knowledge-graph retrieval and prover orchestration for Lean 4.",
    )
    parser.add_argument("--server", help="base URL of a running service; default runs in-process")
    parser.add_argument("--config", help="service config JSON file")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("ingest", help="build a graph directory from a wiki XML dump")
    p.add_argument("dump", help="XML dump path, plain or gzipped")
    p.add_argument("out_dir", help="graph directory to write")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("embed", help="attach node embeddings to a graph directory")
    p.add_argument("graph_dir")
    p.add_argument("--provider", choices=["hash", "mock", "http"], default="hash")
    p.add_argument("--dimension", type=int, default=16)
    p.add_argument("--mock-dir")
    p.set_defaults(func=_cmd_embed)

    p = sub.add_parser("stats", help="show node and edge counts for a graph directory")
    p.add_argument("graph_dir")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("query", help="retrieve graph context for a text query")
    p.add_argument("graph_dir")
    p.add_argument("text")
    p.add_argument("-k", "--top-k", type=int, default=5)
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--subset-size", type=int, default=None)
    p.add_argument("--provider", choices=["hash", "mock", "http"], default="hash")
    p.add_argument("--mock-dir")
    p.add_argument("--show-context", action="store_true")
    p.set_defaults(func=_cmd_query)

    p = sub.add_parser("prove", help="run the proof loop on one problem")
    _add_problem_args(p)
    _add_run_config_args(p)
    p.add_argument("--out", help="write the outcome JSON here")
    p.set_defaults(func=_cmd_prove)

    p = sub.add_parser("bench", help="run a dataset and emit reports")
    p.add_argument("dataset")
    p.add_argument("out_dir")
    p.add_argument("--graph-dir")
    p.add_argument("--mock-dir")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--format-hint", choices=["minif2f", "proofnet", "random_subset"])
    p.add_argument("--limit", type=int, default=None, help="run only the first N problems")
    _add_run_config_args(p)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("tree-search", help="beam-search candidates for one problem")
    _add_problem_args(p)
    _add_run_config_args(p)
    p.add_argument("--out", help="write the best candidate and trace JSON here")
    p.set_defaults(func=_cmd_tree_search)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    if args.command in ("prove", "tree-search") and not args.problem_file and not (args.dataset and args.name):
        print("error: provide --problem-file or both --dataset and --name", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (httpx.HTTPError, ProofGraphError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
