"""Command-line entry points: serve the platform, generate corpora, stress it.

    radstack serve   --data-dir ./data --bind 127.0.0.1:8077 ...
    radstack corpus  --out ./inbox --series 50 --slices 12 --rows 64 --cols 64
    radstack stress  --server http://127.0.0.1:8077 --users 100 ...
"""

from __future__ import annotations

import argparse
import json
import sys


def _add_serve(sub):
    p = sub.add_parser("serve", help="run the platform server")
    p.add_argument("--data-dir", default="./data")
    p.add_argument("--bind", default="127.0.0.1:8077", help="host:port")
    p.add_argument("--workers-min", type=int, default=1)
    p.add_argument("--workers-max", type=int, default=4)
    p.add_argument("--inclusion-list", default=None,
                   help="JSON file with the anonymization inclusion list")
    p.add_argument("--maturity-threshold", type=float, default=0.7)
    p.add_argument("--drift-alpha", type=float, default=0.01)
    p.add_argument("--admin-password", default="admin")
    p.add_argument("--no-training-loops", action="store_true")
    p.add_argument("--log-level", default="warning")


def _add_corpus(sub):
    p = sub.add_parser("corpus", help="generate a synthetic DICOM corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--series", type=int, default=50)
    p.add_argument("--slices", type=int, default=12)
    p.add_argument("--rows", type=int, default=64)
    p.add_argument("--cols", type=int, default=64)
    p.add_argument("--content", choices=["noise", "sphere"], default="noise")
    p.add_argument("--seed", type=int, default=7)


def _add_stress(sub):
    p = sub.add_parser("stress", help="simulated-user load, streaming, ingestion benchmarks")
    p.add_argument("--server", default=None, help="base URL of a running server; "
                   "omitted: a disposable server is spawned")
    p.add_argument("--data-dir", default=None, help="data dir when spawning a server")
    p.add_argument("--users", type=int, default=None, help="single rung instead of the ladder")
    p.add_argument("--ladder", default="1,10,100,1000", help="comma-separated user counts")
    p.add_argument("--compression", type=float, default=1000.0,
                   help="think-time compression factor")
    p.add_argument("--duration", type=float, default=20.0, help="seconds per rung")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--csv-out", default="stress.csv")
    p.add_argument("--plot-out", default=None, help="PNG path prefix for plots")
    p.add_argument("--streaming", action="store_true", help="run the streaming benchmark")
    p.add_argument("--ingestion", action="store_true", help="run the ingestion benchmark")
    p.add_argument("--trials", type=int, default=20)


def main(argv=None):
    parser = argparse.ArgumentParser(prog="radstack")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_serve(sub)
    _add_corpus(sub)
    _add_stress(sub)
    args = parser.parse_args(argv)

    if args.command == "serve":
        return _serve(args)
    if args.command == "corpus":
        return _corpus(args)
    if args.command == "stress":
        return _stress(args)
    return 2


def _serve(args):
    import logging

    import uvicorn

    from radstack.service.app import create_app
    from radstack.service.runtime import Platform, PlatformConfig

    logging.basicConfig(level=args.log_level.upper())
    host, _, port = args.bind.partition(":")
    config = PlatformConfig(
        data_dir=args.data_dir,
        host=host or "127.0.0.1",
        port=int(port or 8077),
        workers_min=args.workers_min,
        workers_max=args.workers_max,
        inclusion_list_file=args.inclusion_list,
        maturity_threshold=args.maturity_threshold,
        drift_alpha=args.drift_alpha,
        admin_password=args.admin_password,
        start_training_loops=not args.no_training_loops,
    )
    platform = Platform(config).start()
    app = create_app(platform)
    try:
        # generous keep-alive: clients hold one connection across think time
        uvicorn.run(app, host=config.host, port=config.port,
                    log_level=args.log_level, access_log=False,
                    timeout_keep_alive=120)
    finally:
        platform.stop()
    return 0


def _corpus(args):
    from radstack.ingestion.synthetic import corpus_specs, write_corpus

    specs = corpus_specs(
        n_series=args.series,
        seed=args.seed,
        n_slices=args.slices,
        rows=args.rows,
        cols=args.cols,
        content=args.content,
    )
    generated = write_corpus(args.out, specs, seed=args.seed)
    total_files = sum(len(g.files) for g in generated)
    print(f"wrote {len(generated)} series ({total_files} slices) to {args.out}")
    return 0


def _stress(args):
    from radstack.stress.cli import run_stress

    report = run_stress(args)
    print(json.dumps(report, indent=2, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
