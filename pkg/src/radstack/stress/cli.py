"""Glue for `radstack stress`: spawn or attach to a server, seed it, run the
requested benchmarks, and emit CSV/plots."""

from __future__ import annotations

import tempfile
from pathlib import Path

import requests

from radstack.core.annotation import AnnotationTemplate, TemplateField
from radstack.stress.harness import run_ladder
from radstack.stress.ingest_bench import measure_ingestion
from radstack.stress.reporting import write_csv, write_plots
from radstack.stress.server import ServerProcess, seed_ladder_corpus, seed_streaming_series
from radstack.stress.streaming import measure_streaming

STRESS_PASSWORD = "stress-pw"


def _admin_token(base, password):
    r = requests.post(f"{base}/auth/login", json={"user_id": "admin", "password": password})
    r.raise_for_status()
    return r.json()["token"]


def prepare_stress_site(base, admin_token, user_count, project_id="stress-project",
                        protocol="stress"):
    """Protocol, project, and simulated-user accounts for a load run."""
    headers = {"Authorization": f"Bearer {admin_token}"}
    requests.post(f"{base}/protocols", headers=headers,
                  json={"id": protocol, "title": "Stress testing"}).raise_for_status()
    template = AnnotationTemplate(
        "stress-tpl",
        (TemplateField("finding", "region", ("synthetic",), required=False),),
    )
    requests.post(f"{base}/projects", headers=headers, json={
        "id": project_id, "protocol_id": protocol, "template": template.to_json_dict(),
    }).raise_for_status()
    for u in range(user_count):
        requests.post(f"{base}/users", headers=headers, json={
            "id": f"sim{u:05d}", "password": STRESS_PASSWORD,
            "roles": ["annotator"], "protocol_grants": [protocol],
        }).raise_for_status()
    return project_id


def run_stress(args):
    """Entry point for the CLI namespace produced by radstack.cli."""
    ladder = [int(n) for n in str(args.ladder).split(",") if n.strip()]
    if args.users is not None:
        ladder = [args.users]

    report = {}
    owned_server = None
    if args.server:
        base = args.server.rstrip("/")
        server_pid = None
        admin_password = "admin"
    else:
        data_dir = Path(args.data_dir or tempfile.mkdtemp(prefix="radstack-stress-"))
        series_ids, dims = seed_ladder_corpus(data_dir, seed=args.seed)
        if args.streaming:
            seed_streaming_series(data_dir, seed=args.seed)
        owned_server = ServerProcess(data_dir, admin_password="admin").start()
        base = owned_server.base_url
        server_pid = owned_server.pid
        admin_password = "admin"

    try:
        token = _admin_token(base, admin_password)
        headers = {"Authorization": f"Bearer {token}"}
        series = requests.get(f"{base}/series", headers=headers,
                              params={"limit": 5000}).json()
        ladder_series = [s for s in series if s["id"].startswith("ladder-")]
        if not ladder_series:
            raise SystemExit("no ladder corpus on the server; seed ladder-* series first")
        dims_by_series = {s["id"]: tuple(s["dims"]) for s in ladder_series}
        project_id = prepare_stress_site(base, token, max(ladder))

        from radstack.stress.harness import SimUserSpec, simulate_users

        simulate_users(base, SimUserSpec(count=min(800, max(ladder)),
                                         compression=args.compression, seed=args.seed + 1),
                       3.0, sorted(dims_by_series), dims_by_series,
                       STRESS_PASSWORD, project_id)  # warmup, not measured

        ladder_report = run_ladder(
            base, ladder, args.duration,
            sorted(dims_by_series), dims_by_series,
            STRESS_PASSWORD, project_id, server_pid,
            compression=args.compression, seed=args.seed,
        )
        report["ladder"] = ladder_report.summary()
        if args.csv_out:
            report["csv"] = str(write_csv(args.csv_out, ladder_report.rungs))
        if args.plot_out:
            report["plots"] = [str(p) for p in write_plots(args.plot_out, ladder_report.rungs)]

        if args.streaming:
            stream_report = measure_streaming(base, token, "stream-bench", trials=args.trials)
            report["streaming"] = stream_report.summary()

        if args.ingestion:
            corpus_dir = Path(tempfile.mkdtemp(prefix="radstack-ingest-"))
            from radstack.ingestion.synthetic import corpus_specs, write_corpus

            write_corpus(corpus_dir, corpus_specs(n_series=50, seed=args.seed,
                                                  n_slices=16, rows=256, cols=256),
                         seed=args.seed)
            ingest_report = measure_ingestion(corpus_dir, corpus_dir.parent / "ingest-work")
            report["ingestion"] = ingest_report.summary()
    finally:
        if owned_server is not None:
            owned_server.stop()
    return report
