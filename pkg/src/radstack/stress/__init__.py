from radstack.stress.harness import (
    LadderReport,
    MetricsReport,
    SimUserSpec,
    plan_user_schedule,
    run_ladder,
    simulate_users,
)
from radstack.stress.ingest_bench import IngestionReport, measure_ingestion
from radstack.stress.server import ServerProcess, seed_streaming_series
from radstack.stress.streaming import StreamingReport, measure_streaming

__all__ = [
    "SimUserSpec",
    "MetricsReport",
    "LadderReport",
    "simulate_users",
    "run_ladder",
    "plan_user_schedule",
    "measure_streaming",
    "StreamingReport",
    "measure_ingestion",
    "IngestionReport",
    "ServerProcess",
    "seed_streaming_series",
]
