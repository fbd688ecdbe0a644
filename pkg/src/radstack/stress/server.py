"""Disposable server subprocess for benchmarks: isolates CPU/memory
measurement from the load generator's own footprint."""

from __future__ import annotations

import os
import socket
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import requests

from radstack.core.volume import VolumeTensor
from radstack.service import register_series
from radstack.storage import Storage


def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


class ServerProcess:
    def __init__(self, data_dir, port=None, admin_password="admin", workers_max=4,
                 training_loops=False, log_level="warning"):
        self.data_dir = Path(data_dir)
        self.port = port or free_port()
        self.admin_password = admin_password
        self.workers_max = workers_max
        self.training_loops = training_loops
        self.log_level = log_level
        self.proc = None

    @property
    def base_url(self):
        return f"http://127.0.0.1:{self.port}"

    @property
    def pid(self):
        return self.proc.pid if self.proc else None

    def start(self, timeout=30.0):
        src_root = Path(__file__).resolve().parents[2]  # .../src
        env = dict(os.environ)
        env["PYTHONPATH"] = f"{src_root}{os.pathsep}{env.get('PYTHONPATH', '')}"
        # bound allocator arena growth under many threads: memory should
        # stay flat as concurrency rises
        env.setdefault("MALLOC_ARENA_MAX", "2")
        args = [
            sys.executable, "-m", "radstack.cli", "serve",
            "--data-dir", str(self.data_dir),
            "--bind", f"127.0.0.1:{self.port}",
            "--workers-max", str(self.workers_max),
            "--admin-password", self.admin_password,
            "--log-level", self.log_level,
        ]
        if not self.training_loops:
            args.append("--no-training-loops")
        self.proc = subprocess.Popen(args, env=env,
                                     stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL)
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            if self.proc.poll() is not None:
                raise RuntimeError(f"server exited early with code {self.proc.returncode}")
            try:
                if requests.get(f"{self.base_url}/healthz", timeout=1).ok:
                    return self
            except requests.ConnectionError:
                time.sleep(0.1)
        raise TimeoutError("server did not become healthy in time")

    def stop(self):
        if self.proc is None:
            return
        self.proc.terminate()
        try:
            self.proc.wait(timeout=10)
        except subprocess.TimeoutExpired:
            self.proc.kill()
            self.proc.wait()
        self.proc = None

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


def seed_streaming_series(data_dir, series_id="stream-bench", nz=200, ny=512, nx=512,
                          protocol="stress", seed=7):
    """Store one large series directly into a data directory (pre-server)."""
    rng = np.random.default_rng(seed)
    base_slice = rng.integers(-1024, 3072, size=(ny, nx), dtype=np.int16)
    z_offsets = (np.arange(nz, dtype=np.int16) % 7)[:, None, None]
    voxels = (base_slice[None, :, :] + z_offsets).astype(np.int16)
    volume = VolumeTensor(voxels, (3.0, 0.7, 0.7))
    storage = Storage(data_dir)
    try:
        register_series(
            storage, series_id, volume,
            safe={"Modality": "CT", "protocol_id": protocol},
        )
    finally:
        storage.close()
    return series_id, volume.dims


def seed_ladder_corpus(data_dir, n_series=10, dims=(8, 32, 32), protocol="stress", seed=7):
    """Small series for the simulated-user ladder: streams stay cheap while
    request mechanics are exercised end to end."""
    rng = np.random.default_rng(seed)
    storage = Storage(data_dir)
    series = []
    try:
        for i in range(n_series):
            sid = f"ladder-{i:04d}"
            vox = rng.integers(-500, 500, size=dims, dtype=np.int16)
            register_series(
                storage, sid, VolumeTensor(vox, (3.0, 1.0, 1.0)),
                safe={"Modality": "CT", "protocol_id": protocol},
            )
            series.append(sid)
    finally:
        storage.close()
    return series, dims
