"""Simulated-user load harness.

Each simulated user is an independent asyncio task with its own HTTP
session: it logs in, selects the active project, then loops -- open a random
series (streamed in full), upload two random voxel masks with the source
series' matrix rank, think for a uniform 5-10 minutes divided by the
compression factor. The schedule is precomputed from the seed, so a run's
action sequence is reproducible.

The server lives in a separate process; a sampler thread reads its CPU and
memory at 1 Hz via psutil while requests are timed on the client side.
"""

from __future__ import annotations

import asyncio
import base64
import threading
import time
from dataclasses import dataclass, field

import aiohttp
import numpy as np
import psutil

from radstack.core.mask import VoxelMask

THINK_MIN_S = 5 * 60.0
THINK_MAX_S = 10 * 60.0


@dataclass(frozen=True)
class SimUserSpec:
    count: int = 10
    compression: float = 1000.0
    masks_per_interval: int = 2
    seed: int = 7

    def __post_init__(self):
        if self.compression <= 0:
            raise ValueError("compression factor must be positive")


@dataclass
class MetricsReport:
    users: int
    duration_s: float
    compression: float
    seed: int
    samples: list = field(default_factory=list)  # (ts, user, action, latency_s, status)
    server_samples: list = field(default_factory=list)  # (ts, cpu%, rss, swap)
    failed: int = 0
    errors: list = field(default_factory=list)  # (action, status_or_exception)

    def percentiles(self, action=None):
        lats = [s[3] for s in self.samples if action is None or s[2] == action]
        if not lats:
            return {"count": 0}
        arr = np.array(lats)
        return {
            "count": len(arr),
            "p50": float(np.percentile(arr, 50)),
            "p95": float(np.percentile(arr, 95)),
            "p99": float(np.percentile(arr, 99)),
            "mean": float(arr.mean()),
            "max": float(arr.max()),
        }

    def action_types(self):
        return sorted({s[2] for s in self.samples})

    def steady_cpu(self):
        """Mean CPU over samples after a 25% warmup window."""
        vals = [s[1] for s in self.server_samples]
        if not vals:
            return 0.0
        start = max(1, len(vals) // 4)
        return float(np.mean(vals[start:]))

    def steady_rss(self):
        vals = [s[2] for s in self.server_samples]
        if not vals:
            return 0
        return float(np.mean(vals[len(vals) // 2 :]))

    def summary(self):
        out = {
            "users": self.users,
            "duration_s": self.duration_s,
            "requests": len(self.samples),
            "failed": self.failed,
            "steady_cpu_percent": self.steady_cpu(),
            "steady_rss_bytes": self.steady_rss(),
        }
        for action in self.action_types():
            out[action] = self.percentiles(action)
        return out


def plan_user_schedule(seed, user_no, duration_s, compression, n_series,
                       masks_per_interval=2, mask_pool_size=32):
    """Deterministic per-user action plan: (start_offset, series_index,
    mask pool indices) per interval. Pure function of its arguments."""
    rng = np.random.default_rng((seed, user_no))
    plan = []
    t = float(rng.uniform(0, 0.25))  # small jitter so users do not start in lockstep
    while t < duration_s:
        series_idx = int(rng.integers(n_series))
        mask_idx = [int(rng.integers(mask_pool_size)) for _ in range(masks_per_interval)]
        plan.append((t, series_idx, mask_idx))
        t += float(rng.uniform(THINK_MIN_S, THINK_MAX_S)) / compression
    return plan


def build_mask_pool(dims, seed, size=32, blobs=3):
    """Random rectangular blob masks matching the series rank, pre-encoded
    as upload payload fragments so the client stays cheap under load."""
    rng = np.random.default_rng(seed)
    nz, ny, nx = dims
    pool = []
    for _ in range(size):
        dense = np.zeros(dims, dtype=bool)
        for _b in range(blobs):
            z0 = int(rng.integers(nz)); z1 = int(rng.integers(z0, nz))
            y0 = int(rng.integers(ny)); y1 = int(rng.integers(y0, ny))
            x0 = int(rng.integers(nx)); x1 = int(rng.integers(x0, nx))
            dense[z0 : z1 + 1, y0 : y1 + 1, x0 : x1 + 1] = True
        mask = VoxelMask.from_dense(dense, "synthetic")
        pool.append(base64.b64encode(mask.to_bytes()).decode("ascii"))
    return pool


class ServerMonitor:
    """1 Hz CPU / RSS / swap sampler for the server process."""

    def __init__(self, pid, interval=1.0):
        self.proc = psutil.Process(pid)
        self.interval = interval
        self.samples = []
        self._stop = threading.Event()
        self._thread = None

    def start(self):
        self.proc.cpu_percent(None)  # establish the sampling baseline
        self._stop.clear()
        self._thread = threading.Thread(target=self._run, daemon=True, name="server-monitor")
        self._thread.start()
        return self

    def _run(self):
        while not self._stop.is_set():
            try:
                cpu = self.proc.cpu_percent(None)
                rss = self.proc.memory_info().rss
                swap = psutil.swap_memory().used
            except psutil.Error:
                break
            self.samples.append((time.time(), cpu, rss, swap))
            self._stop.wait(self.interval)

    def stop(self):
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5)
        return self.samples


async def _run_user(base, session, user_no, plan, series_ids, dims_by_series, pools,
                    password, project_id, report, t0, spec):
    user_id = f"sim{user_no:05d}"
    # users trickle in rather than connecting in one thundering herd
    await asyncio.sleep(min(2.0, user_no / 500.0))
    try:
        t = time.perf_counter()
        async with session.post(f"{base}/auth/login",
                                json={"user_id": user_id, "password": password}) as r:
            body = await r.json()
            report.samples.append((time.time(), user_no, "login", time.perf_counter() - t, r.status))
            if r.status != 200:
                report.failed += 1
                report.errors.append(("login", r.status))
                return
            headers = {"Authorization": f"Bearer {body['token']}"}
        t = time.perf_counter()
        async with session.get(f"{base}/projects", headers=headers) as r:
            await r.read()
            report.samples.append((time.time(), user_no, "select_project",
                                   time.perf_counter() - t, r.status))
    except Exception as exc:
        report.failed += 1
        report.errors.append(("login", repr(exc)))
        return

    stale = (aiohttp.ClientOSError, aiohttp.ServerDisconnectedError)

    async def timed(action, method, url, expect, **kw):
        # one transparent retry on a stale keep-alive connection (the server
        # may close an idle socket just as we reuse it); every other failure
        # counts against the run
        t = time.perf_counter()
        for attempt in (1, 2):
            try:
                async with session.request(method, url, headers=headers, **kw) as r:
                    async for _chunk in r.content.iter_chunked(1 << 16):
                        pass
                    report.samples.append((time.time(), user_no, action,
                                           time.perf_counter() - t, r.status))
                    if r.status != expect:
                        report.failed += 1
                        report.errors.append((action, r.status))
                    return
            except stale as exc:
                if attempt == 2:
                    report.failed += 1
                    report.errors.append((action, repr(exc)))
            except Exception as exc:
                report.failed += 1
                report.errors.append((action, repr(exc)))
                return

    for start_offset, series_idx, mask_idx in plan:
        now = time.perf_counter() - t0
        if start_offset > now:
            await asyncio.sleep(start_offset - now)
        sid = series_ids[series_idx % len(series_ids)]
        dims = dims_by_series[sid]
        await timed("open_series", "GET", f"{base}/series/{sid}/stream", 200)
        for mi in mask_idx:
            payload = {
                "project_id": project_id,
                "synthetic": True,
                "annotation": {
                    "target": [f"study-{sid}", sid],
                    "author": user_id,
                    "masks": [pools[dims][mi % len(pools[dims])]],
                },
            }
            await timed("upload_annotation", "POST", f"{base}/series/{sid}/annotations",
                        201, json=payload)


async def _simulate(base, spec, duration_s, series_ids, dims_by_series, password,
                    project_id, report):
    pools = {
        dims: build_mask_pool(dims, seed=(spec.seed, hash(dims) & 0xFFFF))
        for dims in set(dims_by_series.values())
    }
    plans = [
        plan_user_schedule(spec.seed, u, duration_s, spec.compression, len(series_ids),
                           spec.masks_per_interval)
        for u in range(spec.count)
    ]
    connector = aiohttp.TCPConnector(limit=0)  # one persistent connection per user
    timeout = aiohttp.ClientTimeout(total=600)
    t0 = time.perf_counter()
    async with aiohttp.ClientSession(connector=connector, timeout=timeout) as session:
        tasks = [
            asyncio.create_task(
                _run_user(base, session, u, plans[u], series_ids, dims_by_series, pools,
                          password, project_id, report, t0, spec)
            )
            for u in range(spec.count)
        ]
        await asyncio.gather(*tasks)  # every task finishes its issued requests


def simulate_users(base_url, spec: SimUserSpec, duration_s, series_ids, dims_by_series,
                   password, project_id, server_pid=None) -> MetricsReport:
    """Run the scripted behavior for spec.count users; returns raw samples
    plus summary percentiles. With n == 0 this returns an empty report."""
    report = MetricsReport(users=spec.count, duration_s=duration_s,
                           compression=spec.compression, seed=spec.seed)
    monitor = ServerMonitor(server_pid).start() if server_pid else None
    try:
        if spec.count > 0:
            asyncio.run(
                _simulate(base_url, spec, duration_s, series_ids, dims_by_series,
                          password, project_id, report)
            )
    finally:
        if monitor is not None:
            report.server_samples = monitor.stop()
    return report


@dataclass
class LadderReport:
    rungs: list  # MetricsReport per user count

    def memory_growth(self):
        """Relative steady-state RSS increase from the first to last rung."""
        usable = [r for r in self.rungs if r.server_samples]
        if len(usable) < 2:
            return 0.0
        first, last = usable[0].steady_rss(), usable[-1].steady_rss()
        return (last - first) / first if first else 0.0

    def cpu_log_slope(self):
        """Fitted slope of log(cpu) vs log(users) across the ladder."""
        pts = [(r.users, r.steady_cpu()) for r in self.rungs
               if r.users > 0 and r.steady_cpu() > 0]
        if len(pts) < 2:
            return 0.0
        xs = np.log([p[0] for p in pts])
        ys = np.log([p[1] for p in pts])
        slope, _intercept = np.polyfit(xs, ys, 1)
        return float(slope)

    def total_failed(self):
        return sum(r.failed for r in self.rungs)

    def summary(self):
        return {
            "rungs": [r.summary() for r in self.rungs],
            "memory_growth": self.memory_growth(),
            "cpu_log_slope": self.cpu_log_slope(),
            "failed": self.total_failed(),
        }


def run_ladder(base_url, ladder, duration_s, series_ids, dims_by_series, password,
               project_id, server_pid, compression=1000.0, seed=7,
               settle_s=2.0) -> LadderReport:
    rungs = []
    for n in ladder:
        spec = SimUserSpec(count=n, compression=compression, seed=seed)
        rungs.append(
            simulate_users(base_url, spec, duration_s, series_ids, dims_by_series,
                           password, project_id, server_pid=server_pid)
        )
        time.sleep(settle_s)
    return LadderReport(rungs)
