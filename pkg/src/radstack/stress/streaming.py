"""Time-to-first-slice vs time-to-full-series measurement.

Uses a bare http.client connection so nothing below us buffers: the first
slice is timed the moment exactly one slice worth of body bytes has been
read from the socket. Annotators can start working at t_first; t_full is
when the whole series has landed.
"""

from __future__ import annotations

import http.client
import time
from dataclasses import dataclass
from urllib.parse import urlparse

import numpy as np


@dataclass
class StreamingReport:
    series_id: str
    trials: int
    t_first: list
    t_full: list
    total_bytes: int
    slice_bytes: int

    def first_mean(self):
        return float(np.mean(self.t_first))

    def first_std(self):
        return float(np.std(self.t_first))

    def full_mean(self):
        return float(np.mean(self.t_full))

    def full_std(self):
        return float(np.std(self.t_full))

    def ratio(self):
        return self.first_mean() / self.full_mean() if self.full_mean() else 1.0

    def summary(self):
        return {
            "series_id": self.series_id,
            "trials": self.trials,
            "t_first_mean_s": self.first_mean(),
            "t_first_std_s": self.first_std(),
            "t_full_mean_s": self.full_mean(),
            "t_full_std_s": self.full_std(),
            "first_to_full_ratio": self.ratio(),
            "total_bytes": self.total_bytes,
        }


def measure_streaming(base_url, token, series_id, trials=20) -> StreamingReport:
    parsed = urlparse(base_url)
    host, port = parsed.hostname, parsed.port
    path = f"/series/{series_id}/stream"
    headers = {"Authorization": f"Bearer {token}"}

    t_first, t_full = [], []
    total_bytes = slice_bytes = 0
    for _ in range(trials):
        conn = http.client.HTTPConnection(host, port)
        try:
            t0 = time.perf_counter()
            conn.request("GET", path, headers=headers)
            resp = conn.getresponse()
            if resp.status != 200:
                raise RuntimeError(f"stream returned {resp.status}")
            slice_bytes = int(resp.headers["X-Slice-Bytes"])
            got = 0
            while got < slice_bytes:
                chunk = resp.read(slice_bytes - got)
                if not chunk:
                    raise RuntimeError("stream ended before the first slice")
                got += len(chunk)
            t_first.append(time.perf_counter() - t0)
            while True:
                chunk = resp.read(1 << 20)
                if not chunk:
                    break
                got += len(chunk)
            t_full.append(time.perf_counter() - t0)
            total_bytes = got
        finally:
            conn.close()
    return StreamingReport(
        series_id=series_id,
        trials=trials,
        t_first=t_first,
        t_full=t_full,
        total_bytes=total_bytes,
        slice_bytes=slice_bytes,
    )
