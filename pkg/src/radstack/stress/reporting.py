"""CSV export and plots for stress runs.

CSV schema (one file, discriminated by the first column):
    request,<ts>,<users>,<user_no>,<action>,<latency_s>,<status>
    server,<ts>,<users>,<cpu_percent>,<rss_bytes>,<swap_bytes>
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np


def write_csv(path, rungs):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["kind", "ts", "users", "a", "b", "c", "d"])
        for report in rungs:
            for ts, user, action, latency, status in report.samples:
                w.writerow(["request", f"{ts:.6f}", report.users, user, action,
                            f"{latency:.6f}", status])
            for ts, cpu, rss, swap in report.server_samples:
                w.writerow(["server", f"{ts:.6f}", report.users, f"{cpu:.2f}", rss, swap, ""])
    return path


def write_plots(prefix, rungs):
    """Latency percentiles, CPU, and memory against user count (log x)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    users = [r.users for r in rungs]
    out = []

    fig, ax = plt.subplots(figsize=(6, 4))
    for q, style in ((50, "o-"), (95, "s--"), (99, "^:")):
        ys = []
        for r in rungs:
            lats = [s[3] for s in r.samples]
            ys.append(np.percentile(lats, q) * 1000 if lats else float("nan"))
        ax.plot(users, ys, style, label=f"p{q}")
    ax.set_xscale("log")
    ax.set_xlabel("simulated users")
    ax.set_ylabel("request latency (ms)")
    ax.legend()
    ax.set_title("Latency percentiles vs simulated users")
    fig.tight_layout()
    p = prefix.with_name(prefix.name + "_latency.png")
    fig.savefig(p)
    plt.close(fig)
    out.append(p)

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(users, [r.steady_cpu() for r in rungs], "o-")
    ax.set_xscale("log")
    ax.set_xlabel("simulated users")
    ax.set_ylabel("server CPU (%)")
    ax.set_title("Steady-state CPU vs simulated users")
    fig.tight_layout()
    p = prefix.with_name(prefix.name + "_cpu.png")
    fig.savefig(p)
    plt.close(fig)
    out.append(p)

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(users, [r.steady_rss() / (1 << 20) for r in rungs], "o-")
    ax.set_xscale("log")
    ax.set_xlabel("simulated users")
    ax.set_ylabel("server RSS (MiB)")
    ax.set_title("Steady-state memory vs simulated users")
    fig.tight_layout()
    p = prefix.with_name(prefix.name + "_memory.png")
    fig.savefig(p)
    plt.close(fig)
    out.append(p)
    return out
