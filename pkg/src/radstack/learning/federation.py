"""Cross-instance weight exchange: interface only, wired to a no-op.

Multi-instance federation is out of scope for the desk-scale build; this
boundary exists so a real transport can slot in without touching the loop.
"""

from __future__ import annotations


class WeightExchange:
    """Contract for sharing model weight updates between platform instances."""

    def push_snapshot(self, project_id, snapshot_record, state_bytes):
        raise NotImplementedError

    def pull_snapshots(self, project_id):
        raise NotImplementedError


class NoopWeightExchange(WeightExchange):
    """Single-instance deployment: nothing is shared, nothing arrives."""

    def push_snapshot(self, project_id, snapshot_record, state_bytes):
        return None

    def pull_snapshots(self, project_id):
        return []
