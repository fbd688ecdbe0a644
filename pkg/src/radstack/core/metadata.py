"""Per-series metadata split into a PHI partition and a safe partition."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class MetadataRecord:
    """Series metadata with a hard wall between safe and PHI fields.

    `safe` holds only inclusion-list fields plus hashed identifiers; `phi`
    holds everything else. The two key sets must be disjoint. Nothing in
    `phi` may leave the storage boundary unless the caller holds a PHI grant;
    that rule is enforced in the storage and service layers.
    """

    series_uid_hash: str
    safe: dict = field(default_factory=dict)
    phi: dict = field(default_factory=dict)
    provenance: tuple = ()

    def __post_init__(self):
        overlap = set(self.safe) & set(self.phi)
        if overlap:
            raise ValueError(f"safe and phi partitions share keys: {sorted(overlap)}")
        object.__setattr__(self, "provenance", tuple(self.provenance))

    def to_json_dict(self, include_phi=False):
        d = {
            "series_uid_hash": self.series_uid_hash,
            "safe": dict(self.safe),
            "provenance": list(self.provenance),
        }
        if include_phi:
            d["phi"] = dict(self.phi)
        return d

    @classmethod
    def from_json_dict(cls, d):
        return cls(
            series_uid_hash=d["series_uid_hash"],
            safe=dict(d.get("safe", {})),
            phi=dict(d.get("phi", {})),
            provenance=tuple(d.get("provenance", ())),
        )
