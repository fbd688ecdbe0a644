"""Authentication and authorization: bearer tokens, roles, protocol grants.

The decision rule, in order:
  1. the action must be permitted to one of the principal's roles;
  2. unless the principal is an admin, the resource's protocol must be in
     the principal's protocol grants;
  3. PHI-bearing reads additionally require the phi_grant flag, which only
     exists as an explicitly recorded grant row (granter + timestamp) --
     this applies to admins too.
Deny is always a typed response, never silent truncation.

The role/action table below is the single authority; docs/api.md renders the
same table and the acceptance suite checks decisions against an independent
copy of it.
"""

from __future__ import annotations

import hashlib
import secrets
import time
from dataclasses import dataclass

ROLES = ("annotator", "lead", "data_scientist", "admin")

ACTIONS = (
    "series.read",
    "series.annotate",
    "annotation.read",
    "annotation.sign_off",
    "annotation.reopen",
    "proposal.read",
    "cohort.build",
    "cohort.read",
    "project.create",
    "project.read",
    "model.read",
    "report.read",
    "audit.read",
    "users.manage",
    "protocol.manage",
    "phi.read",
    "note.write",
    "note.read",
    "ingest.trigger",
    "storage.raw",
    "status.read",
)

_ANNOTATOR = {
    "series.read",
    "series.annotate",
    "annotation.read",
    "annotation.sign_off",
    "proposal.read",
    "cohort.read",
    "project.read",
    "note.write",
    "note.read",
    "status.read",
}

_DATA_SCIENTIST = {
    "series.read",
    "annotation.read",
    "proposal.read",
    "cohort.build",
    "cohort.read",
    "project.read",
    "model.read",
    "note.read",
    "status.read",
    "phi.read",  # still gated on the phi_grant flag
}

_LEAD = _ANNOTATOR | {
    "cohort.build",
    "project.create",
    "model.read",
    "report.read",
    "annotation.reopen",
    "ingest.trigger",
    "phi.read",
}

ROLE_ACTIONS = {
    "annotator": frozenset(_ANNOTATOR),
    "data_scientist": frozenset(_DATA_SCIENTIST),
    "lead": frozenset(_LEAD),
    "admin": frozenset(ACTIONS),
}

PHI_ACTIONS = frozenset({"phi.read"})


@dataclass(frozen=True)
class Principal:
    user_id: str
    roles: tuple
    protocol_grants: frozenset
    phi_grant: bool = False

    def can(self, action):
        return any(action in ROLE_ACTIONS.get(role, frozenset()) for role in self.roles)


@dataclass(frozen=True)
class Decision:
    allowed: bool
    reason: str = ""


def authorize(principal: Principal, action: str, protocol_id: str | None = None,
              needs_phi: bool = False) -> Decision:
    if action not in ACTIONS:
        return Decision(False, f"unknown action {action!r}")
    if not principal.can(action):
        return Decision(False, f"role {'/'.join(principal.roles)} may not {action}")
    if protocol_id is not None and "admin" not in principal.roles:
        if protocol_id not in principal.protocol_grants:
            return Decision(False, f"no grant for protocol {protocol_id!r}")
    if needs_phi:
        if not principal.can("phi.read"):
            return Decision(False, "role may not read PHI")
        if not principal.phi_grant:
            return Decision(False, "PHI access requires an explicit recorded grant")
    return Decision(True)


# Credential plumbing -----------------------------------------------------

def hash_password(password: str, salt: str) -> str:
    return hashlib.sha256(f"{salt}:{password}".encode()).hexdigest()


def create_user(storage, user_id, password, roles=("annotator",), protocol_grants=(),
                name=""):
    salt = secrets.token_hex(8)
    record = {
        "id": user_id,
        "name": name or user_id,
        "roles": list(roles),
        "protocol_grants": list(protocol_grants),
        "phi_grant": False,
        "phi_grant_by": None,
        "phi_grant_at": None,
        "salt": salt,
        "password_hash": hash_password(password, salt),
        "created_at": time.time(),
    }
    storage.records.upsert("users", record)
    return record


def grant_phi(storage, user_id, granter_id):
    user = storage.records.get("users", user_id)
    if user is None:
        raise KeyError(f"no such user {user_id!r}")
    user.pop("_version", None)
    user["phi_grant"] = True
    user["phi_grant_by"] = granter_id
    user["phi_grant_at"] = time.time()
    storage.records.upsert("users", user)
    return user


def grant_protocol(storage, user_id, protocol_id):
    user = storage.records.get("users", user_id)
    if user is None:
        raise KeyError(f"no such user {user_id!r}")
    user.pop("_version", None)
    grants = set(user.get("protocol_grants", []))
    grants.add(protocol_id)
    user["protocol_grants"] = sorted(grants)
    storage.records.upsert("users", user)
    return user


def login(storage, user_id, password):
    """Mint a bearer token; returns None on bad credentials."""
    user = storage.records.get("users", user_id)
    if user is None:
        return None
    if hash_password(password, user["salt"]) != user["password_hash"]:
        return None
    token = secrets.token_hex(24)
    storage.records.upsert(
        "tokens", {"id": token, "user_id": user_id, "created_at": time.time()}
    )
    return token


def resolve_token(storage, token) -> Principal | None:
    row = storage.records.get("tokens", token)
    if row is None:
        return None
    user = storage.records.get("users", row["user_id"])
    if user is None:
        return None
    return Principal(
        user_id=user["id"],
        roles=tuple(user.get("roles", [])),
        protocol_grants=frozenset(user.get("protocol_grants", [])),
        phi_grant=bool(user.get("phi_grant", False)),
    )
