"""Content-addressed, versioned blob store over a plain directory tree.

Payloads live once under objects/<sha256>; a (namespace, id, version) key is
a small link file recording that hash. Versions are immutable: writing an
existing key raises instead of overwriting, and identical payloads are
deduplicated for free. Atomicity comes from O_EXCL link creation and
write-to-temp + rename for objects, which also makes the store safe across
processes.
"""

from __future__ import annotations

import hashlib
import os
import re
from dataclasses import dataclass
from pathlib import Path

DEFAULT_CHUNK_SIZE = 512 * 1024

_SAFE_ID = re.compile(r"[^A-Za-z0-9._-]")


class BlobNotFoundError(KeyError):
    pass


class BlobConflictError(ValueError):
    """Attempt to overwrite an already-stored (namespace, id, version)."""


@dataclass(frozen=True)
class BlobKey:
    namespace: str
    id: str
    version: int

    def __str__(self):
        return f"{self.namespace}/{self.id}@v{self.version}"


def _id_dir(root, namespace, blob_id):
    # ids may contain arbitrary characters; path by digest, keep a readable hint
    digest = hashlib.sha256(blob_id.encode()).hexdigest()[:24]
    hint = _SAFE_ID.sub("_", blob_id)[:40]
    return root / "keys" / namespace / digest[:2] / f"{digest}__{hint}"


class BlobStore:
    def __init__(self, root):
        self.root = Path(root)
        (self.root / "objects").mkdir(parents=True, exist_ok=True)
        (self.root / "keys").mkdir(parents=True, exist_ok=True)
        (self.root / "tmp").mkdir(parents=True, exist_ok=True)

    def _object_path(self, digest):
        return self.root / "objects" / digest[:2] / digest

    def _store_object(self, data):
        digest = hashlib.sha256(data).hexdigest()
        path = self._object_path(digest)
        if not path.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = self.root / "tmp" / f"{digest}.{os.getpid()}.{id(data)}"
            tmp.write_bytes(data)
            os.replace(tmp, path)  # atomic; a concurrent identical write is harmless
        return digest

    def put(self, key: BlobKey, data: bytes) -> BlobKey:
        """Store bytes under an explicit version. Versions are write-once."""
        if key.version < 1:
            raise ValueError("blob versions start at 1")
        digest = self._store_object(data)
        key_dir = _id_dir(self.root, key.namespace, key.id)
        key_dir.mkdir(parents=True, exist_ok=True)
        link = key_dir / f"v{key.version:08d}"
        try:
            fd = os.open(link, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise BlobConflictError(f"{key} already stored; versions are immutable") from None
        with os.fdopen(fd, "w") as f:
            f.write(digest)
        return key

    def put_new_version(self, namespace: str, blob_id: str, data: bytes) -> BlobKey:
        """Store bytes under the next free version for (namespace, id)."""
        while True:
            version = self.latest_version(namespace, blob_id) + 1
            try:
                return self.put(BlobKey(namespace, blob_id, version), data)
            except BlobConflictError:
                continue  # lost a race; try the next version

    def _digest_for(self, key: BlobKey) -> str:
        link = _id_dir(self.root, key.namespace, key.id) / f"v{key.version:08d}"
        try:
            return link.read_text().strip()
        except FileNotFoundError:
            raise BlobNotFoundError(str(key)) from None

    def get(self, key: BlobKey) -> bytes:
        return self._object_path(self._digest_for(key)).read_bytes()

    def stream(self, key: BlobKey, chunk_size: int = DEFAULT_CHUNK_SIZE):
        """Yield the payload in order; the first chunk is available before
        the rest of the object has been read (progressive delivery)."""
        path = self._object_path(self._digest_for(key))
        with open(path, "rb") as f:
            while True:
                chunk = f.read(chunk_size)
                if not chunk:
                    return
                yield chunk

    def exists(self, key: BlobKey) -> bool:
        link = _id_dir(self.root, key.namespace, key.id) / f"v{key.version:08d}"
        return link.exists()

    def size(self, key: BlobKey) -> int:
        return self._object_path(self._digest_for(key)).stat().st_size

    def latest_version(self, namespace: str, blob_id: str) -> int:
        """Highest stored version, or 0 if none."""
        key_dir = _id_dir(self.root, namespace, blob_id)
        if not key_dir.exists():
            return 0
        versions = [int(p.name[1:]) for p in key_dir.iterdir() if p.name.startswith("v")]
        return max(versions, default=0)

    def content_hash(self, key: BlobKey) -> str:
        """Recorded digest; verify() re-hashes the payload against it."""
        return self._digest_for(key)

    def verify(self, key: BlobKey) -> bool:
        digest = self._digest_for(key)
        h = hashlib.sha256()
        with open(self._object_path(digest), "rb") as f:
            for chunk in iter(lambda: f.read(1 << 20), b""):
                h.update(chunk)
        return h.hexdigest() == digest
