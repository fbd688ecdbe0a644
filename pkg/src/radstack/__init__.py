"""radstack: a desk-scale medical-imaging AI orchestration platform.

Subpackages:
    core       -- domain model and pure mask/annotation computation
    storage    -- the three embedded stores (records, blobs, job queue)
    ingestion  -- DICOM subset in/out, PHI segregation, synthetic corpora
    fabric     -- queue-driven worker pool with idempotent job handling
    learning   -- continuous active-learning loop and pluggable trainers
    service    -- the authenticated HTTP API (single path in and out)
    stress     -- load, streaming, and ingestion benchmark harness
"""

__version__ = "0.1.0"
