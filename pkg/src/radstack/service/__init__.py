from radstack.service.persistence import (
    IncompleteAnnotationError,
    VersionConflictError,
    get_annotation,
    register_series,
    save_annotation,
    sign_off_annotation,
)

__all__ = [
    "register_series",
    "save_annotation",
    "sign_off_annotation",
    "get_annotation",
    "VersionConflictError",
    "IncompleteAnnotationError",
]
