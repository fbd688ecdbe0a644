from radstack.fabric.worker import (
    PoolState,
    ScalingPolicy,
    UnknownJobTypeError,
    WorkerFabric,
    WorkerSpec,
)

__all__ = ["WorkerFabric", "WorkerSpec", "ScalingPolicy", "PoolState", "UnknownJobTypeError"]
