import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))  # for oracles.py


@pytest.fixture
def rng():
    return np.random.default_rng(0xC0FFEE)


def random_mask(rng, dims=(16, 16, 16), p=0.5, label=""):
    from radstack.core.mask import VoxelMask

    dense = rng.random(dims) < p
    return VoxelMask.from_dense(dense, label)


def random_volume(rng, dims=(8, 8, 8), lo=-1024, hi=3071, spacing=(1.0, 1.0, 1.0)):
    from radstack.core.volume import VolumeTensor

    vox = rng.integers(lo, hi + 1, size=dims, dtype=np.int16)
    return VolumeTensor(vox, spacing)
