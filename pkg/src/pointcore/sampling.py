"""Greedy center selection for the memory bank and test clouds."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .errors import InvalidParams
from .geometry import PointCloud

CRITERIA = ("mean", "min")


@dataclass(frozen=True)
class SamplingParams:
    s_max: int = 4096
    s_init: int = 1
    seed: int = 0
    # "mean": maximal mean distance to the selected set; "min": classic FPS
    criterion: str = "mean"

    def __post_init__(self):
        if self.criterion not in CRITERIA:
            raise InvalidParams(f"unknown criterion {self.criterion!r}")
        if not 1 <= self.s_init <= self.s_max:
            raise InvalidParams("need 1 <= s_init <= s_max")


def greedy_downsample(
    cloud: PointCloud,
    params: SamplingParams,
    init: Optional[Sequence[int]] = None,
) -> np.ndarray:
    """Indices of ``params.s_max`` spread-out points, in selection order.

    Starts from ``s_init`` distinct seeded random indices (or the explicit
    ``init``) and repeatedly adds the unselected point with the largest
    aggregate distance to the selected set; ties go to the lowest index.
    The mean criterion keeps a running sum, which has the same argmax as the
    mean.
    """
    n = len(cloud)
    if params.s_max > n:
        raise InvalidParams(f"s_max={params.s_max} exceeds cloud size {n}")
    if init is None:
        rng = np.random.default_rng(params.seed)
        init = rng.choice(n, size=params.s_init, replace=False)
    init = np.asarray(init, dtype=np.intp)
    if len(init) == 0 or len(init) > params.s_max:
        raise InvalidParams("initial set must have between 1 and s_max points")
    if len(np.unique(init)) != len(init) or init.min() < 0 or init.max() >= n:
        raise InvalidParams("initial indices must be distinct and in range")
    out = kernels.greedy_select(cloud.points, init, params.s_max, params.criterion == "min")
    return np.asarray(out, dtype=np.intp)
