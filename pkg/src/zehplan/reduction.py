"""Deterministic sample averages over scenario blocks.

Samples are cut into blocks of a fixed size, each block is summed with
numpy's pairwise summation, and the block partials are combined by a binary
tree in block-index order. The result depends only on the block size, never
on how many workers evaluated the blocks.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np

from .model import ScenarioSet

BLOCK_SIZE = 4096


def tree_sum(parts: Sequence[np.ndarray]) -> np.ndarray:
    if not parts:
        raise ValueError("nothing to sum")
    if len(parts) == 1:
        return parts[0]
    mid = len(parts) // 2
    return tree_sum(parts[:mid]) + tree_sum(parts[mid:])


def sample_mean(
    scenarios: ScenarioSet,
    per_sample: Callable[[np.ndarray, np.ndarray], np.ndarray],
    out_shape: tuple = (),
    workers: int = 1,
    block_size: int = BLOCK_SIZE,
) -> np.ndarray:
    """Average ``per_sample(x_block, y_block)`` over all samples.

    ``per_sample`` returns an array whose last axis runs over the samples of
    the block; the leading axes (``out_shape``) are kept.
    """
    n = scenarios.n_samples
    if n == 0:
        return np.zeros(out_shape)

    def partial(start: int) -> np.ndarray:
        x, y = scenarios.block(start, start + block_size)
        vals = np.ascontiguousarray(per_sample(x, y))
        return np.sum(vals, axis=-1)

    starts = list(range(0, n, block_size))
    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(partial, starts))
    else:
        parts = [partial(s) for s in starts]
    return tree_sum(parts) / n
