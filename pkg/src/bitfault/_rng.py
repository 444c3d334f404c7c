"""Counter-based random streams.

All randomness in the workbench flows through Philox, a counter-based
generator: word ``i`` of a stream is a pure function of ``(seed, stream_id,
i)``.  That makes every sweep reproducible across platforms and immune to
partitioning order, which the campaign runners rely on.
"""

from __future__ import annotations

import numpy as np

_M64 = (1 << 64) - 1


def raw_words(seed: int, stream_id: int, count: int) -> np.ndarray:
    """Words 0..count-1 of the (seed, stream_id) stream, as uint64."""
    if count < 0:
        raise ValueError("count must be nonnegative")
    key = np.array([seed & _M64, stream_id & _M64], dtype=np.uint64)
    bg = np.random.Philox(key=key)
    if count == 0:
        return np.empty(0, dtype=np.uint64)
    return bg.random_raw(count)


def uniform01(seed: int, stream_id: int, count: int) -> np.ndarray:
    """Uniform [0, 1) doubles with 53-bit resolution from the raw stream."""
    w = raw_words(seed, stream_id, count)
    return (w >> np.uint64(11)) * (2.0 ** -53)
