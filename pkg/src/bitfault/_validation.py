"""Input-validation helpers, in the spirit of sklearn.utils.validation."""

from __future__ import annotations

import numbers

import numpy as np

from .errors import CodeOutOfRange, EmptyDataset, EmptyTensor, NonFiniteWeight


def check_uword(value: int, width: int, name: str = "operand") -> int:
    """Validate an unsigned word of the given bit width and return it as int."""
    v = int(value)
    if v < 0 or v >> width:
        raise ValueError(f"{name}={value} does not fit in an unsigned {width}-bit word")
    return v


def check_width(n: int) -> int:
    """Multiplier operand widths are fixed at 8 or 16 bits."""
    if n not in (8, 16):
        raise ValueError(f"operand width must be 8 or 16, got {n}")
    return n


def check_bits(bits: int) -> int:
    """Quantization code widths live in [2, 8]."""
    b = int(bits)
    if not 2 <= b <= 8:
        raise ValueError(f"quantization bits must be in [2, 8], got {bits}")
    return b


def check_probability(p: float, name: str = "probability") -> float:
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"{name} must be in [0, 1], got {p}")
    return p


def check_weights(weights, name: str = "weights") -> np.ndarray:
    """Coerce a weight tensor to a float64 array; reject empty or non-finite."""
    w = np.asarray(weights, dtype=np.float64)
    if w.size == 0:
        raise EmptyTensor(f"{name} is empty")
    if not np.all(np.isfinite(w)):
        raise NonFiniteWeight(f"{name} contains NaN or infinite entries")
    return w


def check_codes(codes, bits: int, name: str = "codes") -> np.ndarray:
    """Coerce quantized codes to int64 and bounds-check against the code range."""
    c = np.asarray(codes)
    if c.size and (not np.issubdtype(c.dtype, np.integer)):
        if not np.all(c == np.floor(c)):
            raise CodeOutOfRange(f"{name} must be integers")
    c = c.astype(np.int64)
    hi = (1 << bits) - 1
    if c.size and (c.min() < 0 or c.max() > hi):
        raise CodeOutOfRange(f"{name} outside [0, {hi}] for bits={bits}")
    return c


def check_batch(X, name: str = "dataset") -> np.ndarray:
    """2-D float batch, nonempty."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise EmptyDataset(f"{name} must be a nonempty 2-D batch")
    return arr


def check_seed(seed: int, name: str = "seed") -> int:
    if not isinstance(seed, numbers.Integral):
        raise ValueError(f"{name} must be an integer, got {seed!r}")
    return int(seed)


def check_is_fitted(estimator, attribute: str) -> None:
    if not hasattr(estimator, attribute):
        raise RuntimeError(
            f"{type(estimator).__name__} is not fitted yet; call fit() first"
        )
