"""Uniform symmetric quantization and MSB-vote weight protection.

Weights are mapped onto unsigned codes centered at ``2^(bits-1)``: a
symmetric real range [-A, A] with A = max|w| and scale A / (2^(bits-1) - 1).
Rounding is half-away-from-zero so independent implementations agree
bit-exactly.  Protection stores two redundant copies of the code's MSB in
bit positions ``bits`` and ``bits+1`` of the stored word; decoding takes a
2-of-3 majority over {stored MSB, copy 1, copy 2}, which corrects any single
flip among the three voted bits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_bits, check_codes, check_is_fitted, check_weights


@dataclass(frozen=True)
class QuantScheme:
    """Code width and scale of one quantized tensor."""

    bits: int
    scale: float

    def __post_init__(self):
        check_bits(self.bits)
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")

    @property
    def zero_code(self) -> int:
        return 1 << (self.bits - 1)

    @property
    def code_max(self) -> int:
        return (1 << self.bits) - 1


@dataclass(frozen=True)
class ProtectedWord:
    """A quantized code plus two redundant copies of its MSB."""

    code: int
    msb_copy_1: int
    msb_copy_2: int
    bits: int


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def scale_for(weights: np.ndarray, bits: int) -> float:
    """Symmetric scale max|w| / (2^(bits-1) - 1); 1.0 for an all-zero tensor."""
    peak = float(np.max(np.abs(weights))) if weights.size else 0.0
    return peak / ((1 << (bits - 1)) - 1) if peak > 0 else 1.0


def quantize(weights, bits: int) -> tuple[np.ndarray, QuantScheme]:
    """Quantize a real tensor to unsigned centered codes.

    code = clamp(round(w / s) + 2^(bits-1), 0, 2^bits - 1), rounding half
    away from zero.  Returns the codes (same shape, int64) and the scheme.
    """
    bits = check_bits(bits)
    w = check_weights(weights)
    scheme = QuantScheme(bits, scale_for(w, bits))
    codes = _round_half_away(w / scheme.scale) + scheme.zero_code
    codes = np.clip(codes, 0, scheme.code_max).astype(np.int64)
    return codes, scheme


def dequantize(codes, scheme: QuantScheme) -> np.ndarray:
    """Inverse mapping (code - zero_code) * scale."""
    c = check_codes(codes, scheme.bits)
    return (c - scheme.zero_code) * scheme.scale


def protect(code: int, bits: int) -> ProtectedWord:
    """Replicate the MSB of one code into two redundant bits."""
    bits = check_bits(bits)
    c = int(code)
    if not 0 <= c <= (1 << bits) - 1:
        raise ValueError(f"code {code} outside [0, {(1 << bits) - 1}]")
    msb = (c >> (bits - 1)) & 1
    return ProtectedWord(c, msb, msb, bits)


def majority_decode(p: ProtectedWord) -> int:
    """2-of-3 vote over {stored MSB, copy 1, copy 2}; lower bits pass through."""
    stored_msb = (p.code >> (p.bits - 1)) & 1
    voted = 1 if (stored_msb + p.msb_copy_1 + p.msb_copy_2) >= 2 else 0
    low = p.code & ((1 << (p.bits - 1)) - 1)
    return (voted << (p.bits - 1)) | low


def protect_words(codes, bits: int) -> np.ndarray:
    """Stored (bits+2)-wide words: code in bits [0, bits), copies at bits, bits+1."""
    c = check_codes(codes, bits)
    msb = (c >> (bits - 1)) & 1
    return c | (msb << bits) | (msb << (bits + 1))


def majority_decode_words(stored, bits: int) -> np.ndarray:
    """Vectorized majority decode of stored (bits+2)-wide words back to codes."""
    s = np.asarray(stored, dtype=np.int64)
    stored_msb = (s >> (bits - 1)) & 1
    copy1 = (s >> bits) & 1
    copy2 = (s >> (bits + 1)) & 1
    voted = ((stored_msb + copy1 + copy2) >= 2).astype(np.int64)
    low = s & ((1 << (bits - 1)) - 1)
    return (voted << (bits - 1)) | low


def stored_width(bits: int, protected: bool) -> int:
    return bits + 2 if protected else bits


def protected_memory_bits(param_count: int, bits: int, protected: bool) -> int:
    """Total storage bits for a parameter memory, with or without MSB copies."""
    if param_count <= 0:
        raise ValueError("param_count must be positive")
    return param_count * stored_width(check_bits(bits), protected)


class UniformQuantizer(BaseEstimator, TransformerMixin):
    """Sklearn-style transformer wrapping the centered-unsigned quantization.

    fit() learns the symmetric scale from the data; transform() maps reals to
    codes (out-of-range values saturate); inverse_transform() maps back.
    """

    def __init__(self, bits: int = 8):
        self.bits = bits

    def fit(self, X, y=None):
        w = check_weights(X, "X")
        self.scheme_ = QuantScheme(check_bits(self.bits), scale_for(w, self.bits))
        self.scale_ = self.scheme_.scale
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "scheme_")
        w = check_weights(X, "X")
        codes = _round_half_away(w / self.scheme_.scale) + self.scheme_.zero_code
        return np.clip(codes, 0, self.scheme_.code_max).astype(np.int64)

    def inverse_transform(self, codes) -> np.ndarray:
        check_is_fitted(self, "scheme_")
        return dequantize(codes, self.scheme_)
