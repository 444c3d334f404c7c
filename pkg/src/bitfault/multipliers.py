"""Bit-exact multiplier models: exact, logarithmic, and adaptive fault-tolerant.

The logarithmic path follows the classical shift-and-add scheme: a leading-one
detector gives the integer part ``k`` of log2 for each operand, operands are
left-aligned so the bits below the leading one form an (n-1)-bit mantissa
fraction, mantissas are truncated to ``n-1-t`` bits and added, and the product
is rebuilt by shifting.  With mantissa sum ``s`` (as a fraction) the rebuilt
product is ``2^(ka+kb) * (1 + s)`` without carry and ``2^(ka+kb+1) * s`` with
carry.  Everything is computed in integer shifts, so results are bit-stable.

The adaptive fault-tolerant variant is fault-free-identical to the logarithmic
one.  It additionally recomputes the top slice of the mantissa addition in a
duplicated adder.  The slice size adapts to the operands: aligning shifts
leave the low ``(n-1-max(ka,kb)) - t`` adder positions unused (both mantissa
inputs are zero there), and exactly that many stages can host a duplicate, up
to the configured duplication level ``h``.  A primary/duplicate mismatch
raises the detection flag and the disagreeing result bits are forced to zero.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from . import _rng
from ._validation import check_uword, check_width
from .errors import ExhaustiveTooLarge, IndexOutOfRange, ZeroOperand
from .faults import ADDER, FaultPlan

EXACT = "exact"
MITCHELL = "mitchell"
ADAM = "adam"

_FAMILIES = (EXACT, MITCHELL, ADAM)


@dataclass(frozen=True)
class MultConfig:
    """Multiplier family plus its (n, t, h) parameters.

    ``t`` is the number of low mantissa bits truncated before the addition,
    ``h`` the duplication level of the adaptive adder.  Both are ignored for
    the exact family.
    """

    family: str
    n: int = 8
    t: int = 0
    h: int = 0

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown multiplier family {self.family!r}")
        check_width(self.n)
        if self.family != EXACT:
            if not 0 <= self.t <= self.n - 1:
                raise ValueError(f"truncation t={self.t} outside [0, {self.n - 1}]")
            if not 0 <= self.h <= self.n - 1:
                raise ValueError(f"duplication h={self.h} outside [0, {self.n - 1}]")
            if self.mantissa_bits < 1:
                raise ValueError(f"t={self.t} leaves no mantissa bits at n={self.n}")

    @property
    def mantissa_bits(self) -> int:
        """Width of the truncated mantissa adder."""
        return self.n - 1 - self.t

    def label(self) -> str:
        if self.family == EXACT:
            return f"exact({self.n})"
        if self.family == MITCHELL:
            return f"mitchell({self.n},{self.t})"
        return f"adam({self.n},{self.t},{self.h})"


_LABEL_RE = re.compile(r"^\s*(\w+)\s*\(\s*([0-9,\s]*)\)\s*$")


def parse_mult_config(label: str) -> MultConfig:
    """Parse labels like ``exact(8)``, ``mitchell(8,2)``, ``adam(16,2,4)``."""
    m = _LABEL_RE.match(label)
    if not m:
        raise ValueError(f"cannot parse multiplier label {label!r}")
    family = m.group(1).lower()
    args = [int(tok) for tok in m.group(2).split(",") if tok.strip()]
    if family == EXACT and len(args) == 1:
        return MultConfig(EXACT, n=args[0])
    if family == MITCHELL and len(args) == 2:
        return MultConfig(MITCHELL, n=args[0], t=args[1])
    if family == ADAM and len(args) == 3:
        return MultConfig(ADAM, n=args[0], t=args[1], h=args[2])
    raise ValueError(f"wrong arity for multiplier label {label!r}")


@dataclass(frozen=True)
class MulOutcome:
    """Product plus the fault flags of one multiplier invocation."""

    product: int
    fault_detected: bool = False
    mitigated: bool = False

    def __post_init__(self):
        if self.mitigated and not self.fault_detected:
            raise ValueError("mitigated implies fault_detected")


def lod(x: int, width: int | None = None) -> int:
    """Index of the leading one bit; the integer part of log2(x)."""
    if width is not None:
        check_uword(x, width, "x")
    x = int(x)
    if x <= 0:
        raise ZeroOperand("leading-one detection needs a nonzero operand")
    return x.bit_length() - 1


def exact_mul(a: int, b: int, width: int) -> int:
    """Reference product of two unsigned width-bit words."""
    return check_uword(a, width, "a") * check_uword(b, width, "b")


def _align(x: int, k: int, n: int, t: int) -> int:
    """Truncated mantissa of ``x``: bits below the leading one, left-aligned."""
    mant = (x << (n - 1 - k)) & ((1 << (n - 1)) - 1)
    return mant >> t


def _reconstruct(sum_word: int, ka: int, kb: int, w: int) -> int:
    """Shift the (w+1)-bit adder result back into the product domain."""
    if (sum_word >> w) & 1:
        val = sum_word
        shift = ka + kb + 1 - w
    else:
        val = (1 << w) + sum_word
        shift = ka + kb - w
    return val << shift if shift >= 0 else val >> -shift


def mitchell_mul(a: int, b: int, cfg: MultConfig) -> MulOutcome:
    """Logarithmic approximate product; never exceeds the exact product."""
    if cfg.family != MITCHELL:
        raise ValueError(f"mitchell_mul called with family {cfg.family!r}")
    a = check_uword(a, cfg.n, "a")
    b = check_uword(b, cfg.n, "b")
    if a == 0 or b == 0:
        return MulOutcome(0)
    ka, kb = lod(a), lod(b)
    w = cfg.mantissa_bits
    s = _align(a, ka, cfg.n, cfg.t) + _align(b, kb, cfg.n, cfg.t)
    return MulOutcome(_reconstruct(s, ka, kb, w))


def duplicated_slice(a: int, b: int, cfg: MultConfig) -> tuple[int, int] | None:
    """Adder result bits covered by the duplicate for this operand pair.

    Returns the inclusive ``(lo, hi)`` positions, or None when the operands
    leave too few unused adder stages for any duplication.  ``hi`` is always
    the carry-out position: duplicating the top stages re-derives the carry.
    """
    if cfg.family != ADAM:
        raise ValueError(f"duplicated_slice needs an adam config, got {cfg.family!r}")
    if a == 0 or b == 0:
        return None
    w = cfg.mantissa_bits
    kmax = max(lod(a), lod(b))
    unused = max(0, (cfg.n - 1 - kmax) - cfg.t)
    d = min(cfg.h, w, unused)
    if d == 0:
        return None
    return (w - d, w)


def _flip_bits(faults: FaultPlan | Iterable[int] | None) -> tuple[int, ...]:
    if faults is None:
        return ()
    if isinstance(faults, FaultPlan):
        return tuple(s.bit for s in faults.sites if s.kind == ADDER)
    return tuple(int(bit) for bit in faults)


def adam_mul(
    a: int,
    b: int,
    cfg: MultConfig,
    faults: FaultPlan | Iterable[int] | None = None,
) -> MulOutcome:
    """Adaptive fault-tolerant product.

    Fault-free it is bit-identical to the logarithmic multiplier at the same
    (n, t).  ``faults`` lists adder result bits to flip (a FaultPlan's adder
    sites, or raw bit positions); flips landing in the active duplicated
    slice are detected and the disagreeing bits zeroed.
    """
    if cfg.family != ADAM:
        raise ValueError(f"adam_mul called with family {cfg.family!r}")
    a = check_uword(a, cfg.n, "a")
    b = check_uword(b, cfg.n, "b")
    if a == 0 or b == 0:
        return MulOutcome(0)
    ka, kb = lod(a), lod(b)
    w = cfg.mantissa_bits

    flips = 0
    for bit in _flip_bits(faults):
        if not 0 <= bit <= w:
            raise IndexOutOfRange(f"adder bit {bit} outside result bits [0, {w}]")
        flips |= 1 << bit

    s_clean = _align(a, ka, cfg.n, cfg.t) + _align(b, kb, cfg.n, cfg.t)
    s_faulty = s_clean ^ flips

    region = duplicated_slice(a, b, cfg)
    detected = False
    mitigated = False
    if region is not None:
        lo, hi = region
        region_mask = ((1 << (hi - lo + 1)) - 1) << lo
        mismatch = flips & region_mask
        if mismatch:
            detected = True
            mitigated = True
            s_faulty &= ~mismatch
    return MulOutcome(_reconstruct(s_faulty, ka, kb, w), detected, mitigated)


def multiply(
    a: int,
    b: int,
    cfg: MultConfig,
    faults: FaultPlan | Iterable[int] | None = None,
) -> MulOutcome:
    """Family dispatch; adder faults are only meaningful for the adam family."""
    if cfg.family == EXACT:
        return MulOutcome(exact_mul(a, b, cfg.n))
    if cfg.family == MITCHELL:
        return mitchell_mul(a, b, cfg)
    return adam_mul(a, b, cfg, faults)


def mitchell_product_array(a, b, n: int, t: int = 0) -> np.ndarray:
    """Vectorized fault-free logarithmic products, bit-identical to the scalar path."""
    check_width(n)
    a = np.asarray(a, dtype=np.uint64)
    b = np.asarray(b, dtype=np.uint64)
    w = n - 1 - t
    if w < 1:
        raise ValueError(f"t={t} leaves no mantissa bits at n={n}")
    nz = (a > 0) & (b > 0)
    ka = (np.frexp(np.where(nz, a, 1).astype(np.float64))[1] - 1).astype(np.int64)
    kb = (np.frexp(np.where(nz, b, 1).astype(np.float64))[1] - 1).astype(np.int64)
    mant_mask = np.uint64((1 << (n - 1)) - 1)
    ma = ((a << (n - 1 - ka).astype(np.uint64)) & mant_mask) >> np.uint64(t)
    mb = ((b << (n - 1 - kb).astype(np.uint64)) & mant_mask) >> np.uint64(t)
    s = ma + mb
    carry = s >= np.uint64(1 << w)
    val = np.where(carry, s, s + np.uint64(1 << w))
    shift = ka + kb - w + carry.astype(np.int64)
    shl = np.where(shift > 0, shift, 0).astype(np.uint64)
    shr = np.where(shift < 0, -shift, 0).astype(np.uint64)
    return np.where(nz, (val << shl) >> shr, np.uint64(0))


def product_array(a, b, cfg: MultConfig) -> np.ndarray:
    """Vectorized fault-free products for any family (adam == mitchell here)."""
    if cfg.family == EXACT:
        return np.asarray(a, dtype=np.uint64) * np.asarray(b, dtype=np.uint64)
    return mitchell_product_array(a, b, cfg.n, cfg.t)


@dataclass(frozen=True)
class Exhaustive:
    """Sweep every nonzero operand pair; 8-bit widths only."""


@dataclass(frozen=True)
class Sampled:
    """Sample ``count`` uniform operand pairs from a counter-based stream."""

    count: int
    seed: int


SamplePolicy = Exhaustive | Sampled


def sample_operand_pairs(n: int, count: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Uniform n-bit operand pairs; pair i depends only on (seed, i)."""
    words = _rng.raw_words(seed, 0, count)
    mask = np.uint64((1 << n) - 1)
    return words & mask, (words >> np.uint64(n)) & mask


def _exhaustive_pairs(n: int) -> tuple[np.ndarray, np.ndarray]:
    ops = np.arange(1, 1 << n, dtype=np.uint64)
    a, b = np.meshgrid(ops, ops, indexing="ij")
    return a.ravel(), b.ravel()


def mare(cfg: MultConfig, policy: SamplePolicy) -> float:
    """Mean absolute relative error versus exact products, in percent.

    Pairs whose exact product is zero are excluded.  The mean is accumulated
    with math.fsum, so the reported value cannot depend on how a sweep was
    partitioned.
    """
    if isinstance(policy, Exhaustive):
        if cfg.n != 8:
            raise ExhaustiveTooLarge(
                f"exhaustive sweep at n={cfg.n} needs {(1 << cfg.n) ** 2} pairs; use Sampled"
            )
        a, b = _exhaustive_pairs(cfg.n)
    elif isinstance(policy, Sampled):
        a, b = sample_operand_pairs(cfg.n, policy.count, policy.seed)
        keep = (a > 0) & (b > 0)
        a, b = a[keep], b[keep]
    else:
        raise TypeError(f"unknown sample policy {policy!r}")

    exact = a.astype(np.float64) * b.astype(np.float64)
    approx = product_array(a, b, cfg).astype(np.float64)
    err = np.abs(approx - exact) / exact
    return 100.0 * math.fsum(err.tolist()) / err.size


@dataclass(frozen=True)
class FlipCampaign:
    """Tally of an internal single-flip campaign over one multiplier config."""

    total: int
    masked: int
    detected: int
    silent: int

    @property
    def coverage_percent(self) -> float:
        """Faults that did not end as silent corruptions, in percent."""
        return 100.0 * (1.0 - self.silent / self.total) if self.total else 100.0


def internal_flip_campaign(cfg: MultConfig, policy: SamplePolicy) -> FlipCampaign:
    """Flip every adder result bit once per operand pair and classify outcomes.

    A flip is *masked* when the product still equals the fault-free product,
    *detected* when the duplicate slice flags it, and *silent* otherwise.
    Run with h=0 to model the unprotected logarithmic multiplier.
    """
    if cfg.family != ADAM:
        raise ValueError("internal_flip_campaign needs an adam config")
    if isinstance(policy, Exhaustive):
        if cfg.n != 8:
            raise ExhaustiveTooLarge("exhaustive flip campaign is 8-bit only")
        a, b = _exhaustive_pairs(cfg.n)
    else:
        a, b = sample_operand_pairs(cfg.n, policy.count, policy.seed)
    w = cfg.mantissa_bits
    total = masked = detected = silent = 0
    for ai, bi in zip(a.tolist(), b.tolist()):
        clean = adam_mul(ai, bi, cfg).product
        for bit in range(w + 1):
            out = adam_mul(ai, bi, cfg, (bit,))
            total += 1
            if out.fault_detected:
                detected += 1
            elif out.product == clean:
                masked += 1
            else:
                silent += 1
    return FlipCampaign(total, masked, detected, silent)
