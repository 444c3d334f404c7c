"""Reliability and trade-off metrics for fault campaigns."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch


@dataclass(frozen=True)
class SdcRates:
    """Silent-data-corruption split: top-1 changes vs confidence-only drops."""

    sdc1: float
    sdc10: float


@dataclass
class CampaignRecord:
    """One campaign cell: golden vs faulty accuracy plus provenance."""

    golden_accuracy: float
    faulty_accuracy: float
    ber: float = 0.0
    seed: int = 0
    protection: str = "none"
    sdc: SdcRates | None = None

    def __post_init__(self):
        for name in ("golden_accuracy", "faulty_accuracy"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")

    @property
    def vulnerability_pp(self) -> float:
        return vulnerability(self.golden_accuracy, self.faulty_accuracy)


@dataclass(frozen=True)
class PDropInputs:
    """Factors of the lifetime accuracy-drop probability.

    The formula multiplies the parameter count and bit width squared with the
    lifetime-to-test-interval ratio, the single-flip probability, the bit
    error rate, and the measured accuracy drop.  It is kept verbatim in that
    form (including the squared N and W, which is dimensionally unusual) so
    reported numbers follow the established convention.  Units of lifetime,
    test_interval and p_single are the caller's, and must be consistent.
    """

    param_count: float
    bit_width: float
    lifetime: float
    test_interval: float
    p_single: float
    ber: float
    acc_drop: float

    def __post_init__(self):
        for name in ("param_count", "bit_width", "lifetime", "p_single", "ber"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.test_interval <= 0:
            raise ValueError("test_interval must be positive")


@dataclass(frozen=True)
class RapInputs:
    """Accuracy drop and the memory/performance overhead ratios.

    Overheads are ratios against the 8-bit unprotected baseline; smaller
    products indicate more reliable networks.
    """

    acc_drop: float
    mem_overhead: float
    perf_overhead: float

    def __post_init__(self):
        if self.mem_overhead <= 0 or self.perf_overhead <= 0:
            raise ValueError("overhead ratios must be positive")


def vulnerability(golden: float, faulty: float) -> float:
    """Accuracy drop in percentage points, kept signed (faults can help)."""
    for name, v in (("golden", golden), ("faulty", faulty)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} accuracy {v} outside [0, 1]")
    return 100.0 * (golden - faulty)


def softmax(logits) -> np.ndarray:
    """Row-wise stable softmax."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def sdc_rates(golden_logits, faulty_logits, rel_drop: float = 0.10) -> SdcRates:
    """Classify per-input corruption of the faulty logits.

    sdc1: percent of inputs whose top-1 class changed.  sdc10: percent whose
    top-1 class held but whose top-1 softmax confidence dropped by more than
    ``rel_drop`` relative to the golden run.  The two sets are disjoint.
    """
    g = np.asarray(golden_logits, dtype=np.float64)
    f = np.asarray(faulty_logits, dtype=np.float64)
    if g.ndim == 1:
        g = g.reshape(1, -1)
    if f.ndim == 1:
        f = f.reshape(1, -1)
    if g.shape != f.shape:
        raise ShapeMismatch(f"logit shapes differ: {g.shape} vs {f.shape}")
    if g.shape[0] == 0:
        raise ShapeMismatch("no logit rows to classify")
    top_g = g.argmax(axis=1)
    top_f = f.argmax(axis=1)
    changed = top_g != top_f
    rows = np.arange(g.shape[0])
    p_g = softmax(g)[rows, top_g]
    p_f = softmax(f)[rows, top_g]
    dropped = ~changed & ((p_g - p_f) > rel_drop * p_g)
    n = g.shape[0]
    return SdcRates(100.0 * changed.sum() / n, 100.0 * dropped.sum() / n)


def fault_coverage(sdc: float) -> float:
    """Percent of faults correctly handled: 100 minus the SDC percentage."""
    if not 0.0 <= sdc <= 100.0:
        raise ValueError(f"sdc percentage {sdc} outside [0, 100]")
    return 100.0 - sdc


def p_drop(inp: PDropInputs) -> float:
    """Lifetime accuracy-drop probability, evaluated verbatim in double precision."""
    return (
        inp.param_count**2
        * inp.bit_width**2
        * (inp.lifetime / inp.test_interval)
        * inp.p_single
        * inp.ber
        * inp.acc_drop
    )


def rap(inp: RapInputs) -> float:
    """Reliability-aware performance: acc_drop * mem_overhead * perf_overhead."""
    return inp.acc_drop * inp.mem_overhead * inp.perf_overhead
