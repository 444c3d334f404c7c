"""Bit-width search: bisect the quantization width under accuracy and
reliability thresholds.

Each probe quantizes the model at the candidate width, checks the fault-free
accuracy floor, runs BER weight campaigns with MSB protection, and moves down
on pass / up on fail by half the distance to the top of the range (floored).
The update rule can reach a zero step, so a visited-width guard terminates
the loop; the trace records it.  The search halts on leaving the range, and
reports the lowest passing width.
"""

from __future__ import annotations

import io as _io
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from sklearn.base import BaseEstimator

from ._validation import check_is_fitted
from .campaigns import mean_vulnerability_pp, weight_ber_campaign
from .network import PROT_MSB, QuantizedNetwork

NOTE_REVISIT = "revisit-guard"
NOTE_RANGE_EXIT = "range-exit"


@dataclass(frozen=True)
class SearchConfig:
    """Thresholds and sweep grid for the bit-width search.

    ``accuracy_threshold`` is the fault-free floor in [0, 1];
    ``drop_threshold_pp`` the maximum permissible fault-induced accuracy drop
    in percentage points; ``width_range`` the inclusive [min, max] widths.
    """

    accuracy_threshold: float
    drop_threshold_pp: float
    width_range: tuple[int, int] = (2, 8)
    ber_grid: tuple[float, ...] = (1e-4,)
    seeds_per_ber: int = 10
    base_seed: int = 0

    def __post_init__(self):
        m, n = self.width_range
        if not (2 <= m <= n <= 8):
            raise ValueError(f"width range [{m}, {n}] must satisfy 2 <= m <= n <= 8")
        if not self.ber_grid:
            raise ValueError("ber_grid must be nonempty")
        if self.seeds_per_ber < 1:
            raise ValueError("seeds_per_ber must be >= 1")


@dataclass(frozen=True)
class StepEval:
    """What one probe measured: golden accuracy plus per-BER drops."""

    golden_accuracy: float
    drops_pp: Mapping[float, float] | None
    memory_bits: int
    exec_time_proxy: float


@dataclass
class SearchStep:
    index: int
    bit_width: int
    golden_accuracy: float
    drops_pp: dict[float, float] | None
    memory_bits: int
    exec_time_proxy: float
    passed: bool
    next_bit_width: int
    note: str = ""


@dataclass(frozen=True)
class SelectedQnn:
    bit_width: int
    golden_accuracy: float
    worst_drop_pp: float
    memory_bits: int
    exec_time_proxy: float


@dataclass
class SearchTrace:
    steps: list[SearchStep] = field(default_factory=list)
    outcome: str = "no_passing_width"
    selected: SelectedQnn | None = None

    def to_csv(self, ber_grid: Sequence[float]) -> str:
        buf = _io.StringIO()
        cols = ["step", "bit_width", "golden_accuracy"]
        cols += [f"drop_pp_{ber:g}" for ber in ber_grid]
        cols += ["memory_bits", "exec_time_proxy", "passed", "next_bit_width", "note"]
        buf.write(",".join(cols) + "\n")
        for s in self.steps:
            row = [str(s.index), str(s.bit_width), f"{s.golden_accuracy:.6f}"]
            for ber in ber_grid:
                if s.drops_pp is None or ber not in s.drops_pp:
                    row.append("")
                else:
                    row.append(f"{s.drops_pp[ber]:.6f}")
            row += [
                str(s.memory_bits),
                f"{s.exec_time_proxy:.6f}",
                str(int(s.passed)),
                str(s.next_bit_width),
                s.note,
            ]
            buf.write(",".join(row) + "\n")
        return buf.getvalue()

    def summary_text(self) -> str:
        lines = ["bitfault-dse-selection", f"outcome = {self.outcome}"]
        if self.selected is not None:
            q = self.selected
            lines += [
                f"bit_width = {q.bit_width}",
                f"golden_accuracy = {q.golden_accuracy!r}",
                f"worst_drop_pp = {q.worst_drop_pp!r}",
                f"memory_bits = {q.memory_bits}",
                f"exec_time_proxy = {q.exec_time_proxy!r}",
            ]
        return "\n".join(lines) + "\n"


Evaluator = Callable[[int], StepEval]


def make_model_evaluator(
    model: QuantizedNetwork,
    X,
    y,
    cfg: SearchConfig,
    *,
    mac_cost: Mapping[int, float] | None = None,
) -> Evaluator:
    """Probe a real model: quantize at the width, then run protected BER campaigns.

    Campaigns only run once the fault-free accuracy clears the threshold
    (drops_pp is None otherwise).  Campaign seeds derive from (base_seed, bit
    width, BER index), so a probe is reproducible in isolation; execution
    time is an invocation-count proxy (MAC count x per-MAC relative cost).
    """

    def evaluate(bit_width: int) -> StepEval:
        probe = model.with_protection(PROT_MSB).prepare(bit_width)
        golden = probe.score(X, y)
        drops = None
        if golden > cfg.accuracy_threshold:
            drops = {}
            for bi, ber in enumerate(cfg.ber_grid):
                seed0 = cfg.base_seed + 1000 * bit_width + 100 * bi
                records = weight_ber_campaign(
                    probe,
                    X,
                    y,
                    ber=ber,
                    seeds=range(seed0, seed0 + cfg.seeds_per_ber),
                    protection_label="msb",
                    with_sdc=False,
                )
                drops[ber] = mean_vulnerability_pp(records)
        cost = 1.0 if mac_cost is None else float(mac_cost.get(bit_width, 1.0))
        return StepEval(golden, drops, probe.memory_bits(), model.mac_count() * cost)

    return evaluate


def bitwidth_search(cfg: SearchConfig, evaluate: Evaluator) -> SearchTrace:
    """Run the threshold-gated bisection over [m, n].

    First probe is floor((m+n)/2).  On pass the width moves down by
    floor((n-w)/2), on fail up by the same amount; the loop ends on leaving
    the range or on revisiting a width (zero step).  Returns the full trace
    and the lowest passing configuration, if any.
    """
    m, n = cfg.width_range
    trace = SearchTrace()
    visited: set[int] = set()
    bw = (m + n) // 2
    while m <= bw <= n:
        if bw in visited:
            if trace.steps:
                trace.steps[-1].note = NOTE_REVISIT
            break
        visited.add(bw)
        ev = evaluate(bw)
        passed = (
            ev.golden_accuracy > cfg.accuracy_threshold
            and ev.drops_pp is not None
            and max(ev.drops_pp.values()) < cfg.drop_threshold_pp
        )
        step = (n - bw) // 2
        next_bw = bw - step if passed else bw + step
        trace.steps.append(
            SearchStep(
                index=len(trace.steps),
                bit_width=bw,
                golden_accuracy=ev.golden_accuracy,
                drops_pp=dict(ev.drops_pp) if ev.drops_pp is not None else None,
                memory_bits=ev.memory_bits,
                exec_time_proxy=ev.exec_time_proxy,
                passed=passed,
                next_bit_width=next_bw,
            )
        )
        if next_bw > n or next_bw < m:
            trace.steps[-1].note = NOTE_RANGE_EXIT
            break
        bw = next_bw
    passing = [s for s in trace.steps if s.passed]
    if passing:
        best = min(passing, key=lambda s: s.bit_width)
        trace.outcome = "selected"
        trace.selected = SelectedQnn(
            bit_width=best.bit_width,
            golden_accuracy=best.golden_accuracy,
            worst_drop_pp=max(best.drops_pp.values()),
            memory_bits=best.memory_bits,
            exec_time_proxy=best.exec_time_proxy,
        )
    return trace


class BitWidthSearch(BaseEstimator):
    """Sklearn-style wrapper: fit(X, y) runs the search on a bound model."""

    def __init__(
        self,
        model: QuantizedNetwork | None = None,
        accuracy_threshold: float = 0.5,
        drop_threshold_pp: float = 10.0,
        width_range: tuple[int, int] = (2, 8),
        ber_grid: tuple[float, ...] = (1e-4,),
        seeds_per_ber: int = 10,
        base_seed: int = 0,
    ):
        self.model = model
        self.accuracy_threshold = accuracy_threshold
        self.drop_threshold_pp = drop_threshold_pp
        self.width_range = width_range
        self.ber_grid = ber_grid
        self.seeds_per_ber = seeds_per_ber
        self.base_seed = base_seed

    def _config(self) -> SearchConfig:
        return SearchConfig(
            accuracy_threshold=self.accuracy_threshold,
            drop_threshold_pp=self.drop_threshold_pp,
            width_range=tuple(self.width_range),
            ber_grid=tuple(self.ber_grid),
            seeds_per_ber=self.seeds_per_ber,
            base_seed=self.base_seed,
        )

    def fit(self, X, y):
        if self.model is None:
            raise ValueError("BitWidthSearch needs a model to probe")
        cfg = self._config()
        self.trace_ = bitwidth_search(cfg, make_model_evaluator(self.model, X, y, cfg))
        self.best_width_ = (
            self.trace_.selected.bit_width if self.trace_.selected else None
        )
        return self

    def found(self) -> bool:
        check_is_fitted(self, "trace_")
        return self.trace_.selected is not None
