"""Reproducible fault plans and bit-flip application.

A fault plan is an immutable list of single-bit flip sites.  Construction is
fully deterministic: per-bit Bernoulli draws come from a counter-based stream
keyed by ``(seed, stream_id)`` and the site's linear index, so the same
(shape, ber, seed) always yields the same plan regardless of platform or
evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Sequence

import numpy as np

from . import _rng
from ._validation import check_probability, check_seed
from .errors import IndexOutOfRange

WEIGHT = "weight"
ACTIVATION = "activation"
ADDER = "adder"

_KINDS = (WEIGHT, ACTIVATION, ADDER)


@dataclass(frozen=True, order=True)
class FaultSite:
    """One bit flip: which kind of word, where, and at which use.

    ``invocation`` is 0 for persistent weight flips.  For transient faults it
    selects a single use within one forward pass: the consuming output unit
    for activation flips, and the flat MAC counter (out_index * fan_in +
    in_index) for adder flips.
    """

    kind: str
    target: str
    element: int
    bit: int
    invocation: int = 0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown fault kind {self.kind!r}")
        if self.element < 0 or self.bit < 0 or self.invocation < 0:
            raise IndexOutOfRange(f"negative index in fault site {self}")


@dataclass(frozen=True)
class RngSpec:
    """Seed plus stream id; identical pairs reproduce identical draws."""

    seed: int
    stream_id: int = 0


@dataclass(frozen=True)
class FaultPlan:
    """Ordered, duplicate-free set of fault sites with its provenance."""

    sites: tuple[FaultSite, ...] = ()
    seed: int = 0
    ber: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "sites", tuple(self.sites))
        if len(set(self.sites)) != len(self.sites):
            raise ValueError("fault plan contains duplicate sites")

    def __len__(self) -> int:
        return len(self.sites)

    def __iter__(self) -> Iterator[FaultSite]:
        return iter(self.sites)

    def select(self, kind: str | None = None, target: str | None = None) -> tuple[FaultSite, ...]:
        """Sites filtered by kind and/or target id."""
        return tuple(
            s
            for s in self.sites
            if (kind is None or s.kind == kind) and (target is None or s.target == target)
        )

    def to_text(self) -> str:
        """Line-oriented serialization; round-trips bit-exactly."""
        ber = "none" if self.ber is None else repr(self.ber)
        lines = [f"bitfault-faultplan seed={self.seed} ber={ber}"]
        lines += [
            f"{s.kind},{s.target},{s.element},{s.bit},{s.invocation}" for s in self.sites
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "FaultPlan":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("bitfault-faultplan "):
            raise ValueError("not a bitfault fault-plan file")
        header = dict(tok.split("=", 1) for tok in lines[0].split()[1:])
        seed = int(header["seed"])
        ber = None if header["ber"] == "none" else float(header["ber"])
        sites = []
        for ln in lines[1:]:
            kind, target, element, bit, invocation = ln.split(",")
            sites.append(FaultSite(kind, target, int(element), int(bit), int(invocation)))
        return cls(sites=tuple(sites), seed=seed, ber=ber)


EMPTY_PLAN = FaultPlan()


def merge_plans(*plans: FaultPlan) -> FaultPlan:
    """Union of single-bit plans (multi-bit faults are built this way)."""
    seen: dict[FaultSite, None] = {}
    for p in plans:
        for s in p.sites:
            seen.setdefault(s)
    seed = plans[0].seed if plans else 0
    return FaultPlan(sites=tuple(seen), seed=seed, ber=None)


def plan_ber_weight_faults(
    model_shape: Sequence[int],
    word_bits: int | Sequence[int],
    ber: float,
    rng: RngSpec,
    *,
    targets: Sequence[str] | None = None,
    bit_indices: Sequence[int] | None = None,
    fixed_count: int | None = None,
) -> FaultPlan:
    """Per-bit Bernoulli(ber) flips over every stored weight bit.

    ``model_shape`` lists word counts per tensor; ``word_bits`` is the stored
    word width (scalar, or one per tensor when protected and unprotected
    tensors mix).  ``bit_indices`` restricts candidate bits within each word
    (e.g. MSB-only campaigns).  ``fixed_count`` switches to drawing exactly
    that many distinct sites, uniformly, for variance-controlled experiments.
    """
    check_probability(ber, "ber")
    check_seed(rng.seed)
    counts = [int(c) for c in model_shape]
    if any(c < 0 for c in counts):
        raise ValueError("tensor sizes must be nonnegative")
    widths = (
        [int(word_bits)] * len(counts)
        if isinstance(word_bits, int)
        else [int(w) for w in word_bits]
    )
    if len(widths) != len(counts):
        raise ValueError("word_bits must be scalar or one width per tensor")
    if targets is None:
        targets = [str(i) for i in range(len(counts))]
    elif len(targets) != len(counts):
        raise ValueError("targets must match model_shape")

    per_word_bits = []
    for w in widths:
        cand = list(range(w)) if bit_indices is None else [b for b in bit_indices if b < w]
        if bit_indices is not None and any(b >= w for b in bit_indices):
            raise IndexOutOfRange(f"bit index {max(bit_indices)} >= word width {w}")
        per_word_bits.append(cand)

    total = sum(c * len(bits) for c, bits in zip(counts, per_word_bits))
    if total == 0:
        return FaultPlan(seed=rng.seed, ber=ber)
    u = _rng.uniform01(rng.seed, rng.stream_id, total)
    if fixed_count is None:
        chosen = np.flatnonzero(u < ber)
    else:
        if fixed_count > total:
            raise ValueError("fixed_count exceeds the number of candidate sites")
        chosen = np.sort(np.argsort(u, kind="stable")[:fixed_count])

    sites = []
    offsets = np.cumsum([0] + [c * len(bits) for c, bits in zip(counts, per_word_bits)])
    for idx in chosen.tolist():
        ti = int(np.searchsorted(offsets, idx, side="right")) - 1
        local = idx - offsets[ti]
        bits = per_word_bits[ti]
        element, pos = divmod(local, len(bits))
        sites.append(FaultSite(WEIGHT, str(targets[ti]), int(element), bits[pos], 0))
    return FaultPlan(sites=tuple(sites), seed=rng.seed, ber=ber)


def plan_single_activation_fault(
    layer: str,
    element: int,
    bit: int,
    invocation: int,
    *,
    layer_size: int,
    word_bits: int,
    n_invocations: int | None = None,
) -> FaultPlan:
    """Plan with exactly one transient activation-bit flip."""
    if not 0 <= element < layer_size:
        raise IndexOutOfRange(f"element {element} outside layer of size {layer_size}")
    if not 0 <= bit < word_bits:
        raise IndexOutOfRange(f"bit {bit} outside activation width {word_bits}")
    if invocation < 0 or (n_invocations is not None and invocation >= n_invocations):
        raise IndexOutOfRange(f"invocation {invocation} out of range")
    site = FaultSite(ACTIVATION, str(layer), element, bit, invocation)
    return FaultPlan(sites=(site,))


def plan_single_adder_fault(
    layer: str,
    invocation: int,
    bit: int,
    *,
    adder_bits: int | None = None,
) -> FaultPlan:
    """Plan with one transient flip on a mantissa-adder result bit."""
    if bit < 0 or (adder_bits is not None and bit >= adder_bits):
        raise IndexOutOfRange(f"adder bit {bit} outside result width {adder_bits}")
    if invocation < 0:
        raise IndexOutOfRange("invocation must be nonnegative")
    return FaultPlan(sites=(FaultSite(ADDER, str(layer), 0, bit, invocation),))


def apply_word_faults(
    words: Sequence[int] | np.ndarray,
    plan: FaultPlan,
    *,
    word_bits: int,
    target: str | None = None,
) -> np.ndarray:
    """XOR the planned weight-bit flips into a copy of ``words``.

    Applying the same plan twice restores the original (XOR involution).
    Only sites of kind ``weight`` apply; ``target`` filters to one tensor.
    """
    out = np.array(words, dtype=np.int64, copy=True)
    flat = out.reshape(-1)
    for s in plan.sites:
        if s.kind != WEIGHT or (target is not None and s.target != target):
            continue
        if s.element >= flat.size:
            raise IndexOutOfRange(f"element {s.element} >= word count {flat.size}")
        if s.bit >= word_bits:
            raise IndexOutOfRange(f"bit {s.bit} >= word width {word_bits}")
        flat[s.element] ^= 1 << s.bit
    return out
