"""Reusable fault-campaign loops shared by the CLI, the search, and the tests."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import _rng
from .faults import FaultPlan, RngSpec, plan_ber_weight_faults, plan_single_activation_fault
from .metrics import CampaignRecord, sdc_rates
from .network import PROT_MSB, QuantizedNetwork, evaluate_accuracy


def weight_fault_plan(
    model: QuantizedNetwork,
    ber: float,
    rng: RngSpec,
    *,
    bit_indices: Sequence[int] | None = None,
) -> FaultPlan:
    """BER plan over every stored weight bit of the prepared model."""
    model.ensure_prepared()
    counts = [s.size for s in model.stored_]
    widths = list(model.stored_bits_)
    names = [l.name for l in model.layers]
    return plan_ber_weight_faults(
        counts, widths, ber, rng, targets=names, bit_indices=bit_indices
    )


def weight_ber_campaign(
    model: QuantizedNetwork,
    X,
    y,
    *,
    ber: float,
    seeds: Sequence[int],
    stream_id: int = 0,
    protection_label: str = "none",
    bit_indices: Sequence[int] | None = None,
    with_sdc: bool = True,
) -> list[CampaignRecord]:
    """One campaign cell per seed: persistent weight flips at the given BER."""
    model.ensure_prepared()
    golden_logits = model.predict_logits(X)
    labels = np.asarray(y, dtype=np.int64)
    golden = float(np.mean(np.argmax(golden_logits, axis=1) == labels))
    records = []
    for seed in seeds:
        plan = weight_fault_plan(
            model, ber, RngSpec(seed, stream_id), bit_indices=bit_indices
        )
        faulty_logits = model.predict_logits(X, plan)
        faulty = float(np.mean(np.argmax(faulty_logits, axis=1) == labels))
        sdc = sdc_rates(golden_logits, faulty_logits) if with_sdc else None
        records.append(
            CampaignRecord(
                golden_accuracy=golden,
                faulty_accuracy=faulty,
                ber=ber,
                seed=seed,
                protection=protection_label,
                sdc=sdc,
            )
        )
    return records


def sample_activation_plan(
    model: QuantizedNetwork,
    seed: int,
    *,
    bit_choices: Sequence[int],
    stream_id: int = 1,
) -> FaultPlan:
    """One uniform random single activation-bit flip, counter-seeded.

    Uniform over layers, then elements, consuming units, and the given bit
    positions (e.g. high-order bits for worst-case transient campaigns).
    """
    u = _rng.uniform01(seed, stream_id, 4)
    li = int(u[0] * len(model.layers))
    layer = model.layers[min(li, len(model.layers) - 1)]
    element = min(int(u[1] * layer.in_dim), layer.in_dim - 1)
    bit = bit_choices[min(int(u[2] * len(bit_choices)), len(bit_choices) - 1)]
    invocation = min(int(u[3] * layer.out_dim), layer.out_dim - 1)
    return plan_single_activation_fault(
        layer.name,
        element,
        bit,
        invocation,
        layer_size=layer.in_dim,
        word_bits=model.activation_bits,
        n_invocations=layer.out_dim,
    )


def activation_flip_campaign(
    model: QuantizedNetwork,
    X,
    y,
    *,
    n_trials: int,
    base_seed: int,
    bit_choices: Sequence[int] | None = None,
    protection_label: str = "none",
) -> list[CampaignRecord]:
    """Transient single activation-bit flips, one uniform site per trial."""
    model.ensure_prepared()
    if bit_choices is None:
        bit_choices = [model.activation_bits - 1, model.activation_bits - 2]
    golden_logits = model.predict_logits(X)
    labels = np.asarray(y, dtype=np.int64)
    golden = float(np.mean(np.argmax(golden_logits, axis=1) == labels))
    records = []
    for trial in range(n_trials):
        plan = sample_activation_plan(model, base_seed + trial, bit_choices=bit_choices)
        faulty_logits = model.predict_logits(X, plan)
        faulty = float(np.mean(np.argmax(faulty_logits, axis=1) == labels))
        records.append(
            CampaignRecord(
                golden_accuracy=golden,
                faulty_accuracy=faulty,
                ber=0.0,
                seed=base_seed + trial,
                protection=protection_label,
                sdc=sdc_rates(golden_logits, faulty_logits),
            )
        )
    return records


def mean_vulnerability_pp(records: Sequence[CampaignRecord]) -> float:
    return float(np.mean([r.vulnerability_pp for r in records])) if records else 0.0


def protected_vs_unprotected(
    model: QuantizedNetwork,
    X,
    y,
    *,
    ber: float,
    seeds: Sequence[int],
    bit_indices: Sequence[int] | None = None,
) -> tuple[list[CampaignRecord], list[CampaignRecord]]:
    """The same BER campaign on the MSB-protected and unprotected model."""
    protected = model.with_protection(PROT_MSB).prepare()
    unprotected = model.with_protection("none").prepare()
    rec_p = weight_ber_campaign(
        protected, X, y, ber=ber, seeds=seeds, protection_label="msb",
        bit_indices=bit_indices,
    )
    rec_u = weight_ber_campaign(
        unprotected, X, y, ber=ber, seeds=seeds, protection_label="none",
        bit_indices=bit_indices,
    )
    return rec_p, rec_u
