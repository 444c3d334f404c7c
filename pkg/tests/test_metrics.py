import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bitfault.errors import ShapeMismatch
from bitfault.metrics import (
    CampaignRecord,
    PDropInputs,
    RapInputs,
    fault_coverage,
    p_drop,
    rap,
    sdc_rates,
    softmax,
    vulnerability,
)


class TestVulnerability:
    def test_drop(self):
        assert vulnerability(0.90, 0.82) == pytest.approx(8.0)

    def test_identity(self):
        assert vulnerability(0.5, 0.5) == 0.0

    def test_kept_signed(self):
        assert vulnerability(0.80, 0.85) == pytest.approx(-5.0)

    def test_range_checked(self):
        with pytest.raises(ValueError):
            vulnerability(1.2, 0.5)


def logits_with_top_prob(p: float) -> np.ndarray:
    # two classes: logit gap d gives softmax top probability 1/(1+exp(-d))
    return np.array([math.log(p / (1 - p)), 0.0])


class TestSdc:
    def test_identical_logits(self):
        g = np.array([[1.0, 2.0, 3.0], [5.0, 1.0, 0.0]])
        rates = sdc_rates(g, g)
        assert rates.sdc1 == 0.0 and rates.sdc10 == 0.0

    def test_top1_change_counts_sdc1(self):
        g = np.array([[0.0, 0.0, 0.0, 1.0, 0.0, 0.0]])
        f = np.array([[0.0, 0.0, 0.0, 0.0, 0.0, 1.0]])
        rates = sdc_rates(g, f)
        assert rates.sdc1 == 100.0 and rates.sdc10 == 0.0

    def test_confidence_drop_counts_sdc10(self):
        g = logits_with_top_prob(0.90)
        f = logits_with_top_prob(0.75)  # relative drop 16.7% > 10%
        rates = sdc_rates(g, f)
        assert rates.sdc1 == 0.0 and rates.sdc10 == 100.0

    def test_small_confidence_drop_not_counted(self):
        g = logits_with_top_prob(0.90)
        f = logits_with_top_prob(0.85)  # relative drop 5.6%
        rates = sdc_rates(g, f)
        assert rates.sdc1 == 0.0 and rates.sdc10 == 0.0

    def test_categories_disjoint_and_bounded(self):
        rng = np.random.default_rng(3)
        g = rng.normal(size=(200, 10))
        f = g + rng.normal(scale=2.0, size=(200, 10))
        rates = sdc_rates(g, f)
        assert 0.0 <= rates.sdc1 + rates.sdc10 <= 100.0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            sdc_rates(np.zeros((2, 3)), np.zeros((2, 4)))

    def test_softmax_rows_normalized(self):
        p = softmax(np.array([[1.0, 2.0, 3.0]]))
        assert p.sum() == pytest.approx(1.0)


class TestFaultCoverage:
    def test_extremes(self):
        assert fault_coverage(0.0) == 100.0
        assert fault_coverage(100.0) == 0.0

    def test_direct_formula(self):
        assert fault_coverage(22.3) == pytest.approx(77.7)

    def test_identity_with_sdc_of_identical_logits(self):
        g = np.ones((4, 3))
        assert fault_coverage(sdc_rates(g, g).sdc1) == 100.0

    def test_range_checked(self):
        with pytest.raises(ValueError):
            fault_coverage(101.0)


class TestPDrop:
    def test_zero_drop_annihilates(self):
        inp = PDropInputs(10, 8, 1.0, 1.0, 1e-9, 1e-5, 0.0)
        assert p_drop(inp) == 0.0

    def test_worked_example(self):
        inp = PDropInputs(10, 8, 1.0, 1.0, 1e-9, 1e-5, 0.5)
        assert p_drop(inp) == pytest.approx(3.2e-11, rel=1e-12)

    def test_width_doubling_quadruples(self):
        a = PDropInputs(10, 8, 2.0, 1.0, 1e-9, 1e-5, 0.5)
        b = PDropInputs(10, 16, 2.0, 1.0, 1e-9, 1e-5, 0.5)
        assert p_drop(b) / p_drop(a) == pytest.approx(4.0)

    def test_invariants(self):
        with pytest.raises(ValueError):
            PDropInputs(10, 8, 1.0, 0.0, 1e-9, 1e-5, 0.5)
        with pytest.raises(ValueError):
            PDropInputs(-1, 8, 1.0, 1.0, 1e-9, 1e-5, 0.5)

    @given(
        scale=st.floats(min_value=1.0, max_value=10.0),
        base=st.floats(min_value=0.01, max_value=1.0),
    )
    @settings(max_examples=50, deadline=None)
    def test_monotone_in_each_factor(self, scale, base):
        ref = PDropInputs(100, 8, 1.0, 1.0, 1e-9, 1e-4, base)
        v0 = p_drop(ref)
        for field in ("param_count", "bit_width", "lifetime", "p_single", "ber", "acc_drop"):
            kwargs = dict(
                param_count=100.0, bit_width=8.0, lifetime=1.0,
                test_interval=1.0, p_single=1e-9, ber=1e-4, acc_drop=base,
            )
            kwargs[field] = kwargs[field] * scale
            assert p_drop(PDropInputs(**kwargs)) >= v0


class TestRap:
    def test_worked_example(self):
        assert rap(RapInputs(0.02, 1.1, 1.2)) == pytest.approx(0.0264, rel=1e-12)

    def test_unit_factor_identity(self):
        assert rap(RapInputs(0.3, 1.0, 2.0)) == pytest.approx(0.6)

    def test_halving_drop_halves_rap(self):
        full = rap(RapInputs(0.4, 1.3, 1.7))
        half = rap(RapInputs(0.2, 1.3, 1.7))
        assert half / full == pytest.approx(0.5)

    def test_positive_overheads_required(self):
        with pytest.raises(ValueError):
            RapInputs(0.1, 0.0, 1.0)


class TestCampaignRecord:
    def test_vulnerability_property(self):
        rec = CampaignRecord(golden_accuracy=0.9, faulty_accuracy=0.82, ber=1e-4, seed=1)
        assert rec.vulnerability_pp == pytest.approx(8.0)

    def test_accuracy_range_checked(self):
        with pytest.raises(ValueError):
            CampaignRecord(golden_accuracy=1.2, faulty_accuracy=0.5)
