import math
from pathlib import Path

import numpy as np
import pytest

from bitfault.io import load_dataset, load_model

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "fixtures"


@pytest.fixture(scope="session")
def desk_model():
    return load_model(FIXTURES / "model" / "model.ini")


@pytest.fixture(scope="session")
def test_data():
    return load_dataset(FIXTURES / "data" / "test.ini")


@pytest.fixture(scope="session")
def calib_data():
    return load_dataset(FIXTURES / "data" / "calib.ini")


def mitchell_oracle(a: int, b: int, n: int, t: int = 0) -> int:
    """Straight-line floating-point model of the piecewise log-multiply.

    Independent of the integer shift implementation: characteristics via
    frexp, mantissa fractions as floats, truncation as an explicit floor,
    the two-piece antilog in real arithmetic, one final floor.  All values
    are dyadic rationals well inside float64, so the model is exact.
    """
    if a == 0 or b == 0:
        return 0
    ka = math.frexp(a)[1] - 1
    kb = math.frexp(b)[1] - 1
    frac_bits = n - 1 - t
    xa = math.floor((a / 2.0**ka - 1.0) * 2.0**frac_bits) / 2.0**frac_bits
    xb = math.floor((b / 2.0**kb - 1.0) * 2.0**frac_bits) / 2.0**frac_bits
    s = xa + xb
    if s < 1.0:
        product = 2.0 ** (ka + kb) * (1.0 + s)
    else:
        product = 2.0 ** (ka + kb + 1) * s
    return math.floor(product)


def one_sided_z(diff: np.ndarray) -> float:
    """z statistic that the mean of paired differences exceeds zero."""
    diff = np.asarray(diff, dtype=np.float64)
    se = diff.std(ddof=1) / math.sqrt(diff.size)
    if se == 0.0:
        return math.inf if diff.mean() > 0 else 0.0
    return float(diff.mean() / se)


def two_sample_z(a: np.ndarray, b: np.ndarray) -> float:
    """z statistic that mean(a) exceeds mean(b), unpaired."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    se = math.sqrt(a.var(ddof=1) / a.size + b.var(ddof=1) / b.size)
    if se == 0.0:
        return math.inf if a.mean() > b.mean() else 0.0
    return float((a.mean() - b.mean()) / se)
