import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cefinfer.infotheory import multinomial_loglik, relative_entropy, shannon_entropy
from cefinfer.tables import FreqTensor

# 40-digit mpmath evaluations of the Table 1 sums
H_TABLE1 = 1.3762266043445461822
KL_TABLE1_UNIFORM = 0.010067756775344436710
LOGLIK_TABLE1_UNIFORM_80 = -0.80542054202755493682

UNIFORM4 = FreqTensor.uniform(("t", "z"))


def simplex(k):
    return arrays(np.float64, k, elements=st.floats(0.0, 1.0)).filter(lambda w: w.sum() > 1e-6).map(
        lambda w: w / w.sum()
    )


def test_entropy_examples(table1):
    assert shannon_entropy(FreqTensor.uniform()) == pytest.approx(math.log(8), abs=1e-15)
    assert shannon_entropy([1, 0, 0, 0]) == 0.0
    assert shannon_entropy(table1) == pytest.approx(H_TABLE1, abs=1e-14)


def test_relative_entropy_examples(table1):
    assert relative_entropy(table1, table1) == 0.0
    assert relative_entropy(table1, UNIFORM4) == pytest.approx(KL_TABLE1_UNIFORM, abs=1e-14)
    assert relative_entropy([1, 0, 0, 0], [0, 1, 0, 0]) == math.inf


def test_relative_entropy_shape_mismatch(table1):
    with pytest.raises(ValueError):
        relative_entropy(table1, FreqTensor.uniform())


def test_loglik_examples(table1):
    assert multinomial_loglik(table1, table1, 80) == 0.0
    assert multinomial_loglik(table1, UNIFORM4, 80) == pytest.approx(LOGLIK_TABLE1_UNIFORM_80, abs=1e-12)
    assert multinomial_loglik(table1, [0.5, 0.5, 0, 0], 80) == -math.inf


@given(simplex(8), st.floats(1, 1e4))
def test_loglik_linear_in_n(p, n):
    q = np.full(8, 1 / 8)
    assert multinomial_loglik(p, q, 2 * n) == pytest.approx(2 * multinomial_loglik(p, q, n), rel=1e-12, abs=1e-12)


@given(simplex(8), simplex(8))
def test_kl_nonnegative(p, q):
    assert relative_entropy(p, q) >= 0.0


@given(simplex(8))
def test_gibbs_identity(q):
    assert shannon_entropy(q) == pytest.approx(math.log(8) - relative_entropy(q, np.full(8, 1 / 8)), abs=1e-12)


@given(simplex(8))
def test_entropy_bounds(q):
    assert -1e-15 <= shannon_entropy(q) <= math.log(8) + 1e-12


@given(simplex(8), st.integers(0, 7), st.floats(1e-3, 0.1))
def test_kl_positive_off_diagonal(p, k, eps):
    q = p.copy()
    q[k] += eps
    q /= q.sum()
    if np.any((p > 0) & (q != p)):
        assert relative_entropy(p, q) > 0.0
