import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from cefinfer import effects as ef
from cefinfer import inference as inf
from cefinfer.models import ModelCase
from cefinfer.tables import FreqTensor, TableError, UndefinedConditionalError

TZ = ("t", "z")
probs4 = st.lists(st.floats(0, 1), min_size=4, max_size=4).filter(lambda v: sum(v) > 1e-6)


def tz(values):
    v = np.asarray(values, dtype=float)
    return FreqTensor.from_flat(v / v.sum(), TZ)


def curve(values):
    return inf.DensityCurve.on_support(0.0, 1.0, values)


def test_ate_cov_examples(table1):
    assert ef.ate_cov(table1) == pytest.approx(0.1, abs=1e-12)
    assert ef.ate_cov(FreqTensor.uniform(TZ)) == pytest.approx(0.0, abs=1e-15)
    assert ef.ate_cov(tz([0.45, 0.30, 0.175, 0.075])) == pytest.approx(0.05, abs=1e-12)


@given(probs4)
def test_ate_cov_bounded(v):
    f = tz(v)
    c = ef.ate_cov(f)
    assert abs(c) <= 1 + 1e-12
    if abs(c) > 1 - 1e-12:
        # all mass on one diagonal
        cells = f.flat()
        assert cells[1] + cells[2] < 1e-9 or cells[0] + cells[3] < 1e-9


def test_ate_cov_needs_tz(table2):
    with pytest.raises(TableError):
        ef.ate_cov(table2)


def test_ate_diff_examples(table1, table2):
    assert ef.ate_diff(table2, ("a", "A")) == pytest.approx(-0.2, abs=1e-12)
    assert ef.ate_diff(table2, ("a", "notA")) == pytest.approx(-0.2, abs=1e-12)
    assert ef.ate_diff(table1) == pytest.approx(0.2, abs=1e-12)


def test_ate_diff_errors(table2):
    empty = FreqTensor(("a", "t", "z"), np.array([[[0, 0], [0.25, 0.25]], [[0.25, 0.25], [0, 0]]]))
    with pytest.raises(UndefinedConditionalError):
        ef.ate_diff(empty, ("a", "A"))
    with pytest.raises(TableError):
        ef.ate_diff(table2, ("t", "T"))


def test_uniform_convolution_is_triangle():
    p = ef.pte_convolution(curve(np.ones(512)), curve(np.ones(512)))
    assert len(p.grid) == 1023 and p.support == (-1.0, 1.0)
    assert np.max(np.abs(p.density - (1 - np.abs(p.grid)))) < 1e-3
    assert p.density[511] == pytest.approx(1.0, abs=1e-3)


def test_spikes_convolve_to_spike():
    x = np.linspace(0, 1, 513)
    spike = np.exp(-0.5 * ((x - 0.5) / 0.003) ** 2)
    p = ef.pte_convolution(curve(spike), curve(spike))
    assert p.mode == pytest.approx(0.0, abs=1e-12)
    assert p.sd < 0.01


def test_shifted_spikes_give_difference():
    x = np.linspace(0, 1, 513)
    a = curve(np.exp(-0.5 * ((x - 0.7) / 0.004) ** 2))
    b = curve(np.exp(-0.5 * ((x - 0.25) / 0.004) ** 2))
    assert ef.pte_convolution(a, b).mode == pytest.approx(0.45, abs=2 / 512)


def test_beta_convolution_matches_monte_carlo():
    x = np.linspace(0, 1, 512)
    a, b = stats.beta(9, 5), stats.beta(3, 4)
    p = ef.pte_convolution(curve(a.pdf(x)), curve(b.pdf(x)))
    rng = np.random.default_rng(0)
    d = a.rvs(400_000, random_state=rng) - b.rvs(400_000, random_state=rng)
    assert p.mean == pytest.approx(d.mean(), abs=2e-3)
    assert p.sd == pytest.approx(d.std(), abs=2e-3)
    assert p.prob_below(0.0) == pytest.approx(np.mean(d < 0), abs=3e-3)


dens = st.lists(st.floats(0, 10), min_size=64, max_size=64).filter(lambda v: sum(v) > 1e-3)


@given(dens)
def test_self_convolution_symmetric(v):
    p = ef.pte_convolution(curve(v), curve(v))
    assert np.allclose(p.density, p.density[::-1], atol=1e-9)
    assert p.integral() == pytest.approx(1.0, abs=1e-6)


@given(dens, dens)
def test_mean_additivity(u, v):
    a, b = curve(u), curve(v)
    assert ef.pte_convolution(a, b).mean == pytest.approx(a.mean - b.mean, abs=1e-6)


def test_grid_mismatch_rejected():
    with pytest.raises(ValueError):
        ef.pte_convolution(curve(np.ones(64)), curve(np.ones(65)))
    wide = inf.DensityCurve.on_support(-1.0, 1.0, np.ones(64))
    with pytest.raises(ValueError):
        ef.pte_convolution(wide, wide)


def test_marginal_model_pte_is_positive(table1):
    case = ModelCase.marginal()
    treated, untreated = (inf.grid_marginal(case, table1, 80, k, 201) for k in (1, 2))
    s = ef.pte_summary(ef.pte_convolution(treated, untreated))
    assert s["mode"] == pytest.approx(0.1, abs=0.01)
    assert s["p_pos"] > 0.5
    assert s["p_neg"] + s["p_pos"] == pytest.approx(1.0)
