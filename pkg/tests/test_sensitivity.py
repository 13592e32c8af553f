import math

import numpy as np
import pytest

from cefinfer import sensitivity as sv
from cefinfer.inference import SamplerConfig
from cefinfer.maxent import covariances, solve_covariance_constraints

FAST = sv.SweepConfig(SamplerConfig(steps=30_000, burn_in=3_000, thin=3), grid_size=256, map_starts=4)


@pytest.fixture(scope="module")
def small_sweep(table1):
    return sv.run_sweep(table1, 80, sv.SweepGrid((0.0, 0.5), (0.0, 0.5)), FAST, seed=5)


@pytest.mark.parametrize("alphas", [(), (0.5, 0.2), (0.1, 0.1), (0.0, 1.2), (math.nan,)])
def test_grid_validation(alphas):
    with pytest.raises(ValueError):
        sv.SweepGrid(alphas, (0.0,))


def test_grid_order():
    g = sv.SweepGrid((-0.5, 0.5), (0.0, 0.35, 0.9))
    assert g.cells() == [(-0.5, 0.0), (-0.5, 0.35), (-0.5, 0.9), (0.5, 0.0), (0.5, 0.35), (0.5, 0.9)]
    assert sv.SweepGrid.square([0, 1]).cells() == [(0, 0), (0, 1), (1, 0), (1, 1)]


def test_cell_seeds_are_stable_and_distinct():
    seeds = [sv.cell_seed(7, i) for i in range(20)]
    assert seeds == [sv.cell_seed(7, i) for i in range(20)]
    assert len(set(seeds)) == 20
    assert sv.cell_seed(8, 0) != seeds[0]


@pytest.mark.parametrize("alpha", [-0.9, -0.35, 0.0, 0.5, 0.9])
@pytest.mark.parametrize("delta", [-0.5, 0.0, 0.35, 0.9])
def test_cell_reference_meets_targets(alpha, delta):
    cov = covariances(solve_covariance_constraints(alpha, delta).qhat)
    assert cov["at"] == pytest.approx(alpha, abs=1e-12)
    assert cov["az"] == pytest.approx(delta, abs=1e-12)


def test_sweep_shape(small_sweep):
    assert [(r.alpha, r.delta) for r in small_sweep] == [(0, 0), (0, 0.5), (0.5, 0), (0.5, 0.5)]
    for r in small_sweep:
        assert r.ok
        assert 0 <= r.p_neg <= 1 and r.pte_sd >= 0
        assert 0.05 < r.accept_rate < 0.95
        assert r.curves["pte"].integral() == pytest.approx(1.0, abs=1e-6)


def test_null_cell_is_baseline(table1, small_sweep):
    base = sv.baseline(table1, 80, FAST)
    cell = small_sweep[0]
    assert cell.curves["pte"].l1_distance(base.curves["pte"]) < 1e-6
    assert cell.curves["marg_pte"].l1_distance(base.curves["marg_pte"]) < 0.1


def test_sign_flip_relabels_confounder(table1):
    a, b = sv.run_sweep(table1, 80, sv.SweepGrid((-0.35, 0.35), (-0.5, 0.5)), FAST, seed=1)[::3]
    assert (a.alpha, b.alpha) == (-0.35, 0.35)
    assert a.curves["pte"].l1_distance(b.curves["pte"]) < 0.02
    assert a.extras["pte_mode_A"] == pytest.approx(b.extras["pte_mode_notA"], abs=2 / 256)
    assert a.extras["map_q_A"] == pytest.approx(1 - b.extras["map_q_A"], abs=1e-3)
    assert a.curves["qzt"].l1_distance(b.curves["qzt"]) < 0.15


def test_failing_cell_does_not_abort(table1, monkeypatch):
    real = sv.run_cell

    def flaky(data, n, alpha, delta, cfg, seed):
        if alpha > 0:
            raise ValueError("boom")
        return real(data, n, alpha, delta, cfg, seed)

    monkeypatch.setattr(sv, "run_cell", flaky)
    res = sv.run_sweep(table1, 80, sv.SweepGrid((0.0, 0.5), (0.0,)), FAST)
    assert res[0].ok and not res[1].ok
    assert "boom" in res[1].errors and math.isnan(res[1].pte_mode)


def test_sweep_rejects_joint_data(table2):
    with pytest.raises(ValueError):
        sv.run_sweep(table2, 80, sv.SweepGrid((0.0,), (0.0,)), FAST)


def test_csv_round_trip(tmp_path, small_sweep):
    bad = sv.SweepCellResult(1.0, 1.0, errors="ValueError: x, y")
    rows = small_sweep + [bad]
    path = tmp_path / "sweep.csv"
    sv.write_sweep_csv(path, rows)
    raw = path.read_bytes()
    assert b"\r" not in raw
    assert raw.split(b"\n")[0].decode().split(",")[:10] == list(sv.FIXED_COLUMNS)
    back = sv.read_sweep_csv(path)
    for r, s in zip(rows, back):
        a, b = r.row(), s.row()
        assert a.keys() == b.keys()
        for k in a:
            if k == "errors":
                assert a[k] == b[k]
            else:
                assert a[k] == b[k] or (math.isnan(a[k]) and math.isnan(b[k]))
    assert sv.sweep_csv(back) == raw.decode()


def test_mixture_weights():
    from cefinfer.inference import DensityCurve
    x = np.linspace(0, 1, 101)
    m = sv.mix([DensityCurve(x, np.ones(101)), DensityCurve(x, 2 * x)], [0.25, 0.75])
    assert m.integral() == pytest.approx(1.0)
    assert m.mean == pytest.approx(0.25 * 0.5 + 0.75 * 2 / 3, abs=1e-4)


def test_reweighting_matches_direct_sampling(table1):
    from cefinfer.inference import run_chain
    from cefinfer.models import ModelCase
    cfg = SamplerConfig(steps=200_000, burn_in=10_000, thin=5)
    base = run_chain(ModelCase.latent(), table1, 80, cfg)
    rw = sv.reweight_chain(base, 0.5, 0.9, 256)
    direct = run_chain(ModelCase.sensitivity(0.5, 0.9), table1, 80, cfg, stream=1)
    for key in ("qzt", "qztbar"):
        assert rw[key].l1_distance(sv.margin_curves(direct, grid_size=256)[key]) < 0.05
    assert 0.5 * len(base.samples) < rw["ess"] <= len(base.samples)
    null = sv.reweight_chain(base, 0.0, 0.0, 256)
    plain = sv.margin_curves(base, grid_size=256)
    assert null["marg_pte"].l1_distance(plain["marg_pte"]) < 1e-9
    with pytest.raises(ValueError):
        sv.reweight_chain(base, 1.0, 0.0)
    with pytest.raises(ValueError):
        sv.reweight_chain(direct, 0.0, 0.0)
