import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cefinfer import tables
from cefinfer.tables import (
    CountTable,
    FreqTensor,
    TableError,
    UndefinedConditionalError,
    assemble_joint,
    conditional,
    decompose,
    marginalize,
    normalize,
)

TABLE2_THETA = [0.5, 0.75, 0.25, 0.6, 0.7, 0.2, 0.3]
TABLE2_FREQS = [0.225, 0.15, 0.0875, 0.0375, 0.025, 0.1, 0.1125, 0.2625]

unit = st.floats(0.0, 1.0, allow_nan=False)
interior = st.floats(1e-3, 1 - 1e-3, allow_nan=False)


def test_normalize_table1(table1):
    assert table1.axis_names == ("t", "z")
    np.testing.assert_array_equal(table1.flat(), [0.25, 0.25, 0.20, 0.30])


def test_normalize_uniform():
    f = normalize(CountTable(("t", "z"), [1, 1, 1, 1]))
    np.testing.assert_array_equal(f.flat(), [0.25] * 4)


def test_normalize_table2(table2):
    np.testing.assert_allclose(table2.flat(), TABLE2_FREQS, atol=1e-15)
    assert tables.load_fixture("table2.csv").total == 80


def test_normalize_rejects_zero_total():
    with pytest.raises(TableError):
        normalize(CountTable(("t", "z"), [0, 0, 0, 0]))


@pytest.mark.parametrize("counts", [[1, 2, 3], [1, -1, 1, 1], [0.5, 1, 1, 1]])
def test_count_table_validation(counts):
    with pytest.raises(TableError):
        CountTable(("t", "z"), counts)


def test_freq_tensor_validation():
    with pytest.raises(TableError):
        FreqTensor(("t", "z"), [0.5, 0.5, 0.5, 0.5])
    with pytest.raises(TableError):
        FreqTensor(("t", "z"), [1.5, -0.5, 0, 0])
    with pytest.raises(TableError):
        FreqTensor(("z", "t"), [0.25] * 4)


def test_freq_tensor_is_immutable(table1):
    with pytest.raises(ValueError):
        table1.freqs[0, 0] = 0.0


def test_marginalize_drop_a_gives_table1(table2, table1):
    np.testing.assert_allclose(marginalize(table2, "a").flat(), table1.flat(), atol=1e-15)


def test_marginalize_drop_t_gives_table4(table2, table4):
    out = marginalize(table2, "t")
    assert out.axis_names == ("a", "z")
    np.testing.assert_allclose(out.flat(), [0.3125, 0.1875, 0.1375, 0.3625], atol=1e-15)
    np.testing.assert_allclose(out.flat(), table4.flat(), atol=1e-15)


@pytest.mark.parametrize("axis", ["a", "t", "z"])
def test_marginalize_uniform(axis):
    np.testing.assert_allclose(marginalize(FreqTensor.uniform(), axis).flat(), [0.25] * 4)


def test_marginalize_missing_axis(table1, table2):
    with pytest.raises(TableError):
        marginalize(table1, "a")
    with pytest.raises(TableError):
        marginalize(table2, "x")


def test_conditionals(table1, table2):
    assert conditional(table1, ("z", "Z"), {"t": "T"}) == pytest.approx(0.5, abs=1e-15)
    assert conditional(table1, ("z", 1), {"t": -1}) == pytest.approx(0.4, abs=1e-15)
    assert conditional(table2, ("z", "Z"), {"a": "A", "t": "notT"}) == pytest.approx(0.7, abs=1e-15)
    u = FreqTensor.uniform()
    assert conditional(u, ("z", 1), {"a": -1, "t": 1}) == 0.5


def test_conditional_zero_mass():
    f = FreqTensor(("t", "z"), [0.5, 0.5, 0.0, 0.0])
    with pytest.raises(UndefinedConditionalError):
        conditional(f, ("z", 1), {"t": -1})


def test_assemble_uniform():
    np.testing.assert_allclose(assemble_joint([0.5] * 7).flat(), [1 / 8] * 8, atol=1e-16)


def test_assemble_table2(table2):
    np.testing.assert_allclose(assemble_joint(TABLE2_THETA).flat(), table2.flat(), atol=1e-15)


def test_assemble_boundary_qa_one():
    q = assemble_joint([1.0, 0.3, 0.9, 0.2, 0.4, 0.6, 0.8]).freqs
    assert np.all(q[1] == 0.0)


def test_decompose_table2(table2):
    np.testing.assert_allclose(decompose(table2), TABLE2_THETA, atol=1e-14)


def test_decompose_uniform():
    np.testing.assert_allclose(decompose(FreqTensor.uniform()), [0.5] * 7, atol=1e-15)


def test_decompose_degenerate_names_margin():
    f = assemble_joint([0.0, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5])
    with pytest.raises(UndefinedConditionalError) as exc:
        decompose(f)
    assert exc.value.parameters[0] == "q_T|A"
    assert "q_T|A" in str(exc.value)


@given(st.lists(interior, min_size=7, max_size=7))
def test_round_trip_interior(theta):
    np.testing.assert_allclose(decompose(assemble_joint(theta)), theta, atol=1e-10)


def test_round_trip_bulk(rng):
    thetas = rng.uniform(0, 1, size=(10_000, 7))
    thetas = np.clip(thetas, 1e-9, 1 - 1e-9)
    worst = max(np.max(np.abs(decompose(assemble_joint(th)) - th)) for th in thetas)
    assert worst < 1e-10


@given(st.lists(unit, min_size=7, max_size=7))
def test_assemble_is_valid_everywhere(theta):
    q = assemble_joint(theta).flat()
    assert np.all(q >= 0)
    assert abs(q.sum() - 1) <= 1e-12


@given(arrays(np.float64, 8, elements=st.floats(0.0, 1.0)))
def test_marginalization_order_independent(w):
    if w.sum() <= 0:
        return
    f = FreqTensor.from_flat(w / w.sum())
    ta = marginalize(f, "t").freqs.sum(axis=0)
    at = marginalize(f, "a").freqs.sum(axis=0)
    np.testing.assert_allclose(ta, at, atol=1e-12)


def test_csv_round_trip(tmp_path):
    src = tables.load_fixture("table2.csv")
    path = tmp_path / "t.csv"
    tables.write_csv(src, path)
    back = tables.read_csv(path)
    assert back.flat() == src.flat()
    assert back.axes == src.axes


def test_csv_row_order_irrelevant(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("t,z,count\nnotT,notZ,24\nT,Z,20\nnotT,Z,16\nT,notZ,20\n")
    assert tables.read_csv(path).flat() == [20, 20, 16, 24]


def test_csv_missing_cell(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("a,t,z,count\nA,T,Z,1\nA,T,notZ,1\nA,notT,Z,1\nA,notT,notZ,1\n"
                    "notA,T,Z,1\nnotA,T,notZ,1\nnotA,notT,Z,1\n")
    with pytest.raises(TableError, match="level|missing"):
        tables.read_csv(path)


def test_csv_missing_cell_reported(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("t,z,count\nT,Z,1\nT,notZ,1\nnotT,Z,1\n")
    with pytest.raises(TableError, match="missing"):
        tables.read_csv(path)


def test_csv_bad_header(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("x,y,count\n")
    with pytest.raises(TableError, match="header"):
        tables.read_csv(path)


def test_json_counts(tmp_path):
    path = tmp_path / "t.json"
    doc = {"axes": ["a", "t", "z"], "levels": {"a": ["male", "female"]},
           "counts": [18, 12, 7, 3, 2, 8, 9, 21], "n": 80}
    path.write_text(json.dumps(doc))
    t = tables.read_json(path)
    assert t.total == 80
    assert t.axes[0].levels == ("male", "female")


def test_json_n_cross_check(tmp_path):
    path = tmp_path / "t.json"
    path.write_text(json.dumps({"axes": ["t", "z"], "counts": [1, 2, 3, 4], "n": 11}))
    with pytest.raises(TableError, match="n=11"):
        tables.read_json(path)


def test_table4_fixture(table4):
    assert table4.axis_names == ("a", "z")
    np.testing.assert_array_equal(table4.flat(), [0.3125, 0.1875, 0.1375, 0.3625])
