import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from trendflow.series import (
    ScalingSpec,
    SeriesError,
    SeriesFrame,
    concat,
    estimate_derivatives,
    load_csv,
    normalize_by_exogenous,
    rescale,
    split,
)


def _write(tmp_path, text, name="s.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_load_small_csv(tmp_path):
    f = load_csv(_write(tmp_path, "a,b\n1,2\n3,4\n5,6\n"))
    assert (f.T, f.n) == (3, 2)
    assert f.variable_names == ("a", "b")
    assert f.dt == 1.0
    np.testing.assert_array_equal(f.values, [[1, 2], [3, 4], [5, 6]])


def test_load_detects_time_column_and_keeps_labels(tmp_path):
    f = load_csv(_write(tmp_path, "month,Readers,Edits\n2008-01,1.5,2\n2008-02,1.6,2.1\n"), dt=0.5)
    assert f.variable_names == ("Readers", "Edits")
    assert f.time_labels == ("2008-01", "2008-02")
    assert f.dt == 0.5


def test_load_monthly_decade(tmp_path):
    lines = ["month,Readers,Edits"]
    for k in range(144):
        lines.append(f"{2008 + k // 12}-{k % 12 + 1:02d},{1000 + k},{50 - k / 10}")
    f = load_csv(_write(tmp_path, "\n".join(lines) + "\n"))
    assert (f.T, f.n) == (144, 2)


def test_blank_cell_is_rejected_with_location(tmp_path):
    with pytest.raises(SeriesError, match=r"missing value at row 1, column b"):
        load_csv(_write(tmp_path, "a,b\n1,2\n3,\n5,6\n"))


@pytest.mark.parametrize(
    "text, match",
    [
        ("a,b\n1,2\n3,4\n", "missing column 'c'"),
        ("a,b\n1,x\n3,4\n", "b"),
        ("a,b\n1,2\n", "at least 2"),
    ],
)
def test_load_errors(tmp_path, text, match):
    cols = ["a", "c"] if "column 'c'" in match else None
    with pytest.raises(SeriesError, match=match):
        load_csv(_write(tmp_path, text), cols)


def test_duplicate_names_rejected(tmp_path):
    with pytest.raises(SeriesError, match="duplicate"):
        load_csv(_write(tmp_path, "a,b\n1,2\n3,4\n"), {"a": "v", "b": "v"})


def test_missing_file():
    with pytest.raises(SeriesError, match="not found"):
        load_csv("/nonexistent/series.csv")


def test_frame_invariants():
    with pytest.raises(SeriesError):
        SeriesFrame(("a",), [[1.0]])
    with pytest.raises(SeriesError):
        SeriesFrame(("a",), [[1.0], [2.0]], dt=0.0)
    f = SeriesFrame(("a",), [[1.0], [2.0]])
    with pytest.raises(ValueError):
        f.values[0, 0] = 5.0


def test_constant_divisor_halves_column():
    f = SeriesFrame(("a", "b"), [[2.0, 1.0], [4.0, 3.0], [6.0, 5.0]])
    d = SeriesFrame(("pop",), [[2.0], [2.0], [2.0]])
    g = normalize_by_exogenous(f, {"a": d})
    np.testing.assert_array_equal(g.values[:, 0], [1.0, 2.0, 3.0])
    np.testing.assert_array_equal(g.values[:, 1], f.values[:, 1])
    assert g.scaling.divisors == {"a": "pop"}


def test_divisor_equal_to_variable_gives_ones():
    f = SeriesFrame(("a",), [[2.0], [5.0], [7.0]])
    g = normalize_by_exogenous(f, {"a": SeriesFrame(("a_copy",), f.values)})
    np.testing.assert_array_equal(g.values, np.ones((3, 1)))


def test_divisor_then_growth_adjuster():
    edits = SeriesFrame(("Edits",), [[10.0], [12.0], [15.0]])
    users = SeriesFrame(("users",), [[100.0], [120.0], [150.0]])
    researchers = SeriesFrame(("researchers",), [[2.0], [2.0], [4.0]])
    g = normalize_by_exogenous(edits, {"Edits": users}, {"Edits": researchers})
    np.testing.assert_allclose(g.values[:, 0], [0.1, 0.1, 0.05], rtol=1e-15)
    assert g.scaling.adjusters == {"Edits": "researchers"}


def test_normalize_errors():
    f = SeriesFrame(("a",), [[1.0], [2.0], [3.0]])
    with pytest.raises(SeriesError, match="length"):
        normalize_by_exogenous(f, {"a": SeriesFrame(("d",), [[1.0], [1.0]])})
    with pytest.raises(SeriesError, match="positive"):
        normalize_by_exogenous(f, {"a": SeriesFrame(("d",), [[1.0], [0.0], [1.0]])})


def test_normalize_round_trip(rng):
    v = rng.uniform(0.1, 5.0, size=(20, 2))
    d = rng.uniform(0.5, 3.0, size=(20, 1))
    f = SeriesFrame(("a", "b"), v)
    g = normalize_by_exogenous(f, {"a": SeriesFrame(("d",), d), "b": SeriesFrame(("d",), d)})
    np.testing.assert_allclose(g.values * d, v, rtol=1e-12)


def test_rescale_max():
    f = SeriesFrame(("a", "b"), [[50.0, 1.0], [200.0, 2.0], [100.0, 4.0]])
    g = rescale(f, "max")
    assert g.values.max(axis=0).tolist() == [1.0, 1.0]
    assert g.scaling.factors == (200.0, 4.0)
    assert g.scaling.mode == "max"


def test_rescale_none_is_identity():
    f = SeriesFrame(("a",), [[3.0], [4.0]])
    np.testing.assert_array_equal(rescale(f, "none").values, f.values)


def test_rescale_round_trip(rng):
    v = rng.uniform(0.0, 1e4, size=(30, 3))
    g = rescale(SeriesFrame(("a", "b", "c"), v), "max")
    np.testing.assert_allclose(g.scaling.to_raw(g.values), v, rtol=1e-12)


def test_rescale_errors():
    with pytest.raises(SeriesError, match="positive maximum"):
        rescale(SeriesFrame(("a",), [[0.0], [0.0]]), "max")
    with pytest.raises(SeriesError):
        rescale(SeriesFrame(("a",), [[1.0], [2.0]]), [0.0])
    with pytest.raises(SeriesError):
        rescale(SeriesFrame(("a",), [[1.0], [2.0]]), [-2.0])


def test_scaling_spec_round_trip():
    s = ScalingSpec((2.0, 0.1), "max", {"a": "pop"}, {"a": "res"})
    assert ScalingSpec.from_dict(s.to_dict()) == s


def test_derivatives_of_ramp():
    d = estimate_derivatives(SeriesFrame(("x",), [[0.0], [1.0], [2.0]]))
    np.testing.assert_array_equal(d.derivs, [[1.0], [1.0]])
    np.testing.assert_array_equal(d.states, [[0.0], [1.0]])


def test_derivatives_of_constant_are_zero():
    d = estimate_derivatives(SeriesFrame(("x", "y"), np.full((5, 2), 3.0)))
    assert not d.derivs.any()


def test_derivatives_hand_example():
    d = estimate_derivatives(SeriesFrame(("x", "y"), [[1.0, 2.0], [3.0, 5.0]], dt=0.5))
    assert d.M == 1
    np.testing.assert_array_equal(d.states, [[1.0, 2.0]])
    np.testing.assert_array_equal(d.derivs, [[4.0, 6.0]])


@pytest.mark.parametrize("test_len, sizes", [(3, (7, 3)), (7, (3, 7))])
def test_split_sizes(test_len, sizes):
    f = SeriesFrame(("x",), np.arange(10.0))
    train, test = split(f, test_len)
    assert (train.T, test.T) == sizes


@pytest.mark.parametrize("bad", [1, 8, 10])
def test_split_rejects(bad):
    with pytest.raises(SeriesError):
        split(SeriesFrame(("x",), np.arange(10.0)), bad)


@settings(max_examples=50, deadline=None)
@given(
    arrays(np.float64, st.tuples(st.integers(5, 30), st.integers(1, 3)), elements=st.floats(-1e3, 1e3)),
    st.data(),
)
def test_split_concat_identity(values, data):
    f = SeriesFrame(tuple(f"v{i}" for i in range(values.shape[1])), values, dt=0.25)
    k = data.draw(st.integers(2, f.T - 3))
    g = concat(*split(f, k))
    np.testing.assert_array_equal(g.values, f.values)
    assert g.dt == f.dt


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.floats(-10, 10), min_size=2, max_size=2),
    st.lists(st.floats(-10, 10), min_size=2, max_size=2),
    st.integers(2, 20),
)
def test_affine_series_has_constant_derivative(a, b, T):
    t = np.arange(T, dtype=float)[:, None] * 0.5
    f = SeriesFrame(("x", "y"), np.asarray(a) + t * np.asarray(b), dt=0.5)
    d = estimate_derivatives(f)
    np.testing.assert_allclose(d.derivs, np.broadcast_to(b, d.derivs.shape), atol=1e-9)


def test_rescale_commutes_with_differences(rng):
    f = SeriesFrame(("x", "y"), rng.uniform(1, 50, size=(12, 2)), dt=0.3)
    g = rescale(f, "max")
    np.testing.assert_allclose(
        estimate_derivatives(g).derivs, estimate_derivatives(f).derivs / np.array(g.scaling.factors), rtol=1e-12
    )
