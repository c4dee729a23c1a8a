import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import linear_decay
from trendflow.field import (
    Domain,
    ModelError,
    PolyVectorField,
    dumps,
    evaluate,
    jacobian,
    loads,
    monomials,
)
from trendflow.presets import readers_edits, readers_edits_normalized
from trendflow.series import ScalingSpec


def random_model(rng, n, degree, mode="full", scale=1.0):
    tables = []
    for i in range(n):
        tables.append({e: scale * rng.normal() for e in monomials(n, degree, i, mode)})
    return PolyVectorField(eps=tuple(rng.normal(size=n)), coeffs=tuple(tables), degree=degree, basis_mode=mode)


def fd_jacobian(model, x, step=1e-6):
    n = model.n
    J = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = step
        J[:, j] = (evaluate(model, x + e) - evaluate(model, x - e)) / (2 * step)
    return J


def test_planar_basis_order():
    assert monomials(2, 4, 0) == [(0, 1), (0, 2), (0, 3), (0, 4)]
    assert monomials(2, 4, 1) == [(1, 0), (2, 0), (3, 0), (4, 0)]


def test_full_basis_counts():
    assert len(monomials(3, 4, 0)) == 14
    assert len(monomials(3, 4, 0, "separable")) == 8
    assert all(e[1] == 0 for e in monomials(3, 4, 1))


def test_origin_maps_to_zero(rng):
    for n, d in [(2, 4), (3, 3), (4, 2)]:
        assert not evaluate(random_model(rng, n, d), np.zeros(n)).any()


def test_model3_at_unit_state():
    np.testing.assert_allclose(evaluate(readers_edits(), [1.0, 1.0]), [0.9184, -0.8810], atol=5e-5)


def test_pure_decay():
    np.testing.assert_array_equal(evaluate(linear_decay(), [2.0, 3.0]), [-2.0, -3.0])


def test_batched_evaluation_matches_rows(rng):
    m = random_model(rng, 3, 3)
    X = rng.uniform(0, 1, size=(7, 3))
    np.testing.assert_array_equal(evaluate(m, X), np.array([evaluate(m, x) for x in X]))


def test_evaluate_errors():
    m = linear_decay()
    with pytest.raises(ModelError, match="dimension"):
        evaluate(m, [1.0, 2.0, 3.0])
    with pytest.raises(ModelError, match="non-finite"):
        evaluate(m, [1.0, math.nan])


def test_jacobians_at_origin_match_printed_coefficients():
    np.testing.assert_allclose(jacobian(readers_edits(), [0.0, 0.0]), [[-0.3570, -0.2637], [1.2710, -0.2243]])
    np.testing.assert_allclose(
        jacobian(readers_edits_normalized(), [0.0, 0.0]), [[-0.2677, 2.3520], [1.1757, -0.4655]]
    )


def test_jacobian_against_central_differences(rng):
    for n, d, mode in [(2, 4, "full"), (3, 4, "full"), (3, 3, "separable")]:
        m = random_model(rng, n, d, mode)
        for x in rng.uniform(0, 1, size=(100, n)):
            J, F = jacobian(m, x), fd_jacobian(m, x)
            scale = max(1.0, np.abs(J).max())
            np.testing.assert_allclose(J, F, rtol=1e-5, atol=1e-5 * scale)


def test_jacobian_diagonal_is_eps(rng):
    m = random_model(rng, 3, 4)
    J = jacobian(m, rng.uniform(-2, 2, size=(20, 3)))
    for i in range(3):
        np.testing.assert_array_equal(J[:, i, i], m.eps[i])


def test_polynomial_degree_along_axis(rng):
    m = random_model(rng, 2, 4)
    base = rng.uniform(0, 1, size=2)
    h = 0.1
    for axis in range(2):
        pts = np.array([base + k * h * np.eye(2)[axis] for k in range(6)])
        vals = evaluate(m, pts)
        fifth = np.diff(vals, n=5, axis=0)
        assert np.abs(fifth).max() < 1e-9


def test_round_trip_is_bit_identical(rng):
    m = readers_edits()
    back = loads(dumps(m))
    assert back.eps == m.eps and back.coeffs == m.coeffs and back.degree == m.degree
    assert dumps(back) == dumps(m)

    m3 = random_model(rng, 3, 4).replace(
        domain=Domain((0.0, -1.0, 0.0), (2.0, 1.0, math.inf)), scaling=ScalingSpec((2.0, 3.0, 0.5), "max")
    )
    back = loads(dumps(m3))
    for i in range(3):
        assert set(back.coeffs[i]) == set(monomials(3, 4, i))
        assert len(back.coeffs[i]) == 14
    assert back.coeffs == m3.coeffs
    assert back.domain == m3.domain and back.scaling == m3.scaling and back.basis_mode == "full"


def _doc_with(term):
    doc = readers_edits().to_dict()
    doc["components"][0].append(term)
    return json.dumps(doc)


@pytest.mark.parametrize(
    "term, match",
    [
        ({"exponents": [0, 0], "coefficient": "1.0"}, "constant"),
        ({"exponents": [1, 1], "coefficient": "1.0"}, "own variable"),
        ({"exponents": [0, 5], "coefficient": "1.0"}, "exceeds degree"),
    ],
)
def test_invalid_documents_rejected(term, match):
    with pytest.raises(ModelError, match=match):
        loads(_doc_with(term))


def test_malformed_documents_rejected():
    with pytest.raises(ModelError):
        loads("{not json")
    doc = readers_edits().to_dict()
    doc["basis_mode"] = "sparse"
    with pytest.raises(ModelError, match="basis_mode"):
        PolyVectorField.from_dict(doc)
    del doc["eps"]
    with pytest.raises(ModelError):
        PolyVectorField.from_dict(doc)


def test_separable_rejects_cross_terms():
    with pytest.raises(ModelError, match="separable"):
        PolyVectorField(eps=(0, 0, 0), coeffs=({(0, 1, 1): 1.0}, {}, {}), degree=2, basis_mode="separable")


def test_domain_contract():
    with pytest.raises(ModelError):
        Domain((1.0,), (0.0,))
    d = Domain.box([0, 1, -2, 2])
    assert d.bounded and d.contains([0.5, -1]) and not d.contains([1.5, 0])
    assert not Domain.positive_orthant(2).bounded
    assert Domain.from_dict(Domain.positive_orthant(2).to_dict()) == Domain.positive_orthant(2)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 10.0), st.integers(0, 2**32 - 1))
def test_scaled_time_scales_field(c, seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng, 2, 3)
    x = rng.uniform(0, 1, size=2)
    np.testing.assert_allclose(evaluate(m.scaled_time(c), x), c * evaluate(m, x), rtol=1e-12, atol=1e-12)
