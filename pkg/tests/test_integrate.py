import math

import numpy as np
import pytest
from scipy.linalg import expm

from conftest import linear_decay, rotation
from trendflow.field import Domain, PolyVectorField
from trendflow.integrate import BlowUpError, advance, advance_many, terminations, trajectory
from trendflow.portrait import find_fixed_points, working_box
from trendflow.presets import readers_edits

DECAY_1D = PolyVectorField(eps=(-1.0,), coeffs=({},), degree=1)


def test_decay_matches_exponential():
    assert abs(advance(DECAY_1D, [1.0], 1.0, 0.01)[0] - math.exp(-1)) < 1e-6


def test_rk4_convergence_order():
    hs = [0.1, 0.05, 0.025, 0.0125]
    errs = [abs(advance(DECAY_1D, [1.0], 1.0, h)[0] - math.exp(-1)) for h in hs]
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert min(orders) >= 3.9, orders


def test_zero_field_is_stationary():
    m = PolyVectorField(eps=(0.0, 0.0), coeffs=({}, {}), degree=1)
    np.testing.assert_array_equal(advance(m, [0.3, 7.0], 2.5), [0.3, 7.0])


def test_rotation_quarter_turn():
    np.testing.assert_allclose(advance(rotation(), [1.0, 0.0], math.pi / 2, 0.001), [0.0, 1.0], atol=1e-6)


def test_linear_field_matches_matrix_exponential(rng):
    for _ in range(5):
        A = rng.normal(size=(3, 3))
        A *= 5.0 / np.linalg.norm(A, 2)
        tables = tuple({tuple(int(k == j) for k in range(3)): A[i, j] for j in range(3) if j != i} for i in range(3))
        m = PolyVectorField(eps=tuple(np.diag(A)), coeffs=tables, degree=1)
        x0 = rng.uniform(-1, 1, size=3)
        np.testing.assert_allclose(advance(m, x0, 1.0, 0.01), expm(A) @ x0, atol=1e-6)


def test_composition_is_exact_on_step_multiples():
    m = readers_edits()
    s = np.array([0.4, 0.3])
    np.testing.assert_array_equal(advance(m, s, 0.75, 0.01), advance(m, advance(m, s, 0.25, 0.01), 0.5, 0.01))


def test_partial_last_step():
    # span 0.105 = 10 steps of 0.01 + one of 0.005
    assert abs(advance(DECAY_1D, [1.0], 0.105, 0.01)[0] - math.exp(-0.105)) < 1e-10


def test_determinism(rng):
    m = readers_edits()
    X = rng.uniform(0, 1, size=(10, 2))
    np.testing.assert_array_equal(advance_many(m, X, 3.0), advance_many(m, X, 3.0))


def test_bad_arguments():
    with pytest.raises(ValueError):
        advance(DECAY_1D, [1.0], 1.0, 0.0)
    with pytest.raises(ValueError):
        advance(DECAY_1D, [1.0], -1.0)


def test_blow_up_reports_time():
    m = PolyVectorField(eps=(0.0, 0.0), coeffs=({(0, 4): 1.0}, {(4, 0): 1.0}), degree=4)
    with pytest.raises(BlowUpError) as info:
        advance(m, [3.0, 3.0], 10.0, 0.01)
    assert 0 < info.value.time_reached < 10.0


def test_start_on_fixed_point_converges_at_step_zero():
    tr = trajectory(linear_decay(), [0.0, 0.0], fixed_points=[[0.0, 0.0]], domain=Domain.box([-1, 1, -1, 1]))
    assert tr.termination.kind == "converged"
    assert tr.steps == 0 and tr.termination.time == 0.0


def test_escape_reports_bound_and_final_state_outside():
    m = PolyVectorField(eps=(1.0, 1.0), coeffs=({}, {}), degree=1)
    box = Domain.box([0, 1, 0, 1])
    tr = trajectory(m, [0.5, 0.25], domain=box)
    t = tr.termination
    assert (t.kind, t.axis, t.side) == ("escaped", 0, "upper")
    assert not box.contains(tr.states[-1])
    assert box.contains(tr.states[-2])
    assert abs(t.time - math.log(2)) < 0.011


def test_horizon_outcome_and_uniform_times():
    tr = trajectory(rotation(), [0.5, 0.0], horizon=5.0, domain=Domain.box([-1, 1, -1, 1]))
    assert tr.termination.kind == "horizon"
    assert np.allclose(np.diff(tr.times), 0.01)
    assert tr.states.shape[0] == tr.steps + 1 == 501


def test_start_outside_domain_rejected():
    with pytest.raises(ValueError, match="outside"):
        trajectory(linear_decay(), [2.0, 0.0], domain=Domain.box([-1, 1, -1, 1]))


@pytest.fixture(scope="module")
def model3_setup():
    m = readers_edits()
    box = working_box(m)
    fps = find_fixed_points(m, box)
    return m, box, np.array([f.location for f in fps]), fps


def test_model3_deep_start_reaches_b(model3_setup):
    m, box, locs, fps = model3_setup
    tr = trajectory(m, [0.7, 0.5], domain=box, fixed_points=locs)
    assert tr.termination.kind == "converged"
    assert fps[tr.termination.fixed_point].kind == "attractor-node"


def test_model3_small_start_spirals_out_of_domain(model3_setup):
    m, box, locs, _ = model3_setup
    tr = trajectory(m, [0.005, 0.005], domain=box, fixed_points=locs)
    assert tr.termination.kind == "escaped" and tr.termination.side == "lower"


def test_batch_outcomes_match_single_runs(model3_setup):
    m, box, locs, _ = model3_setup
    starts = np.array([[0.7, 0.5], [0.005, 0.005], [2.0, 1.0]])
    batch = terminations(m, starts, domain=box, fixed_points=locs)
    single = [trajectory(m, s, domain=box, fixed_points=locs).termination for s in starts]
    assert batch == single


def test_trajectory_csv(tmp_path):
    tr = trajectory(linear_decay(), [0.5, 0.5], horizon=0.05, domain=Domain.box([-1, 1, -1, 1]))
    tr.to_csv(tmp_path / "t.csv", ["a", "b"])
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "time,a,b" and len(lines) == tr.states.shape[0] + 1
