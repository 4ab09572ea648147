import json

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from onebit_gna.model import make_signal, observe, sample_matrix, trial_rng
from onebit_gna.solver import (
    SingularGramError,
    SolverOptions,
    SolverReport,
    SolverState,
    active_set,
    gna_step,
    hard_threshold,
    initial_state,
    kkt_residual,
    newton_step,
    restricted_least_squares,
    run_gna,
)

PSI3 = np.eye(3)
Y3 = np.array([1.0, -2.0, 0.5])

finite = st.floats(-1e6, 1e6, allow_nan=False)


def test_hard_threshold_examples():
    np.testing.assert_array_equal(hard_threshold([3, -1, 2], 2), [3, 0, 2])
    np.testing.assert_array_equal(hard_threshold([2, -2], 1), [2, 0])
    z = np.array([0.5, -4.0, 1.0])
    np.testing.assert_array_equal(hard_threshold(z, 3), z)


def test_hard_threshold_tie_rule_prefers_smaller_index():
    np.testing.assert_array_equal(hard_threshold([1, -3, 3, 3, 1], 2), [0, -3, 3, 0, 0])
    np.testing.assert_array_equal(hard_threshold([1, 1, 1, 1], 3), [1, 1, 1, 0])


@pytest.mark.parametrize("s", [0, 4])
def test_hard_threshold_rejects_bad_s(s):
    with pytest.raises(ValueError):
        hard_threshold([1.0, 2.0, 3.0], s)


@given(z=arrays(float, st.integers(1, 30), elements=finite), data=st.data())
def test_hard_threshold_idempotent_and_keeps_largest(z, data):
    s = data.draw(st.integers(1, z.size))
    h = hard_threshold(z, s)
    np.testing.assert_array_equal(hard_threshold(h, s), h)
    kept = np.flatnonzero(h != 0)
    assert kept.size <= s
    # brute force: stable sort by decreasing magnitude, first s indices
    order = sorted(range(z.size), key=lambda i: (-abs(z[i]), i))[:s]
    expected = np.zeros_like(z)
    expected[order] = z[order]
    np.testing.assert_array_equal(h, expected)


def test_active_set_examples():
    assert active_set(np.zeros(3), [0.1, -0.9, 0.4], 1.0, 2).tolist() == [1, 2]
    assert active_set([0, -2, 0], [1 / 3, 0, 1 / 6], 0.9, 1).tolist() == [1]
    rng = np.random.default_rng(0)
    assert active_set(rng.normal(size=5), rng.normal(size=5), 0.9, 5).tolist() == [0, 1, 2, 3, 4]


def test_restricted_least_squares_examples():
    rng = np.random.default_rng(1)
    e1 = np.zeros((6, 1))
    e1[0, 0] = 1.0
    y = rng.normal(size=6)
    np.testing.assert_allclose(restricted_least_squares(e1, y, [0]), [y[0]])
    np.testing.assert_allclose(restricted_least_squares(PSI3, Y3, [1]), [-2.0])
    q, _ = np.linalg.qr(rng.normal(size=(10, 3)))
    y = rng.normal(size=10)
    np.testing.assert_allclose(restricted_least_squares(q, y, [0, 1, 2]), q.T @ y, atol=1e-12)


def test_restricted_least_squares_residual_orthogonal():
    rng = np.random.default_rng(2)
    psi = rng.normal(size=(50, 20))
    y = np.sign(rng.normal(size=50))
    a = [1, 4, 7, 11]
    u = restricted_least_squares(psi, y, a)
    r = y - psi[:, a] @ u
    assert np.max(np.abs(psi[:, a].T @ r)) <= 1e-8 * np.linalg.norm(y)


def test_restricted_least_squares_singular():
    psi = np.array([[1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    with pytest.raises(SingularGramError) as info:
        restricted_least_squares(psi, np.ones(3), [1, 2])
    assert info.value.active == (1, 2)
    assert "[1, 2]" in str(info.value)


def test_restricted_least_squares_rank_deficient_uses_ridge():
    psi = np.array([[1.0, 1.0], [1.0, 1.0], [0.0, 0.0]])
    y = np.array([1.0, 1.0, 0.0])
    u = restricted_least_squares(psi, y, [0, 1])
    np.testing.assert_allclose(psi @ u, y, atol=1e-8)


def test_restricted_least_squares_ridge_fallback_on_near_singular():
    # columns nearly parallel but not identical: Cholesky pivots collapse
    rng = np.random.default_rng(0)
    a = rng.normal(size=30)
    psi = np.column_stack([a, a + 1e-9 * rng.normal(size=30)])
    u = restricted_least_squares(psi, a, [0, 1])
    assert np.all(np.isfinite(u))


def test_gna_step_hand_example():
    st0 = initial_state(PSI3, Y3)
    np.testing.assert_allclose(st0.d, Y3 / 3)
    st1 = gna_step(st0, PSI3, Y3, SolverOptions(s=1))
    np.testing.assert_allclose(st1.x, [0, -2, 0])
    np.testing.assert_allclose(st1.d, [1 / 3, 0, 1 / 6])
    assert st1.active.tolist() == [1]
    assert st1.k == 1


def test_gna_step_fixed_point_invariance():
    opts = SolverOptions(s=1)
    st1 = gna_step(initial_state(PSI3, Y3), PSI3, Y3, opts)
    st2 = gna_step(st1, PSI3, Y3, opts)
    np.testing.assert_array_equal(st2.x, st1.x)
    np.testing.assert_array_equal(st2.d, st1.d)
    np.testing.assert_array_equal(st2.active, st1.active)


def _random_problem(seed, m=None, n=None):
    rng = np.random.default_rng(seed)
    m = m or int(rng.integers(20, 101))
    n = n or int(rng.integers(6, 13))
    s = int(rng.integers(1, 4))
    psi = rng.normal(size=(m, n))
    y = np.where(rng.random(m) < 0.5, -1.0, 1.0)
    return psi, y, s


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), eta=st.floats(0.05, 3.0))
def test_gna_step_structural_invariants(seed, eta):
    psi, y, s = _random_problem(seed)
    opts = SolverOptions(s=s, eta=eta)
    state = initial_state(psi, y)
    for _ in range(3):
        state = gna_step(state, psi, y, opts)
        a = state.active
        off = np.setdiff1d(np.arange(psi.shape[1]), a)
        assert a.size == s
        assert np.count_nonzero(state.x) <= s
        assert np.all(state.x[off] == 0)
        assert np.all(state.d[a] == 0)
        assert state.x @ state.d == 0
        r = y - psi @ state.x
        assert np.max(np.abs(psi[:, a].T @ r)) <= 1e-8 * np.linalg.norm(y) * np.sqrt(len(y))
        np.testing.assert_allclose(state.d, np.where(np.isin(np.arange(psi.shape[1]), a), 0,
                                                     psi.T @ r / len(y)), atol=1e-13)


def test_run_gna_hand_example():
    rep = run_gna(PSI3, Y3, SolverOptions(s=1))
    assert rep.converged
    assert rep.iterations == 1
    np.testing.assert_allclose(rep.x_hat, [0, -2, 0])
    assert rep.active_history == [(1,), (1,)]


def test_run_gna_iteration_cap():
    with pytest.raises(ValueError):
        SolverOptions(s=1, max_iter=0)
    psi, y, s = _random_problem(3, m=40, n=12)
    rep = run_gna(psi, y, SolverOptions(s=s, max_iter=1))
    assert rep.iterations == 1
    assert rep.ls_solves == 1


@pytest.mark.parametrize("kwargs", [dict(s=0), dict(s=1, eta=0), dict(s=1, ls_ridge=-1)])
def test_solver_options_invariants(kwargs):
    with pytest.raises(ValueError):
        SolverOptions(**kwargs)


def test_run_gna_noiseless_support_recovery():
    hits = 0
    for t in range(100):
        rng = trial_rng(2024, t)
        sig = make_signal(20, 2, rng, min_abs=0.4)
        psi = sample_matrix(200, 20, 0.0, rng).matrix
        y = observe(psi, sig, 0.0, 0.0, rng).y.astype(float)
        rep = run_gna(psi, y, SolverOptions(s=2))
        hits += np.array_equal(np.flatnonzero(rep.x_hat), sig.support)
    assert hits >= 95


def test_run_gna_singular_error_annotated():
    with pytest.raises(SingularGramError) as info:
        run_gna(np.zeros((5, 4)), np.ones(5), SolverOptions(s=2))
    assert info.value.iteration == 1
    assert "iteration 1" in str(info.value)


def test_run_gna_counts_ridge_solves():
    psi = np.zeros((5, 4))
    psi[:, 0] = 1.0
    rep = run_gna(psi, np.ones(5), SolverOptions(s=2))
    assert rep.ridge_solves >= 1
    assert np.all(np.isfinite(rep.x_hat))


def test_run_gna_rejects_dense_warm_start():
    psi, y, _ = _random_problem(0, m=30, n=8)
    with pytest.raises(ValueError):
        run_gna(psi, y, SolverOptions(s=1), x0=np.ones(8))


def test_run_gna_warm_start_at_solution():
    psi, y, s = _random_problem(5, m=60, n=10)
    opts = SolverOptions(s=s)
    first = run_gna(psi, y, opts)
    assert first.converged
    again = run_gna(psi, y, opts, x0=first.x_hat)
    np.testing.assert_allclose(again.x_hat, first.x_hat, atol=1e-12)
    assert again.converged and again.iterations == 1


def test_kkt_residual_examples():
    assert kkt_residual([0, -2, 0], PSI3, Y3, 0.9, 1) == 0.0
    assert kkt_residual(np.zeros(3), PSI3, Y3, 0.9, 1) > 0
    rng = np.random.default_rng(7)
    psi = rng.normal(size=(30, 8))
    x = np.zeros(8)
    x[[2, 5]] = [0.7, -1.1]
    assert kkt_residual(x, psi, psi @ x, 0.9, 2) <= 1e-12


def test_stopping_iff_fixed_point():
    for seed in range(40):
        psi, y, s = _random_problem(seed)
        opts = SolverOptions(s=s, max_iter=10)
        state = initial_state(psi, y)
        a_prev = active_set(state.x, state.d, opts.eta, s)
        for _ in range(10):
            state = gna_step(state, psi, y, opts)
            a_next = active_set(state.x, state.d, opts.eta, s)
            stops = np.array_equal(a_next, a_prev)
            res = kkt_residual(state.x, psi, y, opts.eta, s)
            if stops:
                assert res <= 1e-10
                break
            # x is supported on a_prev but H_s selects a different set
            assert res > 1e-10
            a_prev = a_next


def test_newton_step_hand_example():
    opts = SolverOptions(s=1)
    st0 = initial_state(PSI3, Y3)
    nt = newton_step(st0, PSI3, Y3, opts)
    gn = gna_step(st0, PSI3, Y3, opts)
    np.testing.assert_allclose(nt.x, gn.x, atol=1e-12)
    np.testing.assert_allclose(nt.d, gn.d, atol=1e-12)


def test_newton_step_matches_gna_step_sweep():
    worst = 0.0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        psi = rng.normal(size=(8, 6))
        y = np.where(rng.random(8) < 0.5, -1.0, 1.0)
        opts = SolverOptions(s=2)
        state = initial_state(psi, y)
        for _ in range(3):
            gn = gna_step(state, psi, y, opts)
            nt = newton_step(state, psi, y, opts)
            worst = max(worst, np.max(np.abs(gn.x - nt.x)), np.max(np.abs(gn.d - nt.d)))
            state = gn
    assert worst <= 1e-10


def test_newton_step_zero_update_at_root():
    opts = SolverOptions(s=1)
    st1 = gna_step(initial_state(PSI3, Y3), PSI3, Y3, opts)
    nt = newton_step(st1, PSI3, Y3, opts)
    np.testing.assert_array_equal(nt.x, st1.x)
    np.testing.assert_array_equal(nt.d, st1.d)


def test_newton_step_guards():
    big = np.zeros((2, 513))
    with pytest.raises(ValueError):
        newton_step(SolverState(np.zeros(513), np.ones(513)), big, np.ones(2), SolverOptions(s=1))
    psi = np.ones((4, 3))
    with pytest.raises(SingularGramError):
        newton_step(SolverState(np.zeros(3), np.array([1.0, 1.0, 0.0])), psi, np.ones(4),
                    SolverOptions(s=2))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_permutation_equivariance(seed):
    psi, y, s = _random_problem(seed, m=60, n=10)
    perm = np.random.default_rng(seed).permutation(10)
    opts = SolverOptions(s=s)
    base = run_gna(psi, y, opts)
    # distinct magnitudes along the trajectory keep the tie rule out of play
    z = np.abs(initial_state(psi, y).d)
    assume(np.unique(np.round(z, 12)).size == z.size)
    permuted = run_gna(psi[:, perm], y, opts)
    np.testing.assert_allclose(permuted.x_hat, base.x_hat[perm], atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), alpha=st.sampled_from([0.125, 0.5, 2.0, 8.0, 3.0, 0.3]))
def test_scale_equivariance_in_y(seed, alpha):
    psi, y, s = _random_problem(seed)
    opts = SolverOptions(s=s)
    base = run_gna(psi, y, opts)
    scaled = run_gna(psi, alpha * y, opts)
    assert scaled.active_history == base.active_history
    np.testing.assert_allclose(scaled.x_hat, alpha * base.x_hat, rtol=1e-10, atol=1e-12)


def test_solver_report_json_round_trip():
    psi, y, s = _random_problem(11, m=50, n=9)
    rep = run_gna(psi, y, SolverOptions(s=s))
    obj = json.loads(rep.to_json())
    assert set(obj) >= {"x_hat", "iterations", "converged", "ls_solves", "active_history"}
    assert all(len(p) == 2 for p in obj["x_hat"])
    back = SolverReport.from_dict(obj)
    np.testing.assert_array_equal(back.x_hat, rep.x_hat)
    assert back.active_history == rep.active_history
    assert back.iterations == rep.iterations and back.converged == rep.converged
