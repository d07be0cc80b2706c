import numpy as np
import pytest
from scipy.stats import chisquare

from mmemq.mdp import (MdpError, PttEstimator, QTable, Sample, TransitionTensor,
                       epsilon_greedy, estimate_ptt, greedy_policy,
                       masked_argmin, normalize_counts, q_update,
                       value_iteration)


def make_table(values, gamma=0.9):
    return QTable(np.array(values, dtype=float), gamma)


class TestQUpdate:
    def test_zero_cost_zero_table_is_fixed_point(self):
        t = make_table(np.zeros((3, 2)))
        q_update(t, Sample(0, 1, 2, 0.0), alpha=0.7)
        assert np.all(t.values == 0.0)

    def test_full_rate_no_discount_collapses_to_cost(self):
        t = QTable(np.full((2, 2), 3.0), gamma=0.0)
        q_update(t, Sample(0, 0, 1, 5.0), alpha=1.0)
        assert t.values[0, 0] == 5.0

    def test_hand_evaluated_update(self):
        # alpha=0.5, gamma=0.9, c=1, min next value = 2
        t = QTable(np.array([[4.0, 7.0], [2.0, 3.0]]), gamma=0.9)
        q_update(t, Sample(0, 0, 1, 1.0), alpha=0.5)
        expected = 0.5 * 4.0 + 0.5 * (1.0 + 0.9 * 2.0)
        assert t.values[0, 0] == pytest.approx(expected)
        assert t.values[0, 1] == 7.0 and np.all(t.values[1] == [2.0, 3.0])

    def test_out_of_range_index_raises(self):
        t = make_table(np.zeros((2, 2)))
        with pytest.raises(IndexError):
            q_update(t, Sample(5, 0, 1, 0.0), alpha=0.5)

    def test_non_finite_cost_rejected(self):
        with pytest.raises(MdpError):
            Sample(0, 0, 1, np.nan)

    def test_masked_min_skips_invalid_actions(self):
        t = make_table([[1.0, -5.0], [0.0, -9.0]])
        mask = np.array([True, False])
        q_update(t, Sample(0, 0, 1, 1.0), alpha=1.0, next_mask=mask)
        assert t.values[0, 0] == pytest.approx(1.0 + 0.9 * 0.0)


class TestEpsilonGreedy:
    def test_full_exploration_is_uniform(self):
        t = make_table(np.zeros((1, 4)))
        rng = np.random.default_rng(7)
        counts = np.zeros(4)
        for _ in range(10_000):
            counts[epsilon_greedy(t, 0, 1.0, rng)] += 1
        assert chisquare(counts).pvalue > 0.01

    def test_greedy_unique_minimizer(self):
        t = make_table([[3.0, 1.0, 2.0]])
        rng = np.random.default_rng(0)
        assert all(epsilon_greedy(t, 0, 0.0, rng) == 1 for _ in range(20))

    def test_tie_breaks_to_lowest_index(self):
        t = make_table([[5.0, 2.0, 9.0, 2.0]])
        rng = np.random.default_rng(0)
        assert epsilon_greedy(t, 0, 0.0, rng) == 1

    def test_masked_exploration_stays_valid(self):
        t = make_table(np.zeros((1, 4)))
        rng = np.random.default_rng(3)
        mask = np.array([False, True, False, True])
        picks = {epsilon_greedy(t, 0, 1.0, rng, mask=mask) for _ in range(200)}
        assert picks == {1, 3}

    def test_empty_valid_set_raises(self):
        t = make_table(np.zeros((1, 2)))
        with pytest.raises(MdpError):
            epsilon_greedy(t, 0, 0.5, np.random.default_rng(0),
                           mask=np.array([False, False]))


def chain_mdp():
    """Two-state chain solvable by hand: staying in state 0 costs 1 forever,
    moving reaches the free state 1."""
    probs = np.zeros((2, 2, 2))
    probs[0, 0, 0] = 1.0  # stay
    probs[0, 1, 1] = 1.0  # go
    probs[1, 0, 1] = 1.0
    probs[1, 1, 0] = 1.0
    costs = np.array([[1.0, 1.0], [0.0, 0.0]])
    return probs, costs


class TestValueIteration:
    def test_single_state_geometric_series(self):
        probs = np.ones((1, 1, 1))
        q = value_iteration(probs, np.array([[1.0]]), gamma=0.5, tol=1e-12)
        assert q.values[0, 0] == pytest.approx(2.0, abs=1e-9)

    def test_two_state_chain_matches_hand_solution(self):
        probs, costs = chain_mdp()
        q = value_iteration(probs, costs, gamma=0.5, tol=1e-12)
        expected = np.array([[1.5, 1.0], [0.0, 0.5]])
        np.testing.assert_allclose(q.values, expected, atol=1e-9)

    def test_residual_below_tolerance(self):
        rng = np.random.default_rng(11)
        probs = rng.random((6, 3, 6))
        probs /= probs.sum(axis=2, keepdims=True)
        costs = rng.random((6, 3))
        tol = 1e-8
        q = value_iteration(probs, costs, gamma=0.9, tol=tol)
        bellman = costs + 0.9 * probs @ q.values.min(axis=1)
        assert np.max(np.abs(bellman - q.values)) <= tol

    def test_contraction_of_successive_iterates(self):
        rng = np.random.default_rng(5)
        probs = rng.random((5, 2, 5))
        probs /= probs.sum(axis=2, keepdims=True)
        costs = rng.random((5, 2))
        gamma = 0.8
        q = np.zeros((5, 2))
        dists = []
        for _ in range(30):
            q_new = costs + gamma * probs @ q.min(axis=1)
            dists.append(np.max(np.abs(q_new - q)))
            q = q_new
        ratios = [b / a for a, b in zip(dists, dists[1:]) if a > 1e-14]
        assert all(r <= gamma + 1e-9 for r in ratios)

    def test_rejects_non_stochastic_tensor(self):
        probs = np.ones((2, 1, 2))  # rows sum to 2
        with pytest.raises(MdpError):
            value_iteration(probs, np.zeros((2, 1)), gamma=0.5)


class TestGreedyPolicy:
    def test_identical_rows_map_to_action_zero(self):
        t = make_table(np.tile([2.0, 2.0, 2.0], (4, 1)))
        assert np.all(greedy_policy(t) == 0)

    def test_matches_value_iteration_policy_on_chain(self):
        probs, costs = chain_mdp()
        q = value_iteration(probs, costs, gamma=0.5, tol=1e-12)
        np.testing.assert_array_equal(greedy_policy(q), [1, 0])

    def test_permuting_action_columns_permutes_labels(self):
        rng = np.random.default_rng(2)
        vals = rng.random((6, 4)) + np.arange(4) * 0.01  # no exact ties
        t = make_table(vals)
        perm = np.array([2, 0, 3, 1])
        t_perm = make_table(vals[:, perm])
        base = greedy_policy(t)
        permuted = greedy_policy(t_perm)
        assert np.all(perm[permuted] == base)

    def test_invariant_under_row_constant_shift(self):
        rng = np.random.default_rng(9)
        vals = rng.random((8, 3))
        shifted = vals + rng.random((8, 1)) * 10.0
        np.testing.assert_array_equal(greedy_policy(make_table(vals)),
                                      greedy_policy(make_table(shifted)))


class TestEstimatePtt:
    def test_point_mass_row(self):
        samples = [Sample(0, 0, 1, 0.0)] * 5
        t = estimate_ptt(samples, 3, 2)
        assert t.probs[0, 0, 1] == 1.0

    def test_empty_input_defaults_uniform(self):
        t = estimate_ptt([], 4, 2)
        np.testing.assert_allclose(t.probs, 0.25)

    def test_monte_carlo_recovers_known_kernel(self):
        kernel = np.array([[0.2, 0.5, 0.3], [0.7, 0.1, 0.2], [0.4, 0.4, 0.2]])
        rng = np.random.default_rng(123)
        samples = []
        for _ in range(10_000):
            s = rng.integers(3)
            s_next = rng.choice(3, p=kernel[s])
            samples.append(Sample(int(s), 0, int(s_next), 0.0))
        t = estimate_ptt(samples, 3, 1)
        assert np.max(np.abs(t.probs[:, 0, :] - kernel)) < 0.05

    def test_fuzz_always_row_stochastic(self):
        rng = np.random.default_rng(77)
        for _ in range(50):
            n_s, n_a = rng.integers(2, 6), rng.integers(1, 4)
            n = rng.integers(0, 40)
            samples = [Sample(int(rng.integers(n_s)), int(rng.integers(n_a)),
                              int(rng.integers(n_s)), float(rng.random()))
                       for _ in range(n)]
            t = estimate_ptt(samples, int(n_s), int(n_a))
            np.testing.assert_allclose(t.probs.sum(axis=2), 1.0, atol=1e-9)

    def test_incremental_estimator_matches_batch(self):
        rng = np.random.default_rng(4)
        est = PttEstimator(4, 2)
        samples = []
        for _ in range(300):
            s, a, sn = rng.integers(4), rng.integers(2), rng.integers(4)
            est.add(int(s), int(a), int(sn))
            samples.append(Sample(int(s), int(a), int(sn), 0.0))
        np.testing.assert_allclose(est.probs(),
                                   estimate_ptt(samples, 4, 2).probs)


class TestQLearningConvergence:
    def test_converges_to_oracle_on_small_mdp(self):
        # enumerable MDP <= 50 states; steady exploration, decaying rate
        rng = np.random.default_rng(42)
        n_s, n_a = 12, 2
        probs = rng.dirichlet(np.ones(n_s) * 0.3, size=(n_s, n_a))
        costs = rng.random((n_s, n_a))
        gamma = 0.9
        q_star = value_iteration(probs, costs, gamma, tol=1e-10).values
        table = QTable(np.zeros((n_s, n_a)), gamma)
        cdf = np.cumsum(probs, axis=2)
        s = 0
        for t in range(1, 150_001):
            a = epsilon_greedy(table, s, 0.5, rng)
            s_next = int(np.searchsorted(cdf[s, a], rng.random(), side="right"))
            alpha = 1.0 / (1.0 + t / 1000.0)
            q_update(table, Sample(s, a, s_next, float(costs[s, a])), alpha)
            s = s_next
        err = np.max(np.abs(table.values - q_star))
        assert err <= 0.05 * np.max(np.abs(q_star))


def test_masked_argmin_tie_break():
    row = np.array([4.0, 1.0, 1.0, 0.5])
    mask = np.array([True, True, True, False])
    assert masked_argmin(row, mask) == 1


def test_normalize_counts_uniform_fallback():
    counts = np.zeros((3, 1, 3))
    counts[0, 0, 2] = 4.0
    probs = normalize_counts(counts)
    assert probs[0, 0, 2] == 1.0
    np.testing.assert_allclose(probs[1, 0], 1 / 3)


def test_transition_tensor_validates_shape_and_rows():
    with pytest.raises(MdpError):
        TransitionTensor(np.ones((2, 2)))
    with pytest.raises(MdpError):
        TransitionTensor(np.ones((2, 1, 2)))
