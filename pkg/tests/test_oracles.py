import itertools

import numpy as np
import pytest

from mmemq.mdp import value_iteration
from mmemq.oracles import (EnumerationCapError, agent_q_star, cost_lut,
                           enumerate_agent_mdp, joint_oracle)
from mmemq.rng import stream
from mmemq.wireless import ConfigError, WirelessConfig, WirelessNetwork


def make_env(**kw):
    base = dict(grid_length=4.0, cell_size=2.0, n_tx=2, n_bs=1,
                bs_radius_bounds=(8.0, 8.0), arss_levels=2, i_thr=1e-3,
                tx_powers=(1e-2, 1e-2))
    base.update(kw)
    return WirelessNetwork(WirelessConfig(**base), stream(0, "layout"))


def brute_force_joint_mdp(env, gamma):
    """Dense joint MDP by direct enumeration; independent of the structured
    solver's tensor contractions."""
    combos = env.position_combos()
    n = env.cfg.n_tx
    n_bs = env.cfg.n_bs
    n_combo = combos.shape[0]
    n_ja = env.n_actions ** n
    index = {tuple(c): i for i, c in enumerate(combos)}
    levels = env.combo_levels(combos)
    luts = [cost_lut(env, i) for i in range(n)]
    probs = np.zeros((n_combo, n_ja, n_combo))
    costs = np.zeros((n_combo, n_ja))
    valid = np.zeros((n_combo, n_ja), dtype=bool)
    for ci, combo in enumerate(combos):
        for aj in range(n_ja):
            parts = env.split_joint_action(aj)
            valid[ci, aj] = all(env.valid_pos_action[combo[i], parts[i]]
                                for i in range(n))
            supports = []
            for i in range(n):
                m = parts[i] // n_bs
                if m == 0:
                    supports.append([(int(combo[i]), 1.0)])
                else:
                    supports.append([(int(q), 0.2)
                                     for q in env.grid.next_pos[combo[i]]])
            for pick in itertools.product(*supports):
                nxt = tuple(p for p, _ in pick)
                pr = float(np.prod([w for _, w in pick]))
                cj = index[nxt]
                probs[ci, aj, cj] += pr
                step_cost = sum(
                    luts[i][nxt[i], parts[i] % n_bs, levels[cj, i]]
                    for i in range(n))
                costs[ci, aj] += pr * step_cost
    return probs, costs, valid


class TestAgentEnumeration:
    def test_rows_sum_to_one_tightly(self):
        env = make_env()
        tensor, costs, mask = enumerate_agent_mdp(env, 0)
        np.testing.assert_allclose(tensor.probs.sum(axis=2), 1.0, atol=1e-12)
        assert np.all(np.isfinite(costs))

    def test_stationary_action_has_identity_position_kernel(self):
        env = make_env()
        tensor, _, _ = enumerate_agent_mdp(env, 0)
        v = env.n_levels
        p = env.grid.n_positions
        stay = 0  # m=0, b=1
        block = tensor.probs[:, stay, :].reshape(p, v, p, v)
        pos_marginal = block.sum(axis=3)  # [p, v, p']
        for pp in range(p):
            for vv in range(v):
                expected = np.zeros(p)
                expected[pp] = 1.0
                np.testing.assert_allclose(pos_marginal[pp, vv], expected,
                                           atol=1e-12)

    def test_refuses_noisy_configs(self):
        env = make_env(sigma=1.0)
        with pytest.raises(ConfigError):
            enumerate_agent_mdp(env, 0)

    def test_refuses_above_cap_with_size_report(self):
        env = make_env(enum_cap=4)
        with pytest.raises(EnumerationCapError, match=r"18"):
            enumerate_agent_mdp(env, 0)

    def test_monte_carlo_batch_simulation_matches_kernel(self):
        # one million simulated agent-steps of the live two-agent dynamics,
        # vectorized: both TXs random-walk, sensing is noiseless
        env = make_env()
        tensor, _, _ = enumerate_agent_mdp(env, 0)
        rng = np.random.default_rng(42)
        n_chain, n_steps = 20_000, 50
        p = env.grid.n_positions
        arss = np.zeros((p, p))
        for a in range(p):
            for b in range(p):
                d = max(env.grid.dist[a, b], env.cfg.d_floor)
                arss[a, b] = env.powers[1] / d ** 2
        lvl = env.quant.level_ids(arss)
        pos = rng.integers(0, p, size=(n_chain, 2))
        counts = np.zeros((env.n_local_states, 2, env.n_local_states))
        for _ in range(n_steps):
            s_own = pos[:, 0] * env.n_levels + lvl[pos[:, 0], pos[:, 1]]
            moves = rng.integers(0, 2, size=n_chain)  # own action m
            ks_own = rng.integers(0, 5, size=n_chain)
            new_own = np.where(moves == 1,
                               env.grid.next_pos[pos[:, 0], ks_own], pos[:, 0])
            m_other = rng.integers(0, 2, size=n_chain)  # uniform random action
            ks_other = rng.integers(0, 5, size=n_chain)
            new_other = np.where(m_other == 1,
                                 env.grid.next_pos[pos[:, 1], ks_other], pos[:, 1])
            s_new = new_own * env.n_levels + lvl[new_own, new_other]
            np.add.at(counts, (s_own, moves, s_new), 1.0)
            pos[:, 0], pos[:, 1] = new_own, new_other
        totals = counts.sum(axis=2, keepdims=True)
        seen = totals[..., 0] > 2000
        empirical = np.divide(counts, totals, where=totals > 0)
        # action m maps to action id m * n_bs with b = 1
        model = tensor.probs[:, [0, env.cfg.n_bs], :][:, :, :]
        gaps = np.abs(empirical - model.transpose(0, 1, 2))[seen]
        assert gaps.max() < 0.02


class TestJointOracle:
    def test_matches_brute_force_value_iteration(self):
        env = make_env()
        oracle = joint_oracle(env, gamma=0.9, tol=1e-10)
        probs, costs, valid = brute_force_joint_mdp(env, 0.9)
        q_ref = value_iteration(probs, costs, 0.9, tol=1e-10,
                                valid_mask=valid)
        np.testing.assert_allclose(oracle.q_star[valid],
                                   q_ref.values[valid], atol=1e-6)
        # identical action choices except where two actions tie to roundoff
        ref_rows = np.where(valid, q_ref.values, np.inf)
        ref_policy = ref_rows.argmin(axis=1)
        chosen = ref_rows[np.arange(ref_rows.shape[0]), oracle.policy]
        best = ref_rows.min(axis=1)
        np.testing.assert_allclose(chosen, best, atol=1e-9)
        gap = np.partition(ref_rows, 1, axis=1)[:, 1] - best
        decisive = gap > 1e-9
        np.testing.assert_array_equal(oracle.policy[decisive],
                                      ref_policy[decisive])

    def test_oracle_constant_across_arss_slices(self):
        # at zero noise the joint optimum depends on positions only; the
        # consistent ids cover each combo once
        env = make_env()
        oracle = joint_oracle(env, 0.9, 1e-10)
        assert oracle.consistent_ids.shape[0] == env.grid.n_positions ** 2
        assert np.unique(oracle.consistent_ids).size == oracle.consistent_ids.size

    def test_cap_refusal(self):
        env = make_env()
        with pytest.raises(EnumerationCapError):
            joint_oracle(env, 0.9, joint_cap=10)

    def test_agent_q_star_masked_entries_finite(self):
        env = make_env(n_bs=2, bs_radius_bounds=(6.0, 6.0), bs_min_sep=4.0,
                       grid_length=8.0)
        q, mask = agent_q_star(env, 0, gamma=0.9)
        assert np.all(np.isfinite(q.values[mask]))
