import numpy as np
import pytest

from mmemq.coordination import (BeliefVector, CommsLedger, JointQTable,
                                ProtocolError, TransitionData, classify_state,
                                comms_cost, dispatch_update, likelihood,
                                log_likelihood, window_radius)
from mmemq.cousins import MixedQAgent
from mmemq.rng import StreamSet, stream
from mmemq.wireless import WirelessConfig, WirelessNetwork


def make_env(**kw):
    base = dict(grid_length=4.0, cell_size=2.0, n_tx=2, n_bs=1,
                bs_radius_bounds=(8.0, 8.0), arss_levels=2, i_thr=1e-3,
                tx_powers=(25.0, 25.0))
    base.update(kw)
    return WirelessNetwork(WirelessConfig(**base), stream(0, "layout"))


class TestClassify:
    def test_all_below_threshold(self):
        assert classify_state(np.array([0.1, 0.2]), 0.5) is False

    def test_single_reading_above(self):
        assert classify_state(np.array([0.1, 0.7]), 0.5) is True

    def test_boundary_is_strict(self):
        assert classify_state(np.array([0.5, 0.5]), 0.5) is False


class TestLikelihood:
    def test_matching_candidate_maximal(self):
        means = np.array([1.0, 2.0, 3.0])
        dens = likelihood(2.0, means, 0.3)
        assert np.argmax(dens) == 1

    def test_two_candidate_ordering(self):
        dens = likelihood(1.2, np.array([1.0, 5.0]), 1.0)
        assert dens[0] > dens[1]

    def test_symmetry_about_mean(self):
        d = 0.37
        lo = likelihood(2.0 - d, np.array([2.0]), 0.5)[0]
        hi = likelihood(2.0 + d, np.array([2.0]), 0.5)[0]
        assert lo == pytest.approx(hi, rel=1e-12)

    def test_zero_sigma_uses_floor(self):
        dens = likelihood(1.0, np.array([1.0, 1.5]), 0.0)
        assert np.isfinite(dens).all() and dens[0] > dens[1]

    def test_log_matches_density(self):
        means = np.array([0.5, 1.5])
        np.testing.assert_allclose(np.exp(log_likelihood(1.0, means, 0.7)),
                                   likelihood(1.0, means, 0.7))


class TestBeliefVector:
    def make_belief(self, env, owner=0, delta0=4.0, l=10):
        return BeliefVector(env, owner, delta0, l)

    def test_reset_is_uniform(self):
        env = make_env()
        b = self.make_belief(env)
        b.reset([4], t=0)
        probs = b.probabilities()
        np.testing.assert_allclose(probs, 1.0 / probs.size)

    def test_radius_growth_one_step_after_reset(self):
        env = make_env()
        b = self.make_belief(env, delta0=2.0)
        b.reset([4], t=10)
        b.map_update(1.0, own_position=0, t=11)
        assert b.radius() == pytest.approx(2.0 + 2.0 * env.cfg.cell_size)

    def test_window_radius_formula(self):
        assert window_radius(2.0, 2.0, t=11, l=10) == pytest.approx(2.0 + 4.0)
        assert window_radius(2.0, 2.0, t=10, l=10) == pytest.approx(2.0)

    def test_support_never_empty_between_resets(self):
        env = make_env()
        b = self.make_belief(env, delta0=0.5)
        b.reset([0], t=0)
        rng = np.random.default_rng(0)
        for t in range(1, 30):
            b.map_update(float(rng.random()), own_position=4, t=t)
            assert b.support.shape[0] >= 1

    def test_normalization_after_updates_fuzz(self):
        env = make_env()
        b = self.make_belief(env)
        b.reset([4], t=0)
        rng = np.random.default_rng(1)
        for t in range(1, 2000):
            if t % 10 == 0:
                b.reset_to_committed(t)
            b.map_update(float(rng.uniform(0, 30)), own_position=int(rng.integers(9)), t=t)
            assert abs(np.exp(b.log_probs).sum() - 1.0) < 1e-9

    def test_window_containment_exhaustive(self):
        # triangle inequality on the lattice: a target starting within the
        # reset window and moving at most 2 cells per step stays inside the
        # growing window until the next reset
        env = make_env(grid_length=8.0)
        delta0, l = 2.0, 5
        cell = env.cfg.cell_size
        dist = env.grid.dist
        for anchor in range(env.grid.n_positions):
            starts = np.flatnonzero(dist[anchor] <= delta0 + 1e-9)
            reach = {int(s): 0.0 for s in starts}
            for k in range(1, l):
                radius = delta0 + 2.0 * cell * k
                new_reach = {}
                for pos, moved in reach.items():
                    for nxt in range(env.grid.n_positions):
                        if dist[pos, nxt] <= 2.0 * cell + 1e-9:
                            assert dist[anchor, nxt] <= radius + 1e-9
                            new_reach[nxt] = 0.0
                reach = new_reach

    def test_dominant_likelihood_wins(self):
        env = make_env()
        b = self.make_belief(env, delta0=100.0)  # support covers the grid
        b.reset([0], t=0)
        own = 0
        means = b.candidate_means(own)
        target = int(np.argmax(means))
        reading = float(means[target])
        # make every other candidate at least 3 sigma away in mean space
        sigma = max(1e-6, min(abs(means[i] - reading)
                              for i in range(means.size) if means[i] != reading) / 3.0)
        env.cfg = env.cfg  # sigma_c comes from cfg; override through object
        object.__setattr__(env.cfg, "sigma_c", sigma)
        object.__setattr__(env.cfg, "sigma_u", sigma * 5)
        idx, conf = b.map_update(reading, own_position=own, t=1)
        assert b.support[idx, 0] == b.support[target, 0]

    def test_point_mass_prior_confines_estimate(self):
        # a degenerate prior admits only motion-reachable candidates, no
        # matter what the reading says; with an uninformative reading the
        # atom itself stays the MAP estimate when its self-mass dominates
        env = make_env()
        b = self.make_belief(env, delta0=100.0)
        b.reset([0], t=0)
        corner = 0  # corner cell: lazy-walk self-mass 0.6 beats any neighbor
        b.log_probs = np.full(b.support.shape[0], -np.inf)
        b.log_probs[list(b.support[:, 0]).index(corner)] = 0.0
        object.__setattr__(env.cfg, "sigma_c", 1e6)  # flat likelihood
        idx, _ = b.map_update(17.0, own_position=4, t=1)
        assert int(b.support[idx, 0]) == corner
        # an adversarial reading cannot resurrect zero-prior candidates
        object.__setattr__(env.cfg, "sigma_c", 1e-3)
        reachable = set(env.grid.next_pos[corner].tolist())
        b.reset([0], t=0)
        b.log_probs = np.full(b.support.shape[0], -np.inf)
        b.log_probs[list(b.support[:, 0]).index(corner)] = 0.0
        far = int(np.argmax(env.grid.dist[corner]))
        adversarial_reading = float(env.powers[1] / max(
            env.grid.dist[4, far], env.cfg.d_floor) ** 2)
        idx, _ = b.map_update(adversarial_reading, own_position=4, t=1)
        assert int(b.support[idx, 0]) in reachable

    def test_underflow_falls_back_to_uniform_flagged(self):
        env = make_env()
        b = self.make_belief(env)
        b.reset([4], t=0)
        b.log_probs = np.full(b.support.shape[0], -np.inf)
        b.map_update(1.0, own_position=0, t=1)
        assert b.underflow_flagged

    def test_map_estimation_beats_chance_on_small_grid(self):
        # coordinated steps of the live network; the owner tracks the other
        # TX through its ARSS readings
        env = make_env(sigma_c=0.02, sigma_u=0.1, i_thr=0.5)
        rng = stream(5, "env")
        env.reset(rng)
        belief = BeliefVector(env, 0, delta0=100.0, l=30)
        belief.reset([int(env.state.positions[1])], t=0)
        correct = 0
        total = 1000
        move_both = np.array([env.cfg.n_bs, env.cfg.n_bs])
        for t in range(1, total + 1):
            if t % 30 == 0:
                belief.reset([int(env.state.positions[1])], t=t)
            env.step(move_both, rng)  # both TXs walk: vantage points vary
            idx, _ = belief.map_update(float(env.readings[0]),
                                       own_position=int(env.state.positions[0]),
                                       t=t)
            if int(belief.support[idx, 0]) == int(env.state.positions[1]):
                correct += 1
        chance = 1.0 / env.grid.n_positions
        assert correct / total >= 5 * chance

    def test_estimated_joint_state_fills_candidate_geometry(self):
        env = make_env()
        rng = stream(6, "env")
        env.reset(rng)
        belief = BeliefVector(env, 0, delta0=100.0, l=30)
        belief.reset([int(env.state.positions[1])], t=0)
        est = belief.estimate_joint_state(float(env.readings[0]),
                                          int(env.local_state_ids()[0]),
                                          int(env.state.positions[0]), t=1)
        locals_ = env.split_joint_state(est.joint_state)
        assert locals_[0] == env.local_state_ids()[0]
        pos1, lvl1 = env.split_local_state(locals_[1])
        # the filled ARSS level matches the candidate geometry
        from mmemq.wireless import true_arss_all
        vals = true_arss_all(env.grid.dist,
                             np.array([env.state.positions[0], pos1]),
                             env.powers, env.cfg.d_floor)
        assert lvl1 == env.quant.level_ids(vals)[1]


def tiny_agents(n=2, n_s=6, n_a=2, seed=0):
    streams = StreamSet(seed)
    agents = []
    for i in range(n):
        agents.append(MixedQAgent(
            n_s, n_a, [1, 2], 0.9,
            streams.get("qinit").uniform(0, 0.01, (n_s, n_a)),
            synthetic_rng=streams.get(f"synthetic-{i}"),
            buffer_rng=streams.get(f"buffer-{i}"),
            cost_source=lambda s, a: 0.3))
        for _ in range(5):
            agents[-1].record_transition(0, 0, 1, 0.3)
    return agents


def make_data(agents, prev_est=None, act=None, next_est=None, reports="auto"):
    n = len(agents)
    if reports == "auto":
        reports = {i: (0.5, 0.1) for i in range(n)}
    return TransitionData(
        local_s=np.zeros(n, dtype=int), local_a=np.zeros(n, dtype=int),
        local_s_next=np.ones(n, dtype=int), costs=np.full(n, 0.5),
        joint_prev_est=prev_est, joint_act=act, joint_next_est=next_est,
        reports=reports)


class TestDispatch:
    def snapshot(self, agents, joint):
        locals_ = [np.concatenate([t.ravel() for t in ag.tables]
                                  + [ag.q_ensemble.ravel()]) for ag in agents]
        return [x.copy() for x in locals_], joint.values.copy()

    def test_totality_each_case_touches_one_side(self):
        cases = {(False, False): "UU", (False, True): "UC",
                 (True, False): "CU", (True, True): "CC"}
        for (prev, new), label in cases.items():
            agents = tiny_agents()
            joint = JointQTable(36, 4, seed=1)
            before_local, before_joint = self.snapshot(agents, joint)
            data = make_data(agents, prev_est=3, act=2, next_est=4,
                             reports={i: (0.5, 0.1) for i in range(2)} if prev else None)
            got = dispatch_update(prev, new, agents, joint, data, alpha=0.5,
                                  zeta=0.0, u=0.5, gamma=0.9,
                                  joint_row_min=lambda s: 0.0)
            assert got == label
            after_local, after_joint = self.snapshot(agents, joint)
            local_changed = any(not np.array_equal(a, b)
                                for a, b in zip(before_local, after_local))
            joint_changed = not np.array_equal(before_joint, after_joint)
            if label in ("UU", "UC"):
                assert local_changed and not joint_changed
            else:
                assert joint_changed and not local_changed

    def test_cc_full_rate_no_discount_sums_costs(self):
        agents = tiny_agents()
        joint = JointQTable(36, 4, seed=2)
        data = make_data(agents, prev_est=5, act=1, next_est=6)
        dispatch_update(True, True, agents, joint, data, alpha=1.0, zeta=0.0,
                        u=0.5, gamma=0.0, joint_row_min=lambda s: 123.0)
        assert joint.get(5, 1) == pytest.approx(1.0)  # 0.5 + 0.5

    def test_cu_backs_up_ensembles(self):
        agents = tiny_agents()
        joint = JointQTable(36, 4, seed=3)
        data = make_data(agents, prev_est=7, act=0, next_est=None,
                         reports={0: (0.5, 0.2), 1: (0.25, 0.4)})
        old = joint.get(7, 0)
        dispatch_update(True, False, agents, joint, data, alpha=0.5, zeta=0.0,
                        u=0.5, gamma=0.9, joint_row_min=lambda s: 0.0)
        expected = 0.5 * old + 0.5 * ((0.5 + 0.9 * 0.2) + (0.25 + 0.9 * 0.4))
        assert joint.get(7, 0) == pytest.approx(expected)

    def test_uc_shares_joint_continuation_equally(self):
        agents = tiny_agents()
        before = [t.copy() for t in agents[0].tables]
        joint = JointQTable(36, 4, seed=4)
        data = make_data(agents, prev_est=None, act=None, next_est=9,
                         reports=None)
        dispatch_update(False, True, agents, joint, data, alpha=1.0, zeta=0.0,
                        u=0.0, gamma=0.9, joint_row_min=lambda s: 2.0)
        target = 0.5 + (0.9 / 2) * 2.0
        for tab in agents[0].tables:
            assert tab[0, 0] == pytest.approx(target)
        assert agents[0].q_ensemble[0, 0] == pytest.approx(target)

    def test_missing_report_aborts(self):
        agents = tiny_agents()
        joint = JointQTable(36, 4, seed=5)
        data = make_data(agents, prev_est=3, act=2, next_est=4,
                         reports={0: (0.5, 0.1)})  # agent 1 missing
        with pytest.raises(ProtocolError, match="missing"):
            dispatch_update(True, True, agents, joint, data, alpha=0.5,
                            zeta=0.0, u=0.5, gamma=0.9,
                            joint_row_min=lambda s: 0.0)


class TestLedger:
    def test_counters_non_decreasing_fuzz(self):
        rng = np.random.default_rng(0)
        led = CommsLedger()
        prev = (0, 0, 0)
        for _ in range(1000):
            if rng.random() < 0.5:
                led.charge_up(int(rng.integers(1, 4)))
            else:
                led.charge_down(int(rng.integers(1, 4)))
            led.end_iteration()
            cur = (led.messages_to_leader, led.broadcasts_from_leader,
                   led.payload_units)
            assert all(c >= p for c, p in zip(cur, prev))
            prev = cur

    def test_comms_cost_conformance(self):
        led = CommsLedger()
        led.charge_up(10)
        led.charge_table_upload(100)
        total, ok = comms_cost(led, t_iters=50, n_tx=2, n_local_states=10,
                               n_local_actions=4, fit_constant=2.0)
        assert total == 110
        assert ok  # 110 <= 2 * 2 * max(50, 40)
        total, bad = comms_cost(led, 5, 1, 2, 2, fit_constant=1.0)
        assert not bad


class TestJointQTable:
    def test_dense_set_get(self):
        jq = JointQTable(10, 3, seed=0)
        jq.set(4, 2, 1.5)
        assert jq.get(4, 2) == 1.5
        assert 0.0 <= jq.get(3, 1) <= 0.01

    def test_sparse_defaults_deterministic(self):
        a = JointQTable(10 ** 9, 4, seed=7, dense_cap=0)
        b = JointQTable(10 ** 9, 4, seed=7, dense_cap=0)
        s = 123456789
        np.testing.assert_array_equal(a.row(s), b.row(s))
        assert np.all((a.row(s) >= 0) & (a.row(s) <= 0.01))

    def test_sparse_row_overlays_written_entries(self):
        jq = JointQTable(10 ** 9, 4, seed=8, dense_cap=0)
        base = jq.row(55).copy()
        jq.set(55, 2, 9.0)
        row = jq.row(55)
        assert row[2] == 9.0
        np.testing.assert_array_equal(np.delete(row, 2), np.delete(base, 2))
        assert jq.n_written() == 1
