# Seeded experiment runners: the partially decentralized multi-agent mixed
# Q-learning driver, the tabular baselines (centralized composite,
# independent, hysteretic), and a generic single-agent loop for enumerable
# MDPs.
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .config import ExperimentConfig
from .coordination import (BeliefVector, CommsLedger, JointQTable,
                           TransitionData, dispatch_update)
from .cousins import MixedQAgent
from .mdp import masked_argmin
from .records import RunRecord, TrackedPair
from .rng import StreamSet
from .wireless import WirelessNetwork


def build_network(exp: ExperimentConfig, layout_seed: int = 0) -> WirelessNetwork:
    """Instance geometry is a function of the layout seed only, so every run
    seed of one experiment shares the same frozen network."""
    from .rng import stream

    return WirelessNetwork(exp.wireless, stream(layout_seed, "layout"))


def draw_initial_tables(streams: StreamSet, n_agents: int, local_shape,
                        joint_shape=None):
    """Small uniform random Q-table inits, identical across algorithms."""
    rng = streams.get("qinit")
    locals_ = [rng.uniform(0.0, 0.01, local_shape) for _ in range(n_agents)]
    joint = rng.uniform(0.0, 0.01, joint_shape) if joint_shape is not None else None
    return locals_, joint


def action_component_table(env: WirelessNetwork) -> np.ndarray:
    """[n_joint_actions, n_agents] decomposition of joint action ids."""
    n_ja = env.n_actions ** env.cfg.n_tx
    return np.stack([env.split_joint_action(a) for a in range(n_ja)])


def joint_valid_for_positions(env: WirelessNetwork, positions: np.ndarray,
                              comp: np.ndarray) -> np.ndarray:
    ok = np.ones(comp.shape[0], dtype=bool)
    for i in range(env.cfg.n_tx):
        ok &= env.valid_pos_action[positions[i], comp[:, i]]
    return ok


def materialize_joint(env: WirelessNetwork, q_locals: list[np.ndarray],
                      joint_q: JointQTable | None, combos: np.ndarray,
                      levels: np.ndarray, coord_mask: np.ndarray,
                      comp: np.ndarray) -> np.ndarray:
    """Joint Q-values over the consistent states.

    Uncoordinated rows are the additive combination of the agents' tables;
    coordinated entries come from the leader's stored joint table where the
    leader has actually learned them, falling back to the additive estimate
    elsewhere.
    """
    n_combo = combos.shape[0]
    out = np.zeros((n_combo, comp.shape[0]))
    local_ids = combos * env.n_levels + levels
    for i in range(env.cfg.n_tx):
        out += q_locals[i][local_ids[:, i]][:, comp[:, i]]
    if joint_q is not None and coord_mask.any():
        weights = env.n_local_states ** np.arange(env.cfg.n_tx - 1, -1, -1)
        sids = local_ids @ weights
        for c in np.flatnonzero(coord_mask):
            stored = joint_q.row(int(sids[c]))
            mask = joint_q.written_row(int(sids[c]))
            out[c] = np.where(mask, stored, out[c])
    return out


def greedy_joint_policy(table: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Masked per-row argmin over joint actions, ties to the lowest index."""
    return np.where(valid, table, np.inf).argmin(axis=1).astype(np.int64)


@dataclass
class ConsistentSpace:
    """Cached description of the consistent (reachable) joint space."""

    combos: np.ndarray
    levels: np.ndarray
    sids: np.ndarray
    coordinated: np.ndarray  # raw noiseless ARSS rule, per combo
    comp: np.ndarray
    valid: np.ndarray  # [C, n_joint_actions]

    @classmethod
    def build(cls, env: WirelessNetwork) -> "ConsistentSpace":
        from .wireless import true_arss_all

        combos = env.position_combos()
        levels = env.combo_levels(combos)
        weights = env.n_local_states ** np.arange(env.cfg.n_tx - 1, -1, -1)
        sids = (combos * env.n_levels + levels) @ weights
        if env.cfg.n_tx >= 2:
            raw = true_arss_all(env.grid.dist, combos, env.powers, env.cfg.d_floor)
            coord = (raw > env.cfg.i_thr).any(axis=1)
        else:
            coord = np.zeros(combos.shape[0], dtype=bool)
        comp = action_component_table(env)
        valid = np.ones((combos.shape[0], comp.shape[0]), dtype=bool)
        for i in range(env.cfg.n_tx):
            valid &= env.valid_pos_action[combos[:, i]][:, comp[:, i]]
        return cls(combos, levels, sids, coord, comp, valid)


def _select_tracked_candidates(env: WirelessNetwork, space: ConsistentSpace,
                               k: int) -> list[TrackedPair]:
    """Evenly spread uncoordinated joint pairs (candidates are filtered by
    visitation after the run)."""
    unc = np.flatnonzero(~space.coordinated)
    if unc.size == 0:
        return []
    picks = unc[np.linspace(0, unc.size - 1, min(k, unc.size)).astype(int)]
    out = []
    for c in picks:
        combo = space.combos[c]
        local_ids = combo * env.n_levels + space.levels[c]
        acts = np.array([int(np.flatnonzero(env.valid_pos_action[p])[0])
                         for p in combo])
        pair = TrackedPair(
            joint_state=int(space.sids[c]),
            joint_action=int(env.joint_action_id(acts)),
            coordinated=False,
            local_states=local_ids.astype(np.int64),
            local_actions=acts.astype(np.int64),
        )
        out.append(pair)
    return out


class MultiAgentRunner:
    """Algorithm driver for the partially decentralized learner."""

    def __init__(self, exp: ExperimentConfig, seed: int, layout_seed: int = 0,
                 env: WirelessNetwork | None = None,
                 space: ConsistentSpace | None = None,
                 track: bool = True):
        self.exp = exp
        self.seed = seed
        self.env = env if env is not None else build_network(exp, layout_seed)
        cfg = self.env.cfg
        self.streams = StreamSet(seed)
        self.n = cfg.n_tx
        n_local, n_act = self.env.n_local_states, self.env.n_actions
        mask = self.env.state_action_mask()
        n_joint_states = n_local ** self.n
        n_joint_actions = n_act ** self.n
        dense = n_joint_states * n_joint_actions <= 20_000_000
        locals_, joint_init = draw_initial_tables(
            self.streams, self.n, (n_local, n_act),
            (n_joint_states, n_joint_actions) if dense else None)
        self.agents = [
            MixedQAgent(
                n_local, n_act, exp.agent_orders(i), exp.gamma, locals_[i],
                synthetic_rng=self.streams.get(f"synthetic-{i}"),
                buffer_rng=self.streams.get(f"buffer-{i}"),
                valid_mask=mask,
                ema_decay=exp.ema_decay, eps_w=exp.eps_w,
                power_refresh=exp.power_refresh, batch_size=exp.batch_size,
                capacity=exp.buffer_capacity,
            )
            for i in range(self.n)
        ]
        if dense:
            self.joint_q = JointQTable(n_joint_states, n_joint_actions, seed)
            self.joint_q.values = joint_init
            self.initial_joint = joint_init.copy()
        else:
            self.joint_q = JointQTable(n_joint_states, n_joint_actions, seed,
                                       dense_cap=0)
            self.initial_joint = None
        self.ledger = CommsLedger()
        delta0 = exp.effective_delta0()
        self.beliefs = [BeliefVector(self.env, i, delta0, exp.l,
                                     exp.belief_temperature)
                        for i in range(self.n)]
        self.space = space if space is not None else ConsistentSpace.build(self.env)
        self.track = track
        self.visit_counts = [np.zeros((n_local, n_act), dtype=np.int64)
                             for _ in range(self.n)]

    # -- helpers --------------------------------------------------------------

    def _joint_row_min(self, sid: int) -> float:
        row = self.joint_q.row(sid)
        locals_ = self.env.split_joint_state(sid)
        positions = locals_ // self.env.n_levels
        mask = joint_valid_for_positions(self.env, positions, self.space.comp)
        return float(row[mask].min())

    def _joint_argmin(self, sid: int) -> int:
        row = self.joint_q.row(sid)
        locals_ = self.env.split_joint_state(sid)
        positions = locals_ // self.env.n_levels
        mask = joint_valid_for_positions(self.env, positions, self.space.comp)
        return masked_argmin(row, mask)

    def _estimate(self, t: int) -> tuple[int, int]:
        """All agents estimate; the leader keeps the most confident one."""
        leader = self.env.leader
        best = None
        readings = self.env.readings
        local_ids = self.env.local_state_ids()
        positions = self.env.state.positions
        for i in range(self.n):
            est = self.beliefs[i].estimate_joint_state(
                float(readings[i]), int(local_ids[i]), int(positions[i]), t)
            est_locals = self.env.split_joint_state(est.joint_state)
            self.beliefs[i].commit_anchor(est_locals // self.env.n_levels)
            if i != leader:
                self.ledger.charge_up(2)
            if best is None or est.confidence > best.confidence:
                best = est
        return best.joint_state, best.agent

    # -- main loop ------------------------------------------------------------

    def run(self, oracle_locals: list[np.ndarray] | None = None) -> RunRecord:
        exp, env = self.exp, self.env
        sched = exp.schedules
        t_start = time.perf_counter()
        T, n = exp.T, self.n
        rec = RunRecord(algo="m_memq", seed=self.seed, T=T, l=exp.l,
                        config_hash=exp.content_hash())
        rec.classes = np.zeros(T, dtype=np.uint8)
        rec.true_classes = np.zeros(T, dtype=np.uint8)
        rec.actions = np.zeros((T, n), dtype=np.int16)
        rec.costs = np.zeros((T, n), dtype=np.float32)
        rec.payload = np.zeros(T, dtype=np.int64)
        rec.estimate_correct = np.full(T, -1, dtype=np.int8)

        tracked = _select_tracked_candidates(env, self.space,
                                             exp.n_tracked_pairs) if self.track else []
        k_orders = max(len(a.orders) for a in self.agents) if self.agents else 0
        for pair in tracked:
            pair.q_bar = np.zeros(T, dtype=np.float64)
            pair.wq = np.zeros((T, n, k_orders), dtype=np.float64)
        tr_s = np.stack([p.local_states for p in tracked]) if tracked else None
        tr_a = np.stack([p.local_actions for p in tracked]) if tracked else None
        coord_events: list[tuple[int, int, int, float, float]] = []
        local_snaps: list[tuple[int, np.ndarray]] = []
        snap_every = exp.snapshot_every

        env_rng = self.streams.get("env")
        policy_rngs = [self.streams.get(f"policy-{i}") for i in range(n)]
        env.reset(env_rng)
        local_ids = env.local_state_ids()
        detected = env.detected_coordinated()
        for i in range(n):
            self.beliefs[i].reset(
                [env.state.positions[j] for j in range(n) if j != i], 0)
        joint_est = None
        if detected:
            joint_est, _ = self._estimate(0)

        joint_writes = 0
        for t in range(1, T + 1):
            alpha, zeta, u = sched.alpha(t), sched.zeta(t), sched.u(t)
            if t % exp.l == 0:
                for b in self.beliefs:
                    b.reset_to_committed(t)
            # --- action selection under the current detected class
            if detected and joint_est is not None:
                a_joint = self._joint_argmin(joint_est)
                self.ledger.charge_down(n - 1, messages=n - 1)
                parts = self.space.comp[a_joint]
                actions = np.empty(n, dtype=np.int64)
                for i in range(n):
                    if env.valid_pos_action[env.state.positions[i], parts[i]]:
                        actions[i] = parts[i]
                    else:
                        actions[i] = self.agents[i].greedy_action(
                            int(local_ids[i]), 0.0, policy_rngs[i])
                broadcast_joint_act = int(a_joint)
            else:
                actions = np.array([
                    self.agents[i].greedy_action(int(local_ids[i]), zeta,
                                                 policy_rngs[i])
                    for i in range(n)
                ], dtype=np.int64)
                broadcast_joint_act = None
            prev_detected = detected
            prev_joint_est = joint_est
            prev_local_ids = local_ids

            # --- environment transition
            costs, _valid = env.step(actions, env_rng)
            local_ids = env.local_state_ids()
            readings = env.readings
            true_flag = env.state.coordinated
            flags = readings > env.cfg.i_thr
            detected = bool(flags.any())
            n_flag = int(flags.sum())
            if n_flag:
                self.ledger.charge_up(n_flag, messages=n_flag)
                self.ledger.charge_down(n - 1, messages=n - 1)

            joint_est = None
            if detected:
                joint_est, _ = self._estimate(t)
                true_sid = env.joint_state_id(local_ids)
                rec.estimate_correct[t - 1] = 1 if joint_est == true_sid else 0
            else:
                for b in self.beliefs:
                    b.predict_only()  # targets keep moving between estimates

            # --- reports for coordinated-mode updates
            reports = None
            if prev_detected:
                reports = {}
                for i in range(n):
                    min_qe = self.agents[i].ensemble_min(int(local_ids[i]))
                    reports[i] = (float(costs[i]), float(min_qe))
                    if i != env.leader:
                        self.ledger.charge_up(2)
            if prev_detected is False and detected:
                self.ledger.charge_down(n - 1, messages=n - 1)  # shared value

            for i in range(n):
                self.agents[i].record_transition(int(prev_local_ids[i]),
                                                 int(actions[i]),
                                                 int(local_ids[i]),
                                                 float(costs[i]))
                self.visit_counts[i][prev_local_ids[i], actions[i]] += 1

            data = TransitionData(
                local_s=prev_local_ids, local_a=actions, local_s_next=local_ids,
                costs=costs, joint_prev_est=prev_joint_est,
                joint_act=broadcast_joint_act, joint_next_est=joint_est,
                reports=reports,
            )
            old_val = (self.joint_q.get(prev_joint_est, broadcast_joint_act)
                       if prev_detected else 0.0)
            case = dispatch_update(prev_detected, detected, self.agents,
                                   self.joint_q, data, alpha, zeta, u,
                                   exp.gamma, self._joint_row_min)
            if case in ("CU", "CC"):
                coord_events.append((t, prev_joint_est, broadcast_joint_act,
                                     old_val,
                                     self.joint_q.get(prev_joint_est,
                                                      broadcast_joint_act)))
                joint_writes += 1

            # --- logging
            rec.classes[t - 1] = 1 if detected else 0
            rec.true_classes[t - 1] = 1 if true_flag else 0
            rec.actions[t - 1] = actions
            rec.costs[t - 1] = costs
            self.ledger.end_iteration()
            rec.payload[t - 1] = self.ledger.per_iteration[-1]
            if tracked:
                totals = np.zeros(len(tracked))
                for i in range(n):
                    ag = self.agents[i]
                    totals += ag.q_ensemble[tr_s[:, i], tr_a[:, i]]
                    for kk in range(len(ag.orders)):
                        vals = ag.weights[kk] * ag.tables[kk][tr_s[:, i], tr_a[:, i]]
                        for p_idx, pair in enumerate(tracked):
                            pair.wq[t - 1, i, kk] = vals[p_idx]
                for p_idx, pair in enumerate(tracked):
                    pair.q_bar[t - 1] = totals[p_idx]
            if snap_every and t % snap_every == 0:
                mat = materialize_joint(
                    env, [a.q_ensemble for a in self.agents], self.joint_q,
                    self.space.combos, self.space.levels, self.space.coordinated,
                    self.space.comp).astype(np.float32)
                rec.snapshots.append((t, mat))
            if oracle_locals is not None and t >= (3 * T) // 4 and t % max(1, T // 100) == 0:
                snap = np.stack([np.stack([tab for tab in ag.tables])
                                 for ag in self.agents]).astype(np.float32)
                local_snaps.append((t, snap))

        # --- finalization
        self.ledger.charge_table_upload(
            n * self.env.n_local_states * self.env.n_actions)
        for pair in tracked:
            counts = [int(self.visit_counts[i][pair.local_states[i],
                                               pair.local_actions[i]])
                      for i in range(n)]
            pair.visits = min(counts)
        rec.tracked = tracked
        rec.extras["coord_events"] = coord_events
        rec.extras["initial_joint_dense"] = self.initial_joint is not None
        rec.extras["local_snapshots"] = local_snaps
        rec.extras["joint_writes"] = joint_writes
        rec.extras["belief_underflow"] = any(b.underflow_flagged for b in self.beliefs)
        rec.ledger_totals = {
            "messages_to_leader": self.ledger.messages_to_leader,
            "broadcasts_from_leader": self.ledger.broadcasts_from_leader,
            "payload_units": self.ledger.payload_units,
            "table_upload_units": self.ledger.table_upload_units,
            "total_units": self.ledger.total_units(),
        }
        final = materialize_joint(env, [a.q_ensemble for a in self.agents],
                                  self.joint_q, self.space.combos,
                                  self.space.levels, self.space.coordinated,
                                  self.space.comp)
        rec.final_joint = final
        rec.final_policy = greedy_joint_policy(final, self.space.valid)
        rec.wall_time = time.perf_counter() - t_start
        return rec


def run_m_memq(exp: ExperimentConfig, seed: int, layout_seed: int = 0,
               env: WirelessNetwork | None = None,
               space: ConsistentSpace | None = None,
               oracle_locals=None, track: bool = True) -> RunRecord:
    return MultiAgentRunner(exp, seed, layout_seed, env, space,
                            track=track).run(oracle_locals=oracle_locals)


class _TwoRateAgent:
    """Independent tabular learner; asymmetric rates give hysteresis."""

    def __init__(self, table: np.ndarray, gamma: float, mask: np.ndarray,
                 ratio: float):
        self.q = np.array(table, dtype=float)
        self.gamma = gamma
        self.mask = mask
        self.ratio = ratio

    def act(self, s: int, zeta: float, rng: np.random.Generator) -> int:
        valid = np.flatnonzero(self.mask[s])
        if zeta > 0.0 and rng.random() < zeta:
            return int(valid[rng.integers(valid.size)])
        return int(valid[np.argmin(self.q[s, valid])])

    def update(self, s: int, a: int, s_next: int, cost: float, alpha: float) -> None:
        valid = np.flatnonzero(self.mask[s_next])
        target = cost + self.gamma * float(self.q[s_next, valid].min())
        delta = target - self.q[s, a]
        rate = alpha if delta > 0 else alpha * self.ratio
        self.q[s, a] += rate * delta


def run_decentralized_baseline(exp: ExperimentConfig, seed: int,
                               hysteretic: bool, layout_seed: int = 0,
                               env: WirelessNetwork | None = None,
                               space: ConsistentSpace | None = None) -> RunRecord:
    """Independent (ratio 1) or hysteretic (ratio < 1) per-agent learners,
    no communication."""
    env = env if env is not None else build_network(exp, layout_seed)
    space = space if space is not None else ConsistentSpace.build(env)
    streams = StreamSet(seed)
    n = env.cfg.n_tx
    mask = env.state_action_mask()
    locals_, _ = draw_initial_tables(streams, n,
                                     (env.n_local_states, env.n_actions))
    ratio = exp.hysteretic_ratio if hysteretic else 1.0
    agents = [_TwoRateAgent(locals_[i], exp.gamma, mask, ratio) for i in range(n)]
    sched = exp.schedules
    T = exp.T
    rec = RunRecord(algo="hysteretic" if hysteretic else "independent",
                    seed=seed, T=T, l=exp.l, config_hash=exp.content_hash())
    rec.classes = np.zeros(T, dtype=np.uint8)
    rec.true_classes = np.zeros(T, dtype=np.uint8)
    rec.actions = np.zeros((T, n), dtype=np.int16)
    rec.costs = np.zeros((T, n), dtype=np.float32)
    rec.payload = np.zeros(T, dtype=np.int64)
    rec.estimate_correct = np.full(T, -1, dtype=np.int8)
    env_rng = streams.get("env")
    policy_rngs = [streams.get(f"policy-{i}") for i in range(n)]
    t_start = time.perf_counter()
    env.reset(env_rng)
    local_ids = env.local_state_ids()
    snap_every = exp.snapshot_every
    for t in range(1, T + 1):
        alpha, zeta = sched.alpha(t), sched.zeta(t)
        actions = np.array([agents[i].act(int(local_ids[i]), zeta, policy_rngs[i])
                            for i in range(n)], dtype=np.int64)
        costs, _ = env.step(actions, env_rng)
        new_ids = env.local_state_ids()
        for i in range(n):
            agents[i].update(int(local_ids[i]), int(actions[i]),
                             int(new_ids[i]), float(costs[i]), alpha)
        rec.classes[t - 1] = 1 if env.detected_coordinated() else 0
        rec.true_classes[t - 1] = 1 if env.state.coordinated else 0
        rec.actions[t - 1] = actions
        rec.costs[t - 1] = costs
        local_ids = new_ids
        if snap_every and t % snap_every == 0:
            mat = materialize_joint(env, [a.q for a in agents], None,
                                    space.combos, space.levels,
                                    space.coordinated, space.comp).astype(np.float32)
            rec.snapshots.append((t, mat))
    final = materialize_joint(env, [a.q for a in agents], None, space.combos,
                              space.levels, space.coordinated, space.comp)
    rec.final_joint = final
    rec.final_policy = greedy_joint_policy(final, space.valid)
    rec.ledger_totals = {"messages_to_leader": 0, "broadcasts_from_leader": 0,
                         "payload_units": 0, "table_upload_units": 0,
                         "total_units": 0}
    rec.wall_time = time.perf_counter() - t_start
    return rec


def run_centralized(exp: ExperimentConfig, seed: int, layout_seed: int = 0,
                    env: WirelessNetwork | None = None,
                    space: ConsistentSpace | None = None) -> RunRecord:
    """Single composite learner with full joint observability."""
    from .oracles import EnumerationCapError

    env = env if env is not None else build_network(exp, layout_seed)
    space = space if space is not None else ConsistentSpace.build(env)
    n = env.cfg.n_tx
    n_joint_states = env.n_local_states ** n
    n_joint_actions = env.n_actions ** n
    if n_joint_states > exp.joint_enum_cap:
        raise EnumerationCapError(
            f"joint state space {n_joint_states} exceeds cap {exp.joint_enum_cap}")
    streams = StreamSet(seed)
    _, joint_init = draw_initial_tables(streams, n,
                                        (env.n_local_states, env.n_actions),
                                        (n_joint_states, n_joint_actions))
    q = joint_init
    comp = space.comp
    sched = exp.schedules
    T = exp.T
    rec = RunRecord(algo="centralized", seed=seed, T=T, l=exp.l,
                    config_hash=exp.content_hash())
    rec.classes = np.zeros(T, dtype=np.uint8)
    rec.true_classes = np.zeros(T, dtype=np.uint8)
    rec.actions = np.zeros((T, n), dtype=np.int16)
    rec.costs = np.zeros((T, n), dtype=np.float32)
    rec.payload = np.zeros(T, dtype=np.int64)
    rec.estimate_correct = np.full(T, -1, dtype=np.int8)
    env_rng = streams.get("env")
    policy_rng = streams.get("policy-joint")
    t_start = time.perf_counter()
    env.reset(env_rng)
    sid = env.joint_state_id(env.local_state_ids())
    positions = env.state.positions.copy()
    snap_every = exp.snapshot_every
    for t in range(1, T + 1):
        alpha, zeta = sched.alpha(t), sched.zeta(t)
        mask = joint_valid_for_positions(env, positions, comp)
        valid = np.flatnonzero(mask)
        if zeta > 0.0 and policy_rng.random() < zeta:
            a_joint = int(valid[policy_rng.integers(valid.size)])
        else:
            a_joint = int(valid[np.argmin(q[sid, valid])])
        actions = comp[a_joint]
        costs, _ = env.step(actions, env_rng)
        new_sid = env.joint_state_id(env.local_state_ids())
        positions = env.state.positions.copy()
        next_mask = joint_valid_for_positions(env, positions, comp)
        target = float(np.sum(costs)) + exp.gamma * float(q[new_sid, next_mask].min())
        q[sid, a_joint] = (1.0 - alpha) * q[sid, a_joint] + alpha * target
        rec.classes[t - 1] = 1 if env.detected_coordinated() else 0
        rec.true_classes[t - 1] = 1 if env.state.coordinated else 0
        rec.actions[t - 1] = actions
        rec.costs[t - 1] = costs
        sid = new_sid
        if snap_every and t % snap_every == 0:
            rec.snapshots.append((t, q[space.sids].astype(np.float32)))
    rec.final_joint = q[space.sids]
    rec.final_policy = greedy_joint_policy(rec.final_joint, space.valid)
    rec.ledger_totals = {"messages_to_leader": 0, "broadcasts_from_leader": 0,
                         "payload_units": 0, "table_upload_units": 0,
                         "total_units": 0}
    rec.wall_time = time.perf_counter() - t_start
    rec.extras["joint_table"] = q
    return rec


def run_algorithm(exp: ExperimentConfig, seed: int, layout_seed: int = 0,
                  env: WirelessNetwork | None = None,
                  space: ConsistentSpace | None = None, **kwargs) -> RunRecord:
    if exp.algo == "m_memq":
        return run_m_memq(exp, seed, layout_seed, env, space, **kwargs)
    if exp.algo == "centralized":
        return run_centralized(exp, seed, layout_seed, env, space)
    if exp.algo == "independent":
        return run_decentralized_baseline(exp, seed, False, layout_seed, env, space)
    if exp.algo == "hysteretic":
        return run_decentralized_baseline(exp, seed, True, layout_seed, env, space)
    raise ValueError(f"unknown algorithm {exp.algo}")


# -- generic single-agent loop (enumerable MDPs) -------------------------------


def run_generic_single_agent(
    kernel: np.ndarray,
    costs: np.ndarray,
    gamma: float,
    orders: list[int],
    T: int,
    seed: int,
    schedules,
    u_override: float | None = None,
    q_star: np.ndarray | None = None,
    power_refresh: int = 50,
    error_every: int = 10,
):
    """Mixed Q-learning on a generic finite MDP; with orders=[1] and u=0 this
    is exactly plain Q-learning.

    Returns (agent, sup-norm error trace as [(t, err)], visit order).
    """
    n_states, n_actions = costs.shape
    cdf = np.cumsum(kernel, axis=2)
    streams = StreamSet(seed)
    env_rng = streams.get("env")
    policy_rng = streams.get("policy-0")
    init = streams.get("qinit").uniform(0.0, 0.01, (n_states, n_actions))
    agent = MixedQAgent(
        n_states, n_actions, orders, gamma, init,
        synthetic_rng=streams.get("synthetic-0"),
        buffer_rng=streams.get("buffer-0"),
        cost_source=lambda s, a: float(costs[s, a]),
        power_refresh=power_refresh,
    )
    s = int(env_rng.integers(n_states))
    errors = []
    for t in range(1, T + 1):
        alpha, zeta = schedules.alpha(t), schedules.zeta(t)
        u = schedules.u(t) if u_override is None else u_override
        a = agent.greedy_action(s, zeta, policy_rng)
        s_next = int(np.searchsorted(cdf[s, a], env_rng.random(), side="right"))
        c = float(costs[s, a])
        agent.record_transition(s, a, s_next, c)
        agent.learn_plain(s, a, s_next, c, alpha, zeta, u)
        if q_star is not None and (t % error_every == 0 or t == T):
            err = float(np.max(np.abs(agent.q_ensemble - q_star)))
            errors.append((t, err))
        s = s_next
    return agent, errors
