# Multi-agent coordination layer: noisy coordination detection, windowed
# Bayesian joint-state estimation, the leader-mediated exchange protocol,
# the four-case Q-update dispatch, and communication-cost accounting.
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cousins import MixedQAgent
from .mdp import MdpError
from .wireless import WirelessNetwork, true_arss_all


class ProtocolError(RuntimeError):
    pass


def classify_state(readings: np.ndarray, i_thr: float) -> bool:
    """A joint state is flagged coordinated when any reading exceeds the
    threshold."""
    return bool((np.asarray(readings) > i_thr).any())


def likelihood(reading: float, candidate_means: np.ndarray, sigma_c: float) -> np.ndarray:
    """Gaussian density of the reading under each candidate configuration."""
    sigma = max(float(sigma_c), 1e-9)
    z = (np.asarray(candidate_means, dtype=float) - reading) / sigma
    return np.exp(-0.5 * z * z) / (sigma * np.sqrt(2.0 * np.pi))


def log_likelihood(reading: float, candidate_means: np.ndarray, sigma_c: float) -> np.ndarray:
    sigma = max(float(sigma_c), 1e-9)
    z = (np.asarray(candidate_means, dtype=float) - reading) / sigma
    return -0.5 * z * z - np.log(sigma * np.sqrt(2.0 * np.pi))


def window_radius(delta0: float, cell: float, t: int, l: int) -> float:
    """Search-window radius: delta0 + 2*cell*min(l, t mod l)."""
    return delta0 + 2.0 * cell * min(l, t % l)


@dataclass
class JointEstimate:
    agent: int
    joint_state: int
    confidence: float
    t: int

    def __post_init__(self):
        if not 0.0 < self.confidence <= 1.0 + 1e-12:
            raise ProtocolError(f"confidence must lie in (0,1], got {self.confidence}")


class BeliefVector:
    """One agent's belief over the other agents' joint positions.

    The support is a product of per-agent windows around anchor positions
    committed at the last reset; the radius grows with the time since the
    reset so a random-walking target cannot escape before the next reset.
    Each update first diffuses the belief through the targets' lazy-walk
    mobility kernel (restricted to the window), then multiplies in the ARSS
    likelihood and renormalizes in the log domain.
    """

    def __init__(self, env: WirelessNetwork, owner: int, delta0: float, l: int,
                 temperature: float = 1.0):
        self.env = env
        self.owner = owner
        self.others = [j for j in range(env.cfg.n_tx) if j != owner]
        self.delta0 = delta0
        self.l = int(l)
        self.temperature = temperature
        self.anchors = None  # anchor position per other agent
        self.sets = None  # per other agent: window position indices
        self.support = None  # [M, n_others] position indices (meshgrid order)
        self.log_probs = None
        self.underflow_flagged = False
        self._steps_since_reset = 0
        self._walk = env.grid.walk_matrix()

    # -- support construction -------------------------------------------------

    def _window_positions(self, anchor: int, radius: float) -> np.ndarray:
        d = self.env.grid.dist[anchor]
        return np.flatnonzero(d <= radius + 1e-9)

    def _rebuild_support(self) -> None:
        grids = np.meshgrid(*self.sets, indexing="ij")
        self.support = np.stack([g.ravel() for g in grids], axis=1)

    def reset(self, anchors, t: int) -> None:
        """Reinitialize to uniform over a radius-delta0 window around the
        committed anchors."""
        self.anchors = np.asarray(anchors, dtype=np.int64)
        self._steps_since_reset = 0
        self.sets = [self._window_positions(a, self.delta0) for a in self.anchors]
        self._rebuild_support()
        n = self.support.shape[0]
        self.log_probs = np.full(n, -np.log(n))

    def radius(self) -> float:
        return self.delta0 + 2.0 * self.env.cfg.cell_size * min(
            self.l, self._steps_since_reset)

    def _predict(self) -> None:
        """Diffuse belief mass through the per-target walk kernel onto the
        (possibly grown) window."""
        new_sets = [self._window_positions(a, self.radius()) for a in self.anchors]
        belief = np.exp(self.log_probs).reshape([s.size for s in self.sets])
        for axis, (old, new) in enumerate(zip(self.sets, new_sets)):
            kern = self._walk[np.ix_(old, new)]
            belief = np.tensordot(belief, kern, axes=([axis], [0]))
            belief = np.moveaxis(belief, -1, axis)
        self.sets = new_sets
        self._rebuild_support()
        flat = belief.reshape(-1)
        total = flat.sum()
        if total <= 0.0:
            self.underflow_flagged = True
            flat = np.full(flat.size, 1.0 / flat.size)
            total = 1.0
        with np.errstate(divide="ignore"):
            self.log_probs = np.log(flat / total)

    def predict_only(self) -> None:
        """Advance the motion prior by one step without a measurement.

        Used on uncoordinated slots, where no estimation is triggered but
        the targets keep moving; requires no communication.
        """
        self._steps_since_reset += 1
        self._predict()

    # -- Bayesian update ------------------------------------------------------

    def candidate_means(self, own_position: int) -> np.ndarray:
        """Noiseless ARSS the owner would sense for each candidate."""
        cfg = self.env.cfg
        dist = self.env.grid.dist
        means = np.zeros(self.support.shape[0])
        for k, j in enumerate(self.others):
            d = np.maximum(dist[own_position, self.support[:, k]], cfg.d_floor)
            means += self.env.powers[j] / d ** 2
        return means

    def map_update(self, reading: float, own_position: int, t: int) -> tuple[int, float]:
        """One posterior update; returns (support row of the MAP estimate,
        its posterior probability)."""
        if self.support is None or self.support.shape[0] == 0:
            raise ProtocolError("belief support is empty")
        self._steps_since_reset += 1
        self._predict()
        loglik = log_likelihood(reading, self.candidate_means(own_position),
                                self.env.cfg.sigma_c)
        scores = self.log_probs + loglik
        if not np.isfinite(scores).any():
            # numeric underflow: fall back to uniform, flag it
            self.underflow_flagged = True
            scores = np.zeros_like(scores)
        # shift to a well-scaled range before the softmax normalization;
        # raw log-scores can be astronomically negative at tiny sigma
        scores = (scores - np.max(scores)) / self.temperature
        self.log_probs = scores - _logsumexp(scores)
        best = int(np.argmax(self.log_probs))  # first max = lowest joint index
        return best, float(np.exp(self.log_probs[best]))

    def estimate_joint_state(self, reading: float, own_state_id: int,
                             own_position: int, t: int) -> JointEstimate:
        """MAP estimate of the full joint state as seen by the owner."""
        best, conf = self.map_update(reading, own_position, t)
        combo = self.support[best]
        positions = np.empty(self.env.cfg.n_tx, dtype=np.int64)
        positions[self.owner] = own_position
        for k, j in enumerate(self.others):
            positions[j] = combo[k]
        # fill the others' ARSS components from the candidate geometry
        vals = true_arss_all(self.env.grid.dist, positions, self.env.powers,
                             self.env.cfg.d_floor)
        levels = self.env.quant.level_ids(vals)
        local = positions * self.env.n_levels + levels
        local[self.owner] = own_state_id
        joint = self.env.joint_state_id(local)
        return JointEstimate(self.owner, joint, max(conf, 1e-300), t)

    def commit_anchor(self, estimate_positions: np.ndarray) -> None:
        """Remember the latest estimated positions for the next reset."""
        self._last_positions = np.asarray(
            [estimate_positions[j] for j in self.others], dtype=np.int64)

    def reset_to_committed(self, t: int) -> None:
        anchors = getattr(self, "_last_positions", self.anchors)
        self.reset(anchors, t)

    def probabilities(self) -> np.ndarray:
        return np.exp(self.log_probs)


def _logsumexp(x: np.ndarray) -> float:
    m = float(np.max(x))
    if not np.isfinite(m):
        return m
    return m + float(np.log(np.exp(x - m).sum()))


@dataclass
class CommsLedger:
    """Scalar-payload accounting of the leader-mediated exchange."""

    messages_to_leader: int = 0
    broadcasts_from_leader: int = 0
    payload_units: int = 0
    table_upload_units: int = 0
    per_iteration: list = field(default_factory=list)
    _current: int = 0

    def charge_up(self, units: int, messages: int = 1) -> None:
        self.messages_to_leader += messages
        self.payload_units += units
        self._current += units

    def charge_down(self, units: int, messages: int = 1) -> None:
        self.broadcasts_from_leader += messages
        self.payload_units += units
        self._current += units

    def charge_table_upload(self, units: int) -> None:
        self.table_upload_units += units

    def end_iteration(self) -> None:
        self.per_iteration.append(self._current)
        self._current = 0

    def total_units(self) -> int:
        return self.payload_units + self.table_upload_units


def comms_cost(ledger: CommsLedger, t_iters: int, n_tx: int, n_local_states: int,
               n_local_actions: int, fit_constant: float | None = None):
    """Total scalar payload and, when a calibration constant is supplied,
    whether the measured cost conforms to C * n_tx * max(T, |S_i||A_i|)."""
    total = ledger.total_units()
    scale = n_tx * max(t_iters, n_local_states * n_local_actions)
    if fit_constant is None:
        return total, None
    return total, bool(total <= fit_constant * scale)


class JointQTable:
    """Joint action-value store held by the leader.

    Dense below `dense_cap` joint entries, otherwise a sparse dict over
    written entries with deterministic seeded defaults.  Only rows of
    coordinated joint states are ever written; uncoordinated rows live
    implicitly as sums of the agents' ensemble tables.
    """

    INIT_SCALE = 0.01

    def __init__(self, n_states: int, n_actions: int, seed: int,
                 init_rng: np.random.Generator | None = None,
                 dense_cap: int = 20_000_000):
        self.n_states = int(n_states)
        self.n_actions = int(n_actions)
        self.seed = int(seed)
        self.dense = self.n_states * self.n_actions <= dense_cap
        if self.dense:
            rng = init_rng if init_rng is not None else np.random.default_rng(seed)
            self.values = rng.uniform(0.0, self.INIT_SCALE,
                                      (self.n_states, self.n_actions))
            self.written = np.zeros((self.n_states, self.n_actions), dtype=bool)
        else:
            self.values = None
            self.written = None
            self._store: dict[tuple[int, int], float] = {}

    def _default_row(self, s: int) -> np.ndarray:
        a = np.arange(self.n_actions, dtype=np.uint64)
        with np.errstate(over="ignore"):  # uint64 wraparound is the point
            x = (np.uint64(self.seed) * np.uint64(0x9E3779B97F4A7C15)
                 ^ np.uint64(s) * np.uint64(0xBF58476D1CE4E5B9)
                 ^ (a + np.uint64(1)) * np.uint64(0x94D049BB133111EB))
            x = _splitmix64(x)
        return (x.astype(np.float64) / 2.0 ** 64) * self.INIT_SCALE

    def get(self, s: int, a: int) -> float:
        if self.dense:
            return float(self.values[s, a])
        v = self._store.get((s, a))
        if v is None:
            return float(self._default_row(s)[a])
        return v

    def set(self, s: int, a: int, value: float) -> None:
        if not np.isfinite(value):
            raise MdpError("joint Q-table update produced a non-finite value")
        if self.dense:
            self.values[s, a] = value
            self.written[s, a] = True
        else:
            self._store[(s, a)] = value

    def row(self, s: int) -> np.ndarray:
        if self.dense:
            return self.values[s].copy()
        row = self._default_row(s)
        for a in range(self.n_actions):
            v = self._store.get((s, a))
            if v is not None:
                row[a] = v
        return row

    def written_row(self, s: int) -> np.ndarray:
        if self.dense:
            return self.written[s].copy()
        return np.array([(s, a) in self._store for a in range(self.n_actions)])

    def n_written(self) -> int:
        return int(self.written.sum()) if self.dense else len(self._store)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    x = x + np.uint64(0x9E3779B97F4A7C15)
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


@dataclass
class TransitionData:
    """Everything the dispatcher needs about one joint transition."""

    local_s: np.ndarray  # per-agent state ids before the step
    local_a: np.ndarray  # per-agent executed action ids
    local_s_next: np.ndarray
    costs: np.ndarray
    joint_prev_est: int | None  # leader's estimate when leaving a C state
    joint_act: int | None  # joint action id the leader broadcast
    joint_next_est: int | None  # leader's estimate on entering a C state
    reports: dict[int, tuple[float, float]] | None  # agent -> (cost, min Q^e)


def dispatch_update(
    prev_coordinated: bool,
    new_coordinated: bool,
    agents: list[MixedQAgent],
    joint_q: JointQTable,
    data: TransitionData,
    alpha: float,
    zeta: float,
    u: float,
    gamma: float,
    joint_row_min,
) -> str:
    """Apply exactly one of the four case-dependent update rules.

    `joint_row_min` maps a coordinated joint state id to the minimum of the
    (validity-masked) joint Q-row.  Returns the case label.
    """
    n = len(agents)
    if prev_coordinated and data.reports is not None:
        missing = [i for i in range(n) if i not in data.reports]
        if missing:
            raise ProtocolError(f"missing coordinated-mode report from agents {missing}")

    if not prev_coordinated and not new_coordinated:
        for i, ag in enumerate(agents):
            ag.learn_plain(int(data.local_s[i]), int(data.local_a[i]),
                           int(data.local_s_next[i]), float(data.costs[i]),
                           alpha, zeta, u)
        return "UU"

    if not prev_coordinated and new_coordinated:
        if data.joint_next_est is None:
            raise ProtocolError("entering coordination without a joint estimate")
        shared = joint_row_min(data.joint_next_est)
        for i, ag in enumerate(agents):
            ag.learn_shared_target(int(data.local_s[i]), int(data.local_a[i]),
                                   float(data.costs[i]), shared, n, alpha, u)
        return "UC"

    if data.joint_prev_est is None or data.joint_act is None:
        raise ProtocolError("leaving coordination without the previous estimate")
    s_bar, a_bar = data.joint_prev_est, data.joint_act
    old = joint_q.get(s_bar, a_bar)
    if prev_coordinated and not new_coordinated:
        if data.reports is None:
            raise ProtocolError("coordinated exit requires agent reports")
        total = 0.0
        for i in range(n):
            cost_i, min_qe = data.reports[i]
            total += cost_i + gamma * min_qe
        joint_q.set(s_bar, a_bar, (1.0 - alpha) * old + alpha * total)
        return "CU"

    if data.joint_next_est is None:
        raise ProtocolError("staying coordinated requires the new estimate")
    total_cost = float(np.sum(data.costs))
    target = total_cost + gamma * joint_row_min(data.joint_next_est)
    joint_q.set(s_bar, a_bar, (1.0 - alpha) * old + alpha * target)
    return "CC"
