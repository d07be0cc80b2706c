# Single-agent mixed Q-learning over one real environment and synthetic
# "cousin" environments whose kernels are matrix powers of the estimated
# transition tensor.  K parallel learners are fused into an ensemble
# Q-function by an inertia-weighted convex combination.
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import (MdpError, PttEstimator, Sample, masked_argmin, masked_min,
                  normalize_counts, validate_stochastic)


class ReplayBuffer:
    """Fixed-capacity ring buffer of (s, a, s', c) transitions."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise MdpError("buffer capacity must be positive")
        self.capacity = capacity
        self.s = np.empty(capacity, dtype=np.int64)
        self.a = np.empty(capacity, dtype=np.int64)
        self.s_next = np.empty(capacity, dtype=np.int64)
        self.c = np.empty(capacity, dtype=float)
        self._size = 0
        self._head = 0

    def __len__(self) -> int:
        return self._size

    def append(self, s: int, a: int, s_next: int, cost: float) -> None:
        i = self._head
        self.s[i] = s
        self.a[i] = a
        self.s_next[i] = s_next
        self.c[i] = cost
        self._head = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample_batch(self, rng: np.random.Generator, size: int):
        """Uniform minibatch (with replacement) over current contents."""
        if self._size == 0:
            raise MdpError("cannot sample from an empty buffer")
        idx = rng.integers(0, self._size, size=size)
        return self.s[idx], self.a[idx], self.s_next[idx], self.c[idx]


def matrix_power_kernel(probs: np.ndarray, n: int) -> np.ndarray:
    """Raise each action slice P(.,a,.) to the n-th matrix power."""
    if n < 1:
        raise MdpError("kernel order must be >= 1")
    probs = validate_stochastic(probs)
    if n == 1:
        return probs
    out = np.empty_like(probs)
    for a in range(probs.shape[1]):
        out[:, a, :] = np.linalg.matrix_power(probs[:, a, :], n)
    # matrix powers of stochastic matrices are stochastic up to roundoff
    np.clip(out, 0.0, 1.0, out=out)
    out /= out.sum(axis=2, keepdims=True)
    return out


def draw_next_state(cdf_row: np.ndarray, rng: np.random.Generator) -> int:
    return int(np.searchsorted(cdf_row, rng.random(), side="right"))


def update_weights(td_ema: np.ndarray, eps_w: float = 1e-6) -> np.ndarray:
    """Simplex weights inversely proportional to mean absolute TD error."""
    raw = 1.0 / (eps_w + np.asarray(td_ema, dtype=float))
    return raw / raw.sum()


def ensemble_update(q_ensemble: np.ndarray, tables: list[np.ndarray],
                    weights: np.ndarray, s: int, a: int, u: float) -> None:
    """Inertia-weighted fusion of the per-environment values at one entry."""
    if not 0.0 <= u < 1.0 + 1e-12:
        raise MdpError(f"update ratio must lie in [0, 1], got {u}")
    mix = sum(w * t[s, a] for w, t in zip(weights, tables))
    q_ensemble[s, a] = u * q_ensemble[s, a] + (1.0 - u) * mix


class EmpiricalCosts:
    """Running per-(s,a) mean cost with a global-mean fallback."""

    def __init__(self, n_states: int, n_actions: int):
        self.total = np.zeros((n_states, n_actions))
        self.count = np.zeros((n_states, n_actions))
        self._global_total = 0.0
        self._global_count = 0

    def add(self, s: int, a: int, cost: float) -> None:
        self.total[s, a] += cost
        self.count[s, a] += 1.0
        self._global_total += cost
        self._global_count += 1

    def __call__(self, s: int, a: int) -> float:
        if self.count[s, a] > 0:
            return float(self.total[s, a] / self.count[s, a])
        if self._global_count > 0:
            return self._global_total / self._global_count
        return 0.0


class MixedQAgent:
    """One agent's cousin set: K Q-tables, their weights, and the ensemble.

    The caller drives it with real transitions; the agent maintains the
    replay buffer, the estimated transition tensor, the synthetic kernels
    (refreshed every `power_refresh` steps), per-order TD statistics
    measured on the real stream, and the fused ensemble table.
    """

    def __init__(
        self,
        n_states: int,
        n_actions: int,
        orders: list[int],
        gamma: float,
        init_table: np.ndarray,
        synthetic_rng: np.random.Generator,
        buffer_rng: np.random.Generator,
        valid_mask: np.ndarray | None = None,
        cost_source=None,
        ema_decay: float = 0.99,
        eps_w: float = 1e-6,
        power_refresh: int = 50,
        batch_size: int = 32,
        capacity: int = 10_000,
    ):
        if 1 not in orders:
            raise MdpError("the real environment (order 1) must be included")
        if len(set(orders)) != len(orders):
            raise MdpError("cousin orders must be distinct")
        self.n_states = n_states
        self.n_actions = n_actions
        self.orders = list(orders)
        self.gamma = gamma
        self.valid_mask = valid_mask
        self.tables = [np.array(init_table, dtype=float) for _ in self.orders]
        self.q_ensemble = np.array(init_table, dtype=float)
        self.td_ema = np.zeros(len(self.orders))
        self.weights = update_weights(self.td_ema, eps_w)
        self.ema_decay = ema_decay
        self.eps_w = eps_w
        self.buffer = ReplayBuffer(capacity)
        self.estimator = PttEstimator(n_states, n_actions)
        self.costs = EmpiricalCosts(n_states, n_actions) if cost_source is None else None
        self.cost_source = cost_source if cost_source is not None else self.costs
        self.batch_size = batch_size
        self.power_refresh = power_refresh
        self.synthetic_rng = synthetic_rng
        self.buffer_rng = buffer_rng
        self._kernel_cdf: dict[int, np.ndarray] = {}
        self._synth_state = {n: 0 for n in self.orders if n > 1}
        self._steps = 0

    # -- model maintenance ----------------------------------------------------

    def record_transition(self, s: int, a: int, s_next: int, cost: float) -> None:
        """Store the real sample and advance the model estimate one tick."""
        self.buffer.append(s, a, s_next, cost)
        if self.costs is not None:
            self.costs.add(s, a, cost)
        bs, ba, bn, _ = self.buffer.sample_batch(self.buffer_rng, self.batch_size)
        self.estimator.add(bs, ba, bn)
        if self._steps % self.power_refresh == 0:
            self.refresh_kernels()
        self._steps += 1

    def refresh_kernels(self) -> None:
        p_hat = self.estimator.probs()
        for n in self.orders:
            if n == 1:
                continue
            kern = matrix_power_kernel(p_hat, n)
            self._kernel_cdf[n] = np.cumsum(kern, axis=2)

    def kernel(self, n: int) -> np.ndarray:
        """Current transition kernel of cousin order n (probabilities)."""
        if n == 1:
            return self.estimator.probs()
        cdf = self._kernel_cdf[n]
        probs = np.diff(cdf, axis=2, prepend=0.0)
        return probs

    # -- learning steps -------------------------------------------------------

    def _masked_min(self, table: np.ndarray, s: int) -> float:
        mask = None if self.valid_mask is None else self.valid_mask[s]
        return masked_min(table[s], mask)

    def record_td(self, s: int, a: int, s_next: int, cost: float) -> None:
        """Update per-order TD statistics on the real transition."""
        for k, tab in enumerate(self.tables):
            delta = cost + self.gamma * self._masked_min(tab, s_next) - tab[s, a]
            self.td_ema[k] = (self.ema_decay * self.td_ema[k]
                              + (1.0 - self.ema_decay) * abs(delta))
        self.weights = update_weights(self.td_ema, self.eps_w)

    def real_update(self, s: int, a: int, s_next: int, cost: float, alpha: float) -> None:
        tab = self.tables[self.orders.index(1)]
        target = cost + self.gamma * self._masked_min(tab, s_next)
        tab[s, a] = (1.0 - alpha) * tab[s, a] + alpha * target

    def synthetic_step(self, order: int, zeta: float, alpha: float) -> Sample:
        """One exploration step inside the order-n cousin environment.

        Order 1 draws from the current estimated kernel itself, which is
        distributed like the real environment once the estimate converges.
        """
        k = self.orders.index(order)
        tab = self.tables[k]
        s = self._synth_state.setdefault(order, 0)
        mask = None if self.valid_mask is None else self.valid_mask[s]
        if mask is not None and not mask.any():
            s = 0
            mask = self.valid_mask[s]
        row = tab[s]
        if self.synthetic_rng.random() < zeta:
            if mask is None:
                a = int(self.synthetic_rng.integers(self.n_actions))
            else:
                valid = np.flatnonzero(mask)
                a = int(valid[self.synthetic_rng.integers(valid.size)])
        else:
            a = masked_argmin(row, mask)
        if order == 1:
            counts = self.estimator.counts[s, a]
            total = counts.sum()
            probs = counts / total if total > 0 else np.full(self.n_states,
                                                             1.0 / self.n_states)
            s_next = draw_next_state(np.cumsum(probs), self.synthetic_rng)
        else:
            s_next = draw_next_state(self._kernel_cdf[order][s, a],
                                     self.synthetic_rng)
        cost = float(self.cost_source(s, a))
        target = cost + self.gamma * self._masked_min(tab, s_next)
        tab[s, a] = (1.0 - alpha) * tab[s, a] + alpha * target
        self._synth_state[order] = s_next
        return Sample(s, a, s_next, cost)

    def fuse(self, s: int, a: int, u: float) -> None:
        ensemble_update(self.q_ensemble, self.tables, self.weights, s, a, u)

    def learn_plain(self, s: int, a: int, s_next: int, cost: float,
                    alpha: float, zeta: float, u: float) -> None:
        """Full uncoordinated learning step from one real transition."""
        self.record_td(s, a, s_next, cost)
        self.real_update(s, a, s_next, cost, alpha)
        for n in self.orders:
            if n > 1:
                self.synthetic_step(n, zeta, alpha)
        self.fuse(s, a, u)

    def learn_shared_target(self, s: int, a: int, cost: float, shared_value: float,
                            n_agents: int, alpha: float, u: float) -> None:
        """Coordinated hand-off: every order learns toward an equal share of
        the joint continuation value."""
        target = cost + (self.gamma / n_agents) * shared_value
        for tab in self.tables:
            tab[s, a] = (1.0 - alpha) * tab[s, a] + alpha * target
        self.fuse(s, a, u)

    def ensemble_min(self, s: int) -> float:
        return self._masked_min(self.q_ensemble, s)

    def greedy_action(self, s: int, zeta: float, rng: np.random.Generator) -> int:
        mask = None if self.valid_mask is None else self.valid_mask[s]
        if zeta > 0.0 and rng.random() < zeta:
            if mask is None:
                return int(rng.integers(self.n_actions))
            valid = np.flatnonzero(mask)
            return int(valid[rng.integers(valid.size)])
        return masked_argmin(self.q_ensemble[s], mask)
