# Exact desk-scale solvers used to cross-check the learners.
#
# Two oracles are built from a noiseless network:
#   * a per-agent MDP that marginalizes the other TXs as independent lazy
#     random walkers (their positions given the agent's quantized ARSS are
#     taken uniform over the geometrically consistent configurations);
#   * the exact joint MDP, which at zero noise is a function of the joint
#     positions only, so value iteration runs on position space and the
#     optimal joint Q-values broadcast over ARSS components.
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import QTable, TransitionTensor, value_iteration
from .wireless import ConfigError, WirelessNetwork, snr_cost


class EnumerationCapError(RuntimeError):
    pass


def _require_noiseless(env: WirelessNetwork, what: str) -> None:
    cfg = env.cfg
    if cfg.sigma != 0.0 or cfg.sigma_c != 0.0 or cfg.sigma_u != 0.0:
        raise ConfigError(f"{what} requires sigma = sigma_c = sigma_u = 0")


def cost_lut(env: WirelessNetwork, agent: int) -> np.ndarray:
    """Deterministic cost per (position, BS, ARSS level) at zero noise."""
    cfg = env.cfg
    d = np.maximum(env.dist_to_bs(), cfg.d_floor)  # [P, n_bs]
    level_vals = env.quant.level_values()
    out = np.empty((env.grid.n_positions, cfg.n_bs, env.n_levels))
    for p in range(env.grid.n_positions):
        for b in range(cfg.n_bs):
            for v in range(env.n_levels):
                out[p, b, v] = snr_cost(env.powers[agent], float(d[p, b]),
                                        float(level_vals[v]), 0.0, cfg.i_thr,
                                        0.0, cfg.beta)
    return out


def _move_kernels(env: WirelessNetwork) -> tuple[np.ndarray, np.ndarray]:
    """Position kernels for stay (identity) and move (lazy walk)."""
    p = env.grid.n_positions
    return np.eye(p), env.grid.walk_matrix()


def _others_combos(env: WirelessNetwork, agent: int) -> tuple[np.ndarray, np.ndarray]:
    """Enumerate the other agents' joint positions and this agent's ARSS level
    table qid[p_own, combo]."""
    cfg = env.cfg
    p = env.grid.n_positions
    others = [j for j in range(cfg.n_tx) if j != agent]
    n_combo = p ** len(others)
    if n_combo > 600_000:
        raise EnumerationCapError(
            f"{n_combo} other-agent configurations exceed the enumeration budget")
    combos = np.indices((p,) * len(others)).reshape(len(others), -1).T
    arss = np.zeros((p, n_combo))
    for k, j in enumerate(others):
        d = np.maximum(env.grid.dist[:, combos[:, k]], cfg.d_floor)
        arss += env.powers[j] / d ** 2
    qid = env.quant.level_ids(arss)  # [P, n_combo]
    return combos, qid


def enumerate_agent_mdp(env: WirelessNetwork, agent: int):
    """Exact individual MDP faced by one agent at zero noise.

    Returns (TransitionTensor, expected cost matrix, valid-action mask).
    Raises EnumerationCapError when the per-agent state space exceeds the
    configured cap.
    """
    cfg = env.cfg
    _require_noiseless(env, "per-agent enumeration")
    n_s = env.n_local_states
    if n_s > cfg.enum_cap:
        raise EnumerationCapError(
            f"per-agent state space {n_s} exceeds enumeration cap {cfg.enum_cap}")
    p, v_levels = env.grid.n_positions, env.n_levels
    identity, walk = _move_kernels(env)
    combos, qid = _others_combos(env, agent)
    n_combo, n_others = combos.shape[0], combos.shape[1]

    # R[q, p'] -> distribution of the agent's next ARSS level: contract the
    # others' marginal position kernel along every combo axis of the level
    # indicator.  Others are modeled as acting uniformly at random, i.e.
    # staying or initiating the lazy walk with equal probability.
    marg = 0.5 * identity + 0.5 * walk
    indicator = np.zeros((n_combo, p, v_levels))
    indicator[np.arange(n_combo)[:, None], np.arange(p)[None, :], qid.T] = 1.0
    r = indicator.reshape((p,) * n_others + (p, v_levels))
    for axis in range(n_others):
        r = np.tensordot(marg, r, axes=([1], [axis]))
        r = np.moveaxis(r, 0, axis)
    r = r.reshape(n_combo, p, v_levels)  # P(v' | q, p')

    # T[p, v, p', v']: average R over the configurations consistent with the
    # observed level; inconsistent (unreachable) rows fall back to all configs.
    t = np.empty((p, v_levels, p, v_levels))
    fallback = r.mean(axis=0)
    for pp in range(p):
        for vv in range(v_levels):
            sel = qid[pp] == vv
            t[pp, vv] = r[sel].mean(axis=0) if sel.any() else fallback

    lut = cost_lut(env, agent)  # [P, n_bs, V]
    # inner[p, v, p', b] = E_v' cost(p', b, v')
    inner = np.einsum("pvqw,qbw->pvqb", t, lut)
    probs = np.empty((n_s, cfg.n_actions, n_s))
    costs = np.empty((n_s, cfg.n_actions))
    for m, kern in enumerate((identity, walk)):
        block = kern[:, None, :, None] * t  # [P, V, P, V]
        cblock = np.einsum("pq,pvqb->pvb", kern, inner)  # [P, V, n_bs]
        for b in range(cfg.n_bs):
            a = m * cfg.n_bs + b
            probs[:, a, :] = block.reshape(n_s, n_s)
            costs[:, a] = cblock[:, :, b].reshape(n_s)
    mask = env.state_action_mask()
    return TransitionTensor(probs), costs, mask


def agent_q_star(env: WirelessNetwork, agent: int, tol: float = 1e-9,
                 gamma: float = 0.95) -> tuple[QTable, np.ndarray]:
    """Optimal Q-table of the enumerated individual MDP plus its action mask."""
    tensor, costs, mask = enumerate_agent_mdp(env, agent)
    return value_iteration(tensor, costs, gamma, tol, valid_mask=mask), mask


@dataclass
class JointOracle:
    """Exact joint solution on position space.

    q_star has one row per joint position combination; at zero noise the
    optimal joint Q-function does not depend on the (derived) ARSS
    components, so these rows cover every consistent joint state.
    """

    combos: np.ndarray  # [C, n_tx] position indices
    consistent_ids: np.ndarray  # [C] joint state ids
    q_star: np.ndarray  # [C, n_joint_actions]
    valid: np.ndarray  # [C, n_joint_actions] bool
    policy: np.ndarray  # [C] joint action ids
    gamma: float

    def combo_lookup(self) -> dict[int, int]:
        return {int(s): i for i, s in enumerate(self.consistent_ids)}


def joint_oracle(env: WirelessNetwork, gamma: float = 0.95, tol: float = 1e-9,
               joint_cap: int = 300_000) -> JointOracle:
    """Value-iterate the exact joint MDP of a noiseless network."""
    cfg = env.cfg
    _require_noiseless(env, "joint enumeration")
    p = env.grid.n_positions
    n = cfg.n_tx
    n_combo = p ** n
    n_ja = cfg.n_actions ** n
    if n_combo > joint_cap:
        raise EnumerationCapError(
            f"joint position space {n_combo} exceeds the enumeration cap {joint_cap}")
    combos = env.position_combos()
    qids = env.combo_levels(combos)  # [C, n] level per agent
    identity, walk = _move_kernels(env)

    def contract(vec: np.ndarray, move_flags: tuple[int, ...]) -> np.ndarray:
        """E[vec(combo')] given per-agent move flags."""
        ten = vec.reshape((p,) * n)
        for axis, mv in enumerate(move_flags):
            if mv:
                ten = np.tensordot(walk, ten, axes=([1], [axis]))
                ten = np.moveaxis(ten, 0, axis)
        return ten.reshape(-1)

    move_combos = [tuple(int(x) for x in np.unravel_index(k, (2,) * n))
                   for k in range(2 ** n)]
    # expected joint cost per (combo, joint action)
    luts = [cost_lut(env, i) for i in range(n)]
    action_parts = [env.split_joint_action(a) for a in range(n_ja)]
    cexp = np.zeros((n_combo, n_ja))
    cost_vec_cache: dict[tuple[int, int], np.ndarray] = {}
    for i in range(n):
        for b in range(cfg.n_bs):
            cost_vec_cache[(i, b)] = luts[i][combos[:, i], b, qids[:, i]]
    exp_cache: dict[tuple[int, int, tuple], np.ndarray] = {}
    for a_id, parts in enumerate(action_parts):
        flags = tuple(int(ai) // cfg.n_bs for ai in parts)
        for i in range(n):
            b = int(parts[i]) % cfg.n_bs
            key = (i, b, flags)
            if key not in exp_cache:
                exp_cache[key] = contract(cost_vec_cache[(i, b)], flags)
            cexp[:, a_id] += exp_cache[key]

    valid = np.ones((n_combo, n_ja), dtype=bool)
    for a_id, parts in enumerate(action_parts):
        ok = np.ones(n_combo, dtype=bool)
        for i in range(n):
            ok &= env.valid_pos_action[combos[:, i], int(parts[i])]
        valid[:, a_id] = ok
    if not valid.any(axis=1).all():
        raise ConfigError("some joint position has no valid joint action")

    flags_of_action = [tuple(int(ai) // cfg.n_bs for ai in parts)
                       for parts in action_parts]
    w = np.zeros(n_combo)
    big = float(np.max(cexp)) / (1.0 - gamma) * 10.0 + 1.0
    for _ in range(5_000_000):
        ev = {flags: contract(w, flags) for flags in move_combos}
        q = cexp + gamma * np.stack(
            [ev[flags_of_action[a]] for a in range(n_ja)], axis=1)
        q = np.where(valid, q, big)
        w_new = q.min(axis=1)
        delta = float(np.max(np.abs(w_new - w)))
        w = w_new
        if delta <= tol:
            break
    else:
        raise RuntimeError("joint value iteration failed to converge")

    policy = np.where(valid, q, np.inf).argmin(axis=1).astype(np.int64)
    local = combos * env.n_levels + qids
    weights = env.n_local_states ** np.arange(n - 1, -1, -1)
    consistent = local @ weights
    return JointOracle(combos, consistent, q, valid, policy, gamma)
