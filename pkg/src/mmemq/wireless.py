# Grid wireless network: geometry, random-walk mobility, aggregated
# received-signal-strength (ARSS) sensing with quantization, the three-term
# transmission cost, and the coordinated/uncoordinated state partition.
#
# Physical conventions:
#   * transmitters (TXs) live on lattice points {0, cell, 2*cell, ..., length}
#     per axis and perform lazy random walks (U, R, D, L, stay with equal
#     probability; off-grid moves resolve to stay);
#   * ARSS at TX i is sum_{j != i} power_j / max(dist_ij, d_min)^2, an
#     inverse-square aggregation with a floor that keeps co-located TXs finite;
#   * a joint state is coordinated when any TX's quantized noiseless ARSS
#     exceeds the threshold; noisy readings may mis-detect this.
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .gauss import q_function

SENTINEL_COST = 1.0e6  # returned for invalid TX-BS associations, never learned
SNR_DENOM_FLOOR = 1.0e-6


class ConfigError(ValueError):
    pass


class ContractError(RuntimeError):
    pass


@dataclass(frozen=True)
class WirelessConfig:
    """Static description of one grid wireless network.

    i_min / i_max may be None, in which case the quantizer range is derived
    from the extreme ARSS values the geometry can produce.
    """

    grid_length: float = 14.0
    cell_size: float = 2.0
    n_tx: int = 2
    n_bs: int = 2
    bs_radius_bounds: tuple[float, float] = (7.0, 10.5)
    arss_levels: int = 3
    i_thr: float = 1.0
    i_min: float | None = None
    i_max: float | None = None
    sigma: float = 0.0
    sigma_c: float = 0.0
    sigma_u: float = 0.0
    tx_powers: tuple[float, ...] = (1e-2, 1e-2)
    beta: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    d_min: float | None = None
    bs_min_sep: float | None = None
    tx_radii: tuple[float, ...] | None = None
    enum_cap: int = 5000

    def __post_init__(self):
        if self.grid_length <= 0 or self.cell_size <= 0:
            raise ConfigError("grid_length and cell_size must be positive")
        ratio = self.grid_length / self.cell_size
        if abs(ratio - round(ratio)) > 1e-9:
            raise ConfigError("grid_length must be a multiple of cell_size")
        if self.n_tx < 1 or self.n_bs < 1:
            raise ConfigError("need at least one TX and one BS")
        if len(self.tx_powers) != self.n_tx:
            raise ConfigError("tx_powers must list one power per TX")
        if any(p <= 0 for p in self.tx_powers):
            raise ConfigError("all TX powers must be positive")
        if abs(sum(self.beta) - 1.0) > 1e-9:
            raise ConfigError("cost weights must sum to 1")
        if any(b < 0 for b in self.beta):
            raise ConfigError("cost weights must be non-negative")
        if self.sigma < 0 or self.sigma_c < 0 or self.sigma_u < 0:
            raise ConfigError("noise levels must be non-negative")
        if self.sigma_u < 5.0 * self.sigma_c:
            raise ConfigError("uncoordinated noise must dominate: sigma_u >= 5*sigma_c")
        if self.arss_levels < 1:
            raise ConfigError("need at least one ARSS level")
        if (self.i_min is None) != (self.i_max is None):
            raise ConfigError("i_min and i_max must be given together")
        if self.i_min is not None and self.i_max <= self.i_min and self.arss_levels > 1:
            raise ConfigError("i_max must exceed i_min")
        if self.tx_radii is not None and len(self.tx_radii) != self.n_tx:
            raise ConfigError("tx_radii must list one radius per TX")
        if self.bs_radius_bounds[0] > self.bs_radius_bounds[1]:
            raise ConfigError("bs_radius_bounds must be (lo, hi) with lo <= hi")

    @property
    def n_axis(self) -> int:
        return int(round(self.grid_length / self.cell_size)) + 1

    @property
    def n_positions(self) -> int:
        return self.n_axis ** 2

    @property
    def d_floor(self) -> float:
        return self.cell_size / 2.0 if self.d_min is None else self.d_min

    @property
    def n_actions(self) -> int:
        return 2 * self.n_bs

    def leader(self) -> int:
        """TX with the largest communication radius, ties to the lowest index."""
        if self.tx_radii is None:
            return 0
        radii = np.asarray(self.tx_radii)
        return int(np.argmax(radii))  # argmax returns first maximum


def encode_action(m: int, b: int, n_bs: int) -> int:
    """(move flag, 1-based BS index) -> dense action id m*n_bs + (b-1)."""
    if m not in (0, 1) or not 1 <= b <= n_bs:
        raise ConfigError(f"bad action ({m}, {b})")
    return m * n_bs + (b - 1)


def decode_action(a: int, n_bs: int) -> tuple[int, int]:
    if not 0 <= a < 2 * n_bs:
        raise ConfigError(f"action id {a} out of range")
    return a // n_bs, a % n_bs + 1


def quantize(values, i_min: float, i_max: float, delta: float):
    """Clamp to [i_min, i_max] and snap to the nearest delta step.

    Exact midpoints round toward i_min.  Returns integer level indices.
    """
    if delta <= 0:
        raise ConfigError("quantization step must be positive")
    x = (np.asarray(values, dtype=float) - i_min) / delta
    max_idx = int(round((i_max - i_min) / delta))
    idx = np.ceil(x - 0.5).astype(np.int64)
    return np.clip(idx, 0, max_idx)


@dataclass(frozen=True)
class Quantizer:
    i_min: float
    i_max: float
    n_levels: int

    @property
    def delta(self) -> float:
        if self.n_levels == 1:
            return 1.0
        return (self.i_max - self.i_min) / (self.n_levels - 1)

    def level_ids(self, values) -> np.ndarray:
        if self.n_levels == 1:
            return np.zeros(np.shape(values), dtype=np.int64)
        return quantize(values, self.i_min, self.i_max, self.delta)

    def level_values(self) -> np.ndarray:
        return self.i_min + self.delta * np.arange(self.n_levels)


class Grid:
    """Lattice geometry: positions, pairwise distances, move tables."""

    def __init__(self, cfg: WirelessConfig):
        self.cfg = cfg
        n = cfg.n_axis
        xs, ys = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        self.coords = np.stack([xs.ravel(), ys.ravel()], axis=1)  # index units
        self.points = self.coords * cfg.cell_size  # physical units
        diff = self.points[:, None, :] - self.points[None, :, :]
        self.dist = np.sqrt((diff ** 2).sum(axis=2))
        # next_pos[p, k]: landing position for move k in (stay, U, R, D, L);
        # moves that would leave the grid resolve to stay.
        steps = np.array([[0, 0], [0, 1], [1, 0], [0, -1], [-1, 0]])
        nxt = np.empty((n * n, 5), dtype=np.int64)
        for k, (dx, dy) in enumerate(steps):
            tx = self.coords[:, 0] + dx
            ty = self.coords[:, 1] + dy
            ok = (tx >= 0) & (tx < n) & (ty >= 0) & (ty < n)
            tgt = np.where(ok, tx * n + ty, np.arange(n * n))
            nxt[:, k] = tgt
        self.next_pos = nxt

    @property
    def n_positions(self) -> int:
        return self.points.shape[0]

    def walk_matrix(self) -> np.ndarray:
        """Position kernel of the lazy uniform random walk (move chosen)."""
        p = self.n_positions
        mat = np.zeros((p, p))
        np.add.at(mat, (np.repeat(np.arange(p), 5), self.next_pos.ravel()), 0.2)
        return mat


def true_arss_all(dist: np.ndarray, positions: np.ndarray, powers: np.ndarray,
                  d_floor: float) -> np.ndarray:
    """Noiseless ARSS for every agent given all TX positions.

    positions may be a vector (one configuration) or a matrix
    (configurations x agents); the result has matching leading shape.
    """
    pos = np.asarray(positions)
    squeeze = pos.ndim == 1
    if squeeze:
        pos = pos[None, :]
    n_tx = pos.shape[1]
    if n_tx < 2:
        raise ContractError("ARSS requires at least two transmitters")
    out = np.zeros(pos.shape, dtype=float)
    for i in range(n_tx):
        for j in range(n_tx):
            if i == j:
                continue
            d = np.maximum(dist[pos[:, i], pos[:, j]], d_floor)
            out[:, i] += powers[j] / d ** 2
    return out[0] if squeeze else out


def true_arss(dist: np.ndarray, positions: np.ndarray, agent: int,
              powers: np.ndarray, d_floor: float) -> float:
    """Noiseless ARSS sensed by one agent."""
    return float(true_arss_all(dist, positions, powers, d_floor)[agent])


def noisy_arss(true_value, coordinated: bool, sigma_c: float, sigma_u: float,
               rng: np.random.Generator):
    """Additive Gaussian measurement noise; variance depends on the regime."""
    sigma = sigma_c if coordinated else sigma_u
    if sigma == 0.0:
        return np.asarray(true_value, dtype=float) + 0.0
    return np.asarray(true_value, dtype=float) + rng.normal(0.0, sigma, np.shape(true_value))


def snr_cost(power: float, d: float, i_value: float, noise_draw: float,
             thr: float, sigma: float, beta) -> float:
    """Three-term transmission cost: efficiency + reliability + fairness.

    SNR = power / (d^2 * (noise + I)); the denominator is floored so the
    Gaussian noise draw cannot push it non-positive.
    """
    den = max(noise_draw + i_value, SNR_DENOM_FLOOR)
    snr = power / (d * d * den)
    eff = beta[0] * power / np.log2(1.0 + snr)
    rel = beta[1] * float(q_function(np.sqrt(snr)))
    if sigma > 0.0:
        z = (thr - i_value) / sigma
    elif thr > i_value:
        z = np.inf
    elif thr < i_value:
        z = -np.inf
    else:
        z = 0.0
    fair = beta[2] * float(q_function(z))
    return float(eff + rel + fair)


@dataclass
class NetworkState:
    """Positions and quantized ARSS of every TX plus the coordination flag."""

    positions: np.ndarray  # position indices, one per TX
    levels: np.ndarray  # quantized ARSS level ids, one per TX
    coordinated: bool  # ground truth (noiseless) flag
    leader: int

    def copy(self) -> "NetworkState":
        return NetworkState(self.positions.copy(), self.levels.copy(),
                            self.coordinated, self.leader)


class WirelessNetwork:
    """One simulated network instance; construction is pure in (config, rng).

    The per-agent state id is pos_index * n_levels + level_index; the joint
    id concatenates per-agent ids in mixed radix with agent 0 most
    significant.
    """

    def __init__(self, cfg: WirelessConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.grid = Grid(cfg)
        self.powers = np.asarray(cfg.tx_powers, dtype=float)
        self._place_base_stations(rng)
        self.quant = self._build_quantizer()
        self.leader = cfg.leader()
        self.state = None  # set by reset()

    # -- construction helpers -------------------------------------------------

    def _place_base_stations(self, rng: np.random.Generator) -> None:
        """Uniform lattice placement, rejection-sampled for BS separation and
        for full grid coverage (every position must see some BS)."""
        cfg = self.cfg
        sep = 2.0 * cfg.cell_size if cfg.bs_min_sep is None else cfg.bs_min_sep
        lo, hi = cfg.bs_radius_bounds
        bs_of_action = np.arange(cfg.n_actions) % cfg.n_bs
        for _ in range(10_000):
            picks = rng.integers(0, self.grid.n_positions, size=cfg.n_bs)
            radii = lo + (hi - lo) * rng.random(cfg.n_bs)
            if cfg.n_bs > 1:
                d = self.grid.dist[np.ix_(picks, picks)]
                if d[np.triu_indices(cfg.n_bs, 1)].min() < sep:
                    continue
            d_to_bs = self.grid.dist[:, picks]
            valid = d_to_bs[:, bs_of_action] <= radii[bs_of_action]
            if valid.any(axis=1).all():
                break
        else:
            raise ConfigError(
                "could not place base stations with the required separation and coverage")
        self.bs_positions = picks
        self.bs_points = self.grid.points[picks]
        self.bs_radii = radii
        # valid_pos_action[p, a]: the BS named by action a covers position p
        self.valid_pos_action = valid

    def _build_quantizer(self) -> Quantizer:
        cfg = self.cfg
        if cfg.i_min is not None:
            return Quantizer(cfg.i_min, cfg.i_max, cfg.arss_levels)
        lo, hi = self.arss_range()
        return Quantizer(lo, hi, cfg.arss_levels)

    def arss_range(self) -> tuple[float, float]:
        """Extreme noiseless ARSS values over all joint positions."""
        cfg = self.cfg
        if cfg.n_tx < 2:
            return 0.0, 1.0  # no interferers: the ARSS component is frozen
        n_combos = self.grid.n_positions ** cfg.n_tx
        if n_combos <= 300_000:
            combos = self.position_combos()
            vals = true_arss_all(self.grid.dist, combos, self.powers, cfg.d_floor)
            return float(vals.min()), float(vals.max())
        d_max = float(self.grid.dist.max())
        total = float(self.powers.sum())
        lo = min((total - p) / d_max ** 2 for p in self.powers)
        hi = max((total - p) / cfg.d_floor ** 2 for p in self.powers)
        return lo, hi

    # -- codecs ---------------------------------------------------------------

    @property
    def n_levels(self) -> int:
        return self.quant.n_levels

    @property
    def n_local_states(self) -> int:
        return self.grid.n_positions * self.n_levels

    @property
    def n_actions(self) -> int:
        return self.cfg.n_actions

    def local_state_id(self, pos, level):
        return np.asarray(pos) * self.n_levels + np.asarray(level)

    def split_local_state(self, sid):
        sid = np.asarray(sid)
        return sid // self.n_levels, sid % self.n_levels

    def joint_state_id(self, local_ids) -> int:
        sid = 0
        for x in np.asarray(local_ids):
            sid = sid * self.n_local_states + int(x)
        return sid

    def split_joint_state(self, sid: int) -> np.ndarray:
        out = np.empty(self.cfg.n_tx, dtype=np.int64)
        for i in range(self.cfg.n_tx - 1, -1, -1):
            out[i] = sid % self.n_local_states
            sid //= self.n_local_states
        return out

    def joint_action_id(self, actions) -> int:
        aid = 0
        for a in np.asarray(actions):
            aid = aid * self.n_actions + int(a)
        return aid

    def split_joint_action(self, aid: int) -> np.ndarray:
        out = np.empty(self.cfg.n_tx, dtype=np.int64)
        for i in range(self.cfg.n_tx - 1, -1, -1):
            out[i] = aid % self.n_actions
            aid //= self.n_actions
        return out

    # -- geometry queries -----------------------------------------------------

    def dist_to_bs(self) -> np.ndarray:
        """Physical distance from every grid position to every BS."""
        return self.grid.dist[:, self.bs_positions]

    def state_action_mask(self) -> np.ndarray:
        """Validity of every action at every local state (shared by agents)."""
        return np.repeat(self.valid_pos_action, self.n_levels, axis=0)

    def position_combos(self) -> np.ndarray:
        """All joint TX position index tuples, shape [P^n_tx, n_tx]."""
        p = self.grid.n_positions
        idx = np.indices((p,) * self.cfg.n_tx).reshape(self.cfg.n_tx, -1).T
        return np.ascontiguousarray(idx)

    def combo_levels(self, combos: np.ndarray) -> np.ndarray:
        """Quantized noiseless ARSS level ids for each agent of each combo."""
        if self.cfg.n_tx < 2:
            return np.zeros_like(combos)
        vals = true_arss_all(self.grid.dist, combos, self.powers, self.cfg.d_floor)
        return self.quant.level_ids(vals)

    def consistent_joint_states(self) -> np.ndarray:
        """Joint state ids whose ARSS components match their geometry.

        At zero measurement noise these are exactly the dynamically
        reachable joint states.
        """
        combos = self.position_combos()
        levels = self.combo_levels(combos)
        local = combos * self.n_levels + levels
        weights = self.n_local_states ** np.arange(self.cfg.n_tx - 1, -1, -1)
        return local @ weights

    def coordination_census(self, thr: float | None = None) -> np.ndarray:
        """Coordinated flag per position combo (raw noiseless ARSS rule)."""
        thr = self.cfg.i_thr if thr is None else thr
        combos = self.position_combos()
        vals = true_arss_all(self.grid.dist, combos, self.powers, self.cfg.d_floor)
        return (vals > thr).any(axis=1)

    # -- dynamics -------------------------------------------------------------

    def reset(self, rng: np.random.Generator) -> NetworkState:
        """Place TXs without collisions and sense the initial ARSS."""
        cfg = self.cfg
        if cfg.n_tx > self.grid.n_positions:
            raise ConfigError("more TXs than grid positions")
        pos = rng.choice(self.grid.n_positions, size=cfg.n_tx, replace=False)
        self.state = self._sense(pos.astype(np.int64), rng)
        return self.state

    def _sense(self, positions: np.ndarray, rng: np.random.Generator) -> NetworkState:
        if self.cfg.n_tx >= 2:
            true_vals = true_arss_all(self.grid.dist, positions, self.powers,
                                      self.cfg.d_floor)
        else:
            true_vals = np.zeros(1)
        true_flag = bool((true_vals > self.cfg.i_thr).any())
        readings = noisy_arss(true_vals, true_flag, self.cfg.sigma_c,
                              self.cfg.sigma_u, rng)
        levels = self.quant.level_ids(readings)
        st = NetworkState(positions, levels, true_flag, self.leader)
        self._true_arss = true_vals
        self._readings = np.asarray(readings, dtype=float)
        return st

    @property
    def readings(self) -> np.ndarray:
        """Raw noisy ARSS readings gathered when the current state was sensed."""
        return self._readings

    @property
    def true_arss_values(self) -> np.ndarray:
        return self._true_arss

    def detected_coordinated(self, thr: float | None = None) -> bool:
        thr = self.cfg.i_thr if thr is None else thr
        return bool((self._readings > thr).any())

    def step(self, actions, rng: np.random.Generator):
        """Advance one slot.

        Returns (costs, valid) where invalid TX-BS associations get the
        sentinel cost, no movement, and valid=False.
        """
        cfg = self.cfg
        actions = np.asarray(actions, dtype=np.int64)
        if actions.shape != (cfg.n_tx,):
            raise ConfigError("need one action per TX")
        pos = self.state.positions
        valid = self.valid_pos_action[pos, actions]
        moves = actions // cfg.n_bs
        bs_idx = actions % cfg.n_bs
        new_pos = pos.copy()
        mobile = (moves == 1) & valid
        if mobile.any():
            ks = rng.integers(0, 5, size=int(mobile.sum()))
            new_pos[mobile] = self.grid.next_pos[pos[mobile], ks]
        self.state = self._sense(new_pos, rng)
        # cost at the post-transition state, using the association chosen now
        d = np.maximum(self.grid.dist[new_pos, self.bs_positions[bs_idx]],
                       cfg.d_floor)
        level_vals = self.quant.level_values()[self.state.levels]
        noise = rng.normal(0.0, cfg.sigma, cfg.n_tx) if cfg.sigma > 0 else np.zeros(cfg.n_tx)
        costs = np.empty(cfg.n_tx)
        for i in range(cfg.n_tx):
            if valid[i]:
                costs[i] = snr_cost(self.powers[i], float(d[i]), float(level_vals[i]),
                                    float(noise[i]), cfg.i_thr, cfg.sigma, cfg.beta)
            else:
                costs[i] = SENTINEL_COST
        return costs, valid

    def local_state_ids(self) -> np.ndarray:
        return self.local_state_id(self.state.positions, self.state.levels)
