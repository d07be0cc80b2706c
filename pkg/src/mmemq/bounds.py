# Closed-form theory: estimation-error variance bounds, the update-ratio
# iteration bound, misdetection-probability bounds with threshold
# optimization, and the empirical variance estimator used to cross-validate
# simulation against the formulas.
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gauss import q_function
from .wireless import WirelessNetwork, true_arss_all


class BoundHypothesisError(ValueError):
    pass


def default_error_shape(lam: float, t: float, rho: float) -> float:
    """Configurable per-agent shape f(lambda, t) = lambda^2 * (1 + rho^t)."""
    return lam * lam * (1.0 + rho ** t)


def variance_bound_finite_t(lambdas, k_envs, t: float, rho: float = 0.5,
                            shape=None):
    """Finite-time bound sum_i f_i(lambda_i, t) / K_i.

    Returns (per-agent terms, total).  The shape family is a stand-in and is
    calibration-reported, not asserted, by the validation suite.
    """
    f = shape if shape is not None else default_error_shape
    lambdas = np.asarray(lambdas, dtype=float)
    k_envs = np.asarray(k_envs, dtype=float)
    terms = np.array([f(lam, t, rho) / k for lam, k in zip(lambdas, k_envs)])
    return terms, float(terms.sum())


def variance_bound_asymptotic(lambdas, u: float) -> float:
    """Limit bound ((1-u)/(1+u)) * sum_i lambda_i^2."""
    if not 0.0 <= u < 1.0:
        raise ValueError(f"update ratio must lie in [0,1), got {u}")
    lambdas = np.asarray(lambdas, dtype=float)
    return float((1.0 - u) / (1.0 + u) * np.sum(lambdas ** 2))


def beta_iterations(beta: float, u: float, theta_total: float):
    """Iterations needed to push the per-step joint update below beta.

    Returns (t_beta, vacuous).  When beta already exceeds the total update
    budget the bound is vacuous and t_beta = 0.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    if not 0.0 < u < 1.0:
        raise ValueError("constant update ratio must lie in (0,1)")
    if beta >= theta_total:
        return 0, True
    ratio = beta / theta_total
    t = np.log(1.0 - ratio) / np.log(u)
    return int(np.ceil(t)), False


def empirical_variance(trace, half_window: int):
    """Sliding-window variance of a scalar trace.

    Windows cover the 2*half_window samples [t - half_window, t + half_window)
    and are normalized by their length, so a constant trace gives exactly 0.
    Returns (centers, variances, truncated_flag).
    """
    x = np.asarray(trace, dtype=float)
    truncated = False
    if 2 * half_window > x.size:
        half_window = x.size // 2
        truncated = True
    if half_window < 1:
        raise ValueError("trace too short for any window")
    n = 2 * half_window
    x = x - x.mean()  # shift-invariant; conditions the cumsum arithmetic
    c1 = np.concatenate([[0.0], np.cumsum(x)])
    c2 = np.concatenate([[0.0], np.cumsum(x * x)])
    starts = np.arange(0, x.size - n + 1)
    sums = c1[starts + n] - c1[starts]
    sqs = c2[starts + n] - c2[starts]
    mean = sums / n
    var = sqs / n - mean ** 2
    centers = starts + half_window
    return centers, np.maximum(var, 0.0), truncated


def lambda_hat(local_snapshots, oracle_tables, visit_counts, min_visits: int = 10):
    """Per-agent, per-environment error scales from logged table snapshots.

    lambda = sqrt(3) * std of (Q^(n) - Q*) pooled over the logged snapshots,
    restricted to entries the agent actually visited.
    Returns an array [n_agents, n_orders].
    """
    if not local_snapshots:
        raise ValueError("no local snapshots were logged")
    n_agents, n_orders = local_snapshots[0][1].shape[:2]
    out = np.zeros((n_agents, n_orders))
    for i in range(n_agents):
        seen = visit_counts[i] >= min_visits
        if not seen.any():
            raise ValueError(f"agent {i} has no sufficiently visited entries")
        for k in range(n_orders):
            pool = [snap[i, k][seen] - oracle_tables[i][seen]
                    for _, snap in local_snapshots]
            errors = np.concatenate(pool)
            out[i, k] = np.sqrt(3.0) * float(np.std(errors))
    return out


# -- misdetection probability ---------------------------------------------------


def pmis_bounds_two_agents(s_c: int, s_u: int, sigma_c: float, sigma_u: float):
    """Two-agent misdetection bounds; returns (lower, upper, delta_star).

    Requires |S_C| * sigma_u > |S_U| * sigma_c (otherwise the optimal gap is
    undefined) and complements: lower + upper = 1.
    """
    if min(s_c, s_u) < 0 or s_c + s_u == 0:
        raise ValueError("state counts must be non-negative and not both zero")
    if sigma_c <= 0 or sigma_u <= 0:
        raise ValueError("noise levels must be positive")
    if s_c * sigma_u <= s_u * sigma_c:
        raise BoundHypothesisError(
            f"hypothesis |S_C| sigma_u > |S_U| sigma_c violated "
            f"({s_c} * {sigma_u} <= {s_u} * {sigma_c})")
    inv = 1.0 / sigma_c ** 2 - 1.0 / sigma_u ** 2
    delta = float(np.sqrt(2.0 * np.log(s_c * sigma_u / (s_u * sigma_c)) / inv))
    total = s_c + s_u
    lower = float(q_function(delta / sigma_c) * s_c / total
                  + q_function(-delta / sigma_u) * s_u / total)
    upper = float(q_function(-delta / sigma_c) * s_c / total
                  + q_function(delta / sigma_u) * s_u / total)
    return lower, upper, delta


def pmis_bounds_general(true_values, s_c: int, s_u: int, sigma_c: float,
                        sigma_u: float, candidates):
    """Misdetection bounds for any number of agents.

    The two internal threshold constants are chosen conservatively by a
    1-D search over the candidate grid: the lower expression is minimized
    and the upper expression maximized, so the returned interval is the
    widest the family supports.  Returns (lower, upper, thr_l, thr_u).
    """
    vals = np.asarray(true_values, dtype=float)
    if vals.size < 2:
        raise ValueError("need true ARSS values for at least two agents")
    total = s_c + s_u
    i_min_true = float(vals.min())
    cand = np.asarray(candidates, dtype=float)

    def lower_expr(thr):
        miss = 1.0 - np.sum(q_function((thr - vals) / sigma_c))
        false_alarm = q_function((thr - i_min_true) / sigma_u)
        return miss * s_c / total + false_alarm * s_u / total

    def upper_expr(thr):
        fa = np.sum(q_function((thr - vals) / sigma_u))
        miss = 1.0 - q_function((thr - i_min_true) / sigma_c)
        return fa * s_u / total + miss * s_c / total

    lows = np.array([lower_expr(c) for c in cand])
    ups = np.array([upper_expr(c) for c in cand])
    li = int(np.argmin(lows))
    ui = int(np.argmax(ups))
    lower = float(np.clip(lows[li], 0.0, 1.0))
    upper = float(np.clip(ups[ui], 0.0, 1.0))
    return lower, upper, float(cand[li]), float(cand[ui])


@dataclass
class MisdetectionSnapshot:
    """Frozen network geometry for misdetection analysis.

    States are joint TX position combinations; the coordination label uses
    the raw noiseless ARSS, and noisy readings add regime-dependent
    Gaussian noise to the raw values.
    """

    raw_arss: np.ndarray  # [C, n_tx]
    sigma_c: float
    sigma_u: float

    @classmethod
    def from_network(cls, env: WirelessNetwork, sigma_c: float | None = None,
                     sigma_u: float | None = None) -> "MisdetectionSnapshot":
        combos = env.position_combos()
        raw = true_arss_all(env.grid.dist, combos, env.powers, env.cfg.d_floor)
        sc = env.cfg.sigma_c if sigma_c is None else sigma_c
        su = env.cfg.sigma_u if sigma_u is None else sigma_u
        return cls(raw, sc, su)

    @classmethod
    def from_geometry(cls, n_axis: int, cell: float, powers,
                      sigma_c: float, sigma_u: float,
                      d_floor: float | None = None) -> "MisdetectionSnapshot":
        """Snapshot from TX geometry alone (no base stations involved)."""
        powers = np.asarray(powers, dtype=float)
        n_tx = powers.size
        xs, ys = np.meshgrid(np.arange(n_axis), np.arange(n_axis), indexing="ij")
        pts = np.stack([xs.ravel(), ys.ravel()], axis=1) * cell
        diff = pts[:, None, :] - pts[None, :, :]
        dist = np.sqrt((diff ** 2).sum(axis=2))
        p = n_axis * n_axis
        combos = np.indices((p,) * n_tx).reshape(n_tx, -1).T
        floor = cell / 2.0 if d_floor is None else d_floor
        raw = true_arss_all(dist, combos, powers, floor)
        return cls(raw, sigma_c, sigma_u)

    @property
    def n_states(self) -> int:
        return self.raw_arss.shape[0]

    @property
    def n_tx(self) -> int:
        return self.raw_arss.shape[1]

    def census(self, thr: float) -> tuple[int, int]:
        coord = (self.raw_arss > thr).any(axis=1)
        s_c = int(coord.sum())
        return s_c, self.n_states - s_c

    def threshold_grid(self, n_points: int = 20, lo_frac: float = 0.9,
                       hi_frac: float = 0.15) -> np.ndarray:
        """Candidate thresholds spanning coordination fractions
        [hi_frac, lo_frac].

        Grid points sit at midpoints between consecutive distinct per-state
        peak ARSS values (census plateaus), so the piecewise-constant census
        is sampled away from its jump points, and the top end is trimmed
        until |S_C| sigma_u > |S_U| sigma_c holds on the whole grid.
        """
        peaks = self.raw_arss.max(axis=1)
        distinct = np.unique(peaks)
        lo = float(np.quantile(peaks, 1.0 - lo_frac))
        hi = float(np.quantile(peaks, 1.0 - hi_frac))
        mids = (distinct[:-1] + distinct[1:]) / 2.0
        mids = mids[(mids >= lo) & (mids <= hi)]
        while mids.size:
            s_c, s_u = self.census(float(mids[-1]))
            if s_c * self.sigma_u > s_u * self.sigma_c:
                break
            mids = mids[:-1]
        if mids.size == 0:
            raise BoundHypothesisError(
                "no threshold range satisfies the bound hypothesis")
        if mids.size > n_points:
            pick = np.linspace(0, mids.size - 1, n_points).astype(int)
            mids = mids[pick]
        return mids

    def calibrate_noise(self, scales, n_points: int = 20,
                        n_trials: int = 60_000,
                        rng: np.random.Generator | None = None,
                        ratio: float = 20.0) -> float:
        """Pick the noise scale whose bound curves bracket a pilot
        Monte-Carlo with the largest worst-case margin.

        The scale multiplies the standard deviation of the per-state peak
        ARSS; sigma_c = sigma_u / ratio.
        """
        rng = np.random.default_rng(0) if rng is None else rng
        spread = float(np.std(self.raw_arss.max(axis=1)))
        best_scale, best_margin = None, -np.inf
        for scale in scales:
            self.sigma_u = float(scale) * spread
            self.sigma_c = self.sigma_u / ratio
            try:
                grid = self.threshold_grid(n_points)
                lower, upper, _ = self.bound_curves(grid)
            except BoundHypothesisError:
                continue
            pmis = self.mc_pmis(grid, n_trials, rng)
            margin = float(min(np.min(pmis - lower), np.min(upper - pmis)))
            if margin > best_margin:
                best_scale, best_margin = float(scale), margin
        if best_scale is None:
            raise BoundHypothesisError("no candidate noise scale is feasible")
        self.sigma_u = best_scale * spread
        self.sigma_c = self.sigma_u / ratio
        return best_scale

    def mc_pmis(self, thresholds, n_trials: int, rng: np.random.Generator,
                fixed_noise: bool = True) -> np.ndarray:
        """Monte-Carlo misdetection probability per threshold.

        Per trial a state is drawn uniformly, each agent's reading is its raw
        ARSS plus Gaussian noise of the true regime, and detection follows
        the any-reading-exceeds rule.
        """
        thresholds = np.atleast_1d(np.asarray(thresholds, dtype=float))
        idx = rng.integers(0, self.n_states, size=n_trials)
        raw = self.raw_arss[idx]
        z = rng.standard_normal(raw.shape)
        out = np.empty(thresholds.size)
        for k, thr in enumerate(thresholds):
            actual = (raw > thr).any(axis=1)
            if not fixed_noise:
                z = rng.standard_normal(raw.shape)
            sigma = np.where(actual, self.sigma_c, self.sigma_u)
            readings = raw + z * sigma[:, None]
            detected = (readings > thr).any(axis=1)
            out[k] = float(np.mean(detected != actual))
        return out

    def bound_curves(self, thresholds, mode: str = "auto"):
        """Lower/upper bound per threshold; returns (lower, upper, meta)."""
        thresholds = np.atleast_1d(np.asarray(thresholds, dtype=float))
        lower = np.empty(thresholds.size)
        upper = np.empty(thresholds.size)
        meta = []
        two_agent = (self.n_tx == 2) if mode == "auto" else (mode == "two_agent")
        mean_vals = self.raw_arss.mean(axis=0)
        for k, thr in enumerate(thresholds):
            s_c, s_u = self.census(thr)
            if two_agent:
                lo, up, delta = pmis_bounds_two_agents(s_c, s_u, self.sigma_c,
                                                       self.sigma_u)
                meta.append({"delta_star": delta, "s_c": s_c, "s_u": s_u})
            else:
                lo, up, tl, tu = pmis_bounds_general(mean_vals, s_c, s_u,
                                                     self.sigma_c, self.sigma_u,
                                                     thresholds)
                meta.append({"thr_l": tl, "thr_u": tu, "s_c": s_c, "s_u": s_u})
            lower[k], upper[k] = lo, up
        return lower, upper, meta


def golden_section(f, lo: float, hi: float, tol: float = 1e-6,
                   max_iter: int = 200) -> float:
    """Minimize a unimodal scalar function on [lo, hi]."""
    phi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = float(lo), float(hi)
    c = b - phi * (b - a)
    d = a + phi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = f(d)
    return (a + b) / 2.0


def optimal_threshold(snapshot: MisdetectionSnapshot, grid) -> tuple[float, np.ndarray]:
    """Threshold minimizing the lower misdetection bound over the grid.

    Ties resolve to the smallest threshold.  Returns (thr_star, lower curve).
    """
    lower, _, _ = snapshot.bound_curves(grid)
    return float(np.asarray(grid)[int(np.argmin(lower))]), lower
