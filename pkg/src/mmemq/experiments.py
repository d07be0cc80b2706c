# Sweep driver and per-run summaries: Cartesian parameter grids x seeds,
# per-cell metric aggregation, CSV/JSON emission, and cap-exceeded refusals.
from __future__ import annotations

import dataclasses
import itertools
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .config import ExperimentConfig
from .metrics import ape, aqd, first_crossing
from .oracles import EnumerationCapError, joint_oracle
from .records import RunRecord, write_csv
from .runner import ConsistentSpace, build_network, run_algorithm
from .wireless import ConfigError, WirelessConfig

WIRELESS_FIELDS = {f.name for f in dataclasses.fields(WirelessConfig)}
RUN_FIELDS = {f.name for f in dataclasses.fields(ExperimentConfig)} - {"wireless", "schedules"}
SCHEDULE_FIELDS = {"alpha_tau", "zeta_decay", "zeta_floor", "u_mode", "u_value", "u_tau"}


def apply_axis(exp: ExperimentConfig, key: str, value) -> ExperimentConfig:
    """Return a copy of the experiment with one (possibly nested) key set."""
    if key in WIRELESS_FIELDS:
        return dataclasses.replace(exp, wireless=dataclasses.replace(exp.wireless, **{key: value}))
    if key in SCHEDULE_FIELDS:
        return dataclasses.replace(exp, schedules=dataclasses.replace(exp.schedules, **{key: value}))
    if key in RUN_FIELDS:
        return dataclasses.replace(exp, **{key: value})
    raise ConfigError(f"sweep axis {key!r} names no configuration key")


def run_summary(rec: RunRecord, oracle=None, space: ConsistentSpace | None = None,
                aqd_threshold: float = 1.0) -> dict:
    """Scalar summary of one run; oracle metrics only when one is supplied."""
    out = {
        "algo": rec.algo,
        "seed": rec.seed,
        "T": rec.T,
        "sample_counter": rec.sample_counter,
        "coordinated_fraction": rec.coordinated_fraction(),
        "mean_cost": float(rec.costs.mean()) if rec.costs is not None else None,
        "payload_units": rec.ledger_totals.get("payload_units", 0),
        "total_comms_units": rec.ledger_totals.get("total_units", 0),
        "wall_time": rec.wall_time,
        "result_hash": rec.result_hash(),
    }
    if oracle is not None and rec.final_policy is not None:
        out["ape"] = ape(rec.final_policy, oracle.policy)
        valid = space.valid if space is not None else oracle.valid
        out["aqd"] = aqd(rec.final_joint, oracle.q_star, valid)
        if rec.snapshots:
            ts = [t for t, _ in rec.snapshots]
            vals = [aqd(mat, oracle.q_star, valid) for _, mat in rec.snapshots]
            out["aqd_trace"] = list(zip(ts, [float(v) for v in vals]))
            cross = first_crossing(ts, vals, aqd_threshold)
            out["iters_to_aqd_threshold"] = cross
    return out


def _run_cell_seed(args):
    exp, seed, layout_seed, want_oracle, aqd_threshold = args
    env = build_network(exp, layout_seed)
    space = ConsistentSpace.build(env)
    oracle = None
    if want_oracle:
        try:
            oracle = joint_oracle(env, exp.gamma, 1e-9)
        except EnumerationCapError:
            oracle = None
    rec = run_algorithm(exp, seed, layout_seed, env, space)
    return run_summary(rec, oracle, space, aqd_threshold)


def sweep(
    base: ExperimentConfig,
    axes: dict[str, list],
    layout_seed: int = 0,
    with_oracle: bool = True,
    aqd_threshold: float = 1.0,
    workers: int = 1,
):
    """Cartesian sweep over axis values x seeds.

    Returns (header, rows, refusals); each row aggregates the seeds of one
    cell with mean/std per metric.  Infeasible cells (enumeration caps) are
    recorded as refusals rather than silently skipped.
    """
    for key, vals in axes.items():
        if not vals:
            raise ConfigError(f"sweep axis {key!r} has no values")
        apply_axis(base, key, vals[0])  # validates the key up front
    names = list(axes.keys())
    metric_names = ["ape", "aqd", "coordinated_fraction", "payload_units",
                    "total_comms_units", "wall_time", "iters_to_aqd_threshold"]
    header = (names + ["n_seeds"]
              + [f"{m}_{s}" for m in metric_names for s in ("mean", "std")])
    rows, refusals = [], []
    for values in itertools.product(*(axes[k] for k in names)):
        exp = base
        for key, val in zip(names, values):
            exp = apply_axis(exp, key, val)
        tasks = [(exp, seed, layout_seed, with_oracle, aqd_threshold)
                 for seed in exp.seeds]
        try:
            if workers > 1:
                with ProcessPoolExecutor(max_workers=workers) as pool:
                    summaries = list(pool.map(_run_cell_seed, tasks))
            else:
                summaries = [_run_cell_seed(t) for t in tasks]
        except EnumerationCapError as exc:
            refusals.append({"cell": dict(zip(names, values)), "reason": str(exc)})
            continue
        row = list(values) + [len(summaries)]
        for m in metric_names:
            vals = [s.get(m) for s in summaries]
            vals = [v for v in vals if v is not None]
            if vals:
                row.extend([float(np.mean(vals)), float(np.std(vals))])
            else:
                row.extend(["", ""])
        rows.append(row)
    return header, rows, refusals


def write_sweep_csv(path, header, rows, refusals, base: ExperimentConfig,
                    git_rev: str = "unknown") -> None:
    meta = {
        "config_hash": base.content_hash(),
        "git_revision": git_rev,
        "seeds": ",".join(str(s) for s in base.seeds),
        "refused_cells": len(refusals),
    }
    write_csv(path, header, rows, meta)


def measure_runtime(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0
