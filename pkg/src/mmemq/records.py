# Run records: the time-indexed log a single seeded run leaves behind,
# plus CSV / JSON result emission.
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np


@dataclass
class TrackedPair:
    """Per-iteration bookkeeping for one joint (state, action) pair."""

    joint_state: int
    joint_action: int
    coordinated: bool
    local_states: np.ndarray  # constituent per-agent state ids
    local_actions: np.ndarray  # constituent per-agent action ids
    q_bar: np.ndarray | None = None  # [T] joint value trace
    wq: np.ndarray | None = None  # [T, n_agents, K] weighted per-order values
    visits: int = 0


@dataclass
class RunRecord:
    """Everything one seeded run logs.

    sample_counter follows the t*l convention: each of the T iterations is
    one slot of an l-step trajectory window.
    """

    algo: str
    seed: int
    T: int
    l: int
    config_hash: str
    classes: np.ndarray = None  # detected class per iteration (1 = coordinated)
    true_classes: np.ndarray = None
    actions: np.ndarray = None  # [T, n_agents]
    costs: np.ndarray = None  # [T, n_agents]
    payload: np.ndarray = None  # per-iteration protocol scalars
    estimate_correct: np.ndarray = None  # 1 correct, 0 wrong, -1 not estimated
    tracked: list[TrackedPair] = field(default_factory=list)
    snapshots: list[tuple[int, np.ndarray]] = field(default_factory=list)
    local_error_log: dict = field(default_factory=dict)
    ledger_totals: dict = field(default_factory=dict)
    final_joint: np.ndarray | None = None  # materialized consistent-state table
    final_policy: np.ndarray | None = None
    wall_time: float = 0.0
    extras: dict = field(default_factory=dict)

    @property
    def sample_counter(self) -> int:
        return self.T * self.l

    def coordinated_fraction(self) -> float:
        return float(np.mean(self.classes)) if self.classes is not None else 0.0

    def result_hash(self) -> str:
        """Bitwise-stable digest of the run's observable outputs."""
        h = hashlib.sha256()
        h.update(f"{self.algo}|{self.seed}|{self.T}|{self.l}|{self.config_hash}".encode())
        for arr in (self.classes, self.true_classes, self.actions, self.costs,
                    self.payload, self.estimate_correct, self.final_joint,
                    self.final_policy):
            if arr is not None:
                h.update(np.ascontiguousarray(arr).tobytes())
        for key in sorted(self.ledger_totals):
            h.update(f"{key}={self.ledger_totals[key]}".encode())
        return h.hexdigest()


def write_csv(path, header: list[str], rows: list[list], metadata: dict | None = None) -> None:
    """CSV with `#`-prefixed metadata lines before the header row."""
    lines = []
    for key, value in (metadata or {}).items():
        lines.append(f"# {key} = {value}")
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(x) for x in row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _fmt(x) -> str:
    if isinstance(x, float) or isinstance(x, np.floating):
        return repr(float(x))
    return str(x)


def read_csv(path):
    """Read back a metadata+header CSV as (metadata, header, rows of str)."""
    metadata, header, rows = {}, None, []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                if "=" in line:
                    key, val = line[1:].split("=", 1)
                    metadata[key.strip()] = val.strip()
                continue
            if header is None:
                header = line.split(",")
            else:
                rows.append(line.split(","))
    return metadata, header, rows


def write_json_summary(path, summary: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    raise TypeError(f"not JSON-serializable: {type(obj)}")
