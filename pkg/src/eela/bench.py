"""Metrics, replication runner, parameter sweeps and CSV reports."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from statistics import fmean, stdev

import numpy as np

from .engine import RunResult, run
from .localization import localization_error
from .protocol import Policy
from .scenario import ConfigError, Scenario, load_config, parse_config  # noqa: F401  (re-exported)

METRICS = ("coverage", "e_sensor", "e_anchor", "e_node", "ale_m", "ald_s")
CSV_COLUMNS = ("axis", "value", "policy", "replications") + METRICS + tuple(f"{m}_std" for m in METRICS)


@dataclass
class RunMetrics:
    coverage: float
    e_sensor: float | None
    e_anchor: float
    e_node: float
    ale_m: float | None
    ald_s: float | None
    n_localized: int


@dataclass
class MetricsReport:
    coverage: float
    avg_energy_sensor_j: float | None
    avg_energy_anchor_j: float
    avg_energy_node_j: float
    avg_loc_error_m: float | None
    avg_loc_delay_s: float | None
    replication_count: int
    stddev: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)

    def scalars(self) -> dict:
        return {"coverage": self.coverage, "e_sensor": self.avg_energy_sensor_j,
                "e_anchor": self.avg_energy_anchor_j, "e_node": self.avg_energy_node_j,
                "ale_m": self.avg_loc_error_m, "ald_s": self.avg_loc_delay_s}


def compute_metrics(result: RunResult, energy_denominator: str = "localized") -> RunMetrics:
    """Per-run coverage, energies, error and delay.

    Sensor energy is averaged over localized sensors (or all of them with
    ``energy_denominator="all"``); node energy over every node. Error and
    delay are ``None`` when nothing was localized.
    """
    sensors, anchors = result.sensors, result.anchors
    localized = [s for s in sensors if s.localized]
    energy = {n.node_id: result.ledgers[n.node_id].total for n in result.nodes}
    pool = localized if energy_denominator == "localized" else sensors
    e_sensor = fmean(energy[s.node_id] for s in pool) if pool else None
    e_anchor = fmean(energy[a.node_id] for a in anchors)
    e_node = (sum(energy[s.node_id] for s in sensors) + sum(energy[a.node_id] for a in anchors)) \
        / (len(sensors) + len(anchors))
    if localized:
        ale = fmean(localization_error(result.true_positions[s.node_id], s.estimate) for s in localized)
        ald = fmean(s.localized_at_s - s.first_request_s for s in localized)
    else:
        ale = ald = None
    return RunMetrics(len(localized) / len(sensors), e_sensor, e_anchor, e_node, ale, ald, len(localized))


def replication_seeds(master_seed: int, replications: int) -> list[int]:
    ss = np.random.SeedSequence(master_seed)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in ss.spawn(replications)]


def _mean_std(values):
    vals = [v for v in values if v is not None]
    if not vals:
        return None, None
    return fmean(vals), (stdev(vals) if len(vals) > 1 else 0.0)


def aggregate(rows: list[RunMetrics]) -> MetricsReport:
    means, stds = {}, {}
    for m in METRICS:
        means[m], stds[m] = _mean_std([getattr(r, m) for r in rows])
    return MetricsReport(means["coverage"], means["e_sensor"], means["e_anchor"], means["e_node"],
                         means["ale_m"], means["ald_s"], len(rows), stds, rows)


def run_experiment(scenario: Scenario) -> MetricsReport:
    """Run ``scenario.replications`` seeded runs and aggregate them in replication order."""
    rows = []
    for i, seed in enumerate(replication_seeds(scenario.seed, scenario.replications)):
        try:
            rows.append(compute_metrics(run(scenario, seed), scenario.energy_denominator))
        except Exception as exc:
            raise RuntimeError(f"replication {i} (seed {seed}) failed: {exc}") from exc
    return aggregate(rows)


AXES = {
    "sensors": ("n_sensors", (10, 20, 30, 40, 50)),
    "speed": ("current_speed_mps", (2.0, 3.0, 4.0)),
    "policy": ("policy", tuple(Policy)),
}


def sweep(base: Scenario, axis: str, policies=None, values=None) -> list[dict]:
    """One report row per (axis value, policy)."""
    if axis not in AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; choose from {sorted(AXES)}")
    attr, default_values = AXES[axis]
    values = default_values if values is None else values
    if axis == "policy":
        policies = [None]
    elif policies is None:
        policies = list(Policy) if axis == "sensors" else [base.policy]
    rows = []
    for v in values:
        for pol in policies:
            sc = replace(base, **{attr: v})
            if pol is not None:
                sc = replace(sc, policy=pol)
            rep = run_experiment(sc)
            shown = v.value if isinstance(v, Policy) else v
            rows.append(report_row(axis, shown, sc.policy.value, rep))
    return rows


def report_row(axis: str, value, policy: str, rep: MetricsReport) -> dict:
    row = {"axis": axis, "value": value, "policy": policy, "replications": rep.replication_count}
    row.update(rep.scalars())
    row.update({f"{m}_std": rep.stddev.get(m) for m in METRICS})
    return row


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in CSV_COLUMNS])


def read_csv(path) -> list[dict]:
    """Parse a report back; empty cells become ``None`` and numbers become floats."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            parsed = {}
            for k, v in row.items():
                if k in ("axis", "policy"):
                    parsed[k] = v
                elif v == "":
                    parsed[k] = None
                else:
                    try:
                        parsed[k] = int(v) if k == "replications" else float(v)
                    except ValueError:
                        parsed[k] = v
            out.append(parsed)
    return out
