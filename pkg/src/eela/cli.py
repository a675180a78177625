"""Command line entry point: ``eela simulate | sweep | verify``."""

from __future__ import annotations

import argparse
import logging
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import acoustics, game
from .bench import read_csv, replication_seeds, report_row, run_experiment, sweep, write_csv
from .engine import run, write_trace
from .protocol import Policy
from .scenario import ConfigError, load_config

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY = 0, 2, 3


def _simulate(args) -> int:
    sc = load_config(args.config)
    try:
        sc = sc.with_overrides(policy=Policy.parse(args.policy) if args.policy else None,
                               n_sensors=args.sensors, current_speed_mps=args.speed,
                               replications=args.replications, seed=args.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    rep = run_experiment(sc)
    row = report_row("none", "", sc.policy.value, rep)
    if args.out:
        write_csv([row], args.out)
    else:
        print(", ".join(f"{k}={v}" for k, v in row.items() if v is not None))
    if args.trace:
        # the trace covers the first replication
        result = run(sc, replication_seeds(sc.seed, sc.replications)[0], trace=True)
        write_trace(result.trace, args.trace)
    return EXIT_OK


def _sweep(args) -> int:
    sc = load_config(args.config)
    if args.replications is not None:
        sc = sc.with_overrides(replications=args.replications)
    rows = sweep(sc, args.axis)
    write_csv(rows, args.out)
    return EXIT_OK


def verification_checks(draws: int = 40, seed: int = 7):
    """Quick oracle suite; yields ``(name, passed, detail)``."""
    rng = np.random.default_rng(seed)
    chan = acoustics.ChannelParams().calibrated(100.0, acoustics.DEFAULT_DIAGONAL_M)
    lo = acoustics.power_floor(chan)
    grid = np.geomspace(lo, 100.0, 10_000)

    r = np.geomspace(1.0, 5000.0, 500)
    back = acoustics.range_for_power(acoustics.power_for_range(r, chan), chan)
    err = float(np.max(np.abs(back - r) / r))
    yield "power/range round trip", err < 1e-6, f"max rel err {err:.2e}"

    worst_f = worst_l = 0.0
    for _ in range(draws):
        w1 = rng.uniform(0.05, 0.95)
        params = game.GameParams(w1_anchor=w1, w2_anchor=1 - w1, w1_sensor=1 - w1, w2_sensor=w1,
                                 total_energy_anchor=10 ** rng.uniform(-2, 3),
                                 total_energy_sensor=10 ** rng.uniform(-2, 3),
                                 n_sensors=int(rng.integers(10, 51)))
        k = int(rng.integers(1, 5))
        fobs = game.FollowerObservation(tuple(10 ** rng.uniform(-2, 2, k)), tuple(rng.integers(0, 4, k)))
        q = game.follower_best_response(fobs, params, chan)
        best = float(np.max(game.follower_utility(grid, fobs, params, chan)))
        worst_f = max(worst_f, (best - game.follower_utility(q, fobs, params, chan)) / abs(best))
        lobs = game.LeaderObservation(tuple(10 ** rng.uniform(-2, 2, k)),
                                      game.DensityNeighborCount(4, 2500.0, chan))
        p = game.leader_best_response(lobs, params, chan)
        best = float(np.max(game.leader_utility(grid, lobs, params, chan)))
        worst_l = max(worst_l, (best - game.leader_utility(p, lobs, params, chan)) / abs(best))
    yield "follower best response vs grid", worst_f <= 1e-6, f"worst shortfall {worst_f:.2e}"
    yield "leader best response vs grid", worst_l <= 1e-6, f"worst shortfall {worst_l:.2e}"

    failures = 0
    for _ in range(max(draws // 4, 5)):
        m = int(rng.integers(2, 5))
        params = game.GameParams(total_energy_anchor=10 ** rng.uniform(-1, 2),
                                 total_energy_sensor=10 ** rng.uniform(-1, 2))
        g = game.SingleLeaderGame(m, int(rng.integers(0, 4)), game.DensityNeighborCount(m, 2500.0, chan),
                                  params, chan)
        p, qs = game.solve_equilibrium(g)
        failures += not game.verify_equilibrium(p, qs, g, 1e-5)
    yield "equilibrium profiles verified", failures == 0, f"{failures} failures"

    from .bench import Scenario
    sc = Scenario(n_sensors=10, replications=2, seed=3)
    rep = run_experiment(sc)
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "r.csv"
        row = report_row("none", "", sc.policy.value, rep)
        write_csv([row], path)
        back = read_csv(path)[0]
    same = all(back[k] == row[k] or (row[k] == "" and back[k] is None)
               for k in ("coverage", "e_node", "ale_m", "policy"))
    yield "CSV round trip", same, "report re-parsed"
    again = run_experiment(sc)
    yield "determinism", again.scalars() == rep.scalars(), "two runs, same seed"


def _verify(args) -> int:
    ok = True
    for name, passed, detail in verification_checks(args.draws):
        print(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
        ok &= passed
    return EXIT_OK if ok else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="eela", description="Energy-efficient underwater localization simulator")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one scenario over its replications")
    s.add_argument("--config", required=True)
    s.add_argument("--policy")
    s.add_argument("--sensors", type=int)
    s.add_argument("--speed", type=float)
    s.add_argument("--replications", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.add_argument("--trace")
    s.set_defaults(func=_simulate)

    w = sub.add_parser("sweep", help="sweep one axis and write a CSV report")
    w.add_argument("--config", required=True)
    w.add_argument("--axis", required=True, choices=("sensors", "speed", "policy"))
    w.add_argument("--out", required=True)
    w.add_argument("--replications", type=int)
    w.set_defaults(func=_sweep)

    v = sub.add_parser("verify", help="run the oracle and property checks")
    v.add_argument("--draws", type=int, default=40)
    v.set_defaults(func=_verify)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
