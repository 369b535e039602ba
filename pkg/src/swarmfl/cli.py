"""Command line: simulate, sweep-v, validate, bench."""
from __future__ import annotations

import os

# BLAS thread count must be fixed before numpy loads
if os.environ.get("SWARMFL_THREADS"):
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, os.environ["SWARMFL_THREADS"])

import argparse  # noqa: E402
import logging  # noqa: E402
import sys  # noqa: E402
import time  # noqa: E402
from pathlib import Path  # noqa: E402

import numpy as np  # noqa: E402


def _config(args, **extra):
    from .sim.config import load_config

    overrides = list(args.set or [])
    overrides += [f"{k}={v}" for k, v in extra.items() if v is not None]
    return load_config(args.config, overrides)


def cmd_simulate(args) -> int:
    from .sim.config import dump_config
    from .sim.harness import run, write_report

    cfg = _config(args, seed=args.seed)
    t0 = time.perf_counter()
    report = run(cfg)
    out = write_report(report, args.out)
    dump_config(cfg, out / "config.yaml")
    s = report.summary
    print(f"{cfg.rounds} rounds in {time.perf_counter() - t0:.1f} s -> {out}")
    print(f"avg accuracy {s['avg_acc']:.4f}  energy violation {s['energy_violation']:.3f} J  "
          f"bound holds {bool(s['bound_holds'])}")
    return 0


def cmd_sweep(args) -> int:
    from .sim.harness import write_rows, sweep_v

    cfg = _config(args)
    v_list = [float(v) for v in args.v.split(",") if v.strip()]
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else None
    rows = sweep_v(cfg, v_list, seeds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_rows(out / "sweep.csv", rows)
    print(f"{'seed':>4} {'V':>8} {'gap %':>8} {'violation J':>12} {'bound':>6}")
    for r in rows:
        print(f"{r['seed']:>4} {r['v']:>8g} {r['performance_gap']:>8.2f} "
              f"{r['energy_violation']:>12.3f} {'ok' if r['bound_holds'] else 'FAIL':>6}")
    return 0


def cmd_validate(args) -> int:
    from .validate import format_table, run_checks

    checks = run_checks(args.seed)
    print(format_table(checks))
    return 0 if all(c.ok for c in checks) else 1


def cmd_bench(args) -> int:
    from .association import two_stage_assign, utility_table
    from .lyapunov import VirtualQueueState
    from .resource import P3Instance, bcd_solve
    from .sim.config import ScenarioConfig
    from .sim.harness import build_world

    cfg = ScenarioConfig(seed=args.seed)
    world = build_world(cfg)
    rng = np.random.default_rng(args.seed)
    delta = [t.min_uavs for t in cfg.tasks]
    cases = []
    for _ in range(args.repeats):
        q = rng.uniform(0, 5, cfg.n_uav)
        state = VirtualQueueState(q, np.full(cfg.n_uav, cfg.energy_budget_per_round),
                                  cfg.rounds, cfg.v)
        cases.append((state, rng.dirichlet(np.ones(cfg.n_tasks))))
    t0 = time.perf_counter()
    choices = []
    for state, alpha in cases:
        table = utility_table(state, alpha, world.gains, world.compute, world.channel,
                              world.data_sizes)
        choices.append(two_stage_assign(table, delta, q=state.q, alpha=alpha).tasks)
    t_assoc = (time.perf_counter() - t0) / len(cases)
    t0 = time.perf_counter()
    iters = []
    for (state, _), tasks in zip(cases, choices):
        inst = P3Instance.from_assignment(tasks, world.gains, world.compute, world.channel, state.q)
        iters.append(bcd_solve(inst).iterations)
    t_bcd = (time.perf_counter() - t0) / len(cases)
    print(f"N={cfg.n_uav} M={cfg.n_tasks}, {len(cases)} instances")
    print(f"association (table + two-stage): {1e3 * t_assoc:7.2f} ms")
    print(f"bcd_solve:                       {1e3 * t_bcd:7.2f} ms  "
          f"(median {np.median(iters):.0f} iterations)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="swarmfl", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def add_config(p):
        p.add_argument("--config", type=Path, default=None)
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key, e.g. channel.bandwidth='20 MHz'")

    p = sub.add_parser("simulate", help="run one scenario and write CSVs")
    add_config(p)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("sweep-v", help="energy/accuracy tradeoff over V")
    add_config(p)
    p.add_argument("--v", default="0.01,0.1,1,10,100")
    p.add_argument("--seeds", default=None, help="comma-separated seeds (default: config seed)")
    p.add_argument("--out", type=Path, default=Path("sweep"))
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("validate", help="run the solver oracles")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("bench", help="time association and allocation at N=10, M=3")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeats", type=int, default=20)
    p.set_defaults(fn=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
