"""Round loop: attention, association, allocation, local training, queues, aggregation.

Every random draw comes from a stream keyed by (seed, purpose, round, uav), so
results do not depend on the order in which UAVs are processed.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..affinity import AffinityState, affinity_round, update_share_sets
from ..association import (EXHAUSTIVE_LIMIT, AssociationInfeasible, association_matrix,
                           evaluate_assignment, exhaustive_assign, two_stage_assign,
                           utility_table)
from ..attention import AttentionState, combine_weights, task_shapley, update_loss_weights
from ..channel import ComputeParams, Geometry, channel_gains, round_costs
from ..fl.data import SuiteConfig, TaskSpec, generate_suite
from ..fl.engine import (ModelBundle, aggregate_extractors, aggregate_heads, local_train,
                         task_gradients)
from ..lyapunov import (VirtualQueueState, drift_bound_constant, dpp_objective, queue_update,
                        theorem3_check, utility)
from .baselines import AouTracker, aou_assign, channel_aware_assign, random_assign
from .config import ScenarioConfig

log = logging.getLogger(__name__)

_PURPOSE = {"suite": 1, "geometry": 2, "compute": 3, "init": 4, "assoc": 5, "train": 6}
FEAS_TOL = 1e-9


class RoundInfeasible(RuntimeError):
    pass


def stream(seed: int, purpose: str, rnd: int = 0, uav: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(_PURPOSE[purpose], rnd, uav))
    return np.random.default_rng(ss)


@dataclass
class World:
    """Static pieces of a run, built once from the config and seed."""

    cfg: ScenarioConfig
    suite: object
    bundle: ModelBundle
    geometry: Geometry
    gains: np.ndarray
    compute: ComputeParams
    channel: object

    @property
    def data_sizes(self) -> np.ndarray:
        return self.suite.data_sizes


def suite_config(cfg: ScenarioConfig) -> SuiteConfig:
    d = cfg.data
    tasks = tuple(TaskSpec(t.kind, t.classes, t.label_noise) for t in cfg.tasks)
    return SuiteConfig(n_uav=cfg.n_uav, tasks=tasks, input_dim=d.input_dim,
                       latent_dim=d.latent_dim, n_clusters=d.n_clusters,
                       cluster_radius=d.cluster_radius, cluster_spread=d.cluster_spread,
                       nuisance_scale=d.nuisance_scale, group_overlap=d.group_overlap,
                       noise=d.noise, total_samples=d.total_samples, min_samples=d.min_samples,
                       alpha1=d.alpha1, alpha2=d.alpha2, val_size=d.val_size,
                       test_size=d.test_size)


def build_world(cfg: ScenarioConfig) -> World:
    suite = generate_suite(suite_config(cfg), np.random.SeedSequence(cfg.seed, spawn_key=(1,)))
    tr = cfg.training
    bundle = ModelBundle.create(cfg.data.input_dim, tr.hidden, [t.classes for t in cfg.tasks],
                                tr.lr, tr.local_iters, tr.batch_size, stream(cfg.seed, "init"))
    g = cfg.geometry
    rng = stream(cfg.seed, "geometry")
    geom = Geometry(rng.uniform(0, g.area_side, (cfg.n_uav, 2)),
                    rng.uniform(0, g.area_side, (cfg.n_tasks, 2)),
                    rng.uniform(g.altitude_min, g.altitude_max, cfg.n_uav))
    channel = cfg.channel.params()
    c = cfg.compute
    spread = math.log1p(c.uav_spread)
    # log-uniform per-(task, UAV) factor in [1/(1+s), 1+s]
    factor = np.exp(stream(cfg.seed, "compute").uniform(-spread, spread, (cfg.n_tasks, cfg.n_uav)))
    flops = np.array([m.flops_per_sample() * t.cost_scale
                      for m, t in zip(bundle.models, cfg.tasks)])
    payload = np.array([c.bits_per_param * m.param_count * t.payload_scale
                        for m, t in zip(bundle.models, cfg.tasks)])
    compute = ComputeParams(
        cycles_per_sample=flops[:, None] * c.cycles_per_flop * factor,
        local_iters=tr.local_iters, batch_size=tr.batch_size, energy_coeff=c.energy_coeff,
        f_max=c.f_max, p_max=c.p_max, payload_bits=payload, round_deadline=cfg.deadline,
        full_batch=c.full_batch, data_sizes=suite.data_sizes if c.full_batch else None)
    return World(cfg, suite, bundle, geom, channel_gains(geom, channel), compute, channel)


@dataclass
class TrainingReport:
    """Everything a run produces; the CSV files hold exactly this content."""

    config: ScenarioConfig
    task_rows: list = field(default_factory=list)
    uav_rows: list = field(default_factory=list)
    affinity_rows: list = field(default_factory=list)
    control_rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    bundle: ModelBundle | None = None
    energies: np.ndarray | None = None  # (T, N)
    queues: np.ndarray | None = None  # (T, N) after each update
    upsilon: np.ndarray | None = None  # final cumulative affinity

    @property
    def rounds_completed(self) -> int:
        return len(self.control_rows)


def _max_coverage(data_sizes, delta) -> np.ndarray:
    """Largest sum of D_n task m can receive while every other task keeps its minimum."""
    d = np.sort(np.asarray(data_sizes, float))
    total = d.sum()
    out = np.empty(len(delta))
    for m in range(len(delta)):
        reserve = int(sum(delta)) - int(delta[m])
        out[m] = total - d[:reserve].sum()
    return out


def _choose(cfg, world, state, alpha, aou, rnd):
    delta = [t.min_uavs for t in cfg.tasks]
    if cfg.association == "proposed":
        table = utility_table(state, alpha, world.gains, world.compute, world.channel,
                              world.data_sizes)
        return two_stage_assign(table, delta, q=state.q, alpha=alpha).tasks
    if cfg.association == "aou":
        return aou_assign(aou.age, delta).tasks
    if cfg.association == "channel_aware":
        return channel_aware_assign(world.gains, delta).tasks
    return random_assign(stream(cfg.seed, "assoc", rnd), cfg.n_uav, cfg.n_tasks, delta).tasks


def _commit(cfg, world, state, alpha, tasks):
    """Allocate for the chosen association, falling back to exhaustive search."""
    ev = evaluate_assignment(tasks, state, alpha, world.gains, world.compute, world.channel,
                             world.data_sizes)
    if math.isfinite(ev.objective):
        return ev, False
    log.warning("association %s infeasible for allocation; re-solving", list(tasks))
    if cfg.n_tasks ** cfg.n_uav > EXHAUSTIVE_LIMIT:
        raise RoundInfeasible(f"no feasible allocation for association {list(tasks)}")
    try:
        return exhaustive_assign(state, alpha, world.gains, world.compute, world.channel,
                                 world.data_sizes, [t.min_uavs for t in cfg.tasks]), True
    except AssociationInfeasible as exc:
        raise RoundInfeasible(str(exc)) from exc


def _audit(cfg, world, tasks, alloc, costs):
    problems = []
    if abs(alloc.gamma.sum() - 1.0) > FEAS_TOL:
        problems.append(f"bandwidth shares sum to {alloc.gamma.sum()!r}")
    if np.any(alloc.gamma <= 0):
        problems.append("non-positive bandwidth share")
    if np.any(costs.latency > cfg.deadline + FEAS_TOL):
        problems.append(f"deadline exceeded by {float(np.max(costs.latency - cfg.deadline))!r} s")
    if np.any(alloc.p > world.compute.p_max * (1 + FEAS_TOL)) or np.any(alloc.p < 0):
        problems.append("power outside [0, p_max]")
    if np.any(alloc.f > world.compute.f_max * (1 + FEAS_TOL)) or np.any(alloc.f <= 0):
        problems.append("frequency outside (0, f_max]")
    counts = np.bincount(tasks, minlength=cfg.n_tasks)
    if np.any(counts < [t.min_uavs for t in cfg.tasks]):
        problems.append("task minimum violated")
    if problems:
        raise RoundInfeasible("committed decision breaks constraints: " + "; ".join(problems))


def _shapley_values(bundle, grads, totals, heads, val) -> np.ndarray:
    """v[m, mask]: task m's validation accuracy after applying the coalition's
    data-weighted extractor gradient and its own new head."""
    m_tasks = bundle.n_tasks
    values = np.empty((m_tasks, 1 << m_tasks))
    for mask in range(1 << m_tasks):
        members = [i for i in range(m_tasks) if mask >> i & 1 and totals[i] > 0]
        if members:
            w = totals[members]
            step = bundle.lr * (w @ grads[members]) / w.sum()
        else:
            step = 0.0
        for m in range(m_tasks):
            values[m, mask] = bundle.models[m].accuracy(bundle.extractors[m] - step, heads[m],
                                                        val[m].x, val[m].y[m])
    return values


def run(cfg: ScenarioConfig, world: World | None = None) -> TrainingReport:
    world = world or build_world(cfg)
    bundle, suite = world.bundle, world.suite
    n, m_tasks, horizon = cfg.n_uav, cfg.n_tasks, cfg.rounds
    budget = cfg.energy_budget_per_round
    state = VirtualQueueState.empty(n, cfg.energy_max, max(horizon, 1), cfg.v)
    attn = AttentionState(m_tasks, varpi=cfg.varpi, kappa=cfg.kappa)
    aff = AffinityState(m_tasks, ell=cfg.ell)
    aou = AouTracker(n, m_tasks)
    delta = [t.min_uavs for t in cfg.tasks]
    coverage = _max_coverage(world.data_sizes, delta)
    b_const = drift_bound_constant(world.compute, budget)
    report = TrainingReport(cfg)
    energies = np.zeros((horizon, n))
    queues = np.zeros((horizon, n))
    u_star = np.zeros(horizon)
    val = suite.val

    for rnd in range(horizon):
        alpha = attn.weights.copy()
        tasks = np.asarray(_choose(cfg, world, state, alpha, aou, rnd), dtype=int)
        ev, fallback = _commit(cfg, world, state, alpha, tasks)
        tasks, alloc = ev.tasks, ev.alloc
        costs = round_costs(tasks, alloc.p, alloc.f, alloc.gamma, world.gains, world.compute,
                            world.channel)
        _audit(cfg, world, tasks, alloc, costs)
        beta = association_matrix(tasks, m_tasks)
        energy = costs.energy
        dpp = dpp_objective(state, energy, alpha, beta, world.data_sizes)
        util = utility(alpha, beta, world.data_sizes)
        q_before = state.q

        packets = [local_train(bundle, int(tasks[u]), u, suite.shards[u],
                               stream(cfg.seed, "train", rnd, u), full_batch=cfg.compute.full_batch)
                   for u in range(n)]
        state = queue_update(state, energy)
        aou.served(tasks)

        heads = [aggregate_heads(bundle.heads[t], [p for p in packets if p.task == t], bundle.lr)
                 for t in range(m_tasks)]
        grads, totals = task_gradients(packets, m_tasks, bundle.extractors.shape[1])
        losses = [(lambda w, t=t: bundle.models[t].loss(w, heads[t], val[t].x, val[t].y[t]))
                  for t in range(m_tasks)]
        aff_round = affinity_round(bundle.extractors, grads, totals, losses, bundle.lr)
        gated = update_share_sets(aff, aff_round.theta)
        if cfg.sharing == "affinity":
            share = gated
        elif cfg.sharing == "all_shared":
            share = [list(range(m_tasks))] * m_tasks
        else:
            share = [[t] for t in range(m_tasks)]
        phi = task_shapley(_shapley_values(bundle, grads, totals, heads, val))
        bundle.extractors = aggregate_extractors(bundle.extractors, grads, totals, share, bundle.lr)
        bundle.heads = heads

        val_loss = np.array([losses[t](bundle.extractors[t]) for t in range(m_tasks)])
        acc = np.array([bundle.models[t].accuracy(bundle.extractors[t], bundle.heads[t],
                                                  suite.test.x, suite.test.y[t])
                        for t in range(m_tasks)])
        update_loss_weights(attn, val_loss)
        combine_weights(attn, phi)

        energies[rnd] = energy
        queues[rnd] = state.q
        u_star[rnd] = float(alpha @ coverage)
        counts = np.bincount(tasks, minlength=m_tasks)
        for t in range(m_tasks):
            report.task_rows.append({
                "round": rnd, "task": t, "loss": float(val_loss[t]), "acc": float(acc[t]),
                "alpha": float(alpha[t]), "psi": float(attn.weights[t]),
                "shapley": float(phi[t]), "n_uavs": int(counts[t]),
                "data": float(totals[t]), "share_set": " ".join(map(str, share[t]))})
        for u in range(n):
            report.uav_rows.append({
                "round": rnd, "uav": u, "task": int(tasks[u]), "p": float(alloc.p[u]),
                "f": float(alloc.f[u]), "gamma": float(alloc.gamma[u]),
                "t_comp": float(costs.t_comp[u]), "t_comm": float(costs.t_comm[u]),
                "e_comp": float(costs.e_comp[u]), "e_comm": float(costs.e_comm[u]),
                "energy": float(energy[u]), "q_before": float(q_before[u]),
                "q": float(state.q[u]), "data": float(world.data_sizes[u])})
        for i in range(m_tasks):
            for j in range(m_tasks):
                report.affinity_rows.append({
                    "round": rnd, "i": i, "j": j, "theta": float(aff_round.theta[i, j]),
                    "upsilon": float(aff.upsilon[i, j]),
                    "guarded": int(aff_round.guarded[i, j])})
        report.control_rows.append({
            "round": rnd, "v": cfg.v, "dpp_objective": dpp, "utility": util,
            "u_star_proxy": float(u_star[rnd]), "energy_total": float(energy.sum()),
            "bcd_iterations": int(alloc.iterations), "bcd_converged": int(alloc.converged),
            "fallback": int(fallback)})

    report.bundle = bundle
    report.energies = energies
    report.queues = queues
    report.upsilon = aff.upsilon.copy()
    final_acc = [bundle.models[t].accuracy(bundle.extractors[t], bundle.heads[t],
                                           suite.test.x, suite.test.y[t]) for t in range(m_tasks)]
    report.summary = summarize(cfg, report, final_acc, b_const, u_star)
    return report


def energy_violation(energies, budget) -> float:
    """Mean over UAVs of max(0, cumulative energy - rounds * budget)."""
    energies = np.atleast_2d(np.asarray(energies, float))
    over = energies.sum(axis=0) - energies.shape[0] * budget
    return float(np.mean(np.maximum(over, 0.0))) if energies.size else 0.0


def summarize(cfg, report: TrainingReport, acc, b_const: float, u_star) -> dict:
    horizon = report.energies.shape[0]
    budget = cfg.energy_budget_per_round
    diag = theorem3_check(report.energies, budget, cfg.v, b_const, u_star)
    out = {"seed": cfg.seed, "v": cfg.v, "association": cfg.association,
           "sharing": cfg.sharing, "rounds": horizon}
    for t, a in enumerate(acc):
        out[f"acc_task{t}"] = a
    mean_acc = float(np.mean(acc))
    out.update({
        "avg_acc": mean_acc,
        "performance_gap": 100.0 * (1.0 - mean_acc),
        "energy_violation": energy_violation(report.energies, budget),
        "energy_avg": diag.lhs_energy_avg,
        "energy_bound": diag.rhs_bound,
        "bound_holds": int(diag.holds),
        "drift_const_b": b_const,
        "u_star_proxy_sum": float(np.sum(u_star)),
    })
    return out


CSV_FILES = {"rounds.csv": "task_rows", "uavs.csv": "uav_rows", "affinity.csv": "affinity_rows",
             "control.csv": "control_rows"}


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return value


def write_rows(path: Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        if not rows:
            return
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(v) for k, v in row.items()})


def write_report(report: TrainingReport, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, attr in CSV_FILES.items():
        write_rows(out / name, getattr(report, attr))
    write_rows(out / "summary.csv", [report.summary])
    return out


def sweep_v(cfg: ScenarioConfig, v_list, seeds=None) -> list:
    """One run per (V, seed) on otherwise identical scenarios; summary rows."""
    if not len(v_list):
        raise ValueError("v_list must not be empty")
    seeds = [cfg.seed] if seeds is None else list(seeds)
    rows = []
    for seed in seeds:
        for v in v_list:
            rows.append(run(cfg.replace(v=float(v), seed=int(seed))).summary)
    return rows
