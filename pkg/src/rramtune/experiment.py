"""Monte-Carlo harness: programming campaigns, retention, separability.

One experiment programs, for every replica seed and every policy, a
fresh 8x8 array uniformly to each target level, then samples the whole
array at a list of retention checkpoints. Per-level statistics
(iteration counts, final erase pulse widths, wait-branch counts,
post-retention conductance spread) and distinguishable-level counts are
aggregated into a report that is a pure function of (config, seeds).

Checkpoint sampling is non-destructive: every cell is sampled at the
same simulated instant through the device read path (noise and ADC
included), without burning loop overhead, so the array clock advances
only by the idle time between checkpoints.
"""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

from . import device as dev
from .crossbar import COLS, Crossbar, ProtocolTable, ROWS, SensePath, TimingModel, new_crossbar
from .device import DeviceParams, NS_PER_S
from .errors import InsufficientSamples, InvalidConfig
from .programming import (
    PolicyVariant,
    ProgramPolicy,
    ProgramTrace,
    TargetInterval,
    program_array,
)

MIN_SAMPLES_PER_STATE = 8


class HardGap:
    """Adjacent levels distinguishable iff the sample ranges do not touch."""

    label = "hard_gap"

    def distinguishable(self, lo: Sequence[float], hi: Sequence[float]) -> bool:
        return max(lo) < min(hi)


@dataclass(frozen=True)
class KSigma:
    """Adjacent levels distinguishable iff the mean gap exceeds k sigma-sums."""

    k: float = 1.0
    label = "k_sigma"

    def __post_init__(self):
        if not self.k > 0:
            raise InvalidConfig("k must be positive")

    def distinguishable(self, lo: Sequence[float], hi: Sequence[float]) -> bool:
        mean_lo = sum(lo) / len(lo)
        mean_hi = sum(hi) / len(hi)
        return mean_hi - mean_lo > self.k * (_sample_std(lo) + _sample_std(hi))


def _sample_std(xs: Sequence[float]) -> float:
    n = len(xs)
    mean = sum(xs) / n
    return math.sqrt(sum((x - mean) ** 2 for x in xs) / (n - 1))


def separability(samples_by_state: Sequence[Sequence[float]], criterion) -> int:
    """Longest run of consecutive levels whose adjacent pairs separate.

    samples_by_state must be ordered by level index (ascending target
    conductance). Needs at least two states and 8 samples per state.
    """
    if len(samples_by_state) < 2:
        raise InsufficientSamples("separability needs at least 2 states")
    for i, s in enumerate(samples_by_state):
        if len(s) < MIN_SAMPLES_PER_STATE:
            raise InsufficientSamples(
                f"state {i} has {len(s)} samples, need {MIN_SAMPLES_PER_STATE}"
            )
    best = 1
    run = 1
    for lo, hi in zip(samples_by_state, samples_by_state[1:]):
        if criterion.distinguishable(lo, hi):
            run += 1
        else:
            run = 1
        best = max(best, run)
    return best


@dataclass(frozen=True)
class RetentionPoint:
    t_ns: int
    row: int
    col: int
    g_us: float


def retention_curve(
    cb: Crossbar,
    cells: Sequence[tuple[int, int]],
    times_ns: Sequence[int],
) -> list[RetentionPoint]:
    """Sample the listed cells at each absolute time, without reprogramming.

    Times must be ascending and not in the past. All cells are sampled
    at the same instant (no per-cell skew); the clock ends at the last
    checkpoint. Sampling goes through read noise and the ADC but leaves
    anchors untouched, so the curve is non-destructive.
    """
    points: list[RetentionPoint] = []
    v_bias = cb.protocol.read_bias_v()
    for t in times_ns:
        cb.advance_time(t - cb.clock_ns)
        devices = list(cb.devices)
        for row, col in cells:
            idx = cb._check_index(row, col)
            g, devices[idx] = dev.sample_read(
                devices[idx], t, cb.params, sense=cb.sense, v_bias=v_bias
            )
            points.append(RetentionPoint(t, row, col, g))
        cb.devices = tuple(devices)
    return points


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything run_experiment needs; the report echoes it in full."""

    intervals: tuple[TargetInterval, ...]
    device_params: DeviceParams = DeviceParams()
    protocol: ProtocolTable = ProtocolTable()
    sense: SensePath = SensePath()
    timing: TimingModel = TimingModel()
    policies: tuple[ProgramPolicy, ...] = (
        ProgramPolicy(PolicyVariant.NAIVE),
        ProgramPolicy(PolicyVariant.RELAX_AWARE),
    )
    seeds: tuple[int, ...] = tuple(range(1, 21))
    checkpoints_s: tuple[float, ...] = (0.0, 5.0, 1000.0)
    ksigma_k: float = 1.0
    workers: int = 1

    def __post_init__(self):
        if not self.intervals:
            raise InvalidConfig("at least one target interval is required")
        levels = [iv.n for iv in self.intervals]
        if len(set(levels)) != len(levels):
            raise InvalidConfig("interval level indices must be unique")
        if not self.seeds:
            raise InvalidConfig("at least one replica seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            raise InvalidConfig("replica seeds must be unique")
        if not self.policies:
            raise InvalidConfig("at least one policy is required")
        if list(self.checkpoints_s) != sorted(self.checkpoints_s):
            raise InvalidConfig("checkpoints must be ascending")
        if 1000.0 not in self.checkpoints_s:
            raise InvalidConfig("checkpoints must include the 1000 s reference point")
        if self.workers < 1:
            raise InvalidConfig("workers must be >= 1")


@dataclass
class StateStats:
    """Aggregate over every replica and device programmed to one level."""

    n: int
    n_devices: int
    n_failed: int
    mean_iterations: float
    afepw_ns: float | None
    mean_wait_branches: float
    g_mean_at_1ks: float
    g_std_at_1ks: float
    in_interval_fraction_at_1ks: float


@dataclass
class PolicyResult:
    policy: ProgramPolicy
    state_stats: list[StateStats]
    # [seed][state] grids for trend checks and reconstruction
    mean_iterations_by_seed: list[list[float]]
    afepw_by_seed: list[list[float | None]]
    wait_branches_by_seed: list[list[float]]
    # checkpoint label -> criterion label -> [count per seed]
    separability_by_seed: dict[str, dict[str, list[int]]]
    # Exact integer-ns accounting, summed over every (seed, state) run:
    # total_clock_ns == pulse_ns + iteration_count * overhead + wait_ns
    #                   + checkpoint_advance_ns,
    # where pulse_ns covers every pulse fired (form, reads, erases,
    # writes) and the overhead is charged once per loop pass.
    total_clock_ns: int
    form_ns: int
    program_ns: int
    checkpoint_advance_ns: int
    pulse_ns: int
    iteration_count: int
    wait_ns: int


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    policies: list[PolicyResult]
    # (policy label, checkpoint label, state) -> samples, seed-major order.
    # Kept on the object for histogram export; not serialized to JSON.
    samples: dict[tuple[str, str, int], list[float]] = field(repr=False, default_factory=dict)

    def policy_result(self, variant: PolicyVariant) -> PolicyResult:
        for pr in self.policies:
            if pr.policy.variant is variant:
                return pr
        raise KeyError(variant)

    def to_dict(self) -> dict:
        from .config import config_echo  # late import; config depends on this module

        out: dict = {
            "config": config_echo(self.config),
            "seeds": list(self.config.seeds),
            "levels": [iv.n for iv in self.config.intervals],
            "intervals": [
                {"n": iv.n, "g_low_us": iv.g_low, "g_high_us": iv.g_high}
                for iv in self.config.intervals
            ],
            "policies": {},
        }
        for pr in self.policies:
            out["policies"][pr.policy.variant.value] = {
                "delta_t_ns": pr.policy.delta_t_ns,
                "max_iterations": pr.policy.max_iterations,
                "state_stats": [dataclasses.asdict(s) for s in pr.state_stats],
                "mean_iterations_by_seed": pr.mean_iterations_by_seed,
                "afepw_by_seed": pr.afepw_by_seed,
                "wait_branches_by_seed": pr.wait_branches_by_seed,
                "separability_by_seed": pr.separability_by_seed,
                "timing_ns": {
                    "total_clock": pr.total_clock_ns,
                    "form": pr.form_ns,
                    "program": pr.program_ns,
                    "checkpoint_advance": pr.checkpoint_advance_ns,
                    "pulse": pr.pulse_ns,
                    "iterations": pr.iteration_count,
                    "wait": pr.wait_ns,
                },
            }
        return out


def checkpoint_label(c_s: float) -> str:
    return str(int(c_s)) if float(c_s).is_integer() else repr(float(c_s))


TraceSink = Callable[[int, int, ProgramTrace], None]


@dataclass
class _StateRun:
    """Raw outcome of programming one array to one level under one seed.

    summaries holds (n_iterations, n_wait_branches, final_erase_width_ns,
    converged) per device, row-major; full traces are kept only when a
    sink asked for them. The *_ns fields are exact integer accounting:
    clock_ns == pulse_ns + iteration_count * overhead + wait_ns + advance_ns.
    """

    summaries: list[tuple[int, int, int, bool]]
    samples: list[list[float]]  # per checkpoint, 64 values row-major
    clock_ns: int
    form_ns: int
    program_ns: int
    advance_ns: int
    pulse_ns: int
    iteration_count: int
    wait_ns: int
    traces: list[ProgramTrace] | None = None


def _run_state(
    cfg: ExperimentConfig,
    seed: int,
    policy: ProgramPolicy,
    interval: TargetInterval,
    keep_traces: bool,
) -> _StateRun:
    params = dataclasses.replace(cfg.device_params, master_seed=seed)
    cb = new_crossbar(params, cfg.protocol, cfg.sense, cfg.timing, log_ops=False)
    cb.form_all()
    form_ns = cb.clock_ns
    assignment = [[interval.n] * COLS for _ in range(ROWS)]
    traces = program_array(cb, assignment, list(cfg.intervals), policy)
    program_ns = cb.clock_ns - form_ns
    t_end = cb.clock_ns
    cells = [(r, c) for r in range(ROWS) for c in range(COLS)]
    times = [t_end + int(round(c_s * NS_PER_S)) for c_s in cfg.checkpoints_s]
    points = retention_curve(cb, cells, times)
    advance_ns = cb.clock_ns - t_end
    per_checkpoint: list[list[float]] = []
    n_cells = len(cells)
    for i in range(len(times)):
        per_checkpoint.append([p.g_us for p in points[i * n_cells : (i + 1) * n_cells]])

    read_ns = cb.timing.read_pulse_ns
    pulse_ns = ROWS * COLS * cb.timing.form_pulse_ns
    iteration_count = 0
    wait_ns = 0
    summaries = []
    for t in traces:
        summaries.append((t.n_iterations, t.n_wait_branches, t.final_erase_width_ns, t.converged))
        for r in t.records:
            pulse_ns += read_ns  # the read that opened the pass
            iteration_count += 1
            if r.op in ("erase", "write"):
                pulse_ns += r.pulse_width_ns
            if r.waited:
                pulse_ns += read_ns  # the post-wait verification read
                wait_ns += policy.delta_t_ns
    return _StateRun(
        summaries,
        per_checkpoint,
        cb.clock_ns,
        form_ns,
        program_ns,
        advance_ns,
        pulse_ns,
        iteration_count,
        wait_ns,
        traces=traces if keep_traces else None,
    )


def _run_replica(cfg: ExperimentConfig, seed: int, keep_traces: bool) -> dict[tuple[str, int], _StateRun]:
    out: dict[tuple[str, int], _StateRun] = {}
    for policy in cfg.policies:
        for interval in sorted(cfg.intervals, key=lambda iv: iv.n):
            out[(policy.variant.value, interval.n)] = _run_state(
                cfg, seed, policy, interval, keep_traces
            )
    return out


def run_experiment(cfg: ExperimentConfig, trace_sink: TraceSink | None = None) -> ExperimentReport:
    """Run the full campaign and aggregate.

    trace_sink, when given, receives (seed, state, trace) for every
    programming trace in deterministic order: seeds in config order,
    policies in config order, states ascending, devices row-major.
    Replicas are independent; with workers > 1 they run concurrently and
    are reduced in seed order, so the report does not depend on the
    worker count.
    """
    levels = sorted(iv.n for iv in cfg.intervals)
    by_level = {iv.n: iv for iv in cfg.intervals}
    keep_traces = trace_sink is not None

    if cfg.workers == 1:
        replica_results = [_run_replica(cfg, seed, keep_traces) for seed in cfg.seeds]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [pool.submit(_run_replica, cfg, seed, keep_traces) for seed in cfg.seeds]
            replica_results = [f.result() for f in futures]

    criteria = [HardGap(), KSigma(cfg.ksigma_k)]
    policies_out: list[PolicyResult] = []
    samples_store: dict[tuple[str, str, int], list[float]] = {}

    for policy in cfg.policies:
        pol = policy.variant.value
        mean_it_by_seed: list[list[float]] = []
        afepw_by_seed: list[list[float | None]] = []
        waits_by_seed: list[list[float]] = []
        sep_by_seed: dict[str, dict[str, list[int]]] = {
            checkpoint_label(c): {crit.label: [] for crit in criteria} for c in cfg.checkpoints_s
        }
        total_clock = form_total = program_total = advance_total = 0
        pulse_total = iteration_total = wait_total = 0

        for seed_i, seed in enumerate(cfg.seeds):
            runs = replica_results[seed_i]
            mean_it_row: list[float] = []
            afepw_row: list[float | None] = []
            waits_row: list[float] = []
            for n in levels:
                run = runs[(pol, n)]
                summaries = run.summaries
                mean_it_row.append(sum(s[0] for s in summaries) / len(summaries))
                widths = [s[2] for s in summaries if s[3]]
                afepw_row.append(sum(widths) / len(widths) if widths else None)
                waits_row.append(sum(s[1] for s in summaries) / len(summaries))
                total_clock += run.clock_ns
                form_total += run.form_ns
                program_total += run.program_ns
                advance_total += run.advance_ns
                pulse_total += run.pulse_ns
                iteration_total += run.iteration_count
                wait_total += run.wait_ns
                for ci, c_s in enumerate(cfg.checkpoints_s):
                    key = (pol, checkpoint_label(c_s), n)
                    samples_store.setdefault(key, []).extend(run.samples[ci])
            mean_it_by_seed.append(mean_it_row)
            afepw_by_seed.append(afepw_row)
            waits_by_seed.append(waits_row)
            for ci, c_s in enumerate(cfg.checkpoints_s):
                clabel = checkpoint_label(c_s)
                per_state = [runs[(pol, n)].samples[ci] for n in levels]
                for crit in criteria:
                    sep_by_seed[clabel][crit.label].append(separability(per_state, crit))

        state_stats: list[StateStats] = []
        label_1k = checkpoint_label(1000.0)
        for si, n in enumerate(levels):
            iv = by_level[n]
            all_it = [row[si] for row in mean_it_by_seed]
            all_waits = [row[si] for row in waits_by_seed]
            afepws = [row[si] for row in afepw_by_seed if row[si] is not None]
            g1k = samples_store[(pol, label_1k, n)]
            mean_g = sum(g1k) / len(g1k)
            std_g = _sample_std(g1k) if len(g1k) > 1 else 0.0
            inside = sum(1 for g in g1k if iv.g_low <= g <= iv.g_high) / len(g1k)
            n_devices = len(cfg.seeds) * ROWS * COLS
            n_failed = sum(
                sum(1 for s in replica_results[i][(pol, n)].summaries if not s[3])
                for i in range(len(cfg.seeds))
            )
            state_stats.append(
                StateStats(
                    n=n,
                    n_devices=n_devices,
                    n_failed=n_failed,
                    mean_iterations=sum(all_it) / len(all_it),
                    afepw_ns=sum(afepws) / len(afepws) if afepws else None,
                    mean_wait_branches=sum(all_waits) / len(all_waits),
                    g_mean_at_1ks=mean_g,
                    g_std_at_1ks=std_g,
                    in_interval_fraction_at_1ks=inside,
                )
            )

        policies_out.append(
            PolicyResult(
                policy=policy,
                state_stats=state_stats,
                mean_iterations_by_seed=mean_it_by_seed,
                afepw_by_seed=afepw_by_seed,
                wait_branches_by_seed=waits_by_seed,
                separability_by_seed=sep_by_seed,
                total_clock_ns=total_clock,
                form_ns=form_total,
                program_ns=program_total,
                checkpoint_advance_ns=advance_total,
                pulse_ns=pulse_total,
                iteration_count=iteration_total,
                wait_ns=wait_total,
            )
        )

    if trace_sink is not None:
        for seed_i, seed in enumerate(cfg.seeds):
            for policy in cfg.policies:
                for n in levels:
                    for trace in replica_results[seed_i][(policy.variant.value, n)].traces or []:
                        trace_sink(seed, n, trace)

    return ExperimentReport(config=cfg, policies=policies_out, samples=samples_store)
