"""Closed-loop multi-level programming of one crossbar.

The controller is fully digital: it never changes pulse amplitudes,
only the erase pulse width, which grows and shrinks in 10 ns steps
through an integer counter CP. One loop pass reads the cell and then

* stops if the value sits inside the target interval (the relaxation
  aware variant first waits delta_t, reads again, and only accepts the
  cell if it is still inside after the short-term transient has mostly
  settled),
* fires Erase(max(CP+1, 1) * 10 ns) if the value is above the interval,
* steps CP down and fires a full fixed-width Write if it is below.

Every loop pass appends exactly one trace record and charges the
controller overhead exactly once, so iteration counts, wait-branch
counts, the final erase pulse width and the simulated walltime (pulse
widths + overhead per pass + delta_t per wait) can all be recovered
from the records alone.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .crossbar import COLS, Crossbar, ROWS
from .device import ERASE_STEP_NS, NS_PER_S, PulseKind, WRITE_PULSE_NS
from .errors import FailedToConverge, IntervalsOverlap, InvalidConfig


class PolicyVariant(enum.Enum):
    NAIVE = "naive"
    RELAX_AWARE = "relax-aware"


@dataclass(frozen=True)
class TargetInterval:
    """Acceptance band [g_low, g_high] (uS) for one programmed level n."""

    n: int
    g_low: float
    g_high: float

    def __post_init__(self):
        if self.n < 0:
            raise InvalidConfig("level index must be >= 0")
        if not self.g_low < self.g_high:
            raise InvalidConfig(f"level {self.n}: g_low must be below g_high")

    def contains(self, g: float) -> bool:
        return self.g_low <= g <= self.g_high


@dataclass(frozen=True)
class ProgramPolicy:
    """Programming variant plus its knobs.

    delta_t_ns = 0 is the degenerate limit in which the relaxation-aware
    variant collapses onto the naive one; normal runs use seconds-scale
    waits so the short-term transient can express before verification.
    """

    variant: PolicyVariant = PolicyVariant.NAIVE
    delta_t_ns: int = 5 * NS_PER_S
    max_iterations: int = 200
    cp_floor: int = 0

    def __post_init__(self):
        if self.delta_t_ns < 0:
            raise InvalidConfig("delta_t must be >= 0")
        if self.max_iterations < 1:
            raise InvalidConfig("max_iterations must be >= 1")


@dataclass(frozen=True)
class TraceRecord:
    """One loop pass.

    op is the action the pass took: "erase"/"write" carry the read value
    that triggered them; "read" marks a terminal or wait-branch pass.
    waited is True only on relaxation-aware verification passes, where
    g_read_us is the post-wait re-read.
    """

    iteration: int
    op: str
    pulse_width_ns: int
    cp_after: int
    g_read_us: float
    waited: bool


@dataclass
class ProgramTrace:
    """Complete record of programming one cell."""

    row: int
    col: int
    level: int
    g_low: float
    g_high: float
    policy: PolicyVariant
    records: list[TraceRecord] = field(default_factory=list)
    converged: bool = False
    reason: str = ""
    final_g: float = 0.0
    final_erase_width_ns: int = 0
    n_iterations: int = 0
    n_wait_branches: int = 0


def program_device(
    cb: Crossbar,
    row: int,
    col: int,
    target: TargetInterval,
    policy: ProgramPolicy,
) -> ProgramTrace:
    """Run the closed loop on one cell until it verifies or the cap hits.

    The crossbar is mutated in place and the trace returned. Raises
    FailedToConverge (carrying the partial trace) when max_iterations
    passes complete without convergence.
    """
    trace = ProgramTrace(
        row=row,
        col=col,
        level=target.n,
        g_low=target.g_low,
        g_high=target.g_high,
        policy=policy.variant,
    )
    cp = 0
    read_ns = cb.timing.read_pulse_ns
    overhead_ns = cb.timing.iteration_overhead_ns
    for iteration in range(1, policy.max_iterations + 1):
        g, _ = cb.read(row, col)
        if target.contains(g):
            if policy.variant is PolicyVariant.NAIVE:
                trace.records.append(
                    TraceRecord(iteration, "read", read_ns, cp, g, False)
                )
                cb.advance_time(overhead_ns)
                _finish(trace, converged=True)
                return trace
            # Tentative success: let the short-term transient act, then
            # verify that the cell still reads inside the interval.
            cb.advance_time(policy.delta_t_ns)
            g2, _ = cb.read(row, col)
            trace.records.append(TraceRecord(iteration, "read", read_ns, cp, g2, True))
            cb.advance_time(overhead_ns)
            if target.contains(g2):
                _finish(trace, converged=True)
                return trace
            continue
        if g > target.g_high:
            cp += 1
            width = max(cp, 1) * ERASE_STEP_NS
            cb.apply(PulseKind.ERASE, row, col, cp=cp)
            trace.records.append(TraceRecord(iteration, "erase", width, cp, g, False))
        else:
            cp = max(policy.cp_floor, cp - 1)
            cb.apply(PulseKind.WRITE, row, col)
            trace.records.append(
                TraceRecord(iteration, "write", WRITE_PULSE_NS, cp, g, False)
            )
        cb.advance_time(overhead_ns)
    _finish(trace, converged=False)
    raise FailedToConverge(
        f"device ({row},{col}) level {target.n}: no convergence in "
        f"{policy.max_iterations} iterations",
        trace=trace,
    )


def _finish(trace: ProgramTrace, converged: bool) -> None:
    trace.converged = converged
    trace.reason = "" if converged else "iteration cap reached"
    trace.n_iterations = len(trace.records)
    trace.n_wait_branches = sum(1 for r in trace.records if r.waited)
    erase_widths = [r.pulse_width_ns for r in trace.records if r.op == "erase"]
    trace.final_erase_width_ns = erase_widths[-1] if erase_widths else 0
    if trace.records:
        trace.final_g = trace.records[-1].g_read_us


def program_array(
    cb: Crossbar,
    assignment: Sequence[Sequence[int]],
    intervals: Sequence[TargetInterval],
    policy: ProgramPolicy,
) -> list[ProgramTrace]:
    """Program every cell to its assigned level, row-major.

    A cell that fails to converge is recorded (trace.converged False)
    and programming moves on; nothing is raised.
    """
    by_level = {iv.n: iv for iv in intervals}
    traces: list[ProgramTrace] = []
    for row in range(ROWS):
        for col in range(COLS):
            level = assignment[row][col]
            if level not in by_level:
                raise InvalidConfig(f"assignment at ({row},{col}) names unknown level {level}")
            try:
                traces.append(program_device(cb, row, col, by_level[level], policy))
            except FailedToConverge as exc:
                traces.append(exc.trace)
    return traces


class IntervalScheme(enum.Enum):
    LINEAR = "linear"
    SIGMA = "sigma"
    MIXED = "mixed"


def assign_intervals(
    scheme: IntervalScheme,
    n_states: int,
    g_range: tuple[float, float],
    sigma_model: Callable[[float], float] | None = None,
    gap_frac: float = 0.25,
    min_half_width: float = 0.1953125,
    weights: tuple[float, float] = (0.5, 0.5),
) -> list[TargetInterval]:
    """Place n_states disjoint target intervals across g_range.

    Centers always sit mid-pitch: with pitch p = (g_max - g_min) /
    n_states the center of level i is g_min + (i + 0.5) * p.

    * linear: every half-width is (1 - gap_frac) * p / 2.
    * sigma: half-width(i) = k * sigma_model(center_i), with the common
      k solved so the tightest adjacent pair keeps a gap of
      gap_frac * p.
    * mixed: per-level max of the weighted linear and sigma half-widths,
      rescaled by one common factor so the tightest adjacent pair again
      keeps exactly the gap_frac * p gap.

    Half-widths are floored at min_half_width (default twice the sense
    conductance LSB at the reference operating point) and the result is
    checked for strict ordering; IntervalsOverlap is raised when the
    requested geometry cannot be met.
    """
    if n_states < 1:
        raise InvalidConfig("n_states must be >= 1")
    g_min, g_max = g_range
    if not g_min < g_max:
        raise InvalidConfig("g_range must be increasing")
    if not 0 <= gap_frac < 1:
        raise InvalidConfig("gap_frac must be in [0, 1)")
    if min_half_width <= 0:
        raise InvalidConfig("min_half_width must be positive")
    pitch = (g_max - g_min) / n_states
    centers = [g_min + (i + 0.5) * pitch for i in range(n_states)]
    hw_lin = (1.0 - gap_frac) * pitch / 2.0
    target_gap = gap_frac * pitch

    if scheme is IntervalScheme.LINEAR:
        half = [hw_lin] * n_states
    else:
        if sigma_model is None:
            raise InvalidConfig(f"{scheme.value} scheme requires a sigma model")
        sigmas = [max(sigma_model(c), 0.0) for c in centers]
        if scheme is IntervalScheme.SIGMA:
            pair_sums = [sigmas[i] + sigmas[i + 1] for i in range(n_states - 1)]
            if n_states == 1:
                k = hw_lin / sigmas[0] if sigmas[0] > 0 else 0.0
            else:
                worst = max(pair_sums)
                if worst <= 0:
                    half = [0.0] * n_states
                    k = 0.0
                else:
                    k = (pitch - target_gap) / worst
            half = [k * s for s in sigmas]
        else:
            w_lin, w_sig = weights
            if w_lin < 0 or w_sig < 0 or (w_lin == 0 and w_sig == 0):
                raise InvalidConfig("mixed weights must be non-negative, not both zero")
            raw = [max(w_lin * hw_lin, w_sig * s) for s in sigmas]
            if n_states > 1:
                worst = max(raw[i] + raw[i + 1] for i in range(n_states - 1))
                scale = (pitch - target_gap) / worst if worst > 0 else 0.0
            else:
                scale = hw_lin / raw[0] if raw[0] > 0 else 0.0
            half = [scale * r for r in raw]

    half = [max(h, min_half_width) for h in half]
    intervals = [
        TargetInterval(i, centers[i] - half[i], centers[i] + half[i])
        for i in range(n_states)
    ]
    for a, b in zip(intervals, intervals[1:]):
        if not a.g_high < b.g_low:
            raise IntervalsOverlap(
                f"levels {a.n} and {b.n} overlap: [{a.g_low:.4f}, {a.g_high:.4f}] vs "
                f"[{b.g_low:.4f}, {b.g_high:.4f}]"
            )
    return intervals
