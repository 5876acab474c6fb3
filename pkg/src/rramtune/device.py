"""Behavioral model of a single 1T1R HfOx RRAM cell.

The cell is reduced to a handful of conductance laws:

* Form: one long high-voltage pulse moves the device from its pristine
  high-resistance state to a low-resistance state drawn from a lognormal
  whose median sits above the normal write target (the forming pulse runs
  at twice the write compliance, so the filament comes out fatter).
* Write (SET): a fixed 100 ns pulse always rebuilds the full filament.
  The post-write conductance is a fresh lognormal draw around the
  device's own write target; it does not depend on the conductance the
  device had before the pulse.
* Erase (RESET): a width-modulated pulse dissolves part of the filament.
  The expected conductance decays exponentially toward the floor with
  the pulse width as the dose: E[G'] = g_floor + (G - g_floor) *
  exp(-width * eta / tau).  Cycle-to-cycle noise is multiplicative and
  can push an individual pulse upward even though the expectation only
  ever moves down toward the floor.
* Relaxation: after any programming pulse the conductance drifts away
  from its anchor value with two additive terms - a short exponential
  transient that saturates within seconds and a weak log-time tail.
  Both amplitudes are random per programming event, sign-symmetric, and
  scale with how far the anchor sits above the floor.

Conventions: conductances are in microsiemens, pulse widths and clock
times are integer nanoseconds, relaxation time constants are seconds.
All randomness comes from counter-based per-device streams, so any
operation is a pure function of (params, state, pulse, time).
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .errors import (
    AlreadyFormed,
    BadPulseWidth,
    InvalidConfig,
    NotFormed,
    TimeBeforeAnchor,
    WrongPulseKind,
)

if TYPE_CHECKING:
    from .crossbar import SensePath

NS_PER_S = 1_000_000_000

# Fixed write pulse width. The closed loop modulates erase width only.
WRITE_PULSE_NS = 100

# Erase width granularity: widths are CP * this step.
ERASE_STEP_NS = 10

# Forming runs at double the write compliance, so the formed-state median
# sits this factor above the device's write target.
FORMING_FACTOR = 1.2

# Default read bias (V_BL - V_SL) when the caller does not supply one.
READ_BIAS_V = 0.3

# Noise draws are truncated standard normals at +/- this many sigma.
TRUNC_SIGMA = 4.0

# Random values reserved per event in the counter-based stream. Rejection
# sampling for the truncation consumes a variable count; the block keeps
# successive events non-overlapping regardless.
_EVENT_BLOCK = 512

_MASK64 = (1 << 64) - 1


class PulseKind(enum.Enum):
    FORM = "form"
    WRITE = "write"
    ERASE = "erase"
    READ = "read"


class DevicePhase(enum.Enum):
    PRISTINE = "pristine"
    FORMED = "formed"


@dataclass(frozen=True)
class PulseSpec:
    """One pulse as seen by the selected cell.

    Voltages are the Active-mode line drives in volts; width_ns is the
    WL pulse width; compliance_ua is the transistor current limit (0
    means unlimited). The behavioral laws key off kind and width only,
    but the full electrical description is kept for logging and for
    validation against the protocol table.
    """

    kind: PulseKind
    v_wl: float
    v_sl: float
    v_bl: float
    width_ns: int
    compliance_ua: float = 0.0


@dataclass(frozen=True)
class DeviceParams:
    """Model constants shared by every device in an array.

    Units: conductances uS, tau_erase_median ns, relaxation taus s.
    master_seed keys every per-device random stream; two arrays built
    with equal params behave identically.
    """

    g_floor: float = 3.0                 # deep-erased asymptote (uS)
    g_on_median: float = 100.0           # array-median write target (uS)
    g_on_dispersion: float = 0.15        # lognormal sigma, device-to-device and cycle-to-cycle
    tau_erase_median: float = 200.0      # erase dose constant (ns)
    tau_erase_d2d_sigma: float = 0.25    # lognormal sigma of per-device erase rate
    erase_noise_frac: float = 0.12       # multiplicative cycle-to-cycle erase noise
    relax_tau_short: float = 1.5         # short-term transient constant (s), sub-5 s
    relax_sigma_short: float = 0.16      # short-term amplitude scale (fraction of G above floor)
    relax_sigma_long: float = 0.02       # log-tail amplitude scale per decade (fraction)
    relax_tau_long: float = 10.0         # log-tail onset time (s)
    read_noise_frac: float = 0.01        # multiplicative read noise
    g_pristine: float = 0.1              # unformed conductance (uS)
    master_seed: int = 1

    def __post_init__(self):
        if not self.g_floor > 0:
            raise InvalidConfig("g_floor must be positive")
        if not self.g_on_median > self.g_floor:
            raise InvalidConfig("g_on_median must exceed g_floor")
        if not 0 < self.g_pristine < self.g_floor:
            raise InvalidConfig("g_pristine must lie in (0, g_floor)")
        if self.g_on_dispersion < 0:
            raise InvalidConfig("g_on_dispersion must be >= 0")
        if not self.tau_erase_median > 0:
            raise InvalidConfig("tau_erase_median must be positive")
        if self.tau_erase_d2d_sigma < 0:
            raise InvalidConfig("tau_erase_d2d_sigma must be >= 0")
        if self.erase_noise_frac < 0:
            raise InvalidConfig("erase_noise_frac must be >= 0")
        if not 0 < self.relax_tau_short <= 5.0:
            raise InvalidConfig("relax_tau_short must be in (0, 5] s")
        if not self.relax_tau_long > 0:
            raise InvalidConfig("relax_tau_long must be positive")
        if self.relax_sigma_short < 0 or self.relax_sigma_long < 0:
            raise InvalidConfig("relaxation sigmas must be >= 0")
        # Short-term relaxation is the stronger branch. Equality is only
        # legal in the fully deterministic zero/zero configuration.
        if self.relax_sigma_long > 0 and not self.relax_sigma_short > self.relax_sigma_long:
            raise InvalidConfig("relax_sigma_short must exceed relax_sigma_long")
        if self.read_noise_frac < 0:
            raise InvalidConfig("read_noise_frac must be >= 0")
        if not isinstance(self.master_seed, int) or not 0 <= self.master_seed <= _MASK64:
            raise InvalidConfig("master_seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class DeviceState:
    """Immutable snapshot of one cell.

    g_anchor is the conductance right after the last programming pulse;
    relaxation is evaluated lazily from (t - t_anchor_ns). stream_id and
    rng_cursor locate the device in its deterministic random stream:
    cursor 0 is the construction draw, each subsequent operation
    consumes exactly one cursor tick.
    """

    phase: DevicePhase
    g_anchor: float          # uS
    t_anchor_ns: int
    amp_short: float         # uS, signed
    amp_long: float          # uS per decade, signed
    eta_erase: float         # per-device erase rate factor, median 1
    g_on_dev: float          # per-device write target (uS)
    stream_id: int
    rng_cursor: int


def _event_rng(params: DeviceParams, stream_id: int, cursor: int) -> np.random.Generator:
    key = np.array([params.master_seed & _MASK64, stream_id & _MASK64], dtype=np.uint64)
    bg = np.random.Philox(key=key)
    bg.advance(cursor * _EVENT_BLOCK)
    return np.random.Generator(bg)


def _trunc_std_normal(rng: np.random.Generator) -> float:
    z = rng.standard_normal()
    tries = 0
    while abs(z) > TRUNC_SIGMA and tries < 16:
        z = rng.standard_normal()
        tries += 1
    return float(min(max(z, -TRUNC_SIGMA), TRUNC_SIGMA))


def _relax_amps(rng: np.random.Generator, g_anchor: float, params: DeviceParams) -> tuple[float, float]:
    # Amplitudes are sign-symmetric; magnitude scales with the headroom
    # above the floor, so deeply erased cells barely move.
    span = max(g_anchor - params.g_floor, 0.0)
    amp_short = params.relax_sigma_short * span * _trunc_std_normal(rng)
    amp_long = params.relax_sigma_long * span * _trunc_std_normal(rng)
    return amp_short, amp_long


def new_device(params: DeviceParams, stream_id: int) -> DeviceState:
    """Construct a pristine device, drawing its fixed per-device factors.

    eta_erase and g_on_dev come from the construction event (cursor 0)
    of the device's stream, so a rebuilt array reproduces them exactly.
    """
    rng = _event_rng(params, stream_id, 0)
    eta_erase = math.exp(params.tau_erase_d2d_sigma * _trunc_std_normal(rng))
    g_on_dev = params.g_on_median * math.exp(params.g_on_dispersion * _trunc_std_normal(rng))
    return DeviceState(
        phase=DevicePhase.PRISTINE,
        g_anchor=params.g_pristine,
        t_anchor_ns=0,
        amp_short=0.0,
        amp_long=0.0,
        eta_erase=eta_erase,
        g_on_dev=g_on_dev,
        stream_id=stream_id,
        rng_cursor=1,
    )


def conductance_at(state: DeviceState, t_ns: int, params: DeviceParams) -> float:
    """True conductance (uS) at simulated time t_ns, relaxation included.

    G(t) = g_anchor
         + amp_short * (1 - exp(-(t - t_anchor)/tau_short))
         + amp_long  * log10(1 + (t - t_anchor)/tau_long)

    clamped at zero. Raises TimeBeforeAnchor for t before the last
    programming pulse and NotFormed for a pristine device.
    """
    if state.phase is not DevicePhase.FORMED:
        raise NotFormed("pristine device has no programmed conductance")
    if t_ns < state.t_anchor_ns:
        raise TimeBeforeAnchor(
            f"t={t_ns} ns precedes anchor {state.t_anchor_ns} ns"
        )
    dt_s = (t_ns - state.t_anchor_ns) / NS_PER_S
    g = state.g_anchor
    if state.amp_short != 0.0:
        g += state.amp_short * (1.0 - math.exp(-dt_s / params.relax_tau_short))
    if state.amp_long != 0.0:
        g += state.amp_long * math.log10(1.0 + dt_s / params.relax_tau_long)
    return max(g, 0.0)


def form(state: DeviceState, pulse: PulseSpec, params: DeviceParams, t_ns: int) -> DeviceState:
    """Forming pulse: pristine -> formed low-resistance state."""
    if pulse.kind is not PulseKind.FORM:
        raise WrongPulseKind(f"form() got a {pulse.kind.value} pulse")
    if state.phase is DevicePhase.FORMED:
        raise AlreadyFormed("device is already formed")
    rng = _event_rng(params, state.stream_id, state.rng_cursor)
    median = FORMING_FACTOR * state.g_on_dev
    g_new = median * math.exp(params.g_on_dispersion * _trunc_std_normal(rng))
    amp_short, amp_long = _relax_amps(rng, g_new, params)
    return dataclasses.replace(
        state,
        phase=DevicePhase.FORMED,
        g_anchor=g_new,
        t_anchor_ns=t_ns,
        amp_short=amp_short,
        amp_long=amp_long,
        rng_cursor=state.rng_cursor + 1,
    )


def write(state: DeviceState, pulse: PulseSpec, params: DeviceParams, t_ns: int) -> DeviceState:
    """Full SET pulse. Post-write conductance is independent of the prior state."""
    if pulse.kind is not PulseKind.WRITE:
        raise WrongPulseKind(f"write() got a {pulse.kind.value} pulse")
    if state.phase is not DevicePhase.FORMED:
        raise NotFormed("write requires a formed device")
    if pulse.width_ns != WRITE_PULSE_NS:
        raise BadPulseWidth(
            f"write width is fixed at {WRITE_PULSE_NS} ns, got {pulse.width_ns}"
        )
    rng = _event_rng(params, state.stream_id, state.rng_cursor)
    g_new = state.g_on_dev * math.exp(params.g_on_dispersion * _trunc_std_normal(rng))
    amp_short, amp_long = _relax_amps(rng, g_new, params)
    return dataclasses.replace(
        state,
        g_anchor=g_new,
        t_anchor_ns=t_ns,
        amp_short=amp_short,
        amp_long=amp_long,
        rng_cursor=state.rng_cursor + 1,
    )


def erase(state: DeviceState, pulse: PulseSpec, params: DeviceParams, t_ns: int) -> DeviceState:
    """Width-modulated RESET pulse acting on the current (drifted) conductance.

    The expectation decays toward g_floor with the width as the dose;
    the realized value carries multiplicative noise truncated so the
    result never drops below half the floor. Individual pulses may move
    the conductance up even though the expectation cannot.
    """
    if pulse.kind is not PulseKind.ERASE:
        raise WrongPulseKind(f"erase() got a {pulse.kind.value} pulse")
    if state.phase is not DevicePhase.FORMED:
        raise NotFormed("erase requires a formed device")
    if pulse.width_ns <= 0 or pulse.width_ns % ERASE_STEP_NS != 0:
        raise BadPulseWidth(
            f"erase width must be a positive multiple of {ERASE_STEP_NS} ns, got {pulse.width_ns}"
        )
    g_pre = conductance_at(state, t_ns, params)
    decay = math.exp(-(pulse.width_ns * state.eta_erase) / params.tau_erase_median)
    expected = params.g_floor + (g_pre - params.g_floor) * decay
    rng = _event_rng(params, state.stream_id, state.rng_cursor)
    eps = params.erase_noise_frac * _trunc_std_normal(rng)
    g_new = max(expected * (1.0 + eps), 0.5 * params.g_floor)
    amp_short, amp_long = _relax_amps(rng, g_new, params)
    return dataclasses.replace(
        state,
        g_anchor=g_new,
        t_anchor_ns=t_ns,
        amp_short=amp_short,
        amp_long=amp_long,
        rng_cursor=state.rng_cursor + 1,
    )


def sample_read(
    state: DeviceState,
    t_ns: int,
    params: DeviceParams,
    sense: "SensePath | None" = None,
    v_bias: float = READ_BIAS_V,
) -> tuple[float, DeviceState]:
    """Non-destructive read: true conductance, read noise, then the sense path.

    Returns (measured conductance uS, new state). The state changes only
    by one rng cursor tick; anchor and amplitudes are untouched. With
    sense=None the noisy conductance is returned unquantized.
    """
    g_true = conductance_at(state, t_ns, params)
    rng = _event_rng(params, state.stream_id, state.rng_cursor)
    nu = params.read_noise_frac * _trunc_std_normal(rng)
    g_noisy = max(g_true * (1.0 + nu), 0.0)
    if sense is not None:
        g_meas = sense.measure(g_noisy, v_bias)[0]
    else:
        g_meas = g_noisy
    return g_meas, dataclasses.replace(state, rng_cursor=state.rng_cursor + 1)
