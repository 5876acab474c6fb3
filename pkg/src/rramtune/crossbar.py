"""8x8 1T1R crossbar: line-voltage protocol, sense path, clock, op log.

The array is driven one cell at a time. Every operation is bracketed by
Stand-by: lines settle to the stand-by levels, the target row/column is
set up with the Active-mode voltages while all other lines hold the
Default-mode levels (half-select safe), the WL pulse fires, and the
array returns to Stand-by. Only the addressed device ever changes.

The simulated clock is integer nanoseconds. Each operation advances it
by exactly its pulse width; controller latency is not a line-level
effect, so the closed-loop programmer accounts for it separately, and
idle retention time is added explicitly with advance_time().
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import device as dev
from .device import DeviceParams, DeviceState, PulseKind, PulseSpec
from .errors import (
    AlreadyFormed,
    IndexOutOfRange,
    InvalidConfig,
    NegativeDt,
    SenseSaturated,
)

ROWS = 8
COLS = 8

# Erase width rule token used wherever the protocol table is serialized.
ERASE_WIDTH_RULE = "CPx10ns"


@dataclass(frozen=True)
class LineTriple:
    """(WL, SL, BL) drive levels in volts."""

    v_wl: float
    v_sl: float
    v_bl: float


@dataclass(frozen=True)
class OpRow:
    """Active-mode and Default-mode drives plus pulse width for one operation.

    width_ns is None for Erase, whose width is CP * 10 ns by rule.
    """

    active: LineTriple
    default: LineTriple
    width_ns: int | None


@dataclass(frozen=True)
class ProtocolTable:
    """Line-voltage table for Form / Write / Erase / Read plus Stand-by.

    Defaults reproduce the measured operating point of the reference
    hardware exactly; tests compare the serialized table bit-for-bit, so
    do not touch the numbers casually.
    """

    form: OpRow = OpRow(LineTriple(1.55, 0.0, 4.8), LineTriple(0.0, 4.8, 2.4), 40_000)
    write: OpRow = OpRow(LineTriple(1.24, 0.0, 2.4), LineTriple(0.0, 2.4, 2.4), 100)
    erase: OpRow = OpRow(LineTriple(4.05, 1.07, 0.0), LineTriple(0.0, 0.0, 2.4), None)
    read: OpRow = OpRow(LineTriple(3.38, 2.1, 2.4), LineTriple(0.0, 2.4, 2.4), 200_000)
    standby: LineTriple = LineTriple(0.0, 2.4, 2.4)
    vdd: float = 4.8
    form_compliance_ua: float = 600.0
    write_compliance_ua: float = 300.0

    def to_dict(self) -> dict:
        def triple(t: LineTriple) -> dict:
            return {"v_wl": t.v_wl, "v_sl": t.v_sl, "v_bl": t.v_bl}

        def op(row: OpRow) -> dict:
            width = ERASE_WIDTH_RULE if row.width_ns is None else row.width_ns
            return {"active": triple(row.active), "default": triple(row.default), "width_ns": width}

        return {
            "form": op(self.form),
            "write": op(self.write),
            "erase": op(self.erase),
            "read": op(self.read),
            "standby": triple(self.standby),
            "vdd": self.vdd,
            "form_compliance_ua": self.form_compliance_ua,
            "write_compliance_ua": self.write_compliance_ua,
        }

    def read_bias_v(self) -> float:
        # Read current flows under V_BL - V_SL of the Active read row.
        return self.read.active.v_bl - self.read.active.v_sl


@dataclass(frozen=True)
class SensePath:
    """Transimpedance sense chain: I_R -> V_R = R_sense * I_R -> ADC.

    The op-amp is ideal (no offset, no finite gain error); ideal_adc
    skips quantization for analysis runs while keeping the saturation
    check. Conductance LSB at defaults:
    (1.2 V / 2^12) / 10 kOhm / 0.3 V = 0.09765625 uS.
    """

    r_sense: float = 10_000.0   # Ohm
    adc_bits: int = 12
    adc_vref: float = 1.2       # V
    opamp_ideal: bool = True
    ideal_adc: bool = False

    def __post_init__(self):
        if not self.r_sense > 0:
            raise InvalidConfig("r_sense must be positive")
        if not 4 <= self.adc_bits <= 24:
            raise InvalidConfig("adc_bits must be in [4, 24]")
        if not self.adc_vref > 0:
            raise InvalidConfig("adc_vref must be positive")
        if not self.opamp_ideal:
            raise InvalidConfig("only the ideal op-amp model is implemented")

    def conductance_lsb(self, v_bias: float) -> float:
        """Smallest resolvable conductance step (uS) at the given read bias."""
        return (self.adc_vref / (1 << self.adc_bits)) / self.r_sense / v_bias * 1e6

    def measure(self, g_us: float, v_bias: float) -> tuple[float, float]:
        """Run one conductance through the sense chain.

        Returns (measured conductance uS, sense voltage V). Raises
        SenseSaturated when V_R would exceed the ADC reference.
        """
        i_a = g_us * 1e-6 * v_bias
        v_r = i_a * self.r_sense
        if v_r > self.adc_vref:
            raise SenseSaturated(
                f"V_R = {v_r:.3f} V exceeds ADC reference {self.adc_vref} V"
            )
        if self.ideal_adc:
            v_q = v_r
        else:
            lsb_v = self.adc_vref / (1 << self.adc_bits)
            v_q = round(v_r / lsb_v) * lsb_v
        g_meas = (v_q / self.r_sense) / v_bias * 1e6
        return g_meas, v_r


@dataclass(frozen=True)
class TimingModel:
    """Pulse durations and controller latency in integer nanoseconds.

    iteration_overhead_ns is the controller cost of one full
    program-and-verify pass (mux switching, sensing, the compare); it is
    charged once per loop iteration and dominates the closed-loop
    walltime. The array itself only ever advances the clock by pulse
    widths.
    """

    iteration_overhead_ns: int = 120_000_000
    read_pulse_ns: int = 200_000
    form_pulse_ns: int = 40_000
    write_pulse_ns: int = 100

    def __post_init__(self):
        for name in ("iteration_overhead_ns", "read_pulse_ns", "form_pulse_ns", "write_pulse_ns"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 0:
                raise InvalidConfig(f"{name} must be a non-negative integer")


@dataclass(frozen=True)
class OpLogEntry:
    phase: str          # "standby" | "setup" | "pulse"
    op: str             # "" for standby entries
    row: int
    col: int
    width_ns: int


@dataclass
class Crossbar:
    """Mutable array state: 64 immutable device snapshots plus clock and log.

    Single-writer: one Crossbar must only ever be driven from one
    thread. Device snapshots are frozen dataclasses, so untouched cells
    are shared structurally between successive states, which is what the
    half-select guarantees lean on.
    """

    params: DeviceParams
    protocol: ProtocolTable
    sense: SensePath
    timing: TimingModel
    devices: tuple[DeviceState, ...]
    clock_ns: int = 0
    mode: str = "standby"
    op_log: list[OpLogEntry] | None = field(default=None, repr=False)

    def _check_index(self, row: int, col: int) -> int:
        if not (0 <= row < ROWS and 0 <= col < COLS):
            raise IndexOutOfRange(f"device ({row},{col}) outside {ROWS}x{COLS} array")
        return row * COLS + col

    def _log(self, phase: str, op: str = "", row: int = -1, col: int = -1, width_ns: int = 0):
        if self.op_log is not None:
            self.op_log.append(OpLogEntry(phase, op, row, col, width_ns))

    def _pulse(self, op_name: str, row: int, col: int, spec: PulseSpec):
        # Stand-by bracket around every pulse: settle, select, fire, settle.
        self._log("standby")
        self.mode = "active"
        self._log("setup", op_name, row, col, 0)
        self._log("pulse", op_name, row, col, spec.width_ns)
        self.mode = "standby"
        self._log("standby")

    def apply(self, op: PulseKind, row: int, col: int, cp: int | None = None) -> None:
        """Fire one Form/Write/Erase pulse at the addressed cell.

        Erase takes the current pulse counter cp; its width is
        max(cp, 1) * 10 ns. The clock advances by exactly the pulse
        width. Exactly one device snapshot is replaced.
        """
        idx = self._check_index(row, col)
        state = self.devices[idx]
        t = self.clock_ns
        if op is PulseKind.FORM:
            spec = PulseSpec(
                PulseKind.FORM,
                self.protocol.form.active.v_wl,
                self.protocol.form.active.v_sl,
                self.protocol.form.active.v_bl,
                self.timing.form_pulse_ns,
                self.protocol.form_compliance_ua,
            )
            new_state = dev.form(state, spec, self.params, t)
        elif op is PulseKind.WRITE:
            spec = PulseSpec(
                PulseKind.WRITE,
                self.protocol.write.active.v_wl,
                self.protocol.write.active.v_sl,
                self.protocol.write.active.v_bl,
                self.timing.write_pulse_ns,
                self.protocol.write_compliance_ua,
            )
            new_state = dev.write(state, spec, self.params, t)
        elif op is PulseKind.ERASE:
            if cp is None:
                raise InvalidConfig("erase requires the current pulse counter cp")
            width = max(cp, 1) * dev.ERASE_STEP_NS
            spec = PulseSpec(
                PulseKind.ERASE,
                self.protocol.erase.active.v_wl,
                self.protocol.erase.active.v_sl,
                self.protocol.erase.active.v_bl,
                width,
            )
            new_state = dev.erase(state, spec, self.params, t)
        else:
            raise InvalidConfig("apply() handles form/write/erase; use read() for reads")
        self._pulse(op.value, row, col, spec)
        devices = list(self.devices)
        devices[idx] = new_state
        self.devices = tuple(devices)
        self.clock_ns += spec.width_ns

    def read(self, row: int, col: int) -> tuple[float, float]:
        """Read the addressed cell through the sense path.

        Returns (measured conductance uS, sense voltage V). The device
        is sampled at the clock value on entry; the clock then advances
        by the read pulse width.
        """
        idx = self._check_index(row, col)
        state = self.devices[idx]
        v_bias = self.protocol.read_bias_v()
        g_noisy, new_state = dev.sample_read(state, self.clock_ns, self.params, sense=None, v_bias=v_bias)
        g_meas, v_r = self.sense.measure(g_noisy, v_bias)
        spec = PulseSpec(
            PulseKind.READ,
            self.protocol.read.active.v_wl,
            self.protocol.read.active.v_sl,
            self.protocol.read.active.v_bl,
            self.timing.read_pulse_ns,
        )
        self._pulse("read", row, col, spec)
        devices = list(self.devices)
        devices[idx] = new_state
        self.devices = tuple(devices)
        self.clock_ns += self.timing.read_pulse_ns
        return g_meas, v_r

    def form_all(self) -> None:
        """Form every cell, row-major. All cells must still be pristine."""
        for state in self.devices:
            if state.phase is not dev.DevicePhase.PRISTINE:
                raise AlreadyFormed("form_all requires an all-pristine array")
        for row in range(ROWS):
            for col in range(COLS):
                self.apply(PulseKind.FORM, row, col)

    def advance_time(self, dt_ns: int) -> None:
        """Let the array sit idle for dt_ns. Relaxation is evaluated lazily."""
        if dt_ns < 0:
            raise NegativeDt(f"dt must be >= 0, got {dt_ns}")
        self.clock_ns += dt_ns

    def conductance(self, row: int, col: int) -> float:
        """True (noise-free, unquantized) conductance of one cell right now."""
        idx = self._check_index(row, col)
        return dev.conductance_at(self.devices[idx], self.clock_ns, self.params)


def new_crossbar(
    params: DeviceParams | None = None,
    protocol: ProtocolTable | None = None,
    sense: SensePath | None = None,
    timing: TimingModel | None = None,
    log_ops: bool = True,
) -> Crossbar:
    """Build a pristine 8x8 array.

    Per-device random streams are keyed by (master_seed, row*8 + col),
    so equal params give an identical array. log_ops=False drops the op
    log for long Monte-Carlo runs; behavior is unchanged.
    """
    params = params if params is not None else DeviceParams()
    protocol = protocol if protocol is not None else ProtocolTable()
    sense = sense if sense is not None else SensePath()
    timing = timing if timing is not None else TimingModel()
    devices = tuple(
        dev.new_device(params, row * COLS + col) for row in range(ROWS) for col in range(COLS)
    )
    return Crossbar(
        params=params,
        protocol=protocol,
        sense=sense,
        timing=timing,
        devices=devices,
        clock_ns=0,
        mode="standby",
        op_log=[] if log_ops else None,
    )
