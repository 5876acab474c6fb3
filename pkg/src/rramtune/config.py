"""Run configuration: a strict flat key-value text format.

One `key = value` per line, `#` comments, blank lines ignored. Keys are
dotted paths (`device.g_floor = 3.0`); every key has a typed entry in
the registry below, unknown and duplicate keys are rejected at parse
time with the offending line number, and a parsed config always carries
every key (defaults filled in), so emit -> parse round-trips exactly.

Units follow the model modules: conductances uS, tau_erase_median ns,
relaxation taus and delta_t seconds, timing entries integer ns.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .crossbar import LineTriple, OpRow, ProtocolTable, SensePath, TimingModel
from .device import NS_PER_S, DeviceParams
from .errors import ParseError, ValidationError
from .experiment import ExperimentConfig
from .programming import (
    IntervalScheme,
    PolicyVariant,
    ProgramPolicy,
    TargetInterval,
    assign_intervals,
)

_DEV = DeviceParams()
_SENSE = SensePath()
_TIMING = TimingModel()
_PROTO = ProtocolTable()

# key -> (type tag, default). Tags: f float, i int, b bool, s string,
# fl float list, il int list.
_REGISTRY: dict[str, tuple[str, object]] = {
    "device.g_floor": ("f", _DEV.g_floor),
    "device.g_on_median": ("f", _DEV.g_on_median),
    "device.g_on_dispersion": ("f", _DEV.g_on_dispersion),
    "device.tau_erase_median": ("f", _DEV.tau_erase_median),
    "device.tau_erase_d2d_sigma": ("f", _DEV.tau_erase_d2d_sigma),
    "device.erase_noise_frac": ("f", _DEV.erase_noise_frac),
    "device.relax_tau_short": ("f", _DEV.relax_tau_short),
    "device.relax_sigma_short": ("f", _DEV.relax_sigma_short),
    "device.relax_sigma_long": ("f", _DEV.relax_sigma_long),
    "device.relax_tau_long": ("f", _DEV.relax_tau_long),
    "device.read_noise_frac": ("f", _DEV.read_noise_frac),
    "device.g_pristine": ("f", _DEV.g_pristine),
    "device.master_seed": ("i", _DEV.master_seed),
    "sense.r_sense": ("f", _SENSE.r_sense),
    "sense.adc_bits": ("i", _SENSE.adc_bits),
    "sense.adc_vref": ("f", _SENSE.adc_vref),
    "sense.opamp_ideal": ("b", _SENSE.opamp_ideal),
    "sense.ideal_adc": ("b", _SENSE.ideal_adc),
    "timing.iteration_overhead_ns": ("i", _TIMING.iteration_overhead_ns),
    "timing.read_pulse_ns": ("i", _TIMING.read_pulse_ns),
    "timing.form_pulse_ns": ("i", _TIMING.form_pulse_ns),
    "timing.write_pulse_ns": ("i", _TIMING.write_pulse_ns),
    "intervals.scheme": ("s", "mixed"),
    "intervals.n_states": ("i", 8),
    "intervals.g_min": ("f", 5.0),
    "intervals.g_max": ("f", 101.0),
    "intervals.gap_frac": ("f", 0.25),
    "intervals.sigma_slope": ("f", 0.02),
    "intervals.sigma_offset_us": ("f", 0.3),
    "intervals.w_lin": ("f", 0.5),
    "intervals.w_sig": ("f", 0.5),
    "intervals.min_half_width_us": ("f", 0.1953125),
    "policy.variant": ("s", "naive"),
    "policy.delta_t_s": ("f", 5.0),
    "policy.max_iterations": ("i", 200),
    "policy.cp_floor": ("i", 0),
    "experiment.replicas": ("i", 20),
    "experiment.seed0": ("i", 1),
    "experiment.seeds": ("il", []),
    "experiment.checkpoints_s": ("fl", [0.0, 5.0, 1000.0]),
    "experiment.ksigma_k": ("f", 1.0),
    "experiment.workers": ("i", 1),
    "output.dir": ("s", ""),
}

# Protocol voltages are overridable; widths are fixed by the reference
# operating point and a config may only restate them verbatim.
for _op, _row in (("form", _PROTO.form), ("write", _PROTO.write), ("erase", _PROTO.erase), ("read", _PROTO.read)):
    for _mode, _t in (("active", _row.active), ("default", _row.default)):
        _REGISTRY[f"protocol.{_op}.{_mode}.v_wl"] = ("f", _t.v_wl)
        _REGISTRY[f"protocol.{_op}.{_mode}.v_sl"] = ("f", _t.v_sl)
        _REGISTRY[f"protocol.{_op}.{_mode}.v_bl"] = ("f", _t.v_bl)
    if _row.width_ns is not None:
        _REGISTRY[f"protocol.{_op}.width_ns"] = ("i", _row.width_ns)
_REGISTRY["protocol.standby.v_wl"] = ("f", _PROTO.standby.v_wl)
_REGISTRY["protocol.standby.v_sl"] = ("f", _PROTO.standby.v_sl)
_REGISTRY["protocol.standby.v_bl"] = ("f", _PROTO.standby.v_bl)
_REGISTRY["protocol.vdd"] = ("f", _PROTO.vdd)
_REGISTRY["protocol.form_compliance_ua"] = ("f", _PROTO.form_compliance_ua)
_REGISTRY["protocol.write_compliance_ua"] = ("f", _PROTO.write_compliance_ua)

_FIXED_WIDTHS = {
    "protocol.form.width_ns": _PROTO.form.width_ns,
    "protocol.write.width_ns": _PROTO.write.width_ns,
    "protocol.read.width_ns": _PROTO.read.width_ns,
}


@dataclass
class RunConfig:
    """Fully-resolved configuration: every registry key has a value."""

    values: dict

    def __getitem__(self, key: str):
        return self.values[key]

    def device_params(self) -> DeviceParams:
        v = self.values
        return DeviceParams(
            g_floor=v["device.g_floor"],
            g_on_median=v["device.g_on_median"],
            g_on_dispersion=v["device.g_on_dispersion"],
            tau_erase_median=v["device.tau_erase_median"],
            tau_erase_d2d_sigma=v["device.tau_erase_d2d_sigma"],
            erase_noise_frac=v["device.erase_noise_frac"],
            relax_tau_short=v["device.relax_tau_short"],
            relax_sigma_short=v["device.relax_sigma_short"],
            relax_sigma_long=v["device.relax_sigma_long"],
            relax_tau_long=v["device.relax_tau_long"],
            read_noise_frac=v["device.read_noise_frac"],
            g_pristine=v["device.g_pristine"],
            master_seed=v["device.master_seed"],
        )

    def sense(self) -> SensePath:
        v = self.values
        return SensePath(
            r_sense=v["sense.r_sense"],
            adc_bits=v["sense.adc_bits"],
            adc_vref=v["sense.adc_vref"],
            opamp_ideal=v["sense.opamp_ideal"],
            ideal_adc=v["sense.ideal_adc"],
        )

    def timing(self) -> TimingModel:
        v = self.values
        return TimingModel(
            iteration_overhead_ns=v["timing.iteration_overhead_ns"],
            read_pulse_ns=v["timing.read_pulse_ns"],
            form_pulse_ns=v["timing.form_pulse_ns"],
            write_pulse_ns=v["timing.write_pulse_ns"],
        )

    def protocol(self) -> ProtocolTable:
        v = self.values

        def triple(prefix: str) -> LineTriple:
            return LineTriple(v[f"{prefix}.v_wl"], v[f"{prefix}.v_sl"], v[f"{prefix}.v_bl"])

        return ProtocolTable(
            form=OpRow(triple("protocol.form.active"), triple("protocol.form.default"), v["protocol.form.width_ns"]),
            write=OpRow(triple("protocol.write.active"), triple("protocol.write.default"), v["protocol.write.width_ns"]),
            erase=OpRow(triple("protocol.erase.active"), triple("protocol.erase.default"), None),
            read=OpRow(triple("protocol.read.active"), triple("protocol.read.default"), v["protocol.read.width_ns"]),
            standby=triple("protocol.standby"),
            vdd=v["protocol.vdd"],
            form_compliance_ua=v["protocol.form_compliance_ua"],
            write_compliance_ua=v["protocol.write_compliance_ua"],
        )

    def intervals(self) -> list[TargetInterval]:
        v = self.values
        scheme = _parse_choice("intervals.scheme", v["intervals.scheme"], IntervalScheme)
        g_floor = v["device.g_floor"]
        slope = v["intervals.sigma_slope"]
        offset = v["intervals.sigma_offset_us"]

        def sigma_model(g: float) -> float:
            return slope * max(g - g_floor, 0.0) + offset

        return assign_intervals(
            scheme,
            v["intervals.n_states"],
            (v["intervals.g_min"], v["intervals.g_max"]),
            sigma_model=sigma_model,
            gap_frac=v["intervals.gap_frac"],
            min_half_width=v["intervals.min_half_width_us"],
            weights=(v["intervals.w_lin"], v["intervals.w_sig"]),
        )

    def policy(self, variant: str | None = None) -> ProgramPolicy:
        v = self.values
        var = _parse_choice("policy.variant", variant or v["policy.variant"], PolicyVariant)
        return ProgramPolicy(
            variant=var,
            delta_t_ns=int(round(v["policy.delta_t_s"] * NS_PER_S)),
            max_iterations=v["policy.max_iterations"],
            cp_floor=v["policy.cp_floor"],
        )

    def seeds(self) -> list[int]:
        v = self.values
        if v["experiment.seeds"]:
            return list(v["experiment.seeds"])
        return list(range(v["experiment.seed0"], v["experiment.seed0"] + v["experiment.replicas"]))

    def experiment_config(self) -> ExperimentConfig:
        v = self.values
        base = self.policy("naive")
        policies = (
            dataclasses.replace(base, variant=PolicyVariant.NAIVE),
            dataclasses.replace(base, variant=PolicyVariant.RELAX_AWARE),
        )
        return ExperimentConfig(
            intervals=tuple(self.intervals()),
            device_params=self.device_params(),
            protocol=self.protocol(),
            sense=self.sense(),
            timing=self.timing(),
            policies=policies,
            seeds=tuple(self.seeds()),
            checkpoints_s=tuple(v["experiment.checkpoints_s"]),
            ksigma_k=v["experiment.ksigma_k"],
            workers=v["experiment.workers"],
        )


def _parse_choice(key: str, raw: str, enum_cls):
    for member in enum_cls:
        if member.value == raw:
            return member
    choices = ", ".join(m.value for m in enum_cls)
    raise ValidationError(f"{key}: unknown choice {raw!r} (expected one of: {choices})")


def _parse_value(key: str, tag: str, raw: str, line_no: int):
    raw = raw.strip()
    try:
        if tag == "f":
            return float(raw)
        if tag == "i":
            return int(raw)
        if tag == "b":
            if raw in ("true", "false"):
                return raw == "true"
            raise ValueError(raw)
        if tag == "s":
            return raw
        if tag == "il":
            return [int(p) for p in raw.split(",") if p.strip() != ""]
        if tag == "fl":
            return [float(p) for p in raw.split(",") if p.strip() != ""]
    except ValueError:
        raise ParseError(
            f"line {line_no}: cannot parse value {raw!r} for key {key!r}", line=line_no, key=key
        ) from None
    raise AssertionError(f"unknown registry tag {tag}")


def parse_config(text: str) -> RunConfig:
    """Parse config text. Unknown keys, duplicates and bad literals are errors."""
    values: dict = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ParseError(f"line {line_no}: expected 'key = value'", line=line_no)
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _REGISTRY:
            raise ParseError(f"line {line_no}: unknown key {key!r}", line=line_no, key=key)
        if key in values:
            raise ParseError(f"line {line_no}: duplicate key {key!r}", line=line_no, key=key)
        values[key] = _parse_value(key, _REGISTRY[key][0], raw, line_no)
    for key, (_, default) in _REGISTRY.items():
        values.setdefault(key, list(default) if isinstance(default, list) else default)
    _validate(values)
    return RunConfig(values=values)


def _validate(values: dict) -> None:
    for key, fixed in _FIXED_WIDTHS.items():
        if values[key] != fixed:
            raise ValidationError(
                f"{key} is fixed at {fixed} ns by the line protocol; got {values[key]}"
            )
    if values["experiment.replicas"] < 1:
        raise ValidationError("experiment.replicas must be >= 1")
    if values["policy.delta_t_s"] < 0:
        raise ValidationError("policy.delta_t_s must be >= 0")
    if values["intervals.n_states"] < 1:
        raise ValidationError("intervals.n_states must be >= 1")
    _parse_choice("intervals.scheme", values["intervals.scheme"], IntervalScheme)
    _parse_choice("policy.variant", values["policy.variant"], PolicyVariant)


def _format_value(tag: str, value) -> str:
    if tag == "f":
        return repr(float(value))
    if tag == "i":
        return str(int(value))
    if tag == "b":
        return "true" if value else "false"
    if tag == "s":
        return str(value)
    if tag == "il":
        return ",".join(str(int(x)) for x in value)
    if tag == "fl":
        return ",".join(repr(float(x)) for x in value)
    raise AssertionError(f"unknown registry tag {tag}")


def emit_config(cfg: RunConfig) -> str:
    """Render a config as text. parse_config(emit_config(c)) == c exactly."""
    lines = []
    for key in sorted(_REGISTRY):
        tag = _REGISTRY[key][0]
        lines.append(f"{key} = {_format_value(tag, cfg.values[key])}")
    return "\n".join(lines) + "\n"


def default_config() -> RunConfig:
    return parse_config("")


def config_echo(exp: ExperimentConfig) -> dict:
    """Flat, JSON-safe view of a resolved experiment config."""
    out: dict = {}
    for f in dataclasses.fields(DeviceParams):
        out[f"device.{f.name}"] = getattr(exp.device_params, f.name)
    for f in dataclasses.fields(SensePath):
        out[f"sense.{f.name}"] = getattr(exp.sense, f.name)
    for f in dataclasses.fields(TimingModel):
        out[f"timing.{f.name}"] = getattr(exp.timing, f.name)
    out["protocol"] = exp.protocol.to_dict()
    # The worker count is an execution detail with no effect on any
    # result, so it is deliberately absent: reports from runs that differ
    # only in thread count must be byte-identical.
    out["experiment.seeds"] = list(exp.seeds)
    out["experiment.checkpoints_s"] = list(exp.checkpoints_s)
    out["experiment.ksigma_k"] = exp.ksigma_k
    out["policies"] = [
        {
            "variant": p.variant.value,
            "delta_t_ns": p.delta_t_ns,
            "max_iterations": p.max_iterations,
            "cp_floor": p.cp_floor,
        }
        for p in exp.policies
    ]
    out["intervals"] = [
        {"n": iv.n, "g_low_us": iv.g_low, "g_high_us": iv.g_high} for iv in exp.intervals
    ]
    return out
