"""Behavioral simulator and closed-loop programming controller for 1T1R RRAM crossbars."""

from .crossbar import (
    Crossbar,
    LineTriple,
    OpRow,
    ProtocolTable,
    SensePath,
    TimingModel,
    new_crossbar,
)
from .device import (
    DeviceParams,
    DevicePhase,
    DeviceState,
    PulseKind,
    PulseSpec,
    conductance_at,
    erase,
    form,
    new_device,
    sample_read,
    write,
)
from .errors import RramError
from .experiment import (
    ExperimentConfig,
    ExperimentReport,
    HardGap,
    KSigma,
    StateStats,
    retention_curve,
    run_experiment,
    separability,
)
from .programming import (
    IntervalScheme,
    PolicyVariant,
    ProgramPolicy,
    ProgramTrace,
    TargetInterval,
    assign_intervals,
    program_array,
    program_device,
)

__version__ = "0.1.0"

__all__ = [
    "Crossbar",
    "DeviceParams",
    "DevicePhase",
    "DeviceState",
    "ExperimentConfig",
    "ExperimentReport",
    "HardGap",
    "IntervalScheme",
    "KSigma",
    "LineTriple",
    "OpRow",
    "PolicyVariant",
    "ProgramPolicy",
    "ProgramTrace",
    "ProtocolTable",
    "PulseKind",
    "PulseSpec",
    "RramError",
    "SensePath",
    "StateStats",
    "TargetInterval",
    "TimingModel",
    "assign_intervals",
    "conductance_at",
    "erase",
    "form",
    "new_crossbar",
    "new_device",
    "program_array",
    "program_device",
    "retention_curve",
    "run_experiment",
    "sample_read",
    "separability",
    "write",
    "__version__",
]
