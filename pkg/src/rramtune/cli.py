"""Command line front end.

Subcommands:
  form-check   form a fresh array and dump the formed conductances
  program      program one array and dump the full trace
  retention    program one array, then sample a retention curve
  report       full two-policy campaign: traces, report JSON, histograms
  sweep        repeat `report` over a list of delta_t values

All artifacts are written atomically (temp file, then rename) so a
crashed run never leaves a half-written file. On a package error the
command writes error.json into the output directory and exits nonzero.
Identical config and seeds give byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import os
import sys
import tempfile

from .config import RunConfig, default_config, emit_config, parse_config
from .crossbar import COLS, ROWS, new_crossbar
from .device import NS_PER_S
from .errors import RramError
from .experiment import ExperimentReport, checkpoint_label, retention_curve, run_experiment
from .programming import ProgramTrace, program_array

OUTPUT_ENV = "RRAMTUNE_OUT"

TRACE_COLUMNS = [
    "replica",
    "state",
    "row",
    "col",
    "iteration",
    "op",
    "pulse_width_ns",
    "cp",
    "g_read_uS",
    "waited",
]


def _atomic_write(path: str, data: str) -> None:
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _g_fmt(g: float) -> str:
    # Fixed notation, locale independent; 6 decimals covers the ADC LSB.
    return f"{g:.6f}"


def _trace_rows(replica: int, trace: ProgramTrace, out: list[list]) -> None:
    for rec in trace.records:
        out.append(
            [
                replica,
                trace.level,
                trace.row,
                trace.col,
                rec.iteration,
                rec.op,
                rec.pulse_width_ns,
                rec.cp_after,
                _g_fmt(rec.g_read_us),
                1 if rec.waited else 0,
            ]
        )


def _csv_text(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _report_json(report: ExperimentReport) -> str:
    return json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n"


def _histogram_rows(report: ExperimentReport) -> list[list]:
    # 1 uS integer bins; only occupied bins are emitted.
    rows: list[list] = []
    for pr in report.policies:
        pol = pr.policy.variant.value
        for c_s in report.config.checkpoints_s:
            clabel = checkpoint_label(c_s)
            for iv in sorted(report.config.intervals, key=lambda i: i.n):
                counts: dict[int, int] = {}
                for g in report.samples[(pol, clabel, iv.n)]:
                    b = int(g)  # g >= 0
                    counts[b] = counts.get(b, 0) + 1
                for b in sorted(counts):
                    rows.append([pol, clabel, iv.n, b, b + 1, counts[b]])
    return rows


def _resolve_out(args, cfg: RunConfig) -> str:
    out = args.out or cfg["output.dir"] or os.environ.get(OUTPUT_ENV, "") or "rramtune-out"
    os.makedirs(out, exist_ok=True)
    return out


def _load_config(args) -> RunConfig:
    if args.config:
        with open(args.config, "r") as fh:
            cfg = parse_config(fh.read())
    else:
        cfg = default_config()
    if args.states is not None:
        cfg.values["intervals.n_states"] = args.states
    if args.replicas is not None:
        cfg.values["experiment.replicas"] = args.replicas
        cfg.values["experiment.seeds"] = []
    if args.seed is not None:
        cfg.values["device.master_seed"] = args.seed
        cfg.values["experiment.seed0"] = args.seed
        cfg.values["experiment.seeds"] = []
    if getattr(args, "policy", None):
        cfg.values["policy.variant"] = args.policy
    return cfg


def _striped_assignment(n_states: int) -> list[list[int]]:
    return [[row % n_states] * COLS for row in range(ROWS)]


def _single_array(cfg: RunConfig):
    cb = new_crossbar(cfg.device_params(), cfg.protocol(), cfg.sense(), cfg.timing(), log_ops=False)
    cb.form_all()
    return cb


def cmd_form_check(args) -> int:
    cfg = _load_config(args)
    out = _resolve_out(args, cfg)
    cb = _single_array(cfg)
    rows = []
    gs = []
    for r in range(ROWS):
        for c in range(COLS):
            g = cb.conductance(r, c)
            gs.append(g)
            rows.append([r, c, _g_fmt(g)])
    _atomic_write(os.path.join(out, "formed.csv"), _csv_text(["row", "col", "g_uS"], rows))
    mean = sum(gs) / len(gs)
    print(f"formed {len(gs)} devices: mean {mean:.2f} uS, "
          f"min {min(gs):.2f}, max {max(gs):.2f} -> {out}/formed.csv")
    return 0


def _program_once(cfg: RunConfig, uniform_state: int | None):
    intervals = cfg.intervals()
    policy = cfg.policy()
    cb = _single_array(cfg)
    assignment = (
        _striped_assignment(len(intervals))
        if uniform_state is None
        else [[uniform_state] * COLS for _ in range(ROWS)]
    )
    traces = program_array(cb, assignment, intervals, policy)
    return cb, traces


def cmd_program(args) -> int:
    cfg = _load_config(args)
    out = _resolve_out(args, cfg)
    cb, traces = _program_once(cfg, args.state)
    rows: list[list] = []
    for t in traces:
        _trace_rows(cfg["device.master_seed"], t, rows)
    _atomic_write(os.path.join(out, "traces.csv"), _csv_text(TRACE_COLUMNS, rows))
    converged = sum(1 for t in traces if t.converged)
    it = sum(t.n_iterations for t in traces) / len(traces)
    print(f"programmed {len(traces)} devices ({converged} converged, "
          f"mean {it:.1f} iterations) -> {out}/traces.csv")
    return 0


def cmd_retention(args) -> int:
    cfg = _load_config(args)
    out = _resolve_out(args, cfg)
    cb, _ = _program_once(cfg, args.state)
    t0 = cb.clock_ns
    times = [t0 + int(round(c * NS_PER_S)) for c in cfg["experiment.checkpoints_s"]]
    cells = [(r, c) for r in range(ROWS) for c in range(COLS)]
    points = retention_curve(cb, cells, times)
    rows = [[p.t_ns - t0, p.row, p.col, _g_fmt(p.g_us)] for p in points]
    _atomic_write(
        os.path.join(out, "retention.csv"),
        _csv_text(["t_after_program_ns", "row", "col", "g_uS"], rows),
    )
    print(f"sampled {len(points)} points at {len(times)} checkpoints -> {out}/retention.csv")
    return 0


def _run_report(cfg: RunConfig):
    rows: list[list] = []

    def sink(seed: int, state: int, trace: ProgramTrace) -> None:
        _trace_rows(seed, trace, rows)

    report = run_experiment(cfg.experiment_config(), trace_sink=sink)
    return report, rows


def cmd_report(args) -> int:
    cfg = _load_config(args)
    out = _resolve_out(args, cfg)
    report, rows = _run_report(cfg)
    _atomic_write(os.path.join(out, "traces.csv"), _csv_text(TRACE_COLUMNS, rows))
    _atomic_write(os.path.join(out, "report.json"), _report_json(report))
    _atomic_write(
        os.path.join(out, "histograms.csv"),
        _csv_text(
            ["policy", "checkpoint_s", "state", "bin_low_uS", "bin_high_uS", "count"],
            _histogram_rows(report),
        ),
    )
    for pr in report.policies:
        label = checkpoint_label(1000.0)
        sep = pr.separability_by_seed[label]["k_sigma"]
        print(f"{pr.policy.variant.value}: distinguishable levels at 1 ks "
              f"(k-sigma, per seed) = {sep}")
    print(f"artifacts -> {out}/traces.csv, report.json, histograms.csv")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    out = _resolve_out(args, cfg)
    dts = [float(x) for x in args.delta_t.split(",") if x.strip() != ""]
    if not dts:
        raise RramError("sweep needs at least one delta_t value")
    index = []
    for dt in sorted(dts):
        sub_cfg = RunConfig(values=dict(cfg.values))
        sub_cfg.values["policy.delta_t_s"] = dt
        label = f"dt_{dt:g}s"
        sub_dir = os.path.join(out, label)
        os.makedirs(sub_dir, exist_ok=True)
        report, rows = _run_report(sub_cfg)
        _atomic_write(os.path.join(sub_dir, "report.json"), _report_json(report))
        entry = {"delta_t_s": dt, "dir": label}
        for pr in report.policies:
            sep = pr.separability_by_seed[checkpoint_label(1000.0)]["k_sigma"]
            entry[f"levels_1ks_{pr.policy.variant.value}"] = sorted(sep)[len(sep) // 2]
        index.append(entry)
        print(f"delta_t={dt:g}s -> {sub_dir}/report.json")
    _atomic_write(
        os.path.join(out, "sweep.json"),
        json.dumps({"sweep": index}, sort_keys=True, indent=2) + "\n",
    )
    return 0


def cmd_show_config(args) -> int:
    cfg = _load_config(args)
    sys.stdout.write(emit_config(cfg))
    return 0


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="rramtune",
        description="Closed-loop multi-level programming simulator for 1T1R RRAM crossbars",
    )
    p.add_argument("--config", help="config file (key = value lines)")
    p.add_argument("--out", help=f"output directory (default: config, then ${OUTPUT_ENV})")
    p.add_argument("--seed", type=int, help="override the master seed / first replica seed")
    p.add_argument("--states", type=int, help="override the number of target levels")
    p.add_argument("--replicas", type=int, help="override the replica count")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("form-check", help="form an array and dump formed conductances")
    sp.set_defaults(func=cmd_form_check)

    sp = sub.add_parser("program", help="program one array and dump the trace")
    sp.add_argument("--policy", choices=["naive", "relax-aware"])
    sp.add_argument("--state", type=int, help="program every device to this level (default: striped rows)")
    sp.set_defaults(func=cmd_program)

    sp = sub.add_parser("retention", help="program one array, then sample retention checkpoints")
    sp.add_argument("--policy", choices=["naive", "relax-aware"])
    sp.add_argument("--state", type=int)
    sp.set_defaults(func=cmd_retention)

    sp = sub.add_parser("report", help="full two-policy campaign with all artifacts")
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("sweep", help="repeat the campaign over delta_t values")
    sp.add_argument("--delta-t", default="0,1,5,10", help="comma list of waits in seconds")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("show-config", help="print the fully-resolved config")
    sp.set_defaults(func=cmd_show_config)

    return p


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except RramError as exc:
        payload = {"error": type(exc).__name__, "message": str(exc)}
        try:
            out = args.out or os.environ.get(OUTPUT_ENV, "") or "rramtune-out"
            os.makedirs(out, exist_ok=True)
            _atomic_write(os.path.join(out, "error.json"), json.dumps(payload, sort_keys=True) + "\n")
        except OSError:
            pass
        print(f"error: {payload['error']}: {payload['message']}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
