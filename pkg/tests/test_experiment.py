"""Separability criteria, retention sampling, and the campaign harness."""

import dataclasses
import json
import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rramtune.crossbar import SensePath, TimingModel, new_crossbar
from rramtune.device import NS_PER_S, DeviceParams, PulseKind
from rramtune.errors import InsufficientSamples, InvalidConfig, NegativeDt
from rramtune.experiment import (
    ExperimentConfig,
    HardGap,
    KSigma,
    checkpoint_label,
    retention_curve,
    run_experiment,
    separability,
)
from rramtune.programming import PolicyVariant, ProgramPolicy, TargetInterval

from conftest import QUIET


class TestCriteria:
    def test_hard_gap(self):
        crit = HardGap()
        assert crit.distinguishable([1.0, 2.0, 3.0], [3.5, 4.0])
        assert not crit.distinguishable([1.0, 4.0], [3.9, 5.0])
        # Touching ranges do not separate.
        assert not crit.distinguishable([1.0, 3.0], [3.0, 5.0])

    def test_k_sigma_hand_example(self):
        # lo = [0,0,2,2]: mean 1, sample std 2/sqrt(3); hi mirrors at mean 5.
        # Gap 4 vs k * 2 * (2/sqrt(3)): threshold k = sqrt(3) ~ 1.732.
        lo, hi = [0.0, 0.0, 2.0, 2.0], [4.0, 4.0, 6.0, 6.0]
        assert KSigma(1.0).distinguishable(lo, hi)
        assert KSigma(1.7).distinguishable(lo, hi)
        assert not KSigma(1.8).distinguishable(lo, hi)
        assert not KSigma(2.0).distinguishable(lo, hi)

    def test_k_sigma_uses_sample_std(self):
        # With population std (ddof=0) the sums would be 2.0 < 2.5 and this
        # pair would separate; the sample-std sum 2*sqrt(2) > 2.5 must not.
        assert not KSigma(1.0).distinguishable([0.0, 2.0], [2.5, 4.5])

    def test_k_sigma_validation(self):
        with pytest.raises(InvalidConfig):
            KSigma(0.0)
        with pytest.raises(InvalidConfig):
            KSigma(-1.0)


def longest_run_oracle(samples, crit):
    flags = [crit.distinguishable(a, b) for a, b in zip(samples, samples[1:])]
    best = run = 1
    for f in flags:
        run = run + 1 if f else 1
        best = max(best, run)
    return best


class TestSeparability:
    def test_fully_separated(self):
        states = [[float(10 * i + j) for j in range(8)] for i in range(4)]
        assert separability(states, HardGap()) == 4

    def test_broken_middle_link(self):
        # Levels 1 and 2 overlap; the longest clean run is a pair.
        states = [
            [0.0 + 0.1 * j for j in range(8)],
            [10.0 + 0.1 * j for j in range(8)],
            [9.5 + 0.1 * j for j in range(8)],
            [30.0 + 0.1 * j for j in range(8)],
        ]
        assert separability(states, HardGap()) == 2

    def test_no_link_at_all(self):
        states = [[5.0 + 0.01 * j for j in range(8)] for _ in range(3)]
        assert separability(states, HardGap()) == 1

    def test_insufficient_samples(self):
        with pytest.raises(InsufficientSamples):
            separability([[1.0] * 8], HardGap())
        with pytest.raises(InsufficientSamples):
            separability([[1.0] * 8, [2.0] * 7], HardGap())

    def test_matches_brute_force_on_random_data(self):
        rng = random.Random(2024)
        for _ in range(60):
            n_states = rng.randint(2, 6)
            states = [
                sorted(rng.uniform(0, 20) for _ in range(8)) for _ in range(n_states)
            ]
            states.sort(key=lambda s: sum(s))
            for crit in (HardGap(), KSigma(1.0)):
                assert separability(states, crit) == longest_run_oracle(states, crit)

    @settings(max_examples=50, deadline=None)
    @given(
        st.lists(
            st.lists(
                st.floats(min_value=0.0, max_value=50.0, allow_nan=False),
                min_size=8,
                max_size=10,
            ),
            min_size=2,
            max_size=6,
        )
    )
    def test_result_is_a_valid_run_length(self, states):
        n = separability(states, HardGap())
        assert 1 <= n <= len(states)
        assert n == longest_run_oracle(states, HardGap())


class TestCheckpointLabel:
    def test_labels(self):
        assert checkpoint_label(1000.0) == "1000"
        assert checkpoint_label(0.0) == "0"
        assert checkpoint_label(5) == "5"
        assert checkpoint_label(2.5) == "2.5"


class TestRetentionCurve:
    def test_quiet_curve_is_exact_and_nondestructive(self):
        cb = new_crossbar(QUIET, sense=SensePath(ideal_adc=True), log_ops=False)
        cb.form_all()
        # Spread a few distinct anchors with erases of increasing width.
        for col in range(4):
            cb.apply(PulseKind.ERASE, 0, col, cp=2 * col)
        before = cb.devices
        t0 = cb.clock_ns
        cells = [(0, c) for c in range(4)]
        times = [t0, t0 + 5 * NS_PER_S, t0 + 1000 * NS_PER_S]
        points = retention_curve(cb, cells, times)
        assert len(points) == len(times) * len(cells)
        assert cb.clock_ns == times[-1]
        # Zero relaxation amplitudes: every sample equals the anchor value.
        by_cell = {}
        for p in points:
            by_cell.setdefault((p.row, p.col), []).append(p.g_us)
        for (r, c), gs in by_cell.items():
            anchor = before[r * 8 + c].g_anchor
            assert all(g == pytest.approx(anchor, abs=1e-12) for g in gs)
        # Anchors are untouched; only read cursors moved.
        for prev, cur in zip(before, cb.devices):
            assert cur.g_anchor == prev.g_anchor
            assert cur.t_anchor_ns == prev.t_anchor_ns

    def test_noisy_samples_spread_but_leave_state_alone(self):
        cb = new_crossbar(DeviceParams(master_seed=5), log_ops=False)
        cb.form_all()
        t0 = cb.clock_ns
        before = cb.devices
        points = retention_curve(cb, [(3, 3)], [t0 + NS_PER_S * k for k in range(6)])
        gs = [p.g_us for p in points]
        assert len(set(gs)) > 1
        assert cb.devices[3 * 8 + 3].g_anchor == before[3 * 8 + 3].g_anchor

    def test_past_time_rejected(self):
        cb = new_crossbar(QUIET, log_ops=False)
        cb.form_all()
        t0 = cb.clock_ns
        with pytest.raises(NegativeDt):
            retention_curve(cb, [(0, 0)], [t0 + 10, t0 + 5])


TINY_INTERVALS = (TargetInterval(0, 20.0, 30.0), TargetInterval(1, 60.0, 80.0))


def tiny_config(**over):
    kwargs = dict(
        intervals=TINY_INTERVALS,
        seeds=(7, 11),
        checkpoints_s=(0.0, 1000.0),
        workers=1,
    )
    kwargs.update(over)
    return ExperimentConfig(**kwargs)


class TestExperimentConfig:
    def test_defaults_validate(self):
        cfg = tiny_config()
        assert cfg.ksigma_k == 1.0
        assert [p.variant for p in cfg.policies] == [
            PolicyVariant.NAIVE,
            PolicyVariant.RELAX_AWARE,
        ]

    @pytest.mark.parametrize(
        "over",
        [
            {"intervals": ()},
            {"intervals": (TargetInterval(0, 1.0, 2.0), TargetInterval(0, 3.0, 4.0))},
            {"seeds": ()},
            {"seeds": (3, 3)},
            {"policies": ()},
            {"checkpoints_s": (5.0, 0.0, 1000.0)},
            {"checkpoints_s": (0.0, 5.0)},
            {"workers": 0},
        ],
    )
    def test_bad_configs(self, over):
        with pytest.raises(InvalidConfig):
            tiny_config(**over)


@pytest.fixture(scope="module")
def tiny_report():
    return run_experiment(tiny_config())


class TestRunExperiment:
    def test_deterministic_and_worker_independent(self, tiny_report):
        again = run_experiment(tiny_config())
        threaded = run_experiment(tiny_config(workers=2))
        blob = json.dumps(tiny_report.to_dict(), sort_keys=True)
        assert json.dumps(again.to_dict(), sort_keys=True) == blob
        # The worker count is an execution detail; the serialized report
        # must not depend on it in any way.
        assert json.dumps(threaded.to_dict(), sort_keys=True) == blob

    def test_report_shape(self, tiny_report):
        assert len(tiny_report.policies) == 2
        for pr in tiny_report.policies:
            assert len(pr.state_stats) == 2
            assert len(pr.mean_iterations_by_seed) == 2
            assert all(len(row) == 2 for row in pr.mean_iterations_by_seed)
            for clabel in ("0", "1000"):
                assert set(pr.separability_by_seed[clabel]) == {"hard_gap", "k_sigma"}
                assert len(pr.separability_by_seed[clabel]["k_sigma"]) == 2
        json.dumps(tiny_report.to_dict())  # must be serializable as-is

    def test_samples_store(self, tiny_report):
        for pol in ("naive", "relax-aware"):
            for clabel in ("0", "1000"):
                for n in (0, 1):
                    assert len(tiny_report.samples[(pol, clabel, n)]) == 2 * 64

    def test_state_stats_sane(self, tiny_report):
        for pr in tiny_report.policies:
            for st_, iv in zip(pr.state_stats, TINY_INTERVALS):
                assert st_.n == iv.n
                assert st_.n_devices == 2 * 64
                assert 0 <= st_.n_failed <= st_.n_devices
                assert st_.mean_iterations >= 1.0
                assert 0.0 <= st_.in_interval_fraction_at_1ks <= 1.0
                assert st_.g_std_at_1ks > 0.0
                # Means stay in the neighbourhood of the target window.
                assert iv.g_low - 15.0 < st_.g_mean_at_1ks < iv.g_high + 15.0

    def test_timing_identity(self, tiny_report):
        overhead = tiny_report.config.timing.iteration_overhead_ns
        for pr in tiny_report.policies:
            assert pr.total_clock_ns == (
                pr.pulse_ns + pr.iteration_count * overhead + pr.wait_ns + pr.checkpoint_advance_ns
            )
            assert pr.total_clock_ns == pr.form_ns + pr.program_ns + pr.checkpoint_advance_ns
            if pr.policy.variant is PolicyVariant.NAIVE:
                assert pr.wait_ns == 0

    def test_policy_result_accessor(self, tiny_report):
        assert tiny_report.policy_result(PolicyVariant.NAIVE).policy.variant is PolicyVariant.NAIVE
        naive_only = tiny_config(policies=(ProgramPolicy(PolicyVariant.NAIVE),))
        report = run_experiment(naive_only)
        with pytest.raises(KeyError):
            report.policy_result(PolicyVariant.RELAX_AWARE)

    def test_trace_sink_order_and_coverage(self):
        seen = []
        run_experiment(tiny_config(), trace_sink=lambda seed, n, t: seen.append((seed, n, t)))
        assert len(seen) == 2 * 2 * 2 * 64
        # Seeds in config order, then policies, then states ascending,
        # then devices row-major.
        expected = []
        for seed in (7, 11):
            for variant in (PolicyVariant.NAIVE, PolicyVariant.RELAX_AWARE):
                for n in (0, 1):
                    for r in range(8):
                        for c in range(8):
                            expected.append((seed, variant, n, r, c))
        got = [(seed, t.policy, n, t.row, t.col) for seed, n, t in seen]
        assert got == expected
        assert all(t.level == n for _, n, t in seen)
