import math

import pytest

from models.events import EventKind, PatternKind
from models.schemas import AnalysisConfig, ExperimentConfig, SegmentationParams, TraceConfig
from services import analysis
from services.experiment import estimate_time
from services.leakage import address_weight_of, truncate_trace


def _segment(trace, margin=100):
    return analysis.segment(trace, SegmentationParams.from_trace_config(trace.config, margin=margin))


def test_segmentation_recovers_operation_counts(reference_trace):
    subs = _segment(reference_trace)
    assert sum(1 for s in subs if s.label is PatternKind.PD) == 21
    assert sum(1 for s in subs if s.label is PatternKind.PA) == 15
    assert not any(s.partial for s in subs)
    labels = [s.label for s in subs]
    truth = [a.event.pattern for a in reference_trace.annotations if a.event.kind is EventKind.PATTERN_START]
    assert labels == truth


def test_segmented_starts_are_close_to_ground_truth(reference_trace):
    starts = reference_trace.pattern_starts()
    for sub in _segment(reference_trace):
        assert abs(sub.start - starts[(sub.label, sub.ordinal)]) < 100


def test_truncated_capture_has_one_partial_addition(reference_trace):
    subs = _segment(truncate_trace(reference_trace, 0.75))
    complete = [s for s in subs if not s.partial]
    partial = [s for s in subs if s.partial]
    assert sum(1 for s in complete if s.label is PatternKind.PD) == 21
    assert sum(1 for s in complete if s.label is PatternKind.PA) == 14
    assert len(partial) == 1


def test_working_set_drops_doubling_one(reference_trace):
    working = analysis.working_set(_segment(reference_trace), AnalysisConfig())
    assert sum(1 for s in working if s.label is PatternKind.PD) == 20
    assert sum(1 for s in working if s.label is PatternKind.PA) == 15
    assert "Doubling 1" not in {s.name for s in working}


def test_synchronization_residual_lag_within_one_sample(reference_trace):
    cfg = AnalysisConfig()
    working = analysis.working_set(_segment(reference_trace, cfg.max_shift), cfg)
    synced = analysis.synchronize(working, cfg.anchor, cfg.max_shift, cfg.sync_floor)
    assert all(s.synchronized for s in synced)
    lags = analysis.residual_lags(synced, reference_trace)
    assert max(lags.values()) - min(lags.values()) <= 1


def test_jitter_free_ground_truth_subs_need_no_shift(runner):
    config = ExperimentConfig(scalar="11011", trace=TraceConfig.desk(jitter="none", noise_sigma=0.0),
                              target_snr=None)
    trace = runner.build_trace(config)
    subs = analysis.subtraces_from_annotations(trace)
    synced = analysis.synchronize(analysis.exclude_special(subs), (500, 4500), 100)
    assert {s.offset for s in synced} == {0}


def _replicate(runner, seed):
    config = ExperimentConfig(trace=TraceConfig.desk(seed=seed))
    result = runner.run_experiment(config)
    summary = result.summary
    assert (summary.doublings, summary.additions) == (21, 15)
    assert summary.excluded == ["Doubling 1"]
    assert summary.unsynchronizable == []
    width = summary.analysis_range[1] - summary.analysis_range[0]
    assert summary.separated_minmax == []
    assert summary.separated_ci["2"] == []
    assert summary.separated_ci["3"] == []
    assert len(summary.separated_ci["1"]) <= 0.002 * width
    assert summary.verdict == "no complete separation found"
    assert summary.snr == pytest.approx(1.36, rel=0.05)


@pytest.mark.parametrize("seed", [0, 1])
def test_measured_snr_shows_no_separation(runner, seed):
    _replicate(runner, seed)


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(20))
def test_measured_snr_shows_no_separation_over_twenty_seeds(runner, seed):
    _replicate(runner, seed)


def _expected_addressing_indices(trace):
    """Addressing-phase samples of first-block ops whose register usage differs between PD and PA"""
    cfg = trace.config
    first_block = {}
    for pattern, ordinal in ((PatternKind.PD, 2), (PatternKind.PA, 1)):
        start = trace.pattern_starts()[(pattern, ordinal)]
        first_block[pattern] = [
            (a.start - start, a.length, a.event) for a in trace.annotations
            if a.event.kind.is_primitive and a.event.pattern is pattern and a.event.ordinal == ordinal
            and a.event.block == 1
        ]
    expected, starts = set(), {}
    for (offset, length, pd), (_, _, pa) in zip(first_block[PatternKind.PD], first_block[PatternKind.PA]):
        starts[pd.op_index, pd.kind] = offset
        if address_weight_of(pd) != address_weight_of(pa):
            head = max(1, math.ceil(cfg.address_fraction * length))
            expected.update(range(offset, offset + head))
    return expected, starts


def test_address_leakage_positive_control(runner, quiet_config):
    quiet = quiet_config.model_copy(update={"analysis": AnalysisConfig(ground_truth_segmentation=True)})
    trace = runner.build_trace(quiet)
    result = runner.run_analyze(trace, quiet)
    expected, starts = _expected_addressing_indices(trace)

    assert set(result.summary.separated_minmax) == expected
    assert set(result.summary.separated_ci["3"]) == expected
    # second X, second N and second A of the first block
    for op_index, kind in ((4, EventKind.X), (5, EventKind.N), (6, EventKind.A)):
        assert starts[op_index, kind] in expected
    assert result.summary.verdict.startswith("complete separation")


def test_reports_are_reproducible(runner, quiet_config, tmp_path):
    first = runner.write_reports(runner.run_experiment(quiet_config), tmp_path / "a")
    second = runner.write_reports(runner.run_experiment(quiet_config), tmp_path / "b")
    assert first["csv"].read_bytes() == second["csv"].read_bytes()
    assert first["summary"].read_text() == second["summary"].read_text()
    assert '"scalar": "11011"' in first["csv"].read_text().splitlines()[1]


@pytest.mark.parametrize("bits, clock, low, high", [
    (256, 100.0, 74_190_720, 185_476_800),
    (2, 100.0, 4 * 72_736, 10 * 72_736),
])
def test_estimate_time(bits, clock, low, high):
    estimate = estimate_time(bits, clock)
    assert (estimate.min_cycles, estimate.max_cycles) == (low, high)


def test_estimate_time_in_milliseconds():
    estimate = estimate_time(256, 100.0)
    assert round(estimate.min_ms) == 742
    assert round(estimate.max_ms) == 1855
