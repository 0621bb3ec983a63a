"""Automated simple-SCA pipeline.

Segmentation finds the NOP gaps in a trace and cuts it into labeled
doubling/addition sub-traces; synchronization fine-aligns them on an
anchor window; the two distinguishability tests then compare the label
sets sample by sample.
"""
import csv
import io
import json
import logging
from dataclasses import dataclass, field, replace
from enum import IntEnum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from config.settings import settings
from models.events import EventKind, PatternKind
from models.schemas import AnalysisConfig, SegmentationParams
from services.errors import AnalysisError, SegmentationError, SynchronizationError
from services.leakage import Trace

logger = logging.getLogger(__name__)

BLOCKS_TO_LABEL = {4: PatternKind.PD, 6: PatternKind.PA}
BLOCKS_OF = {label: blocks for blocks, label in BLOCKS_TO_LABEL.items()}
LABEL_NAMES = {PatternKind.PD: "Doubling", PatternKind.PA: "Addition"}

Window = Tuple[int, int]


@dataclass
class SubTrace:
    """One point operation cut out of a trace.

    ``samples`` holds the pattern plus ``margin`` samples on either side;
    index 0 of the aligned view is the pattern start shifted by ``offset``.
    Block ranges are relative to the pattern start.
    """
    label: Optional[PatternKind]
    ordinal: int
    start: int
    length: int
    samples: np.ndarray
    margin: int
    blocks: List[Window] = field(default_factory=list)
    offset: int = 0
    partial: bool = False
    correlation: Optional[float] = None
    synchronized: bool = True

    @property
    def name(self) -> str:
        if self.label is None:
            return f"Partial {self.ordinal}"
        return f"{LABEL_NAMES[self.label]} {self.ordinal}"

    def aligned(self, lo: int, hi: int) -> np.ndarray:
        first = self.margin + self.offset + lo
        last = self.margin + self.offset + hi
        if first < 0 or last > self.samples.shape[0] or hi < lo:
            raise AnalysisError(f"Window [{lo}, {hi}) with offset {self.offset} is outside {self.name}")
        return self.samples[first:last]

    def block_length(self, block: int) -> int:
        start, end = self.blocks[block - 1]
        return end - start


def _extract(samples: np.ndarray, start: int, end: int, margin: int) -> np.ndarray:
    lo, hi = start - margin, end + margin
    n = samples.shape[0]
    chunk = samples[max(lo, 0):min(hi, n)].astype(np.float32)
    if lo < 0 or hi > n:
        chunk = np.pad(chunk, (max(0, -lo), max(0, hi - n)), mode="edge")
    return chunk


def smooth(samples: np.ndarray, window: int) -> np.ndarray:
    """Centered moving average; edges are extended with the edge value"""
    if window <= 1:
        return samples.astype(np.float64)
    padded = np.pad(samples.astype(np.float64), (window // 2, window - 1 - window // 2), mode="edge")
    cumulative = np.concatenate(([0.0], np.cumsum(padded)))
    return (cumulative[window:] - cumulative[:-window]) / window


def gap_threshold(smoothed: np.ndarray, params: SegmentationParams) -> float:
    w = params.window
    baseline = smoothed[w:params.prefix_samples - w]
    if baseline.shape[0] < 2:
        raise SegmentationError(f"Noise prefix of {params.prefix_samples} samples is too short to estimate a baseline")
    return float(baseline.mean() + params.gap_sigmas * baseline.std()) + params.threshold_floor


def _runs(mask: np.ndarray) -> List[Window]:
    padded = np.concatenate(([0], mask.astype(np.int8), [0]))
    steps = np.diff(padded)
    return list(zip(np.flatnonzero(steps == 1).tolist(), np.flatnonzero(steps == -1).tolist()))


def _make_subtrace(samples, label, ordinal, blocks, margin, partial) -> SubTrace:
    start, end = blocks[0][0], blocks[-1][1]
    return SubTrace(
        label=label, ordinal=ordinal, start=start, length=end - start,
        samples=_extract(samples, start, end, margin), margin=margin,
        blocks=[(s - start, e - start) for s, e in blocks], partial=partial,
    )


def segment(trace: Union[Trace, np.ndarray], params: SegmentationParams) -> List[SubTrace]:
    """Cut a trace into labeled sub-traces at the NOP gaps.

    Short gaps separate atomic blocks, long gaps separate point
    operations. Four blocks make a doubling, six an addition. A final
    operation without a trailing long gap is returned flagged partial.
    """
    samples = trace.samples if isinstance(trace, Trace) else np.asarray(trace)
    n = samples.shape[0]
    if n == 0:
        raise SegmentationError("Trace is empty")

    w = params.window
    smoothed = smooth(samples, w)
    threshold = gap_threshold(smoothed, params)
    runs = [(s, e) for s, e in _runs(smoothed > threshold) if e - s >= params.min_gap]
    if not runs:
        raise SegmentationError(f"No activity above the gap threshold {threshold:.4g}")

    # Merge activity separated by dips shorter than a gap
    merged = [runs[0]]
    for s, e in runs[1:]:
        if s - merged[-1][1] < params.min_gap:
            merged[-1] = (merged[-1][0], e)
        else:
            merged.append((s, e))
    if len(merged) == 1 and n - merged[0][1] < params.min_gap:
        raise SegmentationError("No NOP gaps found after the noise prefix")

    lead, trail = w - 1 - w // 2, w // 2
    subs: List[SubTrace] = []
    ordinals = {PatternKind.PD: 0, PatternKind.PA: 0}
    pattern: List[Window] = []
    for position, (s, e) in enumerate(merged):
        pattern.append((min(s + lead, e), max(e - trail, s + lead)))
        following = merged[position + 1][0] if position + 1 < len(merged) else n
        gap = following - e
        if gap < params.long_gap:
            if position + 1 < len(merged):
                continue
            partial_blocks = len(pattern)
            label = PatternKind.PA if partial_blocks > BLOCKS_OF[PatternKind.PD] else None
            if partial_blocks > BLOCKS_OF[PatternKind.PA]:
                raise SegmentationError(f"Trailing operation has {partial_blocks} blocks")
            ordinal = ordinals[label] + 1 if label else 1
            if label:
                ordinals[label] = ordinal
            subs.append(_make_subtrace(samples, label, ordinal, pattern, params.margin, partial=True))
            logger.warning(f"Final operation is incomplete ({partial_blocks} blocks captured)")
            break
        label = BLOCKS_TO_LABEL.get(len(pattern))
        if label is None:
            raise SegmentationError(
                f"Operation starting at sample {pattern[0][0]} has {len(pattern)} blocks, expected 4 or 6")
        ordinals[label] += 1
        subs.append(_make_subtrace(samples, label, ordinals[label], pattern, params.margin, partial=False))
        pattern = []

    logger.info(f"Found {ordinals[PatternKind.PD]} PD and {ordinals[PatternKind.PA]} PA sub-traces")
    return subs


def subtraces_from_annotations(trace: Trace, margin: int = settings.MAX_SHIFT) -> List[SubTrace]:
    """Ground-truth segmentation from the annotation index"""
    if not trace.annotations:
        raise SegmentationError("Trace carries no annotations")
    subs = []
    current = None
    blocks: Dict[int, List[int]] = {}
    for annotation in trace.annotations:
        event = annotation.event
        if event.kind is EventKind.PATTERN_START:
            current, blocks = event, {}
        elif event.kind.is_primitive and current is not None and event.block is not None:
            bounds = blocks.setdefault(event.block, [annotation.start, annotation.end])
            bounds[1] = annotation.end
        elif event.kind is EventKind.PATTERN_END and current is not None:
            ranges = [tuple(blocks[b]) for b in sorted(blocks)]
            subs.append(_make_subtrace(trace.samples, current.pattern, current.ordinal, ranges, margin, partial=False))
            current = None
    if current is not None and blocks:
        ranges = [tuple(blocks[b]) for b in sorted(blocks)]
        subs.append(_make_subtrace(trace.samples, current.pattern, current.ordinal, ranges, margin, partial=True))
    return subs


def exclude_special(subs: Sequence[SubTrace]) -> List[SubTrace]:
    """Drop Doubling 1, whose multiplications see the operand value 1"""
    return [s for s in subs if not (s.label is PatternKind.PD and s.ordinal == 1)]


def rebase_to_block(sub: SubTrace, block: int) -> SubTrace:
    """View of a sub-trace starting at its ``block``-th atomic block"""
    if block == 1:
        return sub
    if block > len(sub.blocks):
        raise AnalysisError(f"{sub.name} has no block {block}")
    start, end = sub.blocks[block - 1]
    samples = sub.samples[start:end + 2 * sub.margin]
    return replace(sub, start=sub.start + start, length=end - start, samples=samples,
                   blocks=[(0, end - start)], offset=0)


def _ncc(windows: np.ndarray, reference: np.ndarray) -> np.ndarray:
    ref = reference.astype(np.float64) - reference.mean()
    centered = windows.astype(np.float64) - windows.mean(axis=1, keepdims=True)
    denominator = np.sqrt((centered * centered).sum(axis=1) * (ref * ref).sum())
    numerator = centered @ ref
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(denominator > 0, numerator / np.where(denominator > 0, denominator, 1.0), 0.0)


def select_reference(subs: Sequence[SubTrace], ordinal: Optional[int] = None) -> SubTrace:
    doublings = [s for s in subs if s.label is PatternKind.PD]
    if ordinal is not None:
        for sub in doublings:
            if sub.ordinal == ordinal:
                return sub
        raise SynchronizationError(f"Reference Doubling {ordinal} is not in the working set")
    return doublings[0] if doublings else subs[0]


def synchronize(subs: Sequence[SubTrace], anchor: Window, max_shift: int,
                sync_floor: float = settings.SYNC_FLOOR, reference: Optional[SubTrace] = None) -> List[SubTrace]:
    """Shift every sub-trace by the offset maximizing its normalized
    cross-correlation with the reference over the anchor window."""
    if not subs:
        return []
    lo, hi = anchor
    if hi - lo < 2:
        raise SynchronizationError(f"Anchor window [{lo}, {hi}) is too short")
    reference = reference or select_reference(subs)
    ref_window = reference.aligned(lo, hi).astype(np.float64)

    synced = []
    for sub in subs:
        first = sub.margin + lo - max_shift
        last = sub.margin + hi + max_shift
        if first < 0 or last > sub.samples.shape[0]:
            raise SynchronizationError(f"{sub.name} does not cover the anchor window with a shift of {max_shift}")
        windows = sliding_window_view(sub.samples[first:last], hi - lo)
        scores = _ncc(windows, ref_window)
        best = int(np.argmax(scores))
        correlation = float(scores[best])
        if correlation < sync_floor:
            logger.warning(f"{sub.name} is unsynchronizable (correlation {correlation:.3f})")
            synced.append(replace(sub, offset=0, correlation=correlation, synchronized=False))
        else:
            synced.append(replace(sub, offset=best - max_shift, correlation=correlation, synchronized=True))
    return synced


def residual_lags(subs: Sequence[SubTrace], trace: Trace) -> Dict[str, int]:
    """Alignment error of each sub-trace against the annotated pattern starts"""
    truth = trace.pattern_starts()
    lags = {}
    for sub in subs:
        key = (sub.label, sub.ordinal)
        if key not in truth:
            raise AnalysisError(f"{sub.name} has no annotated start")
        lags[sub.name] = sub.start + sub.offset - truth[key]
    return lags


def analysis_window(subs: Sequence[SubTrace], block: int = 1) -> Window:
    """Common index range covering block ``block`` in every sub-trace"""
    if not subs:
        raise AnalysisError("No sub-traces to derive an analysis window from")
    lo = max(s.blocks[block - 1][0] for s in subs)
    hi = min(s.blocks[block - 1][1] for s in subs)
    if hi <= lo:
        raise AnalysisError(f"Block {block} has no common range")
    return lo, hi


class Direction(IntEnum):
    NONE = 0
    PD_BELOW = 1
    PA_BELOW = 2


def _matrix(subs, window: Window) -> np.ndarray:
    if isinstance(subs, np.ndarray):
        matrix = subs
    else:
        if not subs:
            raise AnalysisError("Empty label set")
        matrix = np.stack([s.aligned(*window) for s in subs])
    if matrix.ndim != 2 or matrix.shape[0] == 0:
        raise AnalysisError("Empty label set")
    return matrix.astype(np.float64)


@dataclass
class SeparationReport:
    window: Window
    flags: np.ndarray
    pd_max: np.ndarray
    pd_min: np.ndarray
    pa_max: np.ndarray
    pa_min: np.ndarray

    @property
    def start(self) -> int:
        return self.window[0]

    @property
    def indices(self) -> List[int]:
        return (self.start + np.flatnonzero(self.flags != Direction.NONE)).tolist()


@dataclass
class MeanCIReport:
    window: Window
    levels: Tuple[float, ...]
    pd_mean: np.ndarray
    pd_sigma: np.ndarray
    pa_mean: np.ndarray
    pa_sigma: np.ndarray
    separated: Dict[float, np.ndarray]

    @property
    def start(self) -> int:
        return self.window[0]

    def indices(self, level: float) -> List[int]:
        return (self.start + np.flatnonzero(self.separated[level])).tolist()


def _resolve_window(pd, pa, window: Optional[Window]) -> Window:
    """Explicit window, full width for matrices, block 1 common range for sub-traces"""
    if window is not None:
        return window
    for data in (pd, pa):
        if isinstance(data, np.ndarray):
            return (0, int(data.shape[-1]) if data.ndim else 0)
    return analysis_window([*pd, *pa], 1)


def complete_separation(pd, pa, window: Optional[Window] = None) -> SeparationReport:
    """Flag index i when max over one set lies strictly below min over the other"""
    window = _resolve_window(pd, pa, window)
    pd_m = _matrix(pd, window)
    pa_m = _matrix(pa, window)
    pd_max, pd_min = pd_m.max(axis=0), pd_m.min(axis=0)
    pa_max, pa_min = pa_m.max(axis=0), pa_m.min(axis=0)
    flags = np.full(pd_max.shape[0], Direction.NONE, dtype=np.int8)
    flags[pd_max < pa_min] = Direction.PD_BELOW
    flags[pa_max < pd_min] = Direction.PA_BELOW
    return SeparationReport(tuple(window), flags, pd_max, pd_min, pa_max, pa_min)


def mean_ci_separation(pd, pa, levels: Union[float, Sequence[float]] = settings.CI_LEVELS,
                       window: Optional[Window] = None) -> MeanCIReport:
    """Difference-of-means test with x̄ ± c·σ bands (σ with n−1)"""
    window = _resolve_window(pd, pa, window)
    levels = (float(levels),) if isinstance(levels, (int, float)) else tuple(float(c) for c in levels)
    pd_m = _matrix(pd, window)
    pa_m = _matrix(pa, window)
    if pd_m.shape[0] < 2 or pa_m.shape[0] < 2:
        raise AnalysisError("Each label set needs at least two sub-traces")
    pd_mean, pd_sigma = pd_m.mean(axis=0), pd_m.std(axis=0, ddof=1)
    pa_mean, pa_sigma = pa_m.mean(axis=0), pa_m.std(axis=0, ddof=1)
    separated = {}
    for c in levels:
        separated[c] = ((pd_mean + c * pd_sigma < pa_mean - c * pa_sigma)
                        | (pa_mean + c * pa_sigma < pd_mean - c * pd_sigma))
    return MeanCIReport(tuple(window), levels, pd_mean, pd_sigma, pa_mean, pa_sigma, separated)


def _fmt(value: float) -> str:
    return f"{value:.9g}"


def report_csv(separation: SeparationReport, ci: MeanCIReport, config: Optional[dict] = None) -> str:
    """Per-index records for external plotting of the bands"""
    out = io.StringIO()
    out.write(f"# version {settings.VERSION}\n")
    if config is not None:
        out.write(f"# config {json.dumps(config, sort_keys=True)}\n")
    levels = " ".join(f"{c:g}" for c in ci.levels)
    out.write(f"# window {separation.window[0]} {separation.window[1]}, levels {levels}\n")
    writer = csv.writer(out, lineterminator="\n")
    level_columns = [f"separated_c{c:g}" for c in ci.levels]
    writer.writerow(["index", "pd_max", "pd_min", "pa_max", "pa_min", "pd_mean", "pd_sigma",
                     "pa_mean", "pa_sigma", "separated_minmax"] + level_columns)
    for i in range(separation.flags.shape[0]):
        writer.writerow([
            separation.start + i,
            _fmt(separation.pd_max[i]), _fmt(separation.pd_min[i]),
            _fmt(separation.pa_max[i]), _fmt(separation.pa_min[i]),
            _fmt(ci.pd_mean[i]), _fmt(ci.pd_sigma[i]), _fmt(ci.pa_mean[i]), _fmt(ci.pa_sigma[i]),
            int(separation.flags[i]),
        ] + [int(ci.separated[c][i]) for c in ci.levels])
    return out.getvalue()


def write_report_csv(path, separation: SeparationReport, ci: MeanCIReport, config: Optional[dict] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report_csv(separation, ci, config))
    return path


def verdict(separation: SeparationReport, ci: MeanCIReport) -> str:
    indices = separation.indices
    if not indices:
        return "no complete separation found"
    shown = ", ".join(str(i) for i in indices[:20])
    more = f" (+{len(indices) - 20} more)" if len(indices) > 20 else ""
    return f"complete separation at {len(indices)} samples: {shown}{more}"


def working_set(subs: Sequence[SubTrace], config: AnalysisConfig) -> List[SubTrace]:
    complete = [s for s in subs if not s.partial]
    if config.exclude_doubling_one:
        complete = exclude_special(complete)
    return [rebase_to_block(s, config.block) for s in complete]
