import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from config.settings import settings
from models.events import EventRecorder, FieldOpEvent, PatternKind
from models.schemas import (AnalysisSummary, ExperimentConfig, KpResponse, SegmentationParams,
                            TimeEstimate, TraceConfig)
from services import analysis
from services.analysis import MeanCIReport, SeparationReport, SubTrace
from services.curve import (JacobianPoint, Scalar, affine_multiply, oracle_scalar_mul, parse_point,
                            scalar_mul, to_affine)
from services.errors import AtomicityError
from services.field import default_context
from services.leakage import Trace, calibrate_noise, simulate_trace, snr, truncate_trace
from services.trace_io import export_csv, write_trace

logger = logging.getLogger(__name__)


def estimate_time(bit_length: int, clock_mhz: float = settings.CLOCK_MHZ,
                  block_cycles: int = settings.BLOCK_CYCLES) -> TimeEstimate:
    """Bounds for an l-bit scalar: all-zero bits (PD only) up to all-one bits (PD + PA)"""
    if bit_length < 1:
        raise ValueError("bit length must be at least 1")
    steps = bit_length - 1
    min_cycles = steps * 4 * block_cycles
    max_cycles = steps * 10 * block_cycles
    return TimeEstimate(
        bit_length=bit_length, clock_mhz=clock_mhz, block_cycles=block_cycles,
        min_cycles=min_cycles, max_cycles=max_cycles,
        min_ms=min_cycles / (clock_mhz * 1000), max_ms=max_cycles / (clock_mhz * 1000),
    )


@dataclass
class AnalysisResult:
    summary: AnalysisSummary
    separation: SeparationReport
    ci: MeanCIReport
    subs: List[SubTrace]


class ExperimentRunner:
    """Wires point multiplication, trace simulation and analysis together"""

    def run_kp(self, scalar: str, point_x: Optional[str] = None, point_y: Optional[str] = None,
               word_bits: int = settings.WORD_BITS) -> KpResponse:
        k = Scalar.from_bits(scalar)
        point = parse_point(point_x, point_y, word_bits)
        result = scalar_mul(k, point, ctx=default_context(word_bits))
        affine = to_affine(result)
        verified = self._verify(k, point, result)
        if not verified:
            logger.error(f"Oracle mismatch for k = {scalar}")
        x, y = affine.coords()
        return KpResponse(x=f"{x:064x}", y=f"{y:064x}", doublings=k.doublings,
                          additions=k.additions, verified=verified)

    def _verify(self, k: Scalar, point, result: JacobianPoint) -> bool:
        reference = oracle_scalar_mul(k, point)
        expected = affine_multiply(k.value, point.coords())
        return to_affine(result).coords() == to_affine(reference).coords() == expected

    def record_events(self, config: ExperimentConfig) -> Tuple[List[FieldOpEvent], JacobianPoint]:
        k = Scalar.from_bits(config.scalar)
        point = parse_point(config.point_x, config.point_y, config.word_bits)
        recorder = EventRecorder()
        result = scalar_mul(k, point, sink=recorder, ctx=default_context(config.word_bits))
        logger.info(f"Recorded {len(recorder)} events for {k.doublings} PD and {k.additions} PA")
        return recorder.events, result

    def build_trace(self, config: ExperimentConfig) -> Trace:
        try:
            events, _ = self.record_events(config)
            trace_config = config.trace
            if config.target_snr is not None:
                sigma = calibrate_noise(events, trace_config, config.target_snr)
                logger.info(f"Calibrated noise sigma {sigma:.4f} for SNR {config.target_snr}")
                trace_config = TraceConfig.model_validate({**trace_config.model_dump(), "noise_sigma": sigma})
            trace = simulate_trace(events, trace_config)
            if config.truncate_final:
                trace = truncate_trace(trace, config.truncate_fraction)
            return trace
        except AtomicityError:
            raise
        except Exception as e:
            raise AtomicityError(f"Failed to simulate trace: {str(e)}")

    def run_trace(self, config: ExperimentConfig, path: Optional[Path] = None,
                  csv_path: Optional[Path] = None) -> Tuple[Trace, Path]:
        start_time = time.time()
        trace_path = Path(path) if path else Path(config.output_dir) / "trace.atrc"
        trace = self.build_trace(config)
        trace.metadata["experiment"] = config.model_dump(mode="json")
        written = write_trace(trace_path, trace)
        if csv_path:
            export_csv(csv_path, trace)
        logger.info(f"Trace of {len(trace)} samples written in {time.time() - start_time:.2f}s")
        return trace, written

    def subtraces(self, trace: Trace, config: ExperimentConfig) -> List[SubTrace]:
        cfg = config.analysis
        if cfg.ground_truth_segmentation:
            return analysis.subtraces_from_annotations(trace, margin=cfg.max_shift)
        trace_config = trace.config or config.trace
        params = SegmentationParams.from_trace_config(trace_config, margin=cfg.max_shift)
        return analysis.segment(trace, params)

    def run_analyze(self, trace: Trace, config: ExperimentConfig) -> AnalysisResult:
        """Segment, drop Doubling 1, synchronize, then run both tests on the chosen block"""
        start_time = time.time()
        try:
            cfg = config.analysis
            subs = self.subtraces(trace, config)
            partial = [s for s in subs if s.partial]
            working = analysis.working_set(subs, cfg)
            kept = {s.name for s in working}
            excluded = [s.name for s in subs if not s.partial and s.name not in kept]

            reference = analysis.select_reference(working, cfg.reference_ordinal)
            synced = analysis.synchronize(working, cfg.anchor, cfg.max_shift, cfg.sync_floor, reference)
            usable = [s for s in synced if s.synchronized]
            pd = [s for s in usable if s.label is PatternKind.PD]
            pa = [s for s in usable if s.label is PatternKind.PA]
            logger.info(f"Working set: {len(pd)} PD and {len(pa)} PA sub-traces")

            # working_set rebased every sub-trace onto cfg.block
            window = analysis.analysis_window(usable, 1)
            separation = analysis.complete_separation(pd, pa, window)
            ci = analysis.mean_ci_separation(pd, pa, cfg.ci_levels, window)

            summary = AnalysisSummary(
                config=config.model_dump(mode="json"),
                doublings=sum(1 for s in subs if s.label is PatternKind.PD and not s.partial),
                additions=sum(1 for s in subs if s.label is PatternKind.PA and not s.partial),
                partial=len(partial),
                excluded=excluded,
                unsynchronizable=[s.name for s in synced if not s.synchronized],
                analysis_range=list(window),
                offsets={s.name: s.offset for s in synced},
                separated_minmax=separation.indices,
                separated_ci={f"{c:g}": ci.indices(c) for c in ci.levels},
                snr=snr(trace) if trace.annotations and trace.config else None,
                verdict=analysis.verdict(separation, ci),
            )
            logger.info(f"Analysis finished in {time.time() - start_time:.2f}s: {summary.verdict}")
            return AnalysisResult(summary, separation, ci, synced)
        except AtomicityError:
            raise
        except Exception as e:
            raise AtomicityError(f"Failed to analyze trace: {str(e)}")

    def write_reports(self, result: AnalysisResult, output_dir: Path) -> Dict[str, Path]:
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        csv_path = analysis.write_report_csv(output_dir / "separation.csv", result.separation, result.ci,
                                             result.summary.config)
        summary_path = output_dir / "summary.json"
        summary_path.write_text(json.dumps(result.summary.model_dump(mode="json"), sort_keys=True, indent=2))
        return {"csv": csv_path, "summary": summary_path}

    def run_experiment(self, config: ExperimentConfig) -> AnalysisResult:
        """Simulate and analyze in one go, without touching the disk"""
        return self.run_analyze(self.build_trace(config), config)


def load_config(path: Optional[Path] = None, preset: str = "desk", **overrides) -> ExperimentConfig:
    """Experiment configuration from a JSON file or a trace preset"""
    if path is not None:
        config = ExperimentConfig.model_validate_json(Path(path).read_text())
    else:
        trace = TraceConfig.measured() if preset == "measured" else TraceConfig.desk()
        config = ExperimentConfig(trace=trace)
    updates = {key: value for key, value in overrides.items() if value is not None}
    trace_updates = {key: updates.pop(key) for key in list(updates) if key in TraceConfig.model_fields}
    if trace_updates:
        updates["trace"] = TraceConfig.model_validate({**config.trace.model_dump(), **trace_updates})
    return ExperimentConfig.model_validate({**config.model_dump(), **updates}) if updates else config
