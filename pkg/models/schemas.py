from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from config.settings import settings


class JitterMode(str, Enum):
    none = "none"
    grid = "grid"
    measured = "measured"


class LeakageModel(str, Enum):
    hamming_weight = "hamming_weight"
    hamming_distance = "hamming_distance"


class ShapeReport(BaseModel):
    valid: bool
    message: str
    op_index: Optional[int] = None
    block: Optional[int] = None
    slot: Optional[int] = None
    op_count: Optional[int] = None
    block_count: Optional[int] = None


class TraceConfig(BaseModel):
    """Leakage simulator settings. Durations are clock cycles."""
    model_config = ConfigDict(frozen=True)

    samples_per_cycle: int = Field(settings.SAMPLES_PER_CYCLE, ge=1)
    value_weight: float = 0.2
    address_weight: float = 0.0
    noise_sigma: float = Field(0.0, ge=0.0)
    seed: int = 0
    leakage_model: LeakageModel = LeakageModel.hamming_weight

    # Duration model
    jitter: JitterMode = JitterMode.measured
    jitter_quantum: int = Field(5, ge=1)
    jitter_steps: int = Field(2, ge=0)
    x_cycles: int = Field(16560, ge=1)
    n_cycles: int = Field(1280, ge=1)
    a_cycles: int = Field(1312, ge=1)
    nop_short_cycles: int = Field(20000, ge=1)
    nop_long_cycles: int = Field(130000, ge=1)
    prefix_cycles: int = Field(20000, ge=0)

    # Waveform
    x_level: float = 1.0
    n_level: float = 0.9
    a_level: float = 0.9
    nop_level: float = 0.0
    shape_weight: float = 0.3
    template_period_cycles: int = Field(64, ge=1)
    address_fraction: float = Field(0.05, gt=0.0, le=1.0)

    @model_validator(mode="after")
    def _check_nops(self):
        if self.nop_long_cycles <= self.nop_short_cycles:
            raise ValueError("nop_long_cycles must exceed nop_short_cycles")
        return self

    @classmethod
    def measured(cls, **overrides: Any) -> "TraceConfig":
        return cls(**overrides)

    @classmethod
    def desk(cls, **overrides: Any) -> "TraceConfig":
        values = dict(x_cycles=1000, n_cycles=100, a_cycles=100, nop_short_cycles=400,
                      nop_long_cycles=3000, prefix_cycles=3000)
        values.update(overrides)
        return cls(**values)

    @property
    def block_cycles(self) -> int:
        """Jitter-free duration of one MNAMNAA block"""
        return 4 * self.x_cycles + 2 * self.n_cycles + 3 * self.a_cycles


class SegmentationParams(BaseModel):
    nop_short_samples: int = Field(..., ge=2)
    nop_long_samples: int = Field(..., ge=2)
    prefix_samples: int = Field(..., ge=4)
    smoothing: Optional[int] = None
    gap_sigmas: float = settings.GAP_SIGMAS
    threshold_floor: float = settings.GAP_THRESHOLD_FLOOR
    margin: int = Field(settings.MAX_SHIFT, ge=0)

    @classmethod
    def from_trace_config(cls, cfg: TraceConfig, margin: int = settings.MAX_SHIFT) -> "SegmentationParams":
        spc = cfg.samples_per_cycle
        return cls(
            nop_short_samples=cfg.nop_short_cycles * spc,
            nop_long_samples=cfg.nop_long_cycles * spc,
            prefix_samples=cfg.prefix_cycles * spc,
            margin=margin,
        )

    @property
    def window(self) -> int:
        return max(1, self.smoothing or self.nop_short_samples // 20)

    @property
    def min_gap(self) -> int:
        return self.nop_short_samples // 2

    @property
    def long_gap(self) -> int:
        return (self.nop_short_samples + self.nop_long_samples) // 2


class AnalysisConfig(BaseModel):
    anchor_start: int = Field(settings.ANCHOR_START, ge=0)
    anchor_length: int = Field(settings.ANCHOR_LENGTH, ge=2)
    max_shift: int = Field(settings.MAX_SHIFT, ge=0)
    sync_floor: float = settings.SYNC_FLOOR
    ci_levels: List[float] = Field(default_factory=lambda: list(settings.CI_LEVELS))
    reference_ordinal: Optional[int] = None
    exclude_doubling_one: bool = True
    ground_truth_segmentation: bool = False
    block: int = Field(1, ge=1, le=4)

    @property
    def anchor(self) -> tuple:
        return (self.anchor_start, self.anchor_start + self.anchor_length)


class ExperimentConfig(BaseModel):
    scalar: str = settings.REFERENCE_SCALAR
    point_x: Optional[str] = None
    point_y: Optional[str] = None
    word_bits: int = settings.WORD_BITS
    trace: TraceConfig = Field(default_factory=TraceConfig.desk)
    target_snr: Optional[float] = Field(settings.MEASURED_SNR, gt=0.0)
    analysis: AnalysisConfig = Field(default_factory=AnalysisConfig)
    truncate_final: bool = False
    truncate_fraction: float = Field(0.75, gt=0.0, lt=1.0)
    output_dir: str = settings.OUTPUT_DIR

    @field_validator("scalar")
    @classmethod
    def _check_scalar(cls, value: str) -> str:
        value = value.strip()
        if not value or set(value) - {"0", "1"}:
            raise ValueError("scalar must be a non-empty bit string")
        if value[0] != "1":
            raise ValueError("scalar must start with a 1 bit")
        if len(value) > 256:
            raise ValueError("scalar is longer than 256 bits")
        return value

    @field_validator("word_bits")
    @classmethod
    def _check_word_bits(cls, value: int) -> int:
        if value not in (32, 64):
            raise ValueError("word_bits must be 32 or 64")
        return value


class TimeEstimate(BaseModel):
    bit_length: int
    clock_mhz: float
    block_cycles: int
    min_cycles: int
    max_cycles: int
    min_ms: float
    max_ms: float


class KpRequest(BaseModel):
    scalar: str
    point_x: Optional[str] = None
    point_y: Optional[str] = None


class KpResponse(BaseModel):
    x: str
    y: str
    doublings: int
    additions: int
    verified: bool


class EstimateTimeRequest(BaseModel):
    bit_length: int = Field(256, ge=1, le=256)
    clock_mhz: float = Field(settings.CLOCK_MHZ, gt=0.0)
    block_cycles: int = Field(settings.BLOCK_CYCLES, ge=1)


class AnalysisSummary(BaseModel):
    version: str = settings.VERSION
    config: Dict[str, Any]
    doublings: int
    additions: int
    partial: int
    excluded: List[str] = Field(default_factory=list)
    unsynchronizable: List[str] = Field(default_factory=list)
    analysis_range: List[int]
    offsets: Dict[str, int] = Field(default_factory=dict)
    separated_minmax: List[int]
    separated_ci: Dict[str, List[int]]
    snr: Optional[float] = None
    verdict: str
