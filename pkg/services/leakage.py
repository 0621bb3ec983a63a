"""Software stand-in for the EM measurement.

Turns the annotated event stream of a kP run into a sampled trace. Each
primitive contributes a rectangular envelope at its kind's level, a fixed
instruction-shape template, a value term from the Hamming weight of its
word stream, and an address term from its register indices confined to
the first samples of the op. NOPs sit at the baseline level.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from models.events import BLOCK_EVENT_KINDS, EventKind, FieldOpEvent, PatternKind
from models.schemas import JitterMode, LeakageModel, TraceConfig

logger = logging.getLogger(__name__)

LEAK_WORD_BITS = 32
NOISE_CHUNK = 1 << 22

# Measured durations, value: count
MEASURED_FIRST_X = {
    PatternKind.PD: {16565: 13, 16570: 8},
    PatternKind.PA: {16565: 13, 16570: 1},
}
MEASURED_BLOCK_TOTALS = {
    PatternKind.PD: {72768: 3, 72773: 2, 72778: 6, 72783: 7, 72788: 1, 72793: 2},
    PatternKind.PA: {72772: 6, 72777: 6, 72782: 2},
}
MEASURED_X_BASE = 16560
MEASURED_BLOCK_BASE = 72736

# Fixed seeds for the per-kind instruction shapes; X and X' run the same routine
TEMPLATE_SEEDS = {EventKind.X: 1001, EventKind.X_PRIME: 1001, EventKind.N: 2002, EventKind.A: 3003}


@dataclass(frozen=True)
class Annotation:
    start: int
    end: int
    event: FieldOpEvent

    @property
    def length(self) -> int:
        return self.end - self.start


@dataclass
class Trace:
    samples: np.ndarray
    samples_per_cycle: int
    annotations: List[Annotation] = field(default_factory=list)
    config: Optional[TraceConfig] = None
    prefix_samples: int = 0
    truncated: bool = False
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.samples.shape[0])

    def pattern_starts(self) -> Dict[Tuple[PatternKind, int], int]:
        return {(a.event.pattern, a.event.ordinal): a.start
                for a in self.annotations if a.event.kind is EventKind.PATTERN_START}


def base_cycles(kind: EventKind, cfg: TraceConfig) -> int:
    return {
        EventKind.X: cfg.x_cycles,
        EventKind.X_PRIME: cfg.x_cycles,
        EventKind.N: cfg.n_cycles,
        EventKind.A: cfg.a_cycles,
        EventKind.NOP_SHORT: cfg.nop_short_cycles,
        EventKind.NOP_LONG: cfg.nop_long_cycles,
    }.get(kind, 0)


def _draw(rng: np.random.Generator, table: Dict[int, int]) -> int:
    values = np.array(list(table.keys()))
    counts = np.array(list(table.values()), dtype=float)
    return int(rng.choice(values, p=counts / counts.sum()))


def duration_model(kind: EventKind, cfg: TraceConfig, rng: np.random.Generator,
                   pattern: Optional[PatternKind] = None, first_in_block: bool = False) -> int:
    """Cycle count of a single event.

    NOPs and markers are exact. In measured mode the first X of a block is
    drawn from the measured first-X durations.
    """
    base = base_cycles(kind, cfg)
    if not kind.is_primitive or cfg.jitter is JitterMode.none:
        return base
    if cfg.jitter is JitterMode.measured and kind is EventKind.X and first_in_block:
        return base + _draw(rng, MEASURED_FIRST_X[pattern or PatternKind.PD]) - MEASURED_X_BASE
    return base + cfg.jitter_quantum * int(rng.integers(0, cfg.jitter_steps + 1))


def block_durations(pattern: PatternKind, cfg: TraceConfig, rng: np.random.Generator) -> List[int]:
    """Durations of the nine primitives of one MNAMNAA block"""
    base = [base_cycles(kind, cfg) for kind in BLOCK_EVENT_KINDS]
    if cfg.jitter is JitterMode.none:
        return base
    if cfg.jitter is JitterMode.grid:
        return [duration_model(kind, cfg, rng) for kind in BLOCK_EVENT_KINDS]

    durations = list(base)
    durations[0] = duration_model(EventKind.X, cfg, rng, pattern, first_in_block=True)
    excess = _draw(rng, MEASURED_BLOCK_TOTALS[pattern]) - MEASURED_BLOCK_BASE - (durations[0] - base[0])
    quanta, remainder = divmod(excess, cfg.jitter_quantum)
    rest = len(durations) - 1
    spread = rng.multinomial(quanta, [1.0 / rest] * rest)
    for position, extra in enumerate(spread, 1):
        durations[position] += cfg.jitter_quantum * int(extra)
    durations[-1] += remainder
    return durations


def assign_durations(events: Sequence[FieldOpEvent], cfg: TraceConfig, rng: np.random.Generator) -> List[FieldOpEvent]:
    timed = []
    current_key = None
    plan: List[int] = []
    position = 0
    for event in events:
        if event.duration is not None:
            timed.append(event)
            continue
        if event.kind.is_marker:
            timed.append(event)
            continue
        if event.kind.is_primitive and event.block is not None:
            key = (event.pattern, event.ordinal, event.block)
            if key != current_key:
                current_key = key
                plan = block_durations(event.pattern or PatternKind.PD, cfg, rng)
                position = 0
            cycles = plan[position] if position < len(plan) else duration_model(event.kind, cfg, rng)
            position += 1
        else:
            cycles = duration_model(event.kind, cfg, rng, event.pattern)
        timed.append(event.with_duration(cycles))
    return timed


@lru_cache(maxsize=32)
def _template(kind: EventKind, period: int) -> np.ndarray:
    rng = np.random.default_rng(TEMPLATE_SEEDS[kind])
    return rng.standard_normal(period).astype(np.float32)


def _popcount(value: int) -> int:
    return bin(value).count("1")


def _leak_words(event: FieldOpEvent) -> List[int]:
    limbs = [limb for operand in event.operands for limb in operand]
    if event.result is not None:
        limbs.extend(event.result)
    words = []
    for limb in limbs:
        while True:
            words.append(limb & ((1 << LEAK_WORD_BITS) - 1))
            limb >>= LEAK_WORD_BITS
            if not limb:
                break
    return words


def _value_leak(event: FieldOpEvent, cfg: TraceConfig) -> Optional[np.ndarray]:
    words = _leak_words(event)
    if not words:
        return None
    if cfg.leakage_model is LeakageModel.hamming_distance:
        weights = [_popcount(word ^ previous) for previous, word in zip([0] + words[:-1], words)]
    else:
        weights = [_popcount(word) for word in words]
    return np.asarray(weights, dtype=np.float32) / LEAK_WORD_BITS - 0.5


def address_weight_of(event: FieldOpEvent) -> int:
    return sum(_popcount(register) for register in event.registers if register is not None)


def _level(kind: EventKind, cfg: TraceConfig) -> float:
    if kind in (EventKind.X, EventKind.X_PRIME):
        return cfg.x_level
    if kind is EventKind.N:
        return cfg.n_level
    if kind is EventKind.A:
        return cfg.a_level
    return cfg.nop_level


def render_event(event: FieldOpEvent, cfg: TraceConfig) -> np.ndarray:
    n = event.duration * cfg.samples_per_cycle
    out = np.full(n, _level(event.kind, cfg), dtype=np.float32)
    if not event.kind.is_primitive:
        return out
    if cfg.shape_weight:
        template = _template(event.kind, cfg.template_period_cycles * cfg.samples_per_cycle)
        out += np.float32(cfg.shape_weight) * np.resize(template, n)
    if cfg.value_weight:
        leak = _value_leak(event, cfg)
        if leak is not None:
            index = (np.arange(n, dtype=np.int64) * leak.shape[0]) // n
            out += np.float32(cfg.value_weight) * leak[index]
    if cfg.address_weight:
        head = max(1, math.ceil(cfg.address_fraction * n))
        out[:head] += np.float32(cfg.address_weight * address_weight_of(event))
    return out


def render_signal(timed: Sequence[FieldOpEvent], cfg: TraceConfig) -> Tuple[np.ndarray, List[Annotation]]:
    """Noise-free samples and the annotation index of already-timed events"""
    spc = cfg.samples_per_cycle
    prefix = cfg.prefix_cycles * spc
    total = prefix + spc * sum(event.duration or 0 for event in timed)
    signal = np.full(total, cfg.nop_level, dtype=np.float32)
    annotations = []
    cursor = prefix
    for event in timed:
        n = (event.duration or 0) * spc
        if n:
            signal[cursor:cursor + n] = render_event(event, cfg)
        annotations.append(Annotation(cursor, cursor + n, event))
        cursor += n
    return signal, annotations


def _streams(seed: int) -> Tuple[np.random.Generator, np.random.Generator]:
    duration_seq, noise_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(duration_seq), np.random.default_rng(noise_seq)


def simulate_trace(events: Sequence[FieldOpEvent], cfg: TraceConfig) -> Trace:
    duration_rng, noise_rng = _streams(cfg.seed)
    timed = assign_durations(events, cfg, duration_rng)
    samples, annotations = render_signal(timed, cfg)
    if cfg.noise_sigma > 0:
        for start in range(0, samples.shape[0], NOISE_CHUNK):
            chunk = samples[start:start + NOISE_CHUNK]
            chunk += noise_rng.normal(0.0, cfg.noise_sigma, size=chunk.shape[0]).astype(np.float32)
    logger.info(f"Simulated {samples.shape[0]} samples from {len(timed)} events")
    return Trace(samples=samples, samples_per_cycle=cfg.samples_per_cycle, annotations=annotations,
                 config=cfg, prefix_samples=cfg.prefix_cycles * cfg.samples_per_cycle)


def calibrate_noise(events: Sequence[FieldOpEvent], cfg: TraceConfig, target_snr: float) -> float:
    """Noise sigma giving ``target_snr`` for the noise-free rendering of ``events``"""
    if target_snr <= 0:
        raise ValueError("target SNR must be positive")
    duration_rng, _ = _streams(cfg.seed)
    signal, _ = render_signal(assign_durations(events, cfg, duration_rng), cfg)
    return math.sqrt(float(np.var(signal, dtype=np.float64)) / target_snr)


def snr_from(signal: np.ndarray, samples: np.ndarray) -> float:
    noise = samples.astype(np.float64) - signal.astype(np.float64)
    noise_var = float(np.var(noise))
    if noise_var == 0.0:
        return math.inf
    return float(np.var(signal, dtype=np.float64)) / noise_var


def snr(trace: Trace) -> float:
    """Signal variance of the noise-free reconstruction over noise variance"""
    if not trace.annotations or trace.config is None:
        raise ValueError("SNR needs the annotation index and the trace configuration")
    signal, _ = render_signal([annotation.event for annotation in trace.annotations], trace.config)
    signal = signal[:len(trace)]
    return snr_from(signal, trace.samples[:signal.shape[0]])


def truncate_trace(trace: Trace, fraction: float) -> Trace:
    """Keep only ``fraction`` of the final pattern, as an incomplete capture would"""
    starts = [a for a in trace.annotations if a.event.kind is EventKind.PATTERN_START]
    ends = [a for a in trace.annotations if a.event.kind is EventKind.PATTERN_END]
    if not starts or not ends:
        raise ValueError("Trace has no pattern markers to truncate")
    first, last = starts[-1].start, ends[-1].start
    cut = first + int(fraction * (last - first))
    annotations = []
    for annotation in trace.annotations:
        if annotation.start > cut or (annotation.start == cut and annotation.length == 0):
            continue
        if annotation.end > cut:
            annotation = replace(annotation, end=cut)
        annotations.append(annotation)
    return replace(trace, samples=trace.samples[:cut].copy(), annotations=annotations, truncated=True)
