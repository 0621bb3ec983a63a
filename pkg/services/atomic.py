"""MNAMNAA atomic-pattern scripts and the register-level executor.

The scripts are shipped as text tables under ``services/patterns`` and
parsed into immutable ``AtomicScript`` objects; the same document format
is used for export.
"""
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, List, Optional, Tuple

from models.events import OpKind, PatternKind
from models.schemas import ShapeReport
from services.errors import PatternValidationError
from services.field import FieldElement, MontgomeryContext, field_add, field_mul, field_neg

logger = logging.getLogger(__name__)

PATTERNS_DIR = Path(__file__).parent / "patterns"

REGISTER_NAMES = ["T0", "T1", "T2", "T3", "T4", "T5", "T6", "T7", "T8", "T9", "T10", "Tx", "Ty"]
REGISTER_COUNT = len(REGISTER_NAMES)
T0 = 0
TX = 11
TY = 12

SLOTS_PER_BLOCK = 7
SLOT_KINDS = {1: OpKind.M, 2: OpKind.N, 3: OpKind.A, 4: OpKind.M, 5: OpKind.N, 6: OpKind.A, 7: OpKind.A}
BLOCKS_PER_PATTERN = {PatternKind.PD: 4, PatternKind.PA: 6}


def register_id(name: str) -> int:
    try:
        return REGISTER_NAMES.index(name)
    except ValueError:
        raise ValueError(f"Unknown register: {name}")


def register_name(index: Optional[int]) -> str:
    return "-" if index is None else REGISTER_NAMES[index]


@dataclass(frozen=True)
class AtomicOp:
    index: int
    kind: OpKind
    dst: int
    src1: int
    src2: Optional[int]
    dummy: bool
    block: int
    slot: int

    def sources(self) -> Tuple[int, ...]:
        return (self.src1,) if self.src2 is None else (self.src1, self.src2)


@dataclass(frozen=True)
class AtomicScript:
    kind: PatternKind
    ops: Tuple[AtomicOp, ...]

    @property
    def block_count(self) -> int:
        return len({op.block for op in self.ops})

    def block(self, number: int) -> Tuple[AtomicOp, ...]:
        return tuple(op for op in self.ops if op.block == number)

    def dummy_indices(self) -> List[int]:
        return [op.index for op in self.ops if op.dummy]

    def __len__(self) -> int:
        return len(self.ops)


@dataclass
class RegisterFile:
    T: List[FieldElement] = field(default_factory=lambda: [FieldElement.from_int(0) for _ in range(REGISTER_COUNT)])

    @classmethod
    def for_pattern(cls, X: FieldElement, Y: FieldElement, Z: FieldElement,
                    x: Optional[FieldElement] = None, y: Optional[FieldElement] = None) -> "RegisterFile":
        zero = FieldElement(tuple(0 for _ in X.limbs), X.word_bits)
        regs = cls([zero] * REGISTER_COUNT)
        regs.load(X, Y, Z, x, y)
        return regs

    def load(self, X: FieldElement, Y: FieldElement, Z: FieldElement,
             x: Optional[FieldElement] = None, y: Optional[FieldElement] = None):
        self.T[1], self.T[2], self.T[3] = X, Y, Z
        if x is not None and y is not None:
            self.T[TX], self.T[TY] = x, y

    def point(self) -> Tuple[FieldElement, FieldElement, FieldElement]:
        return self.T[1], self.T[2], self.T[3]

    def copy(self) -> "RegisterFile":
        return RegisterFile(list(self.T))


def parse_script(text: str, kind: PatternKind) -> AtomicScript:
    """Parse the one-op-per-line document (index kind dst src1 src2 dummy block slot)"""
    ops = []
    for line_number, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 8:
            raise ValueError(f"Line {line_number}: expected 8 columns, got {len(parts)}")
        index, op_kind, dst, src1, src2, dummy, block, slot = parts
        ops.append(AtomicOp(
            index=int(index),
            kind=OpKind(op_kind),
            dst=register_id(dst),
            src1=register_id(src1),
            src2=None if src2 == "-" else register_id(src2),
            dummy=dummy in ("1", "*", "true"),
            block=int(block),
            slot=int(slot),
        ))
    return AtomicScript(kind=kind, ops=tuple(ops))


def export_script(script: AtomicScript) -> str:
    lines = [
        f"# MNAMNAA atomic pattern {script.kind.value}, {script.block_count} blocks",
        "# index kind dst src1 src2 dummy block slot",
    ]
    for op in script.ops:
        lines.append(" ".join([
            str(op.index), op.kind.value, register_name(op.dst), register_name(op.src1),
            register_name(op.src2), "1" if op.dummy else "0", str(op.block), str(op.slot),
        ]))
    return "\n".join(lines) + "\n"


@lru_cache(maxsize=None)
def load_script(kind: PatternKind) -> AtomicScript:
    filename = "doubling.txt" if kind is PatternKind.PD else "addition.txt"
    script = parse_script((PATTERNS_DIR / filename).read_text(), kind)
    report = validate_pattern(script)
    if not report.valid:
        raise PatternValidationError(f"Shipped {kind.value} script is malformed: {report.message}",
                                     report.op_index, report.block, report.slot)
    return script


def doubling_script() -> AtomicScript:
    return load_script(PatternKind.PD)


def addition_script() -> AtomicScript:
    return load_script(PatternKind.PA)


def _violation(op: AtomicOp, message: str) -> ShapeReport:
    return ShapeReport(valid=False, message=message, op_index=op.index, block=op.block, slot=op.slot)


def validate_pattern(script: AtomicScript) -> ShapeReport:
    """Check block/slot/kind shape, dummy destinations and dummy isolation"""
    expected_blocks = BLOCKS_PER_PATTERN[script.kind]
    if len(script.ops) != expected_blocks * SLOTS_PER_BLOCK:
        return ShapeReport(valid=False, message=f"expected {expected_blocks * SLOTS_PER_BLOCK} ops, got {len(script.ops)}")

    for position, op in enumerate(script.ops):
        block = position // SLOTS_PER_BLOCK + 1
        slot = position % SLOTS_PER_BLOCK + 1
        if op.index != position + 1 or op.block != block or op.slot != slot:
            return _violation(op, f"op {op.index} is out of place (expected OP{position + 1} at block {block} slot {slot})")
        if op.kind is not SLOT_KINDS[slot]:
            return _violation(op, f"slot {slot} of block {block} must be {SLOT_KINDS[slot].value}, got {op.kind.value}")
        if (op.kind is OpKind.N) != (op.src2 is None):
            return _violation(op, f"OP{op.index} has the wrong number of operands for {op.kind.value}")
        if op.dummy and op.dst != T0:
            return _violation(op, f"dummy OP{op.index} must write T0, writes {register_name(op.dst)}")
        if not op.dummy and op.dst == T0:
            return _violation(op, f"OP{op.index} writes T0 but is not marked dummy")
        if op.dst in (TX, TY):
            return _violation(op, f"OP{op.index} writes read-only register {register_name(op.dst)}")
        if not op.dummy and T0 in op.sources():
            return _violation(op, f"OP{op.index} reads the dummy result register T0")

    return ShapeReport(valid=True, message="valid", op_count=len(script.ops), block_count=script.block_count)


@lru_cache(maxsize=64)
def _require_valid(script: AtomicScript) -> None:
    report = validate_pattern(script)
    if not report.valid:
        raise PatternValidationError(f"Failed to execute {script.kind.value} script: {report.message}",
                                     report.op_index, report.block, report.slot)


def execute(script: AtomicScript, regs: RegisterFile, ctx: Optional[MontgomeryContext] = None, sink=None,
            ordinal: Optional[int] = None, on_block_end: Optional[Callable[[int], None]] = None) -> RegisterFile:
    """Run a script over a copy of ``regs`` and return the updated register file"""
    _require_valid(script)
    out = regs.copy()
    T = out.T
    for op in script.ops:
        if sink is not None:
            sink.annotate(pattern=script.kind, ordinal=ordinal, block=op.block, slot=op.slot, op_index=op.index,
                          dst=op.dst, src1=op.src1, src2=op.src2, dummy=op.dummy)
        if op.kind is OpKind.M:
            T[op.dst] = field_mul(T[op.src1], T[op.src2], ctx, sink)
        elif op.kind is OpKind.N:
            T[op.dst] = field_neg(T[op.src1], sink, ctx)
        else:
            T[op.dst] = field_add(T[op.src1], T[op.src2], sink, ctx)
        if op.slot == SLOTS_PER_BLOCK and on_block_end is not None:
            if sink is not None:
                sink.clear_annotation()
            on_block_end(op.block)
    if sink is not None:
        sink.clear_annotation()
    return out
