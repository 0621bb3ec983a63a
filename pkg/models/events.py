from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

Limbs = Tuple[int, ...]


class OpKind(str, Enum):
    M = "M"
    N = "N"
    A = "A"


class PatternKind(str, Enum):
    PD = "PD"
    PA = "PA"


class EventKind(str, Enum):
    X = "X"
    X_PRIME = "X'"
    N = "N"
    A = "A"
    NOP_SHORT = "NOP_SHORT"
    NOP_LONG = "NOP_LONG"
    PATTERN_START = "PATTERN_START"
    PATTERN_END = "PATTERN_END"

    @property
    def is_primitive(self) -> bool:
        return self in PRIMITIVE_KINDS

    @property
    def is_marker(self) -> bool:
        return self in (EventKind.PATTERN_START, EventKind.PATTERN_END)


PRIMITIVE_KINDS = (EventKind.X, EventKind.X_PRIME, EventKind.N, EventKind.A)

# The emitted shape of one MNAMNAA block
BLOCK_EVENT_KINDS = (
    EventKind.X, EventKind.X_PRIME, EventKind.N, EventKind.A,
    EventKind.X, EventKind.X_PRIME, EventKind.N, EventKind.A, EventKind.A,
)


@dataclass(frozen=True)
class FieldOpEvent:
    """Ground-truth record of one primitive field operation or trace marker.

    Markers (pattern start/end) carry no duration; primitive and NOP events
    get their cycle count assigned by the duration model at simulation time.
    """
    kind: EventKind
    pattern: Optional[PatternKind] = None
    ordinal: Optional[int] = None
    block: Optional[int] = None
    slot: Optional[int] = None
    op_index: Optional[int] = None
    dst: Optional[int] = None
    src1: Optional[int] = None
    src2: Optional[int] = None
    dummy: bool = False
    operands: Tuple[Limbs, ...] = ()
    result: Optional[Limbs] = None
    duration: Optional[int] = None

    @property
    def registers(self) -> Tuple[Optional[int], Optional[int], Optional[int]]:
        return (self.dst, self.src1, self.src2)

    def structure(self) -> Tuple[str, Optional[int], Optional[int], Optional[int]]:
        """The value-independent part of the event: kind and addressing"""
        return (self.kind.value, self.dst, self.src1, self.src2)

    def with_duration(self, cycles: int) -> "FieldOpEvent":
        return replace(self, duration=cycles)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind.value,
            "pattern": self.pattern.value if self.pattern else None,
            "ordinal": self.ordinal,
            "block": self.block,
            "slot": self.slot,
            "op_index": self.op_index,
            "dst": self.dst,
            "src1": self.src1,
            "src2": self.src2,
            "dummy": self.dummy,
            "operands": [list(operand) for operand in self.operands],
            "result": list(self.result) if self.result is not None else None,
            "duration": self.duration,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "FieldOpEvent":
        return cls(
            kind=EventKind(data["kind"]),
            pattern=PatternKind(data["pattern"]) if data.get("pattern") else None,
            ordinal=data.get("ordinal"),
            block=data.get("block"),
            slot=data.get("slot"),
            op_index=data.get("op_index"),
            dst=data.get("dst"),
            src1=data.get("src1"),
            src2=data.get("src2"),
            dummy=bool(data.get("dummy", False)),
            operands=tuple(tuple(operand) for operand in data.get("operands", ())),
            result=tuple(data["result"]) if data.get("result") is not None else None,
            duration=data.get("duration"),
        )


class EventRecorder:
    """Event sink collecting annotated events.

    The atomic executor sets the current annotation before each scripted
    operation; field primitives then call ``record`` with their operands.
    """

    def __init__(self, keep_values: bool = True):
        self.events: List[FieldOpEvent] = []
        self.keep_values = keep_values
        self._context: Dict[str, Any] = {}

    def annotate(self, **context: Any):
        self._context = context

    def clear_annotation(self):
        self._context = {}

    def record(self, kind: EventKind, operands: Tuple[Limbs, ...] = (), result: Optional[Limbs] = None):
        context = dict(self._context)
        if kind is EventKind.X_PRIME and context.get("dst") is not None:
            # X' reads its own destination and the R^2 constant
            context["src1"] = context["dst"]
            context["src2"] = None
        if not self.keep_values:
            operands, result = (), None
        self.events.append(FieldOpEvent(kind=kind, operands=operands, result=result, **context))

    def marker(self, kind: EventKind, pattern: Optional[PatternKind] = None, ordinal: Optional[int] = None, block: Optional[int] = None):
        self.events.append(FieldOpEvent(kind=kind, pattern=pattern, ordinal=ordinal, block=block))

    def primitives(self) -> List[FieldOpEvent]:
        return [event for event in self.events if event.kind.is_primitive]

    def __len__(self) -> int:
        return len(self.events)
