"""Left-to-right double-and-add over the atomic executor, plus oracles.

The oracle formulas below use plain integer arithmetic and share no code
with the atomic scripts, so they serve as the correctness reference.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

from models.events import EventKind, PatternKind
from services.atomic import RegisterFile, addition_script, doubling_script, execute
from services.errors import (CurveError, DegenerateAdditionError, PointAtInfinityError,
                             PointNotOnCurveError, ScalarError)
from services.field import P256_P, FieldElement, MontgomeryContext

logger = logging.getLogger(__name__)

# NIST P-256 (FIPS 186), a = -3
P = P256_P
A = P - 3
B = 0x5AC635D8AA3A93E7B3EBBD55769886BC651D06B0CC53B0F63BCE3C3E27D2604B
GX = 0x6B17D1F2E12C4247F8BCE6E563A440F277037D812DEB33A0F4A13945D898C296
GY = 0x4FE342E2FE1A7F9B8EE7EB4A7C0F9E162BCE33576B315ECECBB6406837BF51F5
ORDER = 0xFFFFFFFF00000000FFFFFFFFFFFFFFFFBCE6FAADA7179E84F3B9CAC2FC632551


@dataclass(frozen=True)
class AffinePoint:
    x: FieldElement
    y: FieldElement
    infinity: bool = False

    @classmethod
    def from_ints(cls, x: int, y: int, word_bits: Optional[int] = None) -> "AffinePoint":
        return cls(FieldElement.from_int(x, word_bits), FieldElement.from_int(y, word_bits))

    @classmethod
    def at_infinity(cls, word_bits: Optional[int] = None) -> "AffinePoint":
        zero = FieldElement.from_int(0, word_bits)
        return cls(zero, zero, True)

    def coords(self) -> Tuple[int, int]:
        return self.x.value, self.y.value


@dataclass(frozen=True)
class JacobianPoint:
    X: FieldElement
    Y: FieldElement
    Z: FieldElement

    @classmethod
    def from_ints(cls, X: int, Y: int, Z: int, word_bits: Optional[int] = None) -> "JacobianPoint":
        return cls(FieldElement.from_int(X, word_bits), FieldElement.from_int(Y, word_bits),
                   FieldElement.from_int(Z, word_bits))

    @classmethod
    def from_affine(cls, point: AffinePoint) -> "JacobianPoint":
        if point.infinity:
            raise PointAtInfinityError("The point at infinity has no Jacobian form with Z != 0")
        return cls(point.x, point.y, FieldElement.from_int(1, point.x.word_bits))

    @property
    def word_bits(self) -> int:
        return self.X.word_bits

    def coords(self) -> Tuple[int, int, int]:
        return self.X.value, self.Y.value, self.Z.value

    def rescale(self, factor: int) -> "JacobianPoint":
        """(l^2 X, l^3 Y, l Z) represents the same affine point"""
        X, Y, Z = self.coords()
        return JacobianPoint.from_ints(factor * factor * X, factor ** 3 * Y, factor * Z, self.word_bits)


@dataclass(frozen=True)
class Scalar:
    """MSB-first bit string with a leading 1"""
    bits: str

    @classmethod
    def from_bits(cls, text: str) -> "Scalar":
        text = text.strip()
        if text.startswith("0b"):
            text = text[2:]
        if not text:
            raise ScalarError("Scalar has zero length")
        if set(text) - {"0", "1"}:
            raise ScalarError(f"Scalar is not a bit string: {text}")
        if text[0] != "1":
            raise ScalarError("Scalar must start with a 1 bit")
        if len(text) > 256:
            raise ScalarError(f"Scalar has {len(text)} bits, at most 256 allowed")
        return cls(text)

    @classmethod
    def from_int(cls, value: int) -> "Scalar":
        if value < 1:
            raise ScalarError("Scalar must be positive")
        return cls.from_bits(bin(value)[2:])

    @property
    def value(self) -> int:
        return int(self.bits, 2)

    @property
    def length(self) -> int:
        return len(self.bits)

    @property
    def doublings(self) -> int:
        return self.length - 1

    @property
    def additions(self) -> int:
        return self.bits[1:].count("1")


G = AffinePoint.from_ints(GX, GY)


def on_curve(point: AffinePoint) -> bool:
    if point.infinity:
        return True
    x, y = point.coords()
    return (y * y - (x * x * x + A * x + B)) % P == 0


def _check_constants():
    if not on_curve(G):
        raise CurveError("P-256 base point fails the curve equation")


_check_constants()


def parse_point(x_hex: Optional[str], y_hex: Optional[str], word_bits: Optional[int] = None) -> AffinePoint:
    """Point from big-endian hex coordinates; missing coordinates mean G"""
    if x_hex is None and y_hex is None:
        return AffinePoint.from_ints(GX, GY, word_bits)
    if x_hex is None or y_hex is None:
        raise CurveError("Both point coordinates are required")
    try:
        point = AffinePoint(FieldElement.from_hex(x_hex, word_bits), FieldElement.from_hex(y_hex, word_bits))
    except ValueError as e:
        raise CurveError(f"Invalid point coordinate: {str(e)}")
    if not on_curve(point):
        raise PointNotOnCurveError(f"Point ({x_hex}, {y_hex}) is not on P-256")
    return point


def _run_pattern(script, regs: RegisterFile, ctx, sink, ordinal: int) -> RegisterFile:
    if sink is None:
        return execute(script, regs, ctx)

    last_block = script.block_count

    def close_block(block: int):
        kind = EventKind.NOP_LONG if block == last_block else EventKind.NOP_SHORT
        sink.marker(kind, pattern=script.kind, ordinal=ordinal, block=block)

    sink.marker(EventKind.PATTERN_START, pattern=script.kind, ordinal=ordinal)
    regs = execute(script, regs, ctx, sink, ordinal=ordinal, on_block_end=close_block)
    sink.marker(EventKind.PATTERN_END, pattern=script.kind, ordinal=ordinal)
    return regs


def scalar_mul(k: Scalar, point: AffinePoint, sink=None, ctx: Optional[MontgomeryContext] = None) -> JacobianPoint:
    """kP with the atomic PD/PA scripts (left-to-right binary method)"""
    if k.length < 1:
        raise ScalarError("Scalar has zero length")
    if point.infinity:
        raise PointAtInfinityError("Cannot multiply the point at infinity")
    if not on_curve(point):
        raise PointNotOnCurveError("Input point is not on P-256")

    one = FieldElement.from_int(1, point.x.word_bits)
    regs = RegisterFile.for_pattern(point.x, point.y, one, point.x, point.y)
    pd, pa = doubling_script(), addition_script()
    doublings = additions = 0
    for bit in k.bits[1:]:
        doublings += 1
        regs = _run_pattern(pd, regs, ctx, sink, doublings)
        if bit == "1":
            additions += 1
            regs = _run_pattern(pa, regs, ctx, sink, additions)

    logger.debug(f"kP done: {doublings} {PatternKind.PD.value}, {additions} {PatternKind.PA.value}")
    X, Y, Z = regs.point()
    return JacobianPoint(X, Y, Z)


def oracle_double(J: JacobianPoint) -> JacobianPoint:
    """Textbook a = -3 Jacobian doubling"""
    X, Y, Z = J.coords()
    if Z == 0:
        raise PointAtInfinityError("Doubling requires a finite point")
    zz = Z * Z
    alpha = 3 * (X - zz) * (X + zz) % P
    yy = Y * Y % P
    beta = 4 * X * yy % P
    X3 = (alpha * alpha - 2 * beta) % P
    Y3 = (alpha * (beta - X3) - 8 * yy * yy) % P
    Z3 = 2 * Y * Z % P
    return JacobianPoint.from_ints(X3, Y3, Z3, J.word_bits)


def oracle_add(J: JacobianPoint, Q: AffinePoint) -> JacobianPoint:
    """Textbook mixed Jacobian + affine addition"""
    X, Y, Z = J.coords()
    if Z == 0 or Q.infinity:
        raise PointAtInfinityError("Mixed addition requires finite inputs")
    x, y = Q.coords()
    zz = Z * Z % P
    U2 = x * zz % P
    S2 = y * zz * Z % P
    H = (U2 - X) % P
    r = (S2 - Y) % P
    if H == 0:
        raise DegenerateAdditionError("Mixed addition of P and +-P is not covered by the formula")
    HH = H * H % P
    HHH = HH * H % P
    V = X * HH % P
    X3 = (r * r - HHH - 2 * V) % P
    Y3 = (r * (V - X3) - Y * HHH) % P
    Z3 = Z * H % P
    return JacobianPoint.from_ints(X3, Y3, Z3, J.word_bits)


def oracle_scalar_mul(k: Scalar, point: AffinePoint) -> JacobianPoint:
    Q = JacobianPoint.from_affine(point)
    for bit in k.bits[1:]:
        Q = oracle_double(Q)
        if bit == "1":
            Q = oracle_add(Q, point)
    return Q


def to_affine(J: JacobianPoint) -> AffinePoint:
    X, Y, Z = J.coords()
    if Z == 0:
        raise PointAtInfinityError("Z = 0 represents the point at infinity")
    z_inv = pow(Z, P - 2, P)
    z_inv2 = z_inv * z_inv % P
    return AffinePoint.from_ints(X * z_inv2 % P, Y * z_inv2 * z_inv % P, J.word_bits)


# Affine big-integer reference, independent of the Jacobian formulas

def affine_add(p1: Optional[Tuple[int, int]], p2: Optional[Tuple[int, int]]) -> Optional[Tuple[int, int]]:
    if p1 is None:
        return p2
    if p2 is None:
        return p1
    x1, y1 = p1
    x2, y2 = p2
    if x1 == x2:
        if (y1 + y2) % P == 0:
            return None
        slope = (3 * x1 * x1 + A) * pow(2 * y1, P - 2, P) % P
    else:
        slope = (y2 - y1) * pow(x2 - x1, P - 2, P) % P
    x3 = (slope * slope - x1 - x2) % P
    y3 = (slope * (x1 - x3) - y1) % P
    return x3, y3


def affine_multiply(k: int, point: Tuple[int, int]) -> Optional[Tuple[int, int]]:
    result = None
    addend = point
    while k:
        if k & 1:
            result = affine_add(result, addend)
        addend = affine_add(addend, addend)
        k >>= 1
    return result
