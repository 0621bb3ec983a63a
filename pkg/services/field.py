"""Constant-structure arithmetic modulo the P-256 prime.

Elements live in the standard residue domain. A field product is two
Montgomery multiplications (X then X'), the second one by R^2 to cancel
the R^-1 factors. Addition and negation reduce with masks instead of
branches, and every primitive reports itself to an optional event sink.
"""
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Tuple

from config.settings import settings
from models.events import EventKind, Limbs

P256_P = 0xFFFFFFFF00000001000000000000000000000000FFFFFFFFFFFFFFFFFFFFFFFF
R_BITS = 256


def to_limbs(value: int, word_bits: int, count: int) -> Limbs:
    mask = (1 << word_bits) - 1
    return tuple((value >> (word_bits * i)) & mask for i in range(count))


def from_limbs(limbs: Limbs, word_bits: int) -> int:
    value = 0
    for limb in reversed(limbs):
        value = (value << word_bits) | limb
    return value


@dataclass(frozen=True)
class FieldElement:
    """A canonical residue mod p stored as little-endian fixed-width limbs"""
    limbs: Limbs
    word_bits: int = 32

    @classmethod
    def from_int(cls, value: int, word_bits: Optional[int] = None) -> "FieldElement":
        word_bits = word_bits or settings.WORD_BITS
        return cls(to_limbs(value % P256_P, word_bits, R_BITS // word_bits), word_bits)

    @classmethod
    def from_hex(cls, text: str, word_bits: Optional[int] = None) -> "FieldElement":
        text = text.strip().lower()
        if text.startswith("0x"):
            text = text[2:]
        value = int(text, 16)
        if value >= P256_P:
            raise ValueError(f"Field element out of range: {text}")
        return cls.from_int(value, word_bits)

    @property
    def value(self) -> int:
        return from_limbs(self.limbs, self.word_bits)

    def hex(self) -> str:
        return f"{self.value:064x}"

    def is_zero(self) -> bool:
        return not any(self.limbs)

    def __int__(self) -> int:
        return self.value

    def __repr__(self) -> str:
        return f"FieldElement(0x{self.hex()})"


@dataclass(frozen=True)
class MontgomeryContext:
    p: int
    word_bits: int
    limb_count: int
    R: int
    R2: int
    n0: int
    p_limbs: Limbs
    r2: FieldElement

    @classmethod
    def create(cls, p: int = P256_P, word_bits: int = 32) -> "MontgomeryContext":
        if R_BITS % word_bits:
            raise ValueError(f"Word width {word_bits} does not divide {R_BITS}")
        limb_count = R_BITS // word_bits
        radix = 1 << word_bits
        R = (1 << R_BITS) % p
        R2 = (R * R) % p
        n0 = (-pow(p, -1, radix)) % radix
        return cls(
            p=p,
            word_bits=word_bits,
            limb_count=limb_count,
            R=R,
            R2=R2,
            n0=n0,
            p_limbs=to_limbs(p, word_bits, limb_count),
            r2=FieldElement(to_limbs(R2, word_bits, limb_count), word_bits),
        )

    @property
    def mask(self) -> int:
        return (1 << self.word_bits) - 1

    @property
    def R_inv(self) -> int:
        return pow(1 << R_BITS, -1, self.p)

    def element(self, value: int) -> FieldElement:
        return FieldElement(to_limbs(value % self.p, self.word_bits, self.limb_count), self.word_bits)


@lru_cache(maxsize=None)
def default_context(word_bits: Optional[int] = None) -> MontgomeryContext:
    return MontgomeryContext.create(P256_P, word_bits or settings.WORD_BITS)


def _context_for(a: FieldElement, ctx: Optional[MontgomeryContext]) -> MontgomeryContext:
    return ctx if ctx is not None else default_context(a.word_bits)


def _select(take: int, when_true: Limbs, when_false: Limbs, mask: int) -> Limbs:
    sel = -take & mask
    keep = sel ^ mask
    return tuple((x & sel) | (y & keep) for x, y in zip(when_true, when_false))


def mont_mul(a: FieldElement, b: FieldElement, ctx: Optional[MontgomeryContext] = None, tally: Optional[Counter] = None) -> FieldElement:
    """CIOS Montgomery product a*b*R^-1 mod p.

    The loop trip counts and the final subtraction do not depend on the
    operand values. ``tally`` counts word operations per kind.
    """
    ctx = _context_for(a, ctx)
    s = ctx.limb_count
    w = ctx.word_bits
    mask = ctx.mask
    n = ctx.p_limbs
    n0 = ctx.n0
    A = a.limbs
    B = b.limbs
    t = [0] * (s + 2)

    for i in range(s):
        bi = B[i]
        carry = 0
        for j in range(s):
            acc = t[j] + A[j] * bi + carry
            t[j] = acc & mask
            carry = acc >> w
        acc = t[s] + carry
        t[s] = acc & mask
        t[s + 1] = acc >> w

        m = (t[0] * n0) & mask
        carry = (t[0] + m * n[0]) >> w
        for j in range(1, s):
            acc = t[j] + m * n[j] + carry
            t[j - 1] = acc & mask
            carry = acc >> w
        acc = t[s] + carry
        t[s - 1] = acc & mask
        t[s] = t[s + 1] + (acc >> w)

        if tally is not None:
            tally["mul"] += 2 * s + 1
            tally["add"] += 4 * s + 2
            tally["mask"] += 2 * s + 2
            tally["shift"] += 2 * s + 2

    # Result is below 2p: one masked subtraction
    diff_limbs = [0] * s
    borrow = 0
    for j in range(s):
        diff = t[j] - n[j] - borrow
        diff_limbs[j] = diff & mask
        borrow = (diff >> w) & 1
    take = t[s] | (borrow ^ 1)
    limbs = _select(take, tuple(diff_limbs), tuple(t[:s]), mask)

    if tally is not None:
        tally["sub"] += s
        tally["select"] += s
    return FieldElement(limbs, w)


def field_mul(a: FieldElement, b: FieldElement, ctx: Optional[MontgomeryContext] = None, sink=None) -> FieldElement:
    """a*b mod p as the X, X' pair of Montgomery multiplications"""
    ctx = _context_for(a, ctx)
    t = mont_mul(a, b, ctx)
    if sink is not None:
        sink.record(EventKind.X, (a.limbs, b.limbs), t.limbs)
    r = mont_mul(t, ctx.r2, ctx)
    if sink is not None:
        sink.record(EventKind.X_PRIME, (t.limbs, ctx.r2.limbs), r.limbs)
    return r


def field_add(a: FieldElement, b: FieldElement, sink=None, ctx: Optional[MontgomeryContext] = None) -> FieldElement:
    ctx = _context_for(a, ctx)
    w = ctx.word_bits
    mask = ctx.mask
    sum_limbs = []
    carry = 0
    for x, y in zip(a.limbs, b.limbs):
        acc = x + y + carry
        sum_limbs.append(acc & mask)
        carry = acc >> w
    diff_limbs = []
    borrow = 0
    for x, q in zip(sum_limbs, ctx.p_limbs):
        diff = x - q - borrow
        diff_limbs.append(diff & mask)
        borrow = (diff >> w) & 1
    take = carry | (borrow ^ 1)
    result = FieldElement(_select(take, tuple(diff_limbs), tuple(sum_limbs), mask), w)
    if sink is not None:
        sink.record(EventKind.A, (a.limbs, b.limbs), result.limbs)
    return result


def field_neg(a: FieldElement, sink=None, ctx: Optional[MontgomeryContext] = None) -> FieldElement:
    ctx = _context_for(a, ctx)
    w = ctx.word_bits
    mask = ctx.mask
    diff_limbs = []
    borrow = 0
    accumulated = 0
    for q, x in zip(ctx.p_limbs, a.limbs):
        diff = q - x - borrow
        diff_limbs.append(diff & mask)
        borrow = (diff >> w) & 1
        accumulated |= x
    # -0 must stay 0 rather than p
    nonzero = (accumulated + mask) >> w
    keep = -nonzero & mask
    result = FieldElement(tuple(limb & keep for limb in diff_limbs), w)
    if sink is not None:
        sink.record(EventKind.N, (a.limbs,), result.limbs)
    return result


def field_sub(a: FieldElement, b: FieldElement, sink=None, ctx: Optional[MontgomeryContext] = None) -> FieldElement:
    """Convenience a - b built from N and A; emits both events"""
    return field_add(a, field_neg(b, sink, ctx), sink, ctx)


def word_operation_profile(a: FieldElement, b: FieldElement, ctx: Optional[MontgomeryContext] = None) -> Tuple[Tuple[str, int], ...]:
    tally: Counter = Counter()
    mont_mul(a, b, ctx, tally)
    return tuple(sorted(tally.items()))
