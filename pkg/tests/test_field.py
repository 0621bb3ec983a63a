import pytest

from models.events import EventKind, EventRecorder
from services.field import (P256_P, FieldElement, MontgomeryContext, default_context, field_add, field_mul,
                            field_neg, field_sub, from_limbs, mont_mul, to_limbs, word_operation_profile)


@pytest.mark.parametrize("word_bits", [32, 64])
def test_field_mul_matches_integer_product(py_random, word_bits):
    ctx = default_context(word_bits)
    for _ in range(200):
        a, b = py_random.randrange(P256_P), py_random.randrange(P256_P)
        product = field_mul(FieldElement.from_int(a, word_bits), FieldElement.from_int(b, word_bits), ctx)
        assert product.value == a * b % P256_P


@pytest.mark.parametrize("word_bits", [32, 64])
def test_mont_mul_includes_r_inverse(py_random, word_bits):
    ctx = default_context(word_bits)
    a, b = py_random.randrange(P256_P), py_random.randrange(P256_P)
    result = mont_mul(ctx.element(a), ctx.element(b), ctx)
    assert result.value == a * b * ctx.R_inv % P256_P


def test_field_mul_edge_values():
    ctx = default_context(32)
    one = FieldElement.from_int(1, 32)
    p_minus_1 = FieldElement.from_int(P256_P - 1, 32)
    assert field_mul(p_minus_1, p_minus_1, ctx).value == 1
    assert field_mul(one, one, ctx).value == 1
    assert field_mul(FieldElement.from_int(0, 32), p_minus_1, ctx).is_zero()


def test_add_and_neg(py_random):
    for _ in range(200):
        a, b = py_random.randrange(P256_P), py_random.randrange(P256_P)
        fa, fb = FieldElement.from_int(a), FieldElement.from_int(b)
        assert field_add(fa, fb).value == (a + b) % P256_P
        assert field_neg(fa).value == (-a) % P256_P
        assert field_sub(fa, fb).value == (a - b) % P256_P


def test_add_wraps_at_modulus():
    p_minus_1 = FieldElement.from_int(P256_P - 1)
    assert field_add(p_minus_1, FieldElement.from_int(1)).is_zero()
    assert field_add(p_minus_1, p_minus_1).value == P256_P - 2


def test_neg_of_zero_is_zero():
    zero = FieldElement.from_int(0)
    assert field_neg(zero).is_zero()


def test_from_hex_rejects_out_of_range():
    with pytest.raises(ValueError):
        FieldElement.from_hex(f"{P256_P:x}")
    assert FieldElement.from_hex(f"{P256_P - 1:x}").value == P256_P - 1


def test_limb_conversion():
    value = 0x0123456789ABCDEF
    limbs = to_limbs(value, 32, 8)
    assert limbs[:2] == (0x89ABCDEF, 0x01234567)
    assert from_limbs(limbs, 32) == value


def test_context_rejects_odd_word_width():
    with pytest.raises(ValueError):
        MontgomeryContext.create(P256_P, 24)


def test_word_operation_counts_do_not_depend_on_values(py_random):
    ctx = default_context(32)
    profiles = {
        word_operation_profile(ctx.element(py_random.randrange(P256_P)), ctx.element(py_random.randrange(P256_P)), ctx)
        for _ in range(50)
    }
    profiles.add(word_operation_profile(ctx.element(0), ctx.element(0), ctx))
    profiles.add(word_operation_profile(ctx.element(P256_P - 1), ctx.element(P256_P - 1), ctx))
    assert len(profiles) == 1


def test_field_mul_records_x_then_x_prime():
    recorder = EventRecorder()
    a, b = FieldElement.from_int(3), FieldElement.from_int(5)
    field_mul(a, b, sink=recorder)
    field_neg(a, sink=recorder)
    field_add(a, b, sink=recorder)
    assert [e.kind for e in recorder.events] == [EventKind.X, EventKind.X_PRIME, EventKind.N, EventKind.A]
    assert recorder.events[0].operands == (a.limbs, b.limbs)
    assert recorder.events[-1].result == FieldElement.from_int(8).limbs


def test_recorder_can_drop_values():
    recorder = EventRecorder(keep_values=False)
    field_mul(FieldElement.from_int(3), FieldElement.from_int(5), sink=recorder)
    assert all(e.operands == () and e.result is None for e in recorder.events)


def test_field_axioms(py_random):
    for _ in range(100):
        a, b, c = (FieldElement.from_int(py_random.randrange(P256_P)) for _ in range(3))
        assert field_mul(a, b) == field_mul(b, a)
        assert field_add(a, b) == field_add(b, a)
        assert field_mul(field_mul(a, b), c) == field_mul(a, field_mul(b, c))
        assert field_add(field_add(a, b), c) == field_add(a, field_add(b, c))
        assert field_mul(a, field_add(b, c)) == field_add(field_mul(a, b), field_mul(a, c))


@pytest.mark.parametrize("word_bits", [32, 64])
def test_mont_mul_of_zero_and_of_r(py_random, word_bits):
    ctx = default_context(word_bits)
    b = ctx.element(py_random.randrange(P256_P))
    assert mont_mul(ctx.element(0), b, ctx).is_zero()
    r = ctx.element(ctx.R)
    assert mont_mul(r, r, ctx).value == ctx.R


def test_field_mul_by_one_is_identity_with_two_events(py_random):
    recorder = EventRecorder()
    a = FieldElement.from_int(py_random.randrange(P256_P))
    assert field_mul(a, FieldElement.from_int(1), sink=recorder) == a
    assert [e.kind for e in recorder.events] == [EventKind.X, EventKind.X_PRIME]
