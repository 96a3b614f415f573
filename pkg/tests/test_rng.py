from __future__ import annotations

import collections

import pytest

from promptforge.rng import KeyedStream, hash64, splitmix64


def test_splitmix64_is_deterministic_and_64_bit():
    seen = set()
    for x in range(200):
        value = splitmix64(x)
        assert 0 <= value < 2**64
        seen.add(value)
    assert len(seen) == 200
    assert splitmix64(12345) == splitmix64(12345)


def test_hash64_distinguishes_part_order_and_types():
    assert hash64(1, "a", "b") != hash64(1, "b", "a")
    assert hash64(1, "ab") != hash64(1, "a", "b")
    assert hash64(1, 12) != hash64(1, "12")
    assert hash64(1, "x") != hash64(2, "x")


def test_hash64_rejects_bools():
    with pytest.raises(TypeError):
        hash64(1, True)


def test_keyed_stream_reproducible():
    a = [KeyedStream(hash64(9, "t")).next_u64() for _ in range(3)]
    b = [KeyedStream(hash64(9, "t")).next_u64() for _ in range(3)]
    assert a == b
    stream = KeyedStream(hash64(9, "t"))
    first, second = stream.next_u64(), stream.next_u64()
    assert first != second


def test_next_float_unit_interval():
    stream = KeyedStream(hash64(3, "f"))
    values = [stream.next_float() for _ in range(1000)]
    assert all(0.0 <= v < 1.0 for v in values)
    mean = sum(values) / len(values)
    assert 0.45 < mean < 0.55


def test_next_below_unbiased_small_range():
    stream = KeyedStream(hash64(4, "below"))
    counts = collections.Counter(stream.next_below(3) for _ in range(3000))
    assert set(counts) == {0, 1, 2}
    for n in counts.values():
        assert 850 < n < 1150


def test_next_below_requires_positive():
    stream = KeyedStream(1)
    with pytest.raises(ValueError):
        stream.next_below(0)


def test_shuffled_indices_is_permutation():
    for seed in range(20):
        order = KeyedStream(hash64(seed, "perm")).shuffled_indices(17)
        assert sorted(order) == list(range(17))
    assert KeyedStream(hash64(0, "perm")).shuffled_indices(17) != list(range(17))


def test_sample_without_replacement_properties():
    for seed in range(30):
        stream = KeyedStream(hash64(seed, "swr"))
        picked = stream.sample_without_replacement(10, 4)
        assert len(picked) == 4
        assert len(set(picked)) == 4
        assert all(0 <= i < 10 for i in picked)


def test_sample_without_replacement_full_draw_is_permutation():
    picked = KeyedStream(hash64(5, "swr")).sample_without_replacement(8, 8)
    assert sorted(picked) == list(range(8))


def test_sample_without_replacement_rejects_overdraw():
    with pytest.raises(ValueError):
        KeyedStream(1).sample_without_replacement(3, 4)
