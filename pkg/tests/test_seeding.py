import numpy as np
from hypothesis import given, strategies as st

from pilotfusion import seeding


def test_generator_is_reproducible():
    a = seeding.generator(5, 1, 2).standard_normal(4)
    b = seeding.generator(5, 1, 2).standard_normal(4)
    np.testing.assert_array_equal(a, b)


def test_different_keys_give_different_streams():
    a = seeding.generator(5, 1, 2).standard_normal(4)
    b = seeding.generator(5, 2, 1).standard_normal(4)
    assert not np.array_equal(a, b)


def test_streams_address_records_individually():
    many = seeding.streams(9, 5, 3)
    single = seeding.generator(9, 3, 4)
    assert many[4].integers(1 << 30) == single.integers(1 << 30)


@given(st.integers(0, 2**32), st.lists(st.integers(0, 1000), max_size=4))
def test_derive_seed_is_a_stable_63_bit_integer(seed, key):
    s = seeding.derive_seed(seed, *key)
    assert 0 <= s < 2**63
    assert s == seeding.derive_seed(seed, *key)


def test_derive_seed_frozen_value():
    # guards the documented seed hierarchy against accidental change
    assert seeding.derive_seed(0, 1, 0, 2) == 8832112248389967788
    assert seeding.derive_seed(2024, 0, 0) == 2976583197208752182
    assert seeding.derive_seed(0, 0, 0) != seeding.derive_seed(0, 0, 1)
