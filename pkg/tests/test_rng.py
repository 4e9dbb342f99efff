import numpy as np
import pytest

from demcurate.rng import Xoshiro256, derive_seed, splitmix64

MASK = (1 << 64) - 1


def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & MASK


def scalar_xoshiro(seed, n):
    """Textbook single-stream xoshiro256** seeded by SplitMix64."""
    state = seed
    s = []
    for _ in range(4):
        state, out = splitmix64(state)
        s.append(out)
    outs = []
    for _ in range(n):
        result = (_rotl((s[1] * 5) & MASK, 7) * 9) & MASK
        t = (s[1] << 17) & MASK
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        outs.append(result)
    return outs


def test_splitmix_reference_values():
    # published SplitMix64 outputs for seed 0
    state = 0
    outs = []
    for _ in range(3):
        state, out = splitmix64(state)
        outs.append(out)
    assert outs == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]


def test_single_lane_matches_scalar_generator():
    rng = Xoshiro256(1234, lanes=1)
    assert rng.next_uint64(20).tolist() == scalar_xoshiro(1234, 20)


def test_lanes_are_interleaved_step_major():
    rng = Xoshiro256(7, lanes=4)
    out = rng.next_uint64(12).reshape(3, 4)
    first_lane = scalar_xoshiro(7, 3)
    assert out[:, 0].tolist() == first_lane


def test_stream_independent_of_request_chunking():
    a = Xoshiro256(99).next_uint64(5000)
    rng = Xoshiro256(99)
    b = np.concatenate([rng.next_uint64(n) for n in (1, 1023, 2000, 1976)])
    assert np.array_equal(a, b)


def test_uniform_range_and_moments():
    u = Xoshiro256(3).random(200_000)
    assert u.min() >= 0 and u.max() < 1
    assert abs(u.mean() - 0.5) < 0.005
    z = Xoshiro256(4).normal(200_000)
    assert abs(z.mean()) < 0.01 and abs(z.std() - 1) < 0.01


def test_integers_and_choice():
    ints = Xoshiro256(5).integers(3, 9, 10_000)
    assert ints.min() == 3 and ints.max() == 8
    pick = Xoshiro256(6).choice(100, 30)
    assert len(set(pick.tolist())) == 30 and pick.max() < 100
    with pytest.raises(ValueError):
        Xoshiro256(6).choice(3, 4)


def test_derive_seed_is_stable_and_key_sensitive():
    assert derive_seed(1, "a", 2) == derive_seed(1, "a", 2)
    assert derive_seed(1, "a", 2) != derive_seed(1, "a", 3)
    assert derive_seed(1, "ab") != derive_seed(1, "a", "b")
    assert 0 <= derive_seed(-5, "x") <= MASK
