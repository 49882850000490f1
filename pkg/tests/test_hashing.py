import numpy as np
import pytest
from scipy import stats

from hsketch.hashing import (
    MERSENNE61,
    Family,
    HashSeed,
    addmod,
    bucket_hash,
    mulmod,
    sign_hash,
    survival_level,
)

P = MERSENNE61


def horner(coeffs, key):
    acc = 0
    for c in reversed(coeffs):
        acc = (acc * key + c) % P
    return acc


def test_mulmod_matches_big_integers():
    rng = np.random.default_rng(0)
    a = rng.integers(0, P, 5000, dtype=np.int64)
    b = rng.integers(0, P, 5000, dtype=np.int64)
    a[:4] = [0, 1, P - 1, P - 2]
    b[:4] = [P - 1, P - 1, P - 1, 2]
    got = mulmod(a.astype(np.uint64), b.astype(np.uint64))
    assert [int(x) for x in got] == [(int(x) * int(y)) % P for x, y in zip(a, b)]
    got = addmod(a.astype(np.uint64), b.astype(np.uint64))
    assert [int(x) for x in got] == [(int(x) + int(y)) % P for x, y in zip(a, b)]


def test_bucket_fixture_by_hand():
    seed = HashSeed(Family.BUCKET, (987654321987, 123456789123))
    keys = [0, 1, 5, 1023, 10**6]
    got = bucket_hash(seed, keys, 97)
    # ((a*i + b) mod p) mod w with b = c0, a = c1
    want = [((123456789123 * i + 987654321987) % P) % 97 for i in keys]
    assert got.tolist() == want


def test_single_bucket():
    seed = HashSeed.draw(Family.BUCKET, np.random.default_rng(1))
    assert np.all(bucket_hash(seed, np.arange(1000), 1) == 0)


def test_zero_buckets_rejected():
    seed = HashSeed.draw(Family.BUCKET, np.random.default_rng(1))
    with pytest.raises(ValueError):
        bucket_hash(seed, [1], 0)


def test_evaluate_matches_horner_for_every_family():
    rng = np.random.default_rng(2)
    keys = np.r_[rng.integers(0, 1 << 40, 300), [0, 1, P - 1, P, P + 1]]
    for family in Family:
        seed = HashSeed.draw(family, rng)
        got = seed.evaluate(keys)
        assert [int(x) for x in got] == [horner(seed.coefficients, int(k)) for k in keys]


def test_bucket_uniformity_chi_square():
    seed = HashSeed.draw(Family.BUCKET, np.random.default_rng(3))
    counts = np.bincount(bucket_hash(seed, np.arange(100_000), 64), minlength=64)
    expected = 100_000 / 64
    chi2 = np.sum((counts - expected) ** 2 / expected)
    assert chi2 < stats.chi2.ppf(0.999, 63)


def test_sign_values_and_determinism():
    seed = HashSeed.draw(Family.SIGN, np.random.default_rng(4))
    s1 = sign_hash(seed, np.arange(100_000))
    s2 = sign_hash(seed, np.arange(100_000))
    assert set(np.unique(s1).tolist()) == {-1, 1}
    np.testing.assert_array_equal(s1, s2)
    assert abs(s1.mean()) <= 0.02


def test_sign_four_wise_products():
    rng = np.random.default_rng(5)
    seed = HashSeed.draw(Family.SIGN, rng)
    signs = sign_hash(seed, np.arange(4096)).astype(float)
    tuples = np.array([rng.choice(4096, 4, replace=False) for _ in range(10_000)])
    assert abs(np.prod(signs[tuples], axis=1).mean()) <= 0.05


def test_survival_levels():
    seed = HashSeed.draw(Family.DOWNSAMPLE, np.random.default_rng(6))
    n = 4096
    level = survival_level(seed, np.arange(n), 12)
    assert np.all(level >= 0)  # everything survives at rate 1
    for j in range(1, 7):
        count = np.sum(level >= j)
        assert abs(count - n * 2.0**-j) <= 4 * np.sqrt(n * 2.0**-j)
    big = survival_level(seed, np.arange(10_000), 12)
    for j in range(12):
        assert np.all((big >= j + 1) <= (big >= j))


def test_survival_cap():
    seed = HashSeed(Family.DOWNSAMPLE, (0, 0))  # constant 0 has every leading bit zero
    assert np.all(survival_level(seed, np.arange(10), 5) == 5)


def test_seed_serialization():
    rng = np.random.default_rng(7)
    for family in Family:
        seed = HashSeed.draw(family, rng)
        blob = seed.to_bytes()
        assert len(blob) == 1 + 8 + 1 + 8 * (seed.degree + 1)
        assert blob[0] == int(family)
        assert int.from_bytes(blob[1:9], "little") == P
        assert blob[9] == seed.degree
        back, offset = HashSeed.from_bytes(b"xx" + blob, 2)
        assert offset == 2 + len(blob)
        assert back == seed
        keys = np.arange(500)
        np.testing.assert_array_equal(back.evaluate(keys), seed.evaluate(keys))


def test_same_rng_state_same_function():
    a = HashSeed.draw(Family.SIGN, np.random.default_rng(8))
    b = HashSeed.draw(Family.SIGN, np.random.default_rng(8))
    assert a == b


def test_seed_validation():
    with pytest.raises(ValueError):
        HashSeed(Family.SIGN, (1, 2))
    with pytest.raises(ValueError):
        HashSeed(Family.BUCKET, (P, 1))
    with pytest.raises(ValueError):
        HashSeed(Family.BUCKET, (1, 1), prime=101)
    with pytest.raises(ValueError):
        HashSeed.draw(Family.BUCKET, np.random.default_rng(0)).evaluate([-1])


@pytest.mark.parametrize("w", [16, 256])
def test_pairwise_collision_rate(w):
    rng = np.random.default_rng(9)
    trials = 20_000
    hits = 0
    for _ in range(trials):
        seed = HashSeed.draw(Family.BUCKET, rng)
        b = bucket_hash(seed, [17, 4242], w)
        hits += b[0] == b[1]
    rate = hits / trials
    assert 0.5 / w <= rate <= 1.5 / w
