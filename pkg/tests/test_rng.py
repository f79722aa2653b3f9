import numpy as np
import pytest

from plotbench.rng import Rng, derive_seed, splitmix64


def test_counter_mode_matches_sequential_definition():
    # output i must be mix(seed + (i+1)*gamma): slicing anywhere agrees
    full = splitmix64(123, 0, 100)
    tail = splitmix64(123, 37, 63)
    assert np.array_equal(full[37:], tail)


def test_known_splitmix64_values():
    # reference values computed from the published splitmix64 algorithm
    # (Steele/Lea/Flood finalizer, seed advanced by the golden gamma)
    def reference(seed):
        mask = (1 << 64) - 1
        state = (seed + 0x9E3779B97F4A7C15) & mask
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
        return z ^ (z >> 31)

    for seed in (0, 1, 42, 2**64 - 1):
        assert int(splitmix64(seed, 0, 1)[0]) == reference(seed)


def test_stream_determinism_and_independence():
    a = Rng(7).normals(1000)
    b = Rng(7).normals(1000)
    c = Rng(8).normals(1000)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_sequential_calls_do_not_overlap():
    rng = Rng(5)
    first = rng.uniforms(10)
    second = rng.uniforms(10)
    combined = Rng(5).uniforms(20)
    assert np.array_equal(np.concatenate([first, second]), combined)


def test_normals_moments():
    z = Rng(11).normals(200_000)
    assert abs(z.mean()) < 0.01
    assert abs(z.std() - 1.0) < 0.01
    # Box-Muller never produces non-finite values
    assert np.all(np.isfinite(z))


def test_normals_scaling_zero_std_is_exact_zero():
    z = Rng(3).normals(100, std=0.0)
    assert np.all(z == 0.0)


def test_uniform_bounds():
    u = Rng(9).uniform(-0.9, 0.9, 10_000)
    assert u.min() >= -0.9 and u.max() < 0.9


def test_integers_bounds_and_coverage():
    draws = Rng(13).integers(4, count=10_000)
    assert set(np.unique(draws)) == {0, 1, 2, 3}


def test_choice_without_replacement_unique():
    picked = Rng(1).choice(list(range(10)), 5, replace=False)
    assert len(set(picked)) == 5


def test_choice_rejects_oversized_draw():
    with pytest.raises(ValueError):
        Rng(1).choice([1, 2], 3, replace=False)


def test_shuffle_is_permutation():
    items = list(range(50))
    shuffled = Rng(2).shuffle(items)
    assert sorted(shuffled) == items
    assert shuffled != items


def test_derive_seed_stable_and_sensitive():
    assert derive_seed(1, "a", 2) == derive_seed(1, "a", 2)
    assert derive_seed(1, "a", 2) != derive_seed(1, "a", 3)
    assert 0 <= derive_seed("anything") < 2**64
