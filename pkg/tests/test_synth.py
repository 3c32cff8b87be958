import numpy as np
import pytest

from semid import assign_greedy, conflict_stats, train_rq
from semid.synth import gen_synthetic


def greedy_conflicts(data, seed):
    stack = train_rq(data, 3, 32, seed=seed, max_iters=20)
    return conflict_stats(assign_greedy(data, stack)).proportion


def test_seeded_and_float32_exact():
    a = gen_synthetic(100, 8, 4, 0.2, seed=3)
    b = gen_synthetic(100, 8, 4, 0.2, seed=3)
    assert a.keys == b.keys and np.array_equal(a.vectors, b.vectors)
    assert np.array_equal(a.vectors, a.vectors.astype(np.float32))
    assert not np.array_equal(a.vectors, gen_synthetic(100, 8, 4, 0.2, seed=4).vectors)


def test_keys_sort_in_generation_order():
    keys = gen_synthetic(120, 2, 3, 0.1).keys
    assert list(keys) == sorted(keys) and len(set(keys)) == 120


def test_zero_spread_repeats_means():
    data = gen_synthetic(50, 4, 3, 0.0, seed=1)
    assert len({tuple(v) for v in data.vectors}) <= 3


def test_noise_norm_tracks_spread():
    data = gen_synthetic(4000, 32, 1, 0.5, seed=2)
    mean = data.vectors.mean(axis=0)
    assert np.linalg.norm(data.vectors - mean, axis=1).mean() == pytest.approx(0.5, rel=0.05)


def test_intrinsic_dim_confines_noise():
    data = gen_synthetic(500, 16, 1, 0.3, seed=0, intrinsic_dim=3)
    centred = data.vectors - data.vectors.mean(axis=0)
    s = np.linalg.svd(centred, compute_uv=False)
    assert s[3] < 1e-4 * s[0]


@pytest.mark.parametrize("seed", [0, 1])
def test_conflict_orderings(seed):
    # conflicts are not monotone in spread; these orderings hold
    assert greedy_conflicts(gen_synthetic(2000, 16, 32, 0.0, seed=seed), seed) == 1.0
    wide = greedy_conflicts(gen_synthetic(2000, 16, 32, 1.5, seed=seed), seed)
    mid = greedy_conflicts(gen_synthetic(2000, 16, 32, 0.3, seed=seed), seed)
    assert 0 < wide < mid < 1
    flat = greedy_conflicts(gen_synthetic(2000, 16, 32, 0.1, seed=seed, intrinsic_dim=2), seed)
    iso = greedy_conflicts(gen_synthetic(2000, 16, 32, 0.1, seed=seed), seed)
    assert flat > iso


def test_validation():
    with pytest.raises(ValueError):
        gen_synthetic(0, 4, 2, 0.1)
    with pytest.raises(ValueError):
        gen_synthetic(10, 4, 2, -1.0)
    with pytest.raises(ValueError):
        gen_synthetic(10, 4, 2, 0.1, intrinsic_dim=0)
