import io

import numpy as np
import pytest
from scipy.stats import chi2

from tamedsde.noise import (
    AUXILIARY_STREAM,
    DRIVING_STREAM,
    BrownianPath,
    TimeGrid,
    coarsen,
    driving_path,
    generate_auxiliary,
    generate_path,
    load_path,
    save_path,
    stream_seed,
)


def test_grid_kappa_brackets_s():
    grid = TimeGrid(horizon=2.0, steps=7)
    h = grid.step
    ss = np.linspace(0.0, 2.0, 101, endpoint=False)
    ks = grid.kappa(ss)
    assert np.all(ks <= ss)
    assert np.all(ss < ks + h)
    assert grid.kappa(2.0) == 2.0


def test_grid_times_are_products():
    grid = TimeGrid(horizon=1.0, steps=10)
    assert np.array_equal(grid.times(), np.arange(11) * 0.1)
    assert grid.times()[-1] == pytest.approx(1.0)


def test_grid_rejects_bad_parameters():
    with pytest.raises(ValueError):
        TimeGrid(horizon=-1.0, steps=4)
    with pytest.raises(ValueError):
        TimeGrid(horizon=1.0, steps=0)


def test_increment_variance_matches_step():
    # N=4, T=1: each increment is Normal(0, 0.25); pool 1e6 of them
    grid = TimeGrid(horizon=1.0, steps=4)
    path = generate_path(grid, dim=250_000, seed=7)
    var = path.increments.var()
    assert abs(var - 0.25) < 0.01 * 0.25


def test_same_seed_reproduces_bit_exactly():
    grid = TimeGrid(horizon=1.0, steps=64)
    a = generate_path(grid, dim=3, seed=123)
    b = generate_path(grid, dim=3, seed=123)
    assert np.array_equal(a.increments, b.increments)


def test_different_seeds_uncorrelated():
    grid = TimeGrid(horizon=1.0, steps=1000)
    a = generate_path(grid, dim=1000, seed=1).increments.ravel()
    b = generate_path(grid, dim=1000, seed=2).increments.ravel()
    corr = np.corrcoef(a, b)[0, 1]
    assert abs(corr) < 0.01


def test_increment_normality_moment_test():
    # Jarque-Bera statistic on 1e6 pooled increments vs chi2(2) at 1e-3
    grid = TimeGrid(horizon=1.0, steps=1000)
    x = generate_path(grid, dim=1000, seed=99).increments.ravel()
    n = x.size
    z = (x - x.mean()) / x.std()
    skew = np.mean(z**3)
    kurt = np.mean(z**4)
    jb = n * (skew**2 / 6.0 + (kurt - 3.0) ** 2 / 24.0)
    assert jb < chi2.ppf(1.0 - 1e-3, df=2)


def test_coarsen_factor_one_is_identity():
    grid = TimeGrid(horizon=1.0, steps=8)
    path = generate_path(grid, 2, seed=5)
    assert coarsen(path, 1) is path


def test_coarsen_block_sums():
    grid = TimeGrid(horizon=1.0, steps=4)
    inc = np.array([[0.1], [-0.2], [0.3], [0.4]])
    path = BrownianPath(grid=grid, dim=1, increments=inc, seed=0)
    coarse = coarsen(path, 2)
    assert coarse.grid.steps == 2
    expected = np.array([[0.1 + -0.2], [0.3 + 0.4]])
    assert np.array_equal(coarse.increments, expected)
    assert np.allclose(coarse.increments.ravel(), [-0.1, 0.7])


def test_coarsen_preserves_block_ordered_total():
    # summing coarse increments sequentially equals the block-ordered fine sum
    grid = TimeGrid(horizon=1.0, steps=64)
    path = generate_path(grid, 1, seed=11)
    coarse = coarsen(path, 4)
    total_coarse = 0.0
    for v in coarse.increments[:, 0]:
        total_coarse += v
    total_fine = 0.0
    for block in path.increments[:, 0].reshape(16, 4):
        acc = block[0]
        for v in block[1:]:
            acc += v
        total_fine += acc
    assert total_coarse == total_fine


def test_coarsen_matches_left_to_right_loop():
    grid = TimeGrid(horizon=1.0, steps=24)
    path = generate_path(grid, 2, seed=3)
    coarse = coarsen(path, 3)
    for i in range(8):
        for k in range(2):
            acc = path.increments[3 * i, k]
            acc += path.increments[3 * i + 1, k]
            acc += path.increments[3 * i + 2, k]
            assert coarse.increments[i, k] == acc


def test_coarsen_rejects_non_divisible_factor():
    grid = TimeGrid(horizon=1.0, steps=10)
    path = generate_path(grid, 1, seed=1)
    with pytest.raises(ValueError):
        coarsen(path, 3)


def test_per_path_seed_is_pure_function_of_index():
    grid = TimeGrid(horizon=1.0, steps=16)
    direct = driving_path(grid, 2, master_seed=42, path_index=3)
    # generating other indices first must not matter
    for i in (0, 1, 2, 5):
        driving_path(grid, 2, master_seed=42, path_index=i)
    again = driving_path(grid, 2, master_seed=42, path_index=3)
    assert np.array_equal(direct.increments, again.increments)
    assert direct.seed == stream_seed(42, 3, DRIVING_STREAM)


def test_auxiliary_dims_and_determinism():
    grid = TimeGrid(horizon=1.0, steps=32)
    # m^2 = 4 components for a 2-noise model, m = 1 for the additive case
    aux4 = generate_auxiliary(grid, dim=4, master_seed=10, stream_tag=AUXILIARY_STREAM)
    aux1 = generate_auxiliary(grid, dim=1, master_seed=10, stream_tag=AUXILIARY_STREAM)
    assert aux4.increments.shape == (32, 4)
    assert aux1.increments.shape == (32, 1)
    again = generate_auxiliary(grid, dim=4, master_seed=10, stream_tag=AUXILIARY_STREAM)
    assert np.array_equal(aux4.increments, again.increments)


def test_auxiliary_rejects_driving_tag_collision():
    grid = TimeGrid(horizon=1.0, steps=8)
    with pytest.raises(ValueError):
        generate_auxiliary(grid, dim=1, master_seed=10, stream_tag=DRIVING_STREAM)


def test_auxiliary_independent_of_driving_stream():
    grid = TimeGrid(horizon=1.0, steps=1000)
    w = driving_path(grid, 1000, master_seed=4, path_index=0).increments.ravel()
    aux = generate_auxiliary(grid, 1000, master_seed=4, stream_tag=1).increments.ravel()
    assert abs(np.corrcoef(w, aux)[0, 1]) < 0.01


def test_path_increments_are_immutable():
    grid = TimeGrid(horizon=1.0, steps=4)
    path = generate_path(grid, 1, seed=0)
    with pytest.raises(ValueError):
        path.increments[0, 0] = 1.0


def test_dump_roundtrip_bit_exact():
    grid = TimeGrid(horizon=2.5, steps=33)
    path = generate_path(grid, 3, seed=987654321)
    buf = io.BytesIO()
    save_path(path, buf)
    buf.seek(0)
    back = load_path(buf)
    assert back.grid == path.grid
    assert back.dim == path.dim
    assert back.seed == path.seed
    assert np.array_equal(back.increments, path.increments)


def test_dump_roundtrip_via_file(tmp_path):
    grid = TimeGrid(horizon=1.0, steps=8)
    path = generate_path(grid, 2, seed=5)
    target = tmp_path / "path.bin"
    save_path(path, target)
    back = load_path(target)
    assert np.array_equal(back.increments, path.increments)
