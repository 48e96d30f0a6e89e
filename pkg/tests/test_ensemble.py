import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from asvgd.ensemble import (
    Ensemble,
    InitSpec,
    init_ensemble,
    read_particles_csv,
    sample_mean_cov,
    write_particles_csv,
)


def test_fig1_initialization_shape_and_zero_momenta():
    e = init_ensemble(InitSpec([1, 1], [[3, 2], [2, 3]], 500, seed=3))
    assert e.positions.shape == (500, 2)
    assert np.all(e.momenta == 0)
    assert np.all(e.density_momenta == 0)
    assert np.array_equal(e.prev_positions, e.positions)
    assert np.all(e.restart_counts == 1)
    assert e.step_index == 0
    e.check()


def test_single_particle():
    e = init_ensemble(InitSpec([0, 0], np.eye(2), 1, seed=0))
    assert e.positions.shape == (1, 2)
    assert e.restart_counts.tolist() == [1]


def test_same_seed_bit_identical():
    spec = InitSpec([1, 1], [[3, 2], [2, 3]], 50, seed=11)
    a, b = init_ensemble(spec), init_ensemble(spec)
    assert a.positions.tobytes() == b.positions.tobytes()


def test_different_seed_differs():
    a = init_ensemble(InitSpec([0, 0], np.eye(2), 10, seed=1))
    b = init_ensemble(InitSpec([0, 0], np.eye(2), 10, seed=2))
    assert not np.array_equal(a.positions, b.positions)


def test_non_pd_covariance_rejected_with_matrix_named():
    with pytest.raises(ValueError, match="init covariance"):
        init_ensemble(InitSpec([0, 0], [[1, 2], [2, 1]], 5))


def test_invalid_init_spec():
    with pytest.raises(ValueError):
        InitSpec([0, 0], np.eye(3), 5)
    with pytest.raises(ValueError):
        InitSpec([0, 0], np.eye(2), 0)
    with pytest.raises(ValueError):
        InitSpec([0, 0], np.eye(2), 5, seed=-1)


def test_mean_cov_hand_example():
    m = sample_mean_cov(np.array([[0.0, 0.0], [2.0, 0.0]]))
    np.testing.assert_array_equal(m.mean, [1.0, 0.0])
    np.testing.assert_array_equal(m.cov, [[2.0, 0.0], [0.0, 0.0]])
    assert not m.degenerate


def test_identical_particles_zero_cov():
    m = sample_mean_cov(np.tile([[1.5, -2.0]], (7, 1)))
    assert np.all(m.cov == 0)


def test_single_particle_cov_flagged():
    m = sample_mean_cov(np.array([[1.0, 2.0]]))
    assert m.degenerate
    assert np.all(m.cov == 0)


def test_large_sample_mean_within_clt_bound():
    mu = np.array([1.0, -2.0])
    cov = np.array([[3.0, 2.0], [2.0, 3.0]])
    n = 20000
    for seed in range(5):
        m = sample_mean_cov(init_ensemble(InitSpec(mu, cov, n, seed)))
        assert np.linalg.norm(m.mean - mu) < 3 * np.sqrt(np.trace(cov) / n)
        np.testing.assert_allclose(m.cov, cov, atol=0.15)


def test_initial_draws_match_cholesky_construction():
    spec = InitSpec([1, 1], [[3, 2], [2, 3]], 5, seed=9)
    z = np.random.default_rng(9).standard_normal((5, 2))
    L = np.linalg.cholesky(spec.covariance)
    np.testing.assert_array_equal(init_ensemble(spec).positions, spec.mean + z @ L.T)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 20), st.integers(1, 4)),
              elements=st.floats(-1e6, 1e6, allow_nan=False, allow_subnormal=True)))
def test_csv_round_trip_exact(tmp_path_factory, x):
    path = tmp_path_factory.mktemp("csv") / "p.csv"
    write_particles_csv(path, x)
    header = path.read_text().splitlines()[0]
    assert header == ",".join(f"x{j}" for j in range(x.shape[1]))
    back = read_particles_csv(path)
    assert back.shape == x.shape
    assert back.tobytes() == x.tobytes()


def test_permuted_ensemble():
    e = init_ensemble(InitSpec([0, 0], np.eye(2), 4, seed=1))
    p = e.permuted([3, 2, 1, 0])
    np.testing.assert_array_equal(p.positions, e.positions[::-1])
    assert isinstance(p, Ensemble)
