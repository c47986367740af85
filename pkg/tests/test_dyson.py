import math

import numpy as np
import pytest
from numpy.polynomial.legendre import leggauss

from dyson_cbm import (
    KernelContext,
    RngStream,
    TimeGrid,
    density,
    h_transform_density,
    heat_kernel,
    km_transition_density,
    new_configuration,
    simulate_gue,
    simulate_gue_ensemble,
    simulate_sde,
    simulate_sde_ensemble,
)
from dyson_cbm.dyson import is_hermitian, write_trajectories_csv
from dyson_cbm.errors import CollisionBreakdown

SEED = 20240611


def _square(a, b, m):
    x, w = leggauss(m)
    x = 0.5 * (b - a) * x + 0.5 * (a + b)
    w = 0.5 * (b - a) * w
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    return np.stack([X1, X2], axis=-1), np.outer(w, w)


def test_km_examples():
    assert km_transition_density([0.0], [0.0], 1.0) == pytest.approx(0.3989422804, abs=1e-10)
    p0, p1 = heat_kernel(1.0, 0.0, 0.0), heat_kernel(1.0, 0.0, 1.0)
    val = km_transition_density([0.0, 1.0], [0.0, 1.0], 1.0)
    assert val == pytest.approx(p0**2 - p1**2, rel=1e-14)
    assert val == pytest.approx(0.10060, abs=5e-5)


def test_km_antisymmetric():
    u = [-0.4, 0.3, 1.1]
    x = np.array([0.1, 0.9, -0.7])
    assert km_transition_density(u, x[[1, 0, 2]], 0.8) == pytest.approx(-km_transition_density(u, x, 0.8))


def test_h_transform_normalization():
    xi = new_configuration([0, 1])
    pts, w = _square(-5.0, 6.0, 200)
    # symmetric in (x1, x2): the chamber integral is half the square
    total = 0.5 * float(np.sum(w * h_transform_density(xi, pts, 0.5)))
    assert abs(total - 1.0) <= 1e-6


def test_h_transform_marginal_is_kernel_density():
    xi = new_configuration([0, 1])
    t = 0.5
    x2, w2 = leggauss(200)
    x2 = 5.5 * x2 + 0.5
    w2 = 5.5 * w2
    ctx = KernelContext(xi)
    for x1 in (-0.8, 0.2, 0.5, 1.7):
        pts = np.stack([np.full_like(x2, x1), x2], axis=-1)
        marginal = float(np.sum(w2 * h_transform_density(xi, pts, t)))
        assert marginal == pytest.approx(float(density(ctx, t, x1)), abs=1e-6)


def test_chapman_kolmogorov():
    u = np.array([0.0, 1.0])
    x = np.array([0.2, 1.5])
    s, t = 0.3, 1.0
    pts, w = _square(-6.0, 7.0, 200)
    first = km_transition_density(u, pts, s)
    second = np.array([[km_transition_density(y, x, t - s) for y in row] for row in pts])
    lhs = 0.5 * float(np.sum(w * first * second))
    assert lhs == pytest.approx(km_transition_density(u, x, t), abs=1e-5)


def test_sde_single_particle_is_brownian():
    ens = simulate_sde_ensemble(new_configuration([0.5]), TimeGrid((0.0, 1.0)), 20_000, RngStream(SEED, 0))
    x = ens.states[:, 1, 0]
    assert ens.breakdowns == 0
    assert abs(x.mean() - 0.5) <= 3 / math.sqrt(x.size)
    assert 0.96 <= x.var(ddof=1) <= 1.04


def test_sde_ordering_four_particles():
    xi = new_configuration([-1.5, -0.5, 0.5, 1.5])
    grid = TimeGrid.uniform(1.0, 0.1)
    ens = simulate_sde_ensemble(xi, grid, 10_000, RngStream(SEED, 1))
    assert ens.breakdowns == 0
    assert np.all(np.diff(ens.states, axis=2) > 0)
    assert np.array_equal(ens.states[:, 0], np.broadcast_to(xi.array, (10_000, 4)))


def test_sde_gap_mean_matches_quadrature():
    xi = new_configuration([0, 1])
    t = 0.5
    ens = simulate_sde_ensemble(xi, TimeGrid((0.0, t)), 20_000, RngStream(SEED, 2))
    gaps = np.diff(ens.states[:, 1], axis=1)[:, 0]
    pts, w = _square(-5.0, 6.0, 200)
    exact = 0.5 * float(np.sum(w * np.abs(pts[..., 1] - pts[..., 0]) * h_transform_density(xi, pts, t)))
    assert abs(gaps.mean() - exact) <= 3 * gaps.std(ddof=1) / math.sqrt(gaps.size)


def test_simulate_sde_trajectory_and_breakdown():
    grid = TimeGrid.uniform(0.5, 0.1)
    traj = simulate_sde(new_configuration([0, 1]), grid, RngStream(SEED, 3))
    assert traj.states.shape == (6, 2)
    # fixed coarse steps without gap control: a few paths cross
    xi = new_configuration([-2.0, 0.0, 2.0])
    fixed = TimeGrid.uniform(1.0, 0.1)
    ens = simulate_sde_ensemble(xi, fixed, 2000, RngStream(SEED, 9), adaptive=False, max_step=0.1)
    assert ens.breakdowns > 0
    assert np.all(np.isnan(ens.states[ens.status != 0, -1]))
    with pytest.raises(CollisionBreakdown):
        simulate_sde_ensemble(xi, fixed, 2000, RngStream(SEED, 9), adaptive=False, max_step=0.1, raise_on_breakdown=True)


def test_gue_starts_at_u_and_is_ordered():
    xi = new_configuration([-1.0, 0.0, 2.0])
    ens = simulate_gue_ensemble(xi, TimeGrid.uniform(1.0, 0.25), 500, RngStream(SEED, 4))
    np.testing.assert_array_equal(ens.states[:, 0], np.broadcast_to(xi.array, (500, 3)))
    assert np.all(np.diff(ens.states, axis=2) > 0)


def test_gue_single_particle_is_brownian():
    ens = simulate_gue_ensemble(new_configuration([0.0]), TimeGrid((0.0, 1.0)), 20_000, RngStream(SEED, 5))
    x = ens.states[:, 1, 0]
    assert abs(x.mean()) <= 3 / math.sqrt(x.size)
    assert 0.96 <= x.var(ddof=1) <= 1.04


def test_gue_gap_mean_matches_quadrature():
    xi = new_configuration([0, 1])
    t = 0.5
    ens = simulate_gue_ensemble(xi, TimeGrid((0.0, t)), 20_000, RngStream(SEED, 6))
    gaps = np.diff(ens.states[:, 1], axis=1)[:, 0]
    pts, w = _square(-5.0, 6.0, 200)
    exact = 0.5 * float(np.sum(w * np.abs(pts[..., 1] - pts[..., 0]) * h_transform_density(xi, pts, t)))
    assert abs(gaps.mean() - exact) <= 3 * gaps.std(ddof=1) / math.sqrt(gaps.size)


def test_simulate_gue_single():
    traj = simulate_gue(new_configuration([0, 1]), TimeGrid.uniform(1.0, 0.5), RngStream(SEED, 7))
    assert traj.states.shape == (3, 2)


def test_is_hermitian():
    a = np.array([[1.0, 2 + 1j], [2 - 1j, 3.0]])
    assert is_hermitian(a)
    assert not is_hermitian(a + np.array([[0, 1e-6], [0, 0]]))
    assert not is_hermitian(np.zeros((2, 3)))


def test_trajectories_csv(tmp_path):
    ens = simulate_sde_ensemble(new_configuration([0, 1]), TimeGrid.uniform(1.0, 0.5), 2, RngStream(SEED, 8))
    out = tmp_path / "t.csv"
    write_trajectories_csv(out, ens, header_comment="config: {}")
    lines = out.read_text().splitlines()
    assert lines[:2] == ["# config: {}", "traj_id,t,i,x_i"]
    assert len(lines) == 2 + 2 * 3 * 2
