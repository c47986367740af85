import numpy as np
import pytest

from dyson_cbm import RngStream, TimeGrid, det_martingale_along_path, new_configuration, sample_cbm, sample_real_bm
from dyson_cbm.errors import DimensionMismatch, GridMismatch
from dyson_cbm.paths import sample_cbm_batch, sample_cbm_system, write_paths_csv

SEED = 0xD75054


def test_time_grid_validation():
    with pytest.raises(ValueError):
        TimeGrid((0.1, 0.2))
    with pytest.raises(ValueError):
        TimeGrid((0.0, 0.5, 0.5))
    g = TimeGrid.uniform(1.0, 0.05)
    assert len(g) == 21 and g.T == 1.0 and g.max_step == pytest.approx(0.05)
    assert TimeGrid.through([0.6, 0.3, 0.3]).times == (0.0, 0.3, 0.6)
    with pytest.raises(GridMismatch):
        g.index_of(0.333)
    with pytest.raises(ValueError):
        TimeGrid.uniform(1.0, 0.3)


def test_single_point_grid():
    assert list(sample_real_bm(1.2, TimeGrid((0.0,)), RngStream(SEED, 0)).values) == [1.2]
    assert sample_cbm(0.7, TimeGrid((0.0,)), RngStream(SEED, 0)).at(0) == 0.7 + 0j


def test_reproducible_and_distinct_streams():
    g = TimeGrid.uniform(1.0, 0.1)
    a = sample_cbm(0.0, g, RngStream(SEED, 3))
    b = sample_cbm(0.0, g, RngStream(SEED, 3))
    c = sample_cbm(0.0, g, RngStream(SEED, 4))
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)
    assert not np.array_equal(a.re.values[1:], a.im.values[1:])


def test_increment_variance():
    g = TimeGrid((0.0, 1.0))
    V, _ = sample_cbm_batch([0.3], g.array, 100_000, SEED, 0)
    var = np.var(V[:, 1, 0] - 0.3, ddof=1)
    assert 0.99 <= var <= 1.01


def test_real_imag_independent_and_centered():
    g = TimeGrid((0.0, 1.0))
    V, W = sample_cbm_batch([0.3], g.array, 100_000, SEED, 100)
    dv, dw = V[:, 1, 0] - 0.3, W[:, 1, 0]
    assert abs(np.corrcoef(dv, dw)[0, 1]) <= 0.01
    assert abs(dv.mean()) <= 3 * dv.std() / np.sqrt(dv.size)
    assert abs(dw.mean()) <= 3 * dw.std() / np.sqrt(dw.size)


def test_batch_matches_system_layout():
    g = TimeGrid.uniform(1.0, 0.25)
    u = [0.0, 1.0]
    sys_paths = sample_cbm_system(u, g, SEED, 10)
    V, W = sample_cbm_batch(u, g.array, 1, SEED, 10)
    for i, p in enumerate(sys_paths):
        np.testing.assert_array_equal(p.re.values, V[0, :, i])
        np.testing.assert_array_equal(p.im.values, W[0, :, i])


def test_det_martingale_along_path():
    g = TimeGrid.uniform(1.0, 0.5)
    xi = new_configuration([0, 1])
    paths = sample_cbm_system(xi.array, g, SEED, 0)
    assert det_martingale_along_path(xi, paths, 0.0) == 1.0
    single = new_configuration([0.3])
    assert det_martingale_along_path(single, sample_cbm_system([0.3], g, SEED, 0), 1.0) == 1.0
    with pytest.raises(DimensionMismatch):
        det_martingale_along_path(xi, paths[:1], 0.5)
    with pytest.raises(GridMismatch):
        det_martingale_along_path(xi, paths, 0.25)
    other = sample_cbm_system(xi.array, TimeGrid.uniform(1.0, 0.25), SEED, 0)
    with pytest.raises(GridMismatch):
        det_martingale_along_path(xi, [paths[0], other[1]], 0.5)


def test_martingale_mean_at_half():
    from dyson_cbm.entire import det_martingale_batch

    xi = new_configuration([0, 1])
    V, W = sample_cbm_batch(xi.array, np.array([0.0, 0.5]), 100_000, SEED, 0)
    d = det_martingale_batch(xi.array, V[:, 1] + 1j * W[:, 1]).real
    assert abs(d.mean() - 1) <= 3 * d.std(ddof=1) / np.sqrt(d.size)


def test_write_paths_csv(tmp_path):
    g = TimeGrid.uniform(1.0, 0.5)
    systems = [sample_cbm_system([0.0, 1.0], g, SEED, 0)]
    out = tmp_path / "p.csv"
    write_paths_csv(out, systems, header_comment="config: {}")
    lines = out.read_text().splitlines()
    assert lines[0] == "# config: {}"
    assert lines[1] == "path_id,t,re,im"
    assert len(lines) == 2 + 2 * 3
