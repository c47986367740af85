import json
import math

import numpy as np
import pytest

from dyson_cbm import INTEGER_LATTICE, TimeGrid, new_configuration
from dyson_cbm.errors import InsufficientCounts, InsufficientPaths, WeightBlowup
from dyson_cbm.harness import (
    Box,
    Bump,
    Functional,
    binned_reference,
    collision_scan,
    dump_reports,
    fourth_moment_scaling,
    functional_from_json,
    realization_agreement,
    sde_estimate,
    cbm_weighted_estimate,
    truncation_convergence,
    truncation_convergence_mgf,
    verify_corollary_2,
    verify_martingale,
    verify_theorem_1,
)

SEED = 7


def test_bump_shape():
    b = Bump(0.5, 1.0, 2.0)
    assert b(np.array([0.5]))[0] == pytest.approx(2.0)
    assert np.all(b(np.array([-0.5, 1.5, 3.0])) == 0)


def test_functional_roundtrip_and_evaluate():
    F = Functional("product", (0.5,), (Bump(0.0, 1.0, -0.5),))
    G = functional_from_json(json.loads(json.dumps(F.to_json())))
    assert G == F
    assert functional_from_json({"kind": "one"}).kind == "one"
    grid = TimeGrid.through([0.5])
    states = np.array([[[0.0, 5.0], [0.0, 5.0]]])
    assert F.evaluate(states, grid)[0] == pytest.approx(0.5)
    with pytest.raises(ValueError):
        Functional("max")


def test_single_particle_weight_is_one():
    xi = new_configuration([0.0])
    F = Functional("sum", (0.5,), (Bump(0.0, 1.0),))
    a = cbm_weighted_estimate(xi, F, 1.0, 4000, SEED)
    b = sde_estimate(xi, F, 4000, SEED)
    assert a.n_paths == b.n_paths == 4000
    r = verify_theorem_1(xi, F, 1.0, 4000, SEED, retry=False)
    assert r.passed and r.attempts == 1
    assert r.details["quadrature"] == pytest.approx(a.mean, abs=4 * a.stderr)


def test_theorem_1_two_particles():
    xi = new_configuration([0.0, 1.0])
    F = Functional("sum", (0.5,), (Bump(0.5, 1.5),))
    r = verify_theorem_1(xi, F, 1.0, 20_000, SEED)
    assert r.passed
    assert abs(r.lhs.mean - r.details["quadrature"]) <= 4 * r.lhs.stderr


def test_theorem_1_constant_functional():
    r = verify_theorem_1(new_configuration([0.0, 1.0]), Functional("one"), 1.0, 20_000, SEED)
    assert r.lhs == 1.0 and r.passed


def test_theorem_1_validation_and_blowup():
    F = Functional("sum", (1.0,), (Bump(0.0, 1.0),))
    with pytest.raises(ValueError):
        verify_theorem_1(new_configuration([0.0, 1.0]), F, 1.0, 100, SEED)
    tight = new_configuration([-0.05, 0.05])
    with pytest.raises(WeightBlowup):
        verify_theorem_1(tight, Functional("sum", (3.0,), (Bump(0.0, 0.5),)), 4.0, 2000, SEED, retry=False)


def test_martingale_small_run_with_entries():
    r = verify_martingale(new_configuration([0.0, 1.0]), TimeGrid.uniform(1.0, 0.25), 20_000, SEED, entries=True)
    assert r.passed
    assert r.details["entry_z_max"] <= 3
    assert len(r.details["times"]) == 4


def test_corollary_2_small_run():
    xi = new_configuration([-1.0, 1.0])
    r = verify_corollary_2(xi, [Box(0.3, -1.0), Box(0.6, 1.0)], 40_000, SEED)
    assert r.passed
    assert r.details["joint_hits"] >= 100
    assert r.rhs > 0


def test_corollary_2_insufficient_counts():
    xi = new_configuration([-1.0, 1.0])
    with pytest.raises(InsufficientCounts):
        verify_corollary_2(xi, [Box(0.3, -1.0, 0.05), Box(0.6, 1.0, 0.05)], 300, SEED, retry=False)
    with pytest.raises(ValueError):
        verify_corollary_2(xi, [Box(0.3, -1.0, 0.5)], 300, SEED)


def test_fourth_moment_small_run():
    res = fourth_moment_scaling(new_configuration([-1, 0, 1]), Bump(0, 2), [(0.5, 0.5), (0.5, 0.54), (0.5, 0.66)], 5000, SEED)
    assert res.moments[0].mean == 0.0
    assert res.slope > 1.5


def test_fourth_moment_insufficient_paths():
    with pytest.raises(InsufficientPaths):
        fourth_moment_scaling(new_configuration([0.0]), Bump(0, 2), [(0.5, 0.51), (0.5, 0.6)], 30, SEED)


def test_collision_scan():
    single = collision_scan(new_configuration([0.0]), TimeGrid.uniform(1.0, 0.1), 100, SEED)
    assert single.min_gap_observed == math.inf and single.passed
    close = collision_scan(new_configuration([0.0, 0.05]), TimeGrid.uniform(1.0, 0.05), 2000, SEED)
    assert close.passed and 0 < close.min_gap_observed < 0.05
    fixed = collision_scan(
        new_configuration([-2.0, 0.0, 2.0]), TimeGrid.uniform(1.0, 0.1), 2000, SEED, adaptive=False, max_step=0.1
    )
    assert not fixed.passed


def test_truncation_tables():
    tab = truncation_convergence(INTEGER_LATTICE, [10, 100, 1000], (0.2, np.linspace(-1, 1, 5)))
    assert tab.monotone
    assert tab.differences[-1] < 5e-3
    mgf = truncation_convergence_mgf(INTEGER_LATTICE, [10, 100, 1000], 0.2, m=100)
    assert mgf.monotone
    with pytest.raises(ValueError):
        truncation_convergence(INTEGER_LATTICE, [10, 100], (0.2, [0.0]))


def test_binned_reference_routes_agree():
    edges = np.linspace(-4, 4, 41)
    xi = new_configuration([-1.0, 1.0])
    a, ra = binned_reference(xi, 0.5, edges)
    assert ra == "h-transform"
    assert a.sum() == pytest.approx(1.0, abs=1e-4)
    xi3 = new_configuration([-1.0, 0.0, 1.0])
    b, rb = binned_reference(xi3, 0.5, edges)
    assert rb == "kernel density"


def test_realization_agreement_small():
    rep = realization_agreement(new_configuration([-1.0, 1.0]), 0.25, 10_000, bins=20, seed=SEED, tol=0.1)
    assert rep.passed, rep.l1


def test_reports_deterministic_across_workers():
    xi = new_configuration([0.0, 1.0])
    F = Functional("sum", (0.5,), (Bump(0.5, 1.5),))
    one = verify_theorem_1(xi, F, 1.0, 10_000, SEED, workers=1, block_size=2048)
    three = verify_theorem_1(xi, F, 1.0, 10_000, SEED, workers=3, block_size=2048)
    assert dump_reports([one], "b") == dump_reports([three], "b")
