import math

import numpy as np
import pytest

from dyson_cbm import (
    Contour,
    CorrelationRequest,
    KernelContext,
    contour_kernel_K,
    density,
    fredholm_mgf,
    green_G,
    heat_kernel,
    kernel_K,
    multitime_correlation,
    new_configuration,
)
from dyson_cbm.errors import ContourTooClose, QuadratureOrderTooLow
from dyson_cbm.kernels import fredholm_mgf_result, inner_integral, kernel_matrix

# frozen mpmath values
K_SINGLETON = -0.165247303146323609  # xi={0}: K(1, 0; 0.5, 0)
GAP_SINGLETON = 0.479500122186953462  # xi={0}, t=0.5, outside [-0.5, 0.5]


def _trapezoid(f, a, b, m):
    x = np.linspace(a, b, m)
    w = np.full(m, (b - a) / (m - 1))
    w[[0, -1]] *= 0.5
    return x, w, f(x)


def _inner_polynomial(support, v, t, y):
    """E[Phi^v(y + i sqrt(t) N)] from the monomial expansion of Phi^v."""
    others = [x for x in support if x != v]
    coeffs = np.poly1d([1.0])
    for x in others:
        coeffs = coeffs * np.poly1d([-1.0 / (x - v), x / (x - v)])
    c = coeffs.coeffs[::-1]  # ascending powers
    sig = math.sqrt(t)
    total = 0.0 + 0.0j
    for k, ck in enumerate(c):
        # E[(y + i sig N)^k] with E[N^j] = (j-1)!! for even j
        mk = sum(
            math.comb(k, j) * y ** (k - j) * (1j * sig) ** j * _double_factorial(j - 1)
            for j in range(0, k + 1, 2)
        )
        total += ck * mk
    return total.real


def _double_factorial(n):
    return 1 if n <= 0 else n * _double_factorial(n - 2)


def test_singleton_G_is_heat_kernel():
    ctx = KernelContext(new_configuration([0.3]))
    for s, t, x, y in [(0.5, 0.5, 0.1, -0.4), (1.0, 0.2, 2.0, 0.0)]:
        assert green_G(ctx, s, t, x, y) == pytest.approx(float(heat_kernel(s, 0.3, x)), rel=1e-14)


def test_singleton_K_example():
    ctx = KernelContext(new_configuration([0.0]))
    assert kernel_K(ctx, 1.0, 0.0, 0.5, 0.0) == pytest.approx(K_SINGLETON, abs=1e-12)


@pytest.mark.parametrize("support", [[0.0, 1.0], [-1.0, 0.0, 2.0], [-1.5, -0.2, 0.4, 2.0]])
def test_inner_integral_polynomial_oracle(support):
    ctx = KernelContext(new_configuration(support))
    ys = np.array([-1.3, 0.0, 0.45, 2.2])
    got = inner_integral(ctx, 0.7, ys)
    for a, v in enumerate(ctx.support):
        for b, y in enumerate(ys):
            assert got[a, b] == pytest.approx(_inner_polynomial(list(ctx.support), v, 0.7, y), abs=1e-10)


def test_G_against_trapezoid_oracle():
    # direct quadrature of E[Phi^v(y + i W_t)] over the Gaussian density of W_t
    ctx = KernelContext(new_configuration([0, 1]))
    s = t = 0.5
    w, wt, _ = _trapezoid(lambda x: x, -12.0, 12.0, 10_000)
    dens = np.exp(-w * w / (2 * t)) / math.sqrt(2 * math.pi * t)
    oracle = 0.0
    for v, other in [(0.0, 1.0), (1.0, 0.0)]:
        phi = (other - 1j * w) / (other - v)
        oracle += float(heat_kernel(s, v, 0.0)) * float(np.sum(wt * dens * phi).real)
    assert green_G(ctx, s, t, 0.0, 0.0) == pytest.approx(oracle, abs=1e-8)


def test_biorthogonality():
    ctx = KernelContext(new_configuration([-1.0, 0.0, 2.0]))
    t = 0.6
    x, w, _ = _trapezoid(lambda x: x, -10.0, 12.0, 4000)
    inner = inner_integral(ctx, t, x)
    for a, v in enumerate(ctx.support):
        gauss = heat_kernel(t, v, x)
        row = inner @ (w * gauss)
        np.testing.assert_allclose(row, np.eye(3)[a], atol=1e-8)


def test_density_mass_and_positivity():
    ctx = KernelContext(new_configuration([0, 1]))
    x, w, rho = _trapezoid(lambda x: density(ctx, 0.5, x), -6.0, 7.0, 2000)
    assert abs(float(w @ rho) - 2.0) <= 1e-6
    assert np.all(rho > 0)


def test_multitime_single_point_is_density():
    ctx = KernelContext(new_configuration([-1.0, 0.0, 2.0]))
    req = CorrelationRequest((0.4,), ((0.25,),))
    assert multitime_correlation(ctx, req) == pytest.approx(float(density(ctx, 0.4, 0.25)), rel=1e-12)


def test_equal_time_pair_correlation():
    ctx = KernelContext(new_configuration([0, 1]))
    t = 0.5
    assert abs(multitime_correlation(ctx, CorrelationRequest((t,), ((0.3, 0.3),)))) < 1e-12
    for x, y in [(0.0, 1.0), (-0.5, 0.2), (1.5, 2.5)]:
        rho2 = multitime_correlation(ctx, CorrelationRequest((t,), ((x, y),)))
        expect = density(ctx, t, x) * density(ctx, t, y) - green_G(ctx, t, t, x, y) * green_G(ctx, t, t, y, x)
        assert rho2 == pytest.approx(float(expect), rel=1e-10, abs=1e-14)
        assert rho2 >= 0


def test_kernel_matrix_matches_pointwise():
    ctx = KernelContext(new_configuration([-1.0, 0.0, 2.0]))
    ts = np.array([0.3, 0.3, 0.7])
    xs = np.array([-0.4, 0.5, 1.0])
    mat = kernel_matrix(ctx, ts, xs, ts, xs)
    for i in range(3):
        for j in range(3):
            assert mat[i, j] == pytest.approx(kernel_K(ctx, ts[i], xs[i], ts[j], xs[j]), abs=1e-13)


def test_reproducing_property_and_trace():
    ctx = KernelContext(new_configuration([0, 1]))
    t = 0.5
    y, w, _ = _trapezoid(lambda x: x, -8.0, 8.0, 2000)
    pts = np.array([-1.0, 0.2, 0.9, 2.0])
    left = green_G(ctx, t, t, pts[:, None], y[None, :])
    right = green_G(ctx, t, t, y[:, None], pts[None, :])
    lhs = left @ (w[:, None] * right)
    exact = green_G(ctx, t, t, pts[:, None], pts[None, :])
    np.testing.assert_allclose(lhs, exact, atol=1e-6)
    trace = float(w @ green_G(ctx, t, t, y, y))
    assert abs(trace - 2.0) <= 1e-6


def test_mgf_zero_chi_is_one():
    ctx = KernelContext(new_configuration([0, 1]))
    assert fredholm_mgf(ctx, [0.5], lambda x: np.zeros_like(x), (-3.0, 4.0, 120)) == 1.0
    assert fredholm_mgf(ctx, [0.3, 0.6], lambda x: np.zeros_like(x), (-3.0, 4.0, 100)) == 1.0


def test_mgf_first_order():
    ctx = KernelContext(new_configuration([0, 1]))
    t, a, b, eps = 0.5, -0.3, 0.8, 1e-5
    grid = (a, b, 200)
    plus = fredholm_mgf(ctx, [t], lambda x: np.full_like(x, eps), grid)
    minus = fredholm_mgf(ctx, [t], lambda x: np.full_like(x, -eps), grid)
    deriv = (plus - minus) / (2 * eps)
    nodes, weights = np.polynomial.legendre.leggauss(200)
    x = 0.5 * (b - a) * nodes + 0.5 * (a + b)
    integral = 0.5 * (b - a) * float(weights @ density(ctx, t, x))
    assert abs(deriv - integral) <= 1e-5


def test_mgf_single_particle_gap_probability():
    ctx = KernelContext(new_configuration([0.0]))
    val = fredholm_mgf(ctx, [0.5], lambda x: -np.ones_like(x), (-0.5, 0.5, 200))
    assert abs(val - GAP_SINGLETON) <= 1e-8
    gauss = 1 - math.erf(0.5 / math.sqrt(2 * 0.5))
    assert abs(val - gauss) <= 1e-8


def test_mgf_monotone_in_window():
    ctx = KernelContext(new_configuration([-1.0, 0.0, 2.0]))
    vals = [fredholm_mgf(ctx, [0.5], lambda x: -np.ones_like(x), (-h, h, 150)) for h in (0.2, 0.5, 1.0, 2.0)]
    assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))
    assert all(0 <= v <= 1 for v in vals)


def test_mgf_validation_and_refinement():
    ctx = KernelContext(new_configuration([0.0]))
    chi = lambda x: -np.ones_like(x)  # noqa: E731
    with pytest.raises(ValueError):
        fredholm_mgf(ctx, [0.5], chi, (-1.0, 1.0, 99))
    with pytest.raises(ValueError):
        fredholm_mgf(ctx, [0.5, 0.5], chi, (-1.0, 1.0, 100))
    res = fredholm_mgf_result(ctx, [0.5], chi, (-0.5, 0.5, 100), refine=True)
    assert res.refinement_delta < 1e-6
    # an indicator that jumps inside the grid converges slowly
    step = lambda x: -(np.abs(x) < 0.5).astype(float)  # noqa: E731
    with pytest.raises(QuadratureOrderTooLow):
        fredholm_mgf_result(ctx, [0.5], step, (-3.0, 3.0, 100), refine=True)


def test_low_hermite_order_detected():
    ctx = KernelContext(new_configuration([-2.0, -1.0, 0.0, 1.0, 2.0, 3.0]), Q=2, check_refinement=True)
    with pytest.raises(QuadratureOrderTooLow):
        green_G(ctx, 0.5, 0.5, 0.0, 0.0)


def test_time_validation():
    ctx = KernelContext(new_configuration([0.0]), horizon=1.0)
    with pytest.raises(ValueError):
        green_G(ctx, 0.0, 0.5, 0.0, 0.0)
    with pytest.raises(ValueError):
        green_G(ctx, 0.5, 1.0, 0.0, 0.0)


def test_contour_examples():
    ctx = KernelContext(new_configuration([0.0]))
    assert contour_kernel_K(ctx, 1.0, 0.0, 0.5, 0.0) == pytest.approx(K_SINGLETON, abs=1e-10)
    ctx3 = KernelContext(new_configuration([-1.0, 0.0, 2.0]))
    args = (0.4, 0.3, 0.7, -0.5)
    assert abs(contour_kernel_K(ctx3, *args) - kernel_K(ctx3, *args)) <= 1e-6


def test_contour_radius_independence():
    xi = new_configuration([-1.0, 0.0, 2.0])
    vals = [
        contour_kernel_K(KernelContext(xi, contour=Contour(0.5 + 0j, r, 512)), 0.7, 0.1, 0.3, 0.6)
        for r in (2.0, 3.0, 4.5)
    ]
    assert max(vals) - min(vals) <= 1e-8


def test_contour_too_close():
    ctx = KernelContext(new_configuration([0.0, 1.0]), contour=Contour(0j, 1.0 + 1e-5))
    with pytest.raises(ContourTooClose):
        contour_kernel_K(ctx, 0.5, 0.0, 0.5, 0.0)


def test_contour_radius_must_enclose():
    with pytest.raises(ValueError):
        KernelContext(new_configuration([0.0, 3.0]), contour=Contour(0j, 2.0))
