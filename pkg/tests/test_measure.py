import math
from fractions import Fraction

import numpy as np
import pytest
from numpy.polynomial import Polynomial

from pwlab.errors import DegenerateFit, DomainError
from pwlab.measure import (SmoothFn, fit_decay_exponent,
                           interpolation_exponent, sigma_decomposition,
                           sublevel_measure, sublevel_scan, xi_measure)
from pwlab.symdsl import parse

GLANCING = [parse("norm_xi", 1), parse("(1+sin(x1)^2)*norm_xi", 1)]


# ---------------------------------------------------------------------------
# sublevel_measure
# ---------------------------------------------------------------------------

def test_linear_sublevel():
    assert sublevel_measure(lambda t: t, 1.0, 0.25) == pytest.approx(0.25, abs=1e-9)


def test_quadratic_sublevel():
    assert sublevel_measure(lambda t: t ** 2, 1.0, 0.01) == pytest.approx(0.1, abs=1e-9)


def test_sine_sublevel_closed_form():
    # {t in [0, pi]: |sin t| <= 0.1} = [0, asin 0.1] U [pi - asin 0.1, pi]
    val = sublevel_measure(np.sin, math.pi, 0.1)
    assert val == pytest.approx(2 * math.asin(0.1), abs=1e-8)


def test_sublevel_monotone_in_eps():
    f = lambda t: np.sin(3 * t) * (t - 0.4)
    vals = [sublevel_measure(f, 2.0, e) for e in (1e-1, 1e-2, 1e-3, 1e-4)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_sublevel_refine_guard():
    with pytest.raises(DomainError):
        sublevel_measure(lambda t: t, 1.0, 0.1, refine=100)


# ---------------------------------------------------------------------------
# sigma_decomposition
# ---------------------------------------------------------------------------

def test_sigma_linear_single_component():
    fn = SmoothFn.from_poly(Polynomial([0.0, 1.0]))  # f = t
    dec = sigma_decomposition(fn, 1.0, 1e-3, M=1)
    assert dec.delta[1] == 1
    a, b = dec.sets[1][0]
    assert a == pytest.approx(0.0, abs=1e-9)
    assert b == pytest.approx(1e-3, abs=1e-6)


def test_sigma_quadratic_component_lengths_bounded():
    # for f = t^2 with M = 2 the band lengths stay below C' eps^{1/4}
    fn = SmoothFn.from_poly(Polynomial([0.0, 0.0, 1.0]))
    ratios = {1: [], 2: []}
    for eps in (1e-2, 1e-3, 1e-4, 1e-5, 1e-6):
        dec = sigma_decomposition(fn, 1.0, eps, M=2)
        for p in (1, 2):
            if dec.max_lengths[p] > 0:
                ratios[p].append(dec.max_lengths[p] / eps ** 0.25)
    for p in (1, 2):
        assert ratios[p], f"band {p} never populated"
        # bounded, non-growing constants along the ladder
        assert max(ratios[p]) <= 2.0 * ratios[p][0] + 1e-12


def test_sigma_bands_cover_and_extra_band_empty():
    fn = SmoothFn.from_poly(Polynomial([0.0, -1.0, 0.0, 1.0]))  # t^3 - t
    T = 2.0
    eps = 1e-5
    M = 3
    dec = sigma_decomposition(fn, T, eps, M=M, include_extra=1)
    total = sublevel_measure(fn, T, dec.C * eps)
    assert abs(dec.union_measure() - total) <= 1e-8 + 2e-9 * len(dec.sets)
    assert dec.sets[M + 1] == []   # band beyond M empties out for small eps


def test_sigma_component_count_bound_random_polynomials():
    # independent oracle: count real roots in [0, T] via numpy.roots
    rng = np.random.default_rng(42)
    T = 1.0
    for M in (1, 2, 3):
        for _ in range(34):
            coeffs = rng.uniform(-1, 1, size=M + 1)
            if abs(coeffs[-1]) < 0.1:
                coeffs[-1] = 0.5 * np.sign(coeffs[-1] or 1.0)
            poly = Polynomial(coeffs)
            roots = [r for r in np.roots(list(reversed(coeffs)))
                     if abs(r.imag) < 1e-9 and -0.05 <= r.real <= T + 0.05]
            K = max(1, len(roots))
            fn = SmoothFn.from_poly(poly)
            dec = sigma_decomposition(fn, T, 1e-4, M=M, refine=4096)
            for p in range(1, M + 1):
                assert dec.delta[p] <= K * (M + 1) ** 2


# ---------------------------------------------------------------------------
# fit_decay_exponent
# ---------------------------------------------------------------------------

def test_fit_power_family_slope():
    for M in (1, 2, 3):
        eps_list = [10.0 ** -k for k in range(2, 7)]
        measures = [sublevel_measure(lambda t, M=M: t ** M, 1.0, e, refine=4096)
                    for e in eps_list]
        slope = fit_decay_exponent(eps_list, measures)
        assert slope == pytest.approx(1.0 / M, abs=0.05)
        assert slope >= 1.0 / (2 * M) - 0.05


def test_fit_linear_slope_one():
    eps_list = [10.0 ** -k for k in range(2, 7)]
    measures = [sublevel_measure(lambda t: t, 1.0, e) for e in eps_list]
    assert fit_decay_exponent(eps_list, measures) == pytest.approx(1.0, abs=0.05)


def test_fit_degenerate():
    eps_list = [10.0 ** -k for k in range(2, 7)]
    with pytest.raises(DegenerateFit):
        fit_decay_exponent(eps_list, [0.0] * 5)


def test_fit_input_validation():
    with pytest.raises(DomainError):
        fit_decay_exponent([1e-2, 1e-3], [1.0, 1.0])
    with pytest.raises(DomainError):
        fit_decay_exponent([1e-2, 2e-2, 3e-2, 4e-2, 5e-2], [1.0] * 5)


def test_sublevel_scan_colliding_family_reaches_half_order_rate():
    # members (t^2 - w^2)^M have zeros of order exactly M for w > 0, yet
    # the sup over w decays at the eps^{1/2M} rate as the zeros collide
    M = 2
    eps_list = [10.0 ** -k for k in range(2, 7)]

    def family(w):
        return lambda t: (t ** 2 - w ** 2) ** M

    ws = np.geomspace(1e-4, 0.8, 25)
    rep = sublevel_scan(family, ws, 1.0, eps_list, M, refine=4096)
    assert rep.fitted_exponent >= 1.0 / (2 * M) - 0.05
    assert rep.fitted_exponent == pytest.approx(1.0 / (2 * M), abs=0.1)


# ---------------------------------------------------------------------------
# xi_measure
# ---------------------------------------------------------------------------

def test_xi_measure_elliptic_gap_all_zero():
    roots = [parse("norm_xi", 1), parse("2*norm_xi", 1)]
    rng = np.random.default_rng(1)
    out = xi_measure(roots, (1, 2), [0.3, 0.1, 0.03], 2000, 1.0, rng)
    assert out["fractions"] == [0.0, 0.0, 0.0]
    assert out["fitted_exponent"] is None


def test_xi_measure_glancing_single_step():
    rng = np.random.default_rng(2)
    eps_list = [10.0 ** -k for k in (1.0, 1.5, 2.0, 2.5, 3.0)]
    out = xi_measure(GLANCING, (1, 2), eps_list, 30000, 2.0, rng, M=2)
    # per-variable rate: quadratic zeros give measure ~ sqrt(eps)
    assert out["fitted_exponent"] >= 1.0 / (2 * 2) - 0.05
    assert out["fitted_exponent"] == pytest.approx(0.5, abs=0.12)


def test_xi_measure_product_structure():
    rng = np.random.default_rng(3)
    eps_list = [10.0 ** -k for k in (0.5, 1.0, 1.5, 2.0)]
    single = xi_measure(GLANCING, (1, 2), eps_list, 20000, 2.0,
                        np.random.default_rng(4))
    double = xi_measure(GLANCING, (1, 2, 1), eps_list, 60000, 2.0, rng, M=2)
    assert double["fitted_exponent"] >= 2 * single["fitted_exponent"] - 0.25


# ---------------------------------------------------------------------------
# interpolation_exponent
# ---------------------------------------------------------------------------

def test_interpolation_values():
    assert interpolation_exponent(0, 2, 1, 1) == Fraction(1)
    assert interpolation_exponent(-4, 10, 2, 1) == Fraction(16, 3)


def test_interpolation_limit_toward_good_space():
    vals = [float(interpolation_exponent(0, 2, S, 1)) for S in (1, 10, 100, 10000)]
    assert vals[-1] == pytest.approx(2.0, abs=1e-3)
    assert all(a < b for a, b in zip(vals, vals[1:]))


def test_interpolation_domain_errors():
    with pytest.raises(DomainError):
        interpolation_exponent(2, 1, 1, 1)
    with pytest.raises(DomainError):
        interpolation_exponent(0, 1, -1, 1)


def test_smooth_fn_derivative_paths():
    from pwlab.errors import DerivativeError

    fn = SmoothFn(np.sin)
    d2 = fn.deriv(2)
    # Richardson finite differences track -sin to the documented accuracy
    assert d2(0.7) == pytest.approx(-math.sin(0.7), abs=1e-5)
    with pytest.raises(DerivativeError):
        fn.deriv(7)
