import math

import numpy as np
import pytest
from scipy.linalg import expm

from pwlab.errors import ConfigError, HyperbolicityError, SizeError
from pwlab.grid import Grid, SpectralField, apply_op
from pwlab.propagator import picard_solve, reference_solve
from pwlab.symdsl import PhasePoint, parse, poisson
from pwlab.systems import (build_companion, build_second_order,
                           companion_size)


def grid64():
    return Grid((64,))


# ---------------------------------------------------------------------------
# size formula
# ---------------------------------------------------------------------------

def test_companion_size_formula():
    assert companion_size(2) == 3          # 1 + 2!/1!
    assert companion_size(3) == 10         # 1 + 3!/1! + 3!/2!
    comp2 = build_companion(2, ["reg_norm_xi", "reg_norm_xi"], grid64())
    comp3 = build_companion(3, ["reg_norm_xi", "reg_norm_xi", "2*reg_norm_xi"],
                            grid64())
    assert comp2.size == 3
    assert comp3.size == 10


def test_companion_caps_and_validation():
    with pytest.raises(SizeError):
        build_companion(4, ["reg_norm_xi"] * 4, grid64())
    with pytest.raises(ConfigError):
        build_companion(2, ["reg_norm_xi"], grid64())
    with pytest.raises(ConfigError):
        build_companion(2, ["t*reg_norm_xi", "reg_norm_xi"], grid64())


# ---------------------------------------------------------------------------
# double-root Jordan oracle
# ---------------------------------------------------------------------------

def test_double_root_jordan_block_solution():
    # equal roots, zero lower terms: u(t) = e^{-i L t}(g0 - i t (g1 - L g0))
    grid = Grid((128,))
    comp = build_companion(2, ["reg_norm_xi", "reg_norm_xi"], grid)
    rng = np.random.default_rng(0)
    spec0 = np.zeros(128, dtype=complex)
    spec1 = np.zeros(128, dtype=complex)
    live = np.abs(grid.k_axes()[0]) <= 6
    spec0[live] = rng.standard_normal(int(live.sum())) + 1j * rng.standard_normal(int(live.sum()))
    spec1[live] = rng.standard_normal(int(live.sum())) + 1j * rng.standard_normal(int(live.sum()))
    g0 = SpectralField(grid, spec=spec0)
    g1 = SpectralField(grid, spec=spec1)
    U0 = comp.initial_data([g0, g1])
    # V_() = g0; V_(j) = -(g1 - L g0)
    lam = parse("reg_norm_xi", 1)
    expected_v1 = (-1.0) * (g1 - apply_op(lam, g0))
    assert (U0.components[1] - expected_v1).l2() <= 1e-12
    t = 0.8
    rep = picard_solve(comp.system, U0, t, N=4, Q=64)
    u_num = rep.u.components[0]
    # closed form via exact multipliers
    kaxis = np.abs(grid.k_axes()[0]).astype(float)
    mult = np.where(kaxis < 2, np.sqrt(1e-4 + kaxis ** 2), kaxis)
    w = g1.spec - mult * g0.spec
    closed = np.exp(-1j * mult * t) * (g0.spec - 1j * t * w)
    err = math.sqrt((2 * math.pi) * np.sum(np.abs(u_num.spec - closed) ** 2))
    assert err <= 1e-7


def test_companion_vs_per_mode_ode_oracle():
    # distinct constant roots with lower terms: compare against expm of the
    # per-mode companion ODE (independent dense oracle)
    grid = grid64()
    comp = build_companion(
        2, ["reg_norm_xi", "2*reg_norm_xi"], grid,
        lower={(1,): "0.3", (2,): "-0.2"}, c_text="0.1")
    k = 5
    g0 = SpectralField.mode(grid, k)
    g1 = SpectralField.zero(grid)
    U0 = comp.initial_data([g0, g1])
    t = 0.6
    ref = reference_solve(comp.system, U0, t)
    # oracle: scalar ODE (D - l1)(D - l2)u + 0.3 (D - l1) u - 0.2 (D - l2) u
    #         + 0.1 u = 0 with D = i d/dt, per mode
    l1, l2 = float(k), 2.0 * float(k)
    # expand: D^2 u - (l1 + l2 - 0.3 + 0.2... careful with operator order
    # (D-l1)(D-l2) = D^2 - (l1+l2) D + l1 l2 (multipliers commute)
    # plus 0.3 (D - l1) - 0.2 (D - l2) + 0.1
    a2 = 1.0
    a1 = -(l1 + l2) + 0.3 - 0.2
    a0 = l1 * l2 - 0.3 * l1 + 0.2 * l2 + 0.1
    # D = i d/dt: i u' = w with states (u, Du): D(Du) = -a1 Du - a0 u
    M = np.array([[0.0, 1.0], [-a0, -a1]])
    # i d/dt (u, Du) = M (u, Du)  ->  d/dt = -i M
    sol = expm(-1j * M * t) @ np.array([1.0, 0.0], dtype=complex)
    u_oracle = sol[0]
    assert ref.components[0].spec[k] == pytest.approx(u_oracle, abs=1e-7)


# ---------------------------------------------------------------------------
# second-order reduction
# ---------------------------------------------------------------------------

def test_wave_equation_roots_strict():
    # wave equation: time derivatives as D = i d/dt give c2 = -|xi|^2,
    # so the discriminant is +4|xi|^2 and the roots are +-|xi|
    (rp, rm), matrix, report = build_second_order(
        "0", "-(norm_xi^2)", grid64(), mu_text="2*norm_xi")
    p = PhasePoint((0.3,), (2.0,))
    assert rp.value_at(p) == pytest.approx(2.0)
    assert rm.value_at(p) == pytest.approx(-2.0)
    assert report.M == 0
    assert all(pair.status == "strict" for pair in report.pairs)


def test_perfect_square_double_root():
    (rp, rm), matrix, report = build_second_order(
        "2*norm_xi", "norm_xi^2", grid64())
    p = PhasePoint((1.0,), (3.0,))
    assert rp.value_at(p) == pytest.approx(-3.0)
    assert rm.value_at(p) == pytest.approx(-3.0)


def test_glancing_mu_finite_order_and_bracket_identity():
    # b1 = 2|xi|, mu = sin(x)|xi|: roots meet on sin x = 0 transversally
    b_text = "2*norm_xi"
    mu_text = "sin(x1)*norm_xi"
    c_text = "(4 - sin(x1)^2)/4*norm_xi^2"
    (rp, rm), matrix, report = build_second_order(
        b_text, c_text, grid64(), mu_text=mu_text)
    assert report.ok
    assert report.M == 1
    # identity {a+, a-} = (1/2){b1, mu}
    b1 = parse(b_text, 1)
    mu = parse(mu_text, 1)
    for x, xi in [(0.3, 1.0), (1.2, -2.0), (4.0, 1.5)]:
        p = PhasePoint((x,), (xi,))
        lhs = poisson(rp, rm, p)
        rhs = 0.5 * poisson(b1, mu, p)
        assert lhs == pytest.approx(rhs, abs=1e-10)


def test_hyperbolicity_guard():
    with pytest.raises(HyperbolicityError):
        build_second_order("0", "norm_xi^2", grid64(), mu_text="0")


def test_mismatched_mu_rejected():
    with pytest.raises(ConfigError):
        build_second_order("0", "-(norm_xi^2)", grid64(), mu_text="norm_xi")


def test_missing_mu_requires_double_root():
    with pytest.raises(ConfigError):
        build_second_order("0", "-(norm_xi^2)", grid64())
