import math

import numpy as np
import pytest

from pwlab.errors import BlowupError, ConfigError
from pwlab.geometry import (FlowParams, broken_flow, detect_periods,
                            egorov_symbol, flow_batch, hamiltonian_flow,
                            wavefront_propagate)
from pwlab.symdsl import PhasePoint, parse

GLANCING = ["norm_xi", "(1+sin(x1)^2)*norm_xi"]


def roots1(*texts):
    return [parse(t, 1) for t in texts]


# ---------------------------------------------------------------------------
# hamiltonian_flow
# ---------------------------------------------------------------------------

def test_straight_ray_unit_speed():
    a = parse("reg_norm_xi", 1)
    end = hamiltonian_flow(a, PhasePoint((0.0,), (3.0,)), 1.0)
    assert end.x[0] == pytest.approx(1.0, abs=1e-10)
    assert end.xi[0] == pytest.approx(3.0, abs=1e-10)


def test_linear_symbol_flow():
    a = parse("2.5*xi1", 1)
    end = hamiltonian_flow(a, PhasePoint((0.3,), (1.7,)), 0.8)
    assert end.x[0] == pytest.approx((0.3 + 2.5 * 0.8) % (2 * math.pi), abs=1e-12)
    assert end.xi[0] == pytest.approx(1.7, abs=1e-12)


def test_energy_conservation_long_run():
    a = parse("(1+sin(x1)^2)*norm_xi", 1)
    p0 = PhasePoint((0.7,), (1.3,))
    e0 = a.value_at(p0)
    end, path = hamiltonian_flow(a, p0, 10.0, return_path=True)
    for _, p in path[:: max(1, len(path) // 20)]:
        assert abs(a.value_at(p) - e0) <= 1e-8 * abs(e0) * 10.0


def test_flow_homogeneity_in_xi():
    a = parse("(1+sin(x1)^2)*norm_xi", 1)
    p = PhasePoint((0.9,), (1.0,))
    q = PhasePoint((0.9,), (2.0,))
    e1 = hamiltonian_flow(a, p, 1.3)
    e2 = hamiltonian_flow(a, q, 1.3)
    assert e2.x[0] == pytest.approx(e1.x[0], abs=1e-8)
    assert e2.xi[0] == pytest.approx(2.0 * e1.xi[0], rel=1e-8)


def test_flow_blowup_guard():
    # xi' = -2 exp(2x) xi drives |xi| out of the admissible range
    b = parse("exp(2*x1)*xi1", 1)
    with pytest.raises(BlowupError):
        with np.errstate(all="ignore"):
            hamiltonian_flow(b, PhasePoint((0.0,), (1.0,)), 12.0,
                             FlowParams(dt=5e-3))


def test_symplectic_area_drift():
    # finite-difference Jacobian of the time-10 flow map has det ~ 1
    a = parse("(1+sin(x1)^2)*norm_xi", 1)
    t = 10.0
    h = 1e-4
    params = FlowParams(dt=2e-3)

    def endpoint(x, xi):
        e = hamiltonian_flow(a, PhasePoint((x,), (xi,)), t, params)
        return np.array([e.x[0], e.xi[0]])

    x0, xi0 = 0.8, 1.2
    jac = np.empty((2, 2))
    fx_p = endpoint(x0 + h, xi0)
    fx_m = endpoint(x0 - h, xi0)
    fxi_p = endpoint(x0, xi0 + h)
    fxi_m = endpoint(x0, xi0 - h)
    # unwrap x differences across the 2*pi seam
    dx_x = (fx_p[0] - fx_m[0] + math.pi) % (2 * math.pi) - math.pi
    dx_xi = (fxi_p[0] - fxi_m[0] + math.pi) % (2 * math.pi) - math.pi
    jac[0, 0] = dx_x / (2 * h)
    jac[1, 0] = (fx_p[1] - fx_m[1]) / (2 * h)
    jac[0, 1] = dx_xi / (2 * h)
    jac[1, 1] = (fxi_p[1] - fxi_m[1]) / (2 * h)
    det = np.linalg.det(jac)
    assert abs(det - 1.0) <= 1e-5 + 1e-4  # FD truncation shares the budget


def test_flow_batch_matches_scalar_flow():
    a = parse("(1+sin(x1)^2)*norm_xi", 1)
    xs = np.array([0.1, 0.7, 2.0])
    xis = np.array([1.0, -1.5, 2.0])
    bx, bxi = flow_batch(a, [xs], [xis], 0.9, 256)
    for i in range(3):
        e = hamiltonian_flow(a, PhasePoint((xs[i],), (xis[i],)), 0.9,
                             FlowParams(dt=0.9 / 256))
        assert bx[0][i] % (2 * math.pi) == pytest.approx(e.x[0], abs=1e-9)
        assert bxi[0][i] == pytest.approx(e.xi[0], abs=1e-9)


# ---------------------------------------------------------------------------
# egorov_symbol
# ---------------------------------------------------------------------------

def test_egorov_zero_times_is_pointwise_difference():
    roots = roots1(*GLANCING)
    p = PhasePoint((0.4,), (1.0,))
    v = egorov_symbol(roots, (1, 2), [0.0], p)
    expected = roots[0].value_at(p) - roots[1].value_at(p)
    assert v == pytest.approx(expected, abs=1e-12)


def test_egorov_constant_roots_time_independent():
    roots = roots1("norm_xi", "2*norm_xi")
    p = PhasePoint((1.1,), (1.0,))
    vals = [egorov_symbol(roots, (1, 2), [t], p) for t in (0.0, 0.5, 1.5)]
    assert max(vals) - min(vals) <= 1e-10


def test_egorov_double_zero_at_glancing_point():
    # multiplicity point sin x = 0: T(t) has a double zero in t
    roots = roots1(*GLANCING)
    p = PhasePoint((0.0,), (1.0,))
    h = 1e-3
    f = lambda t: egorov_symbol(roots, (1, 2), [t], p)
    f0 = f(0.0)
    d1 = (f(h) - f(-h)) / (2 * h)
    d2 = (f(h) - 2 * f0 + f(-h)) / h ** 2
    assert abs(f0) <= 1e-10
    assert abs(d1) <= 1e-5
    assert abs(d2) >= 0.5  # second derivative bounded away from zero


# ---------------------------------------------------------------------------
# broken_flow
# ---------------------------------------------------------------------------

def test_broken_flow_no_intersection_is_flagged():
    roots = roots1("norm_xi", "2*norm_xi")
    traj = broken_flow(roots, (1, 2), PhasePoint((0.2,), (1.0,)), 1.0)
    assert not traj.completed
    assert traj.switch_times == []
    # pure a_1 ray
    assert traj.endpoint.x[0] == pytest.approx(1.2, abs=1e-8)


def test_broken_flow_immediate_switch_on_multiplicity_set():
    roots = roots1(*GLANCING)
    traj = broken_flow(roots, (1, 2), PhasePoint((0.0,), (1.0,)), 0.5)
    assert traj.completed
    assert traj.switch_times[0] == 0.0
    assert traj.switch_kinds[0] == "immediate"


def test_broken_flow_glancing_touch_fires():
    # ray from pi/2 under |xi| meets sin x = 0 at x = pi, i.e. t = pi/2
    roots = roots1(*GLANCING)
    traj = broken_flow(roots, (1, 2), PhasePoint((math.pi / 2,), (1.0,)), 2.5)
    assert traj.completed
    assert traj.switch_kinds[0] == "touch"
    assert traj.switch_times[0] == pytest.approx(math.pi / 2, abs=1e-6)
    # the recorded switch state satisfies the multiplicity condition
    i = [k for k, (t, p, s) in enumerate(traj.samples) if s == 1][0]
    _, pswitch, _ = traj.samples[i]
    ga = roots[0].value_at(pswitch)
    gb = roots[1].value_at(pswitch)
    xin = math.sqrt(sum(v * v for v in pswitch.xi))
    assert abs(ga - gb) <= 1e-8 * xin


def test_broken_flow_time_reversal():
    roots = roots1(*GLANCING)
    p0 = PhasePoint((math.pi / 2,), (1.0,))
    T = 2.5
    params = FlowParams(dt=2e-3)
    traj = broken_flow(roots, (1, 2), p0, T, params)
    assert traj.completed
    ts = traj.switch_times[0]
    # segment 2 backwards, then segment 1 backwards
    q = hamiltonian_flow(roots[1], traj.endpoint, -(T - ts), params)
    q = hamiltonian_flow(roots[0], q, -ts, params)
    assert q.x[0] == pytest.approx(p0.x[0], abs=1e-6)
    assert q.xi[0] == pytest.approx(p0.xi[0], abs=1e-6)


def test_broken_flow_rejects_repeated_indices():
    with pytest.raises(ConfigError):
        broken_flow(roots1(*GLANCING), (1, 1), PhasePoint((0.1,), (1.0,)), 1.0)


# ---------------------------------------------------------------------------
# wavefront_propagate
# ---------------------------------------------------------------------------

def test_wavefront_single_root_is_plain_flow():
    roots = roots1("norm_xi")
    seeds = [PhasePoint((0.0,), (1.0,)), PhasePoint((1.0,), (-1.0,))]
    out = wavefront_propagate(roots, seeds, 0.7, 2)
    assert len(out) == len(seeds)  # only J = (1,)
    for J, seed, traj in out:
        assert J == (1,)
        direct = hamiltonian_flow(roots[0], seed, 0.7)
        assert traj.endpoint.x[0] == pytest.approx(direct.x[0], abs=1e-8)


def test_wavefront_elliptic_gap_only_unbroken():
    roots = roots1("norm_xi", "2*norm_xi")
    seeds = [PhasePoint((0.3,), (1.0,))]
    out = wavefront_propagate(roots, seeds, 0.5, 1)
    completed = [traj for _, _, traj in out if traj.completed]
    assert all(len(traj.J) == 1 for traj in completed)


def test_wavefront_glancing_count_matches_enumeration():
    roots = roots1(*GLANCING)
    seeds = [PhasePoint((0.5,), (1.0,))]
    out = wavefront_propagate(roots, seeds, 1.0, 2)
    # enumeration oracle: r=2 gives sequences (1),(2),(12),(21),(121),(212)
    assert len(out) == 6
    labels = sorted(set(J for J, _, _ in out))
    assert labels == [(1,), (1, 2), (1, 2, 1), (2,), (2, 1), (2, 1, 2)]


def test_wavefront_max_switch_cap():
    with pytest.raises(ConfigError):
        wavefront_propagate(roots1(*GLANCING), [PhasePoint((0.1,), (1.0,))],
                            1.0, 5)


# ---------------------------------------------------------------------------
# detect_periods
# ---------------------------------------------------------------------------

def test_detect_periods_constant_torus_rays_all_periodic():
    roots = roots1("0.5*norm_xi")
    seeds = [PhasePoint((x,), (s,)) for x in np.linspace(0, 5, 6)
             for s in (1.0, -1.0)]
    # speed 0.5 ray closes after 4*pi
    frac, details = detect_periods(roots, seeds, (1.0, 4 * math.pi + 0.3),
                                   tol=2e-2, params=FlowParams(dt=5e-3))
    assert frac == pytest.approx(1.0)


def test_detect_periods_generic_2d_direction_rarely_returns():
    roots = [parse("norm_xi", 2)]
    rng = np.random.default_rng(0)
    seeds = []
    for _ in range(10):
        ang = rng.uniform(0.2, math.pi / 2 - 0.2)
        seeds.append(PhasePoint((0.0, 0.0), (math.cos(ang), math.sin(ang))))
    frac, details = detect_periods(roots, seeds, (0.5, 12.0), tol=1e-3,
                                   params=FlowParams(dt=2e-2))
    assert frac <= 0.2


def test_detect_periods_tol_monotone():
    roots = roots1("0.5*norm_xi")
    seeds = [PhasePoint((0.0,), (1.0,))]
    fr = []
    for tol in (1e-1, 1e-2, 1e-3, 1e-6):
        f, _ = detect_periods(roots, seeds, (1.0, 4 * math.pi + 0.3), tol,
                              params=FlowParams(dt=5e-3))
        fr.append(f)
    assert all(a >= b for a, b in zip(fr, fr[1:]))
