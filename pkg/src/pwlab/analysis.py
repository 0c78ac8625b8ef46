"""Composite experiment drivers shared by the CLI and the acceptance suite.

Each driver runs one study end to end on a configured system and returns
a plain dict of results (JSON-ready); the CLI adds persistence and
figures on top.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.polynomial import Polynomial

from .characteristics import condition_c, group_roots, sphere_samples
from .errors import ConfigError
from .geometry import FlowParams, detect_periods, wavefront_propagate
from .grid import (SpectralField, VectorField, bessel_potential,
                   random_shell_field, vector_lp_norm)
from .measure import (SmoothFn, fit_decay_exponent, sigma_decomposition,
                      sublevel_scan)
from .propagator import picard_solve, reference_solve
from .spectral import assemble, eigenvalues, weyl_fit, weyl_predict
from .symdsl import PhasePoint

__all__ = [
    "build_data",
    "check_system",
    "sublevel_suite",
    "lp_ratio_scan",
    "wavefront_check",
    "weyl_run",
]


# ---------------------------------------------------------------------------
# Initial data factory
# ---------------------------------------------------------------------------

def periodic_gaussian(grid, x0, sigma):
    """exp(-d(x, x0)^2 / (2 sigma^2)) with the periodic distance."""
    xm = grid.xmesh()
    d2 = 0.0
    for d in range(grid.n):
        diff = np.abs(xm[d] - x0[d])
        diff = np.minimum(diff, 2 * math.pi - diff)
        d2 = d2 + diff ** 2
    return np.exp(-d2 / (2.0 * sigma ** 2))


def build_data(sys, spec, rng):
    """Initial VectorField from a data description.

    kinds: ``weighted_modes`` ({"weights": {"0": 1.0, "1": 0.03}}),
    ``shell`` ({"band": 4}), ``point`` ({"x0": [...], "width_cells": 1.5,
    "component": 0 | "all"}).
    """
    grid = sys.grid
    m = sys.m
    kind = spec.get("kind", "weighted_modes")
    if kind == "shell":
        k = int(spec["band"])
        return random_shell_field(grid, 2 ** k, 2 ** (k + 1), rng, m=m)
    if kind == "weighted_modes":
        weights = {int(k): float(v)
                   for k, v in spec.get("weights", {"0": 1.0}).items()}
        comps = []
        kr = grid.kradius()
        for _ in range(m):
            sp = np.zeros(grid.sizes, dtype=complex)
            for k, amp in weights.items():
                mask = np.abs(kr - abs(k)) < 0.5
                cnt = int(mask.sum())
                sp[mask] = amp * (rng.standard_normal(cnt)
                                  + 1j * rng.standard_normal(cnt))
            comps.append(SpectralField(grid, spec=sp))
        v = VectorField(comps)
        return v * (1.0 / v.l2())
    if kind == "point":
        x0 = [float(v) for v in spec.get("x0", [math.pi] * grid.n)]
        width = float(spec.get("width_cells", 1.5)) * grid.dx[0]
        bump = periodic_gaussian(grid, x0, width)
        target = spec.get("component", "all")
        comps = []
        for i in range(m):
            if target == "all" or int(target) == i:
                comps.append(SpectralField(grid, phys=bump.astype(complex)))
            else:
                comps.append(SpectralField.zero(grid))
        v = VectorField(comps)
        return v * (1.0 / v.l2())
    raise ConfigError(f"unknown data kind {kind!r}")


# ---------------------------------------------------------------------------
# Bracket certification
# ---------------------------------------------------------------------------

def check_system(sys, cap=8, grid=128, mult_tol=1e-6, bracket_tol=1e-8):
    roots = sys.exact_roots or list(sys.rootsys.roots)
    rootsys = group_roots(roots, sphere_samples(roots[0].n, 128))
    return condition_c(rootsys, cap=cap, grid=grid, mult_tol=mult_tol,
                       bracket_tol=bracket_tol)


# ---------------------------------------------------------------------------
# Sublevel suite
# ---------------------------------------------------------------------------

def sublevel_suite(M_list, eps_list, draws=100, rng=None, refine=2048,
                   T=1.0):
    """Decay, band-count and band-length studies on polynomial families.

    Per M: the fitted sup-measure exponent of the ladder family
    (t - w)^M + w t^M (must clear 1/(2M) - 0.05); the colliding family
    (t^2 - w^2)^M whose sup-measure exponent sits at the tight 1/(2M)
    rate and whose maximal band-component length fits the alpha-step
    exponent; and the band-count bound Delta(Sigma^p) <= K (M+1)^2 over
    random degree-M draws.
    """
    rng = rng or np.random.default_rng(0xC0FFEE)
    out = {}
    for M in M_list:
        floor = 1.0 / (2 * M)

        def ladder(w, M=M):
            return lambda t: (t - w) ** M + w * t ** M

        ws = np.linspace(0.0, 0.9, 12)
        ladder_rep = sublevel_scan(ladder, ws, T, eps_list, M, refine=refine)

        def collide(w, M=M):
            return lambda t: (t ** 2 - w ** 2) ** M

        wsc = np.geomspace(1e-4, 0.8, 25)
        collide_rep = sublevel_scan(collide, wsc, T, eps_list, M,
                                    refine=refine)

        # maximal band-component length at the adversarial parameter
        lengths = []
        for eps in eps_list:
            best = 0.0
            for w in np.geomspace(max(1e-4, 0.5 * eps ** floor),
                                  min(0.9, 8 * eps ** floor), 7):
                fn = SmoothFn(
                    lambda t, w=w, M=M: (t ** 2 - w ** 2) ** M,
                    derivatives=_poly_derivs_collide(w, M))
                dec = sigma_decomposition(fn, T, eps, M=M, refine=refine)
                best = max(best, max(dec.max_lengths.values()))
            lengths.append(best)
        length_slope = fit_decay_exponent(eps_list, lengths)

        # component-count bound over random draws
        violations = 0
        for _ in range(draws):
            coeffs = rng.uniform(-1, 1, size=M + 1)
            if abs(coeffs[-1]) < 0.1:
                coeffs[-1] = 0.5 * math.copysign(1.0, coeffs[-1] or 1.0)
            poly = Polynomial(coeffs)
            roots = [r for r in np.roots(list(reversed(coeffs)))
                     if abs(r.imag) < 1e-9 and -0.05 <= r.real <= T + 0.05]
            K = max(1, len(roots))
            dec = sigma_decomposition(SmoothFn.from_poly(poly), T,
                                      float(eps_list[-1]), M=M, refine=refine)
            for p in range(1, M + 1):
                if dec.delta[p] > K * (M + 1) ** 2:
                    violations += 1
        out[M] = {
            "ladder_exponent": ladder_rep.fitted_exponent,
            "ladder_measures": ladder_rep.measures,
            "collide_exponent": collide_rep.fitted_exponent,
            "collide_measures": collide_rep.measures,
            "length_slope": length_slope,
            "lengths": lengths,
            "floor": floor,
            "ladder_pass": ladder_rep.fitted_exponent >= floor - 0.05,
            "count_bound_violations": violations,
            "alpha_step": floor,
            "length_pass": abs(length_slope - floor) <= 0.1,
        }
    return {"eps": [float(e) for e in eps_list], "per_M": out}


def _poly_derivs_collide(w, M):
    poly = (Polynomial([-w ** 2, 0.0, 1.0])) ** M
    ds = []
    cur = poly
    for _ in range(M + 3):
        cur = cur.deriv()
        ds.append(cur)
    return ds


# ---------------------------------------------------------------------------
# L^p ratio scan
# ---------------------------------------------------------------------------

def focusing_packet(sys, band, rng, omega=None, width_scale=1.0):
    """Band-limited packet e^{i k_c . x} bump(x) with width 2^{-band/2}."""
    grid = sys.grid
    n = grid.n
    if omega is None:
        omega = [1.0] if n == 1 else [1.0 / math.sqrt(2.0)] * 2
    kc = [int(round(2 ** band * w)) for w in omega]
    sigma = width_scale * 2.0 ** (-band / 2.0) * 2 * math.pi / 4.0
    x0 = [math.pi] * n
    bump = periodic_gaussian(grid, x0, sigma)
    xm = grid.xmesh()
    phase = sum(kc[d] * xm[d] for d in range(n))
    carrier = bump * np.exp(1j * phase)
    comps = [SpectralField(grid, phys=carrier.astype(complex))
             for _ in range(sys.m)]
    v = VectorField(comps)
    return v * (1.0 / v.l2())


def lp_ratio_scan(sys, p_list, bands, t, N=6, Q=48, alpha_scale=1.0,
                  rng=None, width_scale=1.0, alpha_scales=None):
    """ratio_k = ||u(t)||_p / ||<D>^alpha u0||_p on focusing packets.

    alpha = alpha_scale * (n-1) |1/p - 1/2|; a spread max/min <= 4 over
    the bands is the boundedness surrogate.  u(t) is computed once per
    band and reused for every p and every alpha scale (pass
    ``alpha_scales`` to evaluate several normalizations in one sweep).
    """
    rng = rng or np.random.default_rng(0xC0FFEE)
    scales = list(alpha_scales) if alpha_scales is not None else [alpha_scale]
    n = sys.grid.n
    fields = {}
    for k in bands:
        u0 = focusing_packet(sys, k, rng, width_scale=width_scale)
        rep = picard_solve(sys, u0, t, N, Q, z_bar=0.0)
        fields[k] = (u0, rep.u)
    per_scale = {}
    for scale in scales:
        table = {}
        for p in p_list:
            alpha = scale * (n - 1) * abs(1.0 / p - 0.5)
            ratios = []
            for k in bands:
                u0, ut = fields[k]
                denom = vector_lp_norm(bessel_potential(u0, alpha), p)
                ratios.append(vector_lp_norm(ut, p) / denom)
            spread = max(ratios) / min(ratios)
            table[p] = {
                "alpha": alpha,
                "ratios": ratios,
                "spread": spread,
                "passes": spread <= 4.0,
            }
        per_scale[scale] = table
    out = {"bands": list(bands), "t": t, "N": N, "Q": Q,
           "alpha_scale": scales[0], "per_p": per_scale[scales[0]]}
    if alpha_scales is not None:
        out["per_scale"] = per_scale
    return out


# ---------------------------------------------------------------------------
# Wavefront containment
# ---------------------------------------------------------------------------

def bandpass_coefficients(field, k_center, rel_width=0.35):
    """Complex band-pass coefficients: Gaussian window around |k| = k_center."""
    grid = field.grid
    r = grid.kradius()
    window = np.exp(-((r - k_center) ** 2) / (2.0 * (rel_width * k_center) ** 2))
    return np.fft.ifftn(field.spec * window * grid.npoints)


def wavefront_check(sys, x0, t, max_switches=2, k_center=None,
                    mass_radius_cells=4.0, params=None):
    """Fraction of high-band coefficient mass near broken-flow endpoints.

    Point-concentrated data at x0 evolves with the direct solver; the
    positions of a band-pass analysis of u(t) are compared against the
    x-projections of every broken-flow endpoint launched from
    (x0, +-direction) seeds.
    """
    grid = sys.grid
    n = grid.n
    if k_center is None:
        k_center = min(grid.sizes) / 3.0
    u0 = build_data(sys, {"kind": "point", "x0": x0, "width_cells": 1.5,
                          "component": "all"}, np.random.default_rng(0))
    ut = reference_solve(sys, u0, t, tol=1e-8)
    roots = sys.exact_roots or list(sys.rootsys.roots)
    reps = [roots[g[0]] for g in sys.rootsys.groups]
    if n == 1:
        seeds = [PhasePoint(tuple(x0), (1.0,)), PhasePoint(tuple(x0), (-1.0,))]
    else:
        seeds = [PhasePoint(tuple(x0), (math.cos(a), math.sin(a)))
                 for a in np.linspace(0, 2 * math.pi, 16, endpoint=False)]
    trajs = wavefront_propagate(reps, seeds, t, max_switches,
                                params or FlowParams())
    endpoints = [traj.endpoint for _, _, traj in trajs]
    xm = grid.xmesh()
    radius = mass_radius_cells * grid.dx[0]
    near = np.zeros(grid.sizes, dtype=bool)
    for p in endpoints:
        d2 = 0.0
        for d in range(n):
            diff = np.abs(xm[d] - p.x[d])
            diff = np.minimum(diff, 2 * math.pi - diff)
            d2 = d2 + diff ** 2
        near |= d2 <= radius ** 2
    mass_in = 0.0
    mass_total = 0.0
    for c in ut.components:
        w = np.abs(bandpass_coefficients(c, k_center)) ** 2
        mass_total += float(np.sum(w))
        mass_in += float(np.sum(w[near]))
    fraction = mass_in / max(mass_total, 1e-300)
    return {
        "fraction": fraction,
        "endpoints": [[list(p.x), list(p.xi)] for p in endpoints],
        "k_center": k_center,
        "radius_cells": mass_radius_cells,
        "n_endpoints": len(endpoints),
        "passes": fraction >= 0.95,
    }


# ---------------------------------------------------------------------------
# Counting asymptotics
# ---------------------------------------------------------------------------

def weyl_run(sys, K, window, rng=None, predict_samples=10 ** 6,
             period_seeds=12, period_tol=2e-2):
    """Assemble, count, fit two terms, predict the leading one, and flag
    reliability of the second via the periodic-set fraction."""
    from .spectral import WeylReport, _min_speed
    rng = rng or np.random.default_rng(0xC0FFEE)
    n = sys.grid.n
    g = assemble(sys, K)
    evs = eigenvalues(g)
    roots = sys.exact_roots or list(sys.rootsys.roots)
    cmin = min(_min_speed(r, n, 64) for r in roots)
    safe_max = 0.5 * max(cmin, 1e-6) * K
    c1, c0, lam, counts, resid = weyl_fit(evs, window, n, safe_max=safe_max)
    pred = weyl_predict(roots, n, rng, samples=predict_samples)
    base = window[0]
    w2 = (1.5 * base, min(3.0 * base, safe_max))
    c1b, c0b, *_ = weyl_fit(evs, w2, n, safe_max=safe_max)
    stability = abs(c0b - c0) / max(abs(c0), 1e-12)
    seeds = [PhasePoint((x,), (s,)) for x in np.linspace(0.3, 5.8, period_seeds // 2)
             for s in (1.0, -1.0)] if n == 1 else [
        PhasePoint((x, 1.0), (math.cos(a), math.sin(a)))
        for x in np.linspace(0.3, 5.8, 4)
        for a in np.linspace(0.2, 2 * math.pi, 3, endpoint=False)]
    reps = [roots[gg[0]] for gg in sys.rootsys.groups]
    frac, _ = detect_periods(reps, seeds, (0.5, 4 * math.pi + 0.5),
                             period_tol, params=FlowParams(dt=5e-3))
    rep = WeylReport(
        c_lead=c1, c_second=c0, c_lead_pred=pred,
        rel_error_lead=abs(c1 - pred) / max(abs(pred), 1e-12),
        window=tuple(window), lambda_grid=lam, counts=counts,
        fit_residual=resid, second_stability=stability,
        periodic_fraction=frac, second_reliable=frac <= 0.5)
    out = rep.to_dict()
    out.update({
        "K": K,
        "dim": g.dim,
        "herm_deviation": g.herm_deviation,
        "second_window": list(w2),
        "lambda": lam.tolist(),
        "counts": counts.tolist(),
        "eigenvalues": evs.tolist(),
    })
    return out
