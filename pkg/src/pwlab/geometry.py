"""Bicharacteristic flows, broken trajectories, and wavefront transport.

The Hamiltonian flow of a scalar symbol a(x, xi) integrates

    x' = da/dxi,   xi' = -da/dx

with classic RK4 on the exact jets of the symbol, conserving a along the
way.  A broken trajectory follows the flow of one root until it meets
the surface a_{j_k} = a_{j_{k+1}}, refines the crossing time by
bisection, switches generator, and continues; tangential touches (where
the root difference reaches a near-zero minimum without changing sign)
also fire a switch and are labelled as such.  Wavefront transport is the
union of broken-flow endpoints over all admissible index sequences.

Flows vectorise over batches of phase points (used heavily by the
surface-measure Monte Carlo), sharing one step count across the batch.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import BlowupError, ConfigError
from .symdsl import PhasePoint

__all__ = [
    "FlowParams",
    "BrokenTrajectory",
    "hamiltonian_flow",
    "flow_batch",
    "egorov_symbol",
    "egorov_symbol_batch",
    "broken_flow",
    "wavefront_propagate",
    "detect_periods",
]

XI_MIN = 1e-3
XI_MAX = 1e6


@dataclass(frozen=True)
class FlowParams:
    """RK4 step control and event tolerances for trajectory integration."""

    dt: float = None            # None: 1e-3 * 2*pi / max|grad a| at the seed
    event_tol: float = 1e-8     # switch admissibility |a_j - a_k| <= tol*|xi|
    time_tol: float = 1e-10     # bisection resolution for switch times
    record_every: int = 1

    def step_for(self, a, x, xi):
        if self.dt is not None:
            return self.dt
        val, dx, dxi = a.jet_batch([np.asarray(v) for v in x],
                                   [np.asarray(v) for v in xi])
        scale = max(1.0, max(float(np.max(np.abs(d))) for d in dx + dxi))
        return 1e-3 * 2 * math.pi / scale


def _rk4_step(a, x, xi, h):
    """One RK4 step of the Hamiltonian field; x, xi are lists of arrays."""

    def rhs(xc, xic):
        _, dx, dxi = a.jet_batch(xc, xic)
        return dxi, [-d for d in dx]

    k1x, k1xi = rhs(x, xi)
    k2x, k2xi = rhs([xv + 0.5 * h * kv for xv, kv in zip(x, k1x)],
                    [xiv + 0.5 * h * kv for xiv, kv in zip(xi, k1xi)])
    k3x, k3xi = rhs([xv + 0.5 * h * kv for xv, kv in zip(x, k2x)],
                    [xiv + 0.5 * h * kv for xiv, kv in zip(xi, k2xi)])
    k4x, k4xi = rhs([xv + h * kv for xv, kv in zip(x, k3x)],
                    [xiv + h * kv for xiv, kv in zip(xi, k3xi)])
    xn = [xv + (h / 6.0) * (a1 + 2 * a2 + 2 * a3 + a4)
          for xv, a1, a2, a3, a4 in zip(x, k1x, k2x, k3x, k4x)]
    xin = [xiv + (h / 6.0) * (a1 + 2 * a2 + 2 * a3 + a4)
           for xiv, a1, a2, a3, a4 in zip(xi, k1xi, k2xi, k3xi, k4xi)]
    return xn, xin


def _check_xi(xi):
    r = np.sqrt(sum(np.asarray(v) ** 2 for v in xi))
    if not np.all(np.isfinite(r)) or np.any(r < XI_MIN) or np.any(r > XI_MAX):
        raise BlowupError(
            f"|xi| left [{XI_MIN:g}, {XI_MAX:g}] during flow integration")


def flow_batch(a, x, xi, t, n_steps):
    """Flow a batch of phase points for (possibly per-sample) times t.

    ``x`` and ``xi`` are lists of n arrays with a common batch shape;
    ``t`` is a scalar or an array of that shape.  All samples take
    ``n_steps`` RK4 steps of size t/n_steps.
    """
    x = [np.asarray(v, dtype=float).copy() for v in x]
    xi = [np.asarray(v, dtype=float).copy() for v in xi]
    h = np.asarray(t, dtype=float) / n_steps
    for _ in range(n_steps):
        x, xi = _rk4_step(a, x, xi, h)
    _check_xi(xi)
    return x, xi


def hamiltonian_flow(a, p0, t, params=None, return_path=False):
    """Integrate the Hamiltonian flow of ``a`` from p0 for time t.

    Conserves a(p(t)) along the trajectory (RK4 accuracy); raises
    :class:`BlowupError` if |xi| leaves the admissible range.  With
    ``return_path`` also returns the list of (time, PhasePoint) samples.
    """
    params = params or FlowParams()
    x = [np.float64(v) for v in p0.x]
    xi = [np.float64(v) for v in p0.xi]
    dt = params.step_for(a, x, xi)
    steps = max(1, int(math.ceil(abs(t) / dt)))
    h = t / steps
    path = [(0.0, p0)] if return_path else None
    for i in range(steps):
        x, xi = _rk4_step(a, x, xi, h)
        _check_xi(xi)
        if return_path and (i + 1) % params.record_every == 0:
            path.append(((i + 1) * h,
                         PhasePoint(tuple(float(v) for v in x),
                                    tuple(float(v) for v in xi))))
    end = PhasePoint(tuple(float(v) for v in x), tuple(float(v) for v in xi))
    return (end, path) if return_path else end


def egorov_symbol(roots, J, times, p):
    """Principal transported difference for a flow-index prefix.

    With k = len(times) <= len(J) - 1, evaluates

        (a_{J[k-1]} - a_{J[k]}) at
            Phi_{J[0]}^{t_1} ( Phi_{J[1]}^{t_2 - t_1} ( ... (p) ))

    using consecutive time increments t_i - t_{i-1} (t_0 = 0); the inner
    flows act first.
    """
    k = len(times)
    if not (1 <= k <= len(J) - 1):
        raise ConfigError("need 1 <= len(times) <= len(J) - 1")
    xs = [np.array([v]) for v in p.x]
    xis = [np.array([v]) for v in p.xi]
    incs = [times[i] - (times[i - 1] if i > 0 else 0.0) for i in range(k)]
    for i in range(k - 1, -1, -1):
        gen = roots[J[i] - 1]
        if incs[i] != 0.0:
            steps = max(1, int(math.ceil(abs(incs[i]) / 0.02)))
            xs, xis = flow_batch(gen, xs, xis, incs[i], steps)
    fa = roots[J[k - 1] - 1]
    fb = roots[J[k] - 1]
    return float(fa.value(xs, xis)[0] - fb.value(xs, xis)[0])


def egorov_symbol_batch(roots, J, times, x, xi, n_steps=64):
    """Vectorised T_k over a batch: ``times`` is a list of k arrays."""
    k = len(times)
    xs = [np.asarray(v, dtype=float) for v in x]
    xis = [np.asarray(v, dtype=float) for v in xi]
    incs = [np.asarray(times[i]) - (np.asarray(times[i - 1]) if i > 0 else 0.0)
            for i in range(k)]
    for i in range(k - 1, -1, -1):
        gen = roots[J[i] - 1]
        xs, xis = flow_batch(gen, xs, xis, incs[i], n_steps)
    fa = roots[J[k - 1] - 1]
    fb = roots[J[k] - 1]
    return fa.value(xs, xis) - fb.value(xs, xis)


@dataclass
class BrokenTrajectory:
    """A trajectory switching generators along the index sequence J."""

    J: tuple
    switch_times: list
    switch_kinds: list          # "crossing" | "touch" | "immediate"
    samples: list               # (t, PhasePoint, active segment index)
    endpoint: PhasePoint
    completed: bool             # all |J|-1 switches fired before T

    def to_rows(self):
        """CSV rows (t, x components, xi components, active root index)."""
        rows = []
        for t, p, seg in self.samples:
            rows.append((t, *p.x, *p.xi, self.J[seg]))
        return rows


def _xi_norm(xi):
    return math.sqrt(sum(float(v) ** 2 for v in xi))


def broken_flow(roots, J, p0, T, params=None):
    """Follow a_{J[0]}'s flow, switching at each root intersection.

    A switch fires at the first sign change of a_{j_seg} - a_{j_seg+1}
    after the previous switch (bisection-refined), or at a tangential
    touch where |difference| dips below event_tol * |xi|; if the start
    point already lies on the intersection the switch is immediate.
    Trajectories that do not complete all switches before T are returned
    flagged (``completed = False``).
    """
    params = params or FlowParams()
    J = tuple(J)
    for a, b in zip(J, J[1:]):
        if a == b:
            raise ConfigError("consecutive indices in J must differ")
    x = [np.float64(v) for v in p0.x]
    xi = [np.float64(v) for v in p0.xi]
    t = 0.0
    seg = 0
    switch_times = []
    switch_kinds = []
    samples = [(0.0, p0, 0)]

    def gap(seg, xc, xic):
        fa = roots[J[seg] - 1]
        fb = roots[J[seg + 1] - 1]
        return float(fa.value(xc, xic) - fb.value(xc, xic))

    def fire(ts, kind, xs, xis):
        nonlocal t, x, xi, seg
        switch_times.append(ts)
        switch_kinds.append(kind)
        t = ts
        x, xi = xs, xis
        seg += 1
        samples.append((t, _pp(x, xi), seg))

    # state one step back, for tangential-minimum detection
    back = None   # (t_prev, x_prev, xi_prev, g_prev, h_prev)
    while t < T - 1e-15:
        gen = roots[J[seg] - 1]
        can_switch = seg < len(J) - 1
        if can_switch:
            g_here = gap(seg, x, xi)
            recently = switch_times and t <= switch_times[-1] + params.time_tol
            if abs(g_here) <= params.event_tol * _xi_norm(xi) and not recently:
                fire(t, "immediate" if t == 0.0 else "touch", x, xi)
                back = None
                continue
        h = min(params.step_for(gen, x, xi), T - t)
        xn, xin = _rk4_step(gen, x, xi, h)
        _check_xi(xin)
        if can_switch:
            g0 = gap(seg, x, xi)
            g1 = gap(seg, xn, xin)
            if g0 * g1 < 0:
                ts = _bisect_switch(gen, gap, seg, x, xi, t, h, params)
                hs = ts - t
                xs, xis = _rk4_step(gen, x, xi, hs)
                fire(ts, "crossing", xs, xis)
                back = None
                continue
            # tangential touch: |g| has an interior minimum near zero
            if back is not None:
                t_p, x_p, xi_p, g_p, h_p = back
                if abs(g0) <= abs(g_p) and abs(g0) <= abs(g1) \
                        and g_p * g0 > 0 and g0 * g1 > 0:
                    tau, xs, xis, gmin = _refine_min(
                        gen, gap, seg, x_p, xi_p, h_p + h, params)
                    ts = t_p + tau
                    ok_time = (not switch_times
                               or ts > switch_times[-1] + params.time_tol)
                    if ok_time and abs(gmin) <= params.event_tol * _xi_norm(xis):
                        fire(ts, "touch", xs, xis)
                        back = None
                        continue
            back = (t, x, xi, g0, h)
        t += h
        x, xi = xn, xin
        samples.append((t, _pp(x, xi), seg))
    completed = seg == len(J) - 1
    return BrokenTrajectory(
        J=J, switch_times=switch_times, switch_kinds=switch_kinds,
        samples=samples, endpoint=_pp(x, xi), completed=completed,
    )


def _pp(x, xi):
    return PhasePoint(tuple(float(v) for v in x), tuple(float(v) for v in xi))


def _bisect_switch(gen, gap, seg, x, xi, t, h, params):
    """Refine the sign-change time inside (t, t+h] to time_tol."""
    lo, hi = 0.0, h
    g_lo = gap(seg, x, xi)
    while hi - lo > params.time_tol:
        mid = 0.5 * (lo + hi)
        xm, xim = _rk4_step(gen, x, xi, mid)
        gm = gap(seg, xm, xim)
        if g_lo * gm <= 0:
            hi = mid
        else:
            lo = mid
            g_lo = gm
    return t + 0.5 * (lo + hi)


def _refine_min(gen, gap, seg, x0, xi0, span, params):
    """Golden-section minimum of |g(tau)| for tau in [0, span], flowing a
    single RK4 step of size tau from the (x0, xi0) state."""

    def val(tau):
        if tau == 0.0:
            return gap(seg, x0, xi0), x0, xi0
        xs, xis = _rk4_step(gen, x0, xi0, tau)
        return gap(seg, xs, xis), xs, xis

    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    lo, hi = 0.0, span
    c = hi - inv_phi * (hi - lo)
    d = lo + inv_phi * (hi - lo)
    gc, _, _ = val(c)
    gd, _, _ = val(d)
    while hi - lo > params.time_tol:
        if abs(gc) < abs(gd):
            hi, d, gd = d, c, gc
            c = hi - inv_phi * (hi - lo)
            gc, _, _ = val(c)
        else:
            lo, c, gc = c, d, gd
            d = lo + inv_phi * (hi - lo)
            gd, _, _ = val(d)
    tau = 0.5 * (lo + hi)
    g, xs, xis = val(tau)
    return tau, xs, xis, g


def admissible_sequences(r, max_switches):
    """Index sequences (j_1..j_{l+1}), l <= max_switches, j_k != j_{k+1}."""
    seqs = []
    for length in range(1, max_switches + 2):
        for seq in itertools.product(range(1, r + 1), repeat=length):
            if all(a != b for a, b in zip(seq, seq[1:])):
                seqs.append(seq)
    return seqs


def wavefront_propagate(roots, seeds, T, max_switches, params=None):
    """Endpoints of all admissible broken flows from the seed set.

    Returns a list of (J, seed, BrokenTrajectory); incomplete
    trajectories (no admissible switch before T) are included flagged,
    their endpoints coinciding with the shorter sequence's flow.
    """
    if max_switches > 4:
        raise ConfigError("max_switches is capped at 4")
    params = params or FlowParams()
    out = []
    for J in admissible_sequences(len(roots), max_switches):
        for seed in seeds:
            try:
                traj = broken_flow(roots, J, seed, T, params)
            except BlowupError:
                continue
            out.append((J, seed, traj))
    return out


def _periodic_distance(p, q):
    dx = 0.0
    for a, b in zip(p.x, q.x):
        d = abs(a - b) % (2 * math.pi)
        dx = max(dx, min(d, 2 * math.pi - d))
    dxi = max(abs(a - b) for a, b in zip(p.xi, q.xi))
    return max(dx, dxi)


def detect_periods(roots, seeds, T_range, tol, params=None, max_switches=0):
    """Fraction of seeds with a trajectory returning within ``tol``.

    Monte-Carlo style report of the relative size of the periodic set:
    each seed is flowed under every admissible sequence with at most
    ``max_switches`` switches and the minimum return distance over
    sampled times in ``T_range`` is compared against tol.  Report only;
    no pass/fail semantics.
    """
    params = params or FlowParams()
    t_lo, t_hi = T_range
    periodic = 0
    details = []
    for seed in seeds:
        best = math.inf
        for J in admissible_sequences(len(roots), max_switches):
            try:
                traj = broken_flow(roots, J, seed, t_hi, params)
            except BlowupError:
                continue
            for t, p, _ in traj.samples:
                if t < t_lo or t == 0.0:
                    continue
                best = min(best, _periodic_distance(seed, p))
        details.append(best)
        if best <= tol:
            periodic += 1
    return periodic / max(1, len(seeds)), details
