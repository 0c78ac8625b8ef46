"""Sublevel-set measure machinery.

For a smooth f on [0, T] with zeros of order at most M, the measure of
{|f| <= eps} decays like eps^(1/2M) uniformly over compact parameter
families.  The machinery implemented here mirrors the way that bound is
proved and lets each ingredient be tested numerically:

* :func:`sublevel_measure` computes meas{|f| <= eps} by dense sampling
  plus bisection refinement of every boundary crossing;
* :func:`sigma_decomposition` splits the sublevel set into the bands
  Sigma^p where the first p-1 derivatives are small (thresholds
  C eps^{alpha_k}, alpha_k = 1 - k/(2M)) and the p-th is not, reporting
  component counts and lengths;
* :func:`fit_decay_exponent` fits the log-log decay slope of measures
  against a descending eps ladder;
* :func:`xi_measure` estimates, by Monte Carlo over times, base points
  and directions, the fraction of the parameter box where every
  transported root difference along a broken-flow sequence is below
  C eps -- the smallness exponent should approach l/(2M);
* :func:`interpolation_exponent` is the two-norm interpolation index
  (p T + r S)/(T + S).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import DegenerateFit, DerivativeError, DomainError
from .geometry import egorov_symbol_batch

__all__ = [
    "SmoothFn",
    "SublevelReport",
    "SigmaDecomposition",
    "sublevel_measure",
    "sublevel_intervals",
    "sigma_decomposition",
    "fit_decay_exponent",
    "xi_measure",
    "interpolation_exponent",
    "sublevel_scan",
]

MERGE_GAP = 1e-12


class SmoothFn:
    """Callable with derivatives: exact closures when available, else
    Richardson-extrapolated central differences (order cap 6)."""

    def __init__(self, f, derivatives=None, fd_cap=6):
        self.f = f
        self.derivatives = list(derivatives) if derivatives else []
        self.fd_cap = fd_cap

    @staticmethod
    def from_poly(poly):
        """Wrap a numpy Polynomial with its exact derivative chain."""
        ds = []
        cur = poly
        for _ in range(16):
            cur = cur.deriv()
            ds.append(cur)
        return SmoothFn(poly, derivatives=ds)

    def __call__(self, t):
        return self.f(t)

    def deriv(self, p):
        """The p-th derivative as a callable."""
        if p == 0:
            return self.f
        if p <= len(self.derivatives):
            return self.derivatives[p - 1]
        if p > self.fd_cap:
            raise DerivativeError(
                f"derivative order {p} unavailable (cap {self.fd_cap})")
        base = self.derivatives[-1] if self.derivatives else self.f
        extra = p - len(self.derivatives)

        def fd(t, k=extra, g=base):
            return _fd_derivative(g, t, k)

        return fd


def _fd_derivative(g, t, k, h=None):
    """k-th central difference with one Richardson step; the step
    balances truncation against roundoff for the k-th order stencil."""
    t = np.asarray(t, dtype=float)
    if h is None:
        h = (1e-14) ** (1.0 / (k + 2))
    def stencil(hh):
        acc = np.zeros_like(t)
        for j in range(k + 1):
            acc = acc + (-1.0) ** j * math.comb(k, j) * g(t + (k / 2.0 - j) * hh)
        return acc / hh ** k
    a = stencil(h)
    b = stencil(h / 2.0)
    return (4.0 * b - a) / 3.0


# ---------------------------------------------------------------------------
# Interval machinery
# ---------------------------------------------------------------------------

def _merge(intervals, gap=MERGE_GAP):
    if not intervals:
        return []
    intervals = sorted(intervals)
    out = [list(intervals[0])]
    for a, b in intervals[1:]:
        if a <= out[-1][1] + gap:
            out[-1][1] = max(out[-1][1], b)
        else:
            out.append([a, b])
    return [tuple(iv) for iv in out]


def _intersect(list_a, list_b):
    out = []
    for a1, b1 in list_a:
        for a2, b2 in list_b:
            lo, hi = max(a1, a2), min(b1, b2)
            if hi > lo:
                out.append((lo, hi))
    return _merge(out)


def _complement(intervals, T):
    out = []
    cur = 0.0
    for a, b in intervals:
        if a > cur:
            out.append((cur, a))
        cur = max(cur, b)
    if cur < T:
        out.append((cur, T))
    return out


def _measure(intervals):
    return sum(b - a for a, b in intervals)


def _refine_crossing(g, lo, hi, tol=1e-10):
    glo = g(lo)
    for _ in range(200):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if glo * gm <= 0:
            hi = mid
        else:
            lo = mid
            glo = gm
    return 0.5 * (lo + hi)


def sublevel_intervals(f, T, eps, refine=2048):
    """Interval list of {t in [0, T]: |f(t)| <= eps}.

    Dense sampling locates sign changes of |f| - eps; each is refined by
    bisection to 1e-10.  Oscillations between sample points faster than
    T/refine can be missed, which is the documented caveat.
    """
    ts = np.linspace(0.0, T, int(refine) + 1)
    vals = np.abs(np.asarray(f(ts), dtype=float)) - eps
    inside = vals <= 0
    g = lambda t: abs(float(f(t))) - eps
    edges = []
    for i in range(len(ts) - 1):
        if inside[i] != inside[i + 1]:
            edges.append(_refine_crossing(g, ts[i], ts[i + 1]))
    intervals = []
    open_left = None
    if inside[0]:
        open_left = 0.0
    for e in edges:
        if open_left is None:
            open_left = e
        else:
            intervals.append((open_left, e))
            open_left = None
    if open_left is not None:
        intervals.append((open_left, T))
    return _merge(intervals)


def sublevel_measure(f, T, eps, refine=2048):
    """meas{t in [0, T]: |f(t)| <= eps} via sampling plus bisection."""
    if refine < 1000:
        raise DomainError("refine must be >= 1000 base samples")
    return _measure(sublevel_intervals(f, T, eps, refine))


@dataclass
class SublevelReport:
    """Decay of sup-over-family sublevel measures along an eps ladder."""

    eps_list: list
    measures: list
    fitted_exponent: float
    M: int
    K: int
    C: float = 1.0

    def to_dict(self):
        return {
            "eps": [float(e) for e in self.eps_list],
            "measures": [float(m) for m in self.measures],
            "fitted_exponent": float(self.fitted_exponent),
            "M": self.M, "K": self.K, "C": self.C,
            "theoretical_floor": 1.0 / (2 * self.M),
        }


@dataclass
class SigmaDecomposition:
    """Derivative-band split of a sublevel set.

    ``sets[p]`` (p = 1..M) collects the intervals where |d^j f| <=
    C eps^{alpha_j} for j < p and |d^p f| >= C eps^{alpha_p}, with
    alpha_k = 1 - k/(2M); the bands are disjoint up to endpoints and
    cover {|f| <= C eps} once eps is below the family's threshold.
    """

    eps: float
    M: int
    C: float
    alphas: list
    sets: dict
    delta: dict = field(init=False)
    max_lengths: dict = field(init=False)

    def __post_init__(self):
        self.delta = {p: len(iv) for p, iv in self.sets.items()}
        self.max_lengths = {
            p: (max((b - a) for a, b in iv) if iv else 0.0)
            for p, iv in self.sets.items()
        }

    def union_measure(self):
        return sum(_measure(iv) for iv in self.sets.values())


def sigma_decomposition(fn, T, eps, M, C=1.0, refine=2048, include_extra=0):
    """Split {|f| <= C eps} into the derivative bands Sigma^p.

    ``fn`` is a :class:`SmoothFn` (or plain callable; derivatives then
    come from finite differences).  ``include_extra`` adds bands beyond
    p = M, used to check they empty out for small eps.
    """
    if M < 1 or M > 6:
        raise DomainError("M must be in 1..6")
    if not isinstance(fn, SmoothFn):
        fn = SmoothFn(fn)
    alphas = [1.0 - k / (2.0 * M) for k in range(0, M + 2 + include_extra)]
    small = {}
    for j in range(0, M + 1 + include_extra):
        g = fn.deriv(j)
        small[j] = sublevel_intervals(g, T, C * eps ** alphas[j], refine)
    sets = {}
    for p in range(1, M + 1 + include_extra):
        cur = [(0.0, T)]
        for j in range(0, p):
            cur = _intersect(cur, small[j])
        cur = _intersect(cur, _complement(small[p], T))
        sets[p] = cur
    return SigmaDecomposition(eps=eps, M=M, C=C,
                              alphas=alphas[: M + 1 + include_extra],
                              sets=sets)


def fit_decay_exponent(eps_list, measures):
    """Least-squares slope of log(measure) against log(eps).

    Requires at least 5 ladder points spanning three decades; zero
    measures are dropped, and an all-zero ladder raises DegenerateFit.
    """
    eps_arr = np.asarray(eps_list, dtype=float)
    meas_arr = np.asarray(measures, dtype=float)
    if len(eps_arr) < 5:
        raise DomainError("need at least 5 ladder points")
    if np.max(eps_arr) / np.min(eps_arr) < 1e3:
        raise DomainError("ladder must span at least 3 decades")
    keep = meas_arr > 0
    if not np.any(keep):
        raise DegenerateFit("all measures vanish")
    if keep.sum() < 2:
        raise DegenerateFit("not enough nonzero measures to fit")
    slope = np.polyfit(np.log(eps_arr[keep]), np.log(meas_arr[keep]), 1)[0]
    return float(slope)


def sublevel_scan(family, ws, T, eps_list, M, refine=2048):
    """Sup-over-parameters sublevel measures with a fitted exponent.

    ``family(w)`` returns the member function; the reported measure per
    eps is the max over the parameter grid ``ws``.  K is the maximal
    observed count of sublevel components at the smallest eps, a proxy
    for the family's zero count.
    """
    measures = []
    K = 0
    for eps in eps_list:
        best = 0.0
        for w in ws:
            iv = sublevel_intervals(family(w), T, eps, refine)
            best = max(best, _measure(iv))
            if eps == eps_list[-1]:
                K = max(K, len(iv))
        measures.append(best)
    slope = fit_decay_exponent(eps_list, measures)
    return SublevelReport(eps_list=list(eps_list), measures=measures,
                          fitted_exponent=slope, M=M, K=max(K, 1))


# ---------------------------------------------------------------------------
# Transported-difference smallness (Monte Carlo)
# ---------------------------------------------------------------------------

def xi_measure(roots, J, eps_list, samples, T, rng, C=1.0, n_steps=48,
               M=None):
    """Fraction of (t_1..t_l, y, omega) with every transported root
    difference below C eps, for each eps of a descending ladder.

    Times are uniform over [0, T]^l, base points over the torus and
    directions over the unit sphere; the fractions' log-log slope is the
    fitted exponent, to be compared against l/(2M).
    """
    n = roots[0].n
    l = len(J) - 1
    if l < 1:
        raise DomainError("J must have at least two indices")
    ts = [rng.uniform(0.0, T, size=samples) for _ in range(l)]
    ys = [rng.uniform(0.0, 2 * math.pi, size=samples) for _ in range(n)]
    if n == 1:
        oms = [rng.choice([-1.0, 1.0], size=samples)]
    else:
        ang = rng.uniform(0.0, 2 * math.pi, size=samples)
        oms = [np.cos(ang), np.sin(ang)]
    worst = np.zeros(samples)
    for k in range(1, l + 1):
        tk = [ts[i] for i in range(k)]
        vals = np.abs(egorov_symbol_batch(roots, J, tk, ys, oms,
                                          n_steps=n_steps))
        worst = np.maximum(worst, vals)
    fractions = [float(np.mean(worst <= C * eps)) for eps in eps_list]
    exponent = None
    pos = [(e, f) for e, f in zip(eps_list, fractions) if f > 0]
    if len(pos) >= 2:
        le = np.log([e for e, _ in pos])
        lf = np.log([f for _, f in pos])
        exponent = float(np.polyfit(le, lf, 1)[0])
    out = {
        "eps": [float(e) for e in eps_list],
        "fractions": fractions,
        "fitted_exponent": exponent,
        "l": l,
        "samples": samples,
        "C": C,
    }
    if M is not None:
        out["floor"] = l / (2.0 * M)
    return out


def interpolation_exponent(p, r, S, T):
    """Intermediate regularity index (p T + r S)/(T + S) as a Fraction."""
    if not (p < r):
        raise DomainError("need p < r")
    if S <= 0 or T <= 0:
        raise DomainError("need S, T > 0")
    return (Fraction(p) * Fraction(T) + Fraction(r) * Fraction(S)) / (
        Fraction(T) + Fraction(S))
