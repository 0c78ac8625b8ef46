"""Eigenstructure of matrix symbols and bracket-order certification.

Given the characteristic roots a_j(x, xi) of a first-order system, the
central question is how they intersect: never (an elliptic gap),
transversally, or tangentially with some finite order.  The certificate
computed here is, for every pair of non-identical roots and every
sampled multiplicity point, the least lambda such that the iterated
bracket H_{a_j}^lambda a_k is nonzero; the maximum over the scan is the
order M of the whole system (M = 0 when roots never meet).

Brackets are evaluated through the symbolic closures of
:mod:`pwlab.symdsl`, so the scan is differencing-free and can be
vectorised over sample grids.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import AmbiguityError, DepthError, NumericalError
from .symdsl import PhasePoint, iterated_bracket_expr

__all__ = [
    "MatrixSymbol",
    "RootSystem",
    "BracketReport",
    "eigs",
    "track_branches",
    "group_roots",
    "condition_c",
    "theoretical_smoothing",
    "sphere_samples",
]


@dataclass(frozen=True)
class MatrixSymbol:
    """m x m grid of scalar symbols with a nominal order (1 or 0)."""

    entries: tuple
    order: int

    def __post_init__(self):
        m = len(self.entries)
        for row in self.entries:
            if len(row) != m:
                raise ValueError("matrix symbol must be square")

    @property
    def m(self):
        return len(self.entries)

    @property
    def n(self):
        return self.entries[0][0].n

    def value_at(self, p, t=None):
        """Dense numeric matrix at a phase point."""
        m = self.m
        out = np.empty((m, m), dtype=float)
        for i in range(m):
            for j in range(m):
                out[i, j] = self.entries[i][j].value_at(p, t=t)
        return out

    def hermitian_residual(self, points, t=None):
        """max |A - A^T| / max |A| over the sample points (real entries)."""
        worst = 0.0
        for p in points:
            a = self.value_at(p, t=t)
            scale = max(1.0, float(np.max(np.abs(a))))
            worst = max(worst, float(np.max(np.abs(a - a.T))) / scale)
        return worst


def eigs(a, p, t=None):
    """Eigenvalues (ascending) and rank-one projectors of A(p).

    The reconstruction sum_j a_j P_j reproduces A(p) to machine
    precision; callers relying on one-dimensional eigenspaces should
    check multiplicity separately.
    """
    mat = a.value_at(p, t=t) if isinstance(a, MatrixSymbol) else np.asarray(a)
    sym = 0.5 * (mat + mat.T)
    try:
        w, v = np.linalg.eigh(sym)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolve failed: {exc}") from exc
    projectors = [np.outer(v[:, j], v[:, j].conj()) for j in range(len(w))]
    return w, projectors


def track_branches(a, path, gap_tol=1e-6, tie_tol=1e-12, t=None):
    """Continue eigenvalue branches along a path of phase points.

    Consecutive eigenvalue sets are matched by the minimal-total-
    displacement assignment.  Steps where the matched values pass closer
    than ``gap_tol`` are flagged as crossings; a genuine tie (two
    assignments of equal cost that continue the branches differently)
    raises :class:`AmbiguityError`.

    Returns (branches, crossings): an (m, len(path)) array and the list
    of flagged path indices.
    """
    def eig_at(p):
        mat = a.value_at(p, t=t)
        return np.sort(np.linalg.eigvalsh(0.5 * (mat + mat.T)))

    values = [eig_at(p) for p in path]
    m = a.m
    branches = np.empty((m, len(path)))
    branches[:, 0] = values[0]
    crossings = []
    for i in range(1, len(path)):
        prev = branches[:, i - 1]
        cur = values[i]
        cost = np.abs(prev[:, None] - cur[None, :])
        row, col = linear_sum_assignment(cost)
        best = cost[row, col].sum()
        # exhaustive tie scan is cheap for m <= 6; a tie only matters when
        # the competing continuations actually diverge beyond gap_tol
        if m <= 6:
            for perm in itertools.permutations(range(m)):
                c = sum(cost[j, perm[j]] for j in range(m))
                if abs(c - best) <= tie_tol and any(
                    perm[j] != col[j] and abs(cur[perm[j]] - cur[col[j]]) > gap_tol
                    for j in range(m)
                ):
                    raise AmbiguityError(
                        f"tied branch assignment at path index {i}"
                    )
        branches[:, i] = cur[col]
        gaps = np.abs(np.subtract.outer(cur, cur))
        gaps[np.diag_indices(m)] = np.inf
        if np.min(gaps) < gap_tol:
            crossings.append(i)
    return branches, crossings


@dataclass(frozen=True)
class RootSystem:
    """Characteristic roots with their identical-root grouping.

    ``groups`` partitions root indices so that roots inside one group
    agree at every sample point (an identically repeated root), while
    roots of different groups differ somewhere; a witness point with the
    observed gap is stored per cross-group pair.
    """

    roots: tuple
    groups: tuple
    witnesses: dict = field(default_factory=dict, compare=False)

    @property
    def m(self):
        return len(self.roots)

    @property
    def r(self):
        return len(self.groups)

    @property
    def n(self):
        return self.roots[0].n

    def representatives(self):
        """One root expression per group, in group order."""
        return [self.roots[g[0]] for g in self.groups]

    def block_sizes(self):
        return [len(g) for g in self.groups]

    def group_of(self, root_index):
        for gi, g in enumerate(self.groups):
            if root_index in g:
                return gi
        raise KeyError(root_index)


def sphere_samples(n, count, rng=None):
    """Sample points of S*T^n: x uniform in the torus, |xi| = 1.

    With a generator the samples are random; otherwise a deterministic
    grid (x lattice times xi directions) of at least ``count`` points.
    """
    if rng is not None:
        xs = rng.uniform(0.0, 2 * math.pi, size=(count, n))
        if n == 1:
            xis = rng.choice([-1.0, 1.0], size=(count, 1))
        else:
            ang = rng.uniform(0.0, 2 * math.pi, size=count)
            xis = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        return [PhasePoint(tuple(x), tuple(xi)) for x, xi in zip(xs, xis)]
    if n == 1:
        nx = max(4, int(math.ceil(count / 2)))
        xs = np.linspace(0.0, 2 * math.pi, nx, endpoint=False)
        return [PhasePoint((x,), (s,)) for x in xs for s in (1.0, -1.0)]
    ndir = 8
    nx = max(2, int(math.ceil(math.sqrt(count / ndir))))
    xs = np.linspace(0.0, 2 * math.pi, nx, endpoint=False)
    angs = np.linspace(0.0, 2 * math.pi, ndir, endpoint=False)
    return [
        PhasePoint((x1, x2), (math.cos(a), math.sin(a)))
        for x1 in xs for x2 in xs for a in angs
    ]


def group_roots(roots, samples, identical_tol=1e-10, witness_tol=1e-6):
    """Partition roots into groups of identically equal expressions.

    Two roots land in one group when they agree to ``identical_tol`` at
    every sample; otherwise the sample of maximal gap is kept as the
    distinctness witness.  Singleton groups are the fallback, so the
    operation cannot fail.
    """
    roots = tuple(roots)
    m = len(roots)
    vals = np.empty((m, len(samples)))
    for i, root in enumerate(roots):
        vals[i] = [root.value_at(p) for p in samples]
    parent = list(range(m))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    witnesses = {}
    for i in range(m):
        for j in range(i + 1, m):
            gaps = np.abs(vals[i] - vals[j])
            k = int(np.argmax(gaps))
            if gaps[k] <= identical_tol:
                parent[find(j)] = find(i)
            else:
                witnesses[(i, j)] = (samples[k], float(gaps[k]))
                if gaps[k] <= witness_tol:
                    # distinct but never well separated on this sample set;
                    # keep the best witness found anyway
                    pass
    buckets = {}
    for i in range(m):
        buckets.setdefault(find(i), []).append(i)
    groups = tuple(tuple(sorted(g)) for _, g in sorted(buckets.items()))
    return RootSystem(roots=roots, groups=groups, witnesses=witnesses)


@dataclass(frozen=True)
class PairScan:
    """Bracket scan result for one cross-group pair of roots."""

    i: int
    j: int
    points: tuple          # multiplicity PhasePoints
    orders: tuple          # least nonzero-bracket order per point (None = exhausted)
    status: str            # "strict" | "order" | "fail"

    @property
    def lambda_star(self):
        good = [o for o in self.orders if o is not None]
        return max(good) if good else None


@dataclass(frozen=True)
class BracketReport:
    """Certificate of the finite-bracket-order condition over a scan grid."""

    pairs: tuple
    M: int
    ok: bool
    mult_tol: float
    bracket_tol: float
    cap: int

    def to_dict(self):
        return {
            "M": self.M if self.ok else None,
            "ok": self.ok,
            "mult_tol": self.mult_tol,
            "bracket_tol": self.bracket_tol,
            "cap": self.cap,
            "pairs": [
                {
                    "i": p.i,
                    "j": p.j,
                    "status": p.status,
                    "lambda_star": p.lambda_star,
                    "points": [
                        {"x": list(pt.x), "xi": list(pt.xi), "order": o}
                        for pt, o in zip(p.points, p.orders)
                    ],
                }
                for p in self.pairs
            ],
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def _bracket_threshold(fi, fj, lam, xi_norm, bracket_tol):
    """Homogeneity-invariant comparison scale for H_{a_i}^lam a_j.

    Each bracket against a degree-d generator shifts the degree by
    d - 1, so for tagged roots the result has a known degree and the
    threshold rescales accordingly; untagged roots are treated as
    degree one (threshold bracket_tol * |xi|).
    """
    di = fi.homogeneity_degree if fi.homogeneity_degree is not None else Fraction(1)
    dj = fj.homogeneity_degree if fj.homogeneity_degree is not None else Fraction(1)
    deg = dj + lam * (di - 1)
    return bracket_tol * float(xi_norm) ** float(deg)


def condition_c(rootsys, cap=8, grid=64, mult_tol=1e-6, bracket_tol=1e-8):
    """Certify the finite-order bracket condition over a sampled S*T^n.

    For every ordered cross-group pair (i, j) the scan finds the sampled
    multiplicity points |a_i - a_j| <= mult_tol * scale and the least
    lambda <= cap with |H_{a_i}^lambda a_j| above the homogeneity-
    normalised threshold.  M is the maximum order over all pairs and
    points; pairs that never meet are reported as ``strict`` and an
    exhausted cap yields a ``fail`` status rather than an exception.
    """
    reps = rootsys.representatives()
    n = rootsys.n
    samples = sphere_samples(n, max(grid * 2, 100))
    xs = np.array([p.x for p in samples])       # (S, n)
    xis = np.array([p.xi for p in samples])     # (S, n)
    xcols = [xs[:, k] for k in range(n)]
    xicols = [xis[:, k] for k in range(n)]

    pair_scans = []
    orders_seen = [0]
    ok = True
    for gi in range(len(reps)):
        for gj in range(len(reps)):
            if gi == gj:
                continue
            fi, fj = reps[gi], reps[gj]
            vi = fi.value(xcols, xicols)
            vj = fj.value(xcols, xicols)
            scale = np.maximum(1.0, np.maximum(np.abs(vi), np.abs(vj)))
            mask = np.abs(vi - vj) <= mult_tol * scale
            if not np.any(mask):
                pair_scans.append(PairScan(gi, gj, (), (), "strict"))
                continue
            sel = np.nonzero(mask)[0]
            pts = [samples[s] for s in sel]
            pend = np.ones(len(sel), dtype=bool)
            found = [None] * len(sel)
            try:
                for lam in range(1, cap + 1):
                    h = iterated_bracket_expr(fi, fj, lam, cap=cap)
                    vals = h.value([c[sel] for c in xcols], [c[sel] for c in xicols])
                    xi_norms = np.sqrt((xis[sel] ** 2).sum(axis=1))
                    thr = np.array([
                        _bracket_threshold(fi, fj, lam, r, bracket_tol)
                        for r in xi_norms
                    ])
                    hit = pend & (np.abs(vals) > thr)
                    for idx in np.nonzero(hit)[0]:
                        found[idx] = lam
                    pend &= ~hit
                    if not pend.any():
                        break
            except DepthError:
                pass
            orders_seen.extend(f for f in found if f is not None)
            if any(f is None for f in found):
                status = "fail"
                ok = False
            else:
                status = "order"
            pair_scans.append(PairScan(gi, gj, tuple(pts), tuple(found), status))
    M = max(orders_seen)
    return BracketReport(
        pairs=tuple(pair_scans), M=M, ok=ok,
        mult_tol=mult_tol, bracket_tol=bracket_tol, cap=cap,
    )


def theoretical_smoothing(l, M, n):
    """Sobolev gain of the l-th iterated-integral term, as an exact rational.

    N = ((-3n/2 - 2)(3[l/2] - 1 - n) + ([l/2] - n - 1)(l/(2M) - n - 1))
        / (3[l/2] - 2n - 2 + l/(2M)),

    which grows like l/(6M + 2) for large l.  The value can be negative
    at moderate l; only the growth matters.
    """
    if l < 1:
        raise ValueError("l must be >= 1")
    if M < 1:
        raise ValueError("M must be >= 1")
    l = int(l)
    M = int(M)
    n = int(n)
    half = l // 2
    num = (Fraction(-3 * n, 2) - 2) * (3 * half - 1 - n) \
        + (half - n - 1) * (Fraction(l, 2 * M) - n - 1)
    den = 3 * half - 2 * n - 2 + Fraction(l, 2 * M)
    return num / den
