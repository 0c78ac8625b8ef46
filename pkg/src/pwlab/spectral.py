"""Fourier-Galerkin truncation and eigenvalue-counting asymptotics.

The operator A_tilde + B restricted to the modes |k_j| <= K (per axis)
is a dense Hermitian matrix whose entries come from the x-Fourier
coefficients of the symbol: a separable entry g(x) h(xi) contributes
g_hat(k' - k) h(k), and general entries are assembled column-by-column
from an FFT of x -> a(x, k) on a fine auxiliary grid so the differences
|k' - k| <= 2K are alias-free.  Symbols with significant x-mass beyond
2K modes are rejected.

The two-term counting fit N(lambda) ~ c_n lambda^n + c'_n lambda^{n-1}
is least squares over a window below the truncation-corrupted zone, and
the first coefficient is predicted independently from the phase-space
volume c_n = (2 pi)^{-n} sum_j vol{(x, xi): a_j(x, xi) < 1}, estimated
by Monte Carlo (with a deterministic quadrature cross-check exposed for
1-homogeneous roots).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CutoffError, NumericalError, ShapeError, WindowError
from .grid import separable_terms
from .symdsl import Const, SymbolExpr

__all__ = [
    "GalerkinMatrix",
    "WeylReport",
    "assemble",
    "eigenvalues",
    "counting",
    "weyl_fit",
    "weyl_predict",
    "weyl_predict_quadrature",
]

MAX_DIM = 12000
ALIAS_TOL = 1e-8


def _mode_list(n, K):
    axis = np.arange(-K, K + 1)
    if n == 1:
        return axis.reshape(-1, 1)
    a, b = np.meshgrid(axis, axis, indexing="ij")
    return np.stack([a.ravel(), b.ravel()], axis=1)


def _aux_grid(n, K):
    P = 8
    while P < 4 * K + 2:
        P *= 2
    return P


def _x_coefficients(vals, n, P):
    """Fourier coefficients of an x-profile sampled on the P^n grid."""
    return np.fft.fftn(vals) / P ** n


def _check_mass(coefs, K, P, n, what):
    """Reject profiles with relative x-mass beyond 2K modes."""
    total = float(np.sum(np.abs(coefs)))
    if total == 0.0:
        return
    if n == 1:
        freqs = np.fft.fftfreq(P, d=1.0 / P).astype(int)
        far = np.abs(freqs) > 2 * K
        mass = float(np.sum(np.abs(coefs[far])))
    else:
        fa = np.fft.fftfreq(P, d=1.0 / P).astype(int)
        f1, f2 = np.meshgrid(fa, fa, indexing="ij")
        far = (np.abs(f1) > 2 * K) | (np.abs(f2) > 2 * K)
        mass = float(np.sum(np.abs(coefs[far])))
    if mass > ALIAS_TOL * total:
        raise CutoffError(
            f"{what}: x-profile mass beyond 2K modes is {mass / total:.2e}")


@dataclass
class GalerkinMatrix:
    """Dense Hermitian truncation of the operator to |k| <= K per axis."""

    K: int
    n: int
    m: int
    modes: np.ndarray
    matrix: np.ndarray
    herm_deviation: float

    @property
    def dim(self):
        return self.matrix.shape[0]


def _gather(coefs, modes, c, P, n):
    """Coefficients at the difference frequencies k' - k_c, vectorised."""
    if n == 1:
        idx = (modes[:, 0] - modes[c, 0]) % P
        return coefs[idx]
    i1 = (modes[:, 0] - modes[c, 0]) % P
    i2 = (modes[:, 1] - modes[c, 1]) % P
    return coefs[i1, i2]


def _assemble_entry(entry, modes, n, K, mat, row0, col0):
    """Add Op(entry) restricted to the mode set into mat[row0:, col0:]."""
    nm = len(modes)
    if not entry.uses_x:
        kcols = [modes[:, d].astype(float) for d in range(n)]
        dummy = [np.zeros(nm) for _ in range(n)]
        vals = entry.value(dummy, kcols)
        idx = np.arange(nm)
        mat[row0 + idx, col0 + idx] += vals
        return
    P = _aux_grid(n, K)
    xs = [2 * math.pi * np.arange(P) / P for _ in range(n)]
    xm = np.meshgrid(*xs, indexing="ij")
    terms = separable_terms(entry.ast)
    if terms is not None:
        for gx, h in terms:
            if gx is None:
                gvals = np.ones([P] * n)
            else:
                gexpr = SymbolExpr(gx, n)
                gvals = gexpr.value(xm, [np.zeros([P] * n)] * n)
            coefs = _x_coefficients(gvals, n, P)
            _check_mass(coefs, K, P, n, "separable x-factor")
            if h is None:
                hvals = np.ones(nm)
            else:
                hexpr = SymbolExpr(h, n)
                hvals = hexpr.value([np.zeros(nm)] * n,
                                    [modes[:, d].astype(float) for d in range(n)])
            for c in range(nm):
                mat[row0:row0 + nm, col0 + c] += _gather(coefs, modes, c, P, n) * hvals[c]
        return
    # general path: one FFT per column
    for c in range(nm):
        kvec = [np.full([P] * n, float(modes[c, d])) for d in range(n)]
        vals = entry.value(xm, kvec)
        coefs = _x_coefficients(vals, n, P)
        _check_mass(coefs, K, P, n, f"column k={tuple(modes[c])}")
        mat[row0:row0 + nm, col0 + c] += _gather(coefs, modes, c, P, n)


def assemble(system, K, hermitize=True):
    """Galerkin matrix of Op(A_tilde + B) on the box |k_j| <= K.

    The result is Hermitized ((G + G*)/2) and the pre-Hermitization
    deviation recorded; for a symmetric system the deviation is at the
    rounding level.  ``hermitize=False`` returns the raw quantization
    matrix (used by entry-level oracle checks).
    """
    rootsys = system.rootsys
    B = system.B
    n = rootsys.n
    m = rootsys.m
    modes = _mode_list(n, K)
    nm = len(modes)
    dim = m * nm
    if dim > MAX_DIM:
        raise ShapeError(f"Galerkin dimension {dim} exceeds {MAX_DIM}")
    if n == 2 and (K > 24 or m > 2):
        raise ShapeError("2-D assembly is restricted to K <= 24, m <= 2")
    mat = np.zeros((dim, dim), dtype=complex)
    for i in range(m):
        _assemble_entry(rootsys.roots[i], modes, n, K, mat, i * nm, i * nm)
    for i in range(m):
        for j in range(m):
            entry = B.entries[i][j]
            if isinstance(entry.ast, Const) and entry.ast.value == 0.0:
                continue
            if entry.uses_t:
                raise ShapeError("Galerkin assembly requires t-independent B")
            _assemble_entry(entry, modes, n, K, mat, i * nm, j * nm)
    dev = float(np.max(np.abs(mat - mat.conj().T)))
    scale = max(1.0, float(np.max(np.abs(mat))))
    out = 0.5 * (mat + mat.conj().T) if hermitize else mat
    return GalerkinMatrix(K=K, n=n, m=m, modes=modes, matrix=out,
                          herm_deviation=dev / scale)


def eigenvalues(g, driver=None):
    """Ascending eigenvalues of the Hermitized Galerkin matrix."""
    try:
        if driver is None:
            w = np.linalg.eigvalsh(g.matrix)
        else:
            from scipy.linalg import eigh
            w = eigh(g.matrix, eigvals_only=True, driver=driver)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolve failed: {exc}") from exc
    return np.sort(w)


def counting(evs, lam):
    """N(lambda) = #{j: lambda_j < lambda} (strict)."""
    return int(np.searchsorted(evs, lam, side="left"))


@dataclass
class WeylReport:
    """Two-term counting fit with its phase-space prediction."""

    c_lead: float
    c_second: float
    c_lead_pred: float
    rel_error_lead: float
    window: tuple
    lambda_grid: np.ndarray = field(repr=False)
    counts: np.ndarray = field(repr=False)
    fit_residual: float = 0.0
    second_stability: float = None
    periodic_fraction: float = None
    second_reliable: bool = None

    def to_dict(self):
        return {
            "c_lead": self.c_lead,
            "c_second": self.c_second,
            "c_lead_pred": self.c_lead_pred,
            "rel_error_lead": self.rel_error_lead,
            "window": list(self.window),
            "fit_residual": self.fit_residual,
            "second_stability": self.second_stability,
            "periodic_fraction": self.periodic_fraction,
            "second_reliable": self.second_reliable,
        }


def weyl_fit(evs, window, n, num_points=200, safe_max=None):
    """Least-squares fit of N(lambda) against (lambda^n, lambda^{n-1}).

    ``safe_max`` caps the admissible window (typically half the smallest
    root speed times K); exceeding it raises WindowError.
    """
    lo, hi = window
    if hi <= lo or lo <= 0:
        raise WindowError(f"bad window {window}")
    if safe_max is not None and hi > safe_max:
        raise WindowError(
            f"window top {hi} exceeds truncation-safe bound {safe_max:.3g}")
    lam = np.linspace(lo, hi, num_points)
    counts = np.array([counting(evs, x) for x in lam], dtype=float)
    basis = np.stack([lam ** n, lam ** (n - 1)], axis=1)
    sol, res, *_ = np.linalg.lstsq(basis, counts, rcond=None)
    resid = float(np.sqrt(np.mean((basis @ sol - counts) ** 2)))
    return float(sol[0]), float(sol[1]), lam, counts, resid


def weyl_predict(roots, n, rng, samples=10 ** 6, speed_grid=64):
    """Monte-Carlo phase-space volume prediction of the leading
    coefficient: (2 pi)^{-n} sum_j vol{(x, xi): a_j < 1}.

    Roots are evaluated with |xi| in a bounding box sized from the
    minimal speed over directions; counts include every root with its
    multiplicity.
    """
    total = 0.0
    for a in roots:
        cmin = _min_speed(a, n, speed_grid)
        R = 1.25 / max(cmin, 1e-8)
        xs = [rng.uniform(0, 2 * math.pi, size=samples) for _ in range(n)]
        xis = [rng.uniform(-R, R, size=samples) for _ in range(n)]
        rad = np.sqrt(sum(v ** 2 for v in xis))
        ok = rad > 1e-8
        vals = np.full(samples, np.inf)
        vals[ok] = a.value([x[ok] for x in xs], [v[ok] for v in xis])
        frac = float(np.mean(vals < 1.0))
        total += frac * (2 * R) ** n * (2 * math.pi) ** n
    return total / (2 * math.pi) ** n


def weyl_predict_quadrature(roots, n, nx=256, ndir=64):
    """Deterministic cross-check for 1-homogeneous roots:
    vol{a < 1} = (1/n) int_x int_{S^{n-1}} a(x, w)^{-n} dw dx."""
    total = 0.0
    for a in roots:
        xs = [np.linspace(0, 2 * math.pi, nx, endpoint=False)] * n
        if n == 1:
            acc = 0.0
            for w in (1.0, -1.0):
                vals = a.value(xs, [np.full(nx, w)])
                acc += np.mean(1.0 / vals) * 2 * math.pi
            total += acc
        else:
            ang = np.linspace(0, 2 * math.pi, ndir, endpoint=False)
            xg = np.meshgrid(*xs, indexing="ij")
            acc = 0.0
            for t in ang:
                w = [np.full_like(xg[0], math.cos(t)), np.full_like(xg[0], math.sin(t))]
                vals = a.value(xg, w)
                acc += np.mean(0.5 / vals ** 2) * (2 * math.pi) ** 2 * (2 * math.pi / ndir)
            total += acc
    return total / (2 * math.pi) ** n


def _min_speed(a, n, grid):
    xs = np.linspace(0, 2 * math.pi, grid, endpoint=False)
    if n == 1:
        best = np.inf
        for w in (1.0, -1.0):
            vals = a.value([xs], [np.full(grid, w)])
            best = min(best, float(np.min(np.abs(vals))))
        return best
    ang = np.linspace(0, 2 * math.pi, 16, endpoint=False)
    xg = np.meshgrid(xs, xs, indexing="ij")
    best = np.inf
    for t in ang:
        vals = a.value(xg, [np.full_like(xg[0], math.cos(t)),
                            np.full_like(xg[0], math.sin(t))])
        best = min(best, float(np.min(np.abs(vals))))
    return best
