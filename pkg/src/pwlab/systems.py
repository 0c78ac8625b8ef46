"""Example-system generators and canned benchmark systems.

Besides ready-made 2x2 benchmark systems (elliptic gap, transversal,
glancing, strictly hyperbolic), this module builds first-order systems
out of scalar problems:

* :func:`build_companion` turns an m-th order factorised scalar operator
  with t-independent characteristic roots into the first-order system on
  the component vector (u, P_1 u, P_2 u, ..., P^J u, ...), where
  P_j = i d/dt - Op(lambda_j) and J ranges over ordered sequences of
  distinct factor indices of length < m.  The vector has
  1 + sum_{j=1}^{m-1} m!/j! components, the diagonal carries one root
  per component, and the coupling has -1 entries linking each component
  to its extension plus scalar-equation terms in the rows of maximal J.

* :func:`build_second_order` reduces u'' + b u' + c u = 0 (time
  derivatives as i d/dt) to the 2-component system on (<D>u, u') whose
  characteristic roots are (-b1 +- mu)/2 with mu^2 = b1^2 - 4 c2; the
  factor mu must be supplied (or detected as 0) since the roots are only
  smooth when the discriminant is a perfect square.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .characteristics import (MatrixSymbol, condition_c, group_roots,
                              sphere_samples)
from .errors import ConfigError, HyperbolicityError, SizeError
from .grid import SpectralField, VectorField, apply_op
from .propagator import SystemSpec
from .symdsl import BinOp, Const, JNormXi, Neg, SymbolExpr, const, parse

__all__ = [
    "make_system",
    "strict_2x2",
    "elliptic_gap_system",
    "glancing_system",
    "CompanionSystem",
    "build_companion",
    "build_second_order",
    "companion_size",
]


def _zero(n):
    return const(0.0, n)


def make_system(root_texts, b_rows, grid, T=1.0, method="auto",
                exact_root_texts=None):
    """Assemble a SystemSpec from expression strings.

    ``b_rows`` is an m x m grid of order-zero expression strings ("0"
    allowed).  ``exact_root_texts`` optionally carries unregularised
    root expressions for bracket certification; they default to the
    propagation roots.
    """
    n = grid.n
    roots = [parse(s, n, homogeneity_degree=None) for s in root_texts]
    m = len(roots)
    if len(b_rows) != m or any(len(r) != m for r in b_rows):
        raise ConfigError("B must be an m x m grid of expressions")
    B = MatrixSymbol(
        tuple(tuple(parse(s, n) for s in row) for row in b_rows), order=0)
    rootsys = group_roots(roots, sphere_samples(n, 128))
    exact = (
        [parse(s, n, homogeneity_degree=1) for s in exact_root_texts]
        if exact_root_texts else
        [parse(s, n, homogeneity_degree=None) for s in root_texts]
    )
    return SystemSpec(rootsys=rootsys, B=B, grid=grid, T=T, method=method,
                      exact_roots=exact)


def strict_2x2(grid, coupling=1.0, T=1.0, method="auto"):
    """Strictly hyperbolic pair +-reg|xi| with constant coupling."""
    b = repr(float(coupling))
    return make_system(
        ["reg_norm_xi", "-reg_norm_xi"],
        [["0", b], [b, "0"]],
        grid, T=T, method=method,
        exact_root_texts=["norm_xi", "-norm_xi"],
    )


def elliptic_gap_system(grid, coupling=0.5, T=1.0, method="auto"):
    """Roots reg|xi| and 2 reg|xi|: gap bounded below, no intersections."""
    b = repr(float(coupling))
    return make_system(
        ["reg_norm_xi", "2*reg_norm_xi"],
        [["0", b], [b, "0"]],
        grid, T=T, method=method,
        exact_root_texts=["norm_xi", "2*norm_xi"],
    )


def glancing_system(grid, coupling=0.4, T=1.0, method="auto"):
    """Roots reg|xi| and (1+sin^2 x1) reg|xi|: order-two tangency on sin x1 = 0."""
    b = repr(float(coupling))
    return make_system(
        ["reg_norm_xi", "(1+sin(x1)^2)*reg_norm_xi"],
        [["0", b], [b, "0"]],
        grid, T=T, method=method,
        exact_root_texts=["norm_xi", "(1+sin(x1)^2)*norm_xi"],
    )


# ---------------------------------------------------------------------------
# Companion systems for factorised scalar operators
# ---------------------------------------------------------------------------

def companion_size(m):
    """1 + sum_{j=1}^{m-1} m!/j! components."""
    return 1 + sum(math.factorial(m) // math.factorial(j) for j in range(1, m))


def _index_sequences(m):
    """Component labels: ordered sequences of distinct indices, length
    0..m-1, sorted by length then lexicographically."""
    labels = [()]
    for k in range(1, m):
        labels.extend(itertools.permutations(range(1, m + 1), k))
    return labels


@dataclass
class CompanionSystem:
    """First-order system equivalent to a factorised scalar equation."""

    labels: list
    system: SystemSpec
    roots: list            # the scalar roots lambda_1..lambda_m
    lower: dict            # {J: coefficient SymbolExpr} scalar-equation terms
    c0: SymbolExpr         # zero-order scalar coefficient

    @property
    def size(self):
        return len(self.labels)

    def initial_data(self, gs):
        """Map scalar Cauchy data g_j = (i d/dt)^j u(0) to the component
        vector; the correction operators are elementary symmetric
        polynomials in the root multipliers of each label."""
        grid = self.system.grid
        m = len(self.roots)
        if len(gs) != m:
            raise ConfigError(f"need {m} Cauchy data fields")
        comps = []
        for J in self.labels:
            acc = SpectralField.zero(grid)
            for term in _expand_factors(self.roots, J, grid, gs):
                acc = acc + term
            sign = (-1.0) ** len(J)
            comps.append(sign * acc)
        return VectorField(comps)


def _expand_factors(roots, J, grid, gs):
    """Terms of prod_{j in J} (D - Lambda_j) applied to u at t = 0,
    expressed through g_k = D^k u(0) with D = i d/dt; the Lambda_j
    commute (multipliers or shared expressions are required)."""
    if not J:
        yield gs[0]
        return
    k = len(J)
    lams = [roots[j - 1] for j in J]
    for r in range(k + 1):
        for subset in itertools.combinations(range(k), k - r):
            term = gs[r]
            for idx in subset:
                term = apply_op(lams[idx], term)
            yield ((-1.0) ** (k - r)) * term


def build_companion(m, root_texts, grid, lower=None, c_text="0", T=1.0,
                    method="auto"):
    """Companion system for P_1 ... P_m u + sum b_J P^J u + c u = 0.

    ``lower`` maps index tuples J (length 1..m-1) to order-zero
    coefficient expression strings; omitted coefficients are zero.
    Only t-independent roots are supported, and the exact reduction
    assumes commuting factors (identical roots or x-independent
    multipliers); reordering corrections beyond that are the caller's
    responsibility and default to zero.
    """
    if m not in (2, 3):
        raise SizeError("companion systems support m in {2, 3}")
    if len(root_texts) != m:
        raise ConfigError(f"need {m} roots")
    n = grid.n
    roots = [parse(s, n) for s in root_texts]
    for r in roots:
        if r.uses_t:
            raise ConfigError("companion roots must be t-independent")
    labels = _index_sequences(m)
    size = len(labels)
    assert size == companion_size(m)
    lower = {tuple(k): parse(v, n) for k, v in (lower or {}).items()}
    c0 = parse(c_text, n)

    # diagonal root for component J: the factor index used to extend J
    def extend_index(J):
        for j in range(1, m + 1):
            if j not in J:
                return j
        raise AssertionError

    diag = []
    for J in labels:
        j0 = extend_index(J)
        diag.append(roots[j0 - 1])

    zero = _zero(n)
    b_entries = [[zero for _ in range(size)] for _ in range(size)]
    pos = {J: i for i, J in enumerate(labels)}
    for i, J in enumerate(labels):
        j0 = extend_index(J)
        ext = (j0,) + J
        if len(ext) <= m - 1:
            b_entries[i][pos[ext]] = const(-1.0, n)
        else:
            # row of maximal |J|: P_{j0} P^J u equals the full product, and
            # the scalar equation replaces it with the lower-order terms:
            # D V_J = lambda V_J + (-1)^m (sum_J' b_J' (-1)^{|J'|} V_J' + c V_0)
            full_sign = (-1.0) ** m
            for JP, coeff in lower.items():
                col = pos[tuple(JP)]
                w = full_sign * ((-1.0) ** len(JP))
                b_entries[i][col] = _scaled(coeff, w, n)
            b_entries[i][pos[()]] = _combine(
                b_entries[i][pos[()]], _scaled(c0, full_sign, n), n)
    # order-zero diagonal couplings from the lower terms belong to the
    # block-diagonal part, not to B
    for i in range(size):
        e = b_entries[i][i]
        if not (isinstance(e.ast, Const) and e.ast.value == 0.0):
            diag[i] = _combine(diag[i], e, n)
            b_entries[i][i] = zero
    B = MatrixSymbol(tuple(tuple(row) for row in b_entries), order=0)
    rootsys = group_roots(diag, sphere_samples(n, 128))
    sysspec = SystemSpec(rootsys=rootsys, B=B, grid=grid, T=T, method=method)
    return CompanionSystem(labels=labels, system=sysspec, roots=roots,
                           lower=lower, c0=c0)


def _scaled(expr, factor, n):
    if isinstance(expr.ast, Const):
        return const(expr.ast.value * factor, n)
    return SymbolExpr(BinOp("*", Const(float(factor)), expr.ast), n)


def _combine(a, b, n):
    if isinstance(a.ast, Const) and a.ast.value == 0.0:
        return b
    if isinstance(b.ast, Const) and b.ast.value == 0.0:
        return a
    return SymbolExpr(BinOp("+", a.ast, b.ast), n)


# ---------------------------------------------------------------------------
# Second-order scalar equations
# ---------------------------------------------------------------------------

def build_second_order(b_text, c_text, grid, mu_text=None, T=1.0,
                       method="auto", run_condition_c=True):
    """Reduce D^2 u + Op(b) D u + Op(c) u = 0 (D = i d/dt) to first order.

    The 2-component form acts on v = (<D_x> u, D u) with matrix symbol
    [[0, <xi>], [-<xi>^{-1} c2, -b1]]; its characteristic roots are
    (-b1 +- mu)/2 where mu^2 = b1^2 - 4 c2.  The discriminant must be a
    perfect square of a smooth symbol ``mu`` for the roots to be smooth:
    pass ``mu_text`` explicitly, or leave it None to auto-detect the
    double-root case b1^2 = 4 c2.

    Returns (roots, matrix, report): the two root expressions, the
    reduction MatrixSymbol, and the bracket-order certificate (or None).
    """
    n = grid.n
    b1 = parse(b_text, n)
    c2 = parse(c_text, n)
    samples = sphere_samples(n, 256)
    disc = np.array([
        b1.value_at(p) ** 2 - 4.0 * c2.value_at(p) for p in samples
    ])
    if np.min(disc) < -1e-8:
        raise HyperbolicityError(
            f"b1^2 - 4 c2 reaches {np.min(disc):.3e} < 0 on S*T^n")
    if mu_text is None:
        if np.max(np.abs(disc)) <= 1e-10:
            mu = const(0.0, n)
        else:
            raise ConfigError(
                "discriminant is not identically zero: supply mu with "
                "mu^2 = b1^2 - 4*c2 (roots are smooth only for a perfect square)")
    else:
        mu = parse(mu_text, n)
        mismatch = max(
            abs(b1.value_at(p) ** 2 - 4.0 * c2.value_at(p) - mu.value_at(p) ** 2)
            for p in samples
        )
        if mismatch > 1e-8:
            raise ConfigError(
                f"mu^2 differs from b1^2 - 4 c2 by {mismatch:.3e}")
    root_plus = SymbolExpr(
        BinOp("/", BinOp("+", Neg(b1.ast), mu.ast), Const(2.0)), n)
    root_minus = SymbolExpr(
        BinOp("/", BinOp("-", Neg(b1.ast), mu.ast), Const(2.0)), n)
    matrix = MatrixSymbol((
        (const(0.0, n), parse("jnorm_xi", n)),
        (SymbolExpr(Neg(BinOp("/", c2.ast, JNormXi())), n),
         SymbolExpr(Neg(b1.ast), n)),
    ), order=1)
    report = None
    if run_condition_c:
        rootsys = group_roots([root_plus, root_minus], samples[:128])
        report = condition_c(rootsys, cap=6)
    return (root_plus, root_minus), matrix, report
