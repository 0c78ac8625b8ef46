"""Periodic spectral fields and pseudodifferential operator application.

Fields live on uniform [0, 2*pi)^n grids with power-of-two sizes and keep
both representations: physical values and Fourier coefficients with the
convention u_hat_k = (2*pi)^{-n} \\int u e^{-ik.x} dx (trapezoid-exact on
the grid, i.e. fftn/Ntot).

Operators act by the standard quantization

    (Op(a) u)(x) = sum_k a(x, k) u_hat_k e^{ik.x},

evaluated exactly at grid points.  Four application paths produce
bit-identical results up to rounding: a pure Fourier multiplier when the
symbol has no x-dependence, pointwise multiplication when it has no
xi-dependence, an FFT path per separable term g(x) h(xi), and a direct
per-mode loop for everything else.  Products are truncated back to the
grid's Nyquist box; no dealiasing beyond that truncation is applied,
which for smooth data is a spectrally small effect.

The adjoint application is exact for the same quantization, so the
Hermitized operator (Op(a) + Op(a)^*)/2 used by time integrators is
available matrix-free.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import BandError, ShapeError
from .symdsl import BinOp, Call, Const, JNormXi, Neg, NormXi, RegNormXi, \
    SymbolExpr, Var, simplify

__all__ = [
    "Grid",
    "SpectralField",
    "VectorField",
    "apply_op",
    "apply_op_adjoint",
    "apply_op_sym",
    "sobolev_norm",
    "lp_norm",
    "bessel_potential",
    "random_shell_field",
    "write_fields",
    "read_fields",
]


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on [0, 2*pi)^n, n in {1, 2}."""

    sizes: tuple

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        if len(sizes) not in (1, 2):
            raise ShapeError("dimension must be 1 or 2")
        for s in sizes:
            if s < 8 or (s & (s - 1)) != 0:
                raise ShapeError(f"grid size {s} must be a power of two >= 8")

    @property
    def n(self):
        return len(self.sizes)

    @property
    def npoints(self):
        return int(np.prod(self.sizes))

    @property
    def dx(self):
        return tuple(2 * np.pi / s for s in self.sizes)

    def axes(self):
        return [2 * np.pi * np.arange(s) / s for s in self.sizes]

    def xmesh(self):
        """List of n arrays of shape ``sizes`` with grid coordinates."""
        return list(np.meshgrid(*self.axes(), indexing="ij"))

    def k_axes(self):
        return [np.fft.fftfreq(s, d=1.0 / s).astype(int) for s in self.sizes]

    def kmesh(self):
        return list(np.meshgrid(*self.k_axes(), indexing="ij"))

    def kradius(self):
        km = self.kmesh()
        return np.sqrt(sum(k.astype(float) ** 2 for k in km))


class SpectralField:
    """Immutable complex field with consistent physical/Fourier data.

    Either representation may be supplied; the other is derived lazily
    on first access and cached (the field is immutable, so the pair
    stays consistent: round-trip error is at rounding level).
    """

    __slots__ = ("grid", "_phys", "_spec")

    def __init__(self, grid, phys=None, spec=None):
        if (phys is None) == (spec is None):
            raise ShapeError("construct from exactly one of phys or spec")
        self.grid = grid
        if phys is not None:
            phys = np.asarray(phys, dtype=complex).copy()
            if phys.shape != grid.sizes:
                raise ShapeError(f"phys shape {phys.shape} != grid {grid.sizes}")
            phys.flags.writeable = False
        if spec is not None:
            spec = np.asarray(spec, dtype=complex).copy()
            if spec.shape != grid.sizes:
                raise ShapeError(f"spec shape {spec.shape} != grid {grid.sizes}")
            spec.flags.writeable = False
        self._phys = phys
        self._spec = spec

    @property
    def phys(self):
        if self._phys is None:
            phys = np.fft.ifftn(self._spec) * self.grid.npoints
            phys.flags.writeable = False
            self._phys = phys
        return self._phys

    @property
    def spec(self):
        if self._spec is None:
            spec = np.fft.fftn(self._phys) / self.grid.npoints
            spec.flags.writeable = False
            self._spec = spec
        return self._spec

    # -- constructors ------------------------------------------------------

    @staticmethod
    def from_phys(grid, values):
        return SpectralField(grid, phys=values)

    @staticmethod
    def from_spec(grid, coeffs):
        return SpectralField(grid, spec=coeffs)

    @staticmethod
    def zero(grid):
        return SpectralField(grid, spec=np.zeros(grid.sizes, dtype=complex))

    @staticmethod
    def mode(grid, k, amplitude=1.0):
        """Single Fourier mode e^{ik.x} (k a scalar in 1-D or a tuple)."""
        spec = np.zeros(grid.sizes, dtype=complex)
        idx = tuple(np.ravel([k]).astype(int) % np.array(grid.sizes))
        spec[idx] = amplitude
        return SpectralField(grid, spec=spec)

    # -- algebra -----------------------------------------------------------

    def _check(self, other):
        if self.grid.sizes != other.grid.sizes:
            raise ShapeError("grids differ")

    def __add__(self, other):
        self._check(other)
        return SpectralField(self.grid, spec=self.spec + other.spec)

    def __sub__(self, other):
        self._check(other)
        return SpectralField(self.grid, spec=self.spec - other.spec)

    def __mul__(self, scalar):
        return SpectralField(self.grid, spec=self.spec * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return SpectralField(self.grid, spec=-self.spec)

    # -- norms ---------------------------------------------------------------

    def l2(self):
        """Quadrature L^2 norm; equals sobolev_norm(u, 0) by Parseval."""
        vol = (2 * np.pi) ** self.grid.n
        return float(np.sqrt(vol * np.sum(np.abs(self.spec) ** 2)))

    def to_spectral(self):
        return self.spec

    def to_physical(self):
        return self.phys


class VectorField:
    """m spectral components sharing one grid."""

    __slots__ = ("components",)

    def __init__(self, components):
        components = tuple(components)
        if not components:
            raise ShapeError("vector field needs at least one component")
        g = components[0].grid
        for c in components:
            if c.grid.sizes != g.sizes:
                raise ShapeError("components on different grids")
        self.components = components

    @property
    def grid(self):
        return self.components[0].grid

    @property
    def m(self):
        return len(self.components)

    @staticmethod
    def zero(grid, m):
        return VectorField([SpectralField.zero(grid) for _ in range(m)])

    def __add__(self, other):
        return VectorField([a + b for a, b in zip(self.components, other.components)])

    def __sub__(self, other):
        return VectorField([a - b for a, b in zip(self.components, other.components)])

    def __mul__(self, scalar):
        return VectorField([c * scalar for c in self.components])

    __rmul__ = __mul__

    def __neg__(self):
        return VectorField([-c for c in self.components])

    def l2(self):
        return float(np.sqrt(sum(c.l2() ** 2 for c in self.components)))


# ---------------------------------------------------------------------------
# Symbol classification for fast application paths
# ---------------------------------------------------------------------------

def _depends(node, want_x, want_xi):
    if isinstance(node, Var):
        return (node.kind == "x" and want_x) or (node.kind == "xi" and want_xi)
    if isinstance(node, (NormXi, JNormXi, RegNormXi)):
        return want_xi
    if isinstance(node, Const):
        return False
    if isinstance(node, Neg):
        return _depends(node.arg, want_x, want_xi)
    if isinstance(node, Call):
        return _depends(node.arg, want_x, want_xi)
    if isinstance(node, BinOp):
        return _depends(node.lhs, want_x, want_xi) or _depends(node.rhs, want_x, want_xi)
    raise TypeError(node)


def separable_terms(node):
    """Decompose an AST into a list of (x_factor, xi_factor) products.

    Returns None when no such finite decomposition is found by the
    structural scan (sums and products of x-only and xi-only factors).
    Either factor may be None, meaning the constant 1.
    """
    if not _depends(node, True, False):
        return [(None, node)]
    if not _depends(node, False, True):
        return [(node, None)]
    if isinstance(node, Neg):
        inner = separable_terms(node.arg)
        if inner is None:
            return None
        return [
            (simplify(BinOp("*", Const(-1.0), gx if gx is not None else Const(1.0))), h)
            for gx, h in inner
        ]
    if isinstance(node, BinOp):
        if node.op in "+-":
            left = separable_terms(node.lhs)
            right = separable_terms(node.rhs)
            if left is None or right is None:
                return None
            if node.op == "-":
                right = [
                    (simplify(BinOp("*", Const(-1.0), gx if gx is not None else Const(1.0))), h)
                    for gx, h in right
                ]
            return left + right
        if node.op == "*":
            left = separable_terms(node.lhs)
            right = separable_terms(node.rhs)
            if left is None or right is None or (len(left) > 1 and len(right) > 1):
                return None
            out = []
            for gl, hl in left:
                for gr, hr in right:
                    gx = _mul_or_none(gl, gr)
                    h = _mul_or_none(hl, hr)
                    out.append((gx, h))
            return out
        if node.op == "/":
            # only (anything)/(pure factor) splits cleanly
            if not _depends(node.rhs, True, False):
                left = separable_terms(node.lhs)
                if left is None:
                    return None
                return [(gx, _div_or(h, node.rhs)) for gx, h in left]
            if not _depends(node.rhs, False, True):
                left = separable_terms(node.lhs)
                if left is None:
                    return None
                return [(_div_or(gx, node.rhs), h) for gx, h in left]
            return None
    return None


def _mul_or_none(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return simplify(BinOp("*", a, b))


def _div_or(a, b):
    return simplify(BinOp("/", a if a is not None else Const(1.0), b))


# ---------------------------------------------------------------------------
# Operator application
# ---------------------------------------------------------------------------

def _eval_on_x(expr_ast, grid, n, t):
    e = SymbolExpr(expr_ast, n)
    xm = grid.xmesh()
    dummy = [np.zeros(grid.sizes) for _ in range(n)]
    return e.value(xm, dummy, t=t)


def _eval_on_k(expr_ast, grid, n, t):
    e = SymbolExpr(expr_ast, n)
    km = [k.astype(float) for k in grid.kmesh()]
    dummy = [np.zeros(grid.sizes) for _ in range(n)]
    return e.value(dummy, km, t=t)


def _apply_scalar(a, u, t=None, adjoint=False):
    grid = u.grid
    n = grid.n
    if a.n != n:
        raise ShapeError("symbol dimension != grid dimension")
    ast = a.ast
    if not _depends(ast, True, False):
        vals = _eval_on_k(ast, grid, n, t)
        spec = u.spec * (np.conj(vals) if adjoint else vals)
        return SpectralField(grid, spec=spec)
    if not _depends(ast, False, True):
        vals = _eval_on_x(ast, grid, n, t)
        mult = np.conj(vals) if adjoint else vals
        return SpectralField(grid, phys=u.phys * mult)
    terms = separable_terms(ast)
    if terms is not None:
        out = np.zeros(grid.sizes, dtype=complex)
        for gx, h in terms:
            gvals = _eval_on_x(gx, grid, n, t) if gx is not None else 1.0
            hvals = _eval_on_k(h, grid, n, t) if h is not None else 1.0
            if adjoint:
                w = np.fft.fftn(np.conj(gvals) * u.phys) / grid.npoints
                out += np.fft.ifftn(np.conj(hvals) * w) * grid.npoints
            else:
                w = np.fft.ifftn(hvals * u.spec) * grid.npoints
                out += gvals * w
        return SpectralField(grid, phys=out)
    return _apply_general(a, u, t, adjoint)


def _apply_general(a, u, t, adjoint):
    """Direct per-mode summation; O(N_x * N_k) time, O(N_x) memory."""
    grid = u.grid
    n = grid.n
    xm = grid.xmesh()
    kaxes = grid.k_axes()
    if adjoint:
        out_spec = np.zeros(grid.sizes, dtype=complex)
        phase_axes = [np.exp(-1j * np.outer(kaxes[d], grid.axes()[d])) for d in range(n)]
        v = u.phys
        it = np.ndindex(*grid.sizes)
        for idx in it:
            kvec = [float(kaxes[d][idx[d]]) for d in range(n)]
            avals = a.value(xm, [np.full(grid.sizes, kv) for kv in kvec], t=t)
            if n == 1:
                phase = phase_axes[0][idx[0]]
            else:
                phase = np.multiply.outer(phase_axes[0][idx[0]], phase_axes[1][idx[1]])
            out_spec[idx] = np.sum(np.conj(avals) * v * phase) / grid.npoints
        return SpectralField(grid, spec=out_spec)
    out = np.zeros(grid.sizes, dtype=complex)
    phase_axes = [np.exp(1j * np.outer(kaxes[d], grid.axes()[d])) for d in range(n)]
    for idx in np.ndindex(*grid.sizes):
        c = u.spec[idx]
        if c == 0:
            continue
        kvec = [float(kaxes[d][idx[d]]) for d in range(n)]
        avals = a.value(xm, [np.full(grid.sizes, kv) for kv in kvec], t=t)
        if n == 1:
            phase = phase_axes[0][idx[0]]
        else:
            phase = np.multiply.outer(phase_axes[0][idx[0]], phase_axes[1][idx[1]])
        out += c * avals * phase
    return SpectralField(grid, phys=out)


def apply_op(a, u, t=None):
    """Apply Op(a) to a field (scalar symbol) or Op(A) to a vector field.

    Matrix application is entrywise: (Op(A)u)_i = sum_j Op(A_ij) u_j,
    with structurally zero entries skipped.
    """
    from .characteristics import MatrixSymbol  # local import avoids a cycle
    if isinstance(a, SymbolExpr):
        if not isinstance(u, SpectralField):
            raise ShapeError("scalar symbol applies to a SpectralField")
        return _apply_scalar(a, u, t=t)
    if isinstance(a, MatrixSymbol):
        if not isinstance(u, VectorField) or u.m != a.m:
            raise ShapeError("matrix symbol applies to a matching VectorField")
        comps = []
        for i in range(a.m):
            acc = SpectralField.zero(u.grid)
            for j in range(a.m):
                entry = a.entries[i][j]
                if isinstance(entry.ast, Const) and entry.ast.value == 0.0:
                    continue
                acc = acc + _apply_scalar(entry, u.components[j], t=t)
            comps.append(acc)
        return VectorField(comps)
    raise TypeError(f"cannot apply {type(a)!r}")


def apply_op_adjoint(a, u, t=None):
    """Apply the exact adjoint Op(a)^* in the same quantization."""
    from .characteristics import MatrixSymbol
    if isinstance(a, SymbolExpr):
        return _apply_scalar(a, u, t=t, adjoint=True)
    if isinstance(a, MatrixSymbol):
        comps = []
        for i in range(a.m):
            acc = SpectralField.zero(u.grid)
            for j in range(a.m):
                entry = a.entries[j][i]  # conjugate transpose
                if isinstance(entry.ast, Const) and entry.ast.value == 0.0:
                    continue
                acc = acc + _apply_scalar(entry, u.components[j], t=t, adjoint=True)
            comps.append(acc)
        return VectorField(comps)
    raise TypeError(f"cannot apply {type(a)!r}")


def apply_op_sym(a, u, t=None):
    """Hermitized application (Op(a) + Op(a)^*)/2, matrix-free."""
    return 0.5 * (apply_op(a, u, t=t) + apply_op_adjoint(a, u, t=t))


# ---------------------------------------------------------------------------
# Norms and potentials
# ---------------------------------------------------------------------------

def sobolev_norm(u, s):
    """H^s norm ((2*pi)^n sum <k>^{2s} |u_hat_k|^2)^{1/2}."""
    grid = u.grid
    jk = np.sqrt(1.0 + grid.kradius() ** 2)
    vol = (2 * np.pi) ** grid.n
    return float(np.sqrt(vol * np.sum(jk ** (2 * s) * np.abs(u.spec) ** 2)))


def lp_norm(u, p):
    """Trapezoid quadrature of |u|^p over the torus, p in (1, inf)."""
    if not (1.0 < p < np.inf):
        raise ValueError("p must lie in (1, inf)")
    grid = u.grid
    cell = np.prod(grid.dx)
    return float((cell * np.sum(np.abs(u.phys) ** p)) ** (1.0 / p))


def vector_lp_norm(u, p):
    grid = u.grid
    cell = np.prod(grid.dx)
    mag2 = sum(np.abs(c.phys) ** 2 for c in u.components)
    return float((cell * np.sum(mag2 ** (p / 2.0))) ** (1.0 / p))


def bessel_potential(u, alpha):
    """Multiply coefficients by <k>^alpha ( = (I - Laplace)^{alpha/2} )."""
    if isinstance(u, VectorField):
        return VectorField([bessel_potential(c, alpha) for c in u.components])
    jk = np.sqrt(1.0 + u.grid.kradius() ** 2)
    return SpectralField(u.grid, spec=u.spec * jk ** alpha)


def shell_mask(grid, k_lo, k_hi):
    """Boolean mask of modes with k_lo <= |k| < k_hi; BandError if empty."""
    r = grid.kradius()
    mask = (r >= k_lo) & (r < k_hi)
    if not mask.any():
        raise BandError(f"no modes with |k| in [{k_lo}, {k_hi}) on grid {grid.sizes}")
    return mask


def random_shell_field(grid, k_lo, k_hi, rng, m=1):
    """Unit-L^2 random field with coefficients supported in a dyadic shell."""
    mask = shell_mask(grid, k_lo, k_hi)
    comps = []
    for _ in range(m):
        spec = np.zeros(grid.sizes, dtype=complex)
        vals = rng.standard_normal(int(mask.sum())) + 1j * rng.standard_normal(int(mask.sum()))
        spec[mask] = vals
        f = SpectralField(grid, spec=spec)
        comps.append(f)
    v = VectorField(comps)
    nrm = v.l2()
    v = v * (1.0 / nrm)
    return v if m > 1 else v.components[0]


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

_MAGIC = b"PWF1"


def write_fields(fh, fields):
    """Binary dump: header (n, sizes, component count) then interleaved
    little-endian float64 re/im per component."""
    if isinstance(fields, SpectralField):
        fields = VectorField([fields])
    grid = fields.grid
    fh.write(_MAGIC)
    fh.write(struct.pack("<i", grid.n))
    for s in grid.sizes:
        fh.write(struct.pack("<i", s))
    fh.write(struct.pack("<i", fields.m))
    for c in fields.components:
        flat = np.ascontiguousarray(c.phys).ravel()
        inter = np.empty(2 * flat.size, dtype="<f8")
        inter[0::2] = flat.real
        inter[1::2] = flat.imag
        fh.write(inter.tobytes())


def read_fields(fh):
    magic = fh.read(4)
    if magic != _MAGIC:
        raise ShapeError("bad field file magic")
    (n,) = struct.unpack("<i", fh.read(4))
    sizes = tuple(struct.unpack("<i", fh.read(4))[0] for _ in range(n))
    (m,) = struct.unpack("<i", fh.read(4))
    grid = Grid(sizes)
    comps = []
    count = int(np.prod(sizes))
    for _ in range(m):
        raw = np.frombuffer(fh.read(16 * count), dtype="<f8")
        phys = (raw[0::2] + 1j * raw[1::2]).reshape(sizes)
        comps.append(SpectralField(grid, phys=phys))
    return VectorField(comps)


def field_to_csv(fh, fields, t_label=""):
    """CSV rows: grid coordinates then re/im per component."""
    if isinstance(fields, SpectralField):
        fields = VectorField([fields])
    grid = fields.grid
    xm = grid.xmesh()
    header = [f"x{d+1}" for d in range(grid.n)]
    for i in range(fields.m):
        header += [f"re_u{i+1}", f"im_u{i+1}"]
    fh.write(",".join(header) + "\n")
    for idx in np.ndindex(*grid.sizes):
        row = [repr(float(xm[d][idx])) for d in range(grid.n)]
        for c in fields.components:
            row += [repr(float(c.phys[idx].real)), repr(float(c.phys[idx].imag))]
        fh.write(",".join(row) + "\n")
