"""Phase-space symbol expressions a(x, xi) with exact first derivatives.

The module provides a small infix language over the variables
``x1..xn``, ``xi1..xin`` and optionally ``t``, the operators
``+ - * / ^`` (``^`` right-associative), and the functions ``sin``,
``cos``, ``exp``, ``sqrt``, ``abs`` together with the built-in radial
symbols

* ``norm_xi``      -- |xi|,
* ``jnorm_xi``     -- <xi> = (1 + |xi|^2)^(1/2),
* ``reg_norm_xi``  -- regularised |xi|: (1e-4 + |xi|^2)^(1/2) for
  |xi| < 2 and exactly |xi| above, so low Fourier modes stay evaluable.

Evaluation is pure and deterministic.  Derivatives come in two exact
flavours: forward-mode jets (value plus the full gradient in x and xi,
vectorised over numpy arrays) and symbolic differentiation of the AST
itself.  The symbolic route is what makes iterated Poisson brackets
lossless: each bracket {f, g} is materialised as a new expression tree
and re-jetted, so an l-fold nested bracket involves no finite
differencing at any stage.

Derivatives of ``abs`` and ``norm_xi`` are only defined away from the
origin of their argument; jet evaluation inside |arg| < 1e-8 raises
:class:`~pwlab.errors.EvalError`.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import (DepthError, DimensionError, DomainError, EvalError,
                     SymbolSyntaxError)

ORIGIN_TOL = 1e-8
REG_EPS = 1e-4
REG_KNEE = 2.0

__all__ = [
    "SymbolExpr",
    "Jet",
    "PhasePoint",
    "parse",
    "const",
    "eval_jet",
    "poisson",
    "iterated_bracket",
    "bracket_expr",
    "diff_expr",
]


# ---------------------------------------------------------------------------
# AST nodes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    kind: str     # "x", "xi" or "t"
    index: int    # 1-based; 0 for "t"


@dataclass(frozen=True)
class Neg:
    arg: object


@dataclass(frozen=True)
class BinOp:
    op: str       # one of + - * / ^
    lhs: object
    rhs: object


@dataclass(frozen=True)
class Call:
    func: str     # sin cos exp sqrt abs log (log internal only)
    arg: object


@dataclass(frozen=True)
class NormXi:
    pass


@dataclass(frozen=True)
class JNormXi:
    pass


@dataclass(frozen=True)
class RegNormXi:
    pass


_ZERO = Const(0.0)
_ONE = Const(1.0)


# ---------------------------------------------------------------------------
# Tokenizer / parser
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)

_FUNCS = ("sin", "cos", "exp", "sqrt", "abs")
_NULLARY = {"norm_xi": NormXi, "jnorm_xi": JNormXi, "reg_norm_xi": RegNormXi}
_VAR_RE = re.compile(r"^(xi|x)(\d+)$")


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            bad = len(text) - len(stripped)
            raise SymbolSyntaxError(f"unexpected character {text[bad]!r}", bad, text)
        if m.group("num") is not None:
            tokens.append(("num", float(m.group("num")), m.start("num")))
        elif m.group("name") is not None:
            tokens.append(("name", m.group("name"), m.start("name")))
        else:
            tokens.append(("op", m.group("op"), m.start("op")))
        pos = m.end()
    tokens.append(("end", None, len(text)))
    return tokens


class _Parser:
    """Recursive-descent parser for the documented grammar:

    expr   := term (('+'|'-') term)*
    term   := unary (('*'|'/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?
    atom   := NUMBER | 'pi' | variable | builtin | func '(' expr ')' | '(' expr ')'

    Juxtaposition is not a product; ``2 x1`` is a syntax error.
    """

    def __init__(self, text, n):
        self.text = text
        self.n = n
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op):
        kind, val, pos = self.peek()
        if kind != "op" or val != op:
            raise SymbolSyntaxError(f"expected {op!r}", pos, self.text)
        return self.advance()

    def parse(self):
        node = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise SymbolSyntaxError(f"unexpected trailing token {val!r}", pos, self.text)
        return node

    def expr(self):
        node = self.term()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.advance()
                rhs = self.term()
                node = BinOp(val, node, rhs)
            else:
                return node

    def term(self):
        node = self.unary()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "*/":
                self.advance()
                rhs = self.unary()
                node = BinOp(val, node, rhs)
            else:
                return node

    def unary(self):
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        kind, val, _ = self.peek()
        if kind == "op" and val == "^":
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def atom(self):
        kind, val, pos = self.advance()
        if kind == "num":
            return Const(val)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        if kind == "name":
            if val == "pi":
                return Const(math.pi)
            if val == "t":
                return Var("t", 0)
            if val in _NULLARY:
                return _NULLARY[val]()
            if val in _FUNCS:
                self.expect_op("(")
                node = self.expr()
                self.expect_op(")")
                return Call(val, node)
            m = _VAR_RE.match(val)
            if m is not None:
                idx = int(m.group(2))
                if idx < 1 or idx > self.n:
                    raise DimensionError(
                        f"variable {val!r} out of range for dimension {self.n}"
                    )
                return Var(m.group(1), idx)
            raise SymbolSyntaxError(f"unknown identifier {val!r}", pos, self.text)
        raise SymbolSyntaxError(f"unexpected token {val!r}", pos, self.text)


# ---------------------------------------------------------------------------
# Constant folding / light simplification
# ---------------------------------------------------------------------------

def _is_const(node, value=None):
    if not isinstance(node, Const):
        return False
    return True if value is None else node.value == value


def simplify(node):
    """Fold constants and drop algebraic no-ops.

    Keeps derivative trees from iterated brackets to a manageable size;
    never changes the value of the expression anywhere it is defined.
    """
    if isinstance(node, (Const, Var, NormXi, JNormXi, RegNormXi)):
        return node
    if isinstance(node, Neg):
        a = simplify(node.arg)
        if _is_const(a):
            return Const(-a.value)
        if isinstance(a, Neg):
            return a.arg
        return Neg(a)
    if isinstance(node, Call):
        a = simplify(node.arg)
        return Call(node.func, a)
    if isinstance(node, BinOp):
        lhs = simplify(node.lhs)
        rhs = simplify(node.rhs)
        op = node.op
        if op == "+":
            if _is_const(lhs, 0.0):
                return rhs
            if _is_const(rhs, 0.0):
                return lhs
            if _is_const(lhs) and _is_const(rhs):
                return Const(lhs.value + rhs.value)
        elif op == "-":
            if _is_const(rhs, 0.0):
                return lhs
            if _is_const(lhs) and _is_const(rhs):
                return Const(lhs.value - rhs.value)
            if _is_const(lhs, 0.0):
                return simplify(Neg(rhs))
        elif op == "*":
            if _is_const(lhs, 0.0) or _is_const(rhs, 0.0):
                return _ZERO
            if _is_const(lhs, 1.0):
                return rhs
            if _is_const(rhs, 1.0):
                return lhs
            if _is_const(lhs) and _is_const(rhs):
                return Const(lhs.value * rhs.value)
        elif op == "/":
            if _is_const(lhs, 0.0) and not _is_const(rhs, 0.0):
                return _ZERO
            if _is_const(rhs, 1.0):
                return lhs
        elif op == "^":
            if _is_const(rhs, 1.0):
                return lhs
            if _is_const(rhs, 0.0):
                return _ONE
            if _is_const(lhs) and _is_const(rhs):
                try:
                    return Const(float(lhs.value ** rhs.value))
                except (OverflowError, ValueError):
                    pass
        return BinOp(op, lhs, rhs)
    raise TypeError(f"not an AST node: {node!r}")


def _collect_vars(node, acc):
    if isinstance(node, Var):
        acc.add((node.kind, node.index))
    elif isinstance(node, (NormXi, JNormXi, RegNormXi)):
        acc.add(("xi", 0))  # depends on the whole xi vector
    elif isinstance(node, Neg):
        _collect_vars(node.arg, acc)
    elif isinstance(node, Call):
        _collect_vars(node.arg, acc)
    elif isinstance(node, BinOp):
        _collect_vars(node.lhs, acc)
        _collect_vars(node.rhs, acc)


# ---------------------------------------------------------------------------
# Jets (forward mode, vectorised)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Jet:
    """Value plus exact first derivatives at a phase point.

    ``dx`` and ``dxi`` are length-n arrays (batch evaluation returns
    arrays with a trailing batch shape).
    """

    value: object
    dx: np.ndarray
    dxi: np.ndarray


def _as_arrays(values):
    return [np.asarray(v, dtype=float) for v in values]


class _JetVal:
    """Internal forward-mode carrier: value plus 2n partials.

    Partials equal to the float 0.0 are kept as scalars so the common
    sparse case costs nothing; numpy broadcasting restores shapes.
    """

    __slots__ = ("v", "dx", "dxi")

    def __init__(self, v, dx, dxi):
        self.v = v
        self.dx = dx
        self.dxi = dxi


def _jet_eval(node, xs, xis, t, n):
    if isinstance(node, Const):
        return _JetVal(node.value, [0.0] * n, [0.0] * n)
    if isinstance(node, Var):
        if node.kind == "x":
            dx = [0.0] * n
            dx[node.index - 1] = 1.0
            return _JetVal(xs[node.index - 1], dx, [0.0] * n)
        if node.kind == "xi":
            dxi = [0.0] * n
            dxi[node.index - 1] = 1.0
            return _JetVal(xis[node.index - 1], [0.0] * n, dxi)
        if t is None:
            raise EvalError("expression uses 't' but no time value was supplied")
        return _JetVal(t, [0.0] * n, [0.0] * n)
    if isinstance(node, Neg):
        a = _jet_eval(node.arg, xs, xis, t, n)
        return _JetVal(-a.v, [-d for d in a.dx], [-d for d in a.dxi])
    if isinstance(node, NormXi):
        r2 = sum(xi * xi for xi in xis)
        r = np.sqrt(r2)
        if np.any(r < ORIGIN_TOL):
            raise EvalError("norm_xi evaluated within 1e-8 of xi = 0")
        return _JetVal(r, [0.0] * n, [xi / r for xi in xis])
    if isinstance(node, JNormXi):
        r = np.sqrt(1.0 + sum(xi * xi for xi in xis))
        return _JetVal(r, [0.0] * n, [xi / r for xi in xis])
    if isinstance(node, RegNormXi):
        r2 = sum(xi * xi for xi in xis)
        r = np.sqrt(r2)
        v = np.where(r < REG_KNEE, np.sqrt(REG_EPS + r2), r)
        return _JetVal(v, [0.0] * n, [xi / v for xi in xis])
    if isinstance(node, Call):
        a = _jet_eval(node.arg, xs, xis, t, n)
        if node.func == "sin":
            c = np.cos(a.v)
            return _JetVal(np.sin(a.v), [c * d for d in a.dx], [c * d for d in a.dxi])
        if node.func == "cos":
            s = -np.sin(a.v)
            return _JetVal(np.cos(a.v), [s * d for d in a.dx], [s * d for d in a.dxi])
        if node.func == "exp":
            e = np.exp(a.v)
            return _JetVal(e, [e * d for d in a.dx], [e * d for d in a.dxi])
        if node.func == "sqrt":
            if np.any(a.v < 0):
                raise EvalError("sqrt of a negative value")
            s = np.sqrt(a.v)
            if np.any(s == 0):
                raise EvalError("derivative of sqrt at zero")
            inv = 0.5 / s
            return _JetVal(s, [inv * d for d in a.dx], [inv * d for d in a.dxi])
        if node.func == "abs":
            if np.any(np.abs(a.v) < ORIGIN_TOL):
                raise EvalError("derivative of abs within 1e-8 of zero")
            sg = np.sign(a.v)
            return _JetVal(np.abs(a.v), [sg * d for d in a.dx], [sg * d for d in a.dxi])
        if node.func == "log":
            if np.any(a.v <= 0):
                raise EvalError("log of a non-positive value")
            inv = 1.0 / a.v
            return _JetVal(np.log(a.v), [inv * d for d in a.dx], [inv * d for d in a.dxi])
        raise EvalError(f"unknown function {node.func!r}")
    if isinstance(node, BinOp):
        a = _jet_eval(node.lhs, xs, xis, t, n)
        op = node.op
        if op == "^" and isinstance(node.rhs, Const):
            c = node.rhs.value
            if c == int(c):
                ci = int(c)
                if ci < 0 and np.any(a.v == 0):
                    raise EvalError("division by zero in negative power")
                v = a.v ** ci
                g = ci * a.v ** (ci - 1) if ci != 0 else 0.0
            else:
                if np.any(a.v < 0):
                    raise EvalError("non-integer power of a negative value")
                if np.any(a.v == 0):
                    raise EvalError("derivative of fractional power at zero")
                v = a.v ** c
                g = c * a.v ** (c - 1.0)
            return _JetVal(v, [g * d for d in a.dx], [g * d for d in a.dxi])
        b = _jet_eval(node.rhs, xs, xis, t, n)
        if op == "+":
            return _JetVal(a.v + b.v,
                           [da + db for da, db in zip(a.dx, b.dx)],
                           [da + db for da, db in zip(a.dxi, b.dxi)])
        if op == "-":
            return _JetVal(a.v - b.v,
                           [da - db for da, db in zip(a.dx, b.dx)],
                           [da - db for da, db in zip(a.dxi, b.dxi)])
        if op == "*":
            return _JetVal(a.v * b.v,
                           [da * b.v + a.v * db for da, db in zip(a.dx, b.dx)],
                           [da * b.v + a.v * db for da, db in zip(a.dxi, b.dxi)])
        if op == "/":
            if np.any(b.v == 0):
                raise EvalError("division by zero")
            inv = 1.0 / b.v
            inv2 = inv * inv
            return _JetVal(a.v * inv,
                           [(da * b.v - a.v * db) * inv2 for da, db in zip(a.dx, b.dx)],
                           [(da * b.v - a.v * db) * inv2 for da, db in zip(a.dxi, b.dxi)])
        if op == "^":
            if np.any(a.v <= 0):
                raise EvalError("general power of a non-positive base")
            v = a.v ** b.v
            ln = np.log(a.v)
            return _JetVal(
                v,
                [v * (db * ln + b.v * da / a.v) for da, db in zip(a.dx, b.dx)],
                [v * (db * ln + b.v * da / a.v) for da, db in zip(a.dxi, b.dxi)],
            )
    raise TypeError(f"not an AST node: {node!r}")


def _value_eval(node, xs, xis, t, n):
    """Value-only vectorised evaluation (no derivative guards on abs)."""
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        if node.kind == "x":
            return xs[node.index - 1]
        if node.kind == "xi":
            return xis[node.index - 1]
        if t is None:
            raise EvalError("expression uses 't' but no time value was supplied")
        return t
    if isinstance(node, Neg):
        return -_value_eval(node.arg, xs, xis, t, n)
    if isinstance(node, NormXi):
        r = np.sqrt(sum(xi * xi for xi in xis))
        if np.any(r < ORIGIN_TOL):
            raise EvalError("norm_xi evaluated within 1e-8 of xi = 0")
        return r
    if isinstance(node, JNormXi):
        return np.sqrt(1.0 + sum(xi * xi for xi in xis))
    if isinstance(node, RegNormXi):
        r2 = sum(xi * xi for xi in xis)
        r = np.sqrt(r2)
        return np.where(r < REG_KNEE, np.sqrt(REG_EPS + r2), r)
    if isinstance(node, Call):
        a = _value_eval(node.arg, xs, xis, t, n)
        if node.func == "sin":
            return np.sin(a)
        if node.func == "cos":
            return np.cos(a)
        if node.func == "exp":
            return np.exp(a)
        if node.func == "sqrt":
            if np.any(a < 0):
                raise EvalError("sqrt of a negative value")
            return np.sqrt(a)
        if node.func == "abs":
            return np.abs(a)
        if node.func == "log":
            if np.any(a <= 0):
                raise EvalError("log of a non-positive value")
            return np.log(a)
        raise EvalError(f"unknown function {node.func!r}")
    if isinstance(node, BinOp):
        a = _value_eval(node.lhs, xs, xis, t, n)
        op = node.op
        if op == "^" and isinstance(node.rhs, Const):
            c = node.rhs.value
            if c == int(c):
                ci = int(c)
                if ci < 0 and np.any(a == 0):
                    raise EvalError("division by zero in negative power")
                return a ** ci
            if np.any(a < 0):
                raise EvalError("non-integer power of a negative value")
            return a ** c
        b = _value_eval(node.rhs, xs, xis, t, n)
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            if np.any(b == 0):
                raise EvalError("division by zero")
            return a / b
        if op == "^":
            if np.any(a <= 0):
                raise EvalError("general power of a non-positive base")
            return a ** b
    raise TypeError(f"not an AST node: {node!r}")


# ---------------------------------------------------------------------------
# Symbolic differentiation (exact; powers bracket closures)
# ---------------------------------------------------------------------------

def diff_expr(node, kind, index):
    """Exact derivative of an AST with respect to x<index> or xi<index>."""
    if isinstance(node, Const):
        return _ZERO
    if isinstance(node, Var):
        return _ONE if (node.kind == kind and node.index == index) else _ZERO
    if isinstance(node, Neg):
        return simplify(Neg(diff_expr(node.arg, kind, index)))
    if isinstance(node, NormXi):
        if kind != "xi":
            return _ZERO
        return BinOp("/", Var("xi", index), NormXi())
    if isinstance(node, JNormXi):
        if kind != "xi":
            return _ZERO
        return BinOp("/", Var("xi", index), JNormXi())
    if isinstance(node, RegNormXi):
        # d reg|xi| / d xi_k = xi_k / reg|xi| holds on both branches.
        if kind != "xi":
            return _ZERO
        return BinOp("/", Var("xi", index), RegNormXi())
    if isinstance(node, Call):
        da = diff_expr(node.arg, kind, index)
        if _is_const(da, 0.0):
            return _ZERO
        a = node.arg
        if node.func == "sin":
            outer = Call("cos", a)
        elif node.func == "cos":
            outer = Neg(Call("sin", a))
        elif node.func == "exp":
            outer = Call("exp", a)
        elif node.func == "sqrt":
            outer = BinOp("/", Const(0.5), Call("sqrt", a))
        elif node.func == "abs":
            outer = BinOp("/", a, Call("abs", a))
        elif node.func == "log":
            outer = BinOp("/", _ONE, a)
        else:
            raise EvalError(f"unknown function {node.func!r}")
        return simplify(BinOp("*", outer, da))
    if isinstance(node, BinOp):
        op = node.op
        u, v = node.lhs, node.rhs
        du = diff_expr(u, kind, index)
        if op == "^" and isinstance(v, Const):
            if _is_const(du, 0.0):
                return _ZERO
            c = v.value
            return simplify(
                BinOp("*", BinOp("*", v, BinOp("^", u, Const(c - 1.0))), du)
            )
        dv = diff_expr(v, kind, index)
        if op == "+":
            return simplify(BinOp("+", du, dv))
        if op == "-":
            return simplify(BinOp("-", du, dv))
        if op == "*":
            return simplify(BinOp("+", BinOp("*", du, v), BinOp("*", u, dv)))
        if op == "/":
            num = BinOp("-", BinOp("*", du, v), BinOp("*", u, dv))
            return simplify(BinOp("/", num, BinOp("^", v, Const(2.0))))
        if op == "^":
            # u^v with non-constant exponent: u^v * (dv*log u + v*du/u)
            term = BinOp("+", BinOp("*", dv, Call("log", u)),
                         BinOp("*", v, BinOp("/", du, u)))
            return simplify(BinOp("*", node, term))
    raise TypeError(f"not an AST node: {node!r}")


def bracket_ast(f_ast, g_ast, n):
    """Poisson bracket {f, g} as an expression tree.

    {f, g} = sum_k (d_xi_k f * d_x_k g - d_x_k f * d_xi_k g).
    """
    total = _ZERO
    for k in range(1, n + 1):
        term = BinOp(
            "-",
            BinOp("*", diff_expr(f_ast, "xi", k), diff_expr(g_ast, "x", k)),
            BinOp("*", diff_expr(f_ast, "x", k), diff_expr(g_ast, "xi", k)),
        )
        total = BinOp("+", total, term)
    return simplify(total)


# ---------------------------------------------------------------------------
# Public wrappers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PhasePoint:
    """Point (x, xi) with x reduced mod 2*pi and xi nonzero."""

    x: tuple
    xi: tuple

    def __init__(self, x, xi):
        x = tuple(float(v) % (2 * math.pi) for v in np.atleast_1d(x))
        xi = tuple(float(v) for v in np.atleast_1d(xi))
        if len(x) != len(xi):
            raise DimensionError("x and xi must have the same length")
        if all(v == 0.0 for v in xi):
            raise EvalError("phase point requires xi != 0")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "xi", xi)

    @property
    def n(self):
        return len(self.x)


class SymbolExpr:
    """Immutable parsed symbol; share freely across threads.

    Attributes
    ----------
    ast : expression tree
    n : spatial dimension
    homogeneity_degree : optional rational tag, verified by tests only
    """

    __slots__ = ("ast", "n", "homogeneity_degree", "text",
                 "uses_x", "uses_xi", "uses_t", "_hash")

    def __init__(self, ast, n, homogeneity_degree=None, text=None):
        self.ast = ast
        self.n = int(n)
        self.homogeneity_degree = (
            None if homogeneity_degree is None else Fraction(homogeneity_degree)
        )
        self.text = text
        vs = set()
        _collect_vars(ast, vs)
        self.uses_x = any(k == "x" for k, _ in vs)
        self.uses_xi = any(k == "xi" for k, _ in vs)
        self.uses_t = any(k == "t" for k, _ in vs)
        self._hash = None

    def __repr__(self):
        src = self.text if self.text is not None else "<ast>"
        return f"SymbolExpr({src!r}, n={self.n})"

    def __eq__(self, other):
        return (isinstance(other, SymbolExpr)
                and self.ast == other.ast and self.n == other.n)

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((repr(self.ast), self.n))
        return self._hash

    # -- evaluation ------------------------------------------------------

    def jet(self, p, t=None):
        """Forward-mode jet at a :class:`PhasePoint`."""
        xs = [np.float64(v) for v in p.x]
        xis = [np.float64(v) for v in p.xi]
        jv = _jet_eval(self.ast, xs, xis, t, self.n)
        dx = np.array([float(d) for d in jv.dx])
        dxi = np.array([float(d) for d in jv.dxi])
        return Jet(float(jv.v), dx, dxi)

    def jet_batch(self, xs, xis, t=None):
        """Vectorised jets: xs, xis are length-n sequences of arrays.

        Returns (value, dx, dxi) with dx, dxi lists of n arrays
        broadcast to the value's shape.
        """
        xs = _as_arrays(xs)
        xis = _as_arrays(xis)
        jv = _jet_eval(self.ast, xs, xis, t, self.n)
        shape = np.broadcast(*( [np.asarray(jv.v)] + [np.asarray(d) for d in jv.dx]
                                + [np.asarray(d) for d in jv.dxi])).shape
        val = np.broadcast_to(np.asarray(jv.v, dtype=float), shape)
        dx = [np.broadcast_to(np.asarray(d, dtype=float), shape) for d in jv.dx]
        dxi = [np.broadcast_to(np.asarray(d, dtype=float), shape) for d in jv.dxi]
        return val, dx, dxi

    def value(self, xs, xis, t=None):
        """Vectorised value-only evaluation.

        ``xs`` and ``xis`` are length-n sequences whose entries are
        scalars or mutually broadcastable arrays.
        """
        xs = _as_arrays(xs)
        xis = _as_arrays(xis)
        return np.asarray(_value_eval(self.ast, xs, xis, t, self.n), dtype=float)

    def value_at(self, p, t=None):
        return float(self.value(list(p.x), list(p.xi), t=t))

    # -- calculus --------------------------------------------------------

    def derivative(self, kind, index):
        """Exact symbolic partial derivative as a new SymbolExpr."""
        return SymbolExpr(diff_expr(self.ast, kind, index), self.n)

    def scaled_xi(self, s):
        """Expression with xi replaced by s*xi (for homogeneity tests)."""
        return SymbolExpr(_scale_xi(self.ast, float(s)), self.n,
                          homogeneity_degree=self.homogeneity_degree)


def _scale_xi(node, s):
    if isinstance(node, Var) and node.kind == "xi":
        return BinOp("*", Const(s), node)
    if isinstance(node, NormXi):
        return BinOp("*", Const(abs(s)), NormXi())
    if isinstance(node, (Const, Var, JNormXi, RegNormXi)):
        if isinstance(node, (JNormXi, RegNormXi)):
            raise EvalError("cannot scale xi inside a non-homogeneous builtin")
        return node
    if isinstance(node, Neg):
        return Neg(_scale_xi(node.arg, s))
    if isinstance(node, Call):
        return Call(node.func, _scale_xi(node.arg, s))
    if isinstance(node, BinOp):
        return BinOp(node.op, _scale_xi(node.lhs, s), _scale_xi(node.rhs, s))
    raise TypeError(f"not an AST node: {node!r}")


def parse(text, n, homogeneity_degree=None):
    """Parse symbol text in dimension ``n`` (1 or 2).

    Raises :class:`SymbolSyntaxError` with the offending position for
    malformed input and :class:`DimensionError` when a variable index
    exceeds ``n``.
    """
    if not isinstance(text, str) or not text.strip():
        raise SymbolSyntaxError("empty expression", 0, text or "")
    if n not in (1, 2):
        raise DimensionError(f"dimension must be 1 or 2, got {n}")
    ast = simplify(_Parser(text, n).parse())
    return SymbolExpr(ast, n, homogeneity_degree=homogeneity_degree, text=text)


def const(value, n):
    return SymbolExpr(Const(float(value)), n, text=repr(float(value)))


def eval_jet(a, p, t=None):
    """Jet of symbol ``a`` at phase point ``p``."""
    return a.jet(p, t=t)


def poisson(f, g, p, t=None):
    """Poisson bracket {f, g}(p) = sum_k (d_xi f d_x g - d_x f d_xi g)."""
    jf = f.jet(p, t=t)
    jg = g.jet(p, t=t)
    return float(np.dot(jf.dxi, jg.dx) - np.dot(jf.dx, jg.dxi))


def bracket_expr(f, g):
    """The bracket {f, g} materialised as a new SymbolExpr."""
    if f.n != g.n:
        raise DimensionError("bracket of symbols with different dimensions")
    return SymbolExpr(bracket_ast(f.ast, g.ast, f.n), f.n)


def iterated_bracket(f, g, lam, p, t=None, cap=8):
    """H_f^lam g at p, built by symbolic closure composition.

    Each nesting level materialises {f, .} as a new expression tree and
    the final bracket is evaluated with forward-mode jets, so no
    precision is lost to differencing.  ``lam == 1`` runs the identical
    code path as :func:`poisson`.
    """
    if lam < 1:
        raise DomainError("bracket depth must be >= 1")
    if lam > cap:
        raise DepthError(f"bracket depth {lam} exceeds cap {cap}")
    expr = g
    for _ in range(lam - 1):
        expr = bracket_expr(f, expr)
    return poisson(f, expr, p, t=t)


def iterated_bracket_expr(f, g, lam, cap=8):
    """The closure H_f^lam g as a SymbolExpr (evaluable on grids)."""
    if lam > cap:
        raise DepthError(f"bracket depth {lam} exceeds cap {cap}")
    expr = g
    for _ in range(lam):
        expr = bracket_expr(f, expr)
    return expr
