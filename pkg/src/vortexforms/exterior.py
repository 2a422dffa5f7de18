"""Sparse exterior algebra on the extended phase space R x M.

A :class:`Form` stores its coefficients in a dict keyed by strictly increasing
index tuples; index 0 is ``dt`` and indices 1..n are the spatial
differentials.  All permutation signs are resolved when terms are inserted, so
every stored key is canonical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np

from . import expr as ex
from .expr import CompiledExpressions, Expression, SpaceSpec, as_expression

__all__ = [
    "Form",
    "SpatialVector",
    "sort_sign",
    "wedge",
    "exterior_derivative",
    "interior_product",
    "decompose",
    "compose",
    "form_rank_at",
    "numerical_rank",
    "contraction_pattern",
]


def sort_sign(indices):
    """Return ``(sorted_tuple, sign)``; sign is 0 when an index repeats."""
    idx = list(indices)
    if len(set(idx)) != len(idx):
        return tuple(sorted(idx)), 0
    inversions = sum(1 for a, b in combinations(idx, 2) if a > b)
    return tuple(sorted(idx)), (-1 if inversions % 2 else 1)


class Form:
    """A differential form of fixed degree on the extended space of ``space``.

    ``terms`` maps index tuples (in any order, with names or integer indices)
    to coefficients; repeated indices are dropped and the rest are sorted with
    the matching sign.
    """

    __slots__ = ("space", "degree", "_terms", "_compiled")

    def __init__(self, space: SpaceSpec, degree: int, terms=None):
        if degree < 0:
            raise ValueError("negative degree")
        self.space = space
        self.degree = int(degree)
        self._compiled = None
        acc = {}
        items = terms.items() if isinstance(terms, Mapping) else (terms or ())
        for key, coeff in items:
            key = tuple(space.index(i) if isinstance(i, str) else int(i) for i in key)
            if len(key) != degree:
                raise ValueError(f"index tuple {key} does not match degree {degree}")
            if any(i < 0 or i > space.n for i in key):
                raise ValueError(f"index out of range in {key}")
            skey, sign = sort_sign(key)
            if sign == 0:
                continue
            c = as_expression(coeff)
            if sign < 0:
                c = ex.neg(c)
            acc[skey] = ex.add(acc[skey], c) if skey in acc else c
        self._terms = {k: acc[k] for k in sorted(acc) if not ex._is_const(acc[k], 0.0)}

    # -- construction helpers -------------------------------------------------

    @classmethod
    def zero(cls, space, degree):
        return cls(space, degree)

    @classmethod
    def function(cls, space, f):
        """The 0-form ``f``."""
        return cls(space, 0, {(): f})

    @classmethod
    def differential(cls, space, name):
        """The coordinate 1-form ``d<name>`` (``dt`` for ``name='t'``)."""
        return cls(space, 1, {(space.index(name),): ex.ONE})

    # -- accessors ------------------------------------------------------------

    @property
    def terms(self) -> Mapping:
        return MappingProxyType(self._terms)

    @property
    def n(self):
        return self.space.n

    def is_spatial(self) -> bool:
        return all(0 not in key for key in self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def coefficient(self, key) -> Expression:
        key = tuple(self.space.index(i) if isinstance(i, str) else int(i) for i in key)
        skey, sign = sort_sign(key)
        c = self._terms.get(skey, ex.ZERO) if sign else ex.ZERO
        return ex.neg(c) if sign < 0 else c

    def keys(self):
        return tuple(self._terms)

    def compiled(self) -> CompiledExpressions:
        """Coefficients (in key order) compiled as functions of ``(t, x1..xn)``."""
        if self._compiled is None:
            self._compiled = CompiledExpressions(tuple(self._terms.values()), self.space.names)
        return self._compiled

    def evaluate(self, point) -> dict:
        """Coefficient values at ``point`` as a ``{key: float}`` dict."""
        args = _point_args(self.space, point)
        values = self.compiled()(*args)
        return {k: float(v) for k, v in zip(self._terms, values)}

    def evaluate_batch(self, t, X) -> np.ndarray:
        """Coefficients at many points: ``t`` shape (N,) or scalar, ``X`` shape (N, n).

        Returns an array of shape ``(len(keys), N)``.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        t = np.broadcast_to(np.asarray(t, dtype=float), (X.shape[0],))
        if not self._terms:
            return np.zeros((0, X.shape[0]))
        return self.compiled()(t, *X.T)

    # -- algebra --------------------------------------------------------------

    def _check_compatible(self, other):
        if not isinstance(other, Form):
            return NotImplemented
        if other.space != self.space:
            raise ValueError("forms live on different spaces")
        if other.degree != self.degree:
            raise ValueError(f"cannot add forms of degree {self.degree} and {other.degree}")
        return True

    def __add__(self, other):
        if self._check_compatible(other) is NotImplemented:
            return NotImplemented
        return Form(self.space, self.degree, list(self._terms.items()) + list(other._terms.items()))

    def __neg__(self):
        return Form(self.space, self.degree, {k: ex.neg(c) for k, c in self._terms.items()})

    def __sub__(self, other):
        if self._check_compatible(other) is NotImplemented:
            return NotImplemented
        return self + (-other)

    def __mul__(self, scalar):
        """Multiply by a scalar function (Expression or number)."""
        if isinstance(scalar, Form):
            return NotImplemented
        s = as_expression(scalar)
        return Form(self.space, self.degree, {k: ex.mul(s, c) for k, c in self._terms.items()})

    __rmul__ = __mul__

    def __xor__(self, other):
        return wedge(self, other)

    def __eq__(self, other):
        if not isinstance(other, Form):
            return NotImplemented
        return (self.space == other.space and self.degree == other.degree
                and self._terms == other._terms)

    __hash__ = None

    def __repr__(self):
        return f"Form(degree={self.degree}, {self})"

    def __str__(self):
        if not self._terms:
            return "0"
        names = self.space.names
        out = ""
        for i, (key, c) in enumerate(self._terms.items()):
            negative = isinstance(c, ex.Neg) or (isinstance(c, ex.Const) and c.value < 0)
            if negative:
                c = ex.neg(c)
            basis = "∧".join(f"d{names[j]}" for j in key)
            if not key:
                text = f"({c})"
            elif ex._is_const(c, 1.0):
                text = basis
            elif c.precedence == 5:
                text = f"{c} {basis}"
            else:
                text = f"({c}) {basis}"
            if i == 0:
                out = ("-" if negative else "") + text
            else:
                out += (" - " if negative else " + ") + text
        return out


@dataclass(frozen=True)
class SpatialVector:
    """A vector tangent to M: components along d/dx1..d/dxn.

    Components may be numbers or Expressions.
    """

    space: SpaceSpec
    components: tuple

    def __post_init__(self):
        comps = tuple(as_expression(c) for c in self.components)
        if len(comps) != self.space.n:
            raise ValueError(f"expected {self.space.n} components, got {len(comps)}")
        object.__setattr__(self, "components", comps)


def _point_args(space, point):
    """Normalise a point (mapping by name, or sequence ``(t, x1..xn)``) to positional args."""
    if isinstance(point, Mapping):
        return [float(point[name]) for name in space.names]
    values = [float(v) for v in point]
    if len(values) != space.n + 1:
        raise ValueError(f"point needs {space.n + 1} values (t first), got {len(values)}")
    return values


def wedge(a: Form, b: Form) -> Form:
    """Exterior product.  Degrees beyond n+1 give the (empty) zero form."""
    if a.space != b.space:
        raise ValueError("forms live on different spaces")
    terms = []
    for I, f in a._terms.items():
        for J, g in b._terms.items():
            if set(I) & set(J):
                continue
            terms.append((I + J, ex.mul(f, g)))
    return Form(a.space, a.degree + b.degree, terms)


def exterior_derivative(a: Form, mode: str = "full") -> Form:
    """``d a`` (full), ``d-hat a`` (spatial) or ``d/dt a`` (time).

    The spatial and time modes need a spatial ``a``.  For spatial ``a``,
    ``d a == dt ∧ (d/dt a) + d-hat a``.
    """
    space = a.space
    if mode == "full":
        directions = range(0, space.n + 1)
    elif mode == "spatial":
        directions = range(1, space.n + 1)
    elif mode == "time":
        if not a.is_spatial():
            raise ValueError("time derivative is defined for spatial forms only")
        names = space.names
        return Form(space, a.degree, {k: ex.differentiate(c, names[0]) for k, c in a._terms.items()})
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "spatial" and not a.is_spatial():
        raise ValueError("spatial exterior derivative is defined for spatial forms only")
    names = space.names
    terms = []
    for key, c in a._terms.items():
        for j in directions:
            if j in key:
                continue
            dc = ex.differentiate(c, names[j])
            if not ex._is_const(dc, 0.0):
                terms.append(((j,) + key, dc))
    return Form(space, a.degree + 1, terms)


def interior_product(v: SpatialVector, a: Form) -> Form:
    """Contraction ``i_v a`` on the first slot.

    For sorted key ``(i_0, ..., i_{p-1})`` the term with slot ``s`` removed
    carries the sign ``(-1)^s``.
    """
    if v.space != a.space:
        raise ValueError("vector and form live on different spaces")
    if a.degree < 1:
        raise ValueError("interior product needs a form of degree >= 1")
    terms = []
    for key, c in a._terms.items():
        for s, j in enumerate(key):
            if j == 0:
                continue
            comp = v.components[j - 1]
            if ex._is_const(comp, 0.0):
                continue
            coeff = ex.mul(comp, c)
            if s % 2:
                coeff = ex.neg(coeff)
            terms.append((key[:s] + key[s + 1:], coeff))
    return Form(a.space, a.degree - 1, terms)


def decompose(sigma: Form):
    """Split ``sigma = dt ∧ s_hat + r_hat`` into spatial ``(s_hat, r_hat)``."""
    s_terms = {}
    r_terms = {}
    for key, c in sigma._terms.items():
        if key and key[0] == 0:
            s_terms[key[1:]] = c
        else:
            r_terms[key] = c
    space = sigma.space
    s_degree = max(sigma.degree - 1, 0)
    return Form(space, s_degree, s_terms), Form(space, sigma.degree, r_terms)


def compose(s_hat: Form, r_hat: Form) -> Form:
    """Inverse of :func:`decompose`: ``dt ∧ s_hat + r_hat``."""
    if s_hat.space != r_hat.space:
        raise ValueError("forms live on different spaces")
    if not (s_hat.is_spatial() and r_hat.is_spatial()):
        raise ValueError("compose needs spatial forms")
    if r_hat.degree != s_hat.degree + 1:
        if s_hat.is_zero() and r_hat.degree == 0:
            return r_hat
        raise ValueError(f"degree mismatch: s_hat {s_hat.degree}, r_hat {r_hat.degree}")
    terms = [((0,) + k, c) for k, c in s_hat._terms.items()]
    terms += list(r_hat._terms.items())
    return Form(s_hat.space, r_hat.degree, terms)


def contraction_pattern(keys: Sequence[tuple], n: int, degree: int):
    """Scatter pattern of ``v -> i_v a`` for a spatial form with the given keys.

    Returns ``(rows, cols, signs, term_index, row_basis)`` such that the
    matrix ``M[rows, cols] += signs * coeff[term_index]`` maps ``v`` to the
    components of ``i_v a`` in ``row_basis`` (increasing (p-1)-subsets of
    1..n, lexicographic).
    """
    row_basis = list(combinations(range(1, n + 1), degree - 1))
    row_of = {k: i for i, k in enumerate(row_basis)}
    rows, cols, signs, term_index = [], [], [], []
    for t_i, key in enumerate(keys):
        for s, j in enumerate(key):
            rows.append(row_of[key[:s] + key[s + 1:]])
            cols.append(j - 1)
            signs.append(-1.0 if s % 2 else 1.0)
            term_index.append(t_i)
    return (np.array(rows, dtype=int), np.array(cols, dtype=int),
            np.array(signs), np.array(term_index, dtype=int), row_basis)


def contraction_matrices(a: Form, t, X) -> np.ndarray:
    """Matrices of ``v -> i_v a`` at a batch of points, shape (N, C(n, p-1), n)."""
    if not a.is_spatial():
        raise ValueError("contraction matrix is defined for spatial forms only")
    if a.degree < 1:
        raise ValueError("contraction matrix needs degree >= 1")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    N = X.shape[0]
    rows, cols, signs, tidx, basis = contraction_pattern(a.keys(), a.n, a.degree)
    M = np.zeros((N, len(basis), a.n))
    if len(tidx):
        vals = a.evaluate_batch(t, X)
        np.add.at(M, (slice(None), rows, cols), (signs[:, None] * vals[tidx]).T)
    return M


def numerical_rank(M, rtol: float = 1e-9) -> int:
    """Rank by Gaussian elimination with complete pivoting.

    A pivot counts when it exceeds ``rtol`` times the first (largest) pivot.
    """
    A = np.array(M, dtype=float, copy=True)
    if A.size == 0:
        return 0
    rows, cols = A.shape
    first = None
    rank = 0
    for r in range(min(rows, cols)):
        sub = np.abs(A[r:, r:])
        i, j = np.unravel_index(np.argmax(sub), sub.shape)
        pivot = sub[i, j]
        if first is None:
            first = pivot
            if first == 0.0:
                return 0
        if pivot <= rtol * first:
            break
        i += r
        j += r
        A[[r, i]] = A[[i, r]]
        A[:, [r, j]] = A[:, [j, r]]
        A[r + 1:, r:] -= np.outer(A[r + 1:, r] / A[r, r], A[r, r:])
        rank += 1
    return rank


def form_rank_at(a: Form, point, rtol: float = 1e-9) -> int:
    """Rank of ``v -> i_v a`` at ``point`` (mapping by name, or ``(t, x1..xn)``)."""
    if a.degree < 1:
        raise ValueError("rank needs a form of degree >= 1")
    if not a.is_spatial():
        raise ValueError("rank is defined here for spatial forms only")
    args = _point_args(a.space, point)
    M = contraction_matrices(a, args[0], [args[1:]])[0]
    return numerical_rank(M, rtol)


def binomial(n, k):
    return math.comb(n, k) if 0 <= k <= n else 0
