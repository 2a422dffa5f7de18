"""Integral invariants and the Liouville theorem, checked numerically.

Chains are maps of the parameter cube ``[0, 1]^k`` into the extended space
(points are ``(t, x1..xn)``).  Forms are pulled back and integrated with
tensor-product Gauss-Legendre quadrature.  Chains advected by the flow are
stored on the quadrature grid, with tangents from central differences of
flowed neighbour points.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Optional, Sequence

import numpy as np

from . import expr as ex
from .dynamics import IntegratorOptions, VortexDynamics, flow
from .errors import NumericalFailure
from .expr import CompiledExpressions, parse_expression
from .exterior import Form, decompose, exterior_derivative, wedge

__all__ = [
    "Chain",
    "ExpressionChain",
    "MapChain",
    "GridChain",
    "InvariantReport",
    "DegreeOverflowWarning",
    "gauss_legendre",
    "integrate_over_chain",
    "advect_chain",
    "solution_tube",
    "invariant_power",
    "check_relative_invariant",
    "check_absolute_invariant",
    "check_liouville",
]

FD_STEP = 1e-5
JACOBIAN_STEP = 1e-4


class DegreeOverflowWarning(UserWarning):
    """An invariant power exceeds the dimension and is identically zero."""


def gauss_legendre(order: int, k: int = 1):
    """Tensor-product Gauss-Legendre rule on ``[0, 1]^k``: nodes (N, k), weights (N,)."""
    x, w = np.polynomial.legendre.leggauss(order)
    x = (x + 1.0) / 2.0
    w = w / 2.0
    if k == 0:
        return np.zeros((1, 0)), np.ones(1)
    nodes = np.array(list(product(x, repeat=k)))
    weights = np.prod(np.array(list(product(w, repeat=k))), axis=1)
    return nodes, weights


class Chain:
    """Base class: a k-dimensional chain in the extended space of ``space``."""

    cycle = False

    def sample(self, order: int):
        """``(weights (N,), points (N, n+1), tangents (N, k, n+1))`` at the quadrature nodes."""
        raise NotImplementedError

    def map(self, U) -> np.ndarray:
        """Points for parameter values ``U`` (N, k); shape (N, n+1)."""
        raise NotImplementedError

    def _check_cycle(self, samples=10, tol=1e-9):
        rng = np.random.default_rng(0)
        for j in range(self.k):
            U = rng.uniform(0.0, 1.0, size=(samples, self.k))
            lo, hi = U.copy(), U.copy()
            lo[:, j] = 0.0
            hi[:, j] = 1.0
            gap = np.max(np.abs(self.map(lo) - self.map(hi)))
            if gap > tol:
                raise ValueError(f"chain declared as a cycle but faces u{j + 1}=0 and u{j + 1}=1 "
                                 f"differ by {gap:.3g}")


class ExpressionChain(Chain):
    """Chain given by one Expression per extended coordinate in parameters ``u1..uk``.

    ``components`` lists ``t`` first, then ``x1..xn``; entries may be text,
    Expressions or numbers.  Tangents come from exact derivatives.
    """

    def __init__(self, space, k: int, components: Sequence, cycle: bool = False):
        self.space = space
        self.k = int(k)
        self.params = tuple(f"u{j}" for j in range(1, self.k + 1))
        comps = [parse_expression(c, self.params) if isinstance(c, str) else ex.as_expression(c)
                 for c in components]
        if len(comps) != space.n + 1:
            raise ValueError(f"need {space.n + 1} components (t first), got {len(comps)}")
        self.components = tuple(comps)
        self.cycle = bool(cycle)
        self._points = CompiledExpressions(self.components, self.params)
        self._tangents = CompiledExpressions(
            [ex.differentiate(c, u) for u in self.params for c in self.components], self.params)
        if self.cycle:
            self._check_cycle()

    @classmethod
    def spatial(cls, space, k, components, t=0.0, cycle=False):
        """Chain in the slice ``t = const`` given by its spatial components."""
        return cls(space, k, [float(t)] + list(components), cycle)

    def map(self, U):
        U = np.atleast_2d(np.asarray(U, dtype=float))
        return self._points(*U.T).T

    def tangents(self, U):
        U = np.atleast_2d(np.asarray(U, dtype=float))
        d = self._tangents(*U.T)
        return d.T.reshape(U.shape[0], self.k, self.space.n + 1)

    def sample(self, order):
        U, w = gauss_legendre(order, self.k)
        return w, self.map(U), self.tangents(U)


def _fd_stencil(U, h):
    """Rows: U, then U + h e_j and U - h e_j for each j."""
    N, k = U.shape
    blocks = [U]
    for j in range(k):
        e = np.zeros(k)
        e[j] = h
        blocks.append(U + e)
        blocks.append(U - e)
    return np.concatenate(blocks)


def _fd_split(P, N, k, h):
    centre = P[:N]
    T = np.empty((N, k) + P.shape[1:])
    for j in range(k):
        plus = P[N * (1 + 2 * j):N * (2 + 2 * j)]
        minus = P[N * (2 + 2 * j):N * (3 + 2 * j)]
        T[:, j] = (plus - minus) / (2 * h)
    return centre, T


class MapChain(Chain):
    """Chain given by a vectorised callable ``U (N, k) -> points (N, n+1)``.

    Tangents are central differences with step ``h``.
    """

    def __init__(self, space, k: int, func: Callable, cycle: bool = False, h: float = FD_STEP):
        self.space = space
        self.k = int(k)
        self.func = func
        self.cycle = bool(cycle)
        self.h = h
        if self.cycle:
            self._check_cycle()

    def map(self, U):
        return np.asarray(self.func(np.atleast_2d(np.asarray(U, dtype=float))), dtype=float)

    def sample(self, order):
        U, w = gauss_legendre(order, self.k)
        P = self.map(_fd_stencil(U, self.h))
        centre, T = _fd_split(P, len(U), self.k, self.h)
        return w, centre, T


@dataclass
class GridChain(Chain):
    """Chain known only at the nodes of one quadrature rule."""

    space: object
    k: int
    order: int
    nodes: np.ndarray
    weights: np.ndarray
    points: np.ndarray
    tangent_vectors: np.ndarray
    cycle: bool = False
    meta: dict = field(default_factory=dict)

    def sample(self, order):
        if order != self.order:
            raise ValueError(f"grid chain was built for quadrature order {self.order}, not {order}")
        return self.weights, self.points, self.tangent_vectors

    def map(self, U):
        raise TypeError("a grid chain has no parametrisation between its nodes")


def integrate_over_chain(a: Form, chain: Chain, order: int = 16) -> float:
    """``∫_chain a`` by pulling back to ``[0,1]^k`` and Gauss-Legendre quadrature."""
    if a.space != chain.space:
        raise ValueError("form and chain live on different spaces")
    if a.degree != chain.k:
        raise ValueError(f"cannot integrate a {a.degree}-form over a {chain.k}-chain")
    w, P, T = chain.sample(order)
    if a.is_zero():
        return 0.0
    vals = a.evaluate_batch(P[:, 0], P[:, 1:])
    integrand = np.zeros(len(w))
    for i, key in enumerate(a.keys()):
        if chain.k == 0:
            integrand += vals[i]
            continue
        minors = np.linalg.det(T[:, :, list(key)])
        integrand += vals[i] * minors
    return float(np.dot(w, integrand))


def _flow_stencil(X0, dyn, t0, t1, options):
    if t1 == t0:
        return X0.copy()
    return flow(dyn, X0, t0, [t1], options)[0]


def advect_chain(chain: Chain, dyn: VortexDynamics, t0: float, t1: float, order: int = 16,
                 options: Optional[IntegratorOptions] = None, h: float = FD_STEP) -> GridChain:
    """Flow a chain lying in the slice ``t = t0`` to the slice ``t = t1``.

    Every quadrature node and its ``±h`` neighbours in each parameter
    direction are advected together; the result stores nodes and
    central-difference tangents for quadrature ``order``.
    """
    if chain.space != dyn.space:
        raise ValueError("chain and dynamics live on different spaces")
    U, w = gauss_legendre(order, chain.k)
    S = _fd_stencil(U, h)
    P0 = chain.map(S)
    if np.max(np.abs(P0[:, 0] - t0), initial=0.0) > 1e-12:
        raise ValueError(f"chain does not lie in the slice t = {t0}")
    try:
        X1 = _flow_stencil(P0[:, 1:], dyn, t0, t1, options)
    except NumericalFailure as exc:
        bad = _first_failing_node(chain, dyn, U, t0, t1, options)
        raise NumericalFailure(f"advection failed at parameter {bad}: {exc}", point=exc.point) from exc
    P1 = np.column_stack([np.full(len(X1), float(t1)), X1])
    centre, T = _fd_split(P1, len(U), chain.k, h)
    return GridChain(chain.space, chain.k, order, U, w, centre, T, chain.cycle,
                     {"t0": t0, "t1": t1, "h": h})


def _first_failing_node(chain, dyn, U, t0, t1, options):
    for u in U:
        try:
            _flow_stencil(chain.map(_fd_stencil(u[None, :], FD_STEP))[:, 1:], dyn, t0, t1, options)
        except NumericalFailure:
            return tuple(float(x) for x in u)
    return None


def solution_tube(cycle: Chain, dyn: VortexDynamics, t0: float, t1: float, order: int = 16,
                  options: Optional[IntegratorOptions] = None, h: float = FD_STEP) -> GridChain:
    """The (k+1)-chain swept by solutions through a k-chain in the slice ``t = t0``.

    Parameters are ``(u1..uk, s)`` with the point at ``s`` lying at time
    ``t0 + s (t1 - t0)``.  Its boundary is the start cycle minus the advected
    cycle (for a cycle), so ``∫ dσ`` over it vanishes.
    """
    k = cycle.k
    Uu, wu = gauss_legendre(order, k)
    Us, ws = gauss_legendre(order, 1)
    s = Us[:, 0]
    S = _fd_stencil(Uu, h)
    P0 = cycle.map(S)
    if np.max(np.abs(P0[:, 0] - t0), initial=0.0) > 1e-12:
        raise ValueError(f"chain does not lie in the slice t = {t0}")
    span = t1 - t0
    s_all = np.concatenate([s, s + h, s - h])
    X = flow(dyn, P0[:, 1:], t0, t0 + s_all * span, options)
    Nu, Ns = len(Uu), len(s)
    npts = dyn.n + 1
    points = np.empty((Nu, Ns, npts))
    tangents = np.empty((Nu, Ns, k + 1, npts))
    for l in range(Ns):
        centre, Tu = _fd_split(X[l], Nu, k, h)
        points[:, l, 0] = t0 + s[l] * span
        points[:, l, 1:] = centre
        tangents[:, l, :k, 0] = 0.0
        tangents[:, l, :k, 1:] = Tu
        tangents[:, l, k, 0] = span
        tangents[:, l, k, 1:] = (X[Ns + l][:Nu] - X[2 * Ns + l][:Nu]) / (2 * h)
    nodes = np.array([np.concatenate([u, [sv]]) for u in Uu for sv in s])
    weights = np.outer(wu, ws[:]).ravel()
    return GridChain(cycle.space, k + 1, order, nodes, weights,
                     points.reshape(Nu * Ns, npts), tangents.reshape(Nu * Ns, k + 1, npts),
                     False, {"t0": t0, "t1": t1, "h": h})


def invariant_power(sigma: Form, k: int, kind: str = "relative", spatial: bool = False) -> Form:
    """``σ ∧ (dσ)^k`` (relative) or ``(dσ)^(k+1)`` (absolute).

    With ``spatial=True`` the spatial parts ``r̂`` and ``d̂r̂`` are used, which
    is what integrals over chains in a constant-time slice see.  A degree
    beyond the dimension gives the zero form and a
    :class:`DegreeOverflowWarning`.
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    if spatial:
        _, base = decompose(sigma)
        d = exterior_derivative(base, "spatial")
        limit = sigma.space.n
    else:
        base = sigma
        d = exterior_derivative(sigma, "full")
        limit = sigma.space.n + 1
    if kind == "relative":
        degree = base.degree + k * d.degree
        start, count = base, k
    elif kind == "absolute":
        degree = (k + 1) * d.degree
        start, count = d, k
    else:
        raise ValueError(f"unknown invariant kind {kind!r}")
    if degree > limit:
        warnings.warn(f"degree {degree} exceeds {limit}; the invariant form is zero",
                      DegreeOverflowWarning, stacklevel=2)
        return Form.zero(sigma.space, degree)
    out = start
    for _ in range(count):
        out = wedge(out, d)
    return out


@dataclass
class InvariantReport:
    """Values of an invariant before and after the flow, and their drift.

    For ``kind == "liouville"`` the values are the reference volume ratio 1 and
    the worst sampled ratio; ``drift_abs`` is ``max |det J - 1|``.
    """

    kind: str
    k: Optional[int]
    value_t0: float
    value_t1: float
    drift_abs: float
    drift_rel: float
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_values(cls, kind, k, v0, v1, meta=None):
        drift = abs(v1 - v0)
        if v0 != 0.0:
            rel = drift / abs(v0)
        else:
            rel = 0.0 if drift == 0.0 else math.inf
        return cls(kind, k, float(v0), float(v1), float(drift), float(rel), dict(meta or {}))

    @property
    def max_abs_det_minus_one(self):
        return self.meta.get("max_abs_det_minus_one")

    def to_dict(self) -> dict:
        d = {
            "kind": self.kind,
            "k": self.k,
            "value_t0": self.value_t0,
            "value_t1": self.value_t1,
            "drift_abs": self.drift_abs,
            "drift_rel": self.drift_rel,
        }
        d.update(self.meta)
        return d


def _check_invariant(kind, sigma, chain, t0, t1, k, dyn, order, options):
    form = invariant_power(sigma, k, kind, spatial=True)
    if form.degree != chain.k:
        raise ValueError(f"{kind} invariant with k={k} has degree {form.degree}, "
                         f"chain has dimension {chain.k}")
    if dyn is None:
        dyn = VortexDynamics.from_sigma(sigma)
    v0 = integrate_over_chain(form, chain, order)
    if t1 == t0:
        v1 = v0
    else:
        v1 = integrate_over_chain(form, advect_chain(chain, dyn, t0, t1, order, options), order)
    opts = options or IntegratorOptions()
    meta = {"t0": float(t0), "t1": float(t1), "order": order, "rtol": opts.rtol, "atol": opts.atol}
    return InvariantReport.from_values(kind, k, v0, v1, meta)


def check_relative_invariant(sigma: Form, cycle: Chain, t0: float, t1: float, k: int = 0, *,
                             dyn: Optional[VortexDynamics] = None, order: int = 16,
                             options: Optional[IntegratorOptions] = None) -> InvariantReport:
    """Compare ``∮ r̂∧(d̂r̂)^k`` over a spatial cycle at ``t0`` and its image at ``t1``."""
    if not cycle.cycle:
        raise ValueError("relative invariants need a cycle")
    return _check_invariant("relative", sigma, cycle, t0, t1, k, dyn, order, options)


def check_absolute_invariant(sigma: Form, chain: Chain, t0: float, t1: float, k: int = 0, *,
                             dyn: Optional[VortexDynamics] = None, order: int = 16,
                             options: Optional[IntegratorOptions] = None) -> InvariantReport:
    """Compare ``∫ (d̂r̂)^(k+1)`` over a spatial chain at ``t0`` and its image at ``t1``."""
    return _check_invariant("absolute", sigma, chain, t0, t1, k, dyn, order, options)


def _jacobians(dyn, X, t0, t1, h, options):
    """Flow-map Jacobians by central differences, with the flowed centres."""
    N, n = X.shape
    blocks = [X]
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        blocks.append(X + e)
        blocks.append(X - e)
    Y = _flow_stencil(np.concatenate(blocks), dyn, t0, t1, options)
    J = np.empty((N, n, n))
    for j in range(n):
        J[:, :, j] = (Y[N * (1 + 2 * j):N * (2 + 2 * j)] - Y[N * (2 + 2 * j):N * (3 + 2 * j)]) / (2 * h)
    return J, Y[:N]


def check_liouville(dyn: VortexDynamics, box, t1: float, count: int = 16, *, t0: float = 0.0,
                    seed: int = 0, h: float = JACOBIAN_STEP,
                    options: Optional[IntegratorOptions] = None) -> InvariantReport:
    """Volume preservation of the flow at ``count`` random points of ``box``.

    The ratio compared with 1 is ``ρ(t1, φ(x)) det Dφ(x) / ρ(t0, x)`` where
    ``ρ`` is the density of the invariant volume form; for the builders
    ``ρ`` is constant and this is ``det Dφ``.  Failed samples are recorded
    and excluded from the maximum.
    """
    n = dyn.n
    box = np.asarray(box, dtype=float).reshape(n, 2)
    rng = np.random.default_rng(seed)
    X = rng.uniform(box[:, 0], box[:, 1], size=(count, n))
    failures = []
    try:
        J, Y = _jacobians(dyn, X, t0, t1, h, options)
        ok = np.ones(count, dtype=bool)
    except NumericalFailure:
        J = np.full((count, n, n), np.nan)
        Y = np.full((count, n), np.nan)
        ok = np.zeros(count, dtype=bool)
        for i in range(count):
            try:
                Ji, Yi = _jacobians(dyn, X[i:i + 1], t0, t1, h, options)
                J[i], Y[i], ok[i] = Ji[0], Yi[0], True
            except NumericalFailure as exc:
                failures.append({"point": X[i].tolist(), "error": str(exc)})
    ratios = np.full(count, np.nan)
    if np.any(ok):
        dets = np.linalg.det(J[ok])
        rho0 = dyn.volume_density(t0, X[ok])
        rho1 = dyn.volume_density(t1, Y[ok])
        ratios[ok] = rho1 * dets / rho0
    dev = np.abs(ratios - 1.0)
    worst = float(np.nanmax(dev)) if np.any(ok) else math.nan
    i_worst = int(np.nanargmax(dev)) if np.any(ok) else None
    meta = {
        "t0": float(t0), "t1": float(t1), "count": count, "seed": seed, "h": h,
        "max_abs_det_minus_one": worst,
        "failures": failures,
    }
    v1 = float(ratios[i_worst]) if i_worst is not None else math.nan
    return InvariantReport("liouville", None, 1.0, v1, worst, worst, meta)
