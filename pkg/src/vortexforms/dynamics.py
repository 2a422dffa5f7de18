"""Velocity field and trajectories of a well-posed vortex-lines equation.

At every point the spatial equation ``i_v R = -S`` is the square linear
system ``A v = a``; it is solved numerically per evaluation.  The time
component of the tangent is fixed to 1, so trajectories are parametrised by
``t``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import IllPosedError, NumericalFailure
from .exterior import contraction_pattern
from .ode import rk4, rkf45
from .wellposed import Sampling, WellPosednessReport, analyze

__all__ = [
    "VortexDynamics",
    "IntegratorOptions",
    "Trajectory",
    "velocity_at",
    "integrate_trajectory",
    "flow",
    "MAX_CONDITION",
]

MAX_CONDITION = 1e12


class VortexDynamics:
    """Spatial velocity field ``v(t, x)`` defined by ``i_v R = -S``.

    Built from a well-posed :class:`WellPosednessReport`; ``force=True``
    skips the verdict (the system must still be square).  With
    ``debug=True`` every evaluation also checks ``i_v S = 0``.
    """

    def __init__(self, report: WellPosednessReport, *, force: bool = False, debug: bool = False):
        if not force and not report.well_posed:
            raise IllPosedError(report)
        R, S = report.R_hat, report.S_hat
        n = R.n
        if R.degree != S.degree + 1 or math.comb(n, S.degree) != n:
            raise ValueError(
                f"i_v R = -S is not square for n={n}, p={S.degree}: "
                f"{math.comb(n, S.degree)} equations, {n} unknowns")
        self.report = report
        self.space = R.space
        self.R_hat = R
        self.S_hat = S
        self.debug = debug
        self._R_pattern = contraction_pattern(R.keys(), n, R.degree)
        basis = self._R_pattern[4]
        row_of = {k: i for i, k in enumerate(basis)}
        self._S_rows = np.array([row_of[k] for k in S.keys()], dtype=int)
        if debug:
            self._S_pattern = contraction_pattern(S.keys(), n, S.degree) if S.degree >= 1 else None
        self._volume = None

    @classmethod
    def from_sigma(cls, sigma, sampling: Optional[Sampling] = None, **kwargs):
        return cls(analyze(sigma, sampling), **kwargs)

    @property
    def n(self):
        return self.space.n

    def system(self, t, X):
        """``(A, a)`` at a batch of points: shapes (N, n, n) and (N, n)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        N, n = X.shape
        rows, cols, signs, tidx, basis = self._R_pattern
        A = np.zeros((N, len(basis), n))
        if len(tidx):
            vals = self.R_hat.evaluate_batch(t, X)
            np.add.at(A, (slice(None), rows, cols), (signs[:, None] * vals[tidx]).T)
        a = np.zeros((N, len(basis)))
        if len(self._S_rows):
            a[:, self._S_rows] = -self.S_hat.evaluate_batch(t, X).T
        return A, a

    def velocity(self, t, X) -> np.ndarray:
        """Velocities at a batch of points ``X`` (shape (N, n) or (n,))."""
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        Xb = np.atleast_2d(X)
        A, a = self.system(t, Xb)
        with np.errstate(all="ignore"):
            cond = np.linalg.cond(A)
        bad = ~(cond <= MAX_CONDITION)
        if np.any(bad):
            i = int(np.argmax(bad))
            tt = float(np.broadcast_to(t, (Xb.shape[0],))[i])
            raise NumericalFailure(
                f"singular or ill-conditioned system at t={tt!r}, x={Xb[i].tolist()} "
                f"(condition estimate {cond[i]:.3g})",
                point=(tt,) + tuple(Xb[i]), condition=float(cond[i]))
        v = np.linalg.solve(A, a[..., None])[..., 0]
        if self.debug:
            self._verify(t, Xb, v)
        return v[0] if single else v

    def _verify(self, t, X, v):
        S = self.S_hat
        if S.is_zero():
            return
        vals = S.evaluate_batch(t, X)
        if S.degree == 0:
            return
        rows, cols, signs, tidx, basis = self._S_pattern
        M = np.zeros((X.shape[0], len(basis), self.n))
        np.add.at(M, (slice(None), rows, cols), (signs[:, None] * vals[tidx]).T)
        resid = np.einsum("nij,nj->ni", M, v)
        scale = 1.0 + np.linalg.norm(v, axis=1) * np.max(np.abs(vals), axis=0)
        worst = np.max(np.abs(resid), axis=1) / scale
        if np.any(worst > 1e-9):
            raise AssertionError(f"i_v S = 0 violated: residual {worst.max():.3g}")

    def volume_density(self, t, X) -> np.ndarray:
        """Density of the invariant volume form (R^m for p=1, R for p=n-1) at points."""
        if self._volume is None:
            from .exterior import wedge
            R = self.R_hat
            top = R
            while top.degree < self.n:
                top = wedge(top, R)
            self._volume = top
        X = np.atleast_2d(np.asarray(X, dtype=float))
        key = tuple(range(1, self.n + 1))
        if key not in self._volume.terms:
            return np.zeros(X.shape[0])
        i = self._volume.keys().index(key)
        return self._volume.evaluate_batch(t, X)[i]


def velocity_at(dyn: VortexDynamics, t: float, x) -> np.ndarray:
    """Unique solution ``v`` of ``i_v R = -S`` at ``(t, x)``."""
    return dyn.velocity(t, np.asarray(x, dtype=float))


@dataclass(frozen=True)
class IntegratorOptions:
    """``method`` is ``"rkf45"`` (adaptive, default) or ``"rk4"`` (fixed ``step``)."""

    method: str = "rkf45"
    rtol: float = 1e-9
    atol: float = 1e-9
    step: float = 1e-3
    h0: Optional[float] = None
    max_steps: int = 1_000_000


@dataclass
class Trajectory:
    """Samples ``(t_k, x_k)`` sorted by increasing ``t``.

    ``failure`` is set (and the samples are partial) when integration
    aborted.  ``end_time``/``end_state`` refer to the last integrated point,
    which is the smallest ``t`` for backward integration.
    """

    times: np.ndarray
    states: np.ndarray
    velocities: np.ndarray
    t0: float
    t1: float
    accepted: int = 0
    rejected: int = 0
    options: IntegratorOptions = field(default_factory=IntegratorOptions)
    failure: Optional[str] = None

    @property
    def ok(self):
        return self.failure is None

    @property
    def forward(self):
        return self.t1 >= self.t0

    @property
    def end_time(self):
        return float(self.times[-1] if self.forward else self.times[0])

    @property
    def end_state(self):
        return self.states[-1] if self.forward else self.states[0]

    def __len__(self):
        return len(self.times)

    def at(self, t: float) -> np.ndarray:
        """Cubic Hermite interpolation between stored samples."""
        ts = self.times
        if not ts[0] <= t <= ts[-1]:
            raise ValueError(f"t={t} outside the sampled range")
        k = min(int(np.searchsorted(ts, t, side="right")) - 1, len(ts) - 2)
        if k < 0:
            return self.states[0].copy()
        h = ts[k + 1] - ts[k]
        s = (t - ts[k]) / h
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        h01 = -2 * s**3 + 3 * s**2
        h11 = s**3 - s**2
        return (h00 * self.states[k] + h10 * h * self.velocities[k]
                + h01 * self.states[k + 1] + h11 * h * self.velocities[k + 1])

    def to_csv(self, fh=None) -> str:
        """CSV with header ``t,x1,...,xn`` and ``%.17g`` values; returns the text."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        n = self.states.shape[1]
        writer.writerow(["t"] + [f"x{i}" for i in range(1, n + 1)])
        for t, x in zip(self.times, self.states):
            writer.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in x])
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text

    def to_dict(self) -> dict:
        return {
            "t0": self.t0,
            "t1": self.t1,
            "accepted": self.accepted,
            "rejected": self.rejected,
            "rtol": self.options.rtol,
            "atol": self.options.atol,
            "method": self.options.method,
            "failure": self.failure,
            "times": [float(t) for t in self.times],
            "states": [[float(v) for v in x] for x in self.states],
        }


def _solve(dyn, y0, t0, t1, options, sample_times):
    options = options or IntegratorOptions()

    def rhs(t, y):
        return dyn.velocity(t, y)

    if options.method == "rkf45":
        return rkf45(rhs, t0, y0, t1, rtol=options.rtol, atol=options.atol,
                     sample_times=sample_times, h0=options.h0, max_steps=options.max_steps)
    if options.method == "rk4":
        return rk4(rhs, t0, y0, t1, step=options.step, sample_times=sample_times)
    raise ValueError(f"unknown integrator {options.method!r}")


def integrate_trajectory(dyn: VortexDynamics, x0, t0: float, t1: float,
                         options: Optional[IntegratorOptions] = None,
                         sample_times: Optional[Sequence[float]] = None) -> Trajectory:
    """Integrate ``x' = v(t, x)`` from ``(t0, x0)`` to ``t1``.

    Failures (singular system, step-size underflow) do not raise: the partial
    trajectory is returned with ``failure`` set.
    """
    options = options or IntegratorOptions()
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (dyn.n,):
        raise ValueError(f"initial state must have shape ({dyn.n},)")
    res = _solve(dyn, x0, t0, t1, options, sample_times)
    times = np.array(res.times, dtype=float)
    states = np.array(res.states, dtype=float).reshape(len(times), dyn.n)
    vels = np.array(res.derivatives, dtype=float).reshape(len(times), dyn.n)
    if t1 < t0:
        times, states, vels = times[::-1], states[::-1], vels[::-1]
    return Trajectory(times, states, vels, float(t0), float(t1), res.accepted, res.rejected,
                      options, res.failure)


def flow(dyn: VortexDynamics, X0, t0: float, times: Sequence[float],
         options: Optional[IntegratorOptions] = None) -> np.ndarray:
    """Flow a batch of points ``X0`` (N, n) from ``t0`` to each of ``times``.

    All points share one step sequence.  Returns shape (len(times), N, n) in
    the order of ``times``; raises :class:`NumericalFailure` on failure.
    """
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        return np.empty((0,) + X0.shape)
    out = np.empty((len(times),) + X0.shape)
    for direction in (1.0, -1.0):
        sel = np.nonzero(direction * (times - t0) > 0)[0]
        if not len(sel):
            continue
        end = times[sel].max() if direction > 0 else times[sel].min()
        res = _solve(dyn, X0, t0, end, options, np.unique(times[sel]))
        if not res.ok:
            exc = NumericalFailure(f"flow failed: {res.failure}")
            if res.error is not None:
                exc.point = getattr(res.error, "point", None)
            raise exc
        lookup = {t: s for t, s in zip(res.times, res.states)}
        for i in sel:
            out[i] = lookup[times[i]]
    out[times == t0] = X0
    return out
