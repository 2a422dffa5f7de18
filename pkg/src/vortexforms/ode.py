"""Explicit Runge-Kutta integrators working on arrays of any shape.

Batched states (one row per initial condition) share a single step-size
sequence, which keeps the numerical flow map a smooth function of the initial
data; finite differences across the batch are then meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import NumericalFailure

__all__ = ["OdeResult", "rkf45", "rk4"]

# Fehlberg 4(5): fourth-order solution propagated, fifth order for the estimate.
_C = np.array([0.0, 1 / 4, 3 / 8, 12 / 13, 1.0, 1 / 2])
_A = (
    (),
    (1 / 4,),
    (3 / 32, 9 / 32),
    (1932 / 2197, -7200 / 2197, 7296 / 2197),
    (439 / 216, -8.0, 3680 / 513, -845 / 4104),
    (-8 / 27, 2.0, -3544 / 2565, 1859 / 4104, -11 / 40),
)
_B4 = np.array([25 / 216, 0.0, 1408 / 2565, 2197 / 4104, -1 / 5, 0.0])
_B5 = np.array([16 / 135, 0.0, 6656 / 12825, 28561 / 56430, -9 / 50, 2 / 55])
_E = _B5 - _B4

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0


@dataclass
class OdeResult:
    """Output times and states; ``failure`` is None on success."""

    times: list
    states: list
    derivatives: list
    accepted: int = 0
    rejected: int = 0
    failure: Optional[str] = None
    error: Optional[BaseException] = field(default=None, repr=False)

    @property
    def ok(self):
        return self.failure is None


def _outputs(t0, t1, sample_times):
    direction = 1.0 if t1 >= t0 else -1.0
    if sample_times is None:
        return direction, None
    ts = np.asarray(sample_times, dtype=float)
    lo, hi = min(t0, t1), max(t0, t1)
    if np.any(ts < lo) or np.any(ts > hi):
        raise ValueError("sample times must lie inside the integration interval")
    ts = np.sort(ts)[::int(direction)] if direction < 0 else np.sort(ts)
    return direction, list(ts)


def _initial_step(f, t0, y0, f0, t1, rtol, atol, order=4):
    scale = atol + rtol * np.abs(y0)
    d0 = np.sqrt(np.mean((y0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    span = abs(t1 - t0)
    h0 = min(h0, span)
    direction = 1.0 if t1 >= t0 else -1.0
    y1 = y0 + direction * h0 * f0
    f1 = f(t0 + direction * h0, y1)
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / (order + 1))
    return min(100 * h0, h1, span)


def rkf45(f: Callable, t0: float, y0, t1: float, *, rtol=1e-9, atol=1e-9,
          sample_times: Optional[Sequence[float]] = None, h0: Optional[float] = None,
          max_steps: int = 1_000_000) -> OdeResult:
    """Adaptive Runge-Kutta-Fehlberg 4(5).

    Without ``sample_times`` every accepted step is recorded (``t0``
    included).  With ``sample_times`` the steps are shortened to land exactly
    on each requested time and only those are recorded.  A
    :class:`NumericalFailure` from ``f`` or a step below ``1e-14 * |t1 - t0|``
    stops the integration and returns the partial result with ``failure`` set.
    """
    y = np.array(y0, dtype=float)
    t = float(t0)
    t1 = float(t1)
    direction, outputs = _outputs(t0, t1, sample_times)
    res = OdeResult([], [], [])
    try:
        k1 = f(t, y)
    except NumericalFailure as exc:
        res.failure, res.error = f"right-hand side failed at t={t!r}: {exc}", exc
        return res

    def record(tt, yy, ff):
        res.times.append(tt)
        res.states.append(yy.copy())
        res.derivatives.append(ff.copy())

    out_i = 0
    if outputs is None:
        record(t, y, k1)
    else:
        while out_i < len(outputs) and outputs[out_i] == t:
            record(t, y, k1)
            out_i += 1
    if t1 == t:
        return res

    span = abs(t1 - t0)
    h_min = 1e-14 * span
    try:
        h = abs(h0) if h0 else _initial_step(f, t, y, k1, t1, rtol, atol)
    except NumericalFailure:
        h = span * 1e-3

    ks = [None] * 6
    while direction * (t1 - t) > 0:
        if res.accepted + res.rejected >= max_steps:
            res.failure = "maximum number of steps exceeded"
            return res
        target = t1 if outputs is None or out_i >= len(outputs) else outputs[out_i]
        h_try = min(h, abs(target - t))
        hits_target = h_try == abs(target - t)
        if h_try < h_min and not hits_target:
            res.failure = f"step-size underflow at t={t!r} (h={h_try:.3g})"
            return res
        hs = direction * h_try
        try:
            ks[0] = k1
            for s in range(1, 6):
                ys = y + hs * sum(a * ks[j] for j, a in enumerate(_A[s]) if a != 0.0)
                ks[s] = f(t + _C[s] * hs, ys)
            y4 = y + hs * sum(b * ks[j] for j, b in enumerate(_B4) if b != 0.0)
            err_vec = hs * sum(e * ks[j] for j, e in enumerate(_E) if e != 0.0)
        except NumericalFailure as exc:
            # shrink and retry: the stage may have left the domain of the field
            res.rejected += 1
            h = h_try * 0.25
            if h < h_min:
                res.failure = f"right-hand side failed at t={t!r}: {exc}"
                res.error = exc
                return res
            continue
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y4))
        err = float(np.max(np.abs(err_vec) / scale)) if y.size else 0.0
        if not np.isfinite(err):
            err = np.inf
        if err <= 1.0:
            t_new = target if hits_target else t + hs
            try:
                k1_new = f(t_new, y4)
            except NumericalFailure as exc:
                res.failure = f"right-hand side failed at t={t_new!r}: {exc}"
                res.error = exc
                return res
            t, y, k1 = t_new, y4, k1_new
            res.accepted += 1
            if outputs is None:
                record(t, y, k1)
            else:
                while out_i < len(outputs) and outputs[out_i] == t:
                    record(t, y, k1)
                    out_i += 1
            factor = MAX_FACTOR if err == 0 else min(MAX_FACTOR, SAFETY * err ** -0.2)
            # a step clipped to hit an output time says nothing about the next one
            h = max(h, h_try * factor) if hits_target and h_try < h else h_try * factor
        else:
            res.rejected += 1
            h = h_try * max(MIN_FACTOR, SAFETY * err ** -0.2)
            if h < h_min:
                res.failure = f"step-size underflow at t={t!r} (h={h:.3g})"
                return res
    return res


def rk4(f: Callable, t0: float, y0, t1: float, *, step: float = 1e-3,
        sample_times: Optional[Sequence[float]] = None) -> OdeResult:
    """Classical fixed-step RK4; the last step (and steps before sample times) is shortened."""
    y = np.array(y0, dtype=float)
    t = float(t0)
    t1 = float(t1)
    direction, outputs = _outputs(t0, t1, sample_times)
    res = OdeResult([], [], [])
    h = abs(step)
    if h <= 0:
        raise ValueError("step must be positive")
    try:
        k1 = f(t, y)
        out_i = 0
        if outputs is None:
            res.times.append(t)
            res.states.append(y.copy())
            res.derivatives.append(k1.copy())
        else:
            while out_i < len(outputs) and outputs[out_i] == t:
                res.times.append(t)
                res.states.append(y.copy())
                res.derivatives.append(k1.copy())
                out_i += 1
        while direction * (t1 - t) > 0:
            target = t1 if outputs is None or out_i >= len(outputs) else outputs[out_i]
            h_try = min(h, abs(target - t))
            hits = h_try == abs(target - t)
            hs = direction * h_try
            k2 = f(t + hs / 2, y + hs / 2 * k1)
            k3 = f(t + hs / 2, y + hs / 2 * k2)
            k4 = f(t + hs, y + hs * k3)
            y = y + hs / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            t = target if hits else t + hs
            k1 = f(t, y)
            res.accepted += 1
            if outputs is None:
                res.times.append(t)
                res.states.append(y.copy())
                res.derivatives.append(k1.copy())
            else:
                while out_i < len(outputs) and outputs[out_i] == t:
                    res.times.append(t)
                    res.states.append(y.copy())
                    res.derivatives.append(k1.copy())
                    out_i += 1
    except NumericalFailure as exc:
        res.failure = f"right-hand side failed near t={t!r}: {exc}"
        res.error = exc
    return res
