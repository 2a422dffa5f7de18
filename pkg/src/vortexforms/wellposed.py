"""Well-posedness of the vortex-lines equation ``i_γ' dσ = 0``.

The spatial equation ``i_v R = -S`` determines ``v`` uniquely only if the map
``v -> i_v R`` is a linear isomorphism from vectors to p-forms on M.  That
needs ``C(n, p) == n`` (so ``p = 1`` or ``p = n - 1``), an even ``n`` when
``p = 1`` (closed 2-forms have even rank), and full rank ``n`` of ``R``.
The rank is checked numerically at sample points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import EvaluationError
from .exterior import Form, contraction_matrices, decompose, exterior_derivative, numerical_rank

__all__ = [
    "DegreeVerdict",
    "Sampling",
    "RankSample",
    "WellPosednessReport",
    "check_degree",
    "decide_verdict",
    "dynamics_forms",
    "sample_points",
    "analyze",
    "WELL_POSED",
    "ILL_POSED",
]

WELL_POSED = "well-posed"
ILL_POSED = "ill-posed"

REASON_DEGREE = "degree-mismatch"
REASON_PARITY = "odd-dimensional symplectic candidate"
REASON_RANK = "rank-deficient"
REASON_EVAL = "evaluation-failure"


@dataclass(frozen=True)
class DegreeVerdict:
    n: int
    p: int
    degree_ok: bool
    parity_ok: bool
    reasons: tuple

    @property
    def passed(self) -> bool:
        return self.degree_ok and self.parity_ok


def check_degree(n: int, p: int) -> DegreeVerdict:
    """Dimension test ``C(n, p) == n`` plus the parity test for ``p = 1``.

    >>> check_degree(4, 2).passed
    False
    >>> check_degree(3, 1).reasons
    ('odd-dimensional symplectic candidate',)
    """
    reasons = []
    degree_ok = 1 <= p <= n and math.comb(n, p) == n
    if not degree_ok:
        reasons.append(REASON_DEGREE)
    parity_ok = not (p == 1 and n % 2 == 1)
    if not parity_ok:
        reasons.append(REASON_PARITY)
    return DegreeVerdict(n, p, degree_ok, parity_ok, tuple(reasons))


@dataclass(frozen=True)
class Sampling:
    """Where to test the rank of R.

    Either explicit ``points`` (each ``(t, x1..xn)``), or ``count`` spatial
    points drawn uniformly from ``box`` (default ``[-1, 1]^n``) with ``seed``,
    each paired with every value in ``times``.
    """

    count: int = 32
    seed: int = 0
    box: Optional[tuple] = None
    times: tuple = (0.0, 1.0, math.pi)
    points: Optional[tuple] = None


def sample_points(sampling: Sampling, n: int) -> np.ndarray:
    """Sample points as an array of shape (N, n + 1), time in column 0."""
    if sampling.points is not None:
        pts = np.array(sampling.points, dtype=float).reshape(-1, n + 1)
        return pts
    box = np.array(sampling.box if sampling.box is not None else [(-1.0, 1.0)] * n, dtype=float)
    if box.shape != (n, 2):
        raise ValueError(f"sampling box must have shape ({n}, 2), got {box.shape}")
    rng = np.random.default_rng(sampling.seed)
    X = rng.uniform(box[:, 0], box[:, 1], size=(sampling.count, n))
    times = np.asarray(sampling.times, dtype=float)
    out = np.empty((len(X) * len(times), n + 1))
    out[:, 0] = np.tile(times, len(X))
    out[:, 1:] = np.repeat(X, len(times), axis=0)
    return out


@dataclass
class RankSample:
    point: tuple
    rank: Optional[int]
    error: Optional[str] = None

    def to_dict(self, names):
        d = {"point": dict(zip(names, self.point)), "rank": self.rank}
        if self.error is not None:
            d["error"] = self.error
        return d


def decide_verdict(n, degree_ok, parity_ok, rank_samples):
    """Verdict and reason codes from the three ingredients; nothing else enters."""
    reasons = []
    if not degree_ok:
        reasons.append(REASON_DEGREE)
    if not parity_ok:
        reasons.append(REASON_PARITY)
    if any(s.rank is None for s in rank_samples):
        reasons.append(REASON_EVAL)
    if any(s.rank is not None and s.rank != n for s in rank_samples):
        reasons.append(REASON_RANK)
    return (WELL_POSED if not reasons else ILL_POSED), tuple(reasons)


@dataclass
class WellPosednessReport:
    n: int
    p: int
    degree_ok: bool
    parity_ok: bool
    rank_samples: list
    verdict: str
    reasons: tuple
    names: tuple = ()
    s_hat: Form = field(default=None, repr=False, compare=False)
    r_hat: Form = field(default=None, repr=False, compare=False)
    S_hat: Form = field(default=None, repr=False, compare=False)
    R_hat: Form = field(default=None, repr=False, compare=False)

    @property
    def well_posed(self) -> bool:
        return self.verdict == WELL_POSED

    @property
    def witness(self) -> Optional[RankSample]:
        """First sample where the rank test failed, if any."""
        for s in self.rank_samples:
            if s.rank != self.n:
                return s
        return None

    def to_dict(self) -> dict:
        w = self.witness
        return {
            "verdict": self.verdict,
            "reasons": list(self.reasons),
            "n": self.n,
            "p": self.p,
            "degree_ok": self.degree_ok,
            "parity_ok": self.parity_ok,
            "rank_samples": [s.to_dict(self.names) for s in self.rank_samples],
            "witness": None if w is None else w.to_dict(self.names),
        }


def dynamics_forms(sigma: Form):
    """``(s_hat, r_hat, S_hat, R_hat)`` with ``S = -d̂s + ∂_t r`` and ``R = d̂r``."""
    s_hat, r_hat = decompose(sigma)
    R_hat = exterior_derivative(r_hat, "spatial")
    S_hat = exterior_derivative(r_hat, "time") - exterior_derivative(s_hat, "spatial") \
        if sigma.degree >= 1 else Form.zero(sigma.space, 0)
    return s_hat, r_hat, S_hat, R_hat


def _ranks(R_hat, pts):
    if R_hat.degree < 1:
        return [RankSample(tuple(map(float, p)), 0) for p in pts]
    try:
        mats = contraction_matrices(R_hat, pts[:, 0], pts[:, 1:])
        return [RankSample(tuple(map(float, p)), numerical_rank(M)) for p, M in zip(pts, mats)]
    except EvaluationError:
        pass
    out = []
    for p in pts:
        try:
            M = contraction_matrices(R_hat, p[0], p[None, 1:])[0]
            out.append(RankSample(tuple(map(float, p)), numerical_rank(M)))
        except EvaluationError as exc:
            out.append(RankSample(tuple(map(float, p)), None, str(exc)))
    return out


def analyze(sigma: Form, sampling: Optional[Sampling] = None) -> WellPosednessReport:
    """Decide whether ``i_γ' dσ = 0`` is a well-posed first-order system.

    For ``p = n - 1``, ``R`` is a top-degree form ``f dx^1∧...∧dx^n`` whose
    contraction matrix is ``f`` times a signed permutation, so the sampled
    rank is ``n`` exactly when ``f`` is nonzero at the sample.
    Evaluation failures at a sample are recorded on that sample (rank
    ``None``) and make the verdict ill-posed; they are not raised.
    """
    sampling = sampling or Sampling()
    n = sigma.space.n
    p = sigma.degree
    s_hat, r_hat, S_hat, R_hat = dynamics_forms(sigma)
    deg = check_degree(n, p)
    pts = sample_points(sampling, n)
    samples = _ranks(R_hat, pts)
    verdict, reasons = decide_verdict(n, deg.degree_ok, deg.parity_ok, samples)
    return WellPosednessReport(
        n=n, p=p, degree_ok=deg.degree_ok, parity_ok=deg.parity_ok,
        rank_samples=samples, verdict=verdict, reasons=reasons,
        names=sigma.space.names,
        s_hat=s_hat, r_hat=r_hat, S_hat=S_hat, R_hat=R_hat,
    )
