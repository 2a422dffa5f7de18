"""Builders for the standard sigma forms.

* :func:`hamiltonian_sigma` -- ``p_a dq^a - H dt`` on ``(t, q^1..q^m, p_1..p_m)``.
* :func:`nambu_sigma` -- ``x^1 dx^2∧...∧dx^n`` plus the ``dt`` term carrying
  ``H_1 d̂H_2∧...∧d̂H_{n-1}``; its flow is ``x'_i = ε_{ij..l} ∂_j H_1 ... ∂_l H_{n-1}``.
* :func:`example4_sigma` -- ``p dq - H dt`` on the odd-dimensional space
  ``(q, p, z)``, which is not a well-posed system.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from . import expr as ex
from .expr import Expression, SpaceSpec, parse_expression
from .exterior import Form, compose, exterior_derivative, wedge

__all__ = ["HamiltonianSpec", "NambuSpec", "hamiltonian_sigma", "nambu_sigma", "example4_sigma"]


def _coerce(H, space):
    if isinstance(H, str):
        return parse_expression(H, space)
    return ex.as_expression(H)


@dataclass(frozen=True)
class HamiltonianSpec:
    """``m`` degrees of freedom; coordinates are ordered ``q^1..q^m, p_1..p_m``."""

    m: int
    H: Expression
    q_names: tuple
    p_names: tuple

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be at least 1")
        if len(self.q_names) != self.m or len(self.p_names) != self.m:
            raise ValueError(f"need {self.m} position and {self.m} momentum names")
        SpaceSpec(tuple(self.q_names) + tuple(self.p_names))

    @classmethod
    def build(cls, m: int, H, q_names: Optional[Sequence[str]] = None,
              p_names: Optional[Sequence[str]] = None) -> "HamiltonianSpec":
        """Spec from ``H`` given as text or Expression; default names are
        ``q, p`` for one degree of freedom and ``q1.., p1..`` otherwise."""
        if q_names is None:
            q_names = ("q",) if m == 1 else tuple(f"q{a}" for a in range(1, m + 1))
        if p_names is None:
            p_names = ("p",) if m == 1 else tuple(f"p{a}" for a in range(1, m + 1))
        space = SpaceSpec(tuple(q_names) + tuple(p_names))
        return cls(m, _coerce(H, space), tuple(q_names), tuple(p_names))

    @property
    def space(self) -> SpaceSpec:
        return SpaceSpec(self.q_names + self.p_names)


@dataclass(frozen=True)
class NambuSpec:
    """``n`` coordinates and exactly ``n - 1`` Hamiltonians."""

    n: int
    hamiltonians: tuple
    names: tuple

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("Nambu mechanics needs n >= 2")
        if len(self.hamiltonians) != self.n - 1:
            raise ValueError(f"need exactly {self.n - 1} Hamiltonians, got {len(self.hamiltonians)}")
        if len(self.names) != self.n:
            raise ValueError(f"need {self.n} coordinate names")
        SpaceSpec(tuple(self.names))

    @classmethod
    def build(cls, n: int, hamiltonians: Sequence, names: Optional[Sequence[str]] = None) -> "NambuSpec":
        if names is None:
            names = ("x", "y", "z") if n == 3 else tuple(f"x{i}" for i in range(1, n + 1))
        space = SpaceSpec(tuple(names))
        return cls(n, tuple(_coerce(H, space) for H in hamiltonians), tuple(names))

    @property
    def space(self) -> SpaceSpec:
        return SpaceSpec(self.names)


def hamiltonian_sigma(spec: HamiltonianSpec) -> Form:
    space = spec.space
    m = spec.m
    terms = [((a + 1,), ex.Var(spec.p_names[a])) for a in range(m)]
    terms.append(((0,), ex.neg(spec.H)))
    return Form(space, 1, terms)


def nambu_sigma(spec: NambuSpec) -> Form:
    """Degree ``n - 1`` form ``dt ∧ H_1 d̂H_2∧...∧d̂H_{n-1} + x^1 dx^2∧...∧dx^n``.

    For odd ``n`` the ``dt`` part equals ``-H_1 d̂H_2∧...∧d̂H_{n-1}∧dt``; for
    even ``n`` writing it that way would reverse the flow, so the sign is fixed
    on the ``dt ∧ ...`` side.
    """
    space = spec.space
    n = spec.n
    r_hat = Form(space, n - 1, {tuple(range(2, n + 1)): ex.Var(spec.names[0])})
    s_hat = Form.function(space, spec.hamiltonians[0])
    for H in spec.hamiltonians[1:]:
        s_hat = wedge(s_hat, exterior_derivative(Form.function(space, H), "spatial"))
    return compose(s_hat, r_hat)


def example4_sigma(H="q^2 + p^2 + z") -> Form:
    """``p dq - H dt`` on the three-dimensional phase space ``(q, p, z)``."""
    space = SpaceSpec(("q", "p", "z"))
    return Form(space, 1, {(1,): ex.Var("p"), (0,): ex.neg(_coerce(H, space))})
