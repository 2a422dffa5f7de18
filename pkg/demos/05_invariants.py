"""Integral invariants: loop integrals, solution tubes, phase-space volume."""

# %%
import math

from vortexforms import HamiltonianSpec, VortexDynamics, hamiltonian_sigma
from vortexforms.exterior import exterior_derivative
from vortexforms.invariants import (ExpressionChain, check_absolute_invariant, check_liouville,
                                    check_relative_invariant, integrate_over_chain,
                                    invariant_power, solution_tube)

sigma = hamiltonian_sigma(HamiltonianSpec.build(1, "(p^2 + q^2)/2 + q^3/3"))
dyn = VortexDynamics.from_sigma(sigma)
loop = ExpressionChain.spatial(sigma.space, 1, ["0.4*cos(2*pi*u1)", "0.4*sin(2*pi*u1)"], cycle=True)

# %% the loop integral of p dq is minus the enclosed area
r_hat = invariant_power(sigma, 0, spatial=True)
print(f"∮ p dq = {integrate_over_chain(r_hat, loop):.15f}   (-π·0.16 = {-math.pi * 0.16:.15f})")

# %% carried along the flow it does not change, once the stretched loop is resolved
for order in (16, 32):
    rel = check_relative_invariant(sigma, loop, 0.0, 3.0, dyn=dyn, order=order)
    print(f"relative, {order} nodes: {rel.value_t0:.12f} -> {rel.value_t1:.12f}  drift {rel.drift_abs:.1e}")

square = ExpressionChain.spatial(sigma.space, 2, ["0.2*u1 - 0.1", "0.3*u2"])
ab = check_absolute_invariant(sigma, square, 0.0, 3.0, dyn=dyn)
print(f"absolute: {ab.value_t0:.12f} -> {ab.value_t1:.12f}  drift {ab.drift_abs:.1e}")

# %% d sigma vanishes on the tube of solutions through the loop
tube = solution_tube(loop, dyn, 0.0, 1.0)
print(f"∫ dσ over the tube = {integrate_over_chain(exterior_derivative(sigma), tube):.2e}")

# %% Liouville: det of the flow Jacobian stays 1
lv = check_liouville(dyn, [(-0.5, 0.5), (-0.5, 0.5)], 1.0, 16)
print(f"max |det J - 1| = {lv.max_abs_det_minus_one:.2e}")
