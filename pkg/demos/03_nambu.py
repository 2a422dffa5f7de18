"""Nambu mechanics in three dimensions: the free rigid body as a 2-form system."""

# %%
import numpy as np

from vortexforms import NambuSpec, VortexDynamics, integrate_trajectory, nambu_sigma
from vortexforms.expr import evaluate

# Casimir and energy of a rigid body with moments of inertia 1, 2, 3
spec = NambuSpec.build(3, ["(x^2 + y^2 + z^2)/2", "x^2/2 + y^2/4 + z^2/6"])
sigma = nambu_sigma(spec)
print("sigma =", sigma)

# %%
dyn = VortexDynamics.from_sigma(sigma, debug=True)
x0 = np.array([0.6, 0.5, 0.4])
print("velocity at x0:", dyn.velocity(0.0, x0))

# %%
traj = integrate_trajectory(dyn, x0, 0.0, 10.0, sample_times=np.linspace(0, 10, 6))
names = spec.space.names
for t, x in zip(traj.times, traj.states):
    point = dict(zip(names, (t,) + tuple(x)))
    H1, H2 = (evaluate(H, point) for H in spec.hamiltonians)
    print(f"t={t:5.1f}  x={np.round(x, 6)}  H1={H1:.12f}  H2={H2:.12f}")
