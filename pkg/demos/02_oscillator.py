"""Harmonic oscillator from p dq - H dt: well-posedness, trajectory, energy."""

# %%
import numpy as np

from vortexforms import (HamiltonianSpec, VortexDynamics, analyze, hamiltonian_sigma,
                         integrate_trajectory)

spec = HamiltonianSpec.build(1, "(p^2 + q^2)/2")
sigma = hamiltonian_sigma(spec)
report = analyze(sigma)
print(report.verdict, "with", len(report.rank_samples), "rank samples")

# %%
dyn = VortexDynamics(report)
print("velocity at (q, p) = (1, 0):", dyn.velocity(0.0, [1.0, 0.0]))

# %% one period
times = np.linspace(0.0, 2 * np.pi, 9)
traj = integrate_trajectory(dyn, [1.0, 0.0], 0.0, 2 * np.pi, sample_times=times)
for t, (q, p) in zip(traj.times, traj.states):
    print(f"t={t:6.3f}  q={q: .9f}  p={p: .9f}  cos t={np.cos(t): .9f}")

# %% energy over a longer run
traj = integrate_trajectory(dyn, [1.0, 0.0], 0.0, 10.0)
energy = 0.5 * np.sum(traj.states ** 2, axis=1)
print(f"{traj.accepted} steps, max energy drift {np.max(np.abs(energy - 0.5)):.2e}")
