"""When the vortex-line equations do not define a flow."""

# %%
from vortexforms import VortexDynamics, analyze, check_degree, example4_sigma
from vortexforms.errors import IllPosedError

print("degree test, n = 2..8, p = 1..n-1 (x = accepted):")
for n in range(2, 9):
    row = " ".join("x" if check_degree(n, p).passed else "." for p in range(1, n))
    print(f"  n={n}: {row}")

# %% p dq - H dt on a three-dimensional phase space (q, p, z)
sigma = example4_sigma()
report = analyze(sigma)
print(report.verdict, report.reasons)
w = report.witness
print("witness:", dict(zip(report.names, w.point)), "rank", w.rank, "of", report.n)

# %% the dynamics constructor refuses it
try:
    VortexDynamics(report)
except IllPosedError as exc:
    print("refused:", exc)
