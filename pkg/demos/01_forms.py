"""Differential forms on extended phase space: building, wedging, differentiating."""

# %%
from vortexforms import expr as ex
from vortexforms.expr import SpaceSpec, parse_expression
from vortexforms.exterior import (Form, SpatialVector, compose, decompose, exterior_derivative,
                                  interior_product, wedge)

space = SpaceSpec(("q1", "q2", "p1", "p2"))
print("extended coordinates:", space.names)

# %% the Poincaré-Cartan 1-form for a quartic Hamiltonian
H = parse_expression("(p1^2 + p2^2)/2 + (q1^2 + q2^2)^2/4", space)
sigma = Form(space, 1, {("q1",): ex.Var("p1"), ("q2",): ex.Var("p2"), ("t",): ex.neg(H)})
print("sigma =", sigma)

# %% sigma = dt ∧ s + r with spatial s, r
s_hat, r_hat = decompose(sigma)
print("s =", s_hat)
print("r =", r_hat)
assert compose(s_hat, r_hat) == sigma

# %% d r is the symplectic form; its square is a volume form
omega = exterior_derivative(r_hat, "spatial")
print("d r =", omega)
print("(d r)^2 =", wedge(omega, omega))

# %% contraction with a constant vector field
v = SpatialVector(space, (1.0, 0.0, 0.0, 0.0))
print("i_v d r =", interior_product(v, omega))

# %% d d = 0, checked at a point
dd = exterior_derivative(exterior_derivative(sigma))
print("d d sigma at a point:", dd.evaluate({"t": 0.3, "q1": 0.1, "q2": -0.2, "p1": 0.5, "p2": 0.7}))
