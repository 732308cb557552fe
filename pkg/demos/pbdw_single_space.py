"""Reconstruct a diffusion state from nine local averages with one affine space.

Run with ``python3 demos/pbdw_single_space.py``.  A greedy reduced basis is
trained on snapshots, its dimension is chosen by minimising ``mu_n * eps_n``
and the reconstruction error of fresh states is compared with the
``mu * dist`` guarantee.
"""

import numpy as np

from nonlinrom import (best_dimension, build_measurements, build_model, build_space, greedy_hierarchy,
                       project_W, reconstruct, sample_snapshots, solve_state, v_norm)
from nonlinrom.reduced_basis import dist_to_space

space = build_space(32)
model = build_model(space, "grid2x2", c=0.9)
mspace = build_measurements(space, "evenly_spaced", m=9)
print(f"{space.n_dof} unknowns, {model.d} parameters, {mspace.m} measurements")

train = sample_snapshots(model, 300, seed=1)
h = greedy_hierarchy(train.states, solve_state(model, np.zeros(model.d)), mspace.m, mspace)
print(" n     eps        mu      mu*eps")
for n in range(h.depth + 1):
    print(f"{n:2d}  {h.eps[n]:.3e}  {h.mu[n]:7.3f}  {h.mu[n] * h.eps[n]:.3e}")
n_star, _ = best_dimension(h, "sigma")
rs = h.space(n_star)
print(f"chosen n* = {n_star}")

test = sample_snapshots(model, 5, seed=2)
for y, u in zip(test.parameters, test.states.T):
    u_star, _ = reconstruct(rs, mspace, project_W(mspace, u))
    err = v_norm(space, u - u_star)
    bound = h.mu[n_star] * dist_to_space(rs, u, space)
    print(f"y = {np.array2string(y, precision=2)}  error {err:.3e}  <=  mu*dist {bound:.3e}")
