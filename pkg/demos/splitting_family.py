"""Split the parameter box until local spaces certify a small error.

The family builder bisects the cell with the worst ``mu * eps`` along the
most useful direction.  The printed log shows ``sigma_K`` shrinking; for a
state drawn afterwards the surrogate selection, the plausible set and the
cell that actually contains the parameter are reported.
"""

import numpy as np

from nonlinrom import (build_family, build_measurements, build_model, build_space, plausible_set,
                       project_W, sample_snapshots, select_state, v_norm)
from nonlinrom.experiments import c_vector

space = build_space(32)
model = build_model(space, "grid2x2", c=c_vector("0.9/l^2", 4))
mspace = build_measurements(space, "evenly_spaced", m=4)
train = sample_snapshots(model, 400, seed=3)
family = build_family(model, train, mspace, K_max=12)
for step in family.history:
    print(f"K = {step['K']:2d}  sigma_K = {step['sigma_K']:.3e}")

test = sample_snapshots(model, 4, seed=4)
cells = family.active()
for y, u in zip(test.parameters, test.states.T):
    sel = select_state(family, model, mspace, project_W(mspace, u))
    ps = plausible_set(family, sel, model)
    true_k = cells.index(family.locate(y))
    err = v_norm(space, u - sel.u_star)
    print(f"selected cell {sel.k_star:2d} (true {true_k:2d}), error {err:.2e} <= sigma_K "
          f"{family.sigma_K():.2e}; plausible set {ps.indices}")
