import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import restrict_model, with_affine_rhs
from nonlinrom.altmin import (AltMinError, apply_S, apply_T, residual_value, run_altmin, v_step,
                              y_step)
from nonlinrom.estimation import select_state
from nonlinrom.family import fixed_family
from nonlinrom.fem import count_solves, v_norm
from nonlinrom.measurement import build_measurements, measurements_from_layout, project_W
from nonlinrom.model import sample_snapshots, solve_state
from nonlinrom.pbdw import reconstruct
from nonlinrom.reduced_basis import greedy_hierarchy


def _kkt_v_step(model, mspace, w, y):
    """Dense oracle: min ||A v - f||_{K^-1}^2 subject to psi^T K v = w."""
    K = model.space.K.toarray()
    A = model.operator(y).toarray()
    f = model.rhs(y)
    Kinv = np.linalg.inv(K)
    H = A.T @ Kinv @ A
    g = A.T @ Kinv @ f
    C = mspace.psi.T @ K
    m = C.shape[0]
    KKT = np.block([[H, C.T], [C, np.zeros((m, m))]])
    return np.linalg.solve(KKT, np.concatenate([g, w]))[: K.shape[0]]


def _slice_point(mspace, w, rng):
    z = rng.standard_normal(mspace.space.n_dof)
    return mspace.lift(w) + z - mspace.project(z)


def test_T_S_preserve_inner_products(model8, rng):
    K = model8.space.K
    for y in model8.box.sample(rng, 5):
        u, v = rng.standard_normal((2, model8.space.n_dof))
        lhs = apply_T(model8, y, u) @ (K @ apply_S(model8, y, v))
        assert_allclose(lhs, u @ (K @ v), rtol=1e-8)


@pytest.mark.parametrize("affine_rhs", [False, True])
def test_v_step_matches_dense_kkt(model8, mspace8, rng, affine_rhs):
    model = with_affine_rhs(model8) if affine_rhs else model8
    for _ in range(4):
        w = rng.standard_normal(mspace8.m) * 0.05
        y = model.box.sample(rng, 1)[0]
        v = v_step(model, mspace8, w, y)
        ref = _kkt_v_step(model, mspace8, w, y)
        assert np.abs(v - ref).max() <= 1e-6 * np.abs(ref).max()


def test_v_step_feasible_and_minimal(model8, mspace8, rng):
    w = rng.standard_normal(mspace8.m) * 0.05
    y = model8.box.sample(rng, 1)[0]
    v, info = v_step(model8, mspace8, w, y, return_details=True)
    assert np.linalg.norm(project_W(mspace8, v).w - w) <= 1e-8 * (1 + np.linalg.norm(w))
    Rv = residual_value(model8, v, y)
    assert_allclose(info["residual"], Rv, rtol=1e-9)
    for _ in range(10):
        probe = _slice_point(mspace8, w, rng)
        assert Rv <= residual_value(model8, probe, y) + 1e-10


def test_v_step_solve_count(model8, mspace8, rng):
    with count_solves() as c:
        v_step(model8, mspace8, np.zeros(mspace8.m), np.zeros(4))
    assert c.count == mspace8.m + 3


def test_v_step_recovers_exact_state(model8, mspace8, rng):
    y = model8.box.sample(rng, 1)[0]
    u = solve_state(model8, y)
    v = v_step(model8, mspace8, project_W(mspace8, u), y)
    assert v_norm(model8.space, v - u) <= 1e-7 * v_norm(model8.space, u)


def test_v_step_without_measurements(model8, space8):
    empty = measurements_from_layout(space8, {"centers": [], "widths": []})
    y = np.array([0.2, 0.1, -0.4, 0.0])
    assert_allclose(v_step(model8, empty, np.zeros(0), y), solve_state(model8, y), rtol=1e-10)


def test_v_step_rejects_ill_conditioned_gram(model8, space8):
    # two boxes differing by 1e-9 in position give a nearly singular Gram
    base = build_measurements(space8, "random", m=2, box_width=0.25, seed=0)
    import dataclasses
    psi = base.psi.copy()
    psi[:, 1] = psi[:, 0] + 1e-9 * psi[:, 1]
    bad = dataclasses.replace(base, psi=psi)
    with pytest.raises(AltMinError):
        v_step(model8, bad, np.zeros(2), np.zeros(4))


def test_y_step_exact_and_lattice(model8, rng):
    y0 = model8.box.sample(rng, 1)[0]
    y, res = y_step(model8, solve_state(model8, y0))
    assert res <= 1e-10
    model = restrict_model(model8, 2)
    v = solve_state(model, np.array([0.4, -0.6])) + 0.01 * rng.standard_normal(model.space.n_dof)
    y, res = y_step(model, v)
    ticks = np.linspace(-1, 1, 2001)
    best = min(residual_value(model, v, np.array([a, b])) for a in ticks[::40] for b in ticks[::40])
    assert res <= best + 1e-12


@pytest.fixture(scope="module")
def selection_setup(model16, space16):
    mspace = build_measurements(space16, "random", m=8, seed=3)
    train = sample_snapshots(model16, 60, seed=5)
    h = greedy_hierarchy(train, solve_state(model16, np.zeros(4)), mspace.m, mspace)
    fam = fixed_family([h], [model16.box], n_min=1)
    return mspace, fam


def test_altmin_monotone_from_selection(model16, selection_setup, rng):
    mspace, fam = selection_setup
    for y in model16.box.sample(rng, 5):
        u = solve_state(model16, y)
        w = project_W(mspace, u)
        sel = select_state(fam, model16, mspace, w)
        st = run_altmin(model16, mspace, w, sel, max_iters=15)
        h = np.array(st.history)
        assert np.all(np.diff(h) <= 1e-10)
        assert h[-1] <= sel.S[sel.k_star] + 1e-10
        assert np.linalg.norm(project_W(mspace, st.u).w - w.w) <= 1e-8 * (1 + np.linalg.norm(w.w))


def test_altmin_fixed_point(model16, selection_setup, rng):
    mspace, _ = selection_setup
    y0 = np.array([0.1, -0.3, 0.5, 0.2])
    u = solve_state(model16, y0)
    st = run_altmin(model16, mspace, project_W(mspace, u), u, max_iters=10, tol=1e-8)
    assert st.iterations <= 2 and st.residual <= 1e-8
    assert st.stop_reason == "converged"
    doc = json.loads(st.to_json())
    assert len(doc["residuals"]) == st.iterations + 1


def test_altmin_max_iters(model16, selection_setup, rng):
    mspace, fam = selection_setup
    u = solve_state(model16, np.array([0.9, -0.9, 0.9, -0.9]))
    w = project_W(mspace, u)
    u0, _ = reconstruct(fam.cells[0].space, mspace, w)
    st = run_altmin(model16, mspace, w, u0, max_iters=1, tol=0.0)
    assert st.stop_reason == "max_iters" and st.iterations == 1
