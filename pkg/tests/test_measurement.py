import numpy as np
import pytest
from numpy.testing import assert_allclose

from nonlinrom.fem import build_space, v_inner, v_norm
from nonlinrom.measurement import (build_measurements, local_average_functional,
                                   measurements_from_layout, observe_noisy, project_W)


def _p1_eval(space, u, pts):
    """Evaluate a P1 function by locating the triangle of each point (brute force)."""
    g = space.grid
    full = np.zeros(g.nodes.shape[0])
    mask = g.dof_of_node >= 0
    full[mask] = u[g.dof_of_node[mask]]
    out = np.empty(len(pts))
    tri = g.nodes[g.triangles]
    for k, p in enumerate(pts):
        for e in range(g.n_elements):
            a, b, c = tri[e]
            T = np.column_stack([b - a, c - a])
            lam = np.linalg.solve(T, p - a)
            if lam.min() >= -1e-12 and lam.sum() <= 1 + 1e-12:
                vals = full[g.triangles[e]]
                out[k] = vals[0] * (1 - lam.sum()) + vals[1] * lam[0] + vals[2] * lam[1]
                break
    return out


def test_local_average_matches_fine_quadrature(rng):
    space = build_space(8)
    u = rng.standard_normal(space.n_dof)
    center, width = np.array([0.41, 0.57]), 0.3
    ell = local_average_functional(space.grid, center, width)
    # midpoint rule on a 60x60 sub-grid; P1 is only piecewise smooth so allow 1e-3
    t = (np.arange(60) + 0.5) / 60
    X, Y = np.meshgrid(center[0] - width / 2 + width * t, center[1] - width / 2 + width * t)
    ref = _p1_eval(space, u, np.column_stack([X.ravel(), Y.ravel()])).mean()
    assert abs(ell @ u - ref) < 2e-3 * np.abs(u).max()


def test_local_average_exact_for_linear_inside():
    # x is linear: its average over an interior box is the center's x-coordinate
    space = build_space(16)
    x = space.grid.dof_coordinates[:, 0]
    ell = local_average_functional(space.grid, (0.33, 0.61), 0.2)
    assert_allclose(ell @ x, 0.33, atol=1e-13)
    assert_allclose(ell.sum(), 1.0, atol=1e-13)


def test_box_outside_rejected(space8):
    with pytest.raises(ValueError):
        local_average_functional(space8.grid, (0.05, 0.5), 0.2)


def test_riesz_identity_and_orthonormality(mspace16, space16, rng):
    V = rng.standard_normal((space16.n_dof, 100))
    assert np.abs(mspace16.omega.T @ (space16.K @ V) - mspace16.ell.T @ V).max() < 1e-9
    gram = mspace16.psi.T @ (space16.K @ mspace16.psi)
    assert np.abs(gram - np.eye(mspace16.m)).max() < 1e-10
    # the two bases span the same space
    res = mspace16.omega - mspace16.psi @ (mspace16.psi.T @ (space16.K @ mspace16.omega))
    assert np.sqrt(np.einsum("ij,ij->j", res, space16.K @ res)).max() < 1e-9
    assert_allclose(mspace16.psi @ np.linalg.inv(mspace16.M), mspace16.omega, atol=1e-10)


def test_single_measurement(space8):
    ms = build_measurements(space8, "random", m=1, box_width=0.25, seed=0)
    n = v_norm(space8, ms.omega[:, 0])
    assert_allclose(ms.psi[:, 0], ms.omega[:, 0] / n)
    assert_allclose(ms.M, [[1 / n]])


def test_evenly_spaced_layout(space16):
    ms = build_measurements(space16, "evenly_spaced", m=4)
    assert_allclose(np.sort(ms.centers[:, 0]), [0.25, 0.25, 0.75, 0.75])
    with pytest.raises(ValueError):
        build_measurements(space16, "evenly_spaced", m=5)


def test_rejections(space8):
    with pytest.raises(ValueError):
        build_measurements(space8, "random", m=50, seed=0)
    layout = {"centers": [[0.5, 0.5], [0.5, 0.5]], "widths": [0.25, 0.25]}
    with pytest.raises(ValueError, match="dependent"):
        measurements_from_layout(space8, layout)


def test_projection_properties(mspace16, space16, rng):
    a, b = rng.standard_normal((2, space16.n_dof))
    Pa, Pb = mspace16.project(a), mspace16.project(b)
    assert_allclose(v_inner(space16, Pa, b), v_inner(space16, a, Pb), rtol=1e-10)
    assert_allclose(mspace16.project(Pa), Pa, atol=1e-10 * np.abs(Pa).max())
    assert_allclose(v_norm(space16, a) ** 2, v_norm(space16, Pa) ** 2 + v_norm(space16, a - Pa) ** 2,
                    rtol=1e-10)
    perp = a - Pa
    assert np.abs(project_W(mspace16, perp).w).max() < 1e-10 * v_norm(space16, a)
    assert_allclose(project_W(mspace16, mspace16.psi[:, 0]).w, np.eye(mspace16.m)[0], atol=1e-10)
    w = project_W(mspace16, a).w
    assert_allclose(project_W(mspace16, mspace16.lift(w)).w, w, atol=1e-10)


def test_noise(mspace16, space16, rng):
    u = rng.standard_normal(space16.n_dof)
    assert_allclose(observe_noisy(mspace16, u, 0.0, seed=1).w, project_W(mspace16, u).w, atol=1e-12)
    o1 = observe_noisy(mspace16, u, 1e-3, seed=1)
    o2 = observe_noisy(mspace16, u, 1e-3, seed=2)
    assert not np.allclose(o1.noise, o2.noise)
    assert np.abs(o1.noise).max() <= 1e-3
    assert o1.eps_noise == mspace16.M_norm * np.linalg.norm(o1.noise)
    # the induced perturbation of P_W u obeys the reported bound
    delta = mspace16.lift(o1.w - project_W(mspace16, u).w)
    assert v_norm(space16, delta) <= o1.eps_noise * (1 + 1e-10)


def test_layout_roundtrip(mspace16, space16):
    again = measurements_from_layout(space16, mspace16.layout())
    assert_allclose(again.psi, mspace16.psi)
