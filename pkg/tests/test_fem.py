import numpy as np
import pytest
import scipy.sparse as sp
from numpy.testing import assert_allclose

from nonlinrom.fem import (NotSPDError, SPDFactor, assemble_load, build_grid, build_space,
                           count_solves, riesz_lift, solve_spd, v_inner, v_norm)


def test_grid_counts():
    g = build_grid(4)
    assert g.n_dof == 9
    assert g.n_elements == 32
    assert_allclose(g.areas.sum(), 1.0)


@pytest.mark.parametrize("n", [3, 6, 0])
def test_grid_rejects_bad_sizes(n):
    with pytest.raises(ValueError):
        build_grid(n)


def test_stiffness_is_five_point_stencil():
    space = build_space(8)
    K = space.K.toarray()
    assert_allclose(np.diag(K), 4.0)
    assert_allclose(K, K.T)
    offdiag = K - np.diag(np.diag(K))
    assert set(np.round(np.unique(offdiag), 12)) <= {-1.0, 0.0}


def test_load_of_constant_is_h_squared():
    space = build_space(4)
    assert_allclose(assemble_load(space, 1.0), 1 / 16)


def test_mesh_convergence_energy():
    # the discrete energy f.u of -Lap u = 1 converges; 32 vs 64 within 1%
    energies = []
    for n in (32, 64):
        space = build_space(n)
        f = assemble_load(space, 1.0)
        energies.append(f @ solve_spd(space.K, f))
    assert abs(energies[0] - energies[1]) / energies[1] < 0.01


def test_direct_and_cg_agree(space16, rng):
    b = rng.standard_normal(space16.n_dof)
    x1 = SPDFactor(space16.K).solve(b)
    x2 = SPDFactor(space16.K, method="cg").solve(b)
    assert_allclose(x1, x2, rtol=0, atol=1e-9 * np.abs(x1).max())


def test_indefinite_matrix_rejected():
    A = sp.diags([1.0, -1.0, 2.0]).tocsc()
    with pytest.raises(NotSPDError):
        SPDFactor(A)


def test_solve_residual_and_multiple_rhs(space8, rng):
    B = rng.standard_normal((space8.n_dof, 3))
    X = space8.K_factor.solve(B)
    assert np.linalg.norm(space8.K @ X - B) <= 1e-10 * np.linalg.norm(B)


def test_count_solves_counts_columns(space8, rng):
    with count_solves() as c:
        space8.K_factor.solve(rng.standard_normal((space8.n_dof, 4)))
        space8.K_factor.solve(rng.standard_normal(space8.n_dof))
    assert c.count == 5


def test_riesz_lift_identity(space8, rng):
    ell = rng.standard_normal(space8.n_dof)
    omega = riesz_lift(space8, ell)
    for _ in range(5):
        v = rng.standard_normal(space8.n_dof)
        assert_allclose(v_inner(space8, omega, v), ell @ v, rtol=1e-10)


def test_v_norm_of_hat_function():
    space = build_space(4)
    e = np.zeros(space.n_dof)
    e[4] = 1.0
    assert_allclose(v_norm(space, e) ** 2, 4.0)


def test_mirror_permutation_preserves_stiffness(space8):
    perm = space8.grid.mirror_permutation()
    K = space8.K.toarray()
    assert_allclose(K[np.ix_(perm, perm)], K)
