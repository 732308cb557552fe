"""Greedy reduced bases, affine reduced spaces and their stability constants."""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "AffineReducedSpace",
    "RBHierarchy",
    "greedy_hierarchy",
    "stability_mu",
    "cross_gramian",
    "dist_to_space",
    "level_distances",
    "best_dimension",
]

EXHAUSTED_TOL = 1e-12
MU_SINGULAR_TOL = 1e-14


def cross_gramian(space, basis, mspace):
    """``G[i, j] = <phi_i, psi_j>_V``, shape ``(n, m)``."""
    return basis.T @ (space.K @ mspace.psi)


def stability_mu(basis, mspace):
    """Inf-sup stability ``mu(V_n, W) = max_{v in V_n} ||v|| / ||P_W v||``.

    Computed as the inverse of the smallest singular value of the cross-Gramian
    between V-orthonormal bases.  Returns 1 for the zero space and ``inf`` when
    the smallest singular value drops below 1e-14.
    """
    basis = np.asarray(basis, dtype=float).reshape(mspace.space.n_dof, -1)
    n = basis.shape[1]
    if n == 0:
        return 1.0
    if n > mspace.m:
        raise ValueError(f"dim V_n = {n} exceeds dim W = {mspace.m}; mu is infinite")
    s = np.linalg.svd(cross_gramian(mspace.space, basis, mspace), compute_uv=False)
    smin = s[-1]
    return float("inf") if smin < MU_SINGULAR_TOL else float(1.0 / smin)


@dataclass(eq=False)
class AffineReducedSpace:
    """Affine space ``offset + span(basis)`` with accuracy and stability data.

    ``eps`` is the maximum training-set distance to the space (an empirical
    stand-in for a certified bound); ``mu`` is ``mu(span(basis), W)``.
    """

    offset: np.ndarray = field(repr=False)
    basis: np.ndarray = field(repr=False)
    eps: float = 0.0
    mu: float = 1.0
    provenance: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.basis.shape[1]

    @property
    def sigma(self):
        return _product(self.mu, self.eps)


@dataclass(eq=False)
class RBHierarchy:
    """Nested greedy spaces ``V_0 ⊂ V_1 ⊂ ... ⊂ V_depth`` around one offset.

    ``eps[n]`` and ``mu[n]`` refer to the first ``n`` basis vectors.
    """

    offset: np.ndarray = field(repr=False)
    basis: np.ndarray = field(repr=False)
    eps: np.ndarray
    mu: np.ndarray
    picks: list = field(default_factory=list)
    n_train: int = 0

    @property
    def depth(self):
        return self.basis.shape[1]

    def space(self, n, **provenance):
        if not 0 <= n <= self.depth:
            raise ValueError(f"level {n} outside 0..{self.depth}")
        prov = {"level": int(n), "picks": [int(p) for p in self.picks[:n]]}
        prov.update(provenance)
        return AffineReducedSpace(self.offset, self.basis[:, :n].copy(), float(self.eps[n]),
                                  float(self.mu[n]), prov)


def _K_orthonormalize(K, v, basis):
    for _ in range(2):
        if basis.shape[1]:
            v = v - basis @ (basis.T @ (K @ v))
    return v


def greedy_hierarchy(states, offset, m_max, mspace=None, space=None):
    """Greedy reduced basis for the centred training states.

    Parameters
    ----------
    states : (n_dof, N) ndarray or SnapshotSet
        Training states.
    offset : (n_dof,) ndarray
        Offset ``ubar``; the greedy runs on ``states - ubar``.
    m_max : int
        Maximal dimension (at most ``dim W`` when ``mspace`` is given).
    mspace : MeasurementSpace, optional
        When given, ``mu[n]`` is filled in; otherwise it is ``nan``.
    space : DiscreteSpace, optional
        Needed only when ``mspace`` is not given.

    Notes
    -----
    Step ``n`` picks the state furthest from the current space (ties to the
    lowest index).  Construction stops early once the largest residual is
    below 1e-12, so ``depth`` may be smaller than ``m_max``.
    """
    U = getattr(states, "states", states)
    space = mspace.space if mspace is not None else space
    if space is None:
        raise ValueError("either mspace or space is required")
    if mspace is not None and m_max > mspace.m:
        raise ValueError(f"m_max = {m_max} exceeds dim W = {mspace.m}")
    K = space.K
    offset = np.asarray(offset, dtype=float)
    R = np.asarray(U, dtype=float) - offset[:, None]
    N = R.shape[1]
    KR = K @ R
    norms2 = np.maximum(np.einsum("ij,ij->j", R, KR), 0.0)
    eps = [float(np.sqrt(norms2.max())) if N else 0.0]
    basis = np.zeros((space.n_dof, 0))
    picks = []
    for _ in range(m_max):
        if N == 0 or eps[-1] < EXHAUSTED_TOL:
            break
        j = int(np.argmax(norms2))
        phi = _K_orthonormalize(K, R[:, j].copy(), basis)
        nphi = np.sqrt(max(phi @ (K @ phi), 0.0))
        if nphi < EXHAUSTED_TOL:
            break
        phi /= nphi
        Kphi = K @ phi
        coef = Kphi @ R
        R -= np.outer(phi, coef)
        KR -= np.outer(Kphi, coef)
        norms2 = np.maximum(np.einsum("ij,ij->j", R, KR), 0.0)
        basis = np.column_stack([basis, phi])
        picks.append(j)
        eps.append(float(np.sqrt(norms2.max())))
    eps = np.asarray(eps)
    if mspace is not None:
        G = cross_gramian(space, basis, mspace)
        mu = [1.0]
        for n in range(1, basis.shape[1] + 1):
            smin = np.linalg.svd(G[:n], compute_uv=False)[-1]
            mu.append(float("inf") if smin < MU_SINGULAR_TOL else 1.0 / smin)
        mu = np.asarray(mu)
    else:
        mu = np.full(eps.shape, np.nan)
    return RBHierarchy(offset, basis, eps, mu, picks, N)


def dist_to_space(rs, u, space):
    """V-distance from ``u`` to the affine space ``rs``."""
    r = np.asarray(u, dtype=float) - rs.offset
    if rs.n:
        r = r - rs.basis @ (rs.basis.T @ (space.K @ r))
    return float(np.sqrt(max(r @ (space.K @ r), 0.0)))


def level_distances(hierarchy, states, space):
    """Distances of each state to every level, shape ``(depth + 1, N)``."""
    R = np.asarray(states, dtype=float) - hierarchy.offset[:, None]
    KR = space.K @ R
    total = np.einsum("ij,ij->j", R, KR)
    coef = hierarchy.basis.T @ KR
    cum = np.vstack([np.zeros(R.shape[1]), np.cumsum(coef**2, axis=0)])
    return np.sqrt(np.maximum(total[None, :] - cum, 0.0))


def _product(mu, eps):
    if not np.isfinite(mu):
        return float("inf")
    return float(mu * eps)


def best_dimension(h, criterion="sigma", n_min=0, eps_target=None, mu_target=None):
    """Level minimising the test quantity of a hierarchy.

    Parameters
    ----------
    h : RBHierarchy
    criterion : {'sigma', 'eps_mu'}
        ``sigma`` minimises ``mu_n eps_n``; ``eps_mu`` minimises
        ``max(mu_n / mu_target, eps_n / eps_target)``.
    n_min : int
        Smallest admissible level (1 reproduces the fixed-partition driver).

    Returns
    -------
    n_star : int
    tau : float
    """
    levels = range(min(n_min, h.depth), h.depth + 1)
    if criterion == "sigma":
        vals = [_product(h.mu[n], h.eps[n]) for n in levels]
    elif criterion == "eps_mu":
        if not eps_target or not mu_target:
            raise ValueError("eps_mu criterion needs eps_target > 0 and mu_target >= 1")
        vals = [float("inf") if not np.isfinite(h.mu[n])
                else max(h.mu[n] / mu_target, h.eps[n] / eps_target) for n in levels]
    else:
        raise ValueError(f"unknown criterion {criterion!r}")
    k = int(np.argmin(vals))  # first minimum, i.e. the smaller n
    return levels[k], float(vals[k])
