"""One-space PBDW reconstruction for an affine reduced space."""

import numpy as np

from .reduced_basis import cross_gramian

__all__ = ["PBDWError", "reconstruct", "observation_vector"]

NEAR_SINGULAR = 1e-10


class PBDWError(ValueError):
    """The cross-Gramian is too ill-conditioned for a stable reconstruction."""

    def __init__(self, message, mu=None):
        super().__init__(message)
        self.mu = mu


def observation_vector(w):
    return np.asarray(getattr(w, "w", w), dtype=float)


def reconstruct(rs, mspace, w):
    """PBDW estimate from the affine space ``rs`` and data ``w``.

    Minimises the distance to ``rs`` over all states whose projection onto W
    equals ``w``.  The minimiser splits as ``u* = v* + eta`` with ``v*`` in
    ``rs`` (fitted to the data by least squares through the cross-Gramian)
    and ``eta`` in W correcting the remaining data misfit.

    Returns
    -------
    u_star, v_star : ndarray
    """
    w = observation_vector(w)
    if w.shape != (mspace.m,):
        raise ValueError(f"observation has {w.size} entries, expected {mspace.m}")
    space = mspace.space
    K = space.K
    w_offset = mspace.psi.T @ (K @ rs.offset)
    v_star = rs.offset.copy()
    if rs.n:
        if rs.n > mspace.m:
            raise PBDWError("dim V_n exceeds dim W", mu=float("inf"))
        G = cross_gramian(space, rs.basis, mspace)  # (n, m)
        s = np.linalg.svd(G, compute_uv=False)
        # singular values of orthonormal bases lie in [0, 1]; scale by 1 so n = 1 is covered
        if s[-1] < NEAR_SINGULAR * max(s[0], 1.0):
            mu = float("inf") if s[-1] == 0 else 1.0 / s[-1]
            raise PBDWError(f"cross-Gramian is near singular (mu = {mu:.3e}); use a smaller n", mu=mu)
        c, *_ = np.linalg.lstsq(G.T, w - w_offset, rcond=None)
        v_star = v_star + rs.basis @ c
    misfit = w - mspace.psi.T @ (K @ v_star)
    return v_star + mspace.psi @ misfit, v_star
