"""PDE-residual quadratic forms and the residual distance surrogate.

For affine models the squared dual-norm residual
``||A(y) v - f(y)||^2_{V'} = ||e_0 + sum_j y_j e_j||^2_V`` with lifts
``e_j = K^-1 (A_j v - f_j)`` is a convex quadratic ``y^T Q y + 2 b^T y + c``.
Minimising it over a parameter box gives the surrogate distance of ``v`` to
the corresponding portion of the solution manifold.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ResidualQuadratic",
    "BoxQPResult",
    "build_quadratic",
    "eval_residual",
    "residual_norm",
    "minimize_box",
    "surrogate_S",
]


@dataclass(eq=False)
class ResidualQuadratic:
    """``R(y) = y^T Q y + 2 b^T y + c`` with the lifts ``e_0..e_d`` kept around."""

    Q: np.ndarray
    b: np.ndarray
    c: float
    lifts: np.ndarray = field(default=None, repr=False)
    duals: np.ndarray = field(default=None, repr=False)

    @property
    def d(self):
        return self.b.size

    def __call__(self, y):
        return eval_residual(self, y)

    def gradient(self, y):
        return 2.0 * (self.Q @ np.asarray(y, dtype=float) + self.b)

    def direct(self, y):
        """Squared residual from the stored lifts, free of expansion cancellation."""
        coef = np.concatenate([[1.0], np.asarray(y, dtype=float)])
        return float(max((self.duals @ coef) @ (self.lifts @ coef), 0.0))


def build_quadratic(model, v):
    """Assemble the residual quadratic of state ``v`` (``d + 1`` solves with K)."""
    v = np.asarray(v, dtype=float)
    space = model.space
    if v.shape != (space.n_dof,):
        raise ValueError("state does not belong to the model's space")
    duals = np.column_stack([Aj @ v - fj for Aj, fj in zip(model.A, model.f)])
    lifts = space.K_factor.solve(duals)
    gram = duals.T @ lifts
    gram = 0.5 * (gram + gram.T)
    return ResidualQuadratic(gram[1:, 1:].copy(), gram[0, 1:].copy(), float(gram[0, 0]), lifts, duals)


def eval_residual(q, y):
    """Squared residual at ``y``; vectorised over leading axes of ``y``."""
    y = np.asarray(y, dtype=float)
    return np.einsum("...i,ij,...j->...", y, q.Q, y) + 2.0 * (y @ q.b) + q.c


def residual_norm(q, y):
    return float(np.sqrt(max(eval_residual(q, y), 0.0)))


@dataclass
class BoxQPResult:
    y: np.ndarray
    value: float
    optimality: float
    iterations: int
    certified: bool


def _optimality(q, y, lo, hi, L):
    g = q.gradient(y)
    return float(np.max(np.abs(y - np.clip(y - g / L, lo, hi)))) if y.size else 0.0


def minimize_box(q, cell, tol=1e-10, y0=None, max_iter=None):
    """Minimise the residual quadratic over a parameter box.

    Cyclic coordinate descent with exact, box-clipped one-dimensional steps.
    Starts at the box center unless ``y0`` is given (any warm start can only
    lower the value).  Stops once the projected-gradient measure
    ``||y - clip(y - grad/L)||_inf`` is at most ``tol``, with ``L`` the
    Lipschitz constant of the gradient.

    Returns
    -------
    BoxQPResult
        ``certified`` is False when the iteration cap ``10 * d * 1000``
        coordinate updates was reached first.
    """
    lo, hi = cell.lo, cell.hi
    d = q.d
    y = cell.center.copy() if y0 is None else cell.clip(np.asarray(y0, dtype=float)).copy()
    if d == 0:
        return BoxQPResult(y, float(max(eval_residual(q, y), 0.0)), 0.0, 0, True)
    Q, b = q.Q, q.b
    L = 2.0 * float(np.linalg.eigvalsh(Q)[-1])
    if L <= 0.0:
        # Q == 0: the residual is constant in y
        return BoxQPResult(y, float(max(eval_residual(q, y), 0.0)), 0.0, 0, True)
    diag = np.diag(Q).copy()
    active = diag > 1e-14 * L
    max_iter = 10 * d * 1000 if max_iter is None else max_iter
    Qy = Q @ y
    it = 0
    opt = _optimality(q, y, lo, hi, L)
    while opt > tol and it < max_iter:
        for i in range(d):
            if not active[i]:
                continue
            # minimise over y_i with the others frozen
            target = y[i] - (Qy[i] + b[i]) / diag[i]
            new = min(max(target, lo[i]), hi[i])
            delta = new - y[i]
            if delta != 0.0:
                Qy += delta * Q[:, i]
                y[i] = new
        it += d
        opt = _optimality(q, y, lo, hi, L)
    value = q.direct(y) if q.lifts is not None else float(max(eval_residual(q, y), 0.0))
    return BoxQPResult(y, value, opt, it, opt <= tol)


def surrogate_S(model, v, cell=None, tol=1e-10, q=None, return_minimizer=False):
    """Residual surrogate distance of ``v`` to the manifold portion over ``cell``.

    The value is the square root of the minimised squared residual, so that
    ``r dist(v, M_cell) <= S <= R dist(v, M_cell)``.  Pass a prebuilt ``q`` to
    reuse the lifts of ``v`` across cells.
    """
    cell = model.box if cell is None else cell
    q = build_quadratic(model, v) if q is None else q
    res = minimize_box(q, cell, tol=tol)
    S = float(np.sqrt(res.value))
    return (S, res) if return_minimizer else S
