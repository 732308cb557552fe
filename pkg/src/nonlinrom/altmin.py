"""Alternating residual minimisation over data-consistent states and parameters.

The objective is ``R(v, y) = ||A(y) v - f(y)||_{V'}`` over ``v`` with
``P_W v = w`` and ``y`` in the parameter box.  The y-step is a box QP.  The
v-step maps the affine slice ``w + W^perp`` through ``T = K^-1 A(y)``, which
sends ``W^perp`` onto the K-orthogonal complement of ``S(W)`` with
``S = A(y)^-1 K``; the constrained problem then reduces to one projection
onto the m-dimensional space ``S(W)``.
"""

import json
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .fem import SPDFactor, SolverError
from .measurement import GRAM_COND_MAX
from .pbdw import observation_vector
from .residual import build_quadratic, minimize_box

__all__ = [
    "AltMinError",
    "AltMinState",
    "apply_T",
    "apply_S",
    "y_step",
    "v_step",
    "residual_value",
    "run_altmin",
]


class AltMinError(RuntimeError):
    pass


def apply_T(model, y, u):
    """``T u = K^-1 A(y) u``."""
    return model.space.K_factor.solve(model.operator(y) @ u)


def apply_S(model, y, v):
    """``S v = A(y)^-1 K v``."""
    return SPDFactor(model.operator(y)).solve(model.space.K @ v)


def residual_value(model, v, y):
    """``||A(y) v - f(y)||_{V'}`` by one solve with K."""
    r = model.operator(y) @ v - model.rhs(y)
    e = model.space.K_factor.solve(r)
    return float(np.sqrt(max(r @ e, 0.0)))


def y_step(model, u, y0=None, tol=1e-10):
    """Best parameter for state ``u``; returns ``(y, residual)``.

    A warm start ``y0`` guarantees the residual does not exceed ``R(u, y0)``.
    """
    res = minimize_box(build_quadratic(model, u), model.box, tol=tol, y0=y0)
    return res.y, float(np.sqrt(res.value))


def v_step(model, mspace, w, y, return_details=False):
    """Minimiser of ``R(., y)`` over the states with ``P_W v = w``.

    Uses exactly ``m + 3`` SPD solves: two with K (for ``T w`` and the Riesz
    lift of ``f(y)``), ``m`` with ``A(y)`` for ``S psi_i`` and one with
    ``A(y)`` to map ``z*`` back.

    Returns
    -------
    v : ndarray
    details : dict, only with ``return_details``
        ``residual`` (= ``R(v, y)``, free), ``SW`` (the transformed basis) and
        ``gram_cond``.
    """
    w = observation_vector(w)
    space = mspace.space
    K = space.K
    if w.shape != (mspace.m,):
        raise ValueError(f"observation has {w.size} entries, expected {mspace.m}")
    A = model.operator(y)
    A_fac = SPDFactor(A)
    w_lift = mspace.psi @ w
    Tw = space.K_factor.solve(A @ w_lift)
    g = space.K_factor.solve(model.rhs(y))
    gap = g - Tw
    gram_cond = 1.0
    if mspace.m:
        SW = A_fac.solve(K @ mspace.psi)
        KSW = K @ SW
        G = SW.T @ KSW
        G = 0.5 * (G + G.T)
        ev = np.linalg.eigvalsh(G)
        gram_cond = float("inf") if ev[0] <= 0 else float(ev[-1] / ev[0])
        if gram_cond > GRAM_COND_MAX:
            raise AltMinError(f"Gram matrix of S(W) is ill-conditioned (cond = {gram_cond:.3e})")
        coef = sla.cho_solve(sla.cho_factor(G), KSW.T @ gap)
        z = g - SW @ coef
    else:
        SW = np.zeros((space.n_dof, 0))
        z = g
    v = A_fac.solve(K @ z)
    if not return_details:
        return v
    d = z - g
    return v, {"residual": float(np.sqrt(max(d @ (K @ d), 0.0))), "SW": SW, "gram_cond": gram_cond}


@dataclass(eq=False)
class AltMinState:
    """Iterate, residual history and stopping information of :func:`run_altmin`.

    ``history[k]`` is ``R(u^k, y^k)`` after the k-th full sweep (entry 0 is
    the starting pair).
    """

    u: np.ndarray = field(repr=False)
    y: np.ndarray
    history: list
    iterations: int = 0
    stop_reason: str = ""
    timings: list = field(default_factory=list)
    SW: np.ndarray = field(default=None, repr=False)
    error: str = None

    @property
    def residual(self):
        return self.history[-1]

    def to_dict(self):
        return {
            "y": self.y.tolist(),
            "residuals": list(self.history),
            "iterations": self.iterations,
            "stop_reason": self.stop_reason,
            "timings": list(self.timings),
            "error": self.error,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


def run_altmin(model, mspace, w, init, y0=None, max_iters=50, tol=1e-8):
    """Alternate exact y- and v-minimisations of the residual.

    Parameters
    ----------
    init : SelectionResult or ndarray
        Starting state ``u^0`` (its data should match ``w``); a selection
        result supplies its estimate and parameter.
    y0 : ndarray, optional
        Warm start for the first y-step.
    tol : float
        Stop once a sweep lowers the residual by less than
        ``tol * (1 + residual)``.
    """
    if hasattr(init, "u_star"):
        u, y0 = np.array(init.u_star, dtype=float), (init.y_star if y0 is None else y0)
    else:
        u = np.array(init, dtype=float)
    t0 = time.perf_counter()
    y, res = y_step(model, u, y0)
    state = AltMinState(u, y, [res], timings=[time.perf_counter() - t0])
    for it in range(1, max_iters + 1):
        t0 = time.perf_counter()
        try:
            v, info = v_step(model, mspace, w, y, return_details=True)
        except (AltMinError, SolverError, np.linalg.LinAlgError) as exc:  # keep partial history
            state.stop_reason, state.error = "v_step_failed", str(exc)
            return state
        y_new, res_new = y_step(model, v, y0=y)
        decrease = state.history[-1] - res_new
        state.u, state.y, state.SW = v, y_new, info["SW"]
        y = y_new
        state.history.append(res_new)
        state.timings.append(time.perf_counter() - t0)
        state.iterations = it
        if decrease < tol * (1.0 + res_new):
            state.stop_reason = "converged"
            return state
    state.stop_reason = "max_iters"
    return state
