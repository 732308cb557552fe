"""Model selection among local PBDW estimators, plausible sets, parameter estimates."""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .fem import v_norm
from .model import ellipticity_bounds, solve_state
from .pbdw import PBDWError, reconstruct
from .residual import build_quadratic, minimize_box

__all__ = [
    "CellEstimate",
    "SelectionResult",
    "PlausibleSet",
    "evaluate_cell",
    "select_state",
    "oracle_select",
    "plausible_set",
    "estimate_parameter",
]

log = logging.getLogger(__name__)


def _model_for(models, cell):
    if isinstance(models, (list, tuple)):
        return models[cell.model_index]
    return models


@dataclass(eq=False)
class CellEstimate:
    k: int
    cell_id: int
    u_star: np.ndarray = field(repr=False)
    S: float
    y: np.ndarray
    sigma: float
    certified: bool = True
    error: float = None


@dataclass(eq=False)
class SelectionResult:
    """Per-cell estimates and the surrogate choice.

    ``k_star`` is the position of the chosen cell among the active cells;
    cells whose reconstruction failed are listed in ``excluded`` and have no
    record.
    """

    records: list
    k_star: int
    excluded: list = field(default_factory=list)

    @property
    def best(self):
        return next(r for r in self.records if r.k == self.k_star)

    @property
    def u_star(self):
        return self.best.u_star

    @property
    def y_star(self):
        return self.best.y

    @property
    def S(self):
        return np.array([r.S for r in self.records])

    @property
    def cell_ids(self):
        return [r.cell_id for r in self.records]

    def to_dict(self, include_states=False):
        out = {
            "k_star": int(self.k_star),
            "cell_star": int(self.best.cell_id),
            "y_star": self.y_star.tolist(),
            "excluded": [int(k) for k in self.excluded],
            "cells": [],
        }
        for r in self.records:
            row = {"k": r.k, "cell_id": r.cell_id, "S": r.S, "y": r.y.tolist(), "sigma": r.sigma,
                   "certified": r.certified}
            if r.error is not None:
                row["error"] = r.error
            if include_states:
                row["u_star"] = r.u_star.tolist()
            out["cells"].append(row)
        return out


def evaluate_cell(cell, model, mspace, w, global_Y=False, truth=None, tol=1e-10, k=0):
    """Reconstruction ``u*_k`` of one cell and its surrogate distance ``S_k``."""
    u_k, _ = reconstruct(cell.space, mspace, w)
    res = minimize_box(build_quadratic(model, u_k), model.box if global_Y else cell.box, tol=tol)
    err = None if truth is None else v_norm(mspace.space, truth - u_k)
    sigma = cell.mu * cell.eps if np.isfinite(cell.mu) else float("inf")
    return CellEstimate(k, cell.id, u_k, float(np.sqrt(res.value)), res.y, sigma, res.certified, err)


def select_state(family, models, mspace, w, K=None, global_Y=False, truth=None, tol=1e-10,
                 cache=None):
    """Surrogate-based selection of the local PBDW estimate.

    Parameters
    ----------
    family : ReducedFamily
    models : AffineModel or list of AffineModel
        A list is indexed by each cell's ``model_index``.
    w : Observation or array
    K : int, optional
        Use the family after ``K - 1`` splits (default: final family).
    global_Y : bool
        Minimise the residual over the whole model box instead of the cell.
    truth : array, optional
        True state; fills in per-cell errors for diagnostics.
    cache : dict, optional
        Per-cell results keyed by cell id, filled on the way.  Reusing it for
        several ``K`` with the same ``w`` avoids recomputing cells that stay
        active.
    """
    cells = family.active(K)
    records, excluded = [], []
    for k, cell in enumerate(cells):
        if cache is not None and cell.id in cache:
            est = cache[cell.id]
        else:
            try:
                est = evaluate_cell(cell, _model_for(models, cell), mspace, w, global_Y, truth, tol)
            except PBDWError as exc:
                log.warning("cell %d excluded from selection: %s", cell.id, exc)
                est = exc
            if cache is not None:
                cache[cell.id] = est
        if isinstance(est, Exception):
            excluded.append(k)
            continue
        records.append(replace(est, k=k))
    if not records:
        raise PBDWError("no cell produced a reconstruction")
    S = np.array([r.S for r in records])
    return SelectionResult(records, records[int(np.argmin(S))].k, excluded)


def oracle_select(family, mspace, w, truth, K=None, selection=None):
    """Index (into the active cells) of the estimate closest to ``truth``."""
    space = mspace.space
    if selection is None:
        ks, estimates = [], []
        for k, c in enumerate(family.active(K)):
            try:
                estimates.append(reconstruct(c.space, mspace, w)[0])
                ks.append(k)
            except PBDWError:
                continue
    else:
        ks = [r.k for r in selection.records]
        estimates = [r.u_star for r in selection.records]
    errors = [v_norm(space, truth - u) for u in estimates]
    return ks[int(np.argmin(errors))]


@dataclass
class PlausibleSet:
    """Cells whose estimate passes ``S_k <= R mu_k eps_k``.

    ``ellipsoids`` lists ``(k, u_star_k, mu_k eps_k)`` for the members.
    """

    indices: list
    ellipsoids: list = field(repr=False, default_factory=list)

    def __contains__(self, k):
        return k in self.indices

    def __len__(self):
        return len(self.indices)


def plausible_set(family, selection, models, K=None):
    cells = family.active(K)
    members, ellipsoids = [], []
    for r in selection.records:
        cell = cells[r.k]
        _, R = ellipticity_bounds(_model_for(models, cell))
        if r.S <= R * r.sigma:
            members.append(r.k)
            ellipsoids.append((r.k, r.u_star, r.sigma))
    return PlausibleSet(members, ellipsoids)


def estimate_parameter(model, u_star, box=None, tol=1e-10, diagnostics=False, y_true=None):
    """Parameter minimising the residual of ``u_star`` over ``box``.

    Returns ``(y_star, residual)`` with ``residual`` the unsquared residual
    norm; with ``diagnostics=True`` a third item reports
    ``||u_star - u(y_star)||`` against its bound ``residual / r`` and, if
    ``y_true`` is given, the L2 distance between the diffusivity fields.
    """
    box = model.box if box is None else box
    q = build_quadratic(model, u_star)
    res = minimize_box(q, box, tol=tol)
    y_star = res.y
    residual = float(np.sqrt(res.value))
    if not diagnostics:
        return y_star, residual
    r, _ = ellipticity_bounds(model, box)
    diag = {
        "state_gap": v_norm(model.space, u_star - solve_state(model, y_star)),
        "state_gap_bound": residual / r,
        "certified": res.certified,
    }
    if y_true is not None:
        diag["coefficient_l2_error"] = model.coefficient_l2_distance(y_true, y_star)
    return y_star, residual, diag
