"""Dyadic splitting of the parameter box into cells with local reduced spaces.

Every cell ``Y_k`` carries a greedy hierarchy built from the training states
whose parameters fall in the cell, centred at the state of the cell center.
Cells whose test quantity ``tau_k`` is too large are halved along one
coordinate, chosen either by probing all directions or by the cyclic rule.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .model import ParameterBox, solve_state
from .reduced_basis import best_dimension, greedy_hierarchy, level_distances, RBHierarchy

__all__ = ["Cell", "ReducedFamily", "build_family", "split_direction", "cell_members", "make_cell",
           "fixed_family"]

log = logging.getLogger(__name__)


@dataclass(eq=False)
class Cell:
    """One parameter cell with its hierarchy and chosen affine space."""

    id: int
    box: ParameterBox
    level: int
    indices: np.ndarray = field(repr=False)
    hierarchy: RBHierarchy = field(repr=False)
    n_star: int
    tau: float
    parent: int = None
    created: int = 1
    split_at: int = None
    split_dim: int = None
    data_starved: bool = False
    inherited: bool = False
    model_index: int = 0

    @property
    def space(self):
        return self.hierarchy.space(self.n_star, cell=self.id)

    @property
    def mu(self):
        return float(self.hierarchy.mu[self.n_star])

    @property
    def eps(self):
        return float(self.hierarchy.eps[self.n_star])


@dataclass(eq=False)
class ReducedFamily:
    """All cells produced by the splitting, with the split log.

    The family after ``K - 1`` splits is ``family.active(K)``; cells created
    at step ``created`` and split at step ``split_at`` are active for
    ``created <= K < split_at``.
    """

    cells: list
    mode: str = "sigma"
    sigma: float = None
    eps_target: float = None
    mu_target: float = None
    rule: str = "tau_probe"
    K_max: int = 1
    converged: bool = True
    history: list = field(default_factory=list)

    @property
    def K(self):
        return len(self.active())

    def active(self, K=None):
        K = self.n_steps if K is None else K
        if not 1 <= K <= self.n_steps:
            raise ValueError(f"K must be in 1..{self.n_steps}")
        return [c for c in self.cells if c.created <= K and (c.split_at is None or c.split_at > K)]

    @property
    def n_steps(self):
        return max(c.created for c in self.cells)

    def sigma_K(self, K=None):
        """``max_k mu_k eps_k`` over the active cells."""
        return max(_sigma_of(c) for c in self.active(K))

    def locate(self, y, K=None):
        """Active cell containing parameter ``y`` (closed-left/open-right)."""
        y = np.asarray(y, dtype=float)
        root = self.cells[0].box
        for c in self.active(K):
            if _member_mask(y[None, :], c.box, root)[0]:
                return c
        raise ValueError(f"parameter {y} lies in no cell")


def _sigma_of(cell):
    mu = cell.mu
    return float("inf") if not np.isfinite(mu) else mu * cell.eps


def _member_mask(params, box, root):
    upper_ok = (params < box.hi) | ((params <= box.hi) & (box.hi >= root.hi))
    return np.all((params >= box.lo) & upper_ok, axis=1)


def cell_members(params, box, root, candidates=None):
    """Indices of ``params`` in ``box``; upper faces are closed only on ``root``'s boundary."""
    idx = np.arange(params.shape[0]) if candidates is None else np.asarray(candidates)
    if idx.size == 0:
        return idx
    return idx[_member_mask(params[idx], box, root)]


def _tau_of(h, mode, n_min, eps_target, mu_target):
    crit = "sigma" if mode == "sigma" else "eps_mu"
    return best_dimension(h, crit, n_min=n_min, eps_target=eps_target, mu_target=mu_target)


def make_cell(model, training, mspace, box, *, level=0, candidates=None, root=None, m_max=None,
              mode="sigma", n_min=0, eps_target=None, mu_target=None, min_samples=5,
              parent=None, inherit=True, cell_id=-1):
    """Build one cell: training subset, offset ``u(center)``, greedy hierarchy.

    With ``inherit`` the parent's space is kept when it has a smaller test
    quantity on the child's training states than the freshly built hierarchy;
    this makes ``tau`` non-increasing along every split.
    """
    root = box if root is None else root
    m_max = mspace.m if m_max is None else m_max
    idx = cell_members(training.parameters, box, root, candidates)
    offset = solve_state(model, box.center)
    states = training.states[:, idx] if idx.size else offset[:, None]
    h = greedy_hierarchy(states, offset, m_max, mspace)
    n_star, tau = _tau_of(h, mode, n_min, eps_target, mu_target)
    inherited = False
    if inherit and parent is not None and idx.size:
        ph = parent.hierarchy
        dist = level_distances(ph, training.states[:, idx], mspace.space)
        h_inh = RBHierarchy(ph.offset, ph.basis, dist.max(axis=1), ph.mu.copy(), list(ph.picks), idx.size)
        n_inh, tau_inh = _tau_of(h_inh, mode, n_min, eps_target, mu_target)
        if tau_inh < tau:
            h, n_star, tau, inherited = h_inh, n_inh, tau_inh, True
    return Cell(cell_id, box, level, idx, h, n_star, tau,
                parent=None if parent is None else parent.id,
                data_starved=idx.size < min_samples, inherited=inherited)


def split_direction(cell, model, training, mspace, rule="tau_probe", **cell_kw):
    """Coordinate along which to halve ``cell``.

    ``tau_probe`` builds both children for every coordinate and returns the
    one minimising the larger child ``tau`` (ties to the smallest index).
    ``cyclic_mix`` forces coordinate ``(level / 2) mod d`` on even levels and
    probes otherwise.

    Returns
    -------
    i : int
    children : tuple of Cell or None
        The probed children for ``i`` (None when the cyclic rule decided).
    """
    d = cell.box.d
    if rule == "cyclic_mix" and cell.level % 2 == 0:
        return (cell.level // 2) % d, None
    if rule not in ("tau_probe", "cyclic_mix"):
        raise ValueError(f"unknown split rule {rule!r}")
    best = None
    for i in range(d):
        kids = _children(cell, i, model, training, mspace, **cell_kw)
        score = max(kids[0].tau, kids[1].tau)
        if best is None or score < best[0]:
            best = (score, i, kids)
    return best[1], best[2]


def _children(cell, i, model, training, mspace, **cell_kw):
    lower, upper = cell.box.split(i)
    return tuple(make_cell(model, training, mspace, b, level=cell.level + 1, candidates=cell.indices,
                           parent=cell, **cell_kw) for b in (lower, upper))


def build_family(model, training, mspace, mode="sigma", sigma=None, eps_target=None,
                 mu_target=None, K_max=64, rule="tau_probe", n_min=0, m_max=None,
                 min_samples=5, inherit=True):
    """Greedy dyadic splitting of ``model.box``.

    Parameters
    ----------
    mode : {'sigma', 'eps_mu'}
        Admissibility notion.  A cell passes when ``tau_k <= sigma`` (sigma
        mode; ``sigma=None`` means split until ``K_max``) or ``tau_k <= 1``
        (eps_mu mode, needs ``eps_target`` and ``mu_target``).
    K_max : int
        Budget on the number of cells; hitting it with failing cells leaves
        ``converged=False``.
    rule : {'tau_probe', 'cyclic_mix'}
        Split-direction rule, see :func:`split_direction`.

    Notes
    -----
    The cell to split is always the failing cell with the largest ``tau``.
    """
    if len(training) == 0:
        raise ValueError("training set is empty")
    if K_max < 1:
        raise ValueError("K_max must be at least 1")
    if mode == "eps_mu" and not (eps_target and mu_target):
        raise ValueError("eps_mu mode needs eps_target and mu_target")
    if mode not in ("sigma", "eps_mu"):
        raise ValueError(f"unknown mode {mode!r}")
    root_box = model.box
    kw = dict(root=root_box, m_max=m_max, mode=mode, n_min=n_min, eps_target=eps_target,
              mu_target=mu_target, min_samples=min_samples, inherit=inherit)
    root = make_cell(model, training, mspace, root_box, level=0, cell_id=0, **{**kw, "inherit": False})
    cells = [root]
    threshold = (sigma if sigma is not None else 0.0) if mode == "sigma" else 1.0
    history = [{"K": 1, "sigma_K": _sigma_of(root), "max_tau": root.tau, "split_cell": None,
                "split_dim": None}]
    K = 1
    converged = True
    while True:
        active = [c for c in cells if c.split_at is None]
        failing = [c for c in active if c.tau > threshold]
        if not failing:
            break
        if K >= K_max:
            # with no target, exhausting the budget is the intended stop
            converged = sigma is None and mode == "sigma"
            break
        target = max(failing, key=lambda c: (c.tau, -c.id))
        i, kids = split_direction(target, model, training, mspace, rule, **kw)
        if kids is None:
            kids = _children(target, i, model, training, mspace, **kw)
        K += 1
        target.split_at = K
        target.split_dim = int(i)
        for kid in kids:
            kid.id = len(cells)
            kid.created = K
            kid.parent = target.id
            cells.append(kid)
        active = [c for c in cells if c.split_at is None]
        history.append({"K": K, "sigma_K": max(_sigma_of(c) for c in active),
                        "max_tau": max(c.tau for c in active), "split_cell": target.id,
                        "split_dim": int(i)})
        log.debug("split cell %d along %d -> K=%d, sigma_K=%.3e", target.id, i, K, history[-1]["sigma_K"])
    if not converged:
        log.warning("family not admissible after K_max=%d cells", K_max)
    return ReducedFamily(cells, mode, sigma, eps_target, mu_target, rule, K_max, converged, history)


def fixed_family(hierarchies, boxes, n_stars=None, model_indices=None, n_min=0):
    """Family from pre-built hierarchies, one cell per given box (no splitting)."""
    cells = []
    for k, (h, box) in enumerate(zip(hierarchies, boxes)):
        if n_stars is None:
            n, tau = best_dimension(h, "sigma", n_min=n_min)
        else:
            n = n_stars[k]
            tau = float("inf") if not np.isfinite(h.mu[n]) else float(h.mu[n] * h.eps[n])
        cells.append(Cell(k, box, 0, np.arange(h.n_train), h, n, tau,
                          model_index=0 if model_indices is None else model_indices[k]))
    return ReducedFamily(cells, "sigma", None, K_max=len(cells))
