"""P1 finite elements on the unit square with homogeneous Dirichlet conditions.

All states live in the interior-node coefficient space of a uniform
triangulation.  The V-inner product is the Dirichlet (Laplacian) stiffness
matrix ``K``; Riesz lifts of dual vectors are solves with ``K``.
"""

import threading
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla

__all__ = [
    "Grid",
    "DiscreteSpace",
    "SPDFactor",
    "NotSPDError",
    "SolverError",
    "build_grid",
    "build_space",
    "assemble_weighted_stiffness",
    "assemble_load",
    "solve_spd",
    "factorize_spd",
    "riesz_lift",
    "v_inner",
    "v_norm",
    "count_solves",
]

RESIDUAL_TOL = 1e-10


class SolverError(RuntimeError):
    """A linear solve failed to meet its residual contract."""


class NotSPDError(SolverError):
    """The matrix handed to an SPD solver is not positive definite."""


# ---------------------------------------------------------------------------
# solve accounting (used to check the m+3 solve budget of the v-step)

class _SolveCounter:
    def __init__(self):
        self._lock = threading.Lock()
        self.count = 0

    def add(self, n):
        with self._lock:
            self.count += n


_COUNTERS = []
_COUNTERS_LOCK = threading.Lock()


@contextmanager
def count_solves():
    """Count right-hand sides solved by :class:`SPDFactor` inside the block.

    >>> with count_solves() as c:
    ...     pass
    >>> c.count
    0
    """
    counter = _SolveCounter()
    with _COUNTERS_LOCK:
        _COUNTERS.append(counter)
    try:
        yield counter
    finally:
        with _COUNTERS_LOCK:
            _COUNTERS.remove(counter)


def _record_solves(n):
    with _COUNTERS_LOCK:
        counters = list(_COUNTERS)
    for c in counters:
        c.add(n)


# ---------------------------------------------------------------------------
# mesh

@dataclass(frozen=True)
class Grid:
    """Uniform triangulation of the unit square.

    Each square cell is cut along its lower-left/upper-right diagonal, so the
    mesh is invariant under the reflection ``(x, y) -> (1 - y, 1 - x)``.

    Attributes
    ----------
    n_per_side : int
        Number of cells per side (``1/h``).
    nodes : (n_nodes, 2) ndarray
        All node coordinates, index ``i + j*(n+1)`` for node ``(i h, j h)``.
    triangles : (2 n^2, 3) ndarray of int
        Node indices of each triangle, counter-clockwise.
    dof_of_node : (n_nodes,) ndarray of int
        Interior DOF index of each node, ``-1`` on the boundary.
    """

    n_per_side: int
    nodes: np.ndarray = field(repr=False)
    triangles: np.ndarray = field(repr=False)
    dof_of_node: np.ndarray = field(repr=False)

    @property
    def h(self):
        return 1.0 / self.n_per_side

    @property
    def n_dof(self):
        return (self.n_per_side - 1) ** 2

    @property
    def n_elements(self):
        return self.triangles.shape[0]

    @property
    def barycenters(self):
        return self.nodes[self.triangles].mean(axis=1)

    @property
    def areas(self):
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def dof_coordinates(self):
        """Coordinates of the interior nodes in DOF order."""
        interior = np.flatnonzero(self.dof_of_node >= 0)
        order = np.argsort(self.dof_of_node[interior])
        return self.nodes[interior[order]]

    def mirror_permutation(self):
        """DOF permutation of the reflection across ``x + y = 1``.

        ``v[perm]`` is the nodal vector of ``x -> v(1 - y, 1 - x)``.
        """
        n = self.n_per_side
        k = n - 1
        idx = np.arange(self.n_dof)
        i = idx % k + 1
        j = idx // k + 1
        # node (i, j) reflects to (n - j, n - i)
        mi, mj = n - j, n - i
        return (mi - 1) + (mj - 1) * k


def build_grid(n_per_side):
    """Build the uniform P1 triangulation with ``n_per_side`` cells per side.

    ``n_per_side`` must be a power of two and at least 4, so that every
    subdomain boundary at a multiple of 1/4 lies on element edges.
    """
    n = int(n_per_side)
    if n != n_per_side or n < 4 or n & (n - 1):
        raise ValueError(f"n_per_side must be a power of two >= 4, got {n_per_side!r}")
    ticks = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(ticks, ticks, indexing="xy")
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    ii, jj = ii.ravel(), jj.ravel()
    a = ii + jj * (n + 1)
    b = a + 1
    c = a + n + 2
    d = a + n + 1
    lower = np.column_stack([a, b, c])
    upper = np.column_stack([a, c, d])
    # interleave so the two triangles of a cell are adjacent
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    ni = np.arange(n + 1)
    I, J = np.meshgrid(ni, ni, indexing="xy")
    I, J = I.ravel(), J.ravel()
    interior = (I > 0) & (I < n) & (J > 0) & (J < n)
    dof_of_node = np.full(nodes.shape[0], -1, dtype=np.int64)
    dof_of_node[interior] = (I[interior] - 1) + (J[interior] - 1) * (n - 1)
    return Grid(n, nodes, triangles, dof_of_node)


def _element_stiffness(grid):
    """Local P1 stiffness matrices, shape ``(n_elements, 3, 3)``."""
    p = grid.nodes[grid.triangles]
    x, y = p[..., 0], p[..., 1]
    det = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    # gradients of the barycentric coordinates
    gx = np.column_stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]]) / det[:, None]
    gy = np.column_stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]]) / det[:, None]
    area = 0.5 * np.abs(det)
    return area[:, None, None] * (gx[:, :, None] * gx[:, None, :] + gy[:, :, None] * gy[:, None, :])


# ---------------------------------------------------------------------------
# factorizations

class SPDFactor:
    """Sparse symmetric factorization of an SPD matrix.

    Uses SuperLU with a symmetric fill-reducing ordering and no row pivoting,
    which for an SPD matrix is an LDL^T factorization in disguise.  Positive
    pivots are checked so that indefinite matrices are rejected.
    ``method="cg"`` selects Jacobi-preconditioned conjugate gradients.
    """

    def __init__(self, A, method="direct"):
        A = sp.csc_matrix(A)
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"matrix must be square, got {A.shape}")
        self.A = A
        self.n = A.shape[0]
        self._lu = None
        self.method = method
        if self.n == 0:
            return
        if method == "direct":
            try:
                lu = sla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                              options=dict(SymmetricMode=True))
            except RuntimeError as exc:
                raise NotSPDError(f"factorization failed: {exc}") from exc
            if not np.array_equal(lu.perm_r, lu.perm_c) or np.any(lu.U.diagonal() <= 0):
                raise NotSPDError("matrix is not positive definite (non-positive pivot)")
            self._lu = lu
        elif method == "cg":
            diag = A.diagonal()
            if np.any(diag <= 0):
                raise NotSPDError("matrix has non-positive diagonal")
            self._inv_diag = 1.0 / diag
        else:
            raise ValueError(f"unknown method {method!r}")

    def _cg(self, b):
        M = sla.LinearOperator(self.A.shape, matvec=lambda r: self._inv_diag * r)
        atol = min(1e-12, 1e-11 * np.linalg.norm(b))
        x, info = sla.cg(self.A, b, rtol=0.0, atol=atol, maxiter=20 * self.n, M=M)
        if info != 0:
            raise SolverError(f"CG did not converge (info={info})")
        return x

    def solve(self, b):
        """Solve ``A x = b`` for a vector or a matrix of right-hand sides."""
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.n:
            raise ValueError(f"right-hand side has {b.shape[0]} rows, expected {self.n}")
        ncols = 1 if b.ndim == 1 else b.shape[1]
        if ncols == 0 or self.n == 0:
            return np.zeros_like(b)
        _record_solves(ncols)
        if self._lu is not None:
            x = self._lu.solve(b)
        elif b.ndim == 1:
            x = self._cg(b)
        else:
            x = np.column_stack([self._cg(b[:, j]) for j in range(ncols)])
        self._check(x, b)
        return x

    def _check(self, x, b):
        r = self.A @ x - b
        rn = np.linalg.norm(np.atleast_2d(r.T), axis=1)
        bn = np.linalg.norm(np.atleast_2d(b.T), axis=1)
        bad = rn > RESIDUAL_TOL * np.maximum(bn, np.finfo(float).tiny)
        # b == 0 gives x == 0 exactly for the direct path
        if np.any(bad & (bn > 0)):
            raise SolverError(f"relative residual {np.max(rn / np.where(bn > 0, bn, 1)):.3e} "
                              f"exceeds {RESIDUAL_TOL:g}")


def factorize_spd(A, method="direct"):
    return SPDFactor(A, method=method)


def solve_spd(A, b, method="direct"):
    """Solve an SPD system with relative residual at most 1e-10."""
    return SPDFactor(A, method=method).solve(b)


# ---------------------------------------------------------------------------
# discrete space

class DiscreteSpace:
    """The P1 space V_h with its V-inner product ``<u, v> = u . K v``.

    Immutable after construction; the factorization of ``K`` is shared.
    """

    def __init__(self, grid):
        self.grid = grid
        self._ke = _element_stiffness(grid)
        dofs = grid.dof_of_node[grid.triangles]
        rows = np.repeat(dofs, 3, axis=1).reshape(-1, 3, 3)
        cols = np.tile(dofs, 3).reshape(-1, 3, 3)
        keep = (rows >= 0) & (cols >= 0)
        self._keep = keep
        self._rows = rows[keep]
        self._cols = cols[keep]
        self._elem = np.broadcast_to(np.arange(grid.n_elements)[:, None, None], keep.shape)[keep]
        self.K = self.weighted_stiffness(np.ones(grid.n_elements))
        self.K_factor = SPDFactor(self.K)

    @property
    def n_dof(self):
        return self.grid.n_dof

    def weighted_stiffness(self, weights):
        """Assemble ``sum_T w_T int_T grad phi_i . grad phi_j``."""
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (self.grid.n_elements,):
            raise ValueError(f"expected {self.grid.n_elements} element weights, got {weights.shape}")
        data = (self._ke * weights[:, None, None])[self._keep]
        n = self.n_dof
        A = sp.coo_matrix((data, (self._rows, self._cols)), shape=(n, n)).tocsr()
        A.sum_duplicates()
        A.eliminate_zeros()
        return A

    def inner(self, u, v):
        return v_inner(self, u, v)

    def norm(self, u):
        return v_norm(self, u)

    def lift(self, functional):
        return riesz_lift(self, functional)


def build_space(n_per_side):
    return DiscreteSpace(build_grid(n_per_side))


def assemble_weighted_stiffness(space, weights):
    """Stiffness contribution with a per-element scalar weight.

    Parameters
    ----------
    space : DiscreteSpace
    weights : (n_elements,) array_like
        Typically ``c_l`` on the elements whose barycenter lies in a subdomain
        and 0 elsewhere.
    """
    return space.weighted_stiffness(weights)


def assemble_load(space, constant=1.0):
    """Load vector of a constant source: ``constant * int phi_i``."""
    grid = space.grid
    contrib = np.repeat(grid.areas / 3.0, 3)
    dofs = grid.dof_of_node[grid.triangles].ravel()
    keep = dofs >= 0
    f = np.bincount(dofs[keep], weights=contrib[keep], minlength=space.n_dof)
    return float(constant) * f


def riesz_lift(space, functional):
    """Representer ``g`` of a dual vector: ``K g = functional``."""
    return space.K_factor.solve(functional)


def v_inner(space, u, v):
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape[0] != space.n_dof or v.shape[0] != space.n_dof:
        raise ValueError("state dimension does not match the discrete space")
    return u.T @ (space.K @ v)


def v_norm(space, u):
    return float(np.sqrt(max(v_inner(space, u, u), 0.0)))
