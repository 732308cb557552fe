"""Affine parametric diffusion models ``-div(a(y) grad u) = f`` on the unit square.

The diffusivity is piecewise constant on a fixed partition,
``a(y) = abar + sum_l c_l y_l chi_{D_l}``, so the stiffness matrix is affine
in ``y``: ``A(y) = A_0 + sum_j y_j A_j`` with ``A_0 = abar K``.
"""

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .fem import DiscreteSpace, SPDFactor, assemble_load, build_space

__all__ = [
    "ParameterBox",
    "AffineModel",
    "SnapshotSet",
    "PARTITIONS",
    "partition_membership",
    "build_model",
    "model_from_spec",
    "ellipticity_bounds",
    "solve_state",
    "sample_snapshots",
    "make_rng",
]

# Seeded generator used everywhere a random draw is made.  numpy's PCG64 is
# the stdlib-adjacent choice; the name is written into run metadata.
PRNG_NAME = "numpy.random.PCG64"


def make_rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class ParameterBox:
    """Axis-aligned box ``prod_j [lo_j, hi_j]`` in parameter space."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lo and hi must be 1-d arrays of equal length")
        if np.any(lo >= hi):
            raise ValueError("every interval must satisfy lo < hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def cube(cls, d, lo=-1.0, hi=1.0):
        return cls(np.full(d, lo), np.full(d, hi))

    @property
    def d(self):
        return self.lo.size

    @property
    def center(self):
        return 0.5 * (self.lo + self.hi)

    @property
    def widths(self):
        return self.hi - self.lo

    @property
    def volume(self):
        return float(np.prod(self.widths))

    def contains(self, y, atol=1e-12):
        y = np.asarray(y, dtype=float)
        return bool(np.all(y >= self.lo - atol) and np.all(y <= self.hi + atol))

    def clip(self, y):
        return np.clip(y, self.lo, self.hi)

    def split(self, i):
        """Halve the box along coordinate ``i``; returns ``(lower, upper)``."""
        mid = 0.5 * (self.lo[i] + self.hi[i])
        hi_lower = self.hi.copy()
        hi_lower[i] = mid
        lo_upper = self.lo.copy()
        lo_upper[i] = mid
        return ParameterBox(self.lo.copy(), hi_lower), ParameterBox(lo_upper, self.hi.copy())

    def sample(self, rng, n):
        return self.lo + (self.hi - self.lo) * rng.random((n, self.d))

    def to_dict(self):
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist()}

    @classmethod
    def from_dict(cls, data):
        return cls(np.asarray(data["lo"], float), np.asarray(data["hi"], float))


# ---------------------------------------------------------------------------
# partitions of the unit square

def _grid_cells(k):
    cells = []
    for iy in range(k):
        for ix in range(k):
            cells.append(((ix / k, (ix + 1) / k), (iy / k, (iy + 1) / k)))
    return cells


# ((x0, x1), (y0, y1)) half-open boxes; barycenters never lie on an edge
PARTITIONS = {
    "grid2x2": _grid_cells(2),
    "grid4x4": _grid_cells(4),
    "test1_partition1": [
        ((0.0, 0.75), (0.0, 0.75)),
        ((0.0, 0.75), (0.75, 1.0)),
        ((0.75, 1.0), (0.0, 0.75)),
        ((0.75, 1.0), (0.75, 1.0)),
    ],
    "test1_partition2": [
        ((0.25, 1.0), (0.25, 1.0)),
        ((0.25, 1.0), (0.0, 0.25)),
        ((0.0, 0.25), (0.25, 1.0)),
        ((0.0, 0.25), (0.0, 0.25)),
    ],
}


def partition_membership(grid, partition):
    """Boolean ``(n_elements, d)`` matrix: element ``e`` lies in cell ``l``."""
    try:
        cells = PARTITIONS[partition]
    except KeyError:
        raise ValueError(f"unknown partition {partition!r}; choose from {sorted(PARTITIONS)}") from None
    bc = grid.barycenters
    member = np.zeros((grid.n_elements, len(cells)), dtype=bool)
    for l, ((x0, x1), (y0, y1)) in enumerate(cells):
        member[:, l] = (bc[:, 0] >= x0) & (bc[:, 0] < x1) & (bc[:, 1] >= y0) & (bc[:, 1] < y1)
    return member


# ---------------------------------------------------------------------------
# the model

@dataclass(frozen=True, eq=False)
class AffineModel:
    """Affine family ``A(y) = A_0 + sum y_j A_j``, ``f(y) = f_0 + sum y_j f_j``.

    Attributes
    ----------
    space : DiscreteSpace
    A : list of d+1 sparse matrices
    f : (d+1, n_dof) ndarray
    box : ParameterBox
    abar : float
    c : (d,) ndarray
    partition : str
    membership : (n_elements, d) bool ndarray
    """

    space: DiscreteSpace
    A: list
    f: np.ndarray
    box: ParameterBox
    abar: float
    c: np.ndarray
    partition: str
    membership: np.ndarray = field(repr=False)

    @property
    def d(self):
        return len(self.A) - 1

    def operator(self, y):
        y = np.asarray(y, dtype=float)
        A = self.A[0].copy()
        for yj, Aj in zip(y, self.A[1:]):
            if yj != 0.0:
                A = A + yj * Aj
        return A

    def rhs(self, y):
        y = np.asarray(y, dtype=float)
        return self.f[0] + y @ self.f[1:]

    def diffusivity(self, y):
        """Per-element diffusivity values ``a(y)``."""
        return self.abar + self.membership @ (self.c * np.asarray(y, dtype=float))

    def coefficient_l2_distance(self, y1, y2):
        """``||a(y1) - a(y2)||_{L2(D)}``, exact for piecewise constants."""
        diff = self.diffusivity(y1) - self.diffusivity(y2)
        return float(np.sqrt(np.sum(self.space.grid.areas * diff**2)))

    def check_parameter(self, y):
        y = np.asarray(y, dtype=float)
        if y.shape != (self.d,):
            raise ValueError(f"parameter must have shape ({self.d},), got {y.shape}")
        if not self.box.contains(y):
            raise ValueError(f"parameter {y} lies outside the parameter box")
        return y

    def spec(self):
        """JSON-serializable description sufficient to rebuild the model."""
        return {
            "partition": self.partition,
            "abar": float(self.abar),
            "c": [float(v) for v in self.c],
            "n_per_side": int(self.space.grid.n_per_side),
            "box": self.box.to_dict(),
        }


def build_model(space, partition, abar=1.0, c=0.9, box=None):
    """Build the affine diffusion model on one of the named partitions.

    Parameters
    ----------
    space : DiscreteSpace
    partition : {'grid2x2', 'grid4x4', 'test1_partition1', 'test1_partition2'}
    abar : float
        Mean diffusivity, ``A_0 = abar K``.
    c : float or sequence of float
        Per-cell amplitudes; a scalar is broadcast to every cell.
    box : ParameterBox, optional
        Defaults to ``[-1, 1]^d``.
    """
    member = partition_membership(space.grid, partition)
    d = member.shape[1]
    c = np.broadcast_to(np.asarray(c, dtype=float), (d,)).copy() if np.ndim(c) == 0 else np.asarray(c, float)
    if c.shape != (d,):
        raise ValueError(f"partition {partition!r} has {d} cells but {c.size} amplitudes were given")
    box = ParameterBox.cube(d) if box is None else box
    if box.d != d:
        raise ValueError("parameter box dimension does not match the partition")
    if abar - np.max(np.abs(c) * np.maximum(np.abs(box.lo), np.abs(box.hi))) <= 0:
        warnings.warn("diffusivity is not uniformly positive on the parameter box", RuntimeWarning,
                      stacklevel=2)

    A = [abar * space.K]
    for l in range(d):
        A.append(space.weighted_stiffness(c[l] * member[:, l]))
    f = np.zeros((d + 1, space.n_dof))
    f[0] = assemble_load(space, 1.0)
    return AffineModel(space, A, f, box, float(abar), c, partition, member)


def model_from_spec(spec, space=None):
    if space is None or space.grid.n_per_side != spec["n_per_side"]:
        space = build_space(spec["n_per_side"])
    box = ParameterBox.from_dict(spec["box"]) if "box" in spec else None
    return build_model(space, spec["partition"], spec["abar"], spec["c"], box)


def ellipticity_bounds(model, box=None):
    """Lower and upper bounds ``(r, R)`` of ``a(y)`` over the box.

    For piecewise-constant diffusivities these are the exact operator-norm
    bounds of ``A(y)`` from ``H^1_0`` to its dual.  Raises ``ValueError`` when
    ``r <= 0``.
    """
    box = model.box if box is None else box
    lo_terms = np.minimum(model.c * box.lo, model.c * box.hi)
    hi_terms = np.maximum(model.c * box.lo, model.c * box.hi)
    member = model.membership.astype(float)
    a_min = model.abar + member @ lo_terms
    a_max = model.abar + member @ hi_terms
    r, R = float(a_min.min()), float(a_max.max())
    if r <= 0:
        raise ValueError(f"loss of ellipticity on the parameter box (r = {r:g})")
    return r, R


def solve_state(model, y):
    """Solve ``A(y) u = f(y)``."""
    y = model.check_parameter(y)
    return SPDFactor(model.operator(y)).solve(model.rhs(y))


@dataclass
class SnapshotSet:
    """Parameters ``(N, d)`` and the matching states as columns ``(n_dof, N)``."""

    parameters: np.ndarray
    states: np.ndarray
    seed: object = None

    def __post_init__(self):
        if self.parameters.shape[0] != self.states.shape[1]:
            raise ValueError("parameters and states must have equal lengths")

    def __len__(self):
        return self.parameters.shape[0]

    def subset(self, idx):
        idx = np.asarray(idx)
        return SnapshotSet(self.parameters[idx], self.states[:, idx], self.seed)


def solve_states(model, parameters, threads=1):
    parameters = np.atleast_2d(parameters)
    if threads and threads > 1 and len(parameters) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            cols = list(pool.map(lambda y: solve_state(model, y), parameters))
    else:
        cols = [solve_state(model, y) for y in parameters]
    return np.column_stack(cols) if cols else np.zeros((model.space.n_dof, 0))


def sample_snapshots(model, n, seed, threads=1):
    """Draw ``n`` parameters uniformly on the model box and solve for the states."""
    if n < 1:
        raise ValueError("need at least one snapshot")
    rng = make_rng(seed)
    params = model.box.sample(rng, n)
    return SnapshotSet(params, solve_states(model, params, threads), seed)
