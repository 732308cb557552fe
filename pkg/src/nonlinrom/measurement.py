"""Local-average measurements, the measurement space W and observations."""

from dataclasses import dataclass, field

import numpy as np

from .model import make_rng

__all__ = [
    "MeasurementSpace",
    "Observation",
    "local_average_functional",
    "build_measurements",
    "measurements_from_layout",
    "project_W",
    "observe",
    "observe_noisy",
]

GRAM_COND_MAX = 1e12


def _clip_polygon(poly, axis, value, keep_below):
    """One Sutherland-Hodgman pass against the half-plane x[axis] <= value (or >=)."""
    out = []
    n = len(poly)
    for k in range(n):
        p, q = poly[k], poly[(k + 1) % n]
        p_in = p[axis] <= value if keep_below else p[axis] >= value
        q_in = q[axis] <= value if keep_below else q[axis] >= value
        if p_in:
            out.append(p)
        if p_in != q_in:
            t = (value - p[axis]) / (q[axis] - p[axis])
            out.append(p + t * (q - p))
    return out


def _polygon_area_centroid(poly):
    P = np.asarray(poly)
    x, y = P[:, 0], P[:, 1]
    xs, ys = np.roll(x, -1), np.roll(y, -1)
    cross = x * ys - xs * y
    area = 0.5 * cross.sum()
    if abs(area) < 1e-300:
        return 0.0, P.mean(axis=0)
    cx = ((x + xs) * cross).sum() / (6 * area)
    cy = ((y + ys) * cross).sum() / (6 * area)
    return abs(area), np.array([cx, cy])


def local_average_functional(grid, center, width):
    """Dual vector of ``u -> |B|^-1 int_B u`` for the square ``B``.

    The box is intersected exactly with every triangle; a linear function
    integrates to ``area * value(centroid)`` on each convex piece, so the
    quadrature is exact for P1 functions wherever the box sits.
    """
    cx, cy = center
    half = 0.5 * width
    x0, x1, y0, y1 = cx - half, cx + half, cy - half, cy + half
    if x0 < -1e-14 or y0 < -1e-14 or x1 > 1 + 1e-14 or y1 > 1 + 1e-14:
        raise ValueError(f"box centered at {center} with width {width} leaves the unit square")
    tri_pts = grid.nodes[grid.triangles]
    tmin = tri_pts.min(axis=1)
    tmax = tri_pts.max(axis=1)
    hit = np.flatnonzero((tmax[:, 0] > x0) & (tmin[:, 0] < x1) & (tmax[:, 1] > y0) & (tmin[:, 1] < y1))
    ell = np.zeros(grid.n_dof)
    for e in hit:
        pts = tri_pts[e]
        poly = [p for p in pts]
        for axis, value, below in ((0, x0, False), (0, x1, True), (1, y0, False), (1, y1, True)):
            poly = _clip_polygon(poly, axis, value, below)
            if len(poly) < 3:
                break
        if len(poly) < 3:
            continue
        area, cen = _polygon_area_centroid(poly)
        if area == 0.0:
            continue
        # barycentric coordinates of the centroid in triangle e
        T = np.array([[1.0, 1.0, 1.0], pts[:, 0], pts[:, 1]])
        lam = np.linalg.solve(T, np.array([1.0, cen[0], cen[1]]))
        dofs = grid.dof_of_node[grid.triangles[e]]
        for k in range(3):
            if dofs[k] >= 0:
                ell[dofs[k]] += area * lam[k]
    return ell / (width * width)


@dataclass(frozen=True, eq=False)
class MeasurementSpace:
    """Measurement functionals and an orthonormal basis of W.

    Attributes
    ----------
    space : DiscreteSpace
    centers : (m, 2) ndarray
    widths : (m,) ndarray
    ell : (n_dof, m) ndarray
        Dual vectors of the functionals, one per column.
    omega : (n_dof, m) ndarray
        Riesz representers ``K^-1 ell``.
    psi : (n_dof, m) ndarray
        V-orthonormal basis of W with ``psi = omega @ M``.
    M : (m, m) ndarray
        Upper-triangular transform from representers to ``psi``.
    """

    space: object = field(repr=False)
    centers: np.ndarray
    widths: np.ndarray
    ell: np.ndarray = field(repr=False)
    omega: np.ndarray = field(repr=False)
    psi: np.ndarray = field(repr=False)
    M: np.ndarray = field(repr=False)
    placement: str = "custom"
    seed: object = None

    @property
    def m(self):
        return self.psi.shape[1]

    @property
    def M_norm(self):
        return float(np.linalg.norm(self.M, 2)) if self.m else 0.0

    def measure(self, u):
        """Raw measurements ``z_i = ell_i(u)``."""
        return self.ell.T @ u

    def lift(self, w):
        """The element ``sum_j w_j psi_j`` of W."""
        return self.psi @ np.asarray(w, dtype=float)

    def coords(self, u):
        """Coordinates ``<psi_j, u>_V``."""
        return self.psi.T @ (self.space.K @ u)

    def project(self, u):
        return self.lift(self.coords(u))

    def layout(self):
        return {
            "placement": self.placement,
            "seed": self.seed,
            "n_per_side": int(self.space.grid.n_per_side),
            "centers": self.centers.tolist(),
            "widths": self.widths.tolist(),
        }


@dataclass
class Observation:
    """Coordinates ``w`` of an element of W in the ``psi`` basis."""

    w: np.ndarray
    z: np.ndarray = None
    noise: np.ndarray = None
    eps_noise: float = 0.0

    def to_dict(self):
        out = {"w": np.asarray(self.w).tolist(), "eps_noise": float(self.eps_noise)}
        if self.z is not None:
            out["z"] = np.asarray(self.z).tolist()
        if self.noise is not None:
            out["noise"] = np.asarray(self.noise).tolist()
        return out


def _orthonormalize(space, omega):
    """Modified Gram-Schmidt in the V-inner product, two passes.

    Returns ``psi`` and upper-triangular ``R`` with ``omega = psi @ R``.
    """
    n, m = omega.shape
    K = space.K
    psi = np.zeros((n, m))
    R = np.zeros((m, m))
    for j in range(m):
        v = omega[:, j].copy()
        for _ in range(2):
            for i in range(j):
                coef = psi[:, i] @ (K @ v)
                R[i, j] += coef
                v -= coef * psi[:, i]
        nv = np.sqrt(max(v @ (K @ v), 0.0))
        if nv == 0.0:
            raise ValueError(f"measurement functional {j} is linearly dependent on the previous ones")
        R[j, j] = nv
        psi[:, j] = v / nv
    return psi, R


def _assemble(space, centers, widths, placement, seed):
    centers = np.asarray(centers, dtype=float).reshape(-1, 2)
    widths = np.broadcast_to(np.asarray(widths, dtype=float), (centers.shape[0],)).copy()
    m = centers.shape[0]
    if m > space.n_dof:
        raise ValueError(f"m = {m} exceeds the number of degrees of freedom {space.n_dof}")
    ell = np.zeros((space.n_dof, m))
    for i in range(m):
        ell[:, i] = local_average_functional(space.grid, centers[i], widths[i])
    omega = space.K_factor.solve(ell) if m else np.zeros((space.n_dof, 0))
    if m:
        gram = omega.T @ ell
        s = np.linalg.svd(gram, compute_uv=False)
        if s[-1] <= 0 or s[0] / s[-1] > GRAM_COND_MAX:
            raise ValueError("measurement functionals are (numerically) linearly dependent: "
                             f"Gram condition number {s[0] / max(s[-1], 1e-300):.3e} > {GRAM_COND_MAX:g}")
        psi, R = _orthonormalize(space, omega)
        M = np.linalg.solve(R, np.eye(m))
        M = np.triu(M)
    else:
        psi = np.zeros((space.n_dof, 0))
        M = np.zeros((0, 0))
    return MeasurementSpace(space, centers, widths, ell, omega, psi, M, placement, seed)


def build_measurements(space, placement="random", m=8, box_width=None, seed=0):
    """Build ``m`` local-average measurements.

    Parameters
    ----------
    placement : {'random', 'evenly_spaced'}
        ``random`` draws centers uniformly so that each box lies inside the
        unit square; ``evenly_spaced`` needs ``m = k^2`` and centers the boxes
        on the midpoints of a ``k x k`` grid.
    box_width : float, optional
        Defaults to ``2h``.
    seed : int
        Used by ``random`` placement only.
    """
    width = 2.0 * space.grid.h if box_width is None else float(box_width)
    if not 0 < width <= 1:
        raise ValueError("box width must be in (0, 1]")
    if placement == "random":
        rng = make_rng(seed)
        centers = 0.5 * width + (1.0 - width) * rng.random((m, 2))
    elif placement == "evenly_spaced":
        k = int(round(np.sqrt(m)))
        if k * k != m:
            raise ValueError(f"evenly spaced placement needs a square m, got {m}")
        ticks = (np.arange(k) + 0.5) / k
        X, Y = np.meshgrid(ticks, ticks, indexing="xy")
        centers = np.column_stack([X.ravel(), Y.ravel()])
        seed = None
    else:
        raise ValueError(f"unknown placement {placement!r}")
    return _assemble(space, centers, width, placement, seed)


def measurements_from_layout(space, layout):
    return _assemble(space, layout["centers"], layout["widths"], layout.get("placement", "custom"),
                     layout.get("seed"))


def project_W(mspace, u):
    """Observation ``w = P_W u`` in the ``psi`` coordinates."""
    return Observation(mspace.coords(u))


observe = project_W


def observe_noisy(mspace, u, noise_level, seed):
    """Observe ``z = ell(u) + eta`` with ``eta`` uniform on ``[-level, level]^m``.

    The reported ``eps_noise = ||M|| ||eta||_2`` bounds the V-norm of the
    induced perturbation of ``P_W u``.
    """
    if noise_level < 0:
        raise ValueError("noise level must be non-negative")
    rng = make_rng(seed)
    eta = noise_level * (2.0 * rng.random(mspace.m) - 1.0) if noise_level > 0 else np.zeros(mspace.m)
    z = mspace.measure(u) + eta
    w = mspace.M.T @ z
    return Observation(w, z=z, noise=eta, eps_noise=mspace.M_norm * float(np.linalg.norm(eta)))
