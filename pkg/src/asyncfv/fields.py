"""Coefficient fields for the experiments: fractures, Darcy flow, random media.

All cell fields are plain 1-D arrays of length ``n_cells``; face fields have
length ``n_faces`` and hold the signed velocity component along each face's
unit direction.  Everything here is a pure function of (grid, seed), so
evaluations can run in parallel across seeds.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import spsolve
from scipy.spatial.distance import cdist

from .discretization import harmonic_mean
from .grid import Grid

__all__ = [
    "fracture_walk",
    "solve_darcy",
    "velocity_field",
    "sample_gaussian_field",
    "sample_lognormal_diffusivity",
    "cell_velocity_means",
    "peclet",
    "uniform_face_velocity",
    "langmuir_rate_coefficients",
]


def _require_2d(grid: Grid, what: str) -> None:
    if grid.nz != 1:
        raise ValueError(f"{what} requires a single-layer grid (nz=1), got nz={grid.nz}")


def fracture_walk(grid: Grid, seed: int, y_bias: float,
                  start_ix: int = None, max_attempts: int = 64) -> np.ndarray:
    """Connected cell path from the y=0 edge to the far y edge of a 2-D grid.

    Each step moves to a 4-neighbour: +y with probability ``y_bias``, the
    remaining probability split evenly over the other in-grid moves.
    Deterministic per (seed, attempt); an attempt that exhausts its step
    budget is retried with the next sub-seed, up to ``max_attempts``.
    Returns the sorted cell indices of the visited path.
    """
    _require_2d(grid, "fracture_walk")
    if not (0.0 < y_bias <= 1.0):
        raise ValueError(f"y_bias must be in (0, 1], got {y_bias}")
    nx, ny = grid.nx, grid.ny
    if start_ix is not None and not (0 <= start_ix < nx):
        raise ValueError(f"start_ix {start_ix} outside 0..{nx - 1}")
    budget = 50 * nx * ny
    for attempt in range(max_attempts):
        rng = np.random.default_rng((int(seed), attempt))
        ix = int(rng.integers(nx)) if start_ix is None else int(start_ix)
        iy = 0
        visited = {grid.cell_index(ix, iy)}
        steps = 0
        while iy < ny - 1 and steps < budget:
            steps += 1
            others = []
            if iy > 0:
                others.append((0, -1))
            if ix > 0:
                others.append((-1, 0))
            if ix < nx - 1:
                others.append((1, 0))
            u = rng.random()
            if u < y_bias or not others:
                step = (0, 1)
            else:
                pick = int((u - y_bias) / (1.0 - y_bias) * len(others))
                step = others[min(pick, len(others) - 1)]
            ix += step[0]
            iy += step[1]
            visited.add(grid.cell_index(ix, iy))
        if iy == ny - 1:
            return np.array(sorted(visited), dtype=np.int64)
    raise RuntimeError(
        f"fracture walk failed to reach the far edge in {max_attempts} attempts")


def _tpfa_system(grid: Grid, perm_x, perm_y, p_low: float, p_high: float):
    """Assemble the two-point-flux pressure system with y-edge Dirichlet rows."""
    n = grid.n_cells
    hx, hy, _ = grid.spacing
    j1 = grid.face_cells[:, 0]
    j2 = grid.face_cells[:, 1]
    axis = grid.face_axis
    perm = np.where(axis == 0, harmonic_mean(perm_x[j1], perm_x[j2]),
                    harmonic_mean(perm_y[j1], perm_y[j2]))
    trans = perm * grid.face_area / grid.face_dx

    rows = np.concatenate((j1, j2, j1, j2))
    cols = np.concatenate((j2, j1, j1, j2))
    vals = np.concatenate((-trans, -trans, trans, trans))
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tolil()
    rhs = np.zeros(n)

    # Dirichlet half-cell transmissibilities on the two y edges
    area_y = hx * grid.lengths[2] / grid.nz
    cells = np.arange(n)
    iy = (cells // grid.nx) % grid.ny
    dirichlet = np.zeros(n)
    for edge_iy, p_edge in ((0, p_high), (grid.ny - 1, p_low)):
        on_edge = iy == edge_iy
        t_edge = 2.0 * perm_y[on_edge] * area_y / hy
        dirichlet[on_edge] += t_edge
        rhs[on_edge] += t_edge * p_edge
    mat.setdiag(mat.diagonal() + dirichlet)
    return mat.tocsr(), rhs, trans, dirichlet


def solve_darcy(grid: Grid, perm_x, perm_y, p_low_edge: float, p_high_edge: float) -> np.ndarray:
    """Steady pressure of incompressible Darcy flow on a 2-D grid.

    Dirichlet pressure ``p_high_edge`` on the y=0 edge and ``p_low_edge`` on
    the far y edge, no-flow on the x edges; harmonic-mean face
    permeability.  Regions cut off from both Dirichlet edges by zero
    permeability are pinned to pressure 0 (they carry no flux either way);
    if no cell at all reaches a Dirichlet edge the system is singular and a
    ValueError is raised.  The returned solution satisfies the discrete
    system to a relative residual of 1e-10.
    """
    _require_2d(grid, "solve_darcy")
    perm_x = np.asarray(perm_x, dtype=float)
    perm_y = np.asarray(perm_y, dtype=float)
    n = grid.n_cells
    if perm_x.shape != (n,) or perm_y.shape != (n,):
        raise ValueError("permeability fields must have one value per cell")
    if np.any(perm_x < 0) or np.any(perm_y < 0):
        raise ValueError("permeabilities must be nonnegative")

    mat, rhs, trans, dirichlet = _tpfa_system(grid, perm_x, perm_y,
                                              p_low_edge, p_high_edge)

    # find components with no conducting path to a Dirichlet edge
    live = trans > 0
    j1 = grid.face_cells[live, 0]
    j2 = grid.face_cells[live, 1]
    adj = sp.coo_matrix((np.ones(j1.size), (j1, j2)), shape=(n, n))
    n_comp, labels = connected_components(adj, directed=False)
    anchored = np.zeros(n_comp, dtype=bool)
    for j in np.flatnonzero(dirichlet > 0):
        anchored[labels[j]] = True
    if not anchored.any():
        raise ValueError("singular pressure system: no permeable path to a Dirichlet edge")
    if not anchored.all():
        mat = mat.tolil()
        for comp in np.flatnonzero(~anchored):
            pin = int(np.flatnonzero(labels == comp)[0])
            mat.rows[pin] = [pin]
            mat.data[pin] = [1.0]
            rhs[pin] = 0.0
        mat = mat.tocsr()

    pressure = spsolve(mat, rhs)
    residual = np.linalg.norm(mat @ pressure - rhs)
    scale = max(np.linalg.norm(rhs), 1e-300)
    if residual > 1e-10 * scale:
        raise RuntimeError(f"pressure solve residual {residual / scale:.3e} above 1e-10")
    return pressure


def velocity_field(grid: Grid, pressure, perm_x, perm_y) -> np.ndarray:
    """Per-face Darcy velocity v = -Kbar * dp/dx along each face's unit direction.

    ``Kbar`` is the harmonic mean of the axis-aligned permeabilities of the
    two adjacent cells.
    """
    _require_2d(grid, "velocity_field")
    pressure = np.asarray(pressure, dtype=float)
    perm_x = np.asarray(perm_x, dtype=float)
    perm_y = np.asarray(perm_y, dtype=float)
    if pressure.shape != (grid.n_cells,):
        raise ValueError("pressure must have one value per cell")
    j1 = grid.face_cells[:, 0]
    j2 = grid.face_cells[:, 1]
    kbar = np.where(grid.face_axis == 0, harmonic_mean(perm_x[j1], perm_x[j2]),
                    harmonic_mean(perm_y[j1], perm_y[j2]))
    return -kbar * (pressure[j2] - pressure[j1]) / grid.face_dx


def sample_gaussian_field(grid: Grid, corr_len: float, seed: int) -> np.ndarray:
    """Mean-zero unit-variance Gaussian field with covariance exp(-|X-Y|/l).

    Sampled by applying the dense Cholesky factor of the centroid
    covariance matrix to independent unit normals, so the grid must be of
    desk scale.  Deterministic per seed.  A jitter of 1e-10 is added to the
    diagonal if the factorization fails; failure after that is reported.
    """
    if not (corr_len > 0):
        raise ValueError("corr_len must be positive")
    pts = grid.centroids
    cov = np.exp(-cdist(pts, pts) / corr_len)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        cov[np.diag_indices_from(cov)] += 1e-10
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise RuntimeError(
                "covariance matrix is not positive definite even with jitter") from exc
    rng = np.random.default_rng(seed)
    return chol @ rng.standard_normal(grid.n_cells)


def sample_lognormal_diffusivity(grid: Grid, corr_len: float, seed: int) -> np.ndarray:
    """Strictly positive diffusivity 10**psi with psi a unit Gaussian field."""
    return 10.0 ** sample_gaussian_field(grid, corr_len, seed)


def cell_velocity_means(grid: Grid, face_velocity) -> np.ndarray:
    """Per-cell (J, 3) mean of the adjacent face velocities, axis by axis."""
    face_velocity = np.asarray(face_velocity, dtype=float)
    if face_velocity.shape != (grid.n_faces,):
        raise ValueError("face_velocity must have one value per internal face")
    sums = np.zeros((grid.n_cells, 3))
    counts = np.zeros((grid.n_cells, 3))
    for col in (0, 1):
        cells = grid.face_cells[:, col]
        np.add.at(sums, (cells, grid.face_axis), face_velocity)
        np.add.at(counts, (cells, grid.face_axis), 1.0)
    means = np.zeros_like(sums)
    np.divide(sums, counts, out=means, where=counts > 0)
    return means


def peclet(grid: Grid, diffusivity, face_velocity) -> np.ndarray:
    """Per-cell advection/diffusion strength ratio |v|*h / D (diagnostic only).

    ``v`` is the cell's mean face velocity and ``h`` the cell width along
    the dominant velocity axis; cells with zero diffusivity report +inf.
    """
    diffusivity = np.asarray(diffusivity, dtype=float)
    if diffusivity.shape != (grid.n_cells,):
        raise ValueError("diffusivity must have one value per cell")
    means = cell_velocity_means(grid, face_velocity)
    speed = np.linalg.norm(means, axis=1)
    dominant = np.argmax(np.abs(means), axis=1)
    h = np.asarray(grid.spacing)[dominant]
    out = np.full(grid.n_cells, np.inf)
    np.divide(speed * h, diffusivity, out=out, where=diffusivity > 0)
    return out


def uniform_face_velocity(grid: Grid, velocity) -> np.ndarray:
    """Face values of a constant velocity vector (component along each face's axis)."""
    velocity = np.asarray(velocity, dtype=float)
    if velocity.shape != (3,):
        raise ValueError("velocity must be a 3-vector")
    return velocity[grid.face_axis]


def langmuir_rate_coefficients(diffusivity, strength: float = 0.02) -> np.ndarray:
    """Per-cell sink coefficients strength / D**2 of the saturating reaction."""
    diffusivity = np.asarray(diffusivity, dtype=float)
    if np.any(diffusivity <= 0):
        raise ValueError("reaction coefficients need strictly positive diffusivity")
    return strength / diffusivity**2
