"""Uniform Cartesian finite-volume grids: cells, internal faces, adjacency.

Cell fields are 1-D arrays of length ``n_cells``; face fields are 1-D arrays
of length ``n_faces``.  Cells are indexed x-fastest,

    j = ix + nx * (iy + ny * iz),

and internal faces are indexed as three sweeps (all x-normal faces, then
y-normal, then z-normal), each sweep x-fastest.  Boundary faces are never
materialized: the domain boundary is zero-flux, so no event can occur there.
Construction is deterministic; identical inputs give identical indexings.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FaceGeom:
    """Geometry of one internal face, oriented from cell j1 to cell j2."""

    j1: int
    j2: int
    area: float
    dx: float
    unit_dir: np.ndarray  # unit vector from centroid of j1 to centroid of j2


@dataclass
class Grid:
    """Cell/face topology of a uniform Cartesian grid.

    Immutable after construction; safe for concurrent reads.
    """

    nx: int
    ny: int
    nz: int
    lengths: tuple  # (lx, ly, lz) in m
    spacing: tuple  # (hx, hy, hz) in m
    cell_volumes: np.ndarray  # (J,) m^3
    centroids: np.ndarray     # (J, 3) m
    face_cells: np.ndarray    # (K, 2) int64, [j1, j2] with j1 < j2
    face_area: np.ndarray     # (K,) m^2
    face_dx: np.ndarray       # (K,) centroid distance, m
    face_axis: np.ndarray     # (K,) int8; 0, 1, 2 for x, y, z normals
    cell_faces: list          # j -> sorted int64 array of face ids
    assoc_faces: list         # k -> sorted int64 array: faces of both adjacent cells

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny * self.nz

    @property
    def n_faces(self) -> int:
        return len(self.face_area)

    @property
    def domain_volume(self) -> float:
        lx, ly, lz = self.lengths
        return lx * ly * lz

    def cell_index(self, ix: int, iy: int, iz: int = 0) -> int:
        if not (0 <= ix < self.nx and 0 <= iy < self.ny and 0 <= iz < self.nz):
            raise ValueError(f"cell ({ix},{iy},{iz}) outside {self.nx}x{self.ny}x{self.nz} grid")
        return ix + self.nx * (iy + self.ny * iz)

    def cell_coords(self, j: int) -> tuple:
        if not (0 <= j < self.n_cells):
            raise ValueError(f"cell index {j} out of range")
        ix = j % self.nx
        iy = (j // self.nx) % self.ny
        iz = j // (self.nx * self.ny)
        return ix, iy, iz

    def cell_containing(self, x: float, y: float, z: float = None) -> int:
        """Cell whose box contains the physical point (points on upper edges clamp inward)."""
        hx, hy, hz = self.spacing
        if z is None:
            z = 0.5 * self.lengths[2]
        ix = min(max(int(x / hx), 0), self.nx - 1)
        iy = min(max(int(y / hy), 0), self.ny - 1)
        iz = min(max(int(z / hz), 0), self.nz - 1)
        return self.cell_index(ix, iy, iz)


_AXIS_UNIT = np.eye(3)


def build_cartesian_grid(nx: int, ny: int, nz: int, lx: float, ly: float, lz: float) -> Grid:
    """Build a uniform nx x ny x nz grid over a box of side lengths lx, ly, lz."""
    for name, n in (("nx", nx), ("ny", ny), ("nz", nz)):
        if int(n) != n or n < 1:
            raise ValueError(f"{name} must be a positive integer, got {n}")
    for name, length in (("lx", lx), ("ly", ly), ("lz", lz)):
        if not (length > 0):
            raise ValueError(f"{name} must be positive, got {length}")
    nx, ny, nz = int(nx), int(ny), int(nz)
    hx, hy, hz = lx / nx, ly / ny, lz / nz
    n_cells = nx * ny * nz

    iz, iy, ix = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij")
    ix, iy, iz = ix.ravel(), iy.ravel(), iz.ravel()
    centroids = np.column_stack(((ix + 0.5) * hx, (iy + 0.5) * hy, (iz + 0.5) * hz))
    cell_volumes = np.full(n_cells, hx * hy * hz)

    j1_parts, areas, dxs, axes = [], [], [], []
    strides = (1, nx, nx * ny)
    face_areas_by_axis = (hy * hz, hx * hz, hx * hy)
    spacings = (hx, hy, hz)
    for axis in range(3):
        shape = [nz, ny, nx]
        shape[2 - axis] -= 1  # one fewer cell pair along the face-normal axis
        if shape[2 - axis] == 0:
            continue
        zz, yy, xx = np.meshgrid(
            np.arange(shape[0]), np.arange(shape[1]), np.arange(shape[2]), indexing="ij"
        )
        j1 = xx.ravel() + nx * (yy.ravel() + ny * zz.ravel())
        j1_parts.append((j1, strides[axis]))
        n_k = j1.size
        areas.append(np.full(n_k, face_areas_by_axis[axis]))
        dxs.append(np.full(n_k, spacings[axis]))
        axes.append(np.full(n_k, axis, dtype=np.int8))

    if j1_parts:
        face_j1 = np.concatenate([p[0] for p in j1_parts]).astype(np.int64)
        face_j2 = np.concatenate([p[0] + p[1] for p in j1_parts]).astype(np.int64)
        face_area = np.concatenate(areas)
        face_dx = np.concatenate(dxs)
        face_axis = np.concatenate(axes)
    else:
        face_j1 = np.zeros(0, dtype=np.int64)
        face_j2 = np.zeros(0, dtype=np.int64)
        face_area = np.zeros(0)
        face_dx = np.zeros(0)
        face_axis = np.zeros(0, dtype=np.int8)
    face_cells = np.column_stack((face_j1, face_j2))
    n_faces = face_cells.shape[0]

    # cell -> faces, sorted by face id (stable, deterministic)
    touch_cell = np.concatenate((face_j1, face_j2))
    touch_face = np.tile(np.arange(n_faces, dtype=np.int64), 2)
    order = np.argsort(touch_cell * max(n_faces, 1) + touch_face)
    sorted_cells = touch_cell[order]
    sorted_faces = touch_face[order]
    split_at = np.searchsorted(sorted_cells, np.arange(1, n_cells))
    cell_faces = [seg.copy() for seg in np.split(sorted_faces, split_at)]

    assoc_faces = [
        np.union1d(cell_faces[face_j1[k]], cell_faces[face_j2[k]]) for k in range(n_faces)
    ]

    return Grid(
        nx=nx, ny=ny, nz=nz,
        lengths=(lx, ly, lz), spacing=(hx, hy, hz),
        cell_volumes=cell_volumes, centroids=centroids,
        face_cells=face_cells, face_area=face_area, face_dx=face_dx, face_axis=face_axis,
        cell_faces=cell_faces, assoc_faces=assoc_faces,
    )


def _check_face_index(grid: Grid, k: int) -> int:
    k = int(k)
    if not (0 <= k < grid.n_faces):
        raise ValueError(f"face index {k} is not an internal face (0..{grid.n_faces - 1})")
    return k


def associated_faces(grid: Grid, k: int) -> np.ndarray:
    """All faces of the two cells adjacent to face k, including k itself."""
    k = _check_face_index(grid, k)
    return grid.assoc_faces[k].copy()


def face_geometry(grid: Grid, k: int) -> FaceGeom:
    """Stored geometry of internal face k."""
    k = _check_face_index(grid, k)
    j1, j2 = grid.face_cells[k]
    return FaceGeom(
        j1=int(j1), j2=int(j2),
        area=float(grid.face_area[k]), dx=float(grid.face_dx[k]),
        unit_dir=_AXIS_UNIT[grid.face_axis[k]].copy(),
    )
