"""Finite-volume geometry for a radial disk or a rectangle.

Both grids are described by the same face list (``left``, ``right``,
``area``, ``dist``) over interior faces, so the operators never branch on
geometry except to pick a linear solver.  Boundary faces carry no flux and
are not stored in the list.

Radial cells are genuine annuli, so volume-weighted sums report true 2-D
integrals over the disk.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Sequence, Tuple

import numpy as np

from .model import DomainSpec, RadialDisk, Rectangle

MIN_CELLS = 4


class ShapeError(ValueError):
    """A field does not conform to the grid it is used with."""


@dataclass(frozen=True, eq=False)
class Grid:
    domain: DomainSpec
    shape: Tuple[int, ...]
    volumes: np.ndarray
    left: np.ndarray
    right: np.ndarray
    face_area: np.ndarray
    face_dist: np.ndarray
    coords: Tuple[np.ndarray, ...]
    # radial only: areas of all n+1 cell boundaries, r=0 first
    edge_areas: np.ndarray = field(default=None)

    @property
    def radial(self) -> bool:
        return isinstance(self.domain, RadialDisk)

    @property
    def size(self) -> int:
        return int(self.volumes.size)

    @property
    def h(self) -> float:
        """Largest cell spacing."""
        return float(self.face_dist.max())

    @property
    def area(self) -> float:
        return self.domain.area()

    @property
    def transmissibility(self) -> np.ndarray:
        return self.face_area / self.face_dist

    def check(self, f, name: str = "field") -> np.ndarray:
        arr = np.asarray(f, dtype=float)
        if arr.shape != (self.size,):
            raise ShapeError(f"{name} has shape {arr.shape}, grid expects ({self.size},)")
        return arr

    def distance_from(self, point: Sequence[float] = (0.0, 0.0)) -> np.ndarray:
        """Euclidean distance from ``point`` to every cell center."""
        if self.radial:
            if any(abs(c) > 0 for c in point):
                raise ValueError("radial grids only support distances from the disk center")
            return self.coords[0].copy()
        x, y = self.coords
        return np.hypot(x - point[0], y - point[1])


def build_radial_grid(R: float, n: int) -> Grid:
    """Annular cells ``[i h, (i+1) h)`` on the disk of radius ``R``."""
    if int(n) != n or n < MIN_CELLS:
        raise ValueError(f"radial grid needs n >= {MIN_CELLS} cells, got {n}")
    n = int(n)
    domain = RadialDisk(R)
    h = R / n
    edges = h * np.arange(n + 1)
    edges[-1] = R
    volumes = math.pi * (edges[1:] ** 2 - edges[:-1] ** 2)
    centers = (np.arange(n) + 0.5) * h
    edge_areas = 2.0 * math.pi * edges
    idx = np.arange(n - 1)
    return Grid(
        domain=domain,
        shape=(n,),
        volumes=volumes,
        left=idx,
        right=idx + 1,
        face_area=edge_areas[1:-1].copy(),
        face_dist=np.full(n - 1, h),
        coords=(centers,),
        edge_areas=edge_areas,
    )


def build_rect_grid(Lx: float, Ly: float, nx: int, ny: int) -> Grid:
    """Uniform tensor grid on ``[0, Lx] x [0, Ly]``; cell ``(i, j)`` has index ``i*ny + j``."""
    for label, k in (("nx", nx), ("ny", ny)):
        if int(k) != k or k < MIN_CELLS:
            raise ValueError(f"rectangular grid needs {label} >= {MIN_CELLS}, got {k}")
    nx, ny = int(nx), int(ny)
    domain = Rectangle(Lx, Ly)
    hx, hy = Lx / nx, Ly / ny
    index = np.arange(nx * ny).reshape(nx, ny)
    # faces normal to x, then faces normal to y
    left = np.concatenate([index[:-1, :].ravel(), index[:, :-1].ravel()])
    right = np.concatenate([index[1:, :].ravel(), index[:, 1:].ravel()])
    n_xfaces = (nx - 1) * ny
    n_yfaces = nx * (ny - 1)
    face_area = np.concatenate([np.full(n_xfaces, hy), np.full(n_yfaces, hx)])
    face_dist = np.concatenate([np.full(n_xfaces, hx), np.full(n_yfaces, hy)])
    xc = (np.arange(nx) + 0.5) * hx
    yc = (np.arange(ny) + 0.5) * hy
    X, Y = np.meshgrid(xc, yc, indexing="ij")
    return Grid(
        domain=domain,
        shape=(nx, ny),
        volumes=np.full(nx * ny, hx * hy),
        left=left,
        right=right,
        face_area=face_area,
        face_dist=face_dist,
        coords=(X.ravel(), Y.ravel()),
    )


def build_grid(domain: DomainSpec, resolution: Sequence[int]) -> Grid:
    if isinstance(domain, RadialDisk):
        (n,) = resolution
        return build_radial_grid(domain.R, n)
    nx, ny = resolution
    return build_rect_grid(domain.Lx, domain.Ly, nx, ny)


def integrate(f, g: Grid) -> float:
    """Midpoint quadrature ``sum_i f_i V_i``."""
    return float(np.dot(g.check(f), g.volumes))


def norms(f, g: Grid) -> Tuple[float, float, float]:
    """Discrete ``(L1, L2, Linf)`` norms of a cell field."""
    arr = g.check(f)
    a = np.abs(arr)
    return float(a @ g.volumes), float(math.sqrt(arr**2 @ g.volumes)), float(a.max(initial=0.0))


def coordinate_columns(g: Grid) -> Dict[str, np.ndarray]:
    if g.radial:
        return {"r": g.coords[0]}
    return {"x": g.coords[0], "y": g.coords[1]}


def write_fields_csv(path, g: Grid, **fields) -> None:
    """One row per cell: index, center coordinates, then each named field."""
    cols = coordinate_columns(g)
    arrays = {name: g.check(values, name) for name, values in fields.items()}
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", *cols, *arrays])
        for i in range(g.size):
            writer.writerow(
                [i, *(repr(float(c[i])) for c in cols.values()),
                 *(repr(float(a[i])) for a in arrays.values())]
            )


def read_fields_csv(path, g: Grid) -> Dict[str, np.ndarray]:
    """Inverse of :func:`write_fields_csv`; checks the row count against ``g``."""
    with open(Path(path), newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
        names = [c for c in reader.fieldnames if c not in ("index", "r", "x", "y")]
    if len(rows) != g.size:
        raise ShapeError(f"{path}: {len(rows)} rows, grid has {g.size} cells")
    rows.sort(key=lambda row: int(row["index"]))
    return {name: np.array([float(row[name]) for row in rows]) for name in names}
