"""Geometric descriptors of periodic structures: cell volume, density and
grid estimates of the void fraction and the largest cavity diameter.

The grid estimators sample the cell at ``n`` points per axis (fractional
coordinates ``i / n``) and measure, for each point, the clearance
``min over atoms of (distance - vdW radius)`` under periodic boundary
conditions. They are simple geometric approximations, labelled ``vf_grid``
and ``lcd_grid`` in reports.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .assembly import AtomStructure
from .elements import atomic_mass, vdw_radius
from .errors import AssemblyError
from .lattice import as_matrix, niggli_reduce

AMU_TO_GRAMS = 1.66054e-24
CUBIC_ANGSTROM_TO_CM3 = 1e-24
MIN_GRID = 8


def unit_cell_volume(L) -> float:
    """``|det L|`` in cubic angstrom."""
    return abs(float(np.linalg.det(as_matrix(L))))


def density(structure: AtomStructure) -> float:
    """Mass density in g/cm^3."""
    if len(structure) == 0:
        raise AssemblyError("density of an empty structure is undefined")
    mass = sum(atomic_mass(z) for z in structure.species)
    return mass * AMU_TO_GRAMS / (unit_cell_volume(structure.lattice) * CUBIC_ANGSTROM_TO_CM3)


def _grid_points(n: int) -> np.ndarray:
    g = np.arange(n) / n
    return np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(-1, 3)


def clearance_grid(structure: AtomStructure, n_per_axis: int = 32, radii=None, chunk: int = 8192):
    """Clearance of every grid point, shape ``(n**3,)``.

    The cell is Niggli reduced first so that the 27 neighbouring images
    contain each point's nearest copy of every atom (assuming radii below
    the shortest cell width, which holds for molecular crystals).
    """
    if n_per_axis < MIN_GRID:
        raise ValueError(f"grid needs at least {MIN_GRID} points per axis")
    L_red, P = niggli_reduce(structure.lattice)
    frac = structure.frac_coords @ np.linalg.inv(P)
    r = np.array([vdw_radius(z, radii) for z in structure.species])
    # grid in the original cell, expressed in reduced fractional coordinates
    pts = _grid_points(n_per_axis) @ structure.lattice @ np.linalg.inv(L_red)
    shifts = np.array(
        [(i, j, k) for i in (-1, 0, 1) for j in (-1, 0, 1) for k in (-1, 0, 1)], dtype=float
    )
    K = shifts @ L_red
    K2 = np.einsum("ij,ij->i", K, K)
    out = np.empty(len(pts))
    for start in range(0, len(pts), chunk):
        p = pts[start : start + chunk]
        d = p[:, None, :] - frac[None, :, :]
        d -= np.round(d)
        base = d @ L_red
        # |b + k|^2 = |b|^2 + 2 b.k + |k|^2
        sq = np.einsum("pak,pak->pa", base, base) + (2.0 * (base @ K.T) + K2).min(axis=-1)
        out[start : start + chunk] = (np.sqrt(np.maximum(sq, 0.0)) - r[None, :]).min(axis=1)
    return out


def void_fraction_grid(structure: AtomStructure, probe_radius: float = 0.0, n_per_axis: int = 32, radii=None) -> float:
    """Fraction of grid points farther than ``r_vdw + probe_radius`` from
    every atom."""
    if probe_radius < 0:
        raise ValueError("probe radius must be non-negative")
    c = clearance_grid(structure, n_per_axis, radii)
    return float(np.mean(c > probe_radius))


def lcd_grid(structure: AtomStructure, n_per_axis: int = 32, radii=None) -> float:
    """Twice the largest grid clearance, floored at zero."""
    return max(0.0, 2.0 * float(clearance_grid(structure, n_per_axis, radii).max()))


@dataclass
class DescriptorReport:
    ucv: float
    density: float
    vf_grid: float
    lcd_grid: float
    grid_resolution: int
    probe_radius: float

    def __post_init__(self):
        if self.ucv <= 0:
            raise ValueError("unit-cell volume must be positive")
        if not 0.0 <= self.vf_grid <= 1.0:
            raise ValueError("void fraction outside [0, 1]")
        if self.lcd_grid < 0:
            raise ValueError("negative cavity diameter")

    def to_dict(self) -> dict:
        return asdict(self)


def describe(structure: AtomStructure, probe_radius: float = 0.0, n_per_axis: int = 32, radii=None) -> DescriptorReport:
    c = clearance_grid(structure, n_per_axis, radii)
    return DescriptorReport(
        ucv=unit_cell_volume(structure.lattice),
        density=density(structure),
        vf_grid=float(np.mean(c > probe_radius)),
        lcd_grid=max(0.0, 2.0 * float(c.max())),
        grid_resolution=n_per_axis,
        probe_radius=probe_radius,
    )
