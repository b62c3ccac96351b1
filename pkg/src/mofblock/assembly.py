"""Reconstruct atom-level unit cells from block-level predictions and split
labeled cells back into blocks and poses."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .elements import SYMBOLS, atomic_number
from .errors import AssemblyError, LatticeError
from .frames import BlockPose, BuildingBlock, extract_local_frame
from .lattice import (
    LatticeParams,
    as_matrix,
    cart_to_frac,
    matrix_to_params,
    min_image_vectors,
    niggli_reduce,
    params_to_matrix,
    wrap_frac,
)
from .rotations import euler_to_matrix, matrix_to_euler


@dataclass
class AtomStructure:
    species: tuple
    frac_coords: np.ndarray
    lattice: np.ndarray

    def __post_init__(self):
        self.species = tuple(atomic_number(z) for z in self.species)
        coords = np.asarray(self.frac_coords, dtype=float).reshape(-1, 3)
        if len(coords) != len(self.species):
            raise AssemblyError(f"{len(self.species)} species for {len(coords)} sites")
        if not np.all(np.isfinite(coords)):
            raise AssemblyError("non-finite fractional coordinates")
        self.frac_coords = wrap_frac(coords)
        self.lattice = as_matrix(self.lattice)
        if np.linalg.det(self.lattice) <= 0:
            raise LatticeError("structure lattice must be right-handed (det > 0)")

    def __len__(self):
        return len(self.species)

    @property
    def cart_coords(self) -> np.ndarray:
        return self.frac_coords @ self.lattice

    @property
    def volume(self) -> float:
        return abs(float(np.linalg.det(self.lattice)))

    def to_dict(self) -> dict:
        return {
            "species": [SYMBOLS[z] for z in self.species],
            "frac_coords": self.frac_coords.tolist(),
            "lattice": self.lattice.tolist(),
        }

    @classmethod
    def from_dict(cls, d) -> "AtomStructure":
        lattice = d["lattice"]
        if isinstance(lattice, dict) or np.asarray(lattice, dtype=float).shape == (6,):
            lattice = params_to_matrix(LatticeParams.coerce(lattice))
        return cls(d["species"], d["frac_coords"], lattice)


@dataclass
class AssemblySpec:
    lattice: LatticeParams
    blocks: list
    poses: list

    def __post_init__(self):
        self.lattice = LatticeParams.coerce(self.lattice)
        if len(self.blocks) != len(self.poses):
            raise AssemblyError(
                f"{len(self.blocks)} blocks but {len(self.poses)} poses"
            )
        if not self.blocks:
            raise AssemblyError("an assembly needs at least one block")


def assemble(spec: AssemblySpec) -> AtomStructure:
    """Place each rigid block at its pose; atoms keep block order."""
    L = params_to_matrix(spec.lattice)
    parts, species = [], []
    for block, pose in zip(spec.blocks, spec.poses):
        R = euler_to_matrix(pose.euler)
        center = np.asarray(pose.translation, dtype=float) @ L
        parts.append(np.asarray(block.local_coords, dtype=float) @ R.T + center)
        species.extend(block.species)
    cart = np.concatenate(parts, axis=0)
    return AtomStructure(species, wrap_frac(cart_to_frac(cart, L)), L)


def standard_orientation(structure: AtomStructure) -> AtomStructure:
    """Same cell re-expressed with ``params_to_matrix`` axes."""
    L = params_to_matrix(matrix_to_params(structure.lattice))
    return AtomStructure(structure.species, structure.frac_coords, L)


def niggli_standardize(structure: AtomStructure) -> AtomStructure:
    """Re-express a structure in its Niggli-reduced cell (standard axes)."""
    L_red, P = niggli_reduce(structure.lattice)
    frac = structure.frac_coords @ np.linalg.inv(P)
    return standard_orientation(AtomStructure(structure.species, frac, L_red))


def _check_partition(partition, n: int):
    seen = np.zeros(n, dtype=int)
    for group in partition:
        if len(group) == 0:
            raise AssemblyError("empty block in partition")
        for i in group:
            if not 0 <= int(i) < n:
                raise AssemblyError(f"atom index {i} out of range for {n} atoms")
            seen[int(i)] += 1
    if not np.all(seen == 1):
        raise AssemblyError("partition must cover every atom exactly once")


def disassemble(structure: AtomStructure, partition, smiles=None) -> AssemblySpec:
    """Split a labeled structure into rigid blocks and their poses.

    Each block is unwrapped by taking every atom's minimum image relative to
    the block's first atom, so blocks straddling the cell boundary come out
    whole. The search is exact when the cell is Niggli reduced.
    """
    n = len(structure)
    _check_partition(partition, n)
    params = matrix_to_params(structure.lattice)
    L = params_to_matrix(params)
    if smiles is None:
        smiles = [""] * len(partition)
    blocks, poses = [], []
    for group, label in zip(partition, smiles):
        idx = np.asarray(group, dtype=int)
        f = structure.frac_coords[idx]
        _, rel = min_image_vectors(f - f[0], L)
        cart = (f[0] + rel) @ L
        block, R, centroid = extract_local_frame(
            cart, [structure.species[i] for i in idx], smiles=label
        )
        blocks.append(block)
        poses.append(BlockPose(cart_to_frac(centroid, L), matrix_to_euler(R)))
    return AssemblySpec(params, blocks, poses)


def min_interatomic_distance(structure: AtomStructure, chunk: int = 256) -> float:
    """Shortest distance between any two sites, periodic images included."""
    if len(structure) < 1:
        raise AssemblyError("structure has no atoms")
    L_red, P = niggli_reduce(structure.lattice)
    frac = structure.frac_coords @ np.linalg.inv(P)
    # self-images: shortest non-zero lattice vector of the reduced cell
    shifts = np.array(
        [(i, j, k) for i in (-1, 0, 1) for j in (-1, 0, 1) for k in (-1, 0, 1) if (i, j, k) != (0, 0, 0)],
        dtype=float,
    )
    best = float(np.linalg.norm(shifts @ L_red, axis=1).min())
    n = len(frac)
    for start in range(0, n, chunk):
        block = frac[start : start + chunk]
        diff = block[:, None, :] - frac[None, :, :]
        cart, _ = min_image_vectors(diff, L_red)
        dist = np.linalg.norm(cart, axis=-1)
        rows = np.arange(len(block))
        dist[rows, start + rows] = np.inf
        best = min(best, float(dist.min()))
    return best


def to_cif(structure: AtomStructure, name: str = "structure") -> str:
    """Minimal P1 CIF text (cell parameters plus an atom-site loop)."""
    p = matrix_to_params(structure.lattice)
    lines = [
        f"data_{name}",
        "_symmetry_space_group_name_H-M   'P 1'",
        "_symmetry_Int_Tables_number      1",
        f"_cell_length_a    {p.a:.6f}",
        f"_cell_length_b    {p.b:.6f}",
        f"_cell_length_c    {p.c:.6f}",
        f"_cell_angle_alpha {p.alpha:.6f}",
        f"_cell_angle_beta  {p.beta:.6f}",
        f"_cell_angle_gamma {p.gamma:.6f}",
        f"_cell_volume      {p.volume:.6f}",
        "loop_",
        "_atom_site_label",
        "_atom_site_type_symbol",
        "_atom_site_fract_x",
        "_atom_site_fract_y",
        "_atom_site_fract_z",
    ]
    counts: dict[int, int] = {}
    for z, (x, y, w) in zip(structure.species, structure.frac_coords):
        counts[z] = counts.get(z, 0) + 1
        sym = SYMBOLS[z]
        lines.append(f"{sym}{counts[z]} {sym} {x:.6f} {y:.6f} {w:.6f}")
    return "\n".join(lines) + "\n"


__all__ = [
    "AtomStructure",
    "AssemblySpec",
    "BlockPose",
    "BuildingBlock",
    "assemble",
    "disassemble",
    "min_interatomic_distance",
    "niggli_standardize",
    "standard_orientation",
    "to_cif",
]
