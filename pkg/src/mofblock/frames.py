"""SE(3)-invariant local frames for rigid building blocks and the per-block
geometric descriptors used in pre-training prompts."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .elements import atomic_mass, atomic_number
from .lattice import wrap_frac
from .rotations import EulerAngles

DOT_TOL = 1e-9
GAP_TOL = 1e-6


def molecular_weight(species) -> float:
    return float(sum(atomic_mass(z) for z in species))


def pca_span(coords) -> np.ndarray:
    """Extent (max - min) of local coordinates along each local axis."""
    coords = np.asarray(coords, dtype=float).reshape(-1, 3)
    if len(coords) == 0:
        return np.zeros(3)
    return coords.max(axis=0) - coords.min(axis=0)


def rotated_principal_axis(R) -> np.ndarray:
    """Image of the local principal axis (1, 0, 0) under ``R``."""
    return np.asarray(R, dtype=float)[:, 0].copy()


@dataclass
class BuildingBlock:
    species: tuple
    local_coords: np.ndarray
    smiles: str = ""
    molecular_weight: float = 0.0
    pca_span: np.ndarray = field(default_factory=lambda: np.zeros(3))
    degenerate: bool = False

    @classmethod
    def from_local(cls, species, local_coords, smiles: str = "", degenerate: bool = False):
        species = tuple(atomic_number(z) for z in species)
        coords = np.asarray(local_coords, dtype=float).reshape(-1, 3)
        if len(species) != len(coords):
            raise ValueError(f"{len(species)} species for {len(coords)} coordinates")
        return cls(
            species=species,
            local_coords=coords,
            smiles=smiles,
            molecular_weight=molecular_weight(species),
            pca_span=pca_span(coords),
            degenerate=degenerate,
        )

    @property
    def n_atoms(self) -> int:
        return len(self.species)


@dataclass
class BlockPose:
    """Block center in fractional coordinates plus its orientation."""

    translation: np.ndarray
    euler: EulerAngles

    def __post_init__(self):
        self.translation = wrap_frac(np.asarray(self.translation, dtype=float).reshape(3))
        self.euler = EulerAngles(*(float(x) for x in self.euler))


def _orient(axis, y, masses, ref):
    """Fix the sign of one principal axis.

    Order of tie-breakers: mass-weighted reference vector, mass-weighted
    third moment of the projections, then the first non-negligible
    component of the axis itself being positive.
    """
    d = float(axis @ ref)
    if abs(d) >= DOT_TOL:
        return axis if d > 0 else -axis
    proj = y @ axis
    skew = float(masses @ proj**3) / float(masses.sum())
    if abs(skew) >= DOT_TOL:
        return axis if skew > 0 else -axis
    for comp in axis:
        if abs(comp) > DOT_TOL:
            return axis if comp > 0 else -axis
    return axis


def local_frame(coords, masses=None):
    """Return ``(centroid, R, degenerate)`` for a point cloud.

    ``R`` has the principal axes as columns (largest variance first) and is a
    proper rotation, so ``local = (coords - centroid) @ R``.
    """
    X = np.asarray(coords, dtype=float).reshape(-1, 3)
    n = len(X)
    centroid = X.mean(axis=0)
    if n == 1:
        return centroid, np.eye(3), False
    masses = np.ones(n) if masses is None else np.asarray(masses, dtype=float)
    Y = X - centroid
    evals, evecs = np.linalg.eigh(Y.T @ Y / n)
    evals, evecs = evals[::-1], evecs[:, ::-1]
    degenerate = bool(np.min(np.diff(-evals)) < GAP_TOL)
    ref = masses @ Y / masses.sum()
    e1 = _orient(evecs[:, 0], Y, masses, ref)
    e2 = _orient(evecs[:, 1], Y, masses, ref)
    e2 = e2 - (e2 @ e1) * e1
    e2 /= np.linalg.norm(e2)
    e3 = np.cross(e1, e2)
    return centroid, np.column_stack([e1, e2, e3]), degenerate


def extract_local_frame(global_coords, species, smiles: str = ""):
    """Canonicalize a block given in global Cartesian coordinates.

    Returns ``(block, R, centroid)``; reassembly is
    ``block.local_coords @ R.T + centroid``. ``block.degenerate`` flags a
    principal-axis spectrum with a gap below 1e-6 Å², where the frame is
    deterministic but not guaranteed to be invariant.
    """
    X = np.asarray(global_coords, dtype=float).reshape(-1, 3)
    if len(X) == 0:
        raise ValueError("a building block needs at least one atom")
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite block coordinates")
    species = [atomic_number(z) for z in species]
    masses = np.array([atomic_mass(z) for z in species])
    centroid, R, degenerate = local_frame(X, masses)
    local = (X - centroid) @ R
    block = BuildingBlock.from_local(species, local, smiles=smiles, degenerate=degenerate)
    return block, R, centroid


class LocalFrameTransformer(TransformerMixin, BaseEstimator):
    """PCA-style transformer mapping one block's atoms into its local frame.

    ``fit`` learns the centroid and principal frame of an ``(n_atoms, 3)``
    array; ``transform`` applies it and ``inverse_transform`` undoes it.
    ``species`` (atomic numbers or symbols) sets the masses used to orient
    the axes; without it all atoms weigh the same.
    """

    def __init__(self, species=None):
        self.species = species

    def fit(self, X, y=None):
        X = check_array(X, ensure_min_samples=1)
        if X.shape[1] != 3:
            raise ValueError(f"expected 3 columns, got {X.shape[1]}")
        masses = None
        if self.species is not None:
            if len(self.species) != len(X):
                raise ValueError("species length does not match number of atoms")
            masses = [atomic_mass(z) for z in self.species]
        self.centroid_, self.rotation_, self.degenerate_ = local_frame(X, masses)
        self.n_features_in_ = 3
        return self

    def transform(self, X):
        check_is_fitted(self, "rotation_")
        X = check_array(X)
        return (X - self.centroid_) @ self.rotation_

    def inverse_transform(self, X):
        check_is_fitted(self, "rotation_")
        X = check_array(X)
        return X @ self.rotation_.T + self.centroid_
