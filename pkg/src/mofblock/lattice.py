"""Lattice parameterization, coordinate transforms, periodic distances and
Niggli reduction.

Conventions used throughout the package:

* row vectors: a Cartesian point is ``x = f @ L`` where the rows of ``L`` are
  the lattice vectors ``l1, l2, l3``;
* angles of a cell are in degrees;
* ``params_to_matrix`` puts ``l1`` on +x and ``l2`` in the xy-plane with a
  positive y component, so ``det L > 0``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateLatticeError,
    InvalidAngleTripleError,
    LatticeError,
    NiggliConvergenceError,
    SingularLatticeError,
)

_IMAGES = {
    s: np.array(list(itertools.product(range(-s, s + 1), repeat=3)), dtype=float)
    for s in (1, 2)
}


# round-off floor: cos(120 deg) is inexact, so flat cells such as
# (120, 120, 120) evaluate to ~1e-15 rather than 0
DISCRIMINANT_EPS = 1e-12


def angle_discriminant(alpha: float, beta: float, gamma: float) -> float:
    """``1 - cos²α - cos²β - cos²γ + 2 cosα cosβ cosγ`` for angles in degrees.

    The cell volume is ``a*b*c*sqrt(discriminant)``; a valid angle triple has
    a strictly positive discriminant.
    """
    ca, cb, cg = (math.cos(math.radians(x)) for x in (alpha, beta, gamma))
    return 1.0 - ca * ca - cb * cb - cg * cg + 2.0 * ca * cb * cg


@dataclass(frozen=True)
class LatticeParams:
    """Cell edge lengths (angstrom) and interaxial angles (degrees)."""

    a: float
    b: float
    c: float
    alpha: float
    beta: float
    gamma: float

    def __post_init__(self):
        values = self._values()
        if not all(math.isfinite(v) for v in values):
            raise LatticeError(f"non-finite lattice parameters {values}")
        if min(self.a, self.b, self.c) <= 0:
            raise LatticeError(f"lattice lengths must be positive, got {values[:3]}")
        for angle in values[3:]:
            if not 0.0 < angle < 180.0:
                raise LatticeError(f"lattice angles must lie in (0, 180), got {values[3:]}")
        if angle_discriminant(self.alpha, self.beta, self.gamma) <= DISCRIMINANT_EPS:
            raise InvalidAngleTripleError(
                f"angles {values[3:]} do not admit a cell of positive volume"
            )

    def _values(self) -> tuple:
        return (self.a, self.b, self.c, self.alpha, self.beta, self.gamma)

    def __iter__(self):
        return iter(self._values())

    def as_array(self) -> np.ndarray:
        return np.array(self._values(), dtype=float)

    @property
    def volume(self) -> float:
        disc = angle_discriminant(self.alpha, self.beta, self.gamma)
        return self.a * self.b * self.c * math.sqrt(disc)

    @classmethod
    def coerce(cls, value) -> "LatticeParams":
        if isinstance(value, cls):
            return value
        if isinstance(value, dict):
            return cls(*(float(value[k]) for k in ("a", "b", "c", "alpha", "beta", "gamma")))
        values = [float(v) for v in value]
        if len(values) != 6:
            raise LatticeError(f"expected 6 lattice parameters, got {len(values)}")
        return cls(*values)


def as_matrix(L) -> np.ndarray:
    L = np.asarray(L, dtype=float)
    if L.shape != (3, 3):
        raise LatticeError(f"lattice matrix must be 3x3, got shape {L.shape}")
    return L


def params_to_matrix(p) -> np.ndarray:
    p = LatticeParams.coerce(p)
    alpha, beta, gamma = (math.radians(x) for x in (p.alpha, p.beta, p.gamma))
    ca, cb, cg = math.cos(alpha), math.cos(beta), math.cos(gamma)
    sg = math.sin(gamma)
    disc = angle_discriminant(p.alpha, p.beta, p.gamma)
    return np.array(
        [
            [p.a, 0.0, 0.0],
            [p.b * cg, p.b * sg, 0.0],
            [p.c * cb, p.c * (ca - cb * cg) / sg, p.c * math.sqrt(disc) / sg],
        ]
    )


def _angle_deg(u: np.ndarray, v: np.ndarray) -> float:
    # atan2 form keeps full precision near 0 and 180 degrees
    u0, u1, u2 = (float(x) for x in u)
    v0, v1, v2 = (float(x) for x in v)
    cross = math.sqrt(
        (u1 * v2 - u2 * v1) ** 2 + (u2 * v0 - u0 * v2) ** 2 + (u0 * v1 - u1 * v0) ** 2
    )
    return math.degrees(math.atan2(cross, u0 * v0 + u1 * v1 + u2 * v2))


def matrix_to_params(L) -> LatticeParams:
    L = as_matrix(L)
    lengths = np.linalg.norm(L, axis=1)
    if lengths.min() < 1e-12:
        raise DegenerateLatticeError("lattice vector with near-zero length")
    l1, l2, l3 = L
    return LatticeParams(
        float(lengths[0]),
        float(lengths[1]),
        float(lengths[2]),
        _angle_deg(l2, l3),
        _angle_deg(l1, l3),
        _angle_deg(l1, l2),
    )


def volume(L) -> float:
    return abs(float(np.linalg.det(as_matrix(L))))


def _inverse(L: np.ndarray) -> np.ndarray:
    L = as_matrix(L)
    det = np.linalg.det(L)
    if not np.isfinite(det) or abs(det) < 1e-12 * max(1.0, np.abs(L).max()) ** 3:
        raise SingularLatticeError("lattice matrix is not invertible")
    return np.linalg.inv(L)


def frac_to_cart(f, L) -> np.ndarray:
    L = as_matrix(L)
    _inverse(L)
    return np.asarray(f, dtype=float) @ L


def cart_to_frac(x, L) -> np.ndarray:
    return np.asarray(x, dtype=float) @ _inverse(L)


def wrap_frac(f) -> np.ndarray:
    """Map fractional coordinates into [0, 1) by integer shifts."""
    f = np.asarray(f, dtype=float)
    w = f - np.floor(f)
    # -1e-17 - floor(-1e-17) rounds to exactly 1.0
    return np.where(w >= 1.0, 0.0, w)


def min_image_vectors(dfrac, L, search: int = 1):
    """Shortest periodic images of fractional difference vectors.

    ``dfrac`` has shape ``(..., 3)``. The difference is first wrapped into
    [-0.5, 0.5) and then the integer shifts in ``{-search..search}³`` are
    searched; ``search=1`` is exact for Niggli-reduced cells.

    Returns ``(cart, frac)``: the minimal Cartesian vectors and the matching
    fractional vectors.
    """
    L = as_matrix(L)
    d = np.asarray(dfrac, dtype=float)
    d = d - np.round(d)
    images = _IMAGES[search]
    K = images @ L
    base = d @ L
    # |c + k|^2 - |c|^2 = 2 c.k + |k|^2, so one matmul ranks every image
    score = 2.0 * (base @ K.T) + np.einsum("ij,ij->i", K, K)
    best = np.argmin(score, axis=-1)
    return base + K[best], d + images[best]


def min_image_distance(f1, f2, L, search: int = 1):
    """Minimum-image distance between fractional points (broadcasting)."""
    cart, _ = min_image_vectors(np.asarray(f1, float) - np.asarray(f2, float), L, search)
    dist = np.linalg.norm(cart, axis=-1)
    return float(dist) if dist.ndim == 0 else dist


def _gauss_prereduce(L: np.ndarray, P: np.ndarray):
    """Pairwise size reduction; keeps large shears out of the Niggli loop."""
    for _ in range(1000):
        changed = False
        for i, j in itertools.permutations(range(3), 2):
            c = round(float(L[i] @ L[j]) / float(L[j] @ L[j]))
            if c != 0:
                trial = L[i] - c * L[j]
                if trial @ trial < L[i] @ L[i] - 1e-12 * (L[i] @ L[i]):
                    L[i] = trial
                    P[i] = P[i] - c * P[j]
                    changed = True
        if not changed:
            return L, P
    raise NiggliConvergenceError("size reduction did not converge")


def niggli_reduce(L, tol: float = 1e-5, max_iter: int = 100):
    """Krivý–Gruber reduction of a right-handed cell.

    Returns ``(L_red, P)`` with integer ``P`` (``det P = 1``) and
    ``L_red = P @ L``; Cartesian orientation is preserved, so fractional
    coordinates transform as ``f_red = f @ inv(P)``.
    """
    L0 = as_matrix(L)
    det = np.linalg.det(L0)
    if det <= 0:
        raise LatticeError("niggli_reduce requires a right-handed lattice (det > 0)")
    Lw, P = _gauss_prereduce(L0.copy(), np.eye(3))
    eps = tol * det ** (1.0 / 3.0)
    G = Lw @ Lw.T

    def apply(M):
        nonlocal G, P
        M = np.asarray(M, dtype=float)
        G = M.T @ G @ M
        P = M.T @ P

    def entries():
        return G[0, 0], G[1, 1], G[2, 2], 2 * G[1, 2], 2 * G[0, 2], 2 * G[0, 1]

    for _ in range(max_iter):
        A, B, C, E, N, Y = entries()
        if B + eps < A or (abs(A - B) < eps and abs(E) > abs(N) + eps):
            apply([[0, -1, 0], [-1, 0, 0], [0, 0, -1]])
            A, B, C, E, N, Y = entries()
        if C + eps < B or (abs(B - C) < eps and abs(N) > abs(Y) + eps):
            apply([[-1, 0, 0], [0, 0, -1], [0, -1, 0]])
            continue

        sl = 0 if abs(E) < eps else int(math.copysign(1, E))
        sm = 0 if abs(N) < eps else int(math.copysign(1, N))
        sn = 0 if abs(Y) < eps else int(math.copysign(1, Y))
        if sl * sm * sn == 1:
            apply(np.diag([-1 if s == -1 else 1 for s in (sl, sm, sn)]))
        else:
            i, j, k = (-1 if s == 1 else 1 for s in (sl, sm, sn))
            if i * j * k == -1:
                if sn == 0:
                    k = -1
                elif sm == 0:
                    j = -1
                elif sl == 0:
                    i = -1
            apply(np.diag([i, j, k]))
        A, B, C, E, N, Y = entries()

        if abs(E) > B + eps or (abs(E - B) < eps and Y - eps > 2 * N) or (abs(E + B) < eps and -eps > Y):
            apply([[1, 0, 0], [0, 1, -math.copysign(1, E)], [0, 0, 1]])
            continue
        if abs(N) > A + eps or (abs(A - N) < eps and Y - eps > 2 * E) or (abs(A + N) < eps and -eps > Y):
            apply([[1, 0, -math.copysign(1, N)], [0, 1, 0], [0, 0, 1]])
            continue
        if abs(Y) > A + eps or (abs(A - Y) < eps and N - eps > 2 * E) or (abs(A + Y) < eps and -eps > N):
            apply([[1, -math.copysign(1, Y), 0], [0, 1, 0], [0, 0, 1]])
            continue
        if -eps > E + N + Y + A + B or (abs(E + N + Y + A + B) < eps < Y + (A + N) * 2):
            apply([[1, 0, 1], [0, 1, 1], [0, 0, 1]])
            continue
        break
    else:
        raise NiggliConvergenceError(f"Niggli reduction did not converge in {max_iter} iterations")

    P = np.rint(P)
    return P @ L0, P.astype(int)
