"""Independent brute-force references used to freeze expected values.

Nothing here imports the fast code paths it checks, apart from plain
lattice-parameter conversions.
"""

import itertools
import math

import numpy as np

from mofblock.lattice import matrix_to_params, params_to_matrix


def _species_permutations(species1, species2):
    """Every bijection i -> perm[i] that preserves species."""
    s1, s2 = np.asarray(species1), np.asarray(species2)
    classes = sorted(set(species1))
    groups = [(np.flatnonzero(s1 == z), np.flatnonzero(s2 == z)) for z in classes]
    for choice in itertools.product(*(itertools.permutations(g2) for _, g2 in groups)):
        perm = np.empty(len(s1), dtype=int)
        for (g1, _), g2 in zip(groups, choice):
            perm[g1] = g2
        yield perm


def brute_force_mappings(L1, L2, ltol, atol, span=2):
    """Integer matrices ``M`` (det 1, entries in [-span, span]) whose rows
    pick vectors of ``L2`` with lengths and angles close to ``L1``'s."""
    ks = [np.array(k) for k in itertools.product(range(-span, span + 1), repeat=3) if any(k)]

    def angle(u, v):
        c = u @ v / (np.linalg.norm(u) * np.linalg.norm(v))
        return math.degrees(math.acos(max(-1.0, min(1.0, c))))

    rows = []
    for i in range(3):
        t = np.linalg.norm(L1[i])
        rows.append([k for k in ks if abs(np.linalg.norm(k @ L2) - t) / t <= ltol])
    out = []
    for k0, k1, k2 in itertools.product(*rows):
        M = np.array([k0, k1, k2])
        if round(np.linalg.det(M)) != 1:
            continue
        V = M @ L2
        if (
            abs(angle(V[1], V[2]) - angle(L1[1], L1[2])) <= atol
            and abs(angle(V[0], V[2]) - angle(L1[0], L1[2])) <= atol
            and abs(angle(V[0], V[1]) - angle(L1[0], L1[1])) <= atol
        ):
            out.append(M)
    return out


def brute_force_structure_match(f1, species1, L1, f2, species2, L2, stol, ltol, atol, grid=64):
    """Exhaustive match over lattice mappings, permutations and translations."""
    best = (False, math.inf)
    for M in brute_force_mappings(L1, L2, ltol, atol):
        g = np.asarray(f2, float) @ np.linalg.inv(M)
        matched, rmse = brute_force_match(f1, species1, L1, g, species2, M @ L2, stol, grid)
        if (matched, -rmse) > (best[0], -best[1]):
            best = (matched, rmse)
    return best


def brute_force_match(f1, species1, L1, f2, species2, L2, stol, grid=64):
    """Exhaustive site match of two structures given in the same basis.

    For every species-preserving permutation the translation is scanned on a
    ``grid``-point lattice per axis. Along each axis only the integer image
    choice matters, so the scan collapses to at most ``N + 1`` image patterns
    per axis; every pattern combination is then mean-centered. Returns
    ``(matched, rmse)`` where rmse is the lowest normalized RMS among
    configurations whose max normalized displacement is <= ``stol`` (or the
    lowest RMS overall when none passes).
    """
    f1 = np.asarray(f1, float)
    f2 = np.asarray(f2, float)
    n = len(f1)
    p1 = np.array(list(matrix_to_params(L1)))
    p2 = np.array(list(matrix_to_params(L2)))
    L = params_to_matrix(0.5 * (p1 + p2))
    vol = 0.5 * (abs(np.linalg.det(L1)) + abs(np.linalg.det(L2)))
    norm = (vol / n) ** (1.0 / 3.0)
    ts = np.arange(grid) / grid
    best_pass = math.inf
    best_any = math.inf
    for perm in _species_permutations(species1, species2):
        delta = f1 - f2[perm]
        axes = []
        for a in range(3):
            shifted = delta[:, a][None, :] - ts[:, None]
            images = np.unique(np.floor(shifted + 0.5), axis=0)
            axes.append(delta[:, a][None, :] - images)
        d = np.stack(
            np.broadcast_arrays(
                axes[0][:, None, None, :], axes[1][None, :, None, :], axes[2][None, None, :, :]
            ),
            axis=-1,
        )
        d = d - d.mean(axis=-2, keepdims=True)
        dist = np.linalg.norm(d @ L, axis=-1) / norm
        mx = dist.max(axis=-1)
        rms = np.sqrt((dist**2).mean(axis=-1))
        best_any = min(best_any, float(rms.min()))
        ok = mx <= stol
        if ok.any():
            best_pass = min(best_pass, float(rms[ok].min()))
    if best_pass < math.inf:
        return True, best_pass
    return False, best_any


def sphere_void_fraction(radius, a):
    """Exact void fraction of one sphere (radius < a/2) in a cube of edge a."""
    return 1.0 - (4.0 / 3.0) * math.pi * radius**3 / a**3


def dense_lcd(cart_atoms, radii, L, n):
    """Grid LCD by plain loops over atoms and all 27 images (slow reference).

    Points sit at cell centers ``(i + 0.5) / n``, a different sampling from
    the estimator under test; the grid is processed one x-slab at a time.
    """
    g = (np.arange(n) + 0.5) / n
    yz = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    best = -math.inf
    for x in g:
        pts = np.column_stack([np.full(len(yz), x), yz]) @ L
        clearance = np.full(len(pts), np.inf)
        for atom, r in zip(cart_atoms, radii):
            for k in itertools.product((-1, 0, 1), repeat=3):
                c = atom + np.array(k) @ L
                clearance = np.minimum(clearance, np.linalg.norm(pts - c, axis=1) - r)
        best = max(best, float(clearance.max()))
    return max(0.0, 2.0 * best)


def finite_difference(fn, x, h=1e-5):
    """Central-difference gradient of a scalar function of an array."""
    x = np.array(x, dtype=float)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = x[idx]
        x[idx] = old + h
        up = fn(x)
        x[idx] = old - h
        down = fn(x)
        x[idx] = old
        grad[idx] = (up - down) / (2 * h)
    return grad
