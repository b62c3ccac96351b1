"""Periodic structure matching: lattice mapping, translation search and
per-species site assignment, with normalized RMS / max displacements.

Displacements are normalized by ``(V / N) ** (1/3)`` with ``V`` the mean
volume of the two cells and ``N`` the number of sites. Two structures match
under ``(stol, ltol, atol)`` when some lattice mapping keeps every reduced
length within ``ltol`` (fractional) and every angle within ``atol`` degrees,
and some translation plus species-preserving assignment leaves every
mean-centered site displacement at or below ``stol``.
"""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from sklearn.base import BaseEstimator

from .assembly import AtomStructure
from .errors import LengthMismatchError, SpeciesMismatchError
from .lattice import matrix_to_params, niggli_reduce, params_to_matrix

TIERS = (0.5, 0.75, 1.0)
_IMAGES = np.array(list(itertools.product((-1, 0, 1), repeat=3)), dtype=float)
HUNGARIAN_MAX = 64
# up to this many sites all seeds share one species-masked cost tensor
BATCH_MAX = 16
# below this many sites every same-species pair seeds a translation
ALL_ANCHORS_MAX = 12


@dataclass(frozen=True)
class MatchTolerances:
    stol: float = 0.5
    ltol: float = 0.3
    atol: float = 1.0

    def __post_init__(self):
        if min(self.stol, self.ltol, self.atol) <= 0:
            raise ValueError(f"tolerances must be positive: {self}")


DEFAULT_TOLERANCES = (MatchTolerances(0.5, 0.3, 1.0), MatchTolerances(1.0, 0.3, 1.0))


@dataclass
class MatchReport:
    matched: bool
    rmse: float | None
    max_disp: float | None
    tier: float | None
    solver: str = "hungarian"

    def to_dict(self) -> dict:
        return {
            "matched": self.matched,
            "rmse": self.rmse,
            "max_disp": self.max_disp,
            "tier": self.tier,
            "solver": self.solver,
        }


@dataclass
class _Config:
    max_disp: float
    rmse: float
    mapping: int


# --- lattice mapping ----------------------------------------------------------


def _vector_angle(u, v):
    cos = np.einsum("...i,...i->...", u, v) / (
        np.linalg.norm(u, axis=-1) * np.linalg.norm(v, axis=-1)
    )
    return np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))


def _reduced_mappings(L1r, L2r, ltol, atol, span=2):
    """Integer ``C`` (det 1) with ``C @ L2r`` matching ``L1r`` in metric."""
    coeffs = np.array(
        [c for c in itertools.product(range(-span, span + 1), repeat=3) if any(c)], dtype=float
    )
    vecs = coeffs @ L2r
    lens = np.linalg.norm(vecs, axis=1)
    target_lens = np.linalg.norm(L1r, axis=1)
    cands = [
        np.flatnonzero(np.abs(lens - t) / t <= ltol) for t in target_lens
    ]
    if any(len(c) == 0 for c in cands):
        return []
    p = matrix_to_params(L1r)
    alpha, beta, gamma = p.alpha, p.beta, p.gamma
    out = []
    for i in cands[0]:
        ok_j = cands[1][np.abs(_vector_angle(vecs[i], vecs[cands[1]]) - gamma) <= atol]
        if len(ok_j) == 0:
            continue
        ok_k_beta = cands[2][np.abs(_vector_angle(vecs[i], vecs[cands[2]]) - beta) <= atol]
        if len(ok_k_beta) == 0:
            continue
        for j in ok_j:
            ks = ok_k_beta[np.abs(_vector_angle(vecs[j], vecs[ok_k_beta]) - alpha) <= atol]
            for k in ks:
                C = np.array([coeffs[i], coeffs[j], coeffs[k]])
                if round(np.linalg.det(C)) == 1:
                    out.append(C.astype(int))
    return out


def _mappings_with_widening(L1r, L2r, ltol, atol):
    maps = _reduced_mappings(L1r, L2r, ltol, atol)
    if not maps:
        l1 = np.sort(np.linalg.norm(L1r, axis=1))
        l2 = np.sort(np.linalg.norm(L2r, axis=1))
        if np.all(np.abs(l2 / l1 - 1.0) <= 2 * ltol):
            maps = _reduced_mappings(L1r, L2r, ltol, atol, span=3)
    return maps


def lattices_match(L1, L2, ltol: float = 0.3, atol: float = 1.0):
    """All unimodular integer ``T`` such that ``T @ L2`` matches ``L1``.

    Both cells are Niggli reduced first and candidate bases of the reduced
    ``L2`` are integer combinations with coefficients in [-2, 2]; mappings
    are returned in the original bases (``T = inv(P1) @ C @ P2``). An empty
    list means the lattices do not match.
    """
    L1r, P1 = niggli_reduce(L1)
    L2r, P2 = niggli_reduce(L2)
    P1inv = np.linalg.inv(P1)
    return [
        np.rint(P1inv @ C @ P2).astype(int)
        for C in _mappings_with_widening(L1r, L2r, ltol, atol)
    ]


# --- site assignment ----------------------------------------------------------


def _greedy_assignment(cost):
    """Nearest-neighbour assignment refined by pairwise swaps."""
    n = len(cost)
    cols = np.full(n, -1)
    free = np.ones(n, dtype=bool)
    order = np.argsort(cost.min(axis=1))
    for i in order:
        j = int(np.argmin(np.where(free, cost[i], np.inf)))
        cols[i] = j
        free[j] = False
    # 2-swap refinement: apply the best improving swap until none is left
    for _ in range(n * n):
        own = cost[np.arange(n), cols]
        cross = cost[:, cols]
        gain = own[:, None] + own[None, :] - cross - cross.T
        a, b = np.unravel_index(np.argmax(gain), gain.shape)
        if gain[a, b] <= 1e-12:
            break
        cols[a], cols[b] = cols[b], cols[a]
    return np.arange(n), cols


def _assign(cost):
    if len(cost) > HUNGARIAN_MAX:
        return _greedy_assignment(cost)
    return linear_sum_assignment(cost)


class _SiteProblem:
    """Site sets of two structures under one or more lattice mappings.

    ``f2`` is ``(n_mappings, N, 3)`` and ``L`` holds the averaged lattice of
    each mapping. Work is organized in rows, one per (mapping, seed
    translation). Up to ``BATCH_MAX`` sites all rows share one species-masked
    ``N x N`` cost tensor (cross-species pairs are priced out of reach, which
    is equivalent to per-species assignment); larger problems are solved row
    by row and species by species.
    """

    def __init__(self, species1, f1, species2, f2, L, norm):
        self.f1 = f1
        self.f2 = np.asarray(f2, dtype=float).reshape(-1, len(f1), 3)
        self.L = np.asarray(L, dtype=float).reshape(-1, 3, 3)
        self.norm = norm
        self.K = np.einsum("ik,mkl->mil", _IMAGES, self.L)
        self.K2 = np.einsum("mil,mil->mi", self.K, self.K)
        self.groups = []
        s1 = np.asarray(species1)
        s2 = np.asarray(species2)
        for z in sorted(set(species1)):
            self.groups.append((np.flatnonzero(s1 == z), np.flatnonzero(s2 == z)))
        self.cross = s1[:, None] != s2[None, :]
        # every species occurs once: the assignment is forced
        self.forced = None
        if all(len(g1) == 1 for g1, _ in self.groups):
            self.forced = np.empty(len(f1), dtype=int)
            for g1, g2 in self.groups:
                self.forced[g1] = g2
        counts = Counter(species1)
        anchor_z = min(counts, key=lambda z: (counts[z], z))
        first = int(np.flatnonzero(s1 == anchor_z)[0])
        self.seeds = [(first, int(j)) for j in np.flatnonzero(s2 == anchor_z)]
        if len(species1) <= ALL_ANCHORS_MAX:
            self.seeds += [
                (int(i), int(j))
                for idx1, idx2 in self.groups
                for i in idx1
                for j in idx2
                if (int(i), int(j)) not in self.seeds
            ]
        self.batched = len(species1) <= BATCH_MAX
        self.solver = (
            "greedy" if max(len(g[0]) for g in self.groups) > HUNGARIAN_MAX else "hungarian"
        )

    def _min_image(self, d, m):
        """Min-image (cart, frac) of fractional differences ``d``; ``m`` is
        one mapping id or an array of ids indexing the leading axis."""
        d = d - np.round(d)
        if np.ndim(m) == 0:
            base = d @ self.L[m]
            best = np.argmin(2.0 * (base @ self.K[m].T) + self.K2[m], axis=-1)
            return base + self.K[m][best], d + _IMAGES[best]
        extra = d.ndim - 2
        L = self.L[m].reshape((len(m),) + (1,) * extra + (3, 3))
        K = self.K[m].reshape((len(m),) + (1,) * extra + (27, 3))
        K2 = self.K2[m].reshape((len(m),) + (1,) * extra + (27,))
        base = (d[..., None, :] @ L)[..., 0, :]
        score = 2.0 * (base[..., None, :] @ np.swapaxes(K, -1, -2))[..., 0, :] + K2
        best = np.argmin(score, axis=-1)
        shift = np.take_along_axis(K, best[..., None, None], axis=-2)[..., 0, :]
        return base + shift, d + _IMAGES[best]

    def _assign_batch(self, ts, m, bottleneck=False):
        diff = self.f1[None, :, None, :] - self.f2[m][:, None, :, :] - ts[:, None, None, :]
        cart, frac = self._min_image(diff, m)
        n = len(self.f1)
        rows_all = np.arange(n)
        if self.forced is not None:
            perms = np.broadcast_to(self.forced, (len(ts), n)).copy()
            return frac[:, rows_all, self.forced], perms
        cost = np.einsum("sijk,sijk->sij", cart, cart)
        big = float(cost.max()) * n + 1.0
        cost[:, self.cross] = big
        vecs = np.empty((len(ts), n, 3))
        perms = np.empty((len(ts), n), dtype=int)
        for k in range(len(ts)):
            c = _bottleneck_cost(cost[k]) if bottleneck else cost[k]
            rows, cols = linear_sum_assignment(c)
            perms[k, rows] = cols
            vecs[k, rows] = frac[k, rows, cols]
        return vecs, perms

    def _assign_groups(self, t, m, bottleneck=False):
        vecs = np.empty_like(self.f1)
        perm = np.empty(len(self.f1), dtype=int)
        f2 = self.f2[m]
        for idx1, idx2 in self.groups:
            diff = self.f1[idx1, None, :] - (f2[None, idx2, :] + t)
            cart, frac = self._min_image(diff, m)
            cost = np.einsum("ijk,ijk->ij", cart, cart)
            if bottleneck:
                cost = _bottleneck_cost(cost)
            rows, cols = _assign(cost)
            vecs[idx1[rows]] = frac[rows, cols]
            perm[idx1[rows]] = idx2[cols]
        return vecs, perm

    def assign(self, ts, m, bottleneck=False):
        """Assigned min-image frac vectors ``f1_i - (f2_j + t)`` and the
        assignments for rows of translations ``ts`` under mappings ``m``.
        The default minimizes the summed squared distance; with
        ``bottleneck`` the largest distance is minimized first."""
        if self.batched:
            return self._assign_batch(ts, m, bottleneck)
        out = [self._assign_groups(t, k, bottleneck) for t, k in zip(ts, m)]
        return np.stack([o[0] for o in out]), np.stack([o[1] for o in out])

    def _scores(self, vecs, m):
        centered = (vecs - vecs.mean(axis=1, keepdims=True)) @ self.L[m]
        d = np.linalg.norm(centered, axis=-1) / self.norm
        return d.max(axis=1), np.sqrt(np.mean(d * d, axis=1))

    def refine(self, ts, m, max_iter=8):
        """Alternate assignment and mean-centering until each row's
        assignment is stable. Returns final displacements and translations."""
        ts = np.array(ts, dtype=float)
        vecs = np.zeros((len(ts),) + self.f1.shape)
        prev = np.full((len(ts), len(self.f1)), -1)
        active = np.arange(len(ts))
        for _ in range(max_iter):
            v, perm = self.assign(ts[active], m[active])
            vecs[active] = v
            moving = ~np.all(perm == prev[active], axis=1)
            prev[active] = perm
            ts[active[moving]] += v[moving].mean(axis=1)
            active = active[moving]
            if len(active) == 0:
                break
        return vecs, ts

    def configs(self, stol=None):
        """``(mapping, max_disp, rmse)`` reached from every seed translation,
        mapping by mapping in seed order.

        Seeds align the first site of the least frequent species with each
        site of that species; small cells use every same-species pair. When
        the least-squares assignment leaves its worst site above ``stol``, a
        min-max assignment at the centered translation is tried as well,
        since the two objectives can disagree near the threshold.
        """
        i_idx = np.array([i for i, _ in self.seeds])
        j_idx = np.array([j for _, j in self.seeds])
        n_map, n_seed = len(self.f2), len(self.seeds)
        m = np.repeat(np.arange(n_map), n_seed)
        seeds = (self.f1[i_idx][None, :, :] - self.f2[:, j_idx, :]).reshape(-1, 3)
        vecs, ts = self.refine(seeds, m)
        mx, rms = self._scores(vecs, m)
        extra = {}
        if stol is not None:
            miss = np.flatnonzero(mx > stol)
            if len(miss):
                centered_t = ts[miss] + vecs[miss].mean(axis=1)
                bv, _ = self.assign(centered_t, m[miss], bottleneck=True)
                bmx, brms = self._scores(bv, m[miss])
                extra = {int(k): (float(x), float(r)) for k, x, r in zip(miss, bmx, brms)}
        for k in range(len(m)):
            yield int(m[k]), float(mx[k]), float(rms[k])
            if k in extra:
                yield (int(m[k]),) + extra[k]


def _bottleneck_cost(cost):
    """Cost matrix whose optimal assignment first minimizes the largest
    entry, then the sum among assignments achieving it."""
    levels = np.unique(cost)
    lo, hi = 0, len(levels) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        over = cost > levels[mid]
        rows, cols = linear_sum_assignment(over)
        if over[rows, cols].any():
            lo = mid + 1
        else:
            hi = mid
    big = cost.sum() + 1.0
    return np.where(cost > levels[lo], big, cost)


def _same_composition(s1: AtomStructure, s2: AtomStructure) -> bool:
    return Counter(s1.species) == Counter(s2.species)


def _site_problem(s1: AtomStructure, s2: AtomStructure, mappings, reduced=None) -> _SiteProblem:
    """Express ``s2`` in ``s1``'s reduced basis through each mapping ``T``
    (``T @ s2.lattice`` matches ``s1.lattice``).

    ``reduced`` optionally passes ``niggli_reduce(s1.lattice)`` along."""
    L1r, P1 = reduced if reduced is not None else niggli_reduce(s1.lattice)
    f1 = s1.frac_coords @ np.linalg.inv(P1)
    p1 = matrix_to_params(L1r).as_array()
    f2s, Ls = [], []
    for T in mappings:
        M = P1 @ np.asarray(T, dtype=float)
        f2s.append(s2.frac_coords @ np.linalg.inv(M))
        p2 = matrix_to_params(M @ s2.lattice).as_array()
        Ls.append(params_to_matrix(0.5 * (p1 + p2)))
    norm = (0.5 * (s1.volume + s2.volume) / len(s1)) ** (1.0 / 3.0)
    return _SiteProblem(s1.species, f1, s2.species, np.array(f2s), np.array(Ls), norm)


def sites_match(s1: AtomStructure, s2: AtomStructure, mapping, stol: float):
    """``(matched, rmse, max_disp)`` for one lattice mapping from
    :func:`lattices_match`. ``rmse``/``max_disp`` belong to the lowest-RMS
    translation that satisfies ``stol`` (or the lowest-RMS one overall when
    none does)."""
    if not _same_composition(s1, s2):
        raise SpeciesMismatchError("structures have different compositions")
    configs = [c[1:] for c in _site_problem(s1, s2, [mapping]).configs(stol)]
    passing = [c for c in configs if c[0] <= stol]
    pool = passing or configs
    best = min(pool, key=lambda c: c[1])
    return bool(passing), best[1], best[0]


# --- structure level ----------------------------------------------------------


def _search(s_pred: AtomStructure, s_gt: AtomStructure, ltol: float, atol: float, stol=None):
    """Every explored (mapping, translation) configuration, in enumeration
    order, stopping early at an exact match.

    ``stol`` enables the min-max fallback for configurations that miss it."""
    if len(s_pred) == 0 or not _same_composition(s_pred, s_gt):
        return [], "hungarian"
    reduced = L1r, P1 = niggli_reduce(s_pred.lattice)
    L2r, P2 = niggli_reduce(s_gt.lattice)
    P1inv = np.linalg.inv(P1)
    mappings = [P1inv @ C @ P2 for C in _mappings_with_widening(L1r, L2r, ltol, atol)]
    if not mappings:
        return [], "hungarian"
    # small cells: all mappings in one batch; large cells: one at a time so
    # an exact match can end the search early
    chunks = [mappings] if len(s_pred) <= BATCH_MAX else [[T] for T in mappings]
    configs, offset = [], 0
    for chunk in chunks:
        problem = _site_problem(s_pred, s_gt, chunk, reduced)
        for m, max_disp, rmse in problem.configs(stol):
            configs.append(_Config(max_disp, rmse, offset + m))
            if rmse < 1e-9:
                return configs, problem.solver
        offset += len(chunk)
    return configs, problem.solver


def _best(configs, stol):
    passing = [c for c in configs if c.max_disp <= stol]
    if not passing:
        return None
    # min keeps the first of equal keys, i.e. enumeration order breaks ties
    return min(passing, key=lambda c: c.rmse)


def _tier(configs):
    if not configs:
        return None
    lowest = min(c.max_disp for c in configs)
    return next((s for s in TIERS if lowest <= s), None)


def _report(configs, solver, stol) -> MatchReport:
    best = _best(configs, stol)
    tier = _tier(configs)
    if best is not None:
        return MatchReport(True, best.rmse, best.max_disp, tier, solver)
    if configs:
        closest = min(configs, key=lambda c: c.rmse)
        return MatchReport(False, closest.rmse, closest.max_disp, tier, solver)
    return MatchReport(False, None, None, None, solver)


def structures_match(s_pred: AtomStructure, s_gt: AtomStructure, tol: MatchTolerances = DEFAULT_TOLERANCES[0]) -> MatchReport:
    configs, solver = _search(s_pred, s_gt, tol.ltol, tol.atol, tol.stol)
    return _report(configs, solver, tol.stol)


def match_all(s_pred: AtomStructure, s_gt: AtomStructure, tolerance_sets=DEFAULT_TOLERANCES):
    """Reports for several tolerance sets sharing one search per (ltol, atol)."""
    cache = {}
    reports = []
    for tol in tolerance_sets:
        key = (tol.ltol, tol.atol)
        if key not in cache:
            stol = min(t.stol for t in tolerance_sets if (t.ltol, t.atol) == key)
            cache[key] = _search(s_pred, s_gt, tol.ltol, tol.atol, stol)
        reports.append(_report(*cache[key], tol.stol))
    return reports


def minimal_match_tier(s_pred: AtomStructure, s_gt: AtomStructure):
    """Smallest site tolerance in (0.5, 0.75, 1.0) at which the structures
    match with ``ltol=0.3, atol=1.0``, or ``None``."""
    configs, _ = _search(s_pred, s_gt, 0.3, 1.0, TIERS[0])
    return _tier(configs)


def tier_and_rmse(s_pred: AtomStructure, s_gt: AtomStructure):
    """Tier plus the normalized RMSE of the best ``stol=0.5`` match (None if
    the tightest tier is not reached)."""
    configs, _ = _search(s_pred, s_gt, 0.3, 1.0, TIERS[0])
    best = _best(configs, TIERS[0])
    return _tier(configs), (best.rmse if best is not None else None)


def evaluate_candidates(candidate_sets, gts, tol: MatchTolerances = DEFAULT_TOLERANCES[0]):
    """Match rate (percent) and mean RMSE of best-matching candidates.

    ``candidate_sets[i]`` holds the predictions for ``gts[i]``; ``None``
    entries stand for responses that failed to parse. The RMSE is ``nan``
    when nothing matched.
    """
    if len(candidate_sets) != len(gts):
        raise LengthMismatchError(f"{len(candidate_sets)} candidate sets for {len(gts)} ground truths")
    if not gts:
        return 0.0, float("nan")
    hits, rmses = 0, []
    for candidates, gt in zip(candidate_sets, gts):
        best = None
        for cand in candidates:
            if cand is None:
                continue
            report = structures_match(cand, gt, tol)
            if report.matched and (best is None or report.rmse < best):
                best = report.rmse
        if best is not None:
            hits += 1
            rmses.append(best)
    mr = 100.0 * hits / len(gts)
    return mr, (float(np.mean(rmses)) if rmses else float("nan"))


def match_rate(candidate_sets, gts, tol: MatchTolerances = DEFAULT_TOLERANCES[0]) -> float:
    return evaluate_candidates(candidate_sets, gts, tol)[0]


def best_rmse(candidate_sets, gts, tol: MatchTolerances = DEFAULT_TOLERANCES[0]) -> float:
    return evaluate_candidates(candidate_sets, gts, tol)[1]


class StructureMatcher(BaseEstimator):
    """Estimator-style front end; parameters are the three tolerances.

    ``score(candidate_sets, gts)`` returns the match rate as a fraction so the
    matcher plugs into scikit-learn model-selection utilities.
    """

    def __init__(self, stol=0.5, ltol=0.3, atol=1.0):
        self.stol = stol
        self.ltol = ltol
        self.atol = atol

    @property
    def tolerances(self) -> MatchTolerances:
        return MatchTolerances(self.stol, self.ltol, self.atol)

    def fit(self, X=None, y=None):
        self.tolerances_ = self.tolerances
        return self

    def match(self, s_pred, s_gt) -> MatchReport:
        return structures_match(s_pred, s_gt, self.tolerances)

    def get_rms_dist(self, s_pred, s_gt):
        report = self.match(s_pred, s_gt)
        return (report.rmse, report.max_disp) if report.matched else None

    def score(self, candidate_sets, gts) -> float:
        return match_rate(candidate_sets, gts, self.tolerances) / 100.0
