"""Lloyd's k-means: per-pass folds accumulate barycenter sums against the
fixed centroid matrix of that pass, the driver repositions between passes.

Stored assignments let each iteration do a single closest-centroid pass per
point: the assignments written during pass m are the comparison baseline
for pass m+1.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .foldcore import FoldSpec, fold_source, iterate
from .linalg import closest_column

_ASSIGN_CHUNK = 8192


class DuplicatePointsWarning(UserWarning):
    """Fewer distinct points than requested centroids."""


_MIX_1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX_2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1


def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _MIX_1
    z = (z ^ (z >> np.uint64(27))) * _MIX_2
    return z ^ (z >> np.uint64(31))


def _mix64_int(z):
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def _row_keys(features, seed, round_index):
    """Per-row 64-bit keys mixed from row contents and a seed.

    Keys depend on what a row contains, not where it sits, so seeded
    sampling is invariant to row permutations. Not cryptographic.
    """
    bits = features.view(np.uint64)
    base = _mix64_int((seed & _MASK64) ^ _mix64_int(_GOLDEN * (round_index + 1)))
    keys = np.full(features.shape[0], base, dtype=np.uint64)
    for c in range(bits.shape[1]):
        keys = _mix64(keys ^ bits[:, c])
    return keys


def _keys_to_unit(keys):
    # strictly inside (0, 1) so -log(u) stays finite
    return (keys >> np.uint64(11)).astype(np.float64) * 2.0 ** -53 + 2.0 ** -54


def seed_centroids(data, k, method="kmeanspp", rng_seed=0):
    """Pick k initial centroid positions, returned as a (d, k) matrix.

    kmeanspp draws each next centroid with probability proportional to the
    squared distance from the chosen set (exponential-race sampling over
    content-hashed uniforms); random picks k distinct points uniformly.
    Deterministic given rng_seed; permuting rows selects the same points.
    """
    n = len(data)
    if not 1 <= k <= n:
        raise ValueError(f"k must be between 1 and {n}, got {k}")
    feats = data.features

    if method == "random":
        order = np.argsort(_row_keys(feats, rng_seed, 0), kind="stable")
        chosen = []
        seen = set()
        for i in order:
            content = feats[i].tobytes()
            if content in seen:
                continue
            seen.add(content)
            chosen.append(int(i))
            if len(chosen) == k:
                break
        if len(chosen) < k:
            warnings.warn(
                f"only {len(chosen)} distinct points for k={k}; duplicating centroids",
                DuplicatePointsWarning,
            )
            base = list(chosen)
            while len(chosen) < k:
                chosen.append(base[(len(chosen) - len(base)) % len(base)])
        return feats[chosen].T.copy()

    if method != "kmeanspp":
        raise ValueError(f"unknown seeding method {method!r}")

    columns = []
    d2 = None
    for r in range(k):
        u = _keys_to_unit(_row_keys(feats, rng_seed, r + 1))
        weights = np.ones(n) if d2 is None else d2
        with np.errstate(divide="ignore", invalid="ignore"):
            race = -np.log(u) / weights
        race = np.where(weights > 0.0, race, np.inf)
        winner = int(np.argmin(race))
        if not np.isfinite(race[winner]):
            # every remaining point coincides with a chosen centroid
            warnings.warn(
                f"only {len(columns)} distinct points for k={k}; duplicating centroids",
                DuplicatePointsWarning,
            )
            columns.append(columns[r % len(columns)].copy())
            continue
        c = feats[winner].copy()
        columns.append(c)
        dist_new = ((feats - c) ** 2).sum(axis=1)
        d2 = dist_new if d2 is None else np.minimum(d2, dist_new)
    return np.stack(columns, axis=1)


@dataclass
class KMeansIntraState:
    """Accumulators written during one assignment pass; the centroid matrix
    read during the pass is never touched."""

    sums: np.ndarray                      # (d, k) coordinate sums
    counts: np.ndarray                    # (k,) assigned-point counts
    reassigned: int = 0
    objective_accum: float = 0.0
    # farthest-point candidates (dist2, row_id, point) for empty-cluster
    # reseeding; at most k entries, ordered worst first, ties to lowest row
    worst: list = field(default_factory=list)


def _offer_worst(worst, candidates, cap):
    merged = worst + candidates
    merged.sort(key=lambda t: (-t[0], t[1]))
    del merged[cap:]
    return merged


def _accumulate(intra, centroids, point, prev_assignment, row_id):
    j, dist2 = closest_column(centroids, point)
    intra.sums[:, j] += point
    intra.counts[j] += 1
    intra.objective_accum += dist2
    if j != prev_assignment:
        intra.reassigned += 1
    cap = intra.counts.shape[0]
    intra.worst = _offer_worst(intra.worst, [(dist2, int(row_id), np.array(point, dtype=np.float64))], cap)
    return j


def kmeans_transition(intra, inter, point, prev_assignment, row_id=0):
    """Assign one point to its closest centroid of the read-only inter
    matrix and fold it into the intra accumulators."""
    point = np.asarray(point, dtype=np.float64)
    _accumulate(intra, inter, point, prev_assignment, row_id)
    return intra


def kmeans_merge(a, b):
    """Combine two partial pass states; pure."""
    cap = a.counts.shape[0]
    return KMeansIntraState(
        sums=a.sums + b.sums,
        counts=a.counts + b.counts,
        reassigned=a.reassigned + b.reassigned,
        objective_accum=a.objective_accum + b.objective_accum,
        worst=_offer_worst(list(a.worst), list(b.worst), cap),
    )


def kmeans_final(intra, inter):
    """Reposition each centroid to the barycenter of its assigned points.

    Empty clusters are reseeded to the farthest recorded points (ties to
    the lowest row id); returns (new centroids, fraction reassigned,
    objective of the pass).
    """
    new = inter.copy()
    nonempty = intra.counts > 0
    new[:, nonempty] = intra.sums[:, nonempty] / intra.counts[nonempty]
    candidates = iter(intra.worst)
    for j in np.flatnonzero(~nonempty):
        cand = next(candidates, None)
        if cand is None:
            break
        new[:, j] = cand[2]
    total = int(intra.counts.sum())
    frac = intra.reassigned / total if total else 0.0
    return new, float(frac), float(intra.objective_accum)


def _pass_block(intra, data, start, end, centroids, prev, out):
    feats = data.features
    k = centroids.shape[1]
    c_sq = (centroids ** 2).sum(axis=0)
    cand = []
    for lo in range(start, end, _ASSIGN_CHUNK):
        hi = min(lo + _ASSIGN_CHUNK, end)
        X = feats[lo:hi]
        x_sq = (X ** 2).sum(axis=1)
        d2 = x_sq[:, None] - 2.0 * (X @ centroids) + c_sq[None, :]
        j = np.argmin(d2, axis=1)
        rows = np.arange(hi - lo)
        mind2 = np.clip(d2[rows, j], 0.0, None)
        onehot = np.zeros((hi - lo, k))
        onehot[rows, j] = 1.0
        intra.sums += X.T @ onehot
        intra.counts += np.bincount(j, minlength=k).astype(np.int64)
        intra.objective_accum += float(mind2.sum())
        intra.reassigned += int(np.count_nonzero(j != prev[lo:hi]))
        out[lo:hi] = j
        top = np.lexsort((rows, -mind2))[:k]
        cand.extend(
            (float(mind2[t]), lo + int(t), X[t].copy()) for t in top
        )
    intra.worst = _offer_worst(intra.worst, cand, k)
    return intra


def kmeans_pass_spec(centroids, prev_assignments, out_assignments):
    """FoldSpec for one assignment pass.

    Reads each row's previous assignment from prev_assignments and writes
    its new assignment into out_assignments (partitions touch disjoint
    slices, so concurrent writes are safe). Finalizing is left to the
    driver, which calls kmeans_final.
    """
    centroids = np.asarray(centroids, dtype=np.float64)
    d, k = centroids.shape

    def identity():
        return KMeansIntraState(np.zeros((d, k)), np.zeros(k, dtype=np.int64))

    def transition(intra, row):
        j = _accumulate(intra, centroids, row.x, int(prev_assignments[row.index]), row.index)
        out_assignments[row.index] = j
        return intra

    def block(intra, data, start, end):
        return _pass_block(intra, data, start, end, centroids, prev_assignments, out_assignments)

    return FoldSpec(
        identity=identity,
        transition=transition,
        merge=kmeans_merge,
        final=lambda s: s,
        block_transition=block,
    )


@dataclass(frozen=True)
class KMeansResult:
    centroids: np.ndarray            # (d, k); column j is centroid j
    assignments: np.ndarray          # (n,) final centroid index per row
    objective: float
    iterations: int
    frac_reassigned_final: float
    converged: bool
    ledger: object = None            # IterationLedger of reassignment fractions


def kmeans_fit(data, k, seeding="kmeanspp", rng_seed=0, max_iter=100,
               reassign_tol=0.0, p=1):
    """Lloyd iterations driven through the fold machinery.

    An initial pass establishes stored assignments for the seeded
    centroids; every ledger iteration then repositions centroids and runs
    exactly one assignment pass, stopping once the fraction of reassigned
    points drops to reassign_tol.
    """
    if not 0.0 <= reassign_tol < 1.0:
        raise ValueError(f"reassign_tol must be in [0, 1), got {reassign_tol}")
    if max_iter < 1:
        raise ValueError(f"max_iter must be >= 1, got {max_iter}")
    n = len(data)
    centroids0 = seed_centroids(data, k, method=seeding, rng_seed=rng_seed)

    bufs = {
        "prev": np.full(n, -1, dtype=np.int64),
        "cur": np.empty(n, dtype=np.int64),
    }

    def one_pass(centroids, p):
        intra = fold_source(kmeans_pass_spec(centroids, bufs["prev"], bufs["cur"]), data, p)
        bufs["prev"], bufs["cur"] = bufs["cur"], bufs["prev"]
        return intra

    intra0 = one_pass(centroids0, p)

    def step(state, data, p):
        centroids_used, intra = state
        repositioned, _, _ = kmeans_final(intra, centroids_used)
        intra_new = one_pass(repositioned, p)
        return (repositioned, intra_new), intra_new.reassigned / n

    (final_centroids, final_intra), ledger = iterate(
        step,
        (centroids0, intra0),
        data,
        converged=lambda lg: lg.entries[-1].diagnostic <= reassign_tol,
        max_iter=max_iter,
        p=p,
    )
    frac_final = ledger.entries[-1].diagnostic
    return KMeansResult(
        centroids=final_centroids,
        assignments=bufs["prev"].copy(),
        objective=float(final_intra.objective_accum),
        iterations=len(ledger),
        frac_reassigned_final=float(frac_final),
        converged=bool(frac_final <= reassign_tol),
        ledger=ledger,
    )
