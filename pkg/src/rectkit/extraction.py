"""Coding argument and the global driver: pieces on which the chart is biLipschitz.

For a root cube Q_0 the cubes outside M_A mark the places where two nearby
cubes of a finer level may have overlapping images.  Two level-k cubes
conflict when both lie in S-tilde for some non-M_A cube S of level k + ell.
Words over a finite alphabet are assigned top-down: a cube without conflicts
inherits its parent's word, a cube with conflicts appends the smallest letter
that keeps its word prefix-incomparable with the words of every conflicting
cube.  Points are grouped by the word of their finest cube; points lying in
too many S-tildes (the set R_L) are set aside together with Sigma, Lambda and
the points outside DC.  Each word class is then pruned greedily to a fixed
biLipschitz bound and audited pair by pair.

The driver selects one cube level whose cubes are almost entirely inside DC,
runs the extraction on each selected cube with the budget split of the
covering argument and reports the total leftover of DC.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .carleson import NeighborIndex
from .charts import Chart, ImageContent
from .corona import CoronaParams, CubeLabels, label_cubes
from .cubes import CubeSystem, scale
from .space import PointCloudSpace


# =============================================================================
# Geometry constants b and ell
# =============================================================================

def smallest_double_cube(system: CubeSystem, rows=None) -> np.ndarray:
    """out[i, y] = finest cube S with rows[i] in S and y in 2S (-1 if none)."""
    s = system
    rows = np.arange(s.space.size) if rows is None else np.asarray(rows, dtype=int)
    pos = np.full(s.space.size, -1, dtype=int)
    pos[rows] = np.arange(len(rows))
    out = np.full((len(rows), s.space.size), -1, dtype=np.int32)
    for k in sorted(s.levels):  # finest first: doubles are nested along a chain
        for q in s.level_cubes[k]:
            xs = pos[s.members[q]]
            xs = xs[xs >= 0]
            if xs.size == 0:
                continue
            near = np.flatnonzero(s.distance_to_cube(q) <= s.diameters[q])
            block = out[np.ix_(xs, near)]
            block[block < 0] = q
            out[np.ix_(xs, near)] = block
    return out


@dataclass
class GeometryConstants:
    b: float
    ell: int
    witness: tuple | None     # (x, y, cube) realising b
    level_diameters: dict

    def to_dict(self) -> dict:
        return {"b": self.b, "ell": self.ell,
                "witness": None if self.witness is None else [int(v) for v in self.witness],
                "level_diameters": {str(k): v for k, v in self.level_diameters.items()}}


def compute_b_and_ell(system: CubeSystem) -> GeometryConstants:
    """Exact b over all pairs of distinct K points, and the least admissible ell."""
    s = system
    K = s.K.members
    if len(K) < 2:
        raise ValueError("b is undefined for fewer than two points")
    table = smallest_double_cube(s, K)[:, K]
    d = s.space.distances[np.ix_(K, K)]
    diam = s.diameters[np.maximum(table, 0)]
    ok = (table >= 0) & (d > 0) & (diam > 0)
    ratio = np.where(ok, d / np.where(ok, 10.0 * diam, 1.0), np.inf)
    flat = int(np.argmin(ratio))
    i, j = divmod(flat, len(K))
    if not np.isfinite(ratio[i, j]):
        raise ValueError("no qualifying pair for b")
    b = float(ratio[i, j])
    witness = (int(K[i]), int(K[j]), int(table[i, j]))

    levels = sorted(s.levels)
    dmax = {k: float(s.diameters[s.level_cubes[k]].max()) for k in levels}
    dmin = {k: float(s.diameters[s.level_cubes[k]].min()) for k in levels}
    ell = len(levels)
    for cand in range(1, len(levels)):
        if all(dmax[k] < b * dmin[k + cand] for k in levels if k + cand in dmin):
            ell = cand
            break
    if len(levels) == 1:
        ell = 1
    return GeometryConstants(b, ell, witness, {k: [dmin[k], dmax[k]] for k in levels})


# =============================================================================
# BiLipschitz audits
# =============================================================================

def pair_ratio_matrix(space: PointCloudSpace, chart: Chart, a, b) -> np.ndarray:
    a, b = np.asarray(a, dtype=int), np.asarray(b, dtype=int)
    img = np.linalg.norm(chart.values[a, None, :] - chart.values[None, b, :], axis=2)
    d = space.distances[np.ix_(a, b)]
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(d > 0, img / np.where(d > 0, d, 1.0), np.inf)


def verify_bilipschitz(space: PointCloudSpace, chart: Chart, piece, k_bound: float,
                       chunk: int = 512) -> tuple[bool, float, tuple | None]:
    """Exhaustive check of ||phi(x) - phi(y)|| >= d(x, y) / k_bound over the piece."""
    piece = np.asarray(piece, dtype=int)
    worst, pair = math.inf, None
    for start in range(0, len(piece), chunk):
        rows = piece[start:start + chunk]
        r = pair_ratio_matrix(space, chart, rows, piece)
        idx = np.unravel_index(int(np.argmin(r)), r.shape)
        if r[idx] < worst:
            worst, pair = float(r[idx]), (int(rows[idx[0]]), int(piece[idx[1]]))
    if not np.isfinite(worst):
        return True, math.inf, None
    return bool(worst >= 1.0 / k_bound * (1 - 1e-12)), worst, pair


def greedy_prune(space: PointCloudSpace, chart: Chart, ids, k_bound: float) -> tuple[np.ndarray, np.ndarray]:
    """Keep points in id order while every kept pair stays k_bound-biLipschitz."""
    ids = np.sort(np.asarray(ids, dtype=int))
    kept = []
    dropped = []
    floor = 1.0 / k_bound
    vals = chart.values
    d = space.distances
    for x in ids:
        if kept:
            kk = np.asarray(kept)
            img = np.linalg.norm(vals[kk] - vals[x], axis=1)
            if np.any(img < floor * d[x, kk] * (1 - 1e-12)):
                dropped.append(int(x))
                continue
        kept.append(int(x))
    return np.array(kept, dtype=int), np.array(dropped, dtype=int)


def weak_bilip_test(labels: CubeLabels, chart: Chart, q: int, x: int, y: int, k: float,
                    dc_mask: np.ndarray, b: float) -> dict:
    """Weak biLipschitz conclusion for one pair in 2Q."""
    s = labels.system
    if not labels.MA[q]:
        raise ValueError("cube is not in M_A")
    double = s.distance_to_cube(q) <= s.diameters[q]
    root = s.member_mask(labels.root)
    for p in (x, y):
        if not (double[p] and root[p] and dc_mask[p]):
            raise ValueError("points must lie in 2Q, Q_0 and DC")
    d = s.space.distances[x, y]
    if not d > b * s.diameters[q]:
        return {"applicable": False, "holds": True, "ratio": None, "overlap": None}
    ratio = float(np.linalg.norm(chart.values[x] - chart.values[y]) / d)
    # overlap of the image cells of the two balls one level down
    radius = scale(int(s.cube_level[q]) - 1)
    K = s.K.mask
    content = labels.content
    bx = s.space.ball_members(x, radius)
    by = s.space.ball_members(y, radius)
    cx = np.unique(content.cell_keys[bx[K[bx]]])
    cy = np.unique(content.cell_keys[by[K[by]]])
    shared = np.intersect1d(cx, cy).size * content.h ** content.dim
    base = labels.image[q]
    return {"applicable": True, "holds": bool(ratio >= 1.0 / k * (1 - 1e-12)), "ratio": ratio,
            "overlap": float(shared / base) if base > 0 else None}


def weak_bilip_scan(labels: CubeLabels, chart: Chart, dc_mask: np.ndarray, b: float) -> dict:
    """Worst ratio over all M_A cubes and qualifying pairs; k is its reciprocal."""
    s = labels.system
    root = s.member_mask(labels.root)
    good = root & np.asarray(dc_mask, dtype=bool) & s.K.mask
    worst, where, pairs = math.inf, None, 0
    for q in labels.cubes[labels.MA[labels.cubes]]:
        pts = np.flatnonzero((s.distance_to_cube(q) <= s.diameters[q]) & good)
        if len(pts) < 2:
            continue
        cut = b * s.diameters[q]
        for start in range(0, len(pts), 512):
            rows = pts[start:start + 512]
            r = pair_ratio_matrix(s.space, chart, rows, pts)
            r[s.space.distances[np.ix_(rows, pts)] <= cut] = np.inf
            pairs += int(np.isfinite(r).sum())
            idx = np.unravel_index(int(np.argmin(r)), r.shape)
            if r[idx] < worst:
                worst, where = float(r[idx]), (int(q), int(rows[idx[0]]), int(pts[idx[1]]))
    return {"pairs": pairs, "min_ratio": None if math.isinf(worst) else worst,
            "k": None if math.isinf(worst) or worst == 0 else 1.0 / worst, "witness": where}


# =============================================================================
# Word assignment
# =============================================================================

@dataclass
class CodingState:
    root: int
    ell: int
    words: dict                 # cube -> tuple of letters
    conflicts: dict             # cube -> sorted array of conflicting cubes
    T: int
    alphabet: int
    point_words: dict           # point -> word of its finest cube
    counts: np.ndarray          # N(x) per point
    prefix_violations: int

    def to_dict(self) -> dict:
        return {
            "root": self.root, "ell": self.ell, "T": self.T, "alphabet": self.alphabet,
            "words": {str(q): list(w) for q, w in sorted(self.words.items())},
            "max_conflicts": self.T, "prefix_violations": self.prefix_violations,
        }


def _prefix(a: tuple, b: tuple) -> bool:
    return len(a) <= len(b) and b[:len(a)] == a


def conflict_families(labels: CubeLabels, ell: int) -> tuple[dict, np.ndarray]:
    """F(Q) for every cube of Delta(Q_0), and N(x) over all points."""
    s = labels.system
    root = labels.root
    cubes = labels.cubes
    counts = np.zeros(s.space.size, dtype=int)
    conflicts = {int(q): set() for q in cubes}
    level_of = s.cube_level
    by_level = {}
    for q in cubes:
        by_level.setdefault(int(level_of[q]), []).append(int(q))
    for S in cubes[~labels.MA[cubes]]:
        tilde = s.tilde(S, root)
        counts[tilde] += 1
        k = int(level_of[S]) - ell
        if k not in by_level:
            continue
        li = s.level_index(k)
        lab = s.labels[li, tilde]
        lab = lab[lab >= 0]
        hits = np.bincount(lab, minlength=len(s))
        inside = [q for q in by_level[k] if hits[q] == len(s.members[q])]
        for q in inside:
            conflicts[q].update(inside)
    out = {q: np.array(sorted(v - {q}), dtype=int) for q, v in conflicts.items()}
    return out, counts


def assign_words(labels: CubeLabels, ell: int) -> CodingState:
    s = labels.system
    conflicts, counts = conflict_families(labels, ell)
    T = max((len(v) for v in conflicts.values()), default=0)
    words: dict[int, tuple] = {}
    root = labels.root
    for q in labels.cubes:  # breadth-first, so every level is finished before the next
        q = int(q)
        p = s.cube_parent[q]
        base = () if q == root else words[int(p)]
        fam = conflicts[q]
        if fam.size == 0:
            words[q] = base
            continue
        banned = set()
        for other in fam:
            other = int(other)
            ref = words.get(other)
            if ref is None:
                ref = words[int(s.cube_parent[other])]
            if len(ref) > len(base) and ref[:len(base)] == base:
                banned.add(ref[len(base)])
        free = [c for c in range(T + 1) if c not in banned]
        if not free:
            raise RuntimeError("alphabet exhausted: more conflicts than letters")
        words[q] = base + (free[0],)
    violations = 0
    for q, fam in conflicts.items():
        for other in fam:
            if _prefix(words[q], words[int(other)]) or _prefix(words[int(other)], words[q]):
                violations += 1
    point_words = {}
    for x in s.members[root]:
        chain = s.chain(int(x))
        finest = next(int(c) for c in chain if labels.in_delta[c])
        point_words[int(x)] = words[finest]
    return CodingState(int(root), int(ell), words, conflicts, int(T), int(T) + 1, point_words,
                       counts, violations)


# =============================================================================
# Extraction
# =============================================================================

@dataclass
class DecompositionResult:
    root: int
    pieces: list                 # arrays of point ids
    piece_words: list
    piece_k: list                # measured k = 1 / min pair ratio (1.0 for singletons)
    leftover: np.ndarray
    categories: dict             # leftover mass by reason
    mu_root: float
    mu_root_K: float
    covered: float
    budget: dict
    L_prime: int
    T: int
    ell: int
    b: float
    k_bound: float
    all_verified: bool
    piece_bound_ok: bool
    identity_error: float
    coding: CodingState | None = field(default=None, repr=False)

    @property
    def covered_fraction(self) -> float:
        return self.covered / self.mu_root_K if self.mu_root_K > 0 else 0.0

    def to_dict(self) -> dict:
        return {
            "root": self.root,
            "pieces": [[int(x) for x in p] for p in self.pieces],
            "piece_words": [list(w) for w in self.piece_words],
            "piece_k": self.piece_k,
            "leftover": [int(x) for x in self.leftover],
            "categories": self.categories,
            "mu_root": self.mu_root, "mu_root_K": self.mu_root_K,
            "covered": self.covered, "covered_fraction": self.covered_fraction,
            "budget": self.budget, "L_prime": self.L_prime, "T": self.T, "ell": self.ell,
            "b": self.b, "k_bound": self.k_bound, "all_verified": self.all_verified,
            "piece_bound_ok": self.piece_bound_ok, "identity_error": self.identity_error,
        }


def extract_pieces(labels: CubeLabels, chart: Chart, dc_mask: np.ndarray, eps: float,
                   geometry: GeometryConstants, c: float = 1.0, k_bound: float = 10.0) -> DecompositionResult:
    """Word classes of (Q_0 cap K cap DC) minus Sigma, Lambda and R_L', pruned to k_bound."""
    s = labels.system
    p = labels.params
    w = s.space.weights
    K = s.K.mask
    root = labels.root
    n = s.dimension
    in_root = s.member_mask(root)
    rootK = in_root & K
    dc = np.asarray(dc_mask, dtype=bool)
    sigma = labels.sigma_set(c * p.delta ** n) & in_root
    lam = labels.lambda_set() & in_root
    base = rootK & ~(sigma | lam)
    if not w[base].sum() > 0:
        raise ValueError("(Q_0 cap K) minus Sigma and Lambda has zero mass")

    coding = assign_words(labels, geometry.ell)
    counts = coding.counts
    # L': least threshold whose exceptional set R_L has mass below eps
    L_prime = 1
    while w[base & (counts >= L_prime)].sum() >= eps:
        L_prime += 1
    exceptional = base & (counts >= L_prime)
    candidates = base & dc & ~exceptional

    classes: dict[tuple, list] = {}
    for x in np.flatnonzero(candidates):
        classes.setdefault(coding.point_words[int(x)], []).append(int(x))
    pieces, words, ks, pruned = [], [], [], []
    all_ok = True
    for word in sorted(classes):
        kept, dropped = greedy_prune(s.space, chart, classes[word], k_bound)
        pruned.extend(dropped.tolist())
        if kept.size == 0:
            continue
        ok, worst, _ = verify_bilipschitz(s.space, chart, kept, k_bound)
        all_ok &= ok
        pieces.append(kept)
        words.append(word)
        ks.append(1.0 if math.isinf(worst) else (math.inf if worst == 0 else 1.0 / worst))
    pruned_mask = np.zeros(s.space.size, dtype=bool)
    pruned_mask[pruned] = True

    covered_mask = np.zeros(s.space.size, dtype=bool)
    for piece in pieces:
        covered_mask[piece] = True
    leftover = rootK & ~covered_mask
    cats = {
        "sigma": float(w[rootK & sigma].sum()),
        "lambda": float(w[rootK & lam & ~sigma].sum()),
        "outside_dc": float(w[base & ~dc].sum()),
        "exceptional": float(w[base & dc & exceptional].sum()),
        "pruned": float(w[pruned_mask].sum()),
    }
    mu_root = float(w[in_root].sum())
    mu_root_K = float(w[rootK].sum())
    covered = float(w[covered_mask].sum())
    mu_left = float(w[leftover].sum())
    mu_bad = float(w[in_root & ~dc].sum())
    rest = float(w[sigma].sum()) + float(w[rootK & ~dc].sum()) + cats["pruned"]
    if rest == 0:
        const = 0.0
    elif mu_bad == 0:
        const = math.inf
    else:
        const = rest / mu_bad
    bound = eps + p.eta * mu_root + (const * mu_bad if const > 0 else 0.0)
    budget = {"eps": eps, "eta_term": p.eta * mu_root, "outside_dc_mass": mu_bad,
              "constant": const, "bound": bound, "leftover": mu_left,
              "within": bool(mu_left <= bound * (1 + 1e-12))}
    piece_limit = float(coding.alphabet) ** L_prime
    return DecompositionResult(
        int(root), pieces, words, ks, np.flatnonzero(leftover), cats, mu_root, mu_root_K,
        covered, budget, int(L_prime), coding.T, geometry.ell, geometry.b, float(k_bound), bool(all_ok),
        bool(len(pieces) <= piece_limit), abs(mu_left + covered - mu_root_K), coding)


def separation_audit(result: DecompositionResult, labels: CubeLabels, chart: Chart,
                     max_pairs: int = 200_000, seed: int = 0) -> dict:
    """Same-piece pairs: M_A smallest cubes keep the ratio, others never meet a conflict."""
    s = labels.system
    coding = result.coding
    rng = np.random.default_rng(seed)
    ell = result.ell
    checked = conflicts = 0
    worst = math.inf
    for piece in result.pieces:
        if len(piece) < 2:
            continue
        m = len(piece)
        if m * (m - 1) // 2 <= max_pairs:
            ii, jj = np.triu_indices(m, 1)
        else:
            ii = rng.integers(0, m, max_pairs)
            jj = rng.integers(0, m, max_pairs)
            keep = ii != jj
            ii, jj = ii[keep], jj[keep]
        xs, ys = piece[ii], piece[jj]
        table = smallest_double_cube(s, np.unique(xs))
        pos = {int(x): i for i, x in enumerate(np.unique(xs))}
        for x, y in zip(xs.tolist(), ys.tolist()):
            S = int(table[pos[x], y])
            checked += 1
            if S < 0 or not labels.in_delta[S]:
                continue
            if labels.MA[S]:
                r = np.linalg.norm(chart.values[x] - chart.values[y]) / s.space.distances[x, y]
                worst = min(worst, float(r))
                continue
            k = int(s.cube_level[S]) - ell
            if k not in s.levels:
                continue
            qx = int(s.labels[s.level_index(k), x])
            qy = int(s.labels[s.level_index(k), y])
            if qx != qy and qy in set(coding.conflicts.get(qx, np.zeros(0, int)).tolist()):
                conflicts += 1
    return {"pairs": checked, "conflicts": conflicts,
            "min_ratio_under_MA": None if math.isinf(worst) else worst}


# =============================================================================
# Global driver
# =============================================================================

@dataclass
class DriverReport:
    eps_budget: float
    mu_K: float
    mu_dc: float
    degenerate: bool
    level: int | None
    cubes: list
    selection: dict
    results: list
    pieces: list
    leftover: float
    ok: bool
    constant: float

    def to_dict(self) -> dict:
        return {
            "eps_budget": self.eps_budget, "mu_K": self.mu_K, "mu_dc": self.mu_dc,
            "degenerate": self.degenerate, "level": self.level,
            "cubes": [int(q) for q in self.cubes], "selection": self.selection,
            "piece_count": len(self.pieces),
            "pieces": [[int(x) for x in p] for p in self.pieces],
            "per_cube": [{"root": r.root, "covered": r.covered, "leftover": r.budget["leftover"],
                          "bound": r.budget["bound"], "within": r.budget["within"],
                          "L_prime": r.L_prime, "T": r.T, "all_verified": r.all_verified,
                          "max_k": max(r.piece_k) if r.piece_k else None} for r in self.results],
            "leftover": self.leftover, "ok": self.ok, "constant": self.constant,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, allow_nan=True)


def select_dense_cubes(system: CubeSystem, dc_mask: np.ndarray, lam: float, eps: float) -> tuple:
    """Highest level J whose cubes with mu(Q \\ DC) < lam mu(Q) cover DC up to eps/4."""
    s = system
    w = s.space.weights
    A = np.asarray(dc_mask, dtype=bool) & s.K.mask
    tried = []
    for k in sorted(s.levels, reverse=True):
        cubes = s.level_cubes[k]
        outside = np.array([w[s.members[q]][~A[s.members[q]]].sum() for q in cubes])
        dense = cubes[outside < lam * s.mass[cubes]]
        covered = np.zeros(s.space.size, dtype=bool)
        for q in dense:
            covered[s.members[q]] = True
        miss = float(w[A & ~covered].sum())
        tried.append({"level": int(k), "cubes": int(dense.size), "uncovered_dc": miss})
        if dense.size and miss < eps / 4:
            per_cube_ok = bool(np.all(outside[np.isin(cubes, dense)] < lam * s.mass[dense]))
            return int(k), dense, {"levels_tried": tried, "uncovered_dc": miss,
                                   "dense_ok": per_cube_ok, "lambda": lam}
    raise ValueError("no cube level approximates DC within eps/4")


def rectifiability_driver(system: CubeSystem, chart: Chart, content: ImageContent, dc_mask: np.ndarray,
                          eps_budget: float, params: CoronaParams, C: float = 1.0, c: float = 1.0,
                          k_bound: float = 10.0, geometry: GeometryConstants | None = None) -> DriverReport:
    s = system
    w = s.space.weights
    K = s.K.mask
    A = np.asarray(dc_mask, dtype=bool) & K
    mu_K = float(w[K].sum())
    mu_dc = float(w[A].sum())
    if eps_budget >= mu_K:
        return DriverReport(eps_budget, mu_K, mu_dc, True, None, [], {}, [], [], mu_dc,
                            mu_dc <= eps_budget, C)
    if mu_dc <= 0:
        raise ValueError("DC has zero mass; nothing to decompose")
    lam = eps_budget / (8 * C * mu_dc)
    eta = eps_budget / (8 * mu_dc)
    level, cubes, selection = select_dense_cubes(s, A, lam, eps_budget)
    geometry = geometry or compute_b_and_ell(s)
    local = CoronaParams(params.delta, eta, params.tau, params.zeta, params.sigma, params.A,
                         params.check_compatibility)
    index = NeighborIndex(s, params.A)
    per_eps = eps_budget / (4 * len(cubes))
    results, pieces = [], []
    covered = np.zeros(s.space.size, dtype=bool)
    for q in cubes:
        labels = label_cubes(s, int(q), local, content, index, check_h=False)
        res = extract_pieces(labels, chart, A, per_eps, geometry, c, k_bound)
        res.coding = None
        results.append(res)
        for piece in res.pieces:
            piece = piece[A[piece]]
            if piece.size:
                pieces.append(piece)
                covered[piece] = True
    leftover = float(w[A & ~covered].sum())
    consts = [r.budget["constant"] for r in results]
    worst_c = max(consts) if consts else 0.0
    return DriverReport(eps_budget, mu_K, mu_dc, False, level, [int(q) for q in cubes], selection,
                        results, pieces, leftover, leftover < eps_budget, float(max(C, worst_c)))
