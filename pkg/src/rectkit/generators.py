"""Instance generators: spaces, fragment libraries and library surgery.

All built-in spaces carry total mass 1.
"""

from __future__ import annotations

import itertools

import numpy as np

from .curves import CurveFragment, CurveLibrary, admit_fragment
from .space import PointCloudSpace


# =============================================================================
# Spaces
# =============================================================================

def grid_space(n: int, N: int) -> PointCloudSpace:
    """Cell centres (i + 1/2)/N of the unit cube [0,1]^n, uniform weights."""
    if n < 1 or N < 1:
        raise ValueError("grid needs n >= 1 and N >= 1")
    g = (np.arange(N) + 0.5) / N
    coords = np.array(list(itertools.product(g, repeat=n)), dtype=float)
    return PointCloudSpace(coords, np.full(len(coords), 1.0 / len(coords)))


def line_space(N: int, spacing: float = 1.0) -> PointCloudSpace:
    """N points at the given spacing on the real line, total mass 1."""
    coords = (np.arange(N) * spacing)[:, None]
    return PointCloudSpace(coords, np.full(N, 1.0 / N))


def comb_lengths(depth: int) -> list[tuple[int, int, float]]:
    """(level m, odd numerator p, tooth length 4^-m) for both sides of every tooth."""
    return [(m, p, 4.0 ** -m) for m in range(1, depth + 1) for p in range(1, 2 ** m, 2)]


def comb_space(depth: int = 4, spine_samples: int = 256, tooth_samples: int = 4) -> PointCloudSpace:
    """The spine {0} x [0,1] plus teeth at heights p/2^m reaching out to +-2^-m.

    Every tooth has length 4^-m and sits at distance 2^-m - 4^-m from the
    spine.  Samples are midpoints of equal subsegments and carry their share
    of total length, normalised to mass 1.
    """
    if depth < 0 or spine_samples < 1 or tooth_samples < 1:
        raise ValueError("invalid comb parameters")
    pts, lengths = [], []
    ys = (np.arange(spine_samples) + 0.5) / spine_samples
    pts.extend((0.0, y) for y in ys)
    lengths.extend([1.0 / spine_samples] * spine_samples)
    for m, p, length in comb_lengths(depth):
        height = p / 2.0 ** m
        near = 2.0 ** -m - length
        xs = near + (np.arange(tooth_samples) + 0.5) / tooth_samples * length
        for sign in (1.0, -1.0):
            pts.extend((sign * x, height) for x in xs)
            lengths.extend([length / tooth_samples] * tooth_samples)
    w = np.asarray(lengths)
    return PointCloudSpace(np.asarray(pts), w / w.sum())


def snowflake_space(alpha: float, N: int) -> PointCloudSpace:
    """Midpoints of [0,1] under the metric |x - y|^alpha."""
    coords = ((np.arange(N) + 0.5) / N)[:, None]
    return PointCloudSpace(coords, np.full(N, 1.0 / N), metric="snowflake", alpha=alpha)


def heisenberg_space(N: int) -> PointCloudSpace:
    """The lattice {0, 1/N, ..., (N-1)/N}^3 with the Korányi metric."""
    g = np.arange(N) / N
    coords = np.array(list(itertools.product(g, g, g)), dtype=float)
    return PointCloudSpace(coords, np.full(len(coords), 1.0 / len(coords)), metric="heisenberg")


def random_cloud(size: int, dim: int = 2, seed: int = 0) -> PointCloudSpace:
    rng = np.random.default_rng(seed)
    return PointCloudSpace(rng.random((size, dim)), np.full(size, 1.0 / size))


# =============================================================================
# Fragment libraries
# =============================================================================

def axis_line_library(space: PointCloudSpace, decimals: int = 9) -> CurveLibrary:
    """Every maximal axis-parallel line of points, parametrised by its free coordinate."""
    coords = np.round(space.coords, decimals)
    dim = coords.shape[1]
    frags = []
    for a in range(dim):
        rest = np.delete(coords, a, axis=1)
        keys, inverse = np.unique(rest, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        for g in range(len(keys)):
            ids = np.flatnonzero(inverse == g)
            if len(ids) < 2:
                continue
            ids = ids[np.argsort(space.coords[ids, a], kind="stable")]
            frags.append(admit_fragment(space, space.coords[ids, a], ids))
    return CurveLibrary(frags)


def random_monotone_library(space: PointCloudSpace, count: int, seed: int = 0,
                            length: int = 16, fan: int = 4) -> CurveLibrary:
    """Random walks that strictly increase the first coordinate, timed by arc length."""
    rng = np.random.default_rng(seed)
    x0 = space.coords[:, 0]
    d = space.distances
    frags = []
    attempts = 0
    while len(frags) < count and attempts < 20 * count:
        attempts += 1
        cur = int(rng.integers(space.size))
        path = [cur]
        for _ in range(length - 1):
            ahead = np.flatnonzero(x0 > x0[cur] + 1e-12)
            if ahead.size == 0:
                break
            near = ahead[np.argsort(d[cur, ahead], kind="stable")[:fan]]
            cur = int(near[rng.integers(len(near))])
            path.append(cur)
        if len(path) < 2:
            continue
        ids = np.array(path)
        times = np.concatenate([[0.0], np.cumsum(d[ids[1:], ids[:-1]])])
        try:
            frags.append(admit_fragment(space, times, ids))
        except ValueError:
            continue
    return CurveLibrary(frags)


def carve_library(space: PointCloudSpace, library: CurveLibrary, center: int, radius: float) -> CurveLibrary:
    """Drop every sample within ``radius`` of ``center``; runs left over become separate domain intervals."""
    d = space.distances[center]
    out = []
    for frag in library:
        keep = d[frag.point_ids] > radius
        if keep.all():
            out.append(frag)
            continue
        if keep.sum() < 2:
            continue
        idx = np.flatnonzero(keep)
        breaks = np.flatnonzero(np.diff(idx) > 1)
        runs = np.split(idx, breaks + 1)
        intervals = [[frag.times[r[0]], frag.times[r[-1]]] for r in runs]
        new = admit_fragment(space, frag.times[idx], frag.point_ids[idx], intervals)
        out.append(new)
    return CurveLibrary(out)
