"""Multi-objective evaluation metrics (maximisation orientation).

The hypervolume of a point set S relative to a reference point z is the
Lebesgue measure of {p : z <= p <= q for some q in S}.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class ParetoPoint:
    alpha: tuple[float, ...]
    q: tuple[float, ...]

    def __post_init__(self):
        if len(self.alpha) != len(self.q):
            raise ValueError("alpha and q must have the same length")
        if not np.all(np.isfinite(self.q)):
            raise ValueError("objective values must be finite")

    def to_dict(self) -> dict:
        return {"alpha": list(self.alpha), "q": list(self.q)}


def _as_points(points) -> np.ndarray:
    P = np.asarray(points, dtype=float)
    if P.size == 0:
        return P.reshape(0, 0)
    if P.ndim != 2:
        raise ValueError(f"points must be a 2-D array, got shape {P.shape}")
    return P


def pareto_filter(points) -> list:
    """Points not weakly dominated by any other point; input order kept.

    Of several identical points only the first survives.
    """
    P = _as_points(points)
    if P.size == 0:
        return []
    keep = []
    for i, p in enumerate(P):
        dominated = False
        for j, q in enumerate(P):
            if i == j:
                continue
            if np.all(q >= p) and (np.any(q > p) or j < i):
                dominated = True
                break
        if not dominated:
            keep.append(i)
    return [points[i] for i in keep]


def check_reference(points, ref) -> None:
    P, z = _as_points(points), np.asarray(ref, dtype=float)
    if P.size == 0:
        return
    if P.shape[1] != z.shape[0]:
        raise ValueError(f"reference point has {z.shape[0]} coordinates, points have {P.shape[1]}")
    bad = [tuple(p.tolist()) for p in P if not np.all(p > z)]
    if bad:
        raise ValueError(f"reference point {tuple(z.tolist())} is not strictly dominated by points {bad}")


def _hv2d(P: np.ndarray, z: np.ndarray) -> float:
    # sweep by descending first coordinate, accumulating new area in the second
    order = np.argsort(-P[:, 0], kind="stable")
    area, best_y = 0.0, z[1]
    for x, y in P[order]:
        if y > best_y:
            area += (x - z[0]) * (y - best_y)
            best_y = y
    return float(area)


def _hv3d(P: np.ndarray, z: np.ndarray) -> float:
    # slice along the third coordinate: between consecutive levels the
    # dominated cross-section is the 2-D hypervolume of points at or above it
    levels = np.unique(P[:, 2])[::-1]
    vol = 0.0
    for i, level in enumerate(levels):
        lower = levels[i + 1] if i + 1 < len(levels) else z[2]
        vol += _hv2d(P[P[:, 2] >= level][:, :2], z[:2]) * (level - lower)
    return float(vol)


def hypervolume(points, ref) -> float:
    """Exact dominated volume for 1 <= k <= 3 objectives."""
    P, z = _as_points(points), np.asarray(ref, dtype=float)
    if P.size == 0:
        return 0.0
    check_reference(P, z)
    P = _as_points(pareto_filter(P))
    k = P.shape[1]
    if k == 1:
        return float(P[:, 0].max() - z[0])
    if k == 2:
        return _hv2d(P, z)
    if k == 3:
        return _hv3d(P, z)
    raise ValueError(f"exact hypervolume is implemented for k <= 3, got k={k}")


def hypervolume_mc(points, ref, samples: int = 1_000_000, seed: int = 0, chunk: int = 200_000) -> float:
    """Monte-Carlo estimate over the box [ref, componentwise max]."""
    P, z = _as_points(points), np.asarray(ref, dtype=float)
    if P.size == 0:
        return 0.0
    check_reference(P, z)
    hi = P.max(axis=0)
    box = float(np.prod(hi - z))
    if box <= 0:
        return 0.0
    rng = np.random.default_rng(seed)
    hits = 0
    left = samples
    while left > 0:
        m = min(chunk, left)
        X = rng.uniform(z, hi, size=(m, len(z)))
        dominated = np.zeros(m, dtype=bool)
        for p in P:
            dominated |= np.all(X <= p, axis=1)
        hits += int(dominated.sum())
        left -= m
    return box * hits / samples


def mip(points: Sequence[ParetoPoint]) -> float:
    """Mean inner product between preference vectors and achieved rewards."""
    if not points:
        raise ValueError("mip needs at least one point")
    k = {len(p.alpha) for p in points}
    if len(k) != 1:
        raise ValueError("points disagree on the number of objectives")
    return float(np.mean([np.dot(p.alpha, p.q) for p in points]))


def shared_reference(point_sets: Sequence[Sequence[Sequence[float]]], margin: float = 1.0) -> tuple[float, ...]:
    """Componentwise minimum over every compared set, minus ``margin``."""
    allp = np.concatenate([np.asarray(s, dtype=float) for s in point_sets if len(s)])
    return tuple(float(x) for x in allp.min(axis=0) - margin)
