"""Dual-slab (wave packet tube) intersection volumes for the bilinear
Kakeya geometry: exact halfspace method in low dimension, Monte Carlo above."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull, HalfspaceIntersection

from ..quadform import QuadraticSystem, frame_at

__all__ = ["MethodInfeasible", "TubeVolume", "tube_slab_matrix", "tube_intersection"]


class MethodInfeasible(ValueError):
    """Exact polytope volumes are limited to ambient dimension <= 4."""


@dataclass(frozen=True)
class TubeVolume:
    volume: float
    method: str
    K: float
    separation: float
    stderr: float = 0.0


def tube_slab_matrix(sys: QuadraticSystem, xi, K: float):
    """Frame matrix and half-widths of the dual slab at base xi.

    The slab spans K^(1/2) along the d tangential directions and K along the
    l normal directions and the central direction, oriented by the conical
    frame at xi and centered at the origin.
    """
    fr = frame_at(sys, xi, conical=True)
    F = np.column_stack([fr.tangents.T, fr.normals.T, fr.center])
    hw = np.concatenate([np.full(sys.d, np.sqrt(K)), np.full(sys.l + 1, float(K))])
    return F, hw


def _halfspaces(F: np.ndarray, hw: np.ndarray) -> np.ndarray:
    """|<dual_k, x>| <= hw_k rows in scipy's [normal, offset] convention."""
    duals = np.linalg.inv(F)           # row k pairs to coefficient k
    rows = []
    for k, w in enumerate(hw):
        n = duals[k]
        rows.append(np.concatenate([n, [-w]]))
        rows.append(np.concatenate([-n, [-w]]))
    return np.array(rows)


def _exact_volume(F1, hw1, F2, hw2) -> float:
    hs = np.vstack([_halfspaces(F1, hw1), _halfspaces(F2, hw2)])
    interior = np.zeros(F1.shape[0])
    inter = HalfspaceIntersection(hs, interior)
    return float(ConvexHull(inter.intersections).volume)


def _mc_volume(F1, hw1, F2, hw2, samples: int, seed: int):
    rng = np.random.default_rng(seed)
    m = F1.shape[0]
    duals2 = np.linalg.inv(F2)
    vol1 = float(abs(np.linalg.det(F1)) * np.prod(2 * hw1))
    hits = 0
    chunk = 2 ** 20
    left = samples
    while left > 0:
        n = min(chunk, left)
        z = rng.uniform(-hw1, hw1, size=(n, m))
        x = z @ F1.T
        c2 = x @ duals2.T
        hits += int(np.count_nonzero(np.all(np.abs(c2) <= hw2, axis=1)))
        left -= n
    frac = hits / samples
    err = vol1 * np.sqrt(max(frac * (1 - frac), 1e-300) / samples)
    return vol1 * frac, err


def tube_intersection(sys: QuadraticSystem, K: float, xi1, xi2,
                      method: str = "auto", samples: int = 10 ** 7,
                      seed: int = 0) -> TubeVolume:
    """Volume of the intersection of the dual slabs at xi1 and xi2.

    method 'exact-lp' solves the halfspace polytope (ambient n+1 <= 4);
    'monte-carlo' samples the first slab; 'auto' picks by dimension.
    """
    m = sys.n + 1
    if method == "auto":
        method = "exact-lp" if m <= 4 else "monte-carlo"
    F1, hw1 = tube_slab_matrix(sys, xi1, K)
    F2, hw2 = tube_slab_matrix(sys, xi2, K)
    sep = float(np.linalg.norm(np.asarray(xi1, dtype=float) - np.asarray(xi2, dtype=float)))
    if method == "exact-lp":
        if m > 4:
            raise MethodInfeasible(f"exact method needs ambient <= 4, have {m}")
        return TubeVolume(volume=_exact_volume(F1, hw1, F2, hw2),
                          method=method, K=K, separation=sep)
    if method == "monte-carlo":
        vol, err = _mc_volume(F1, hw1, F2, hw2, samples, seed)
        return TubeVolume(volume=vol, method=method, K=K, separation=sep, stderr=err)
    raise ValueError(f"unknown method {method!r}")
