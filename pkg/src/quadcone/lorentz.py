"""Generalized Lorentz transform: the affine frequency map that rescales a
sector of the cone over a quadratic manifold to the full cone."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .quadform import QuadraticSystem

__all__ = ["LorentzMap", "RescalingReport", "distance_to_cone",
           "neighborhood_rescaling_check"]


@dataclass(frozen=True)
class LorentzMap:
    """(xi, zeta, h) -> (eta, zeta', h) with eta = (xi - h xi_tau)/s and
    zeta'_i = zeta_i/s^2 - <eta, A_i xi_tau>/s - h <xi_tau, A_i xi_tau>/(2 s^2).

    Linear on R^(n+1) for pure quadratic systems; maps the s-sector around
    xi_tau onto the full cone, heights unchanged, and amplifies neighborhood
    thickness by s^-2.
    """

    sys: QuadraticSystem
    xi_tau: np.ndarray
    s: float

    def __post_init__(self):
        if not (0 < self.s <= 1):
            raise ValueError(f"scale must be in (0, 1], got {self.s}")
        if np.abs(self.sys.b).max(initial=0) > 0 or np.abs(self.sys.c).max(initial=0) > 0:
            raise ValueError("Lorentz maps need a pure quadratic system (b = c = 0)")
        xt = np.asarray(self.xi_tau, dtype=float).reshape(self.sys.d)
        if np.linalg.norm(xt) > 1 + 1e-12:
            raise ValueError("sector center must lie in the closed unit ball")
        xt.setflags(write=False)
        object.__setattr__(self, "xi_tau", xt)

    def matrix(self) -> np.ndarray:
        d, l, s = self.sys.d, self.sys.l, self.s
        A = self.sys.A
        M = np.zeros((d + l + 1, d + l + 1))
        M[:d, :d] = np.eye(d) / s
        M[:d, -1] = -self.xi_tau / s
        Axt = np.einsum("kij,j->ki", A, self.xi_tau)          # (l, d)
        qt = 0.5 * np.einsum("ki,i->k", Axt, self.xi_tau)      # q_k(xi_tau)
        M[d:d + l, :d] = -Axt / s ** 2
        M[d:d + l, d:d + l] = np.eye(l) / s ** 2
        M[d:d + l, -1] = qt / s ** 2
        M[-1, -1] = 1.0
        return M

    def apply(self, points) -> np.ndarray:
        """Map points of shape (..., n+1)."""
        p = np.asarray(points, dtype=float)
        return p @ self.matrix().T

    def jacobian(self) -> float:
        """Volume factor of the linear map: s^-(d + 2l)."""
        return float(self.s ** -(self.sys.d + 2 * self.sys.l))


def _cone_point(sys: QuadraticSystem, xi, h):
    xi = np.asarray(xi, dtype=float)
    h = np.asarray(h, dtype=float)
    return np.concatenate([xi, sys.q(xi) / h[..., None], h[..., None]], axis=-1)


def distance_to_cone(sys: QuadraticSystem, p, grid: int = 33) -> float:
    """Distance to {(xi, Q(xi)/h, h) : |xi| <= 1, h in [1/2, 1]}.

    Local minimization seeded from the coordinate projection, with a coarse
    grid fallback when the local solver lands higher.
    """
    p = np.asarray(p, dtype=float)
    d = sys.d

    def f(z):
        xi, h = z[:d], z[d]
        diff = p - np.concatenate([xi, sys.q(xi) / h, [h]])
        return diff @ diff

    bounds = [(-1.0, 1.0)] * d + [(0.5, 1.0)]
    seed = np.concatenate([np.clip(p[:d], -1, 1), [np.clip(p[-1], 0.5, 1.0)]])
    res = minimize(f, seed, method="L-BFGS-B", bounds=bounds)
    best = res.fun
    # coarse-grid fallback guards against bad seeds far from the cone
    xs = np.linspace(-1, 1, grid)
    hs = np.linspace(0.5, 1.0, 9)
    if d == 1:
        X, H = np.meshgrid(xs, hs, indexing="ij")
        cand = _cone_point(sys, X.reshape(-1, 1), H.reshape(-1))
        gbest = np.min(np.sum((cand - p) ** 2, axis=1))
        if gbest < best:
            z0 = np.concatenate([X.reshape(-1, 1)[np.argmin(np.sum((cand - p) ** 2, axis=1))],
                                 [H.reshape(-1)[np.argmin(np.sum((cand - p) ** 2, axis=1))]]])
            res2 = minimize(f, z0, method="L-BFGS-B", bounds=bounds)
            best = min(best, res2.fun)
    return float(np.sqrt(max(best, 0.0)))


@dataclass(frozen=True)
class RescalingReport:
    r: float
    s: float
    samples: int
    seed: int
    max_scaled_distance: float   # max over samples of dist(image, cone) * r^2 s^2
    acceptance_C: float
    within_band: bool
    jacobian: float


def neighborhood_rescaling_check(map_: LorentzMap, r: float, samples: int = 400,
                                 seed: int = 0, acceptance_C: float = 16.0) -> RescalingReport:
    """Empirical two-sided constant for the thickness amplification s^-2.

    Samples the r^-2-neighborhood of the sector, maps it, and measures the
    distance of images to the full cone; the max of distance * r^2 s^2 must
    land in [1/C, C].
    """
    if map_.s < 1.0 / r:
        raise ValueError("rescaling check needs s >= 1/r")
    sys, s, xt = map_.sys, map_.s, map_.xi_tau
    rng = np.random.default_rng(seed)
    d = sys.d
    # sector base points u with |u - xi_tau| <= s, |u| <= 1
    w = rng.normal(size=(samples, d))
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    u = xt + s * w * rng.uniform(0, 1, (samples, 1)) ** (1 / d)
    u /= np.maximum(1.0, np.linalg.norm(u, axis=1, keepdims=True) + 1e-12)
    h = rng.uniform(0.5, 1.0, samples)
    base = _cone_point(sys, u * h[:, None], h)
    off = rng.normal(size=(samples, sys.n + 1))
    off /= np.linalg.norm(off, axis=1, keepdims=True)
    off *= (r ** -2) * rng.uniform(0.5, 1.0, (samples, 1))
    images = map_.apply(base + off)
    dmax = max(distance_to_cone(sys, p) for p in images)
    scaled = dmax * r ** 2 * s ** 2
    return RescalingReport(
        r=r, s=s, samples=samples, seed=seed,
        max_scaled_distance=float(scaled),
        acceptance_C=acceptance_C,
        within_band=bool(1 / acceptance_C <= scaled <= acceptance_C),
        jacobian=map_.jacobian(),
    )
