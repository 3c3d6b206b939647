"""Quadratic systems, tangent/normal frames, and transversality certificates."""
from __future__ import annotations

import itertools
import json
import math
import re
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "QuadraticSystem",
    "Frame",
    "TransversalityCertificate",
    "StructurallyDegenerate",
    "BadResolution",
    "frame_at",
    "certify_transversality",
    "tangent_wedge_volume",
    "sphere_grid",
    "sphere_grid_spacing",
    "get_system",
    "system_names",
]


class StructurallyDegenerate(ValueError):
    """Fewer generators than base dimensions: no d-subset can exist."""


class BadResolution(ValueError):
    """Sphere grid resolution below the minimum of 2."""


@dataclass(frozen=True)
class QuadraticSystem:
    """A map from the d-ball to R^l whose components are (affine) quadratic forms.

    Component k is q_k(x) = 1/2 <x, A_k x> + <b_k, x> + c_k.  Generators A_k are
    symmetric unless the system is marked certificate-only (symmetric=False),
    which exists for determinant examples built from non-symmetric matrices.
    """

    A: np.ndarray  # (l, d, d)
    b: np.ndarray  # (l, d)
    c: np.ndarray  # (l,)
    symmetric: bool = True
    name: str = ""

    def __post_init__(self):
        A = np.atleast_3d(np.asarray(self.A, dtype=float))
        if A.ndim != 3 or A.shape[1] != A.shape[2]:
            raise ValueError(f"A must be l stacked square matrices, got shape {A.shape}")
        l, d, _ = A.shape
        b = np.zeros((l, d)) if self.b is None else np.asarray(self.b, dtype=float).reshape(l, d)
        c = np.zeros(l) if self.c is None else np.asarray(self.c, dtype=float).reshape(l)
        if self.symmetric:
            skew = np.abs(A - np.swapaxes(A, 1, 2)).max()
            if skew > 1e-12 * max(1.0, np.abs(A).max()):
                raise ValueError(f"generators not symmetric (max |A - A^T| = {skew:.3e})")
        for arr in (A, b, c):
            arr.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)

    @property
    def d(self) -> int:
        return self.A.shape[1]

    @property
    def l(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.d + self.l

    def q(self, xi) -> np.ndarray:
        """Values of all l forms at points xi, shape (..., d) -> (..., l)."""
        xi = np.asarray(xi, dtype=float)
        quad = 0.5 * np.einsum("...i,kij,...j->...k", xi, self.A, xi)
        return quad + np.einsum("ki,...i->...k", self.b, xi) + self.c

    def grad_q(self, xi) -> np.ndarray:
        """Gradients of all l forms at xi, shape (..., d) -> (..., l, d)."""
        xi = np.asarray(xi, dtype=float)
        sym = 0.5 * (self.A + np.swapaxes(self.A, 1, 2))
        return np.einsum("kij,...j->...ki", sym, xi) + self.b

    def graph(self, xi) -> np.ndarray:
        """Graph point (xi, Q(xi)), shape (..., d) -> (..., n)."""
        xi = np.asarray(xi, dtype=float)
        return np.concatenate([xi, self.q(xi)], axis=-1)

    def require_symmetric(self, op: str):
        if not self.symmetric:
            raise ValueError(f"{op} needs symmetric generators; "
                             f"system {self.name!r} is certificate-only")

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "l": self.l,
            "A": [m.reshape(-1).tolist() for m in self.A],  # row-major
            "b": [v.tolist() for v in self.b],
            "c": self.c.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc: dict, name: str = "") -> "QuadraticSystem":
        d, l = int(doc["d"]), int(doc["l"])
        A = np.array(doc["A"], dtype=float).reshape(l, d, d)
        b = np.array(doc.get("b", np.zeros((l, d))), dtype=float).reshape(l, d)
        c = np.array(doc.get("c", np.zeros(l)), dtype=float).reshape(l)
        skew = np.abs(A - np.swapaxes(A, 1, 2)).max()
        return cls(A=A, b=b, c=c, symmetric=bool(skew <= 1e-12 * max(1.0, np.abs(A).max())),
                   name=name)

    @classmethod
    def from_json(cls, text: str, name: str = "") -> "QuadraticSystem":
        return cls.from_dict(json.loads(text), name=name)

    @classmethod
    def pure(cls, matrices, name: str = "", symmetric: bool = True) -> "QuadraticSystem":
        A = np.asarray(matrices, dtype=float)
        l, d = A.shape[0], A.shape[1]
        return cls(A=A, b=np.zeros((l, d)), c=np.zeros(l), symmetric=symmetric, name=name)


@dataclass(frozen=True)
class Frame:
    """Tangent/normal frame of the graph of a quadratic system at a base point.

    Tangents carry the standard basis in their first d components, normals the
    standard basis in their last l components; the two families are exactly
    orthogonal at the same base point.  In the conical case all vectors are
    embedded in R^(n+1) via (v, 0) and center is (eta, Q(eta), 1).
    """

    base: np.ndarray      # (d,)
    center: np.ndarray    # (n,) graph point, or (n+1,) central line point
    tangents: np.ndarray  # (d, n) or (d, n+1)
    normals: np.ndarray   # (l, n) or (l, n+1)
    conical: bool

    def __post_init__(self):
        for arr in (self.base, self.center, self.tangents, self.normals):
            np.asarray(arr).setflags(write=False)

    @property
    def ambient(self) -> int:
        return self.tangents.shape[1]

    def matrix(self) -> np.ndarray:
        """Columns: [center,] tangents, normals (invertible square matrix)."""
        if self.conical:
            return np.column_stack([self.center, self.tangents.T, self.normals.T])
        return np.column_stack([self.tangents.T, self.normals.T])


def frame_at(sys: QuadraticSystem, eta, conical: bool = False) -> Frame:
    """Exact tangent/normal frame at eta; conical embeds into R^(n+1)."""
    sys.require_symmetric("frame_at")
    eta = np.asarray(eta, dtype=float).reshape(-1)
    if eta.shape[0] != sys.d:
        raise ValueError(f"base point has dimension {eta.shape[0]}, system expects {sys.d}")
    if np.linalg.norm(eta) > 1 + 1e-12:
        raise ValueError(f"base point outside the closed unit ball: |eta| = {np.linalg.norm(eta):.6f}")
    grads = sys.grad_q(eta)                     # (l, d)
    tangents = np.concatenate([np.eye(sys.d), grads.T], axis=1)      # (d, n)
    normals = np.concatenate([-grads, np.eye(sys.l)], axis=1)        # (l, n)
    if conical:
        zcol = np.zeros((tangents.shape[0] + normals.shape[0], 1))
        tangents = np.concatenate([tangents, zcol[:sys.d]], axis=1)
        normals = np.concatenate([normals, zcol[:sys.l]], axis=1)
        center = np.concatenate([eta, sys.q(eta), [1.0]])
    else:
        center = sys.graph(eta)
    return Frame(base=eta, center=center, tangents=tangents, normals=normals, conical=conical)


# ---------------------------------------------------------------------------
# sphere grids

_GOLDEN = (1 + math.sqrt(5)) / 2


def _halton(n: int, base: int) -> np.ndarray:
    out = np.zeros(n)
    for i in range(n):
        f, r, idx = 1.0, 0.0, i + 1
        while idx > 0:
            f /= base
            r += f * (idx % base)
            idx //= base
        out[i] = r
    return out


def sphere_grid(d: int, resolution: int) -> np.ndarray:
    """Deterministic quasi-uniform grid on S^(d-1), shape (N, d).

    d=1: the two points {+-1}; d=2: uniform angles; d=3: Fibonacci lattice;
    d>=4: Halton points through the Gaussian inverse CDF, normalized.
    """
    if resolution < 2:
        raise BadResolution(f"resolution must be >= 2, got {resolution}")
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        ang = 2 * np.pi * np.arange(resolution) / resolution
        return np.column_stack([np.cos(ang), np.sin(ang)])
    if d == 3:
        k = np.arange(resolution)
        z = 1 - 2 * (k + 0.5) / resolution
        phi = 2 * np.pi * k / _GOLDEN
        rad = np.sqrt(np.maximum(0.0, 1 - z * z))
        return np.column_stack([rad * np.cos(phi), rad * np.sin(phi), z])
    from scipy.special import ndtri

    primes = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29]
    u = np.column_stack([_halton(resolution, primes[i]) for i in range(d)])
    g = ndtri(np.clip(u, 1e-12, 1 - 1e-12))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def sphere_grid_spacing(d: int, resolution: int) -> float:
    """Covering-radius estimate of the grid (0 for the exact d=1 grid)."""
    if d == 1:
        return 0.0
    if d == 2:
        return math.pi / resolution
    # area heuristic: each point covers a cap of area |S^(d-1)|/N
    area = 2 * math.pi ** (d / 2) / math.gamma(d / 2)
    return 1.5 * (area / resolution) ** (1 / (d - 1))


# ---------------------------------------------------------------------------
# transversality certificate

@dataclass(frozen=True)
class TransversalityCertificate:
    """Verified-at-resolution lower bound for the best-subset determinant.

    c_min is the grid-plus-refinement minimum over unit directions of the best
    |det(A_i1 nu, ..., A_id nu)| over d-element generator subsets; not a proof.
    """

    c_min: float
    witness_nu: np.ndarray
    witness_subset: tuple
    subset_per_sample: np.ndarray   # (N, d) int
    resolution: int
    grid_spacing: float
    grid_lipschitz: float
    refine_steps: int

    def __post_init__(self):
        np.asarray(self.witness_nu).setflags(write=False)


def _best_subset_dets(A: np.ndarray, nus: np.ndarray, subsets) -> tuple[np.ndarray, np.ndarray]:
    """Per-direction max |det| over subsets and the arg-max subset index."""
    images = np.einsum("kij,nj->nki", A, nus)       # (N, l, d): A_k nu as rows
    best = np.full(nus.shape[0], -1.0)
    arg = np.zeros(nus.shape[0], dtype=np.int32)
    for si, idx in enumerate(subsets):
        cols = images[:, idx, :]                    # (N, d, d), rows A_i nu
        dets = np.abs(np.linalg.det(np.swapaxes(cols, 1, 2)))
        take = dets > best
        best[take] = dets[take]
        arg[take] = si
    return best, arg


def _tangent_basis(nu: np.ndarray) -> np.ndarray:
    """Orthonormal basis of nu-perp via Householder, shape (d, d-1)."""
    d = nu.shape[0]
    e = np.zeros(d)
    e[0] = 1.0
    v = nu + np.sign(nu[0] if nu[0] != 0 else 1.0) * e
    v /= np.linalg.norm(v)
    H = np.eye(d) - 2 * np.outer(v, v)
    return H[:, 1:]


def certify_transversality(sys: QuadraticSystem, resolution: int,
                           refine_steps: int = 3) -> TransversalityCertificate:
    """Grid-certified transversality constant of the generator family.

    Scans a quasi-uniform sphere grid, then shrinks a neighborhood search
    around the arg-min for refine_steps rounds.  Raises StructurallyDegenerate
    when l < d (the subset condition is unsatisfiable) and BadResolution when
    the grid is below 2 points.
    """
    d, l = sys.d, sys.l
    if l < d:
        raise StructurallyDegenerate(
            f"need at least d={d} generators, have l={l}; c_min would be 0")
    if resolution < 2:
        raise BadResolution(f"resolution must be >= 2, got {resolution}")
    subsets = list(itertools.combinations(range(l), d))
    nus = sphere_grid(d, resolution)
    best, arg = _best_subset_dets(sys.A, nus, subsets)
    imin = int(np.argmin(best))
    c_min = float(best[imin])
    witness = nus[imin].copy()
    wit_subset = subsets[arg[imin]]

    spacing = sphere_grid_spacing(d, resolution)
    norms = np.linalg.norm(sys.A, ord=2, axis=(1, 2))
    lipschitz = float(d * max(np.prod(norms[list(s)]) for s in subsets))

    if d > 1:
        radius = max(spacing, 1e-9)
        m = min(max(resolution // 10, 64), 4096)
        for _ in range(refine_steps):
            T = _tangent_basis(witness)
            if d == 2:
                offs = np.linspace(-1, 1, m)[:, None]
            else:
                primes = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29]
                u = np.column_stack([_halton(m, primes[i]) for i in range(d - 1)])
                offs = 2 * u - 1
            cand = witness[None, :] + radius * offs @ T.T
            cand /= np.linalg.norm(cand, axis=1, keepdims=True)
            cbest, carg = _best_subset_dets(sys.A, cand, subsets)
            j = int(np.argmin(cbest))
            if cbest[j] < c_min:
                c_min = float(cbest[j])
                witness = cand[j].copy()
                wit_subset = subsets[carg[j]]
            radius *= 0.25

    return TransversalityCertificate(
        c_min=c_min,
        witness_nu=witness,
        witness_subset=wit_subset,
        subset_per_sample=np.array([subsets[a] for a in arg], dtype=np.int16),
        resolution=resolution,
        grid_spacing=spacing,
        grid_lipschitz=lipschitz,
        refine_steps=refine_steps,
    )


def tangent_wedge_volume(sys: QuadraticSystem, xi1, xi2) -> float:
    """2d-volume of the parallelepiped of the tangent frames at xi1 and xi2."""
    f1 = frame_at(sys, xi1)
    f2 = frame_at(sys, xi2)
    V = np.concatenate([f1.tangents, f2.tangents], axis=0)   # (2d, n)
    gram = V @ V.T
    det = np.linalg.det(gram)
    return float(np.sqrt(max(det, 0.0)))


# ---------------------------------------------------------------------------
# catalog

def _parabola() -> QuadraticSystem:
    return QuadraticSystem.pure([[[2.0]]], name="parabola")


def _complex_parabola() -> QuadraticSystem:
    return QuadraticSystem.pure(
        [[[2.0, 0.0], [0.0, -2.0]], [[0.0, 2.0], [2.0, 0.0]]],
        name="complex_parabola")


def _complex_parabola_rotated() -> QuadraticSystem:
    # change-of-basis pair {identity, quarter-turn}; the rotation is
    # antisymmetric, so this system is certificate-only
    return QuadraticSystem.pure(
        [[[1.0, 0.0], [0.0, 1.0]], [[0.0, 1.0], [-1.0, 0.0]]],
        name="complex_parabola_rotated", symmetric=False)


def _reflection_inversion(d: int = 3) -> QuadraticSystem:
    mats = [np.eye(d)]
    for i, j in itertools.combinations(range(d), 2):
        m = np.eye(d)
        m[[i, j]] = m[[j, i]]
        mats.append(m)
    for i in range(d):
        m = np.eye(d)
        m[i, i] = -1.0
        mats.append(m)
    return QuadraticSystem.pure(np.array(mats), name=f"reflection_inversion_d{d}")


def _random_sym(d: int, l: int, seed: int) -> QuadraticSystem:
    rng = np.random.default_rng(seed)
    raw = rng.normal(size=(l, d, d))
    mats = 0.5 * (raw + np.swapaxes(raw, 1, 2))
    return QuadraticSystem.pure(mats, name=f"random_sym_d{d}_l{l}({seed})")


_RANDOM_RE = re.compile(r"^random_sym_d3_l3\((\d+)\)$")


def system_names() -> list[str]:
    return ["parabola", "complex_parabola", "complex_parabola_rotated",
            "reflection_inversion_d3", "random_sym_d3_l3(seed)"]


def get_system(name: str) -> QuadraticSystem:
    """Catalog lookup; 'random_sym_d3_l3(seed)' takes an integer seed."""
    fixed = {
        "parabola": _parabola,
        "complex_parabola": _complex_parabola,
        "complex_parabola_rotated": _complex_parabola_rotated,
        "reflection_inversion_d3": _reflection_inversion,
    }
    if name in fixed:
        return fixed[name]()
    m = _RANDOM_RE.match(name)
    if m:
        return _random_sym(3, 3, int(m.group(1)))
    raise KeyError(f"unknown system {name!r}; catalog: {system_names()}")
