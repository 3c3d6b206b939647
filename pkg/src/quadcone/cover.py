"""Canonical coverings: lattices, caps, conical slabs, centered planks,
dyadic shells, plank sorting and overlap counting."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .quadform import Frame, QuadraticSystem, frame_at

__all__ = [
    "Lattice",
    "Box",
    "PlankFamily",
    "ShellMembership",
    "UncoveredSample",
    "NotInCone",
    "SortFailure",
    "make_lattice",
    "build_cap_cover",
    "covering_check",
    "build_plank_families",
    "build_plank_family",
    "shell_classify",
    "shell_classify_batch",
    "sort_into_plank",
    "count_plank_overlap",
    "plank_hits",
    "minkowski_difference_box",
    "sample_difference_points",
    "dyadic_sigmas",
]


class UncoveredSample(Exception):
    """A neighborhood sample missed every box of the cover."""

    def __init__(self, witness):
        self.witness = np.asarray(witness)
        super().__init__(f"uncovered sample at {self.witness}")


class NotInCone(Exception):
    """Point lies outside the top-scale plank union."""


class SortFailure(Exception):
    """No lattice point satisfies the sorting conditions (a corollary failure)."""

    def __init__(self, omega, xi, sigma):
        self.omega, self.xi, self.sigma = np.asarray(omega), np.asarray(xi), sigma
        super().__init__(f"no plank at scale sigma={sigma} sorts omega={omega} from xi={xi}")


@dataclass(frozen=True)
class Lattice:
    """Scaled integer lattice restricted to the closed unit ball."""

    spacing: float
    points: np.ndarray  # (P, d)

    def __post_init__(self):
        np.asarray(self.points).setflags(write=False)

    def nearest(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        k = np.rint(xi / self.spacing)
        return k * self.spacing


def make_lattice(d: int, spacing: float) -> Lattice:
    """All points of spacing*Z^d inside the closed unit ball."""
    kmax = int(math.floor(1.0 / spacing + 1e-9))
    axes = [np.arange(-kmax, kmax + 1)] * d
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    pts = grid * spacing
    keep = np.linalg.norm(pts, axis=1) <= 1.0 + 1e-12
    order = np.lexsort(pts[keep].T[::-1])
    return Lattice(spacing=spacing, points=pts[keep][order])


@dataclass(frozen=True)
class Box:
    """Cap, slab, or centered plank: a frame with per-axis half-widths.

    Manifold caps (height None) live at the graph point; conical boxes span
    a height interval along the central direction.  Membership is an exact
    linear solve for the frame coordinates.
    """

    frame: Frame
    tangential: np.ndarray  # (d,) half-widths along tangents
    normal: np.ndarray      # (l,) half-widths along normals
    height: tuple | None = None
    dilate: float = 1.0

    def __post_init__(self):
        t = np.broadcast_to(np.asarray(self.tangential, dtype=float),
                            (self.frame.tangents.shape[0],)).copy()
        n = np.broadcast_to(np.asarray(self.normal, dtype=float),
                            (self.frame.normals.shape[0],)).copy()
        if np.any(t <= 0) or np.any(n <= 0):
            raise ValueError("half-widths must be positive")
        t.setflags(write=False)
        n.setflags(write=False)
        object.__setattr__(self, "tangential", t)
        object.__setattr__(self, "normal", n)
        if self.height is not None and self.frame.conical is False:
            raise ValueError("height interval requires a conical frame")

    @cached_property
    def _inv(self) -> np.ndarray:
        return np.linalg.inv(self.frame.matrix())

    def dilated(self, k: float) -> "Box":
        return Box(frame=self.frame, tangential=self.tangential,
                   normal=self.normal, height=self.height, dilate=self.dilate * k)

    def _ranges(self):
        """Dilated per-axis bounds: (lo, hi) arrays in frame coordinates."""
        d = self.tangential.shape[0]
        tw = self.dilate * self.tangential
        nw = self.dilate * self.normal
        if self.height is None:
            lo = np.concatenate([-tw, -nw])
            hi = np.concatenate([tw, nw])
        else:
            a0, a1 = self.height
            mid, half = 0.5 * (a0 + a1), 0.5 * (a1 - a0)
            lo = np.concatenate([[mid - self.dilate * half], -tw, -nw])
            hi = np.concatenate([[mid + self.dilate * half], tw, nw])
        return lo, hi

    def coords(self, points) -> np.ndarray:
        """Frame coordinates of points, shape (..., m) -> (..., m)."""
        p = np.asarray(points, dtype=float)
        if not self.frame.conical:
            p = p - self.frame.center
        return p @ self._inv.T

    def contains(self, points, rtol: float = 1e-12) -> np.ndarray:
        z = self.coords(points)
        lo, hi = self._ranges()
        slack = rtol * np.maximum(np.abs(lo), np.abs(hi)) + 1e-15
        return np.all((z >= lo - slack) & (z <= hi + slack), axis=-1)

    def point_from_coords(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        p = z @ self.frame.matrix().T
        if not self.frame.conical:
            p = p + self.frame.center
        return p

    def vertices(self) -> np.ndarray:
        lo, hi = self._ranges()
        m = lo.shape[0]
        corners = np.stack(np.meshgrid(*[[0, 1]] * m, indexing="ij"),
                           axis=-1).reshape(-1, m)
        z = lo + corners * (hi - lo)
        return self.point_from_coords(z)

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        lo, hi = self._ranges()
        z = rng.uniform(lo, hi, size=(count, lo.shape[0]))
        return self.point_from_coords(z)


# ---------------------------------------------------------------------------
# stacked families for vectorized membership

class BoxStack:
    """Vectorized membership over a family of same-shaped boxes."""

    def __init__(self, boxes: list[Box]):
        if not boxes:
            raise ValueError("empty family")
        self.boxes = boxes
        self.conical = boxes[0].frame.conical
        self.mats = np.stack([b.frame.matrix() for b in boxes])
        self.invs = np.linalg.inv(self.mats)
        self.centers = (None if self.conical
                        else np.stack([b.frame.center for b in boxes]))
        self.base_points = np.stack([b.frame.base for b in boxes])
        lohi = [b._ranges() for b in boxes]
        self.lo = np.stack([x[0] for x in lohi])
        self.hi = np.stack([x[1] for x in lohi])

    def __len__(self):
        return len(self.boxes)

    def coords(self, points) -> np.ndarray:
        """(S, m) points -> (S, P, m) frame coordinates."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        if self.conical:
            return np.einsum("pij,sj->spi", self.invs, p)
        return np.einsum("pij,spj->spi", self.invs, p[:, None, :] - self.centers)

    def membership(self, points, dilate: float = 1.0, rtol: float = 1e-12) -> np.ndarray:
        """(S, m) points -> (S, P) bool."""
        z = self.coords(points)
        mid = 0.5 * (self.lo + self.hi)
        half = 0.5 * (self.hi - self.lo)
        lo = mid - dilate * half
        hi = mid + dilate * half
        slack = rtol * np.maximum(np.abs(lo), np.abs(hi)) + 1e-15
        return np.all((z >= lo - slack) & (z <= hi + slack), axis=-1)


@dataclass(frozen=True)
class PlankFamily:
    """Centered planks at a dyadic scale sigma on the matching base lattice."""

    sys: QuadraticSystem
    r: float
    sigma: float
    E: float
    lattice: Lattice
    stack: BoxStack

    @property
    def planks(self) -> list[Box]:
        return self.stack.boxes

    def __len__(self):
        return len(self.stack)


@dataclass(frozen=True)
class ShellMembership:
    """Point with its unique dyadic shell scale."""

    point: np.ndarray
    sigma: float


def dyadic_sigmas(r: float) -> list[float]:
    """[1, 1/2, ..., 1/r] for dyadic r."""
    k = round(math.log2(r))
    if abs(2 ** k - r) > 1e-9:
        raise ValueError(f"shell machinery needs dyadic r, got {r}")
    return [2.0 ** -j for j in range(k + 1)]


def build_cap_cover(sys: QuadraticSystem, r: float, conical: bool = False,
                    D: float = 4.0) -> list[Box]:
    """One cap (or conical slab) per point of the r^-1 base lattice."""
    if r < 2:
        raise ValueError(f"r must be >= 2, got {r}")
    lat = make_lattice(sys.d, 1.0 / r)
    height = (0.5, 1.0) if conical else None
    return [
        Box(frame=frame_at(sys, eta, conical=conical),
            tangential=np.full(sys.d, D / r),
            normal=np.full(sys.l, D / r ** 2),
            height=height)
        for eta in lat.points
    ]


def build_plank_family(sys: QuadraticSystem, r: float, sigma: float,
                       E: float = 4.0) -> PlankFamily:
    lat = make_lattice(sys.d, 1.0 / (r * sigma))
    boxes = [
        Box(frame=frame_at(sys, eta, conical=True),
            tangential=np.full(sys.d, E * sigma / r),
            normal=np.full(sys.l, E / r ** 2),
            height=(-sigma ** 2, sigma ** 2))
        for eta in lat.points
    ]
    return PlankFamily(sys=sys, r=r, sigma=sigma, E=E, lattice=lat,
                       stack=BoxStack(boxes))


def build_plank_families(sys: QuadraticSystem, r: float,
                         E: float = 4.0) -> dict[float, PlankFamily]:
    return {s: build_plank_family(sys, r, s, E=E) for s in dyadic_sigmas(r)}


@dataclass(frozen=True)
class CoverReport:
    covered_fraction: float
    max_multiplicity: int
    samples: int
    seed: int
    r: float
    conical: bool


def _ball_points(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    v = rng.normal(size=(count, dim))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v * rng.uniform(0, 1, size=(count, 1)) ** (1.0 / dim)


def covering_check(cover: list[Box], sys: QuadraticSystem, r: float,
                   samples: int = 10_000, seed: int = 0) -> CoverReport:
    """Sample the r^-2-neighborhood and verify every point is covered.

    Conical heights are sampled a 2 r^-2 margin inside [1/2, 1]: the slabs'
    exact height range cannot cover the boundary edge of the neighborhood.
    """
    conical = cover[0].frame.conical
    rng = np.random.default_rng(seed)
    base = _ball_points(rng, samples, sys.d)
    off = _ball_points(rng, samples, cover[0].frame.ambient) * r ** -2
    if conical:
        h = rng.uniform(0.5 + 2 * r ** -2, 1.0 - 2 * r ** -2, size=samples)
        centers = np.concatenate(
            [h[:, None] * base, h[:, None] * sys.q(base), h[:, None]], axis=1)
        pts = centers + off
    else:
        pts = sys.graph(base) + off
    counts = BoxStack(cover).membership(pts).sum(axis=1)
    if np.any(counts == 0):
        raise UncoveredSample(pts[int(np.argmin(counts))])
    return CoverReport(covered_fraction=1.0, max_multiplicity=int(counts.max()),
                       samples=samples, seed=seed, r=r, conical=conical)


def minkowski_difference_box(cap: Box) -> Box:
    """theta - theta: doubled half-widths, height [-1, 1], centered at zero."""
    if cap.frame.conical:
        return Box(frame=cap.frame, tangential=2 * cap.tangential,
                   normal=2 * cap.normal, height=(-1.0, 1.0))
    raise ValueError("difference boxes are defined for conical slabs")


def sample_difference_points(cap: Box, rng: np.random.Generator,
                             count: int) -> np.ndarray:
    """Differences of independent uniform pairs from the slab (members of theta~)."""
    return cap.sample(rng, count) - cap.sample(rng, count)


def shell_classify(omega, families: dict[float, PlankFamily]) -> ShellMembership:
    """Unique dyadic scale with omega in the sigma-union but not the sigma/2-union."""
    omega = np.asarray(omega, dtype=float)
    sigmas = sorted(families, reverse=True)
    if not families[sigmas[0]].stack.membership(omega[None]).any():
        raise NotInCone(f"point {omega} outside the top-scale plank union")
    chosen = sigmas[0]
    for s in sigmas[1:]:
        if families[s].stack.membership(omega[None]).any():
            chosen = s
        else:
            break
    return ShellMembership(point=omega, sigma=chosen)


def shell_classify_batch(omegas, families: dict[float, PlankFamily]) -> np.ndarray:
    """Vector of shell scales; NaN marks points outside the cone union."""
    omegas = np.atleast_2d(np.asarray(omegas, dtype=float))
    sigmas = sorted(families, reverse=True)
    out = np.full(omegas.shape[0], np.nan)
    active = families[sigmas[0]].stack.membership(omegas).any(axis=1)
    out[active] = sigmas[0]
    for s in sigmas[1:]:
        if not active.any():
            break
        idx = np.flatnonzero(active)
        member = families[s].stack.membership(omegas[idx]).any(axis=1)
        out[idx[member]] = s
        active = np.zeros_like(active)
        active[idx[member]] = True
    return out


def count_plank_overlap(omega, family: PlankFamily, dilate: float = 10.0) -> int:
    """Number of planks at scale sigma whose dilate contains omega."""
    return int(family.stack.membership(np.asarray(omega)[None], dilate=dilate).sum())


def plank_hits(omega, family: PlankFamily, dilate: float = 10.0):
    """Indices and frame coordinates of all dilated planks containing omega."""
    member = family.stack.membership(np.asarray(omega)[None], dilate=dilate)[0]
    idx = np.flatnonzero(member)
    coords = family.stack.coords(np.asarray(omega)[None])[0, idx]
    return idx, coords


def sort_into_plank(omega, xi, family: PlankFamily, dilate: float = 10.0) -> np.ndarray:
    """Lattice base of a dilated plank containing omega, close to xi.

    Searches lattice points within 8 r^-1 sigma^-1 of xi and returns the
    nearest one satisfying both sorting conditions (membership in the dilated
    plank and |xi - eta| <= 4 r^-1 sigma^-1); raises SortFailure otherwise.
    """
    omega = np.asarray(omega, dtype=float)
    xi = np.asarray(xi, dtype=float)
    step = family.lattice.spacing
    dist = np.linalg.norm(family.stack.base_points - xi, axis=1)
    cand = np.flatnonzero(dist <= 8 * step + 1e-12)
    if cand.size:
        sub = [family.stack.boxes[i] for i in cand]
        member = BoxStack(sub).membership(omega[None], dilate=dilate)[0]
        ok = cand[member & (dist[cand] <= 4 * step + 1e-12)]
        if ok.size:
            best = ok[int(np.argmin(dist[ok]))]
            return family.stack.base_points[best]
    raise SortFailure(omega, xi, family.sigma)
