"""Periodic grid fields with integer frequencies, cap-adapted synthesis, and
smooth cap projections.

Fields live on the unit torus; the frequency geometry (manifold or cone in
omega-space) sits on the integer lattice at a recorded scale G, so a grid
frequency j corresponds to omega = (j + offset)/G.  Norm ratios are invariant
under the recentering offsets (pure modulations).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from functools import lru_cache

import numpy as np
from scipy import fft as sfft

from ..cover import Box, make_lattice
from ..quadform import QuadraticSystem, frame_at

__all__ = [
    "GridPlan",
    "GridField",
    "CapProjection",
    "ResolutionTooCoarse",
    "PartitionGap",
    "GridInfeasible",
    "cell_profile",
    "bump_profile",
    "build_cell_caps",
    "plan_grid",
    "synthesize_field",
    "cap_project",
    "square_sum_field",
    "sq_ratio",
    "spectral_mass_outside",
]

MAX_TOTAL_SAMPLES = 2 ** 26

_FFT_WORKERS = -1


def set_fft_workers(n: int) -> None:
    """Worker count for FFT calls; results are bit-identical across counts."""
    global _FFT_WORKERS
    _FFT_WORKERS = int(n)


def fft_workers() -> int:
    return _FFT_WORKERS


class ResolutionTooCoarse(ValueError):
    """Grid cannot host the cap family (sub-grid cap thickness)."""


class PartitionGap(ValueError):
    """Partition of unity misses mass on the declared support."""


class GridInfeasible(ValueError):
    """No grid within the sample budget supports the requested geometry."""


def _edge(t):
    """C-infinity monotone rise from 0 at t<=0 to 1 at t>=1."""
    t = np.clip(t, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t > 0, np.exp(-1.0 / np.maximum(t, 1e-300)), 0.0)
        b = np.where(t < 1, np.exp(-1.0 / np.maximum(1 - t, 1e-300)), 0.0)
    return a / (a + b)


def cell_profile(t):
    """Plateau 1 on |t| <= 1/4, support |t| <= 3/4; integer translates sum to 1."""
    return _edge((0.75 - np.abs(t)) / 0.5)


def bump_profile(t):
    """Smooth bump exp(1 - 1/(1-t^2)) on |t| < 1."""
    t = np.asarray(t, dtype=float)
    inside = np.abs(t) < 1
    out = np.zeros_like(t)
    ti = t[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - ti * ti))
    return out


@dataclass(frozen=True)
class GridPlan:
    """Grid dims, frequency scale, and per-axis integer recentering."""

    sys: QuadraticSystem
    dims: tuple
    scale: float            # grid frequencies per geometry unit (G)
    offset: np.ndarray      # true integer frequency = fft index + offset
    conical: bool
    delta: float            # neighborhood thickness of the cap family
    cap_D: float
    sector: tuple | None = None   # (center array, radius) base-sector restriction

    def __post_init__(self):
        np.asarray(self.offset).setflags(write=False)

    @property
    def total(self) -> int:
        return int(np.prod(self.dims))


@dataclass
class GridField:
    """Complex samples on the torus plus the frequency bookkeeping."""

    plan: GridPlan
    values: np.ndarray
    spectrum: np.ndarray          # coefficients c_j, same shape as values
    freq_meta: list = dc_field(default_factory=list)  # cap indices with content

    @property
    def dims(self):
        return self.plan.dims

    def l2sq(self) -> float:
        return float(np.mean(np.abs(self.values) ** 2))

    def l4_4(self) -> float:
        a2 = np.abs(self.values) ** 2
        return float(np.mean(a2 * a2))


@dataclass
class CapProjection:
    """Smoothed frequency projection of a parent field to one cap."""

    cap_index: int
    base: np.ndarray
    values: np.ndarray
    stride: tuple               # per-axis decimation vs the parent grid


def _int_freqs(n: int) -> np.ndarray:
    return np.fft.fftfreq(n, d=1.0 / n).astype(np.int64)


@lru_cache(maxsize=32)
def _freq_grids(dims: tuple) -> tuple:
    return tuple(_int_freqs(n) for n in dims)


def build_cell_caps(sys: QuadraticSystem, delta: float, conical: bool,
                    D: float = 4.0, sector: tuple | None = None) -> list[Box]:
    """Cap cover at thickness delta with the base lattice of spacing delta^(1/2).

    Optionally restricted to a base sector (center, radius); cell indices of
    the returned caps follow the lattice order.
    """
    spacing = math.sqrt(delta)
    lat = make_lattice(sys.d, spacing)
    pts = lat.points
    if sector is not None:
        ctr, rad = np.asarray(sector[0], dtype=float), float(sector[1])
        pts = pts[np.linalg.norm(pts - ctr, axis=1) <= rad + 1e-12]
    height = (0.5, 1.0) if conical else None
    return [
        Box(frame=frame_at(sys, eta, conical=conical),
            tangential=np.full(sys.d, D * spacing),
            normal=np.full(sys.l, D * delta),
            height=height)
        for eta in pts
    ]


def plan_grid(sys: QuadraticSystem, delta: float, conical: bool,
              D: float = 4.0, sector: tuple | None = None,
              min_units_per_cap: float = 2.0,
              min_scale: float = 16.0,
              min_oversample: float = 1.3,
              max_total: int = MAX_TOTAL_SAMPLES) -> GridPlan:
    """Pick (G, dims, offsets) so every cap is grid-resolved within budget.

    G starts at min_units_per_cap normal half-widths per cap and shrinks
    toward the floor of one unit per cap half-width if the budget forces it;
    below that the family is unresolvable and the plan fails.  Per-axis dims
    are powers of two at least min_oversample times the occupied band (the
    power-of-two rounding usually lands the factor near 2, mitigating the
    quartic-quadrature aliasing; never eliminating it).
    """
    caps = build_cell_caps(sys, delta, conical, D=D, sector=sector)
    verts = np.concatenate([c.vertices() for c in caps], axis=0)
    lo, hi = verts.min(axis=0), verts.max(axis=0)

    def layout(G: float):
        lo_i = np.floor(G * lo).astype(int) - 2
        hi_i = np.ceil(G * hi).astype(int) + 2
        offset = (lo_i + hi_i) // 2
        half = np.maximum(hi_i - offset, offset - lo_i)
        dims = tuple(int(2 ** math.ceil(math.log2(max(min_oversample * 2 * h, 8))))
                     for h in half)
        return dims, offset

    G = max(min_units_per_cap / (D * delta), min_scale)
    floor_G = 1.0 / (D * delta)
    while True:
        dims, offset = layout(G)
        if int(np.prod(dims)) <= max_total:
            break
        if G <= floor_G * (1 + 1e-9):
            raise GridInfeasible(
                f"caps at delta={delta} need more than {max_total} samples even at "
                "one grid unit per cap half-width; restrict the sector or raise the budget")
        G = max(G * 0.75, floor_G)
    if D * delta * G < 1.0 - 1e-9:
        raise ResolutionTooCoarse(
            f"cap normal half-width {D * delta * G:.2f} grid units at scale {G:.1f}")
    return GridPlan(sys=sys, dims=dims, scale=float(G), offset=np.asarray(offset),
                    conical=conical, delta=delta, cap_D=D, sector=sector)


def _values_from_spectrum(spec: np.ndarray) -> np.ndarray:
    return sfft.ifftn(spec, workers=fft_workers()) * spec.size


def _block_freqs(box: Box, scale: float):
    """Integer frequency meshgrid covering the box's bounding box."""
    verts = box.vertices()
    lo = np.floor(scale * verts.min(axis=0)).astype(int) - 1
    hi = np.ceil(scale * verts.max(axis=0)).astype(int) + 1
    axes = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
    return mesh


def _packet_box(cap: Box, sys: QuadraticSystem, spacing: float, delta: float,
                D: float) -> Box:
    """Shrunken box bounding a packet's support (cell plateau x inner normals)."""
    gmax = float(sum(np.linalg.norm(A, 2) for A in sys.A) + np.abs(sys.b).sum())
    wa = 0.25 * spacing + gmax * 0.5 * D * delta
    return Box(frame=cap.frame, tangential=np.full(sys.d, wa),
               normal=0.5 * D * delta * np.ones(sys.l), height=cap.height)


def _sector_coordinate(omega: np.ndarray, conical: bool, d: int) -> np.ndarray:
    """Base (manifold) or angular base (cone) coordinate used by the partition."""
    if conical:
        return omega[..., :d] / omega[..., -1:]
    return omega[..., :d]


def synthesize_field(sys: QuadraticSystem, delta: float, conical: bool,
                     packets: int, seed: int, plan: GridPlan | None = None,
                     D: float = 4.0, sector: tuple | None = None,
                     aligned: bool = False) -> GridField:
    """Sum of randomized wave packets, each a smooth bump in one cap's cell.

    Each packet gets a random cap, amplitude in [1/2, 1], phase, and spatial
    translation; aligned=True pins phases and translations (the constructive
    interference stress configuration).  Packet bumps live on the plateau of
    the cap's partition cell, so projections recover packets exactly.
    """
    if plan is None:
        plan = plan_grid(sys, delta, conical, D=D, sector=sector)
    for k in range(sys.d):
        if plan.dims[k] < 4.0 / delta and not conical:
            raise ResolutionTooCoarse(
                f"tangential axis {k} has {plan.dims[k]} samples < 4/delta = {4 / delta:.0f}")
    caps = build_cell_caps(sys, delta, conical, D=D, sector=plan.sector)
    spacing = math.sqrt(delta)
    rng = np.random.default_rng(seed)
    spec = np.zeros(plan.dims, dtype=complex)
    used = set()
    G = plan.scale
    dims = plan.dims

    for _ in range(packets):
        ci = int(rng.integers(len(caps)))
        cap = caps[ci]
        amp = rng.uniform(0.5, 1.0)
        phase = 0.0 if aligned else rng.uniform(0, 2 * np.pi)
        x0 = np.zeros(len(dims)) if aligned else rng.uniform(0, 1, len(dims))

        mesh = _block_freqs(_packet_box(cap, sys, spacing, delta, D), G)
        omega = mesh / G
        z = cap.coords(omega)
        # profiles run over the partition's own base coordinate u (not the
        # tangential frame coefficient, whose normal admixture would smear
        # packets across neighboring cells) times the normal coefficients
        u = _sector_coordinate(omega, cap.frame.conical, sys.d)
        if cap.frame.conical:
            hprof = bump_profile((z[:, 0] - 0.75) / 0.25)
            norm = z[:, 1 + sys.d:]
        else:
            hprof = np.ones(z.shape[0])
            norm = z[:, sys.d:]
        w = hprof.copy()
        for k in range(sys.d):
            w *= bump_profile((u[:, k] - cap.frame.base[k]) / (0.25 * spacing))
        for k in range(sys.l):
            w *= bump_profile(norm[:, k] / (0.5 * D * delta))
        sel = w > 0
        if not np.any(sel):
            continue
        mesh_s, w_s = mesh[sel], w[sel]
        carrier = np.exp(-2j * np.pi * (mesh_s @ x0)) * amp * np.exp(1j * phase)
        idx = tuple((mesh_s[:, k] - plan.offset[k]) % dims[k] for k in range(len(dims)))
        np.add.at(spec, idx, w_s * carrier)
        used.add(ci)

    field = GridField(plan=plan, values=_values_from_spectrum(spec), spectrum=spec,
                      freq_meta=sorted(used))
    return field


def spectral_mass_outside(field: GridField, caps: list[Box],
                          dilate: float = 1.0) -> float:
    """Fraction of spectral mass outside the union of the given caps."""
    spec = field.spectrum
    tot = float(np.sum(np.abs(spec) ** 2))
    if tot == 0:
        return 0.0
    nz = np.nonzero(np.abs(spec) > 1e-14 * np.abs(spec).max())
    mesh = np.stack([_int_freqs(n)[i] for n, i in zip(field.dims, nz)], axis=-1)
    omega = (mesh + field.plan.offset) / field.plan.scale
    inside = np.zeros(mesh.shape[0], dtype=bool)
    for cap in caps:
        inside |= cap.dilated(dilate).contains(omega)
    mass_out = float(np.sum(np.abs(spec[nz][~inside]) ** 2))
    return mass_out / tot


def _partition_weights(field: GridField, caps: list[Box], spacing: float,
                       tol: float = 1e-8):
    """Per-support-frequency cap weights of the smooth cell partition."""
    spec = field.spectrum
    nz = np.nonzero(np.abs(spec) > 1e-14 * (np.abs(spec).max() or 1.0))
    mesh = np.stack([_int_freqs(n)[i] for n, i in zip(field.dims, nz)], axis=-1)
    omega = (mesh + field.plan.offset) / field.plan.scale
    d = len(caps[0].frame.base)
    u = _sector_coordinate(omega, field.plan.conical, d)
    cell_of = {tuple(np.rint(c.frame.base / spacing).astype(int)): i
               for i, c in enumerate(caps)}

    base_cell = np.floor(u / spacing + 0.5).astype(int)
    weights = {}
    total = np.zeros(mesh.shape[0])
    offs = np.stack(np.meshgrid(*[[-1, 0, 1]] * d, indexing="ij"), axis=-1).reshape(-1, d)
    for off in offs:
        cell = base_cell + off
        t = u / spacing - cell
        w = np.ones(mesh.shape[0])
        for k in range(d):
            w *= cell_profile(t[:, k])
        act = w > 0
        if not act.any():
            continue
        for row in np.flatnonzero(act):
            key = tuple(cell[row])
            ci = cell_of.get(key)
            if ci is None:
                continue
            weights.setdefault(ci, []).append((row, w[row]))
            total[row] += w[row]
    # support reaching past the outermost lattice cell (coarse covers whose
    # spacing does not divide the ball radius) hands the edge mass to the
    # adjacent boundary cell; anything farther than one cell is a real gap
    short = np.flatnonzero(total < 1.0 - tol)
    if short.size:
        cells = np.array(sorted(cell_of))
        for row in short:
            dist = np.abs(cells - base_cell[row]).max(axis=1)
            k = int(np.argmin(dist))
            if dist[k] > 1:
                continue
            ci = cell_of[tuple(cells[k])]
            weights.setdefault(ci, []).append((row, 1.0 - total[row]))
            total[row] = 1.0
    if np.abs(total - 1.0).max(initial=0.0) > tol:
        worst = float(np.abs(total - 1.0).max())
        raise PartitionGap(f"partition sums deviate from 1 by {worst:.2e} on the support")
    return nz, mesh, weights


def cap_project(field: GridField, caps: list[Box], stride: tuple | None = None,
                tol: float = 1e-8, spacing: float | None = None) -> list[CapProjection]:
    """Smooth partition-of-unity projections onto the cap cover.

    With a stride, each projection carries exact samples on the decimated
    sublattice (valid whenever the decimated grid still oversamples the cap
    blocks; the square-function routines pick alias-free strides).  Passing a
    spacing projects onto a cover at a different (coarser) scale than the
    field's own cap family.
    """
    spacing = spacing if spacing is not None else math.sqrt(field.plan.delta)
    nz, mesh, weights = _partition_weights(field, caps, spacing, tol=tol)
    spec = field.spectrum
    dims = field.dims
    stride = stride or tuple(1 for _ in dims)
    sub = tuple(n // s for n, s in zip(dims, stride))
    out = []
    for ci in sorted(weights):
        rows_w = weights[ci]
        rows = np.array([r for r, _ in rows_w], dtype=int)
        ww = np.array([w for _, w in rows_w])
        coef = spec[tuple(ax[rows] for ax in nz)] * ww
        small = np.zeros(sub, dtype=complex)
        # mesh is already the offset-relative signed frequency of the stored slot
        idx = tuple(mesh[rows, k] % sub[k] for k in range(len(dims)))
        np.add.at(small, idx, coef)
        vals = _values_from_spectrum(small)
        out.append(CapProjection(cap_index=ci, base=caps[ci].frame.base,
                                 values=vals, stride=stride))
    return out


def square_sum_field(projections: list[CapProjection]) -> np.ndarray:
    """Pointwise sum of squared moduli on the common (possibly decimated) grid."""
    g = None
    for p in projections:
        a = np.abs(p.values) ** 2
        g = a if g is None else g + a
    return g


def sq_ratio(field: GridField, projections: list[CapProjection]) -> float:
    """||f||_4 over the L^4 norm of the square function of the projections."""
    if not projections:
        raise ValueError("no projections supplied")
    num = field.l4_4()
    if num == 0.0:
        raise ZeroDivisionError("zero field has no square-function ratio")
    g = square_sum_field(projections)
    den = float(np.mean(g * g))
    return (num / den) ** 0.25
