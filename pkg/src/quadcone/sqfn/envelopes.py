"""Wave envelopes, tile sums, the Kakeya-type inequality check, and the
two-scale square-function constant."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import product

import numpy as np

from ..cover import Box, dyadic_sigmas
from ..quadform import QuadraticSystem
from .grid import (
    GridField,
    GridPlan,
    build_cell_caps,
    cap_project,
    plan_grid,
    square_sum_field,
    synthesize_field,
)

__all__ = [
    "KakeyaReport",
    "TwoScaleReport",
    "dual_box",
    "envelope_box",
    "members_by_cap",
    "tile_quartic_sum",
    "kakeya_check",
    "measure_S",
    "sq_ratio_ensemble",
    "fit_loglog_slope",
]

DUAL_WIDTH_CONSTANT = 0.5  # torus half-width per reciprocal frequency unit


def _freq_halfwidths(cap: Box) -> np.ndarray:
    """Per-axis frequency half-widths of the cap box (height axis first)."""
    if cap.height is None:
        return np.concatenate([cap.tangential, cap.normal])
    a0, a1 = cap.height
    return np.concatenate([[0.5 * (a1 - a0)], cap.tangential, cap.normal])


def dual_box(cap: Box, scale: float, c_dual: float = DUAL_WIDTH_CONSTANT):
    """Spatial dual of a frequency cap: dual frame, reciprocal half-widths.

    Returns (matrix, half_widths) in torus units; the box is centered at the
    origin (dual boxes of translates coincide).
    """
    F = cap.frame.matrix()
    M = np.linalg.inv(F).T
    hw = c_dual / (scale * _freq_halfwidths(cap))
    return M, hw


def _box_vertices(M: np.ndarray, hw: np.ndarray) -> np.ndarray:
    m = hw.shape[0]
    signs = np.stack(np.meshgrid(*[[-1.0, 1.0]] * m, indexing="ij"),
                     axis=-1).reshape(-1, m)
    return (signs * hw) @ M.T


def members_by_cap(fine_caps: list[Box], taus: list[Box],
                   dilate: float = 10.0) -> list[np.ndarray]:
    """For each tau, indices of the fine caps contained in its dilate."""
    V = np.stack([c.vertices() for c in fine_caps])      # (T, 2^m, m)
    flat = V.reshape(-1, V.shape[-1])
    out = []
    for tau in taus:
        inside = tau.dilated(dilate).contains(flat).reshape(V.shape[0], -1)
        out.append(np.flatnonzero(inside.all(axis=1)))
    return out


def envelope_box(tau: Box, member_caps: list[Box], scale: float,
                 c_dual: float = DUAL_WIDTH_CONSTANT):
    """Bounding plank, in the tau dual frame, of the member dual boxes."""
    Mt, _ = dual_box(tau, scale, c_dual)
    Ft = tau.frame.matrix()
    hw = None
    for cap in member_caps:
        M, w = dual_box(cap, scale, c_dual)
        coeff = np.abs(_box_vertices(M, w) @ Ft)   # coords in the dual frame
        top = coeff.max(axis=0)
        hw = top if hw is None else np.maximum(hw, top)
    return Mt, hw


@lru_cache(maxsize=8)
def _torus_coords(dims: tuple) -> np.ndarray:
    axes = [np.arange(n) / n for n in dims]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _tile_stride(shape: tuple, max_points: int) -> tuple:
    stride = [1] * len(shape)
    while np.prod([n // s for n, s in zip(shape, stride)]) > max_points:
        k = int(np.argmax([n / s for n, s in zip(shape, stride)]))
        stride[k] *= 2
    return tuple(stride)


def tile_quartic_sum(g: np.ndarray, M: np.ndarray, hw: np.ndarray,
                     max_points: int = 2 ** 20) -> float:
    """Sum over tiles U of |U|^-1 (integral of g over U)^2.

    Tiles are cells of size 2*hw in the frame coordinates of M, in the
    2^m interleaved tilings offset by hw per axis (multiplicity 2^m).
    Integrals run on a strided sublattice when the grid exceeds max_points
    (g varies on cap scale, far coarser than the stride).
    """
    m = len(g.shape)
    stride = _tile_stride(g.shape, max_points)
    gs = g[tuple(slice(None, None, s) for s in stride)]
    X = _torus_coords(gs.shape)
    z = (X @ np.linalg.inv(M).T) / (2.0 * np.asarray(hw))
    cells = []
    for k in range(m):
        c0 = np.floor(z[:, k]).astype(np.int32)
        c1 = np.floor(z[:, k] - 0.5).astype(np.int32)
        base = min(c0.min(), c1.min())
        cells.append((c0 - base, c1 - base, int(max(c0.max(), c1.max()) - base) + 1))
    vol_u = float(abs(np.linalg.det(M)) * np.prod(2.0 * np.asarray(hw)))
    gflat = gs.ravel() / gs.size
    total = 0.0
    for offs in product((0, 1), repeat=m):
        idx = cells[0][offs[0]]
        for k in range(1, m):
            idx = idx * cells[k][2] + cells[k][offs[k]]
        sums = np.bincount(idx, weights=gflat)
        total += float(np.sum(sums * sums))
    return total / vol_u


@dataclass(frozen=True)
class KakeyaReport:
    r: float
    lhs: float
    rhs: float
    ratio: float
    active_taus: int
    trivial: bool = False


def kakeya_check(field: GridField, r: float, tau_D: float = 4.0,
                 c_dual: float = DUAL_WIDTH_CONSTANT,
                 dilate: float = 10.0) -> KakeyaReport:
    """Global fourth-power square-function mass against the envelope sum.

    The field must carry caps at thickness r^-2; the right side sums wave
    envelopes U over sector scales s in [1/r, 1] (tau thickness s^2).
    """
    plan = field.plan
    if abs(plan.delta - r ** -2) > 1e-12:
        raise ValueError(f"field thickness {plan.delta} does not match r^-2 = {r**-2}")
    sys = plan.sys
    caps = build_cell_caps(sys, plan.delta, True, D=plan.cap_D, sector=plan.sector)
    projections = cap_project(field, caps)
    if not projections:
        return KakeyaReport(r=r, lhs=0.0, rhs=0.0, ratio=0.0, active_taus=0,
                            trivial=True)
    g = square_sum_field(projections)
    lhs = float(np.mean(g * g))
    if lhs == 0.0:
        return KakeyaReport(r=r, lhs=0.0, rhs=0.0, ratio=0.0, active_taus=0,
                            trivial=True)
    sq = {p.cap_index: np.abs(p.values) ** 2 for p in projections}
    rhs = 0.0
    active = 0
    for s in dyadic_sigmas(r):
        taus = build_cell_caps(sys, s ** 2, True, D=tau_D)
        membership = members_by_cap(caps, taus, dilate=dilate)
        for tau, idx in zip(taus, membership):
            live = [i for i in idx if i in sq]
            if not live:
                continue
            g_tau = sum(sq[i] for i in live)
            M, hw = envelope_box(tau, [caps[i] for i in live], plan.scale, c_dual)
            rhs += tile_quartic_sum(g_tau, M, hw)
            active += 1
    return KakeyaReport(r=r, lhs=lhs, rhs=rhs, ratio=lhs / rhs, active_taus=active)


@dataclass(frozen=True)
class TwoScaleReport:
    r: float
    R: float
    S_emp: float
    per_field: tuple
    ensemble_size: int
    seed: int
    scale: float
    dims: tuple


def _ball_tile_quartic(g: np.ndarray, radius_torus: float) -> float:
    """Axis-aligned cube tiling (side 2*radius) of the square function."""
    m = len(g.shape)
    M = np.eye(m)
    hw = np.full(m, min(radius_torus, 0.5))
    return tile_quartic_sum(g, M, hw)


def measure_S(sys: QuadraticSystem, r: float, R: float, ensemble: int, seed: int,
              D: float = 4.0, tau_D: float = 4.0, sector: tuple | None = None,
              packets: int | None = None, plan: GridPlan | None = None,
              c_dual: float = DUAL_WIDTH_CONSTANT,
              dilate: float = 10.0) -> TwoScaleReport:
    """Empirical two-scale constant: worst ratio of the ball-tiled coarse
    square function against the wave-envelope sum at the fine scale.

    Fields are random ensembles with support at thickness 1/R; the left side
    uses caps at the coarser thickness 1/r restricted to radius-r tiles, the
    right side wave envelopes over sector thickness s in [1/R, 1].
    """
    if r > R:
        raise ValueError(f"need r <= R, got {(r, R)}")
    delta_f = 1.0 / R
    if plan is None:
        # keep cells a few grid units wide even when the thickness is coarse
        plan = plan_grid(sys, delta_f, True, D=D, sector=sector,
                         min_scale=max(4.0 * math.sqrt(R), 24.0))
    fine_caps = build_cell_caps(sys, delta_f, True, D=D, sector=plan.sector)
    coarse_caps = build_cell_caps(sys, 1.0 / r, True, D=D)
    coarse_spacing = math.sqrt(1.0 / r)

    # tau families and their fine members are field-independent
    tau_scales = [s for s in dyadic_sigmas(max(R, 2)) if s >= delta_f - 1e-12]
    tau_families = []
    for s in tau_scales:
        taus = build_cell_caps(sys, s, True, D=tau_D)
        membership = members_by_cap(fine_caps, taus, dilate=dilate)
        pre = [(tau, idx) for tau, idx in zip(taus, membership) if idx.size]
        tau_families.append(pre)

    seeds = np.random.SeedSequence(seed).spawn(ensemble)
    npack = packets if packets is not None else max(3 * len(fine_caps), 8)
    per_field = []
    for member_seed in seeds:
        sub = int(member_seed.generate_state(1)[0])
        field = synthesize_field(sys, delta_f, True, packets=npack, seed=sub,
                                 plan=plan, D=D, sector=plan.sector)
        coarse = cap_project(field, coarse_caps, spacing=coarse_spacing)
        if not coarse:
            continue
        g_c = square_sum_field(coarse)
        lhs = _ball_tile_quartic(g_c, r / plan.scale)
        fine = cap_project(field, fine_caps)
        sq = {p.cap_index: np.abs(p.values) ** 2 for p in fine}
        rhs = 0.0
        for pre in tau_families:
            for tau, idx in pre:
                live = [i for i in idx if i in sq]
                if not live:
                    continue
                g_tau = sum(sq[i] for i in live)
                M, hw = envelope_box(tau, [fine_caps[i] for i in live],
                                     plan.scale, c_dual)
                rhs += tile_quartic_sum(g_tau, M, hw)
        if rhs > 0:
            per_field.append(lhs / rhs)
    if not per_field:
        raise ValueError("no usable ensemble members")
    return TwoScaleReport(r=r, R=R, S_emp=float(max(per_field)),
                          per_field=tuple(per_field), ensemble_size=ensemble,
                          seed=seed, scale=plan.scale, dims=plan.dims)


def sq_ratio_ensemble(sys: QuadraticSystem, delta: float, conical: bool,
                      ensemble: int, seed: int, D: float = 4.0,
                      sector: tuple | None = None, packets: int | None = None,
                      plan: GridPlan | None = None,
                      stride: tuple | None = None):
    """Max square-function ratio over a random-field ensemble."""
    from .grid import sq_ratio

    if plan is None:
        plan = plan_grid(sys, delta, conical, D=D, sector=sector)
    caps = build_cell_caps(sys, delta, conical, D=D, sector=plan.sector)
    npack = packets if packets is not None else len(caps)
    seeds = np.random.SeedSequence(seed).spawn(ensemble)
    ratios = []
    for member_seed in seeds:
        sub = int(member_seed.generate_state(1)[0])
        field = synthesize_field(sys, delta, conical, packets=npack, seed=sub,
                                 plan=plan, D=D, sector=plan.sector)
        projs = cap_project(field, caps, stride=stride)
        ratios.append(sq_ratio(field, projs))
    return float(max(ratios)), ratios


def fit_loglog_slope(xs, ys) -> float:
    """Least-squares slope of log(y) against log(x)."""
    lx, ly = np.log(np.asarray(xs, dtype=float)), np.log(np.asarray(ys, dtype=float))
    return float(np.polyfit(lx, ly, 1)[0])
