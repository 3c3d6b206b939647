"""Stationary-phase reduction for multi-parameter quadratic averages:
critical points, oscillatory-integral quadrature, the averaging operator as
an exact frequency multiplier, and the FIO-model comparison."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import fft as sfft
from scipy.special import roots_legendre

from .quadform import QuadraticSystem
from .sqfn.grid import GridField, GridPlan, bump_profile, fft_workers

__all__ = [
    "AverageSpec",
    "PhaseData",
    "FioReport",
    "NearConeOfDegeneracy",
    "QuadratureUnderresolved",
    "NyquistViolation",
    "stationary_point",
    "oscillatory_integral",
    "cutoff_mass",
    "make_annulus_field",
    "average_direct",
    "fio_transform",
    "fio_compare",
]

MAX_TENSOR_NODES = 2 ** 26


class NearConeOfDegeneracy(ValueError):
    """Frequency with |xi_{d+1}| below the cutoff fraction of |xi'|."""


class QuadratureUnderresolved(RuntimeError):
    """Oscillatory quadrature failed its refinement check or node budget."""


class NyquistViolation(ValueError):
    """Field spectrum touches the grid Nyquist row."""


@dataclass(frozen=True)
class AverageSpec:
    """Family of graph curves gamma_i(s) = (s, <s, M_i s>) with invertible M_i.

    The stationary-phase formulas use the unhalved pairing: the critical point
    of gamma_i . xi is -M_i^{-1} xi' / (2 xi_{d+1}) with phase value
    -<M_i^{-1} xi', xi'> / (4 xi_{d+1}).
    """

    matrices: np.ndarray  # (m, d, d)
    rho: float = 0.25

    def __post_init__(self):
        M = np.asarray(self.matrices, dtype=float)
        if M.ndim != 3 or M.shape[1] != M.shape[2]:
            raise ValueError(f"matrices must be stacked square, got {M.shape}")
        dets = np.linalg.det(M)
        if np.any(np.abs(dets) < 1e-12):
            raise ValueError("all generators must be invertible")
        M.setflags(write=False)
        object.__setattr__(self, "matrices", M)

    @property
    def m(self) -> int:
        return self.matrices.shape[0]

    @property
    def d(self) -> int:
        return self.matrices.shape[1]

    @property
    def inverses(self) -> np.ndarray:
        return np.linalg.inv(self.matrices)

    def condition_numbers(self) -> np.ndarray:
        return np.linalg.cond(self.matrices)

    def inverse_system(self) -> QuadraticSystem:
        """The inverted family as a quadratic system (transversality checks)."""
        inv = self.inverses
        sym = 0.5 * (inv + np.swapaxes(inv, 1, 2))
        return QuadraticSystem.pure(sym, name="inverted_family")

    @classmethod
    def complex_paraboloid(cls) -> "AverageSpec":
        return cls(matrices=np.array([[[1.0, 0.0], [0.0, -1.0]],
                                      [[0.0, 1.0], [1.0, 0.0]]]))

    @classmethod
    def scalar(cls, coefficient: float = 2.0) -> "AverageSpec":
        return cls(matrices=np.array([[[coefficient]]]))


@dataclass(frozen=True)
class PhaseData:
    xi: np.ndarray
    form: int
    s_star: np.ndarray
    phase_value: float
    grad_norm: float


def _split(xi) -> tuple[np.ndarray, float]:
    xi = np.asarray(xi, dtype=float).reshape(-1)
    return xi[:-1], float(xi[-1])


def stationary_point(spec: AverageSpec, i: int, xi) -> PhaseData:
    """Closed-form critical point and phase value of gamma_i . xi."""
    xp, xl = _split(xi)
    if abs(xl) < spec.rho * np.linalg.norm(xp):
        raise NearConeOfDegeneracy(
            f"|xi_last| = {abs(xl):.3g} < rho * |xi'| = {spec.rho * np.linalg.norm(xp):.3g}")
    Minv = spec.inverses[i]
    s_star = -(Minv @ xp) / (2.0 * xl)
    phase = -float(xp @ Minv @ xp) / (4.0 * xl)
    grad = xp + 2.0 * xl * (spec.matrices[i] @ s_star)
    gn = float(np.linalg.norm(grad))
    if gn > 1e-10 * max(1.0, np.linalg.norm(xp)):
        raise AssertionError(f"stationary gradient check failed: |grad| = {gn:.3e}")
    return PhaseData(xi=np.asarray(xi, dtype=float), form=i, s_star=s_star,
                     phase_value=phase, grad_norm=gn)


_PANEL = 32


@lru_cache(maxsize=64)
def _axis_nodes(n: int):
    """n-point rule on [-1, 1]: plain Gauss-Legendre for small n, composite
    panels of a 32-point rule otherwise (root solves stay cheap)."""
    if n <= 512:
        return roots_legendre(n)
    panels = math.ceil(n / _PANEL)
    x0, w0 = roots_legendre(_PANEL)
    edges = np.linspace(-1.0, 1.0, panels + 1)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    x = (mid[:, None] + half[:, None] * x0[None, :]).ravel()
    w = (half[:, None] * w0[None, :]).ravel()
    return x, w


@lru_cache(maxsize=32)
def _gl_nodes(d: int, n: int):
    x, w = _axis_nodes(n)
    grids = np.meshgrid(*([x] * d), indexing="ij")
    S = np.stack([g.ravel() for g in grids], axis=-1)
    W = np.ones(S.shape[0])
    wgrids = np.meshgrid(*([w] * d), indexing="ij")
    for g in wgrids:
        W = W * g.ravel()
    chi = bump_profile(np.linalg.norm(S, axis=1))
    keep = chi > 0
    return S[keep], (W * chi)[keep]


@lru_cache(maxsize=8)
def cutoff_mass(d: int, n: int = 256) -> float:
    """Integral of the radial bump over the unit ball (computed once)."""
    _, wchi = _gl_nodes(d, n)
    return float(wchi.sum())


def _auto_nodes(spec: AverageSpec, i: int, t: float, xi, points_per_cycle: float = 6.0) -> int:
    xp, xl = _split(xi)
    rate = np.abs(xp).sum() + 2 * np.linalg.norm(spec.matrices[i], 2) * abs(xl) * math.sqrt(spec.d)
    n = int(max(64 * math.ceil(math.sqrt(max(t, 1.0))),
                math.ceil(points_per_cycle * max(t, 1.0) * rate / (2 * math.pi) * 2)))
    return max(n, 64)


def oscillatory_integral(spec: AverageSpec, i: int, t: float, xi,
                         quadrature_n: int | None = None,
                         verify: bool = True) -> complex:
    """Direct tensor Gauss-Legendre quadrature of the s-integral
    of exp(-i t gamma_i(s) . xi) chi(s)."""
    xp, xl = _split(xi)
    if t == 0.0:
        return complex(cutoff_mass(spec.d))
    n = quadrature_n or _auto_nodes(spec, i, t, xi)
    if n ** spec.d > MAX_TENSOR_NODES:
        raise QuadratureUnderresolved(
            f"{n}^{spec.d} tensor nodes exceed the budget; reduce t or the frequency")

    def evaluate(nn: int) -> complex:
        S, wchi = _gl_nodes(spec.d, nn)
        phase = S @ xp + np.einsum("ni,ij,nj->n", S, spec.matrices[i], S) * xl
        return complex(np.sum(wchi * np.exp(-1j * t * phase)))

    val = evaluate(n)
    if verify:
        coarse = evaluate(max(64, int(0.75 * n)))
        if abs(val - coarse) > 1e-10 * cutoff_mass(spec.d) + 1e-8 * abs(val):
            raise QuadratureUnderresolved(
                f"doubling test disagreement {abs(val - coarse):.2e} at n = {n}")
    return val


def make_annulus_field(spec: AverageSpec, n_band: int, modes: int, seed: int,
                       degenerate: bool = False,
                       dims: tuple | None = None) -> GridField:
    """Sparse random-mode field with spectrum in the |j| ~ n_band annulus.

    Proper modes keep |j_{d+1}| comparable to |j| (above the rho cutoff);
    degenerate=True builds the no-stationary-point stress case |j_{d+1}| << |j'|.
    """
    dd = spec.d + 1
    if dims is None:
        side = 2 ** math.ceil(math.log2(max(5 * n_band, 16)))
        dims = (side,) * dd
    rng = np.random.default_rng(seed)
    spec_arr = np.zeros(dims, dtype=complex)
    count = 0
    while count < modes:
        v = rng.normal(size=dd)
        v /= np.linalg.norm(v)
        radius = n_band * rng.uniform(0.75, 1.5)
        j = np.rint(radius * v).astype(int)
        jp, jl = j[:-1], j[-1]
        if degenerate:
            if np.linalg.norm(jp) < 0.75 * n_band:
                continue
            j[-1] = int(rng.integers(-2, 3))
        else:
            if abs(jl) < max(2 * spec.rho * np.linalg.norm(jp), 0.5 * n_band):
                continue
        idx = tuple(j[k] % dims[k] for k in range(dd))
        spec_arr[idx] += rng.uniform(0.5, 1.0) * np.exp(2j * np.pi * rng.uniform())
        count += 1
    plan = GridPlan(sys=QuadraticSystem.pure(np.eye(spec.d)[None]), dims=dims,
                    scale=1.0, offset=np.zeros(dd, dtype=int), conical=False,
                    delta=1.0, cap_D=1.0)
    values = sfft.ifftn(spec_arr, workers=fft_workers()) * spec_arr.size
    return GridField(plan=plan, values=values, spectrum=spec_arr, freq_meta=[])


def _support_freqs(field: GridField):
    spec = field.spectrum
    nz = np.nonzero(np.abs(spec) > 1e-14 * (np.abs(spec).max() or 1.0))
    mesh = np.stack([np.fft.fftfreq(n, 1.0 / n).astype(int)[i]
                     for n, i in zip(field.dims, nz)], axis=-1)
    for k, n in enumerate(field.dims):
        if mesh.size and np.abs(mesh[:, k]).max() >= n // 2 - 1:
            raise NyquistViolation(f"spectrum touches Nyquist on axis {k}")
    return nz, mesh


def _osc_multipliers(spec: AverageSpec, i: int, t: float, freqs: np.ndarray,
                     quadrature_n: int | None = None) -> np.ndarray:
    """Integral of exp(-2 pi i t <j, gamma_i(s)>) chi(s) ds for each row j."""
    if freqs.size == 0:
        return np.zeros(0, dtype=complex)
    worst = freqs[np.argmax(np.abs(freqs).sum(axis=1))]
    n = quadrature_n or _auto_nodes(spec, i, 2 * math.pi * max(t, 1e-9), worst)
    if n ** spec.d > MAX_TENSOR_NODES:
        raise QuadratureUnderresolved(f"{n}^{spec.d} nodes over budget")
    S, wchi = _gl_nodes(spec.d, n)
    q = np.einsum("ni,ij,nj->n", S, spec.matrices[i], S)
    out = np.empty(freqs.shape[0], dtype=complex)
    chunk = max(1, int(4e7) // S.shape[0])
    for a in range(0, freqs.shape[0], chunk):
        J = freqs[a:a + chunk]
        phase = S @ J[:, :-1].T + q[:, None] * J[:, -1][None, :]
        out[a:a + chunk] = (wchi[:, None] * np.exp(-2j * np.pi * t * phase)).sum(axis=0)
    return out


def average_direct(spec: AverageSpec, field: GridField, t,
                   quadrature_n: int | None = None) -> GridField:
    """Multi-parameter average as an exact per-frequency multiplier.

    Band-limited trigonometric interpolation makes the shifted evaluation
    exact, and the s-integrals factor per parameter.
    """
    t = np.asarray(t, dtype=float).reshape(-1)
    if t.shape[0] != spec.m:
        raise ValueError(f"need {spec.m} time parameters, got {t.shape[0]}")
    if np.abs(t).max() > 1.5:
        raise ValueError("time parameters are limited to |t_i| <= 3/2")
    nz, mesh = _support_freqs(field)
    mult = np.ones(mesh.shape[0], dtype=complex)
    for i in range(spec.m):
        mult *= _osc_multipliers(spec, i, float(t[i]), mesh, quadrature_n)
    out = np.zeros(field.dims, dtype=complex)
    out[nz] = field.spectrum[nz] * mult
    values = sfft.ifftn(out, workers=fft_workers()) * out.size
    return GridField(plan=field.plan, values=values, spectrum=out,
                     freq_meta=list(field.freq_meta))


def fio_transform(spec: AverageSpec, field: GridField, t) -> GridField:
    """Oscillatory model: multiply each mode by the stationary phase factor
    exp(i sum_i t_i <M_i^{-1} xi', xi'> / (4 xi_{d+1})) at xi = 2 pi j."""
    t = np.asarray(t, dtype=float).reshape(-1)
    nz, mesh = _support_freqs(field)
    jp, jl = mesh[:, :-1].astype(float), mesh[:, -1].astype(float)
    if np.any(jl == 0):
        raise NearConeOfDegeneracy("model phase undefined at xi_{d+1} = 0")
    phase = np.zeros(mesh.shape[0])
    for i in range(spec.m):
        quad = np.einsum("ni,ij,nj->n", jp, spec.inverses[i], jp)
        phase += float(t[i]) * 0.5 * math.pi * quad / jl
    out = np.zeros(field.dims, dtype=complex)
    out[nz] = field.spectrum[nz] * np.exp(1j * phase)
    values = sfft.ifftn(out, workers=fft_workers()) * out.size
    return GridField(plan=field.plan, values=values, spectrum=out,
                     freq_meta=list(field.freq_meta))


@dataclass(frozen=True)
class FioReport:
    n_band: int
    t_points: tuple
    ratios: tuple
    max_ratio: float
    min_ratio: float


def fio_compare(spec: AverageSpec, field: GridField, n_band: int,
                t_points=None) -> FioReport:
    """Ratio of the true average to the FIO-model size over a t-grid.

    The model norm is N^(-m d / 2) times the unit-symbol oscillatory model;
    boundedness of the ratio across the N sweep is the criterion under test.
    """
    if t_points is None:
        t_points = [(a, b) for a in (0.75, 1.25) for b in (0.75, 1.25)] \
            if spec.m == 2 else [(0.75,), (1.25,)]
    scale = float(n_band) ** (-spec.m * spec.d / 2.0)
    ratios = []
    for t in t_points:
        num = average_direct(spec, field, t).l4_4() ** 0.25
        den = scale * fio_transform(spec, field, t).l4_4() ** 0.25
        ratios.append(num / den)
    return FioReport(n_band=n_band, t_points=tuple(map(tuple, t_points)),
                     ratios=tuple(ratios), max_ratio=float(max(ratios)),
                     min_ratio=float(min(ratios)))
