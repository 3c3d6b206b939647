"""Double-mean-value identity and brute-force biorthogonality certification."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cover import make_lattice
from .quadform import QuadraticSystem

__all__ = [
    "Quadruple",
    "BiorthoReport",
    "TooLarge",
    "NotTransversal",
    "dmvt_defect",
    "dmvt_defect_batch",
    "is_admissible",
    "certify_biorthogonality",
]


class TooLarge(Exception):
    """Full enumeration exceeds the triple budget; pass force=True to override."""


class NotTransversal(Exception):
    """System without a positive transversality floor; theorem inapplicable."""


@dataclass(frozen=True)
class Quadruple:
    """Four points with xi1 + xi3 = xi2 + xi4 (xi4 derived at construction)."""

    xi1: np.ndarray
    xi2: np.ndarray
    xi3: np.ndarray
    xi4: np.ndarray

    def __post_init__(self):
        arrs = [np.asarray(x, dtype=float) for x in (self.xi1, self.xi2, self.xi3, self.xi4)]
        for a in arrs:
            a.setflags(write=False)
        object.__setattr__(self, "xi1", arrs[0])
        object.__setattr__(self, "xi2", arrs[1])
        object.__setattr__(self, "xi3", arrs[2])
        object.__setattr__(self, "xi4", arrs[3])
        closure = np.linalg.norm(self.xi1 + self.xi3 - self.xi2 - self.xi4)
        if closure > 1e-14:
            raise ValueError(f"quadruple not closed: |xi1+xi3-xi2-xi4| = {closure:.3e}")
        for a in arrs:
            if np.linalg.norm(a) > 1 + 1e-12:
                raise ValueError("quadruple points must lie in the closed unit ball")

    @classmethod
    def closed(cls, xi1, xi2, xi3) -> "Quadruple":
        xi1, xi2, xi3 = (np.asarray(x, dtype=float) for x in (xi1, xi2, xi3))
        return cls(xi1=xi1, xi2=xi2, xi3=xi3, xi4=xi1 + xi3 - xi2)

    @property
    def xi12(self) -> np.ndarray:
        return self.xi1 - self.xi2

    @property
    def xi14(self) -> np.ndarray:
        return self.xi1 - self.xi4


def dmvt_defect(sys: QuadraticSystem, quad: Quadruple, m: int) -> tuple[float, float]:
    """Additive defect of form m over the quadruple, both ways.

    Returns (direct, bilinear): the direct value q_m(xi1)+q_m(xi3)-q_m(xi2)-q_m(xi4)
    and the bilinear value <xi12, A_m xi14>; for a quadratic form the constant
    Hessian collapses the double mean value integral, so the two agree exactly.
    Raises if they disagree beyond 1e-12 (a broken quadratic evaluation).
    """
    pts = np.stack([quad.xi1, quad.xi2, quad.xi3, quad.xi4])
    vals = sys.q(pts)[:, m]
    direct = float(vals[0] + vals[2] - vals[1] - vals[3])
    bilinear = float(quad.xi12 @ sys.A[m] @ quad.xi14)
    scale = max(1.0, abs(direct), abs(bilinear))
    if abs(direct - bilinear) > 1e-12 * scale:
        raise AssertionError(
            f"direct/bilinear defect disagreement: {direct} vs {bilinear}")
    return direct, bilinear


def dmvt_defect_batch(sys: QuadraticSystem, xi1, xi2, xi3) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized defects over stacked quadruples; shapes (N, d) -> (N, l) twice."""
    xi1, xi2, xi3 = (np.asarray(x, dtype=float) for x in (xi1, xi2, xi3))
    xi4 = xi1 + xi3 - xi2
    direct = sys.q(xi1) + sys.q(xi3) - sys.q(xi2) - sys.q(xi4)
    bilinear = np.einsum("ni,kij,nj->nk", xi1 - xi2, sys.A, xi1 - xi4)
    return direct, bilinear


def is_admissible(sys: QuadraticSystem, quad: Quadruple, delta: float,
                  tolerance_multiplier: float = 1.0) -> bool:
    """All l defects within tolerance_multiplier * delta."""
    for m in range(sys.l):
        direct, _ = dmvt_defect(sys, quad, m)
        if abs(direct) > tolerance_multiplier * delta:
            return False
    return True


@dataclass(frozen=True)
class BiorthoReport:
    delta: float
    worst_ratio: float
    witness: Quadruple | None
    count_admissible: int
    lattice_size: int
    total_triples: int
    tolerance_multiplier: float
    normalized_pairing_max: float  # max |<u', A_m v'>| over admissible off-diagonal pairs


def _realizing_shift(points: np.ndarray, spacing: float, u: np.ndarray,
                     v: np.ndarray) -> np.ndarray | None:
    """Lex-least lattice xi1 with all four quadruple points in the unit ball."""
    # candidate centered at the parallelogram midpoint, then its lattice hood
    mid = 0.5 * (u + v)
    base = np.rint(mid / spacing)
    d = u.shape[0]
    offs = np.stack(np.meshgrid(*[[-1, 0, 1]] * d, indexing="ij"), axis=-1).reshape(-1, d)
    cands = (base + offs) * spacing
    good = _four_in_ball(cands, u, v)
    if not good.any():
        # fall back to the full lattice (admissible pairs are rare)
        cands = points
        good = _four_in_ball(cands, u, v)
        if not good.any():
            return None
    sel = cands[good]
    order = np.lexsort(sel.T[::-1])
    return sel[order[0]]


def _four_in_ball(xi1: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    lim = 1.0 + 1e-12
    return ((np.linalg.norm(xi1, axis=1) <= lim)
            & (np.linalg.norm(xi1 - u, axis=1) <= lim)
            & (np.linalg.norm(xi1 - v, axis=1) <= lim)
            & (np.linalg.norm(xi1 - u - v, axis=1) <= lim))


def _count_realizations(points: np.ndarray, u: np.ndarray, v: np.ndarray) -> int:
    return int(_four_in_ball(points, u, v).sum())


def certify_biorthogonality(sys: QuadraticSystem, delta: float,
                            tolerance_multiplier: float = 1.0,
                            max_triples: int = 10 ** 6,
                            force: bool = False,
                            c_min: float | None = None) -> BiorthoReport:
    """Exhaustive near-solution scan of the four-point system on the lattice.

    Enumerates every quadruple of delta^(1/2)-lattice points in the closed unit
    ball with xi1 + xi3 = xi2 + xi4; a quadruple is admissible when every form's
    defect is at most tolerance_multiplier * delta.  Returns the worst ratio
    min(|xi12|, |xi14|) / delta^(1/2) over admissible quadruples.

    The scan runs over difference pairs (u, v) = (xi12, xi14), which carry the
    defect for quadratic systems, with exact realizability and multiplicity
    recovered over lattice translates; this is identical to the lex triple loop
    and is asserted against it in the tests.  The triple budget still guards
    the abstract enumeration size unless force=True.
    """
    if not (0 < delta <= 1 / 16):
        raise ValueError(f"delta must be in (0, 1/16], got {delta}")
    if c_min is not None and c_min <= 0 and not force:
        raise NotTransversal(
            "certificate floor is zero; pass force=True for counterexample exploration")
    spacing = math.sqrt(delta)
    lat = make_lattice(sys.d, spacing)
    P = len(lat.points)
    total = P ** 3
    if total > max_triples and not force:
        raise TooLarge(f"{total} triples exceed the budget {max_triples}; "
                       "pass force=True to run anyway")

    # difference lattice: all u with some pair (xi1, xi2 = xi1 - u) in the ball
    kmax = int(math.floor(2.0 / spacing + 1e-9))
    axes = [np.arange(-kmax, kmax + 1)] * sys.d
    diffs = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, sys.d) * spacing
    diffs = diffs[np.linalg.norm(diffs, axis=1) <= 2.0 + 1e-12]
    order = np.lexsort(diffs.T[::-1])
    diffs = diffs[order]

    tol = tolerance_multiplier * delta
    nd = np.linalg.norm(diffs, axis=1)
    Av = np.einsum("kij,nj->nki", sys.A, diffs)  # (N, l, d)

    pair_u, pair_v = [], []
    chunk = max(1, int(2e7) // max(diffs.shape[0], 1))
    for start in range(0, diffs.shape[0], chunk):
        u = diffs[start:start + chunk]
        # defects for all (u, v) pairs in this chunk: (U, N, l)
        defect = np.einsum("ui,nki->unk", u, Av)
        adm = np.all(np.abs(defect) <= tol + 1e-15, axis=2)
        iu, jv = np.nonzero(adm)
        pair_u.append(iu + start)
        pair_v.append(jv)
    pu = np.concatenate(pair_u) if pair_u else np.zeros(0, dtype=int)
    pv = np.concatenate(pair_v) if pair_v else np.zeros(0, dtype=int)

    # exact realization multiplicities over lattice translates, in chunks;
    # |x - w|^2 = |x|^2 - 2 x.w + |w|^2 keeps the inner work in one matmul
    mult = np.zeros(pu.shape[0], dtype=np.int64)
    pts = lat.points
    x2 = np.einsum("pi,pi->p", pts, pts)[:, None]
    lim2 = (1.0 + 1e-12) ** 2
    kchunk = max(1, int(8e6) // max(P, 1))
    for start in range(0, pu.shape[0], kchunk):
        sl = slice(start, start + kchunk)
        uu = diffs[pu[sl]]
        vv = diffs[pv[sl]]
        ok = np.ones((P, uu.shape[0]), dtype=bool)
        for w in (uu, vv, uu + vv):
            w2 = np.einsum("ki,ki->k", w, w)[None, :]
            ok &= x2 - 2.0 * (pts @ w.T) + w2 <= lim2
        mult[sl] = ok.sum(axis=0)

    real = mult > 0
    count = int(mult.sum())
    worst = -1.0
    witness = None
    norm_pair_max = 0.0
    if real.any():
        nu, nv = nd[pu[real]], nd[pv[real]]
        ratios = np.minimum(nu, nv) / spacing
        top = np.flatnonzero(ratios == ratios.max())[0]  # lex-first among ties
        worst = float(ratios.max())
        uu = diffs[pu[real][top]]
        vv = diffs[pv[real][top]]
        xi1 = _realizing_shift(lat.points, spacing, uu, vv)
        witness = Quadruple.closed(xi1, xi1 - uu, xi1 - uu - vv)
        off = (nu > 0) & (nv > 0)
        if off.any():
            up = diffs[pu[real][off]] / nu[off, None]
            vp = diffs[pv[real][off]] / nv[off, None]
            norm_pair_max = float(
                np.abs(np.einsum("ni,kij,nj->nk", up, sys.A, vp)).max())

    return BiorthoReport(
        delta=delta,
        worst_ratio=max(worst, 0.0),
        witness=witness,
        count_admissible=count,
        lattice_size=P,
        total_triples=total,
        tolerance_multiplier=tolerance_multiplier,
        normalized_pairing_max=norm_pair_max,
    )
