import itertools
import math

import numpy as np
import pytest

from quadcone.biortho import (
    NotTransversal,
    Quadruple,
    TooLarge,
    certify_biorthogonality,
    dmvt_defect,
    dmvt_defect_batch,
    is_admissible,
)
from quadcone.cover import make_lattice
from quadcone.quadform import certify_transversality, get_system


def triple_loop_reference(sys_, delta, tol):
    """Literal lexicographic (xi1, xi2, xi3) enumeration; the oracle."""
    sp = math.sqrt(delta)
    lat = make_lattice(sys_.d, sp).points
    worst, count = -1.0, 0
    for xi1 in lat:
        for xi2 in lat:
            for xi3 in lat:
                xi4 = xi1 + xi3 - xi2
                if np.linalg.norm(xi4) > 1 + 1e-12:
                    continue
                u, v = xi1 - xi2, xi1 - xi4
                if np.all(np.abs(np.einsum("i,kij,j->k", u, sys_.A, v))
                          <= tol * delta + 1e-15):
                    count += 1
                    worst = max(worst, min(np.linalg.norm(u), np.linalg.norm(v)) / sp)
    return max(worst, 0.0), count


def gaussian_integer_oracle(tol):
    """Closed-form worst ratio for the complex parabola on its lattice.

    Defects are 2*delta*Re(z1 z2) and 2*delta*Im(z1 z2) for Gaussian integers
    z1 = u/sqrt(delta), z2 = v/sqrt(delta); admissibility is |Re|,|Im| <= tol/2.
    """
    best = 0.0
    rng = range(-6, 7)
    for i, j, k, m in itertools.product(rng, repeat=4):
        z1, z2 = complex(i, j), complex(k, m)
        prod = z1 * z2
        if abs(prod.real) <= tol / 2 + 1e-12 and abs(prod.imag) <= tol / 2 + 1e-12:
            best = max(best, min(abs(z1), abs(z2)))
    return best


def test_dmvt_parabola_hand_value():
    quad = Quadruple.closed([0.5], [0.3], [0.1])
    assert np.allclose(quad.xi4, [0.3])
    direct, bilinear = dmvt_defect(get_system("parabola"), quad, 0)
    assert abs(direct - 0.08) <= 1e-15
    assert abs(bilinear - 0.08) <= 1e-15


def test_dmvt_zero_on_diagonal():
    quad = Quadruple.closed([0.4, -0.2], [0.4, -0.2], [0.1, 0.3])
    for m in range(2):
        direct, bilinear = dmvt_defect(get_system("complex_parabola"), quad, m)
        assert bilinear == 0.0  # xi12 is exactly zero
        assert abs(direct) <= 1e-15  # xi4 reconstruction rounds in the last ulp


@pytest.mark.parametrize("name", ["parabola", "complex_parabola",
                                  "reflection_inversion_d3", "random_sym_d3_l3(0)"])
def test_dmvt_identity_randomized(name):
    sys_ = get_system(name)
    rng = np.random.default_rng(13)
    xi = rng.uniform(-1, 1, size=(3, 100_000, sys_.d)) / 3.0
    direct, bilinear = dmvt_defect_batch(sys_, xi[0], xi[1], xi[2])
    assert np.abs(direct - bilinear).max() <= 1e-12


def test_quadruple_invariants():
    with pytest.raises(ValueError):
        Quadruple(xi1=np.array([0.5]), xi2=np.array([0.3]),
                  xi3=np.array([0.1]), xi4=np.array([0.4]))
    with pytest.raises(ValueError):
        Quadruple.closed([0.9], [-0.9], [0.9])  # xi4 = 2.7 leaves the ball


def test_scan_matches_triple_loop():
    cp = get_system("complex_parabola")
    for delta, tol in [(1 / 16, 1.0), (1 / 16, 4.0)]:
        ref_worst, ref_count = triple_loop_reference(cp, delta, tol)
        rep = certify_biorthogonality(cp, delta, tolerance_multiplier=tol, force=True)
        assert abs(rep.worst_ratio - ref_worst) <= 1e-12
        assert rep.count_admissible == ref_count


def test_scan_matches_triple_loop_parabola():
    pb = get_system("parabola")
    ref_worst, ref_count = triple_loop_reference(pb, 1 / 16, 1.0)
    rep = certify_biorthogonality(pb, 1 / 16, force=True)
    assert abs(rep.worst_ratio - ref_worst) <= 1e-12
    assert rep.count_admissible == ref_count


def test_worst_ratio_matches_gaussian_oracle():
    cp = get_system("complex_parabola")
    for tol in (1.0, 4.0):
        oracle = gaussian_integer_oracle(tol)
        rep = certify_biorthogonality(cp, 2 ** -6, tolerance_multiplier=tol, force=True)
        assert abs(rep.worst_ratio - oracle) <= 0.25 * max(oracle, 1e-12) + 1e-12


def test_diagonal_always_admissible():
    cp = get_system("complex_parabola")
    quad = Quadruple.closed([0.25, 0.0], [0.25, 0.0], [-0.5, 0.25])
    assert is_admissible(cp, quad, 2 ** -8)


def test_tolerance_monotonicity():
    cp = get_system("complex_parabola")
    worsts = [certify_biorthogonality(cp, 2 ** -6, tolerance_multiplier=t,
                                      force=True).worst_ratio
              for t in (1.0, 4.0, 16.0)]
    assert worsts[0] <= worsts[1] <= worsts[2]


def test_swap_symmetry_of_admissibility():
    cp = get_system("complex_parabola")
    rng = np.random.default_rng(3)
    for _ in range(200):
        pts = rng.uniform(-1, 1, size=(3, 2)) / 3
        quad = Quadruple.closed(*pts)
        swapped24 = Quadruple(xi1=quad.xi1, xi2=quad.xi4, xi3=quad.xi3, xi4=quad.xi2)
        swapped13 = Quadruple(xi1=quad.xi3, xi2=quad.xi2, xi3=quad.xi1, xi4=quad.xi4)
        for delta in (2 ** -6, 2 ** -8):
            a = is_admissible(cp, quad, delta)
            assert a == is_admissible(cp, swapped24, delta)
            assert a == is_admissible(cp, swapped13, delta)


def test_budget_guard_and_force():
    cp = get_system("complex_parabola")
    with pytest.raises(TooLarge):
        certify_biorthogonality(cp, 2 ** -6, max_triples=10 ** 5)
    rep = certify_biorthogonality(cp, 2 ** -6, max_triples=10 ** 5, force=True)
    assert rep.total_triples > 10 ** 5


def test_not_transversal_guard():
    sys_ = get_system("random_sym_d3_l3(0)")
    with pytest.raises(NotTransversal):
        certify_biorthogonality(sys_, 2 ** -6, c_min=0.0)


def test_degenerate_direction_unbounded_ratio():
    # plant a continuum quadruple along the kernel direction: admissible at
    # every delta while min(|u|,|v|) stays macroscopic
    sys_ = get_system("random_sym_d3_l3(0)")
    cert = certify_transversality(sys_, 20_000)
    nu = cert.witness_nu
    span = np.stack([sys_.A[m] @ nu for m in range(3)])
    _, s, vt = np.linalg.svd(span)
    w = vt[-1]
    assert s[-1] <= 1e-3  # near-degenerate family
    u, v = 0.5 * w, 0.5 * nu
    xi1 = 0.5 * (u + v)
    quad = Quadruple(xi1=xi1, xi2=xi1 - u, xi3=xi1 - u - v, xi4=xi1 - v)
    ratios = []
    for delta in (2 ** -6, 2 ** -8, 2 ** -10):
        assert is_admissible(sys_, quad, delta, tolerance_multiplier=1.0)
        ratios.append(min(np.linalg.norm(u), np.linalg.norm(v)) / math.sqrt(delta))
    assert ratios == sorted(ratios) and ratios[-1] > 3.0  # grows without bound


def test_witness_is_admissible_and_achieves_ratio():
    cp = get_system("complex_parabola")
    rep = certify_biorthogonality(cp, 2 ** -6, tolerance_multiplier=4.0, force=True)
    q = rep.witness
    assert is_admissible(cp, q, 2 ** -6, tolerance_multiplier=4.0)
    got = min(np.linalg.norm(q.xi12), np.linalg.norm(q.xi14)) / math.sqrt(2 ** -6)
    assert abs(got - rep.worst_ratio) <= 1e-12
