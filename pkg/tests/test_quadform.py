import itertools

import numpy as np
import pytest

from quadcone.quadform import (
    BadResolution,
    QuadraticSystem,
    StructurallyDegenerate,
    certify_transversality,
    frame_at,
    get_system,
    sphere_grid,
    sphere_grid_spacing,
    tangent_wedge_volume,
)


def test_parabola_frame_at_origin():
    sys_ = get_system("parabola")
    fr = frame_at(sys_, [0.0])
    assert np.allclose(fr.tangents, [[1.0, 0.0]])
    assert np.allclose(fr.normals, [[0.0, 1.0]])


def test_parabola_frame_half():
    # dq(0.5) = 2*0.5 = 1 by hand
    fr = frame_at(get_system("parabola"), [0.5])
    assert np.allclose(fr.tangents, [[1.0, 1.0]])
    assert np.allclose(fr.normals, [[-1.0, 1.0]])


def test_complex_parabola_frame():
    fr = frame_at(get_system("complex_parabola"), [1.0, 0.0])
    assert np.allclose(fr.tangents[0], [1, 0, 2, 0])
    assert np.allclose(fr.tangents[1], [0, 1, 0, 2])


def test_conical_frame_embedding():
    sys_ = get_system("complex_parabola")
    eta = np.array([0.3, -0.2])
    fr = frame_at(sys_, eta, conical=True)
    assert fr.ambient == sys_.n + 1
    assert np.allclose(fr.center, np.concatenate([eta, sys_.q(eta), [1.0]]))
    assert np.all(fr.tangents[:, -1] == 0) and np.all(fr.normals[:, -1] == 0)


def test_frame_dimension_mismatch():
    with pytest.raises(ValueError):
        frame_at(get_system("parabola"), [0.1, 0.2])


@pytest.mark.parametrize("name", ["parabola", "complex_parabola",
                                  "reflection_inversion_d3", "random_sym_d3_l3(3)"])
def test_tangent_normal_orthogonality(name):
    sys_ = get_system(name)
    rng = np.random.default_rng(7)
    for _ in range(50):
        eta = rng.uniform(-1, 1, sys_.d)
        eta /= max(1.0, np.linalg.norm(eta) * 1.01)
        fr = frame_at(sys_, eta)
        assert np.abs(fr.tangents @ fr.normals.T).max() <= 1e-12


def test_certify_rotated_pair_is_one():
    cert = certify_transversality(get_system("complex_parabola_rotated"), 10_000)
    assert abs(cert.c_min - 1.0) <= 1e-9


def test_certify_scalar_identity():
    sys_ = QuadraticSystem.pure([[[1.0]]], name="unit_scalar")
    cert = certify_transversality(sys_, 2)
    assert cert.c_min == 1.0
    assert cert.grid_spacing == 0.0


def test_certify_three_random_sym_vanishes():
    sys_ = get_system("random_sym_d3_l3(0)")
    lo = certify_transversality(sys_, 2_000)
    hi = certify_transversality(sys_, 10_000)
    assert hi.c_min <= 10 * hi.grid_spacing
    assert hi.c_min <= lo.c_min + lo.grid_lipschitz * lo.grid_spacing
    assert hi.c_min < lo.c_min  # refinement at higher resolution digs deeper


def test_certify_reflection_inversion_floor_stable():
    sys_ = get_system("reflection_inversion_d3")
    a = certify_transversality(sys_, 10_000)
    b = certify_transversality(sys_, 20_000)
    assert a.c_min > 0.1
    assert b.c_min > 0.1
    assert abs(a.c_min - b.c_min) <= a.grid_lipschitz * a.grid_spacing


def test_certificate_subset_recompute():
    sys_ = get_system("reflection_inversion_d3")
    cert = certify_transversality(sys_, 3_000)
    cols = np.stack([sys_.A[i] @ cert.witness_nu for i in cert.witness_subset], axis=1)
    assert abs(abs(np.linalg.det(cols)) - cert.c_min) <= 1e-12
    assert abs(np.linalg.norm(cert.witness_nu) - 1.0) <= 1e-12


def test_certify_degenerate_and_bad_resolution():
    tall = QuadraticSystem.pure(np.eye(2)[None], name="one_form_d2")
    with pytest.raises(StructurallyDegenerate):
        certify_transversality(tall, 100)
    with pytest.raises(BadResolution):
        certify_transversality(get_system("parabola"), 1)


def test_sphere_grid_shapes_and_norms():
    for d in (1, 2, 3, 4):
        g = sphere_grid(d, 50)
        assert np.allclose(np.linalg.norm(g, axis=1), 1.0, atol=1e-12)
        assert sphere_grid_spacing(d, 50) >= 0


def test_wedge_volume_repeated_point_is_zero():
    assert tangent_wedge_volume(get_system("complex_parabola"), [0.1, 0.2], [0.1, 0.2]) == 0.0


def test_wedge_volume_parabola_hand_value():
    # frames (1,0) and (1,2s): Gram det = 4 s^2, volume 2s
    s = 0.3
    vol = tangent_wedge_volume(get_system("parabola"), [0.0], [s])
    assert abs(vol - 2 * s) <= 1e-12


def test_wedge_lower_bound_certified_systems():
    for name in ("parabola", "complex_parabola"):
        sys_ = get_system(name)
        cert = certify_transversality(sys_, 4_000)
        assert cert.c_min > 0.5
        rng = np.random.default_rng(11)
        worst = np.inf
        for _ in range(200):
            u = rng.normal(size=sys_.d)
            u /= np.linalg.norm(u)
            s = rng.uniform(0.05, 1.0)
            base = rng.normal(size=sys_.d)
            base *= 0.99 * (1 - s) * rng.uniform() / np.linalg.norm(base)
            vol = tangent_wedge_volume(sys_, base, base + s * u)
            worst = min(worst, vol / s ** sys_.d)
        assert worst > 0.05  # recorded lower-bound constant c'


def test_complex_parabola_wedge_quadratic_in_separation():
    sys_ = get_system("complex_parabola")
    cert = certify_transversality(sys_, 4_000)
    for s in (0.1, 0.2, 0.4):
        vol = tangent_wedge_volume(sys_, [0.0, 0.0], [s, 0.0])
        assert vol >= cert.c_min * s ** 2 * 0.5


def test_json_round_trip():
    sys_ = get_system("complex_parabola")
    back = QuadraticSystem.from_json(sys_.to_json(), name="round")
    assert back.d == 2 and back.l == 2
    assert np.allclose(back.A, sys_.A)
    assert back.symmetric


def test_catalog_names_and_seeded_lookup():
    a = get_system("random_sym_d3_l3(5)")
    b = get_system("random_sym_d3_l3(5)")
    assert np.array_equal(a.A, b.A)
    with pytest.raises(KeyError):
        get_system("nonsense")


def test_symmetry_enforced_unless_flagged():
    with pytest.raises(ValueError):
        QuadraticSystem.pure([[[0.0, 1.0], [-1.0, 0.0]]])
    sys_ = get_system("complex_parabola_rotated")
    with pytest.raises(ValueError):
        frame_at(sys_, [0.0, 0.0])
