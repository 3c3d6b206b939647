import numpy as np
import pytest

from quadcone.cover import build_plank_family
from quadcone.lorentz import LorentzMap, distance_to_cone, neighborhood_rescaling_check
from quadcone.quadform import QuadraticSystem, frame_at, get_system

PARABOLA = get_system("parabola")
COMPLEX = get_system("complex_parabola")


def cone_points(sys_, rng, count, sector=None):
    d = sys_.d
    xi = rng.uniform(-1, 1, (count, d))
    xi /= np.maximum(1.0, np.linalg.norm(xi, axis=1, keepdims=True) + 1e-9)
    h = rng.uniform(0.5, 1.0, count)
    if sector is not None:
        xt, s = sector
        xi = (xt + s * (xi - xt)) * 1.0
    xi = xi * h[:, None]
    return np.concatenate([xi, sys_.q(xi) / h[:, None], h[:, None]], axis=1)


def is_on_cone(sys_, pts, tol=1e-12):
    xi = pts[..., :sys_.d]
    h = pts[..., -1]
    zeta = pts[..., sys_.d:-1]
    return np.abs(zeta - sys_.q(xi) / h[..., None]).max() <= tol


def test_sector_center_line_maps_to_apex():
    xt = np.array([0.4])
    m = LorentzMap(sys=PARABOLA, xi_tau=xt, s=0.25)
    for h in (0.5, 0.7, 1.0):
        p = np.concatenate([h * xt, PARABOLA.q(h * xt) / h, [h]])
        img = m.apply(p)
        assert np.abs(img[:-1]).max() <= 1e-12
        assert img[-1] == h


def test_on_cone_maps_on_cone():
    rng = np.random.default_rng(0)
    for sys_, xt in ((PARABOLA, [0.3]), (COMPLEX, [0.2, -0.4])):
        m = LorentzMap(sys=sys_, xi_tau=np.array(xt), s=0.5)
        pts = cone_points(sys_, rng, 100_000)
        assert is_on_cone(sys_, m.apply(pts), tol=1e-11)


def test_height_preserved_exactly():
    m = LorentzMap(sys=COMPLEX, xi_tau=np.array([0.1, 0.2]), s=0.5)
    rng = np.random.default_rng(1)
    pts = rng.normal(size=(1000, 5))
    assert np.array_equal(m.apply(pts)[:, -1], pts[:, -1])


def test_linearity_additive_increments():
    m = LorentzMap(sys=COMPLEX, xi_tau=np.array([0.1, 0.2]), s=0.25)
    rng = np.random.default_rng(2)
    p, q = rng.normal(size=(2, 5))
    assert np.allclose(m.apply(p + q), m.apply(p) + m.apply(q), atol=1e-12)
    assert np.allclose(m.apply(2.5 * p), 2.5 * m.apply(p), atol=1e-12)


def test_composition_law():
    # applying the sector map then a centered map equals one map with the
    # product scale: checked pointwise to 1e-12
    rng = np.random.default_rng(3)
    xt = np.array([0.3])
    for s, s2 in ((0.5, 0.5), (0.25, 0.5)):
        m1 = LorentzMap(sys=PARABOLA, xi_tau=xt, s=s)
        m2 = LorentzMap(sys=PARABOLA, xi_tau=np.zeros(1), s=s2)
        m12 = LorentzMap(sys=PARABOLA, xi_tau=xt, s=s * s2)
        pts = rng.normal(size=(500, 3))
        assert np.abs(m2.apply(m1.apply(pts)) - m12.apply(pts)).max() <= 1e-12


def test_jacobian_matches_determinant():
    m = LorentzMap(sys=COMPLEX, xi_tau=np.array([0.1, -0.2]), s=0.25)
    assert np.isclose(np.linalg.det(m.matrix()), m.jacobian(), rtol=1e-12)
    assert np.isclose(m.jacobian(), 0.25 ** -6)


def test_identity_scale_distances_within_factor_two():
    m = LorentzMap(sys=PARABOLA, xi_tau=np.zeros(1), s=1.0)
    rep = neighborhood_rescaling_check(m, r=16, samples=150, seed=0)
    assert 0.25 <= rep.max_scaled_distance <= 2.0


def test_rescaling_band_quarter_scale():
    m = LorentzMap(sys=PARABOLA, xi_tau=np.array([0.25]), s=0.25)
    rep = neighborhood_rescaling_check(m, r=64, samples=150, seed=1)
    assert rep.within_band
    assert 1 / 8 <= rep.max_scaled_distance <= 8


def test_distance_to_cone_zero_on_cone():
    rng = np.random.default_rng(4)
    pts = cone_points(PARABOLA, rng, 10)
    for p in pts:
        assert distance_to_cone(PARABOLA, p) <= 1e-7


def test_plank_image_comparable_to_rescaled_plank():
    # vertices of a sector plank land inside a bounded dilate of the plank at
    # scale sigma/s around the mapped base point
    r, sigma, s = 64, 0.125, 0.25
    xt = np.array([0.25])
    m = LorentzMap(sys=PARABOLA, xi_tau=xt, s=s)
    fam = build_plank_family(PARABOLA, r, sigma, E=4.0)
    sel = [i for i, b in enumerate(fam.planks)
           if np.linalg.norm(b.frame.base - xt) <= s / 2]
    # thickness amplification s^-2 lands the image at geometry scale r*s
    fam2 = build_plank_family(PARABOLA, r * s, sigma / s, E=4.0)
    for i in sel[:5]:
        box = fam.planks[i]
        image_base = (box.frame.base - xt) / s
        j = int(np.argmin(np.linalg.norm(fam2.stack.base_points - image_base, axis=1)))
        target = fam2.planks[j].dilated(6.0)
        assert target.contains(m.apply(box.vertices())).all()


def test_requires_pure_quadratic():
    affine = QuadraticSystem(A=np.array([[[2.0]]]), b=np.array([[1.0]]),
                             c=np.array([0.0]))
    with pytest.raises(ValueError):
        LorentzMap(sys=affine, xi_tau=np.zeros(1), s=0.5)
