import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from thintube import geometry as geo
from thintube.errors import InvalidInput


def frenet_matrix(k, t):
    return np.array([[0.0, k, 0.0], [-k, 0.0, t], [0.0, -t, 0.0]])


def test_rejects_nonuniform_grid():
    s = np.array([0.0, 0.1, 0.25, 0.3])
    with pytest.raises(InvalidInput):
        geo.CurveSpec.from_samples(s, np.zeros(4))


def test_rejects_nan_curvature():
    s = np.linspace(0, 1, 5)
    k = np.array([0, 0, np.nan, 0, 0])
    with pytest.raises(InvalidInput):
        geo.CurveSpec.from_samples(s, k)


def test_derived_alpha_dot_is_central_difference():
    s = np.linspace(0, 2, 41)
    alpha = np.sin(3 * s)
    c = geo.CurveSpec.from_samples(s, np.zeros_like(s), alpha=alpha)
    assert c.alpha_dot_derived
    central = (alpha[2:] - alpha[:-2]) / (2 * c.h)
    assert np.max(np.abs(c.alpha_dot[1:-1] - central)) < 1e-14


def test_flat_curve_keeps_initial_frame():
    fr = geo.build_frame(geo.straight(5.0, 50))
    for X in (fr.T, fr.N, fr.B):
        assert np.all(X == X[0])
    assert np.array_equal(fr.T[0], [1, 0, 0])


def test_unit_circle_tangent():
    n = int(round(np.pi / 1e-3))
    c = geo.circular_arc(1.0, np.pi, n)
    fr = geo.build_frame(c)
    s = c.s_grid
    ref = np.column_stack([np.cos(s), np.sin(s), 0 * s])
    assert np.max(np.abs(fr.T - ref)) <= 1e-8
    assert fr.orthonormality_defect() <= 1e-10


def test_helix_frame_matches_matrix_exponential():
    c = geo.helix(1.0, 1.0, 2 * np.pi, 6284)
    fr = geo.build_frame(c)
    A = frenet_matrix(1.0, 1.0)
    worst = 0.0
    for i in range(0, c.s_grid.size, 97):
        X = expm(c.s_grid[i] * A)
        got = np.vstack([fr.T[i], fr.N[i], fr.B[i]])
        worst = max(worst, np.abs(got - X).max())
    assert worst <= 1e-6
    assert fr.orthonormality_defect() <= 1e-10


def test_rotated_normals():
    s = np.linspace(0, 3, 61)
    c = geo.CurveSpec.from_samples(s, 0.5 + 0 * s, 0.3 + 0 * s, alpha=0.7 * s)
    fr = geo.build_frame(c)
    ca, sa = np.cos(c.alpha)[:, None], np.sin(c.alpha)[:, None]
    assert np.array_equal(fr.N_alpha, ca * fr.N - sa * fr.B)
    assert np.array_equal(fr.B_alpha, sa * fr.N + ca * fr.B)
    assert np.max(np.linalg.norm(np.cross(fr.T, fr.N) - fr.B, axis=1)) <= 1e-10


def test_beta_examples():
    flat = geo.straight(2.0, 10)
    assert geo.beta_weight(flat, 0.3, 1.0, (0.5, -0.2)) == 1.0
    circ = geo.circular_arc(1.0, 2.0, 20)
    assert geo.beta_weight(circ, 0.0, 1.0, (0.5, 0.5)) == 1.0
    assert geo.beta_weight(circ, 0.1, 1.0, (0.3, 0.0)) == pytest.approx(0.97, abs=1e-15)


def test_metric_straight_tube_is_diagonal():
    m = geo.metric_at(geo.straight(2.0, 10), 0.2, 1.0, (0.3, -0.4))
    assert np.array_equal(m.G, np.diag([1.0, 0.04000000000000001, 0.04000000000000001]))


def test_metric_det_example():
    circ = geo.circular_arc(1.0, 2.0, 20)
    m = geo.metric_at(circ, 0.1, 1.0, (0.3, 0.0))
    assert m.beta == pytest.approx(0.97)
    assert m.det_G == pytest.approx(9.409e-5, rel=1e-12)
    assert np.linalg.det(m.G) == pytest.approx(9.409e-5, rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.0, 10.0), st.floats(-1, 1), st.floats(-1, 1), st.floats(1e-3, 0.3),
       st.sampled_from(["frenet", "flipped"]))
def test_metric_is_jacobian_gram(s, y1, y2, eps, conv):
    curve = geo.twisted(1.3, 5.0, 2.0, 10.0, 200, kappa_amplitude=0.8)
    m = geo.metric_at(curve, eps, s, (y1, y2), conv)
    assert np.allclose(m.G, m.G.T, rtol=0, atol=0)
    assert np.abs(m.J @ m.J.T - m.G).max() <= 1e-12
    ref = eps**4 * m.beta**2
    assert abs(np.linalg.det(m.G) - ref) <= 1e-12 * ref


def test_flipped_convention_changes_rho_only():
    curve = geo.twisted(1.0, 5.0, 2.0, 10.0, 100)
    a = geo.metric_at(curve, 0.1, 5.0, (0.2, 0.3), "frenet")
    b = geo.metric_at(curve, 0.1, 5.0, (0.2, 0.3), "flipped")
    assert b.rho == -a.rho and b.sigma == a.sigma and b.det_G == a.det_G


def test_validate_tube_examples():
    assert geo.validate_tube(geo.straight(1.0, 10), 100.0, 1.0).ok
    s = np.linspace(0, 1, 11)
    c = geo.CurveSpec.from_samples(s, np.sin(np.pi * s))
    ok = geo.validate_tube(c, 0.5, 1.0)
    assert ok.ok and ok.min_beta == pytest.approx(0.5)
    bad = geo.validate_tube(c, 1.0, 1.0)
    assert not bad.ok and abs(bad.min_beta) < 1e-12


def test_twist_is_gauge_combination():
    c = geo.twisted(1.0, 5.0, 2.0, 10.0, 50)
    assert np.array_equal(c.twist, c.tau - c.alpha_dot)


def test_bump_curve_bend_angle_and_support():
    c = geo.bump_curvature(1.5, 5.0, 2.0, 10.0, 400)
    assert c.kappa[0] == 0 and c.kappa[-1] == 0
    assert np.all(c.kappa[np.abs(c.s_grid - 5.0) >= 2.0] == 0)
    assert c.bend_angle() > 0


def test_curve_roundtrip(tmp_path):
    c = geo.twisted(1.0, 5.0, 2.0, 10.0, 30, kappa_amplitude=0.4)
    p = tmp_path / "c.dat"
    geo.write_curve(c, p)
    d = geo.read_curve(p)
    for name in ("s_grid", "kappa", "tau", "alpha", "alpha_dot"):
        assert np.array_equal(getattr(c, name), getattr(d, name))
