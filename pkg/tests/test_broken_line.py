import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thintube import broken_line as bl
from thintube import geometry as geo
from thintube.cross_section import TwistCoefficient
from thintube.effective_operator import effective_potential
from thintube.errors import ContractViolation, DegenerateFreeLine, InvalidInput


@pytest.fixture(scope="module")
def zero_mean():
    return bl.zero_mean_resonant_potential(n_cells=1000)


def dense_W(V):
    """W for a cellwise-constant V by a dense double sum (exact cell-pair averages of |s-y|)."""
    m, w, v = V.mids, V.widths, V.values
    K = np.abs(m[:, None] - m[None, :])
    return float((v * w) @ K @ (v * w) + np.sum(v**2 * w**3) / 3)


def barrier_transmission(v0, a, k):
    E = k * k
    if E > v0:
        q = np.sqrt(E - v0)
        return 1 / (1 + v0**2 * np.sin(q * a) ** 2 / (4 * E * (E - v0)))
    q = np.sqrt(v0 - E)
    return 1 / (1 + v0**2 * np.sinh(q * a) ** 2 / (4 * E * (v0 - E)))


def test_scaling_identities():
    V = bl.curvature_bump_potential(2.0, 0.8, 300)
    same = bl.scale_potential(V, 1.0).values
    assert np.array_equal(same.values, V.values) and np.array_equal(same.edges, V.edges)
    half = bl.scale_potential(V, 0.5).values
    assert half.integral() == pytest.approx(2 * V.integral(), rel=1e-14)
    assert np.abs(half.values).max() == 4 * np.abs(V.values).max()
    assert half.edges[0] == -0.5 and half.edges[-1] == 0.5


def test_scaling_effective_potential_keeps_bend_angle():
    c = geo.bump_curvature(1.0, 0.0, 0.8, 2.0, 200, start=-1.0)
    pot = effective_potential(c, TwistCoefficient(0, 0.0))
    for d in (1.0, 0.5, 0.1):
        sc = bl.scale_potential(pot, d)
        assert sc.bend_angle() == pytest.approx(c.bend_angle(), rel=1e-12)


def test_scaling_rejects_wide_support():
    with pytest.raises(InvalidInput):
        bl.scale_potential(bl.LinePotential.square_well(1.0, 2.0), 0.5)


def test_free_line():
    V = bl.LinePotential(np.linspace(-1, 1, 11), np.zeros(10))
    res = bl.detect_resonance(V)
    assert res.resonant and np.all(res.psi_r == 1)
    assert bl.limit_operator(V, res).kind == "free"
    with pytest.raises(DegenerateFreeLine):
        bl.vertex_coefficients(V, res)
    r, t = bl.scattering_1d(V, 0.7)
    assert abs(r) < 1e-15 and abs(t - 1) < 1e-15


def test_square_well_resonance_profile():
    V = bl.LinePotential.square_well(np.pi**2, 1.0, 2000)
    res = bl.detect_resonance(V)
    assert res.resonant
    # gauge: sup norm 1, left value positive; cos(pi (s + 1)) = -cos(pi s) inside
    assert np.abs(res.psi_edges - (-np.cos(np.pi * res.s))).max() < 1e-12
    assert res.left == pytest.approx(1.0) and res.right == pytest.approx(1.0)


def test_square_well_v1_not_resonant():
    V = bl.LinePotential.square_well(1.0, 1.0, 500)
    res = bl.detect_resonance(V)
    assert not res.resonant
    # closed form exit slope of cos(s + 1)
    assert res.exit_slope == pytest.approx(-np.sin(2.0), rel=1e-12)
    assert bl.limit_operator(V, res).kind == "dirichlet"
    with pytest.raises(ContractViolation):
        bl.vertex_coefficients(V, res)


def test_resonance_is_scale_covariant(zero_mean):
    for V in (bl.LinePotential.square_well(np.pi**2, 1.0, 400), bl.LinePotential.square_well(1.0, 1.0, 400),
              zero_mean.V):
        r0 = bl.detect_resonance(V).resonant
        for d in (0.5, 0.25):
            assert bl.detect_resonance(V.scaled(d)).resonant == r0


def test_mean_branches(zero_mean):
    assert bl.mean_potential(bl.curvature_bump_potential(2.0)).value < 0
    assert bl.mean_potential(bl.LinePotential(np.linspace(-1, 1, 5), np.zeros(4))).value == 0
    assert bl.mean_potential(zero_mean.V).branch == "zero"


def test_even_potential_has_no_c2():
    V = bl.LinePotential.square_well(np.pi**2, 1.0, 2000)
    vc = bl.limit_operator(V)
    assert vc.kind == "scaled-coupling"
    assert abs(vc.c2) < 1e-12
    r, t = bl.vertex_scattering(vc)
    assert abs(t - 1) < 1e-6 and abs(r) < 1e-6


def test_square_well_c1_against_refined_oracle():
    V = bl.LinePotential.square_well(np.pi**2, 1.0, 2000)
    c1 = bl.limit_operator(V).c1
    fine = V.subdivide(10)
    c1_ref = bl.vertex_coefficients(fine, bl.detect_resonance(fine)).c1
    assert abs(c1 - c1_ref) <= 1e-6 * abs(c1_ref)


def test_coefficients_follow_the_asymptotics(zero_mean):
    # psi_r = -c1 - c2 for s < supp V and -c1 + c2 beyond
    for V in (bl.LinePotential.square_well(np.pi**2, 1.0, 2000), zero_mean.V):
        res = bl.detect_resonance(V)
        vc = bl.vertex_coefficients(V, res)
        assert vc.c1 == pytest.approx(-(res.left + res.right) / 2, rel=1e-4)
        assert vc.c2 == pytest.approx((res.right - res.left) / 2, abs=1e-4)


def test_zero_mean_W_against_dense_sum(zero_mean):
    V = zero_mean.V
    vc = bl.vertex_coefficients(V, bl.detect_resonance(V))
    assert vc.branch == "zero"
    assert vc.W == pytest.approx(dense_W(V), rel=1e-10)


def test_zero_mean_W_is_minus_twice_primitive_norm(zero_mean):
    # with int V = 0 the primitive F(s) = int_{-inf}^s V has compact support and
    # integrating by parts twice gives W = -2 int F^2, so W <= 0
    V = zero_mean.V
    F = np.concatenate([[0.0], np.cumsum(V.values * V.widths)])
    Fa, Fb = F[:-1], F[1:]
    int_F2 = float(np.sum(V.widths * (Fa**2 + Fa * Fb + Fb**2) / 3))
    W = bl.vertex_coefficients(V, bl.detect_resonance(V)).W
    assert W == pytest.approx(-2 * int_F2, rel=1e-9)
    assert W < 0


def test_coefficients_scale_with_gauge():
    V = bl.LinePotential.square_well(np.pi**2, 1.0, 400)
    res = bl.detect_resonance(V)
    vc = bl.vertex_coefficients(V, res)
    res3 = bl.ResonanceState(res.resonant, res.exit_slope, res.slope_tol, res.s, 3 * res.psi_edges,
                             3 * res.psi_mid, 3 * res.scale)
    vc3 = bl.vertex_coefficients(V, res3)
    assert vc3.c1 == pytest.approx(3 * vc.c1, rel=1e-13)
    assert vc3.theta == pytest.approx(vc.theta, abs=1e-12)


def test_vertex_scattering_matches_direct_matching():
    for c1, c2 in ((1.0, 0.3), (-0.4, 0.9), (0.458, -0.466)):
        vc = bl.VertexCondition("scaled-coupling", c1, c2)
        th = vc.theta
        k = 0.37
        # unknowns (r, t): psi(0+) = th psi(0-), psi'(0+) = psi'(0-) / th
        M = np.array([[-th, 1.0], [1j * k / th, 1j * k]])
        rhs = np.array([th, 1j * k / th])
        r, t = np.linalg.solve(M, rhs)
        r0, t0 = bl.vertex_scattering(vc)
        assert abs(r - r0) < 1e-14 and abs(t - t0) < 1e-14
        mu = (c1 - c2) / (c1 + c2)
        assert t0 == pytest.approx(2 / (mu + 1 / mu))


def test_dirichlet_vertex():
    assert bl.vertex_scattering(bl.VertexCondition("dirichlet")) == (-1 + 0j, 0j)


def test_vertex_needs_nonzero_coefficients():
    with pytest.raises(ContractViolation):
        bl.VertexCondition("scaled-coupling", 0.0, 0.0)


@pytest.mark.parametrize("v0,k", [(1.0, 2.0), (4.0, 1.0), (-3.0, 0.5)])
def test_barrier_transmission_closed_form(v0, k):
    a = 1.3
    V = bl.LinePotential(np.linspace(-a / 2, a / 2, 17), np.full(16, v0))
    _, t = bl.scattering_1d(V, k)
    assert abs(t) ** 2 == pytest.approx(barrier_transmission(v0, a, k), rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-30, 30), min_size=1, max_size=30), st.floats(0.01, 8.0))
def test_unitarity(values, k):
    V = bl.LinePotential(np.linspace(-1, 1, len(values) + 1), np.array(values))
    r, t = bl.scattering_1d(V, k)
    assert abs(abs(r) ** 2 + abs(t) ** 2 - 1) <= 1e-8


def test_low_energy_reflection_non_resonant():
    V = bl.LinePotential.square_well(1.0, 1.0, 200)
    dev = [abs(bl.scattering_1d(V, k)[0] + 1) for k in (0.1, 0.01, 0.001)]
    assert dev[0] > dev[1] > dev[2] and dev[2] < 0.01


def test_delta_study_non_resonant():
    st_ = bl.delta_convergence_study(bl.curvature_bump_potential(2.0, 1.0, 1000), [0.4, 0.2, 0.1], [0.1])
    assert st_.limit.kind == "dirichlet"
    dev = [st_.max_deviation()[d] for d in (0.4, 0.2, 0.1)]
    assert dev[0] > dev[1] > dev[2] and dev[2] <= 0.1
    assert st_.fitted_rate() == pytest.approx(1.0, abs=0.1)


def test_delta_study_zero_mean_converges_to_vertex(zero_mean, tmp_path):
    st_ = bl.delta_convergence_study(zero_mean.V, [0.4, 0.2, 0.1, 0.05], [0.1])
    assert st_.limit.branch == "zero"
    dev = [st_.max_deviation()[d] for d in (0.4, 0.2, 0.1, 0.05)]
    assert all(a > b for a, b in zip(dev, dev[1:]))
    assert st_.fitted_rate() == pytest.approx(1.0, abs=0.05)
    bl.write_delta_csv(st_, tmp_path / "d.csv")
    bl.write_classification_json(st_, tmp_path / "c.json")
    assert len((tmp_path / "d.csv").read_text().splitlines()) == 5


def test_line_potential_validation():
    with pytest.raises(InvalidInput):
        bl.LinePotential(np.array([0.0, 1.0]), np.array([1.0, 2.0]))
    with pytest.raises(InvalidInput):
        bl.LinePotential(np.array([0.0, 0.0, 1.0]), np.array([1.0, 2.0]))
    with pytest.raises(InvalidInput):
        bl.scattering_1d(bl.LinePotential.square_well(1.0), 0.0)
