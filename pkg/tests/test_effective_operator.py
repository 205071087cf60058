import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thintube import geometry as geo
from thintube.cross_section import TwistCoefficient
from thintube.effective_operator import (bound_state_exists, effective_potential, potential_from_function,
                                         read_potential_csv, residual, schrodinger_eigen,
                                         write_potential_csv, write_spectrum_csv)
from thintube.errors import InvalidInput, ResolutionError


def test_untwisted_potential_is_attractive():
    c = geo.bump_curvature(1.5, 5.0, 2.0, 10.0, 200)
    V = effective_potential(c, TwistCoefficient(0, 0.7))
    assert np.array_equal(V.values, -0.25 * c.kappa**2)
    assert np.all(V.values <= 0)


def test_constant_torsion_gives_constant_potential():
    s = np.linspace(0, 4, 81)
    c = geo.CurveSpec.from_samples(s, None, tau=0.6 + 0 * s)
    V = effective_potential(c, TwistCoefficient(1, 2.0))
    assert np.array_equal(V.values, np.full(s.size, 0.36 * 2.0))


def test_radial_mode_ignores_twist():
    c = geo.twisted(3.0, 5.0, 2.0, 10.0, 100, kappa_amplitude=0.5)
    V = effective_potential(c, TwistCoefficient(0, 0.0))
    assert np.array_equal(V.values, -0.25 * c.kappa**2)


def test_large_twist_flagged():
    c = geo.twisted(2000.0, 5.0, 2.0, 10.0, 100)
    assert "large-twist" in effective_potential(c, TwistCoefficient(0, 1.0)).flags


def test_particle_in_a_box():
    s = np.linspace(0, 1, 401)
    pot = potential_from_function(lambda x: 0 * x, s)
    sp1 = schrodinger_eigen(pot, 3)
    h = s[1] - s[0]
    j = np.arange(1, 4)
    discrete = (2 / h * np.sin(j * np.pi * h / 2)) ** 2
    # eigensolver backward error is about eps * 4/h^2, i.e. 1e-11 relative here
    assert np.allclose(sp1.eigenvalues, discrete, rtol=1e-9, atol=0)
    assert sp1.eigenvalues[0] == pytest.approx(np.pi**2, rel=1e-5)
    assert sp1.orthonormality_defect() < 1e-12
    assert residual(pot, sp1) < 1e-10


@settings(max_examples=25, deadline=None)
@given(st.floats(-50, 50))
def test_constant_shift(c):
    s = np.linspace(-3, 3, 301)
    pot = potential_from_function(lambda x: -np.exp(-x**2), s)
    a = schrodinger_eigen(pot, 3).eigenvalues
    b = schrodinger_eigen(pot.shifted(c), 3).eigenvalues
    assert np.allclose(b - a, c, rtol=0, atol=1e-10 * (1 + abs(c)))


def test_bump_has_negative_eigenvalue_on_large_interval():
    c = geo.bump_curvature(1.0, 0.0, 1.0, 2.0, 40, start=-1.0)
    pot = effective_potential(c, TwistCoefficient(0, 0.0))
    mu = schrodinger_eigen(pot, 1, interval=(-20.0, 20.0)).eigenvalues[0]
    assert mu < 0


def test_bound_state_examples():
    c = geo.bump_curvature(1.0, 10.0, 1.5, 20.0, 400)
    pot = effective_potential(c, TwistCoefficient(0, 0.0))
    assert pot.integral() < 0
    rep = bound_state_exists(pot, 10.0)
    assert rep.exists and rep.lowest < 0
    s = np.linspace(0, 20, 401)
    plus = potential_from_function(lambda x: (np.abs(x - 10) < 2).astype(float), s)
    assert not bound_state_exists(plus, 10.0).exists
    zero = potential_from_function(lambda x: 0 * x, s)
    assert not bound_state_exists(zero, 10.0).exists


def test_bound_state_needs_decaying_potential():
    s = np.linspace(0, 1, 11)
    with pytest.raises(InvalidInput):
        bound_state_exists(potential_from_function(lambda x: 1 + 0 * x, s), 1.0)


def test_too_many_modes():
    s = np.linspace(0, 1, 6)
    with pytest.raises(ResolutionError):
        schrodinger_eigen(potential_from_function(lambda x: 0 * x, s), 5)
    with pytest.raises(ResolutionError):
        schrodinger_eigen(potential_from_function(lambda x: 0 * x, s), 10)


def test_csv_roundtrip(tmp_path):
    c = geo.twisted(1.0, 5.0, 2.0, 10.0, 50, kappa_amplitude=0.3)
    pot = effective_potential(c, TwistCoefficient(1, 1.23))
    write_potential_csv(pot, tmp_path / "v.csv")
    back = read_potential_csv(tmp_path / "v.csv")
    assert np.array_equal(back.values, pot.values) and np.array_equal(back.s_grid, pot.s_grid)
    write_spectrum_csv(schrodinger_eigen(pot, 2), tmp_path / "mu.csv")
    assert (tmp_path / "mu.csv").read_text().splitlines()[0] == "j,mu_j"


def test_bad_csv_header(tmp_path):
    p = tmp_path / "v.csv"
    p.write_text("x,y\n0,0\n")
    with pytest.raises(InvalidInput):
        read_potential_csv(p)
