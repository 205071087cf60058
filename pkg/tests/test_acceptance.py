"""Acceptance criteria, each asserted on the raw measurements at its stated tolerance.

Every test also records a one-line verdict, printed in the terminal summary.
"""
import numpy as np
import pytest

from thintube import acceptance as acc

from conftest import record


def _check(key, passed, text):
    record(key, passed, text)
    print(f"{key} [{'PASS' if passed else 'FAIL'}] {text}")
    return passed


def _tube_verdict(res):
    lines, ok = [], True
    for j, m in res.measured["per_j"].items():
        d = m["abs_diff"]
        jok = (all(a > b for a, b in zip(d, d[1:])) and m["rel_at_min_eps"] <= 0.05
               and m["overlap_at_min_eps"] >= 0.95)
        ok = ok and jok
        lines.append(f"j={j}: rel={m['rel_at_min_eps']:.2e} overlap={m['overlap_at_min_eps']:.4f}")
    return ok, "; ".join(lines)


@pytest.fixture(scope="module")
def c6():
    return acc.broken_line_measurements()


def test_criterion_1_bent_tube_convergence():
    res = acc.criterion_1()
    ok, text = _tube_verdict(res)
    _check("criterion 1", ok and res.seconds <= 600, f"{text} ({res.seconds:.0f}s)")
    for j, m in res.measured["per_j"].items():
        d = np.array(m["abs_diff"])
        assert np.all(np.diff(d) < 0), j
        assert m["rel_at_min_eps"] <= 0.05
        assert m["overlap_at_min_eps"] >= 0.95
    assert res.seconds <= 600


def test_criterion_2_twisted_sector_convergence():
    res = acc.criterion_2()
    ok, text = _tube_verdict(res)
    _check("criterion 2", ok and res.seconds <= 600, f"{text} ({res.seconds:.0f}s)")
    for j, m in res.measured["per_j"].items():
        d = np.array(m["abs_diff"])
        assert np.all(np.diff(d) < 0), j
        assert m["rel_at_min_eps"] <= 0.05
        assert m["overlap_at_min_eps"] >= 0.95
    assert res.seconds <= 600


def test_criterion_3_leak_estimate():
    vals, target, got, exact = acc.leak_values()
    lim = acc.richardson_limit(acc.EPS, vals)
    rel = abs(lim - target) / abs(target)
    flat = abs(got - exact)
    _check("criterion 3", target < 0 and rel <= 0.02 and flat <= 1e-10,
           f"extrapolated {lim:.6f} vs {target:.6f} (rel {rel:.1e}); flat identity error {flat:.1e}")
    assert target < 0
    assert rel <= 0.02
    assert flat <= 1e-10


def test_criterion_4_curvature_coefficient():
    res = acc.criterion_4()
    coef = res.measured["coefficients"]
    worst = max(abs(c + 0.25) / 0.25 for c in coef.values())
    _check("criterion 4", worst <= 0.05 and res.seconds <= 120,
           f"{len(coef)} coefficients, worst relative deviation from -1/4: {worst:.3f} ({res.seconds:.0f}s)")
    for key, c in coef.items():
        assert abs(c + 0.25) <= 0.05 * 0.25, key
    assert res.seconds <= 120


def test_criterion_5_cross_section_oracles():
    res = acc.criterion_5()
    m = res.measured
    ok = max(m["rect_rel"]) <= 0.01 and m["disc_C0"] <= 1e-4 and (1, 2) in m["square_degenerate"] \
        and m["square_refused"]
    _check("criterion 5", ok, f"rectangle rel err {max(m['rect_rel']):.1e}, disc C0 {m['disc_C0']:.1e}, "
                              f"square degenerate {m['square_degenerate']}")
    assert max(m["rect_rel"]) <= 0.01
    assert m["disc_C0"] <= 1e-4
    assert (1, 2) in m["square_degenerate"] and m["square_refused"]


def test_criterion_6a_non_resonant_limit(c6):
    ok = True
    for name in ("square-well v0=1", "curvature bump"):
        m = c6[name]
        d = m["r_plus_1"]
        ok = ok and not m["resonant"] and d[-1] <= 0.1 and all(a > b for a, b in zip(d, d[1:]))
    _check("criterion 6a", ok, "|r+1| at delta=0.1: " + ", ".join(
        f"{n} {c6[n]['r_plus_1'][-1]:.3f}" for n in ("square-well v0=1", "curvature bump")))
    for name in ("square-well v0=1", "curvature bump"):
        m = c6[name]
        assert not m["resonant"]
        d = m["r_plus_1"]
        assert d[0] > d[1] > d[2]
        assert d[2] <= 0.1


def test_criterion_6b_resonant_even_limit(c6):
    m = c6["square-well v0=pi^2"]
    _check("criterion 6b", m["resonant"] and m["t_minus_1"][-1] <= 0.1,
           f"|t-1| at delta=0.1: {m['t_minus_1'][-1]:.3f}, c2 = {m['c2']:.1e}")
    assert m["resonant"]
    assert m["t_minus_1"][-1] <= 0.1


def test_criterion_6c_zero_mean_branch_c1(c6):
    m = c6["zero-mean"]
    ok = m["resonant"] and m["branch"] == "zero" and m["c1_rel_err"] <= 1e-4
    _check("criterion 6c (c1)", ok, f"c1 = {m['c1']:.7f} vs 10x oracle {m['c1_oracle_10x']:.7f} "
                                    f"(rel {m['c1_rel_err']:.1e})")
    assert m["resonant"]
    assert m["branch"] == "zero"
    assert np.isfinite(m["c1"])
    assert m["c1_rel_err"] <= 1e-4


def test_criterion_6c_zero_mean_branch_W_positive(c6):
    m = c6["zero-mean"]
    _check("criterion 6c (W>0)", m["W"] > 0, f"W = {m['W']:.6g}")
    assert m["W"] > 0


def test_criterion_6_runtime():
    import time
    t = time.time()
    acc.broken_line_measurements()
    dt = time.time() - t
    _check("criterion 6 runtime", dt <= 300, f"{dt:.1f}s")
    assert dt <= 300


def test_criterion_7_gamma_laboratory():
    res = acc.criterion_7()
    m = res.measured
    ok = (not m["disagreements"] and m["max_minimizer_residual"] <= 1e-10 and m["min_sup_gap"] >= -1e-10
          and m["max_attained_gap"] <= 1e-10 and res.seconds <= 60)
    _check("criterion 7", ok, f"{m['n_families']} families, {len(m['disagreements'])} disagreements, "
                              f"residual {m['max_minimizer_residual']:.1e} ({res.seconds:.1f}s)")
    assert m["n_families"] == 100
    assert set(m["by_kind"]) == {"perturbation", "penalization", "oscillation"}
    assert not m["disagreements"]
    assert m["max_minimizer_residual"] <= 1e-10
    assert m["min_sup_gap"] >= -1e-10
    assert m["max_attained_gap"] <= 1e-10
    assert res.seconds <= 60


def test_criterion_8_structural_invariants():
    m = acc.structural_invariants()
    ok = (m["frame_defect"] <= 1e-10 and m["det_rel_err"] <= 1e-12 and m["JJt_err"] <= 1e-12
          and m["gauge_dyadic_diff"] == 0.0 and m["unitarity_err"] <= 1e-8 and all(m["scale_covariance"]))
    _check("criterion 8", ok, f"frame {m['frame_defect']:.1e}, det {m['det_rel_err']:.1e}, "
                              f"gauge {m['gauge_dyadic_diff']:.1e}, unitarity {m['unitarity_err']:.1e}")
    assert m["frame_defect"] <= 1e-10
    assert m["det_rel_err"] <= 1e-12
    assert m["JJt_err"] <= 1e-12
    assert m["gauge_dyadic_diff"] == 0.0
    assert m["gauge_generic_rel_diff"] <= 1e-14
    assert m["unitarity_err"] <= 1e-8
    assert all(m["scale_covariance"])
