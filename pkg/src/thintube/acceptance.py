"""Measurements behind the acceptance checks.

Each ``criterion_N`` runs the computation once and returns the measured
numbers together with a pass flag evaluated at the stated tolerance. The
test-suite asserts on the measured numbers; the CLI prints the flags.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import broken_line as bl
from . import geometry as geo
from .cross_section import (Shape, build_mesh, curvature_response, dirichlet_eigenpairs,
                            fit_quadratic_coefficient, twist_coefficient)
from .errors import DegenerateSpectrum
from .gamma_forms import run_lab
from .tube3d import assemble_form, confinement_study, leak_estimate, richardson_limit

RECT = Shape.rectangle(np.pi, np.pi / np.sqrt(2))
EPS = (0.2, 0.1, 0.05)


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    measured: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        return f"criterion {self.number} [{'PASS' if self.passed else 'FAIL'}] {self.title} ({self.seconds:.1f}s)"


def _strictly_decreasing(x) -> bool:
    x = np.asarray(x)
    return bool(np.all(np.diff(x) < 0))


def _study_checks(study, rel_tol=0.05, overlap_min=0.95) -> tuple[bool, dict]:
    eps_min = study.eps_values()[-1]
    per_j = {}
    ok = True
    for j in range(len(study.mu)):
        d = study.diffs(j)
        r = study.row(eps_min, j)
        dec = _strictly_decreasing(d)
        jok = dec and r.rel <= rel_tol and r.overlap >= overlap_min
        ok = ok and jok
        per_j[j] = {"abs_diff": d.tolist(), "rel_at_min_eps": r.rel, "overlap_at_min_eps": r.overlap,
                    "decreasing": dec, "mu": float(study.mu[j])}
    return ok, per_j


def tube_study_bent(h_section: float = np.pi / 32, n_s: int = 100):
    mesh = build_mesh(RECT, h_section)
    curve = geo.bump_curvature(1.5, 5.0, 2.0, 10.0, n_s)
    return confinement_study(curve, mesh, 0, EPS, 3)


def tube_study_twisted(h_section: float = np.pi / 16, n_s: int = 100):
    mesh = build_mesh(RECT, h_section)
    curve = geo.twisted(1.0, 5.0, 2.0, 10.0, n_s)
    return confinement_study(curve, mesh, 1, EPS, 3)


def criterion_1(h_section: float = np.pi / 32) -> CriterionResult:
    t = time.time()
    study = tube_study_bent(h_section)
    ok, per_j = _study_checks(study)
    dt = time.time() - t
    return CriterionResult(1, "bounded-tube convergence, bent tube, n=0", ok and dt <= 600,
                           {"per_j": per_j, "orders": study.orders, "study": study}, dt)


def criterion_2(h_section: float = np.pi / 16) -> CriterionResult:
    t = time.time()
    study = tube_study_twisted(h_section)
    ok, per_j = _study_checks(study)
    dt = time.time() - t
    return CriterionResult(2, "higher-sector convergence, twisted tube, n=1", ok and dt <= 600,
                           {"per_j": per_j, "orders": study.orders, "C_1": study.c_n, "study": study}, dt)


def leak_values(h_section: float = np.pi / 16, n_s: int = 100):
    mesh = build_mesh(RECT, h_section)
    spec = dirichlet_eigenpairs(mesh, 3)
    bent = geo.bump_curvature(1.5, 5.0, 2.0, 10.0, n_s)
    s = bent.s_grid[1:-1]
    w = np.sin(np.pi * (s - bent.s_grid[0]) / bent.length)
    w /= np.sqrt(np.sum(w**2) * bent.h)
    vals = [leak_estimate(assemble_form(bent, mesh, e, 1, spec), w, 0) for e in EPS]
    target = spec.pairs[0].lam - spec.pairs[1].lam
    # straight twisted tube: discrete identity
    flat = geo.twisted(1.0, 5.0, 2.0, 10.0, n_s)
    eps = 0.1
    asm = assemble_form(flat, mesh, eps, 1, spec)
    got = leak_estimate(asm, w, 0)
    wz = np.concatenate([[0.0], w, [0.0]])
    dw = np.diff(wz) / flat.h
    wav = 0.5 * (wz[1:] + wz[:-1])
    a_e = 0.5 * ((flat.tau - flat.alpha_dot)[1:] + (flat.tau - flat.alpha_dot)[:-1])
    c0 = twist_coefficient(mesh, spec.pairs[0]).value
    exact = target + eps**2 * flat.h * (np.sum(dw**2) + c0 * np.sum(a_e**2 * wav**2))
    return vals, target, got, exact


def criterion_3() -> CriterionResult:
    t = time.time()
    vals, target, got, exact = leak_values()
    lim = richardson_limit(EPS, vals)
    rel = abs(lim - target) / abs(target)
    flat_err = abs(got - exact)
    dt = time.time() - t
    return CriterionResult(3, "leak estimate", rel <= 0.02 and flat_err <= 1e-10,
                           {"values": vals, "extrapolated": lim, "target": target, "rel_err": rel,
                            "flat_abs_err": flat_err}, dt)


def curvature_coefficients(h: float = np.pi / 64, xs=(0.02, 0.04, 0.06, 0.08),
                           directions=((1, 0), (0, 1), (1, 1)), modes=(0, 1, 2),
                           complement: str = "minmax") -> dict:
    mesh = build_mesh(RECT, h)
    spec = dirichlet_eigenpairs(mesh, max(modes) + 1)
    out = {}
    for n in modes:
        basis = spec.basis(n)
        for d in directions:
            g = curvature_response(mesh, n, basis, xs, d, complement)
            out[(n, tuple(d))] = fit_quadratic_coefficient(xs, g)
    return out


def criterion_4() -> CriterionResult:
    t = time.time()
    coef = curvature_coefficients()
    worst = max(abs(c + 0.25) / 0.25 for c in coef.values())
    dt = time.time() - t
    return CriterionResult(4, "curvature renormalization coefficient", worst <= 0.05 and dt <= 120,
                           {"coefficients": {f"n={k[0]} dir={k[1]}": v for k, v in coef.items()},
                            "worst_rel": worst}, dt)


def criterion_5() -> CriterionResult:
    t = time.time()
    rect = dirichlet_eigenpairs(build_mesh(RECT, np.pi / 128), 3)
    lam = rect.eigenvalues
    rel = np.abs(lam - np.array([3.0, 6.0, 9.0])) / np.array([3.0, 6.0, 9.0])
    disc_mesh = build_mesh(Shape.disc(1.0), 0.02)
    disc = dirichlet_eigenpairs(disc_mesh, 1)
    c0 = twist_coefficient(disc_mesh, disc.pair(0)).value
    sq = dirichlet_eigenpairs(build_mesh(Shape.rectangle(np.pi, np.pi), np.pi / 32), 3)
    try:
        sq.pair(1)
        refused = False
    except DegenerateSpectrum:
        refused = True
    flagged = (1, 2) in sq.degenerate
    dt = time.time() - t
    ok = bool(np.all(rel <= 0.01)) and c0 <= 1e-4 and flagged and refused
    return CriterionResult(5, "cross-section oracles", ok,
                           {"rect_lambda": lam.tolist(), "rect_rel": rel.tolist(), "disc_C0": c0,
                            "square_degenerate": sq.degenerate, "square_refused": refused}, dt)


def broken_line_measurements(deltas=(0.4, 0.2, 0.1), k: float = 0.1) -> dict:
    out = {}
    wells = {
        "square-well v0=1": bl.LinePotential.square_well(1.0, 1.0, 2000),
        "curvature bump": bl.curvature_bump_potential(2.0, 1.0, 2000),
    }
    for name, V in wells.items():
        res = bl.detect_resonance(V)
        dev = [abs(bl.scattering_1d(bl.scale_potential(V, d).values, k)[0] + 1) for d in deltas]
        out[name] = {"resonant": res.resonant, "exit_slope": res.exit_slope, "r_plus_1": dev}
    V = bl.LinePotential.square_well(np.pi**2, 1.0, 2000)
    res = bl.detect_resonance(V)
    lim = bl.limit_operator(V, res)
    t_dev = [abs(bl.scattering_1d(bl.scale_potential(V, d).values, k)[1] - 1) for d in deltas]
    out["square-well v0=pi^2"] = {"resonant": res.resonant, "c1": lim.c1, "c2": lim.c2, "t_minus_1": t_dev}
    z = bl.zero_mean_resonant_potential()
    res = bl.detect_resonance(z.V)
    vc = bl.vertex_coefficients(z.V, res)
    V10 = z.V.subdivide(10)
    vc10 = bl.vertex_coefficients(V10, bl.detect_resonance(V10))
    out["zero-mean"] = {"resonant": res.resonant, "branch": bl.mean_potential(z.V).branch,
                        "mean": z.mean, "q": z.q, "c1": vc.c1, "c2": vc.c2, "W": vc.W,
                        "c1_oracle_10x": vc10.c1, "c1_rel_err": abs(vc.c1 - vc10.c1) / abs(vc10.c1),
                        "c1_asymptotic": -(res.left + res.right) / 2}
    return out


def criterion_6() -> CriterionResult:
    t = time.time()
    m = broken_line_measurements()
    ok_a = all(not m[n]["resonant"] and m[n]["r_plus_1"][-1] <= 0.1 and _strictly_decreasing(m[n]["r_plus_1"])
               for n in ("square-well v0=1", "curvature bump"))
    r = m["square-well v0=pi^2"]
    ok_b = r["resonant"] and r["t_minus_1"][-1] <= 0.1
    z = m["zero-mean"]
    ok_c = z["resonant"] and z["branch"] == "zero" and z["W"] > 0 and z["c1_rel_err"] <= 1e-4
    dt = time.time() - t
    m["parts"] = {"a": ok_a, "b": ok_b, "c": ok_c}
    return CriterionResult(6, "broken-line limits", ok_a and ok_b and ok_c and dt <= 300, m, dt)


def criterion_7(seed: int = 0) -> CriterionResult:
    t = time.time()
    s = run_lab(100, seed, 50)
    dt = time.time() - t
    ok = (not s.disagreements and s.max_minimizer_residual <= 1e-10 and s.min_sup_gap >= -1e-10
          and s.max_attained_gap <= 1e-10 and dt <= 60)
    return CriterionResult(7, "Gamma laboratory", ok, s.to_dict(), dt)


def structural_invariants(seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    out = {}
    # frames
    circ = geo.circular_arc(1.0, np.pi, int(round(np.pi / 1e-3)))
    hel = geo.helix(1.0, 1.0, 2 * np.pi, 6284)
    out["frame_defect"] = max(geo.build_frame(circ).orthonormality_defect(),
                              geo.build_frame(hel).orthonormality_defect())
    # metric
    curve = geo.twisted(1.3, 5.0, 2.0, 10.0, 200, kappa_amplitude=0.8)
    det_err = jj_err = 0.0
    for _ in range(50):
        s = rng.uniform(0, 10)
        y = rng.uniform(-1, 1, 2)
        eps = rng.uniform(0.01, 0.3)
        for conv in ("frenet", "flipped"):
            m = geo.metric_at(curve, eps, s, y, conv)
            ref = eps**4 * m.beta**2
            det_err = max(det_err, abs(np.linalg.det(m.G) - ref) / ref)
            if conv == "frenet":
                jj_err = max(jj_err, np.abs(m.J @ m.J.T - m.G).max())
    out["det_rel_err"] = det_err
    out["JJt_err"] = jj_err
    # gauge: only tau - alpha_dot enters the assembly
    mesh = build_mesh(RECT, np.pi / 8)
    spec = dirichlet_eigenpairs(mesh, 2)
    raw = geo.twisted(1.0, 5.0, 2.0, 10.0, 40, kappa_amplitude=0.5)
    # dyadic samples make tau + g exact, so the twist is reproduced bit for bit
    q = 2.0**-20
    base = geo.CurveSpec(raw.s_grid, raw.kappa, np.round(raw.tau / q) * q, raw.alpha,
                         np.round(raw.alpha_dot / q) * q)
    g = 0.375 * np.cos(base.s_grid)
    g_dyadic = np.round(g * 2**10) / 2**10
    A0 = assemble_form(base, mesh, 0.1, 0, spec).stiffness
    diffs = []
    for gg in (g_dyadic, g):
        shifted = geo.CurveSpec(base.s_grid, base.kappa, base.tau + gg, base.alpha, base.alpha_dot + gg)
        A1 = assemble_form(shifted, mesh, 0.1, 0, spec).stiffness
        diffs.append(float(abs(A1 - A0).max() / abs(A0).max()))
    out["gauge_dyadic_diff"], out["gauge_generic_rel_diff"] = diffs
    # scattering unitarity
    worst = 0.0
    pots = [bl.LinePotential.square_well(1.0), bl.LinePotential.square_well(-5.0),
            bl.curvature_bump_potential(2.0, 1.0, 500),
            bl.LinePotential(np.linspace(-1, 1, 301), rng.normal(0, 10, 300))]
    for V in pots:
        for k in (0.01, 0.1, 1.0, 5.0):
            r, tt = bl.scattering_1d(V, k)
            worst = max(worst, abs(abs(r)**2 + abs(tt)**2 - 1))
    out["unitarity_err"] = worst
    # scale covariance of resonance detection
    cov = []
    for V in (bl.LinePotential.square_well(np.pi**2, 1.0, 400), bl.LinePotential.square_well(1.0, 1.0, 400),
              bl.zero_mean_resonant_potential(n_cells=1000).V):
        r0 = bl.detect_resonance(V).resonant
        cov.append(all(bl.detect_resonance(V.scaled(d)).resonant == r0 for d in (0.5, 0.25)))
    out["scale_covariance"] = cov
    return out


def criterion_8() -> CriterionResult:
    t = time.time()
    m = structural_invariants()
    ok = (m["frame_defect"] <= 1e-10 and m["det_rel_err"] <= 1e-12 and m["JJt_err"] <= 1e-12
          and m["gauge_dyadic_diff"] == 0.0 and m["gauge_generic_rel_diff"] <= 1e-14
          and m["unitarity_err"] <= 1e-8 and all(m["scale_covariance"]))
    return CriterionResult(8, "structural invariants", ok, m, time.time() - t)


CRITERIA = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4,
            5: criterion_5, 6: criterion_6, 7: criterion_7, 8: criterion_8}
