"""Discrete quadratic form of the squeezed tube Laplacian and its spectra.

Unknowns live on the tensor grid (interior s-nodes) x (cross-section nodes);
the s-ends and the cross-section boundary are Dirichlet. For a nodal vector
``psi`` the stiffness matrix gives

    psi.A.psi = sum_edges h_s sum_q W_q / beta |(d_s - a d_theta) psi|^2
              + sum_nodes h_s dA / eps^2 [ w |grad_y psi|^2 - lambda_n beta psi^2 ]

with ``a = tau - alpha_dot`` and ``beta = 1 - eps kappa (y1 cos alpha + y2 sin alpha)``.
The longitudinal part is a weighted sum of squares (so it is positive
semidefinite); the transverse part is the weighted cross-section pencil of
each slab. The mass matrix is ``diag(beta h_s dA)``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from ._linalg import lowest_eigenpairs
from .cross_section import (CrossSectionMesh, SpectralResult, dirichlet_eigenpairs,
                            rotation_quadrature, twist_coefficient, weighted_stiffness)
from .effective_operator import Spectrum1D, effective_potential, schrodinger_eigen
from .errors import InvalidInput, MustProject, NumericalFailure
from .geometry import CurveSpec, validate_tube


@dataclass(frozen=True, eq=False)
class TubeFormAssembly:
    stiffness: sp.csr_matrix
    mass: sp.dia_matrix
    eps: float
    n: int
    curve: CurveSpec
    mesh: CrossSectionMesh
    spectrum: SpectralResult
    lam_n: float

    @property
    def n_s(self) -> int:
        """Number of interior s-nodes."""
        return self.curve.s_grid.size - 2

    @property
    def s_nodes(self) -> np.ndarray:
        return self.curve.s_grid[1:-1]

    @property
    def h_s(self) -> float:
        return self.curve.h

    @property
    def shape(self) -> tuple:
        return (self.n_s, self.mesh.n_nodes)

    def plain_norm2(self, psi: np.ndarray) -> float:
        """Unweighted discrete L2 norm squared on the tube."""
        return float(np.sum(psi**2) * self.h_s * self.mesh.dA)

    def form(self, psi: np.ndarray, phi: np.ndarray | None = None) -> float:
        phi = psi if phi is None else phi
        return float(psi @ (self.stiffness @ phi))

    def tensor(self, w: np.ndarray, u: np.ndarray) -> np.ndarray:
        return np.kron(np.asarray(w, dtype=float), np.asarray(u, dtype=float))


@dataclass(frozen=True, eq=False)
class SectorProjector:
    """Removes the components along ``u_0..u_{n-1}`` slab by slab."""
    n: int
    basis: np.ndarray  # (n, P), orthonormal with weight dA
    dA: float

    @classmethod
    def from_spectrum(cls, spectrum: SpectralResult, mesh: CrossSectionMesh, n: int):
        if n < 1:
            raise InvalidInput("sector projection needs n >= 1")
        basis = np.array([p.u for p in spectrum.basis(n)])
        return cls(n, basis, mesh.dA)

    def apply(self, psi: np.ndarray, n_s: int) -> np.ndarray:
        X = np.asarray(psi, dtype=float).reshape(n_s, -1)
        coef = X @ self.basis.T * self.dA
        return (X - coef @ self.basis).ravel()

    def constraints(self, n_s: int) -> sp.csr_matrix:
        """Rows ``e_j (x) u_k`` for every interior s-node j and k < n."""
        return sp.kron(sp.identity(n_s), sp.csr_matrix(self.basis)).tocsr()


def _edge_average(v: np.ndarray) -> np.ndarray:
    return 0.5 * (v[:-1] + v[1:])


def _difference_ops(n_nodes: int):
    """Edge difference and edge average maps from interior s-nodes.

    Both have one row per s-edge (n_nodes - 1 of them) and one column per
    interior node (n_nodes - 2); the end nodes are zero.
    """
    n_edges, n_int = n_nodes - 1, n_nodes - 2
    e = np.arange(n_edges)
    rows = np.concatenate([e[:-1], e[1:]])
    cols = np.concatenate([e[:-1], e[1:] - 1])
    diff = sp.coo_matrix((np.concatenate([-np.ones(n_edges - 1), np.ones(n_edges - 1)]), (rows, cols)),
                         shape=(n_edges, n_int)).tocsr()
    avg = sp.coo_matrix((np.full(2 * (n_edges - 1), 0.5), (rows, cols)), shape=(n_edges, n_int)).tocsr()
    return diff, avg


def _y_moment_stiffness(mesh: CrossSectionMesh):
    K0 = weighted_stiffness(mesh)
    K1 = weighted_stiffness(mesh, lambda y1, y2: y1)
    K2 = weighted_stiffness(mesh, lambda y1, y2: y2)
    return K0, K1, K2


def assemble_form(curve: CurveSpec, mesh: CrossSectionMesh, eps: float, n: int,
                  spectrum: SpectralResult | None = None) -> TubeFormAssembly:
    if not eps > 0:
        raise InvalidInput("eps must be positive")
    if curve.s_grid.size < 3:
        raise InvalidInput("curve needs at least one interior s-node")
    check = validate_tube(curve, eps, mesh.radius)
    if not check.ok:
        raise InvalidInput(f"tube map degenerate: min beta = {check.min_beta:.3g} at s = {check.s_at_min:.6g}")
    if spectrum is None:
        spectrum = dirichlet_eigenpairs(mesh, n + 1)
    lam_n = spectrum.pair(n).lam  # raises on a degenerate lambda_n

    hs, dA = curve.h, mesh.dA
    ns = curve.s_grid.size - 2
    a = curve.tau - curve.alpha_dot
    kc = eps * curve.kappa * np.cos(curve.alpha)
    ks = eps * curve.kappa * np.sin(curve.alpha)

    # longitudinal part on s-edges
    D, W, E, pts = rotation_quadrature(mesh)
    diff, avg = _difference_ops(curve.s_grid.size)
    a_e = _edge_average(a)
    G = (sp.kron(diff, E) / hs - sp.kron(sp.diags(a_e) @ avg, D)).tocsr()
    beta_e = 1.0 - np.outer(_edge_average(kc), pts[:, 0]) - np.outer(_edge_average(ks), pts[:, 1])
    wt = (hs * W[None, :] / beta_e).ravel()
    A = G.T @ sp.diags(wt) @ G

    # transverse part, slab by slab; the weight is affine in y
    K0, K1, K2 = _y_moment_stiffness(mesh)
    xi1, xi2 = kc[1:-1], ks[1:-1]
    y1, y2 = mesh.nodes[:, 0], mesh.nodes[:, 1]
    c = hs * dA / eps**2
    A = A + c * (sp.kron(sp.identity(ns), K0) - sp.kron(sp.diags(xi1), K1) - sp.kron(sp.diags(xi2), K2))
    beta_n = 1.0 - np.outer(xi1, y1) - np.outer(xi2, y2)
    A = A - c * lam_n * sp.diags(beta_n.ravel())
    A = ((A + A.T) * 0.5).tocsr()
    mass = sp.diags(hs * dA * beta_n.ravel())
    return TubeFormAssembly(A, mass, float(eps), int(n), curve, mesh, spectrum, float(lam_n))


def _sigma(asm: TubeFormAssembly) -> float:
    kmax = float(np.max(np.abs(asm.curve.kappa), initial=0.0))
    return -0.5 * kmax**2 - 1.0


def tube_eigenpairs(asm: TubeFormAssembly, j_max: int, sector: SectorProjector | None = None):
    """Lowest ``j_max`` eigenpairs of the (deflated) pencil; vectors M-normalized."""
    if j_max < 1:
        raise InvalidInput("j_max must be >= 1")
    if asm.n >= 1 and sector is None:
        raise MustProject(f"n = {asm.n}: the shifted pencil is indefinite, pass a SectorProjector")
    C = None
    if sector is not None:
        if sector.n != asm.n:
            raise InvalidInput(f"projector removes {sector.n} modes, assembly has n = {asm.n}")
        C = sector.constraints(asm.n_s)
    return lowest_eigenpairs(asm.stiffness, asm.mass, j_max, _sigma(asm), C=C)


def tube_eigenvalues(asm: TubeFormAssembly, j_max: int, sector: SectorProjector | None = None) -> np.ndarray:
    return tube_eigenpairs(asm, j_max, sector)[0]


def leak_estimate(asm: TubeFormAssembly, w: np.ndarray, j: int) -> float:
    """``eps^2 b(w u_j)`` for ``w`` on the interior s-nodes (unit discrete norm)."""
    w = np.asarray(w, dtype=float)
    if w.shape != (asm.n_s,):
        raise InvalidInput(f"w must have {asm.n_s} entries (interior s-nodes)")
    u = asm.spectrum.pairs[j].u
    psi = asm.tensor(w, u)
    return asm.eps**2 * asm.form(psi)


def richardson_limit(eps_values, values) -> float:
    """Value at eps = 0 of the interpolating polynomial through the samples."""
    x = np.asarray(eps_values, dtype=float)
    y = np.asarray(values, dtype=float)
    V = np.vander(x, len(x))
    coef = np.linalg.solve(V, y)
    return float(coef[-1])


def lower_bound_margin(asm: TubeFormAssembly, vectors) -> float:
    """min over vectors of ``b(psi) + c |psi|_eps^2 - sup(kappa^2)/2 |psi|^2`` with ``c = sup kappa^2``,
    relative to ``|psi|^2``. Non-negative means the bound holds on the sample."""
    k2 = float(np.max(asm.curve.kappa**2, initial=0.0))
    out = np.inf
    for psi in vectors:
        nrm = asm.plain_norm2(psi)
        val = asm.form(psi) + k2 * float(psi @ (asm.mass @ psi)) - 0.5 * k2 * nrm
        out = min(out, val / nrm)
    return float(out)


# -- convergence study ----------------------------------------------------

@dataclass
class StudyRow:
    eps: float
    j: int
    eig_tube: float
    mu_eff: float
    diff: float
    overlap: float

    @property
    def rel(self) -> float:
        return abs(self.diff) / max(abs(self.mu_eff), 1e-300)


@dataclass
class ConfinementStudy:
    n: int
    rows: list
    mu: np.ndarray
    c_n: float
    orders: dict = field(default_factory=dict)

    def diffs(self, j: int) -> np.ndarray:
        return np.array([abs(r.diff) for r in self.rows if r.j == j])

    def eps_values(self) -> np.ndarray:
        return np.array(sorted({r.eps for r in self.rows}, reverse=True))

    def row(self, eps: float, j: int) -> StudyRow:
        for r in self.rows:
            if r.j == j and r.eps == eps:
                return r
        raise KeyError((eps, j))

    def summary(self) -> dict:
        return {
            "n": self.n,
            "C_n": self.c_n,
            "mu_eff": [float(m) for m in self.mu],
            "eps": [float(e) for e in self.eps_values()],
            "fitted_order": {str(k): v for k, v in self.orders.items()},
            "max_rel_diff_at_smallest_eps": float(max(r.rel for r in self.rows
                                                      if r.eps == self.eps_values()[-1])),
            "min_overlap_at_smallest_eps": float(min(r.overlap for r in self.rows
                                                     if r.eps == self.eps_values()[-1])),
        }


def _fitted_order(eps, d) -> float:
    eps, d = np.asarray(eps, dtype=float), np.asarray(d, dtype=float)
    ok = d > 0
    if ok.sum() < 2:
        return float("nan")
    slope, _ = np.polyfit(np.log(eps[ok]), np.log(d[ok]), 1)
    return float(slope)


def confinement_study(curve: CurveSpec, mesh: CrossSectionMesh, n: int, eps_list, j_max: int,
                      spectrum: SpectralResult | None = None) -> ConfinementStudy:
    """Tube eigenvalues versus the effective 1D eigenvalues for each eps."""
    eps_list = sorted((float(e) for e in eps_list), reverse=True)
    if not eps_list:
        raise InvalidInput("eps_list is empty")
    if spectrum is None:
        spectrum = dirichlet_eigenpairs(mesh, n + 1)
    pair = spectrum.pair(n)
    cn = twist_coefficient(mesh, pair)
    eff: Spectrum1D = schrodinger_eigen(effective_potential(curve, cn), j_max)
    sector = SectorProjector.from_spectrum(spectrum, mesh, n) if n >= 1 else None

    rows = []
    for eps in eps_list:
        asm = assemble_form(curve, mesh, eps, n, spectrum)
        lam, vec = tube_eigenpairs(asm, j_max, sector)
        for j in range(j_max):
            psi = vec[:, j]
            target = asm.tensor(eff.w[:, j], pair.u)
            ov = abs(float(psi @ target)) * asm.h_s * mesh.dA / np.sqrt(asm.plain_norm2(psi))
            mu = float(eff.eigenvalues[j])
            rows.append(StudyRow(eps, j, float(lam[j]), mu, float(lam[j] - mu), ov))
        if not np.all(np.isfinite(lam)):
            raise NumericalFailure(f"non-finite tube eigenvalues at eps = {eps}")
    study = ConfinementStudy(n, rows, eff.eigenvalues.copy(), cn.value)
    for j in range(j_max):
        study.orders[j] = _fitted_order(eps_list, study.diffs(j))
    return study


def write_study_csv(study: ConfinementStudy, path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write("eps,j,eig_tube,mu_eff,diff,overlap\n")
        for r in study.rows:
            fh.write(f"{r.eps:.17g},{r.j},{r.eig_tube:.17g},{r.mu_eff:.17g},{r.diff:.17g},{r.overlap:.17g}\n")


def write_study_json(study: ConfinementStudy, path: str | Path) -> None:
    Path(path).write_text(json.dumps(study.summary(), indent=2, sort_keys=True) + "\n")
