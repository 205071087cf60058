"""Effective one-dimensional operators ``-d^2/ds^2 + V_n`` and their spectra.

``V_n(s) = (tau - alpha_dot)^2 C_n - kappa^2 / 4``. Spectra are computed on a
finite interval with Dirichlet ends using the 3-point second difference and a
dense tridiagonal eigensolve.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .cross_section import TwistCoefficient
from .errors import Inconclusive, InvalidInput, ResolutionError
from .geometry import CurveSpec

# a mode needs roughly 8 grid points per wavelength to count as resolved
RESOLVED_KH = np.pi / 4
# twist values above this are flagged as "large" (no domain question is modeled)
TWIST_FLAG = 1e3


@dataclass(frozen=True)
class EffectivePotential:
    s_grid: np.ndarray
    values: np.ndarray
    c_n: TwistCoefficient | None = None
    mode: int = 0
    kappa: np.ndarray | None = None
    flags: tuple = field(default=(), compare=False)

    def __post_init__(self):
        s = np.asarray(self.s_grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if s.ndim != 1 or v.shape != s.shape:
            raise InvalidInput("s_grid and values must be 1D arrays of equal length")
        if s.size < 3 or np.any(np.diff(s) <= 0):
            raise InvalidInput("s_grid must be strictly increasing with at least 3 nodes")
        if not np.all(np.isfinite(v)):
            raise InvalidInput("potential has non-finite samples")
        object.__setattr__(self, "s_grid", s)
        object.__setattr__(self, "values", v)

    @property
    def h(self) -> float:
        return float(self.s_grid[1] - self.s_grid[0])

    def shifted(self, c: float) -> "EffectivePotential":
        return EffectivePotential(self.s_grid, self.values + c, self.c_n, self.mode, self.kappa, self.flags)

    def integral(self) -> float:
        return float(np.trapezoid(self.values, self.s_grid))


def effective_potential(curve: CurveSpec, cn: TwistCoefficient) -> EffectivePotential:
    a = curve.tau - curve.alpha_dot
    values = a**2 * cn.value - 0.25 * curve.kappa**2
    flags = ("large-twist",) if np.max(np.abs(a), initial=0.0) > TWIST_FLAG else ()
    return EffectivePotential(curve.s_grid, values, cn, cn.n, curve.kappa.copy(), flags)


def potential_from_function(f, s_grid, mode: int = 0) -> EffectivePotential:
    s = np.asarray(s_grid, dtype=float)
    return EffectivePotential(s, np.asarray(f(s), dtype=float) * np.ones_like(s), None, mode)


@dataclass(frozen=True)
class Spectrum1D:
    """Dirichlet eigenpairs on ``interval``.

    ``w[:, j]`` holds eigenfunction j at the interior nodes ``s``, normalized
    so that ``sum(w**2) * h = 1``.
    """
    eigenvalues: np.ndarray
    w: np.ndarray
    s: np.ndarray
    interval: tuple
    bc: str = "dirichlet"

    @property
    def h(self) -> float:
        return float(self.s[1] - self.s[0])

    def orthonormality_defect(self) -> float:
        G = self.w.T @ self.w * self.h
        return float(np.max(np.abs(G - np.eye(G.shape[0]))))


def _tridiagonal(values: np.ndarray, h: float):
    d = 2.0 / h**2 + values
    e = np.full(values.size - 1, -1.0 / h**2)
    return d, e


def _check_uniform(s: np.ndarray) -> float:
    h = s[1] - s[0]
    if np.max(np.abs(np.diff(s) - h)) > 1e-9 * h:
        raise InvalidInput("effective potential grid must be uniform")
    return float(h)


def schrodinger_eigen(pot: EffectivePotential, j_max: int, interval=None) -> Spectrum1D:
    """Lowest ``j_max`` eigenpairs of ``-d^2/ds^2 + V`` with Dirichlet ends.

    The ends of ``pot.s_grid`` (or of ``interval``, sampled with the same
    spacing and V extended by zero) are the Dirichlet nodes.
    """
    if j_max < 1:
        raise InvalidInput("j_max must be >= 1")
    if interval is not None:
        pot = restrict(pot, *interval)
    h = _check_uniform(pot.s_grid)
    V = pot.values[1:-1]
    if j_max > V.size:
        raise ResolutionError(f"only {V.size} interior nodes, asked for {j_max} modes")
    d, e = _tridiagonal(V, h)
    mu, w = eigh_tridiagonal(d, e, select="i", select_range=(0, j_max - 1))
    kh = np.sqrt(np.maximum(mu[-1] - V.min(), 0.0)) * h
    if kh > RESOLVED_KH:
        raise ResolutionError(f"mode {j_max - 1} under-resolved: k*h = {kh:.3g} > {RESOLVED_KH:.3g}")
    w = w / np.sqrt(h)
    for j in range(w.shape[1]):
        k = int(np.argmax(np.abs(w[:, j])))
        if w[k, j] < 0:
            w[:, j] = -w[:, j]
    s0, s1 = pot.s_grid[0], pot.s_grid[-1]
    return Spectrum1D(mu, w, pot.s_grid[1:-1].copy(), (float(s0), float(s1)))


def residual(pot: EffectivePotential, spec: Spectrum1D) -> float:
    """Max relative residual of the discrete eigen-equations."""
    h = spec.h
    d, e = _tridiagonal(pot.values[1:-1], h)
    out = 0.0
    for j, mu in enumerate(spec.eigenvalues):
        w = spec.w[:, j]
        r = d * w - mu * w
        r[1:] += e * w[:-1]
        r[:-1] += e * w[1:]
        scale = max(abs(mu), 2.0 / h**2 * 1e-6)
        out = max(out, float(np.linalg.norm(r) / (np.linalg.norm(w) * scale)))
    return out


def restrict(pot: EffectivePotential, a: float, b: float) -> EffectivePotential:
    """Resample V on ``[a, b]`` with the same spacing; zero outside the data."""
    h = pot.h
    n = int(round((b - a) / h))
    if n < 2:
        raise InvalidInput(f"interval ({a}, {b}) shorter than two grid steps")
    s = a + h * np.arange(n + 1)
    v = np.interp(s, pot.s_grid, pot.values, left=0.0, right=0.0)
    return EffectivePotential(s, v, pot.c_n, pot.mode, None, pot.flags)


@dataclass(frozen=True)
class BoundStateReport:
    exists: bool
    lowest: float
    lowest_2r: float
    halfwidth: float


def bound_state_exists(pot: EffectivePotential, domain_halfwidth: float,
                       tol: float = 1e-8) -> BoundStateReport:
    """Is the lowest eigenvalue negative on (c-R, c+R) and on (c-2R, c+2R)?

    ``c`` is the midpoint of the potential's grid. V is extended by zero, so
    the potential should vanish near the ends of its grid.
    """
    R = float(domain_halfwidth)
    if R <= 0:
        raise InvalidInput("domain_halfwidth must be positive")
    edge = max(abs(pot.values[0]), abs(pot.values[-1]))
    if edge > 1e-8 * max(np.max(np.abs(pot.values)), 1e-300):
        raise InvalidInput("potential does not vanish at the ends of its grid")
    c = 0.5 * (pot.s_grid[0] + pot.s_grid[-1])
    mu1 = schrodinger_eigen(restrict(pot, c - R, c + R), 1).eigenvalues[0]
    mu2 = schrodinger_eigen(restrict(pot, c - 2 * R, c + 2 * R), 1).eigenvalues[0]
    b1, b2 = mu1 < -tol, mu2 < -tol
    if b1 != b2:
        raise Inconclusive(f"lowest eigenvalue {mu1:.6g} on R={R:g} vs {mu2:.6g} on 2R")
    return BoundStateReport(bool(b1), float(mu1), float(mu2), R)


# -- CSV -------------------------------------------------------------------

def write_potential_csv(pot: EffectivePotential, path: str | Path) -> None:
    data = np.column_stack([pot.s_grid, pot.values])
    np.savetxt(path, data, fmt="%.17g", delimiter=",", header="s,V", comments="")


def read_potential_csv(path: str | Path, mode: int = 0) -> EffectivePotential:
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip().replace(" ", "") != "s,V":
        raise InvalidInput(f"{path}: expected header 's,V'")
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except ValueError as exc:
        raise InvalidInput(f"{path}: {exc}") from None
    return EffectivePotential(data[:, 0], data[:, 1], None, mode)


def write_spectrum_csv(spec: Spectrum1D, path: str | Path) -> None:
    j = np.arange(spec.eigenvalues.size)
    with open(path, "w") as fh:
        fh.write("j,mu_j\n")
        for jj, mu in zip(j, spec.eigenvalues):
            fh.write(f"{jj},{mu:.17g}\n")
