"""Short-range limit of the effective operator: resonance, vertex couplings, scattering.

Potentials are piecewise constant on cells (``LinePotential``). On each cell
``-psi'' + V psi = k^2 psi`` is solved exactly by a 2x2 transfer matrix, so
shooting and scattering carry no discretization error beyond the
piecewise-constant model itself.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from ._linalg import abs_kernel_apply
from .effective_operator import EffectivePotential
from .errors import ContractViolation, DegenerateFreeLine, InvalidInput
from .geometry import smooth_bump

SLOPE_TOL = 1e-6
MEAN_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class LinePotential:
    """``V = values[i]`` on ``(edges[i], edges[i+1])``, zero outside."""
    edges: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if e.ndim != 1 or v.shape != (e.size - 1,) or v.size < 1:
            raise InvalidInput("need len(edges) == len(values) + 1 >= 2")
        if np.any(np.diff(e) <= 0):
            raise InvalidInput("cell edges must be strictly increasing")
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(e))):
            raise InvalidInput("potential has non-finite entries")
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, f, a: float, b: float, n_cells: int) -> "LinePotential":
        edges = np.linspace(a, b, n_cells + 1)
        return cls(edges, np.asarray(f(0.5 * (edges[:-1] + edges[1:])), dtype=float))

    @classmethod
    def from_effective(cls, pot: EffectivePotential) -> "LinePotential":
        """Cells between the nodes, each carrying the mean of its end values."""
        return cls(pot.s_grid, 0.5 * (pot.values[:-1] + pot.values[1:]))

    @classmethod
    def square_well(cls, v0: float, half_width: float = 1.0, n_cells: int = 200) -> "LinePotential":
        return cls(np.linspace(-half_width, half_width, n_cells + 1), np.full(n_cells, -float(v0)))

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def mids(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def width(self) -> float:
        return float(self.edges[-1] - self.edges[0])

    def integral(self) -> float:
        return float(np.sum(self.values * self.widths))

    def l1(self) -> float:
        return float(np.sum(np.abs(self.values) * self.widths))

    def is_zero(self) -> bool:
        return not np.any(self.values)

    def subdivide(self, m: int) -> "LinePotential":
        """Same potential, each cell split into ``m`` equal cells."""
        t = np.arange(m) / m
        left, w = self.edges[:-1], self.widths
        inner = (left[:, None] + w[:, None] * t[None, :]).ravel()
        return LinePotential(np.append(inner, self.edges[-1]), np.repeat(self.values, m))

    def scaled(self, delta: float) -> "LinePotential":
        return LinePotential(self.edges * delta, self.values / delta**2)

    def negated(self) -> "LinePotential":
        return LinePotential(self.edges, -self.values)


def _cell_transfer(k2, v, h):
    """Transfer matrices mapping (psi, psi') across cells of width h, shape (N, 2, 2)."""
    m2 = (k2 - np.asarray(v)).astype(complex)
    m = np.sqrt(m2)
    mh = m * h
    c = np.cos(mh)
    s_over_m = h * np.sinc(mh / np.pi)
    T = np.empty((len(v), 2, 2), dtype=complex)
    T[:, 0, 0] = c
    T[:, 0, 1] = s_over_m
    T[:, 1, 0] = -m2 * s_over_m
    T[:, 1, 1] = c
    return T


def shoot(V: LinePotential, k2: float = 0.0, start=(1.0, 0.0)) -> np.ndarray:
    """(psi, psi') at every cell edge, starting from ``start`` at the left edge."""
    T = _cell_transfer(k2, V.values, V.widths)
    out = np.empty((V.edges.size, 2), dtype=complex)
    out[0] = start
    for i in range(T.shape[0]):
        out[i + 1] = T[i] @ out[i]
    return out


def _midpoint_values(V: LinePotential, states: np.ndarray) -> np.ndarray:
    """psi at cell midpoints by exact half-cell propagation."""
    T = _cell_transfer(0.0, V.values, V.widths / 2)
    return np.einsum("nij,nj->ni", T, states[:-1])[:, 0].real


@dataclass(frozen=True, eq=False)
class ResonanceState:
    resonant: bool
    exit_slope: float        # psi'(right) with psi = 1, psi' = 0 on the left
    slope_tol: float
    s: np.ndarray            # cell edges
    psi_edges: np.ndarray    # normalized: sup|psi| = 1 on the edges, left value > 0
    psi_mid: np.ndarray      # same gauge, at cell midpoints
    scale: float             # factor applied to the raw shot (psi_left = 1)

    @property
    def left(self) -> float:
        return float(self.psi_edges[0])

    @property
    def right(self) -> float:
        return float(self.psi_edges[-1])

    @property
    def psi_r(self) -> np.ndarray:
        return self.psi_edges


def detect_resonance(V: LinePotential, slope_tol: float = SLOPE_TOL) -> ResonanceState:
    """Zero-energy shooting: resonant iff the exit slope is flat.

    The threshold is ``slope_tol * sup|psi| / width``; inputs closer to
    resonance than that are classified resonant, others are not.
    """
    st = shoot(V, 0.0)
    psi = st[:, 0].real
    slope = float(st[-1, 1].real)
    sup = float(np.max(np.abs(psi)))
    tol = slope_tol * sup / V.width
    resonant = abs(slope) <= tol
    scale = 1.0 / sup
    mid = _midpoint_values(V, st) * scale
    return ResonanceState(bool(resonant), slope, tol, V.edges.copy(), psi * scale, mid, scale)


@dataclass(frozen=True)
class MeanReport:
    value: float
    branch: str  # "zero" or "nonzero"


def mean_potential(V: LinePotential, mean_tol: float = MEAN_TOL) -> MeanReport:
    val = V.integral()
    l1 = V.l1()
    branch = "zero" if abs(val) <= mean_tol * l1 else "nonzero"
    return MeanReport(val, branch)


@dataclass(frozen=True)
class VertexCondition:
    kind: str  # "dirichlet", "scaled-coupling" or "free"
    c1: float = float("nan")
    c2: float = float("nan")
    W: float | None = None
    branch: str | None = None

    def __post_init__(self):
        if self.kind not in ("dirichlet", "scaled-coupling", "free"):
            raise InvalidInput(f"unknown vertex kind {self.kind!r}")
        if self.kind == "scaled-coupling" and self.c1 == 0 and self.c2 == 0:
            raise ContractViolation("c1 and c2 vanish simultaneously")

    @property
    def theta(self) -> float:
        """Jump ratio psi(0+)/psi(0-)."""
        return (self.c1 - self.c2) / (self.c1 + self.c2)


# kernel |s-y| averaged over a cell against itself, per unit cell width squared
def _self_term(w):
    return w / 3.0


def _kernel(V: LinePotential, g: np.ndarray) -> np.ndarray:
    """``int |s - y| g(y) dy`` at cell midpoints for cellwise-constant ``g``."""
    w = V.widths
    return abs_kernel_apply(V.mids, g * w, _self_term(w))


def vertex_coefficients(V: LinePotential, res: ResonanceState, mean_tol: float = MEAN_TOL) -> VertexCondition:
    if V.is_zero():
        raise DegenerateFreeLine("V vanishes identically; c1 and c2 are 0/0")
    if not res.resonant:
        raise ContractViolation("vertex coefficients need a zero-energy resonance")
    w = V.widths
    psi = res.psi_mid
    vpsi = V.values * psi
    c2 = -0.5 * float(np.sum(V.mids * vpsi * w))
    mean = mean_potential(V, mean_tol)
    if mean.branch == "nonzero":
        inner = _kernel(V, vpsi)
        c1 = float(np.sum(V.values * inner * w)) / (2.0 * mean.value)
        W = None
    else:
        inner = _kernel(V, vpsi)
        outer = _kernel(V, V.values * inner)
        triple = float(np.sum(V.values * outer * w))
        W = float(np.sum(V.values * _kernel(V, V.values) * w))
        c1 = triple / (2.0 * W)
    return VertexCondition("scaled-coupling", c1, c2, W, mean.branch)


def limit_operator(V: LinePotential, res: ResonanceState | None = None) -> VertexCondition:
    if V.is_zero():
        return VertexCondition("free", 0.0, 0.0)
    res = detect_resonance(V) if res is None else res
    if not res.resonant:
        return VertexCondition("dirichlet")
    return vertex_coefficients(V, res)


# -- scattering ---------------------------------------------------------------

def scattering_1d(V: LinePotential, k: float):
    """(r, t) for a wave ``e^{iks}`` incident from the left, phases referred to s = 0."""
    if not k > 0:
        raise InvalidInput("k must be positive")
    T = np.eye(2, dtype=complex)
    for Ti in _cell_transfer(k * k, V.values, V.widths):
        T = Ti @ T
    a, b = V.edges[0], V.edges[-1]
    # unit outgoing wave on the right, propagated back to the left edge
    right = np.array([np.exp(1j * k * b), 1j * k * np.exp(1j * k * b)])
    psi, dpsi = np.linalg.solve(T, right)
    inc = 0.5 * (psi + dpsi / (1j * k)) * np.exp(-1j * k * a)
    ref = 0.5 * (psi - dpsi / (1j * k)) * np.exp(1j * k * a)
    t = 1.0 / inc
    return complex(ref * t), complex(t)


def vertex_scattering(vc: VertexCondition, k: float | None = None):
    """(r, t) of the point interaction at the origin (k-independent)."""
    if vc.kind == "free":
        return 0j, 1 + 0j
    if vc.kind == "dirichlet":
        return -1 + 0j, 0j
    th = vc.theta
    return complex((1 - th**2) / (1 + th**2)), complex(2 * th / (1 + th**2))


# -- scaling ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ScaledPotential:
    delta: float
    base: LinePotential
    values: LinePotential
    kappa_s: np.ndarray | None = None
    kappa: np.ndarray | None = None

    def bend_angle(self) -> float:
        if self.kappa is None:
            raise InvalidInput("no curvature attached to this potential")
        return float(np.trapezoid(self.kappa, self.kappa_s))


def _as_line(base) -> tuple[LinePotential, np.ndarray | None, np.ndarray | None]:
    if isinstance(base, LinePotential):
        return base, None, None
    if isinstance(base, EffectivePotential):
        return LinePotential.from_effective(base), base.s_grid, base.kappa
    raise InvalidInput(f"cannot scale a {type(base).__name__}")


def scale_potential(base, delta: float) -> ScaledPotential:
    """``V_delta(s) = V(s / delta) / delta^2`` (and ``kappa_delta = kappa(s/delta)/delta``)."""
    if not delta > 0:
        raise InvalidInput("delta must be positive")
    line, s, kappa = _as_line(base)
    nz = np.flatnonzero(line.values)
    if nz.size and (line.edges[nz[0]] < -1.0 or line.edges[nz[-1] + 1] > 1.0):
        raise InvalidInput("base potential must be supported in [-1, 1]")
    ks = kk = None
    if kappa is not None:
        ks, kk = s * delta, kappa / delta
    return ScaledPotential(float(delta), line, line.scaled(delta), ks, kk)


# -- constructions ------------------------------------------------------------

def curvature_bump_potential(amplitude: float, halfwidth: float = 1.0, n_cells: int = 400,
                             c_n: float = 0.0, twist_amplitude: float = 0.0,
                             twist_halfwidth: float = 1.0) -> LinePotential:
    """Cells of ``a^2 C_n - kappa^2 / 4`` with bump-shaped kappa and twist on (-1, 1)."""
    def f(s):
        k = amplitude * smooth_bump(s / halfwidth)
        a = twist_amplitude * smooth_bump(s / twist_halfwidth)
        return a**2 * c_n - 0.25 * k**2
    return LinePotential.from_function(f, -1.0, 1.0, n_cells)


@dataclass(frozen=True, eq=False)
class ZeroMeanResonance:
    V: LinePotential
    q: float              # curvature amplitude squared
    twist_amplitude: float
    mean: float


def zero_mean_resonant_potential(c_n: float = 1.5, kappa_halfwidth: float = 0.4,
                                 twist_halfwidth: float = 0.9, kappa_center: float = 0.3, n_cells: int = 4000,
                                 q_max: float = 1e4) -> ZeroMeanResonance:
    """Twist plus curvature with ``int a^2 C_n = int kappa^2 / 4`` tuned to a zero-energy resonance.

    ``kappa = sqrt(q) bump((s - c)/wk)``, ``a = T bump(s/wt)``; T follows from
    the zero-mean condition and q is located by bracketing the exit slope.
    An off-centre curvature bump avoids the symmetric case, where the first
    resonance is odd and c1 vanishes.
    """
    edges = np.linspace(-1.0, 1.0, n_cells + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])
    g = 0.25 * smooth_bump((mids - kappa_center) / kappa_halfwidth) ** 2
    f = c_n * smooth_bump(mids / twist_halfwidth) ** 2
    shape = f * (g.sum() / f.sum()) - g   # zero mean on the cells

    def slope(q):
        return shoot(LinePotential(edges, q * shape), 0.0)[-1, 1].real

    qs = np.geomspace(0.5, q_max, 400)
    sl = np.array([slope(q) for q in qs])
    flips = np.flatnonzero(np.sign(sl[:-1]) != np.sign(sl[1:]))
    if flips.size == 0:
        raise InvalidInput("no zero-energy resonance found below q_max")
    i = flips[0]
    q = brentq(slope, qs[i], qs[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    V = LinePotential(edges, q * shape)
    T = np.sqrt(q * g.sum() / f.sum())
    return ZeroMeanResonance(V, float(q), float(T), V.integral())


# -- delta study ----------------------------------------------------------------

@dataclass
class DeltaRow:
    delta: float
    k: float
    r: complex
    t: complex
    target_r: complex
    target_t: complex

    @property
    def deviation(self) -> float:
        return float(max(abs(self.r - self.target_r), abs(self.t - self.target_t)))


@dataclass
class DeltaStudy:
    limit: VertexCondition
    resonance: ResonanceState
    mean: MeanReport
    rows: list = field(default_factory=list)

    def max_deviation(self) -> dict:
        out = {}
        for r in self.rows:
            out[r.delta] = max(out.get(r.delta, 0.0), r.deviation)
        return out

    def fitted_rate(self) -> float:
        d = self.max_deviation()
        x = np.array(sorted(d))
        y = np.array([d[v] for v in x])
        ok = y > 0
        if ok.sum() < 2:
            return float("nan")
        return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])

    def classification(self) -> dict:
        return {
            "resonant": self.resonance.resonant,
            "mean_branch": self.mean.branch,
            "c1": None if self.limit.kind != "scaled-coupling" else self.limit.c1,
            "c2": None if self.limit.kind != "scaled-coupling" else self.limit.c2,
            "kind": self.limit.kind,
            "exit_slope": self.resonance.exit_slope,
            "W": self.limit.W,
        }


def delta_convergence_study(base, delta_list, k_list) -> DeltaStudy:
    line, _, _ = _as_line(base)
    res = detect_resonance(line)
    mean = mean_potential(line)
    limit = limit_operator(line, res)
    study = DeltaStudy(limit, res, mean)
    r0, t0 = vertex_scattering(limit)
    for delta in delta_list:
        Vd = scale_potential(line, delta).values
        for k in k_list:
            r, t = scattering_1d(Vd, k)
            study.rows.append(DeltaRow(float(delta), float(k), r, t, r0, t0))
    return study


def write_delta_csv(study: DeltaStudy, path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write("delta,k,re_r,im_r,re_t,im_t,target_r,target_t,deviation\n")
        for r in study.rows:
            fh.write(",".join(f"{x:.17g}" for x in (
                r.delta, r.k, r.r.real, r.r.imag, r.t.real, r.t.imag,
                r.target_r.real, r.target_t.real, r.deviation)) + "\n")


def write_classification_json(study: DeltaStudy, path: str | Path) -> None:
    Path(path).write_text(json.dumps(study.classification(), indent=2, sort_keys=True) + "\n")
