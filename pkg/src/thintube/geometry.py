"""Reference curve, Frenet frame, tube metric.

A tube is fixed by the curvature ``kappa(s)``, the torsion ``tau(s)`` and the
rotation angle ``alpha(s)`` of the cross section relative to the Frenet frame.
All samples live on a uniform arc-length grid.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import InvalidInput

UNIFORM_RTOL = 1e-12
BETA_MARGIN = 1e-6


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class CurveSpec:
    """Sampled curve data on a uniform arc-length grid.

    If ``alpha_dot`` is omitted it is derived from ``alpha`` by central
    differences (second-order one-sided at the ends).
    """

    s_grid: np.ndarray
    kappa: np.ndarray
    tau: np.ndarray
    alpha: np.ndarray
    alpha_dot: np.ndarray
    alpha_dot_derived: bool = field(default=False, compare=False)

    def __post_init__(self):
        s = np.asarray(self.s_grid, dtype=float)
        if s.ndim != 1 or s.size < 3:
            raise InvalidInput("s_grid needs at least 3 samples")
        ds = np.diff(s)
        if not np.all(np.isfinite(s)) or np.any(ds <= 0):
            raise InvalidInput("s_grid must be finite and strictly increasing")
        h = (s[-1] - s[0]) / (s.size - 1)
        # relative 1e-12, floored at the rounding level of the node values
        allowed = max(UNIFORM_RTOL * h, 8 * np.finfo(float).eps * np.max(np.abs(s)))
        if np.max(np.abs(ds - h)) > allowed:
            raise InvalidInput("s_grid is not uniform")
        for name in ("kappa", "tau", "alpha", "alpha_dot"):
            a = np.asarray(getattr(self, name), dtype=float)
            if a.shape != s.shape:
                raise InvalidInput(f"{name} has shape {a.shape}, expected {s.shape}")
            if not np.all(np.isfinite(a)):
                raise InvalidInput(f"{name} contains non-finite values")
            object.__setattr__(self, name, _frozen(a))
        object.__setattr__(self, "s_grid", _frozen(s))

    @classmethod
    def from_samples(cls, s, kappa, tau=None, alpha=None, alpha_dot=None) -> "CurveSpec":
        s = np.asarray(s, dtype=float)
        zeros = np.zeros_like(s)
        kappa = zeros if kappa is None else kappa
        tau = zeros if tau is None else tau
        alpha = zeros if alpha is None else np.asarray(alpha, dtype=float)
        derived = alpha_dot is None
        if derived:
            if s.size < 3:
                raise InvalidInput("s_grid needs at least 3 samples")
            alpha_dot = np.gradient(alpha, s[1] - s[0], edge_order=2)
        return cls(s, kappa, tau, alpha, alpha_dot, alpha_dot_derived=derived)

    @property
    def h(self) -> float:
        return float(self.s_grid[1] - self.s_grid[0])

    @property
    def length(self) -> float:
        return float(self.s_grid[-1] - self.s_grid[0])

    @property
    def twist(self) -> np.ndarray:
        """tau - alpha_dot, the only combination of the two entering the tube."""
        return self.tau - self.alpha_dot

    def at(self, s: float) -> tuple[float, float, float, float]:
        """Linear interpolation of (kappa, tau, alpha, alpha_dot) at ``s``."""
        if s < self.s_grid[0] - 1e-12 or s > self.s_grid[-1] + 1e-12:
            raise InvalidInput(f"s={s} outside [{self.s_grid[0]}, {self.s_grid[-1]}]")
        return tuple(float(np.interp(s, self.s_grid, a))
                     for a in (self.kappa, self.tau, self.alpha, self.alpha_dot))

    def bend_angle(self) -> float:
        return float(np.trapezoid(self.kappa, self.s_grid))


@dataclass(frozen=True)
class FrameField:
    """Frenet triads (rows of shape (n, 3)) plus the rotated normals."""

    s_grid: np.ndarray
    T: np.ndarray
    N: np.ndarray
    B: np.ndarray
    N_alpha: np.ndarray
    B_alpha: np.ndarray

    def orthonormality_defect(self) -> float:
        T, N, B = self.T, self.N, self.B
        dots = [np.abs(np.einsum("ij,ij->i", a, b)) for a, b in ((T, N), (T, B), (N, B))]
        norms = [np.abs(np.linalg.norm(a, axis=1) - 1.0) for a in (T, N, B)]
        cross = np.linalg.norm(np.cross(T, N) - B, axis=1)
        return float(max(np.max(d) for d in dots + norms + [cross]))


def _frenet_rhs(k: float, t: float, X: np.ndarray) -> np.ndarray:
    A = np.array([[0.0, k, 0.0], [-k, 0.0, t], [0.0, -t, 0.0]])
    return A @ X


def _reorthonormalize(X: np.ndarray) -> np.ndarray:
    T = X[0] / np.linalg.norm(X[0])
    N = X[1] - (X[1] @ T) * T
    N /= np.linalg.norm(N)
    return np.vstack([T, N, np.cross(T, N)])


def build_frame(curve: CurveSpec) -> FrameField:
    """Integrate the Serret-Frenet system with classical RK4.

    The initial triad is the canonical basis. Half-step curvature and torsion
    come from a cubic spline through the samples so the scheme keeps its
    fourth order for smooth data.
    """
    s = curve.s_grid
    h = curve.h
    if s.size >= 4:
        mid = s[:-1] + 0.5 * h
        k_mid = CubicSpline(s, curve.kappa)(mid)
        t_mid = CubicSpline(s, curve.tau)(mid)
    else:
        k_mid = 0.5 * (curve.kappa[1:] + curve.kappa[:-1])
        t_mid = 0.5 * (curve.tau[1:] + curve.tau[:-1])

    X = np.eye(3)
    frames = np.empty((s.size, 3, 3))
    frames[0] = X
    for i in range(s.size - 1):
        k0, k1, km = curve.kappa[i], curve.kappa[i + 1], k_mid[i]
        t0, t1, tm = curve.tau[i], curve.tau[i + 1], t_mid[i]
        a = _frenet_rhs(k0, t0, X)
        b = _frenet_rhs(km, tm, X + 0.5 * h * a)
        c = _frenet_rhs(km, tm, X + 0.5 * h * b)
        d = _frenet_rhs(k1, t1, X + h * c)
        X = _reorthonormalize(X + (h / 6.0) * (a + 2 * b + 2 * c + d))
        frames[i + 1] = X

    T, N, B = frames[:, 0], frames[:, 1], frames[:, 2]
    ca, sa = np.cos(curve.alpha)[:, None], np.sin(curve.alpha)[:, None]
    return FrameField(s.copy(), T, N, B, ca * N - sa * B, sa * N + ca * B)


def beta_weight(curve: CurveSpec, eps: float, s: float, y) -> float:
    k, _, a, _ = curve.at(s)
    y1, y2 = y
    return 1.0 - eps * k * (y1 * np.cos(a) + y2 * np.sin(a))


def beta_on_grid(kappa, alpha, eps: float, y1, y2) -> np.ndarray:
    """beta_eps for arrays: kappa/alpha broadcast against y1/y2."""
    return 1.0 - eps * kappa * (y1 * np.cos(alpha) + y2 * np.sin(alpha))


@dataclass(frozen=True)
class MetricSample:
    beta: float
    rho: float
    sigma: float
    G: np.ndarray
    det_G: float
    J: np.ndarray


def jacobian(eps: float, beta: float, twist: float, alpha: float, y, convention: str = "frenet"):
    """Rows e1, e2, e3 of the tube map differential in the (T, N, B) frame.

    ``convention="flipped"`` uses ``-eps * N_alpha`` as second row; the
    off-diagonal ``rho`` entry of G then changes sign, the determinant does not.
    """
    y1, y2 = y
    ca, sa = np.cos(alpha), np.sin(alpha)
    e1 = [beta, eps * twist * (y1 * sa - y2 * ca), eps * twist * (y2 * sa + y1 * ca)]
    e2 = [0.0, eps * ca, -eps * sa]
    if convention == "flipped":
        e2 = [0.0, -eps * ca, eps * sa]
    elif convention != "frenet":
        raise InvalidInput(f"unknown convention {convention!r}")
    e3 = [0.0, eps * sa, eps * ca]
    return np.array([e1, e2, e3])


def metric_at(curve: CurveSpec, eps: float, s: float, y, convention: str = "frenet") -> MetricSample:
    k, t, a, ad = curve.at(s)
    y1, y2 = y
    tw = t - ad
    beta = 1.0 - eps * k * (y1 * np.cos(a) + y2 * np.sin(a))
    rho = -eps**2 * y2 * tw
    sigma = eps**2 * y1 * tw
    if convention == "flipped":
        rho = -rho
    G = np.array([
        [beta**2 + (rho**2 + sigma**2) / eps**2 if eps else beta**2, rho, sigma],
        [rho, eps**2, 0.0],
        [sigma, 0.0, eps**2],
    ])
    J = jacobian(eps, beta, tw, a, y, convention)
    return MetricSample(beta, rho, sigma, G, eps**4 * beta**2, J)


@dataclass(frozen=True)
class TubeCheck:
    ok: bool
    min_beta: float
    s_at_min: float

    def __bool__(self):
        return self.ok


def validate_tube(curve: CurveSpec, eps: float, section_radius: float,
                  margin: float = BETA_MARGIN) -> TubeCheck:
    """Worst case of beta over the grid, using |y| <= section_radius."""
    worst = 1.0 - eps * np.abs(curve.kappa) * section_radius
    i = int(np.argmin(worst))
    mb = float(worst[i])
    return TubeCheck(mb >= margin, mb, float(curve.s_grid[i]))


# -- presets ---------------------------------------------------------------

def _grid(length: float, n: int, start: float = 0.0) -> np.ndarray:
    return start + length * np.arange(n + 1) / n


def smooth_bump(x) -> np.ndarray:
    """C-infinity bump supported in (-1, 1), peak value 1 at 0."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - x[inside] ** 2))
    return out


def straight(length: float = 10.0, n: int = 200, start: float = 0.0) -> CurveSpec:
    s = _grid(length, n, start)
    return CurveSpec.from_samples(s, None, alpha_dot=np.zeros_like(s))


def circular_arc(radius: float = 1.0, length: float = np.pi, n: int = 1000) -> CurveSpec:
    s = _grid(length, n)
    return CurveSpec.from_samples(s, np.full_like(s, 1.0 / radius), alpha_dot=np.zeros_like(s))


def helix(kappa: float = 1.0, tau: float = 1.0, length: float = 2 * np.pi, n: int = 1000) -> CurveSpec:
    s = _grid(length, n)
    return CurveSpec.from_samples(s, np.full_like(s, kappa), np.full_like(s, tau),
                                  alpha_dot=np.zeros_like(s))


def bump_curvature(amplitude: float = 1.0, center: float = 5.0, halfwidth: float = 2.0,
                   length: float = 10.0, n: int = 200, start: float = 0.0) -> CurveSpec:
    """Planar curve (tau = alpha = 0) with a smooth compactly supported curvature bump."""
    s = _grid(length, n, start)
    k = amplitude * smooth_bump((s - center) / halfwidth)
    return CurveSpec.from_samples(s, k, alpha_dot=np.zeros_like(s))


def twisted(amplitude: float = 1.0, center: float = 5.0, halfwidth: float = 2.0,
            length: float = 10.0, n: int = 200, start: float = 0.0,
            kappa_amplitude: float = 0.0, kappa_halfwidth: float | None = None) -> CurveSpec:
    """Cross section rotating with speed ``alpha_dot = amplitude * bump``.

    Optional curvature bump at the same center (planar, tau = 0).
    """
    from scipy.integrate import cumulative_trapezoid

    s = _grid(length, n, start)
    ad = amplitude * smooth_bump((s - center) / halfwidth)
    alpha = cumulative_trapezoid(ad, s, initial=0.0)
    kw = halfwidth if kappa_halfwidth is None else kappa_halfwidth
    k = kappa_amplitude * smooth_bump((s - center) / kw)
    return CurveSpec.from_samples(s, k, None, alpha, ad)


def read_curve(path: str | Path) -> CurveSpec:
    """Read a whitespace table with header ``s kappa tau alpha [alpha_dot]``."""
    lines = []
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append(line)
    if not lines:
        raise InvalidInput(f"{path}: empty curve file")
    header = lines[0].split()
    required = ["s", "kappa", "tau", "alpha"]
    if header[:4] != required or len(header) > 5 or (len(header) == 5 and header[4] != "alpha_dot"):
        raise InvalidInput(f"{path}: header must be 's kappa tau alpha [alpha_dot]', got {header}")
    try:
        data = np.array([[float(x) for x in ln.split()] for ln in lines[1:]])
    except ValueError as exc:
        raise InvalidInput(f"{path}: {exc}") from None
    if data.ndim != 2 or data.shape[1] != len(header):
        raise InvalidInput(f"{path}: expected {len(header)} columns")
    cols = dict(zip(header, data.T))
    return CurveSpec.from_samples(cols["s"], cols["kappa"], cols["tau"], cols["alpha"],
                                  cols.get("alpha_dot"))


def write_curve(curve: CurveSpec, path: str | Path) -> None:
    data = np.column_stack([curve.s_grid, curve.kappa, curve.tau, curve.alpha, curve.alpha_dot])
    np.savetxt(path, data, fmt="%.17g", header="s kappa tau alpha alpha_dot", comments="")
