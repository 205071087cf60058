"""Dirichlet Laplacian on the bounded cross section S.

Uniform grid, 5-point stencil, boundary nodes eliminated. Rectangles are
grid-aligned (spacing adjusted per axis so the boundary falls on grid lines);
discs keep the nodes strictly inside and cut the boundary edges at the circle;
bitmap masks use the plain staircase.

Conventions: ``u`` holds nodal values of interior nodes, normalized so that
``sum(u**2) * dA == 1``. The twist coefficient uses the rotation generator
``d/dtheta = -y2 d/dy1 + y1 d/dy2``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from ._linalg import lowest_eigenpairs
from .errors import DegenerateSpectrum, InvalidInput, WeightNonPositive

SIMPLICITY_TOL = 1e-6


@dataclass(frozen=True)
class Shape:
    kind: str  # rectangle | disc | mask
    a: float = 0.0
    b: float = 0.0
    bitmap: np.ndarray | None = field(default=None, compare=False, repr=False)

    @classmethod
    def rectangle(cls, a: float, b: float) -> "Shape":
        return cls("rectangle", float(a), float(b))

    @classmethod
    def disc(cls, r: float) -> "Shape":
        return cls("disc", float(r))

    @classmethod
    def mask(cls, bitmap) -> "Shape":
        bm = np.asarray(bitmap, dtype=bool)
        if bm.ndim != 2:
            raise InvalidInput("mask bitmap must be 2D")
        return cls("mask", bitmap=bm)

    @classmethod
    def parse(cls, text: str, base_dir: str | Path = ".") -> "Shape":
        """Parse ``rectangle a b | disc r | mask path``; numbers may use ``pi``."""
        parts = text.split()
        if not parts:
            raise InvalidInput("empty section spec")
        kind, args = parts[0], parts[1:]
        try:
            if kind == "rectangle" and len(args) == 2:
                return cls.rectangle(*map(_number, args))
            if kind == "disc" and len(args) == 1:
                return cls.disc(_number(args[0]))
            if kind == "mask" and len(args) == 1:
                return cls.mask(read_mask(Path(base_dir) / args[0]))
        except (ValueError, OSError) as exc:
            raise InvalidInput(f"bad section spec {text!r}: {exc}") from None
        raise InvalidInput(f"bad section spec {text!r}")

    @property
    def radius(self) -> float:
        """sup |y| over S."""
        if self.kind == "rectangle":
            return float(np.hypot(self.a, self.b) / 2)
        if self.kind == "disc":
            return self.a
        raise InvalidInput("radius of a mask depends on the grid; use mesh.radius")


def _number(tok: str) -> float:
    import math

    allowed = {"pi": math.pi, "sqrt": math.sqrt}
    tok = tok.strip()
    if not all(c in "0123456789.+-*/()eEpisqrt_ " for c in tok):
        raise ValueError(f"not a number: {tok!r}")
    return float(eval(tok, {"__builtins__": {}}, allowed))  # restricted arithmetic only


def read_mask(path: str | Path) -> np.ndarray:
    rows = []
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip().replace(" ", "")
        if not line:
            continue
        if set(line) - {"0", "1"}:
            raise InvalidInput(f"{path}: mask rows must contain only 0/1")
        rows.append([c == "1" for c in line])
    if not rows or len({len(r) for r in rows}) != 1:
        raise InvalidInput(f"{path}: mask must be a non-empty rectangular 0/1 table")
    # text rows run along y2 downward; store as [i1, i2]
    return np.array(rows, dtype=bool)[::-1].T


@dataclass(frozen=True, eq=False)
class CrossSectionMesh:
    shape: Shape
    hx: float
    hy: float
    x: np.ndarray          # y1 coordinates of the full grid (boundary included)
    y: np.ndarray          # y2 coordinates
    inside: np.ndarray     # bool [len(x), len(y)]
    index_map: np.ndarray  # int, -1 where not an unknown
    nodes: np.ndarray      # (P, 2)

    @property
    def shape_tag(self) -> str:
        return self.shape.kind

    @property
    def h(self) -> float:
        return max(self.hx, self.hy)

    @property
    def dA(self) -> float:
        return self.hx * self.hy

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def radius(self) -> float:
        if self.shape.kind in ("rectangle", "disc"):
            return self.shape.radius
        # mask: farthest node plus half a cell diagonal
        return float(np.max(np.hypot(*self.nodes.T)) + 0.5 * np.hypot(self.hx, self.hy))


def build_mesh(shape: Shape, h: float) -> CrossSectionMesh:
    if not h > 0:
        raise InvalidInput("h must be positive")
    if shape.kind == "rectangle":
        if shape.a <= 0 or shape.b <= 0:
            raise InvalidInput("rectangle sides must be positive")
        nx, ny = max(1, round(shape.a / h)), max(1, round(shape.b / h))
        hx, hy = shape.a / nx, shape.b / ny
        x = -shape.a / 2 + hx * np.arange(nx + 1)
        y = -shape.b / 2 + hy * np.arange(ny + 1)
        inside = np.zeros((nx + 1, ny + 1), dtype=bool)
        inside[1:-1, 1:-1] = True
    elif shape.kind == "disc":
        if shape.a <= 0:
            raise InvalidInput("disc radius must be positive")
        m = int(np.ceil(shape.a / h)) + 1
        hx = hy = h
        x = y = h * np.arange(-m, m + 1)
        X, Y = np.meshgrid(x, y, indexing="ij")
        inside = np.hypot(X, Y) < shape.a * (1 - 1e-12)
    elif shape.kind == "mask":
        bm = shape.bitmap
        hx = hy = h
        inside = np.pad(bm, 1)
        x = h * (np.arange(inside.shape[0]) - (inside.shape[0] - 1) / 2)
        y = h * (np.arange(inside.shape[1]) - (inside.shape[1] - 1) / 2)
    else:
        raise InvalidInput(f"unknown shape {shape.kind!r}")

    if not inside.any():
        raise InvalidInput("cross section has no interior grid node")
    index_map = -np.ones(inside.shape, dtype=int)
    index_map[inside] = np.arange(int(inside.sum()))
    I, J = np.nonzero(inside)
    nodes = np.column_stack([x[I], y[J]])
    return CrossSectionMesh(shape, float(hx), float(hy), x, y, inside, index_map, nodes)


# -- discrete operators -------------------------------------------------------

CUT_FLOOR = 1e-3


def _cut_fraction(mesh: CrossSectionMesh, p: np.ndarray, axis: int, sign) -> np.ndarray:
    """Distance from node ``p`` to the boundary along ``sign * e_axis``, in grid steps.

    Only discs carry sub-grid boundary positions; other shapes return 1.
    """
    out = np.ones(len(p))
    if mesh.shape.kind != "disc" or len(p) == 0:
        return out
    hh = mesh.hx if axis == 0 else mesh.hy
    y = mesh.nodes[p]
    e = np.zeros((len(p), 2))
    e[:, axis] = sign
    b = 2 * np.einsum("ij,ij->i", y, e)
    c = np.einsum("ij,ij->i", y, y) - mesh.shape.a**2
    t = (-b + np.sqrt(np.maximum(b * b - 4 * c, 0.0))) / 2
    return np.clip(t / hh, CUT_FLOOR, 1.0)


def _edges(mesh: CrossSectionMesh):
    """Grid edges touching at least one unknown: (p, q, h, midpoint, frac) per axis.

    ``q == -1`` marks a Dirichlet neighbour; ``frac`` is the fraction of the
    edge inside S (1 except for cut edges of a disc).
    """
    idx = mesh.index_map
    out = []
    for axis, hh in ((0, mesh.hx), (1, mesh.hy)):
        a = idx[:-1, :] if axis == 0 else idx[:, :-1]
        b = idx[1:, :] if axis == 0 else idx[:, 1:]
        keep = (a >= 0) | (b >= 0)
        p, q = a[keep], b[keep]
        # put the unknown first
        swap = p < 0
        p, q = np.where(swap, q, p), np.where(swap, p, q)
        I, J = np.nonzero(keep)
        if axis == 0:
            mid = np.column_stack([mesh.x[I] + hh / 2, mesh.y[J]])
        else:
            mid = np.column_stack([mesh.x[I], mesh.y[J] + hh / 2])
        frac = np.ones(len(p))
        ext = q < 0
        # direction from the unknown towards the Dirichlet neighbour
        direction = np.where(swap[ext], -1.0, 1.0)
        for sgn in (-1.0, 1.0):
            sel = np.flatnonzero(ext)[direction == sgn]
            frac[sel] = _cut_fraction(mesh, p[sel], axis, sgn)
        # weight of a cut edge is sampled halfway between node and boundary
        shift = np.zeros_like(mid)
        shift[ext, axis] = (frac[ext] - 1.0) * hh / 2 * direction
        out.append((p, q, hh, mid + shift, frac))
    return out


def weighted_stiffness(mesh: CrossSectionMesh, weight=None) -> sp.csr_matrix:
    """Matrix K with ``u.K.u = sum_edges w(mid) (du)^2 / h_e^2``.

    Dirichlet edges of a disc are cut at the circle (symmetric cut-cell
    stencil): the edge contributes ``w u_p^2 / (frac h^2)``.

    ``weight`` is a callable of (y1, y2) arrays; ``None`` means 1.
    Multiply by ``mesh.dA`` to get the quadrature of ``int w |grad u|^2``.
    """
    n = mesh.n_nodes
    rows, cols, vals = [], [], []
    diag = np.zeros(n)
    for p, q, hh, mid, frac in _edges(mesh):
        w = np.ones(len(p)) if weight is None else weight(mid[:, 0], mid[:, 1])
        c = w / (hh**2 * frac)
        np.add.at(diag, p, c)
        both = q >= 0
        np.add.at(diag, q[both], c[both])
        rows += [p[both], q[both]]
        cols += [q[both], p[both]]
        vals += [-c[both], -c[both]]
    rows.append(np.arange(n))
    cols.append(np.arange(n))
    vals.append(diag)
    K = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n))
    return K.tocsr()


def laplacian(mesh: CrossSectionMesh) -> sp.csr_matrix:
    return weighted_stiffness(mesh)


def rotation_derivative(mesh: CrossSectionMesh):
    """Discrete ``d/dtheta`` and its quadrature weights.

    Returns ``(D, w)`` with ``D`` of shape (Q, P): rows for interior nodes
    (central differences, Dirichlet ghosts; on rectangles and masks the ghost
    is zero and this block is exactly skew-symmetric) followed, for rectangles, by rows for the non-corner
    boundary nodes (second-order one-sided normal derivative, half weight).
    ``sum(w * (D u)**2)`` is the trapezoid-rule value of ``int |d_theta u|^2``.
    """
    idx = mesh.index_map
    n = mesh.n_nodes
    rows, cols, vals = [], [], []

    I, J = np.nonzero(mesh.inside)
    p = idx[I, J]
    y1, y2 = mesh.x[I], mesh.y[J]
    nx, ny = idx.shape
    for (di, dj), coef in (((1, 0), -y2 / (2 * mesh.hx)), ((-1, 0), y2 / (2 * mesh.hx)),
                           ((0, 1), y1 / (2 * mesh.hy)), ((0, -1), -y1 / (2 * mesh.hy))):
        Ii, Jj = I + di, J + dj
        ok = (Ii >= 0) & (Ii < nx) & (Jj >= 0) & (Jj < ny)
        q = np.full(len(I), -1)
        q[ok] = idx[Ii[ok], Jj[ok]]
        good = q >= 0
        rows.append(p[good])
        cols.append(q[good])
        vals.append(coef[good])
        # ghost value by linear extrapolation to the boundary; zero unless cut
        axis, sgn = (0, di) if di else (1, dj)
        frac = _cut_fraction(mesh, p[~good], axis, sgn)
        ghost = 1.0 - 1.0 / frac
        nz = ghost != 0.0
        rows.append(p[~good][nz])
        cols.append(p[~good][nz])
        vals.append((coef[~good] * ghost)[nz])
    weights = [np.full(n, mesh.dA)]
    n_rows = n

    if mesh.shape.kind == "rectangle" and nx > 2 and ny > 2:
        brow = []
        # sides y1 = -a/2 (i=0, inward +1) and y1 = +a/2 (i=nx-1, inward -1)
        for i0, step in ((0, 1), (nx - 1, -1)):
            j = np.arange(1, ny - 1)
            y2b = mesh.y[j]
            d1 = idx[i0 + step, j]
            d2 = idx[i0 + 2 * step, j]
            # one-sided derivative along +y1: sign(step) * (4 u1 - u2) / (2h)
            r = n_rows + np.arange(len(j))
            for q, c in ((d1, 4.0), (d2, -1.0)):
                good = q >= 0
                rows.append(r[good])
                cols.append(q[good])
                vals.append((-y2b * step * c / (2 * mesh.hx))[good])
            brow.append(len(j))
            n_rows += len(j)
        for j0, step in ((0, 1), (ny - 1, -1)):
            i = np.arange(1, nx - 1)
            y1b = mesh.x[i]
            d1 = idx[i, j0 + step]
            d2 = idx[i, j0 + 2 * step]
            r = n_rows + np.arange(len(i))
            for q, c in ((d1, 4.0), (d2, -1.0)):
                good = q >= 0
                rows.append(r[good])
                cols.append(q[good])
                vals.append((y1b * step * c / (2 * mesh.hy))[good])
            brow.append(len(i))
            n_rows += len(i)
        weights.append(np.full(sum(brow), mesh.dA / 2))

    D = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n_rows, n)).tocsr()
    return D, np.concatenate(weights)


def rotation_quadrature(mesh: CrossSectionMesh):
    """``(D, w, E, points)``: the rows of :func:`rotation_derivative` plus the
    value operator ``E`` (nodal value at each quadrature point, zero on the
    boundary) and the quadrature point coordinates.
    """
    D, w = rotation_derivative(mesh)
    n, Q = mesh.n_nodes, D.shape[0]
    E = sp.eye(Q, n, format="csr")
    pts = [mesh.nodes]
    if Q > n:
        nx, ny = mesh.inside.shape
        j = np.arange(1, ny - 1)
        i = np.arange(1, nx - 1)
        for i0 in (0, nx - 1):
            pts.append(np.column_stack([np.full(len(j), mesh.x[i0]), mesh.y[j]]))
        for j0 in (0, ny - 1):
            pts.append(np.column_stack([mesh.x[i], np.full(len(i), mesh.y[j0])]))
    pts = np.vstack(pts)
    assert pts.shape[0] == Q
    return D, w, E, pts


# -- eigenpairs --------------------------------------------------------------

@dataclass(frozen=True)
class EigenPair:
    lam: float
    u: np.ndarray
    index: int = 0

    def residual(self, mesh: CrossSectionMesh) -> float:
        L = laplacian(mesh)
        return float(np.linalg.norm(L @ self.u - self.lam * self.u) / np.linalg.norm(self.u))


@dataclass(frozen=True)
class SpectralResult:
    pairs: list
    degenerate: list  # (k, k+1) index pairs with relative gap below tolerance
    gaps: np.ndarray

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([p.lam for p in self.pairs])

    def is_simple(self, n: int) -> bool:
        return not any(n in pair for pair in self.degenerate)

    def pair(self, n: int) -> EigenPair:
        """Eigenpair ``n`` for downstream use; refuses flagged degeneracies."""
        if not self.is_simple(n):
            raise DegenerateSpectrum(
                f"lambda_{n} = {self.pairs[n].lam:.12g} is not simple (flagged pairs {self.degenerate})")
        return self.pairs[n]

    def basis(self, n: int) -> list:
        """u_0 .. u_{n-1}, each checked for simplicity."""
        return [self.pair(k) for k in range(n)]


def _fix_sign(u: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(u)))
    return -u if u[k] < 0 else u


def dirichlet_eigenpairs(mesh: CrossSectionMesh, n_modes: int,
                         simplicity_tol: float = SIMPLICITY_TOL) -> SpectralResult:
    """Lowest ``n_modes`` eigenpairs of the 5-point Dirichlet Laplacian.

    One extra mode is computed so the simplicity of the last requested
    eigenvalue is known.
    """
    if n_modes < 1:
        raise InvalidInput("n_modes must be >= 1")
    L = laplacian(mesh)
    n = mesh.n_nodes
    k = min(n_modes + 1, n)
    if n_modes > n:
        raise InvalidInput(f"mesh has only {n} unknowns")
    w, v = lowest_eigenpairs(L, sp.identity(n, format="csr"), k, sigma=0.0)
    pairs = []
    for i in range(n_modes):
        u = v[:, i] / np.sqrt(np.sum(v[:, i] ** 2) * mesh.dA)
        pairs.append(EigenPair(float(w[i]), _fix_sign(u), i))
    gaps = np.diff(w) / w[:-1]
    degenerate = [(i, i + 1) for i, g in enumerate(gaps) if g < simplicity_tol]
    return SpectralResult(pairs, degenerate, gaps)


@dataclass(frozen=True)
class TwistCoefficient:
    n: int
    value: float


def twist_coefficient(mesh: CrossSectionMesh, pair: EigenPair) -> TwistCoefficient:
    D, w = rotation_derivative(mesh)
    du = D @ pair.u
    return TwistCoefficient(pair.index, float(np.sum(w * du**2)))


def _check_weight(mesh: CrossSectionMesh, xi) -> None:
    xi = np.asarray(xi, dtype=float)
    if np.hypot(*xi) * mesh.radius >= 1.0:
        raise WeightNonPositive(f"|xi| * sup|y| = {np.hypot(*xi) * mesh.radius:.6g} >= 1")


def weighted_pencil(mesh: CrossSectionMesh, xi):
    """(K, M) of ``int (1 - xi.y) |grad v|^2`` and ``int (1 - xi.y) v^2`` (per dA)."""
    xi1, xi2 = map(float, xi)

    def weight(y1, y2):
        return 1.0 - xi1 * y1 - xi2 * y2

    K = weighted_stiffness(mesh, weight)
    M = sp.diags(weight(mesh.nodes[:, 0], mesh.nodes[:, 1]))
    return K, M


COMPLEMENTS = ("minmax", "unweighted")


def constrained_weighted_eigenvalue(mesh: CrossSectionMesh, xi, n: int, basis: list,
                                    complement: str = "minmax") -> float:
    """n-th eigenvalue of the weighted pencil, lowest mode excluded n times.

    ``complement="minmax"`` (default) excludes the pencil's own lowest ``n``
    eigenvectors, i.e. the n-th min-max value. Its deviation from
    ``lambda_n`` is ``-|xi|^2/4 + O(|xi|^3)`` for every simple ``n``.

    ``complement="unweighted"`` minimizes over the unweighted-L2 complement
    of the fixed unperturbed modes ``u_0..u_{n-1}``. For ``n >= 1`` this picks
    up an extra second-order term
    ``-sum_k (lambda_n - lambda_k)/4 <u_n, (xi.y) u_k>^2``.
    """
    if complement not in COMPLEMENTS:
        raise InvalidInput(f"complement must be one of {COMPLEMENTS}, got {complement!r}")
    _check_weight(mesh, xi)
    if len(basis) < n:
        raise InvalidInput(f"need u_0..u_{n - 1}, got {len(basis)} vectors")
    K, M = weighted_pencil(mesh, xi)
    if complement == "minmax":
        w, _ = lowest_eigenpairs(K, M, n + 1, sigma=0.0)
        return float(w[n])
    C = np.array([p.u for p in basis[:n]]) if n > 0 else None
    w, _ = lowest_eigenpairs(K, M, 1, sigma=0.0, C=C)
    return float(w[0])


def curvature_response(mesh: CrossSectionMesh, n: int, basis: list, xi_norms, direction=(1.0, 0.0),
                       complement: str = "minmax"):
    """``(lambda_n(xi) - lambda_n) / |xi|^2`` along a direction, per |xi|."""
    d = np.asarray(direction, dtype=float)
    d = d / np.hypot(*d)
    lam_n = constrained_weighted_eigenvalue(mesh, (0.0, 0.0), n, basis, complement)
    out = []
    for r in xi_norms:
        lam = constrained_weighted_eigenvalue(mesh, r * d, n, basis, complement)
        out.append((lam - lam_n) / r**2)
    return np.array(out)


def fit_quadratic_coefficient(xi_norms, values) -> float:
    """Extrapolate gamma(|xi|) = c0 + c2 |xi|^2 to |xi| -> 0 (least squares)."""
    r = np.asarray(xi_norms, dtype=float)
    A = np.column_stack([np.ones_like(r), r**2])
    coef, *_ = np.linalg.lstsq(A, np.asarray(values), rcond=None)
    return float(coef[0])
