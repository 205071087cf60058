"""Finite-dimensional checks relating minima of perturbed quadratic functionals
and resolvent convergence.

Forms are real symmetric matrices. A limit form lives on the range of an
orthogonal projector ``P0`` and is ``+inf`` off that range; its resolvent is
``R(T) P0 = Q (Q^T T Q + lam)^{-1} Q^T`` for an orthonormal basis ``Q`` of
the range.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import InvalidInput

FAMILIES = ("perturbation", "penalization", "oscillation")


def _sym(A) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] != A.shape[1]:
        raise InvalidInput("matrix must be square")
    if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise InvalidInput("matrix must be symmetric")
    return 0.5 * (A + A.T)


def range_basis(P0, tol: float = 1e-10) -> np.ndarray:
    P0 = _sym(P0)
    if np.abs(P0 @ P0 - P0).max() > 1e-10:
        raise InvalidInput("P0 is not idempotent")
    w, v = np.linalg.eigh(P0)
    return v[:, w > 0.5]


@dataclass(frozen=True, eq=False)
class FormSequence:
    """``T_eps`` for decreasing eps, and the limit ``T`` on ``range(P0)``."""
    eps: np.ndarray
    forms: list
    limit: np.ndarray
    P0: np.ndarray
    beta: float
    kind: str = "custom"

    def __post_init__(self):
        eps = np.asarray(self.eps, dtype=float)
        if eps.size != len(self.forms) or eps.size == 0:
            raise InvalidInput("one form per eps value is required")
        if np.any(np.diff(eps) >= 0):
            raise InvalidInput("eps values must be strictly decreasing")
        for T in self.forms:
            if np.linalg.eigvalsh(_sym(T))[0] < self.beta - 1e-9 * max(1.0, abs(self.beta)):
                raise InvalidInput("a form violates the declared lower bound beta")
        range_basis(self.P0)
        object.__setattr__(self, "eps", eps)

    @property
    def dim(self) -> int:
        return self.limit.shape[0]

    def items(self):
        return zip(self.eps, self.forms)


def _chol(A):
    try:
        return sla.cho_factor(A)
    except sla.LinAlgError:
        raise InvalidInput("T + lam I is not positive definite") from None


def min_perturbed(T, lam: float, eta):
    """Minimum and minimizer of ``z.T.z + lam |z|^2 + <eta, z>``."""
    T = _sym(T)
    eta = np.asarray(eta, dtype=float)
    c = _chol(T + lam * np.eye(T.shape[0]))
    z = -0.5 * sla.cho_solve(c, eta)
    return float(0.5 * eta @ z), z


def min_perturbed_limit(T, P0, lam: float, eta):
    """Same functional for the limit form (``+inf`` off ``range(P0)``)."""
    Q = range_basis(P0)
    eta = np.asarray(eta, dtype=float)
    if Q.shape[1] == 0:
        return 0.0, np.zeros_like(eta)
    Tq = Q.T @ _sym(T) @ Q
    c = _chol(Tq + lam * np.eye(Q.shape[1]))
    zq = -0.5 * sla.cho_solve(c, Q.T @ eta)
    z = Q @ zq
    return float(0.5 * eta @ z), z


def resolvent(T, lam: float, P0=None) -> np.ndarray:
    """``(T + lam)^{-1}``, or ``(T + lam)^{-1} P0`` on the range of ``P0``."""
    T = _sym(T)
    if P0 is None:
        return sla.cho_solve(_chol(T + lam * np.eye(T.shape[0])), np.eye(T.shape[0]))
    Q = range_basis(P0)
    Tq = Q.T @ T @ Q
    return Q @ sla.cho_solve(_chol(Tq + lam * np.eye(Q.shape[1])), Q.T)


@dataclass
class EquivalenceReport:
    minima_converge: bool
    resolvents_converge: bool
    minima_errors: np.ndarray   # per eps, max over samples
    resolvent_errors: np.ndarray

    @property
    def agree(self) -> bool:
        return self.minima_converge == self.resolvents_converge


def _tail_ok(errors: np.ndarray, tol: float, tail: int) -> bool:
    return bool(np.all(errors[-tail:] <= tol))


def check_equivalence_iv_v(seq: FormSequence, lam: float, eta_samples, tol: float = 1e-6,
                           tail: int = 2) -> EquivalenceReport:
    """Minima of the perturbed functionals versus strong resolvent convergence.

    A sequence "converges" when the errors of its last ``tail`` members are
    all within ``tol``.
    """
    if not lam > max(0.0, -seq.beta):
        raise InvalidInput("lam must exceed max(0, -beta)")
    etas = np.atleast_2d(np.asarray(eta_samples, dtype=float))
    R0 = resolvent(seq.limit, lam, seq.P0)
    m0 = np.array([min_perturbed_limit(seq.limit, seq.P0, lam, e)[0] for e in etas])
    merr, rerr = [], []
    for _, T in seq.items():
        m = np.array([min_perturbed(T, lam, e)[0] for e in etas])
        merr.append(np.max(np.abs(m - m0)))
        R = resolvent(T, lam)
        rerr.append(np.max(np.linalg.norm((R - R0) @ etas.T, axis=0)))
    merr, rerr = np.array(merr), np.array(rerr)
    tail = min(tail, len(merr))
    return EquivalenceReport(_tail_ok(merr, tol, tail), _tail_ok(rerr, tol, tail), merr, rerr)


@dataclass
class MinimizerReport:
    residual: float
    zeta: np.ndarray | None
    bounded: bool


def minimizer_identity(T, P0, eta, tol: float = 1e-10) -> MinimizerReport:
    """Minimize ``b(z) - 2 <eta, z>`` over ``range(P0)`` and return ``|P0 T z - P0 eta|``.

    ``T`` acts on ``range(P0)`` through its compression ``P0 T P0``. A
    functional that is unbounded below is reported with ``bounded=False``.
    """
    T, P0 = _sym(T), _sym(P0)
    eta = np.asarray(eta, dtype=float)
    Q = range_basis(P0)
    Tq = Q.T @ T @ Q
    eq = Q.T @ eta
    w, v = np.linalg.eigh(Tq)
    scale = max(1.0, np.abs(w).max(initial=0.0))
    if w.size and w[0] < -tol * scale:
        return MinimizerReport(float("inf"), None, False)
    null = np.abs(w) <= tol * scale
    if np.any(np.abs(v[:, null].T @ eq) > tol * max(1.0, np.linalg.norm(eq))):
        return MinimizerReport(float("inf"), None, False)
    zq = np.linalg.lstsq(Tq, eq, rcond=None)[0]
    z = Q @ zq
    res = float(np.linalg.norm(P0 @ (T @ z) - P0 @ eta))
    return MinimizerReport(res, z, True)


def sup_representation(T, zeta, eta_samples, P0=None):
    """``sup_eta [2 <T eta, zeta> - <T eta, eta>]`` over samples (projected into the domain)
    and the gap ``b(zeta) - sup``; ``b = inf`` off ``range(P0)``."""
    T = _sym(T)
    zeta = np.asarray(zeta, dtype=float)
    etas = np.atleast_2d(np.asarray(eta_samples, dtype=float))
    if P0 is not None:
        P0 = _sym(P0)
        etas = etas @ P0
        if np.linalg.norm(zeta - P0 @ zeta) > 1e-12 * max(1.0, np.linalg.norm(zeta)):
            sup = float(np.max(2 * etas @ T @ zeta - np.einsum("ij,jk,ik->i", etas, T, etas)))
            return sup, float("inf")
    TE = etas @ T
    vals = 2 * TE @ zeta - np.einsum("ij,ij->i", TE, etas)
    sup = float(np.max(vals))
    return sup, float(zeta @ T @ zeta - sup)


@dataclass
class ConvergenceReport:
    eps: np.ndarray
    distances: np.ndarray
    limit_minimizer: np.ndarray

    def rate(self) -> float:
        ok = self.distances > 0
        if ok.sum() < 2:
            return float("nan")
        return float(np.polyfit(np.log(self.eps[ok]), np.log(self.distances[ok]), 1)[0])


def minimizer_convergence(seq: FormSequence, continuous_shift, lam: float = 1.0) -> ConvergenceReport:
    """Distance of the minimizers of ``b_eps + lam |.|^2 + <eta, .>`` from the limit minimizer."""
    if not seq.beta + lam > 0:
        raise InvalidInput("need beta + lam > 0 (equicoercivity)")
    eta = np.asarray(continuous_shift, dtype=float)
    _, z0 = min_perturbed_limit(seq.limit, seq.P0, lam, eta)
    d = [np.linalg.norm(min_perturbed(T, lam, eta)[1] - z0) for _, T in seq.items()]
    return ConvergenceReport(seq.eps.copy(), np.array(d), z0)


@dataclass
class MonotoneReport:
    forms_ordered: bool
    resolvents_ordered: bool


def resolvent_monotone(T1, T2, lam: float, tol: float = 1e-10) -> MonotoneReport:
    """``T1 <= T2`` as forms versus ``R(T2) <= R(T1)`` (matrix order)."""
    T1, T2 = _sym(T1), _sym(T2)
    f = np.linalg.eigvalsh(T2 - T1)[0] >= -tol
    R1, R2 = resolvent(T1, lam), resolvent(T2, lam)
    r = np.linalg.eigvalsh(R1 - R2)[0] >= -tol
    return MonotoneReport(bool(f), bool(r))


# -- random families -----------------------------------------------------------

def random_spd(rng: np.random.Generator, n: int, floor: float = 0.1) -> np.ndarray:
    A = rng.standard_normal((n, n))
    return A @ A.T / n + floor * np.eye(n)


def random_symmetric(rng: np.random.Generator, n: int) -> np.ndarray:
    A = rng.standard_normal((n, n))
    return (A + A.T) / (2 * np.sqrt(n))


def default_eps_list() -> np.ndarray:
    return np.logspace(-1, -9, 9)


def make_family(kind: str, dim: int, rng: np.random.Generator, eps_list=None) -> FormSequence:
    if kind not in FAMILIES:
        raise InvalidInput(f"family must be one of {FAMILIES}, got {kind!r}")
    if dim < 2:
        raise InvalidInput("dim must be >= 2")
    eps = np.asarray(default_eps_list() if eps_list is None else eps_list, dtype=float)
    T = random_spd(rng, dim)
    if kind == "perturbation":
        D = random_symmetric(rng, dim)
        forms = [T + e * D for e in eps]
        beta = min(np.linalg.eigvalsh(F)[0] for F in forms)
        return FormSequence(eps, forms, T, np.eye(dim), beta, kind)
    if kind == "penalization":
        k = int(rng.integers(1, dim))
        Q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
        Q0, Q1 = Q[:, :k], Q[:, k:]
        T0 = Q0 @ random_spd(rng, k) @ Q0.T
        forms = [T0 + Q1 @ Q1.T / e for e in eps]
        beta = min(np.linalg.eigvalsh(F)[0] for F in forms)
        return FormSequence(eps, forms, T0, Q0 @ Q0.T, beta, kind)
    # oscillation: alternate between T and T + D, claimed limit T
    D = random_spd(rng, dim, floor=0.5)
    forms = [T + (i % 2) * D for i in range(len(eps))]
    beta = min(np.linalg.eigvalsh(F)[0] for F in forms)
    return FormSequence(eps, forms, T, np.eye(dim), beta, kind)


def sample_vectors(rng: np.random.Generator, dim: int, n_random: int = 8) -> np.ndarray:
    """Seeded random unit vectors followed by the canonical basis."""
    R = rng.standard_normal((n_random, dim))
    R /= np.linalg.norm(R, axis=1, keepdims=True)
    return np.vstack([R, np.eye(dim)])


@dataclass
class LabSummary:
    n_families: int
    disagreements: list = field(default_factory=list)
    max_minimizer_residual: float = 0.0
    min_sup_gap: float = float("inf")
    max_attained_gap: float = 0.0
    by_kind: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "n_families": self.n_families,
            "disagreements": self.disagreements,
            "max_minimizer_residual": self.max_minimizer_residual,
            "min_sup_gap": self.min_sup_gap,
            "max_attained_gap": self.max_attained_gap,
            "by_kind": self.by_kind,
        }


def run_lab(n_families: int = 100, seed: int = 0, max_dim: int = 50, lam: float = 1.0,
            tol: float = 1e-6, kinds=FAMILIES, eps_list=None) -> LabSummary:
    """Cycle through the family kinds and collect the checks of every family."""
    rng = np.random.default_rng(seed)
    out = LabSummary(n_families)
    for i in range(n_families):
        kind = kinds[i % len(kinds)]
        dim = int(rng.integers(2, max_dim + 1))
        seq = make_family(kind, dim, rng, eps_list)
        etas = sample_vectors(rng, dim)
        rep = check_equivalence_iv_v(seq, lam, etas, tol)
        stats = out.by_kind.setdefault(kind, {"count": 0, "converged": 0})
        stats["count"] += 1
        stats["converged"] += int(rep.minima_converge and rep.resolvents_converge)
        if not rep.agree:
            out.disagreements.append(i)
        T = random_spd(rng, dim)
        mi = minimizer_identity(T, seq.P0, etas[0])
        out.max_minimizer_residual = max(out.max_minimizer_residual, mi.residual)
        zeta = etas[1] @ seq.P0
        _, gap = sup_representation(T, zeta, etas, seq.P0)
        out.min_sup_gap = min(out.min_sup_gap, gap)
        _, gap_att = sup_representation(T, zeta, np.vstack([etas, zeta]), seq.P0)
        out.max_attained_gap = max(out.max_attained_gap, abs(gap_att))
    return out
