"""Shared numerics: special functions, semi-infinite quadrature, the
Gauss-Chebyshev rate rule, and the two-phase constrained least-squares driver
used by the intensity-matching fit.

This module is thin glue over scipy; the value added is breakpoint handling
(the intensity functions are only piecewise smooth) and the fit protocol
(bounded trust-region pass first, then an equality-constrained re-solve
warm-started from a feasibility-repaired copy of the first solution).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, optimize
from scipy.special import erf, erfc  # noqa: F401  (re-exported, used package-wide)

__all__ = [
    "QuadratureSpec",
    "QuadratureError",
    "InfeasibleError",
    "LeastSquaresProblem",
    "LsqResult",
    "integrate_semi_infinite",
    "gcq_rate",
    "solve_constrained_lsq",
    "erf",
    "erfc",
]


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerances and orders shared by the quadrature helpers."""

    abs_tol: float = 1e-12
    rel_tol: float = 1e-9
    max_subdivisions: int = 200
    gcq_order: int = 64

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("quadrature tolerances must be positive")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be >= 1")
        if self.gcq_order < 2:
            raise ValueError("gcq_order must be >= 2")


DEFAULT_QUADRATURE = QuadratureSpec()


class QuadratureError(RuntimeError):
    """Raised when adaptive quadrature does not converge.

    Carries the best estimate assembled so far in ``best_estimate``.
    """

    def __init__(self, message, best_estimate, error_estimate):
        super().__init__(message)
        self.message = message
        self.best_estimate = best_estimate
        self.error_estimate = error_estimate


def integrate_semi_infinite(f, spec: QuadratureSpec | None = None,
                            breakpoints: Sequence[float] = ()) -> tuple[float, float]:
    """Integrate f over [0, inf) and return (value, error estimate).

    ``breakpoints`` are abscissas where f may jump or kink (Heaviside switch
    points); the integration never straddles them.  The final unbounded
    segment is handled by quadpack's monotone map onto a finite interval.
    """
    spec = spec or DEFAULT_QUADRATURE
    pts = sorted({float(p) for p in breakpoints if np.isfinite(p) and p > 0.0})
    edges = [0.0]
    for p in pts:
        # collapse breakpoints that only differ through float round trips;
        # a zero-width segment trips quadpack's behavior check
        if p - edges[-1] > 1e-12 * max(1.0, p):
            edges.append(p)
    total = 0.0
    err = 0.0
    bad_err = 0.0
    trouble = []
    spans = list(zip(edges[:-1], edges[1:])) + [(edges[-1], np.inf)]
    for a, b in spans:
        out = integrate.quad(f, a, b, epsabs=spec.abs_tol, epsrel=spec.rel_tol,
                             limit=spec.max_subdivisions, full_output=1)
        total += out[0]
        err += out[1]
        if len(out) > 3:
            bad_err += abs(out[1])
            trouble.append(f"[{a:g}, {b:g}]: {out[3]}")
    # quadpack flags segments that miss the *relative* tolerance even when
    # they carry no mass; judge flagged segments by the global standard
    if trouble and bad_err > max(spec.abs_tol, spec.rel_tol * abs(total)):
        raise QuadratureError("; ".join(trouble), total, err)
    return total, err


def _gcq_scale(pcov) -> float:
    """Scale calibration for the rate rule: the log-threshold v = ln(1 + T)
    at which pcov has fallen to half its T->0 value.  Keeps the fixed node
    set centered on the curve regardless of how many decades of SNR headroom
    the scenario has."""
    p0 = float(pcov(1e-12))
    if p0 <= 0.0:
        return 0.0
    lo, hi = 0.0, 1.0
    while float(pcov(math.expm1(hi))) > 0.5 * p0:
        lo, hi = hi, hi * 2.0
        if hi > 600.0:
            return hi
    for _ in range(20):
        mid = 0.5 * (lo + hi)
        if float(pcov(math.expm1(mid))) > 0.5 * p0:
            lo = mid
        else:
            hi = mid
    return max(hi, 1e-6)


def gcq_rate(pcov, spec: QuadratureSpec | None = None) -> float:
    """Gauss-Chebyshev estimate of int_0^inf pcov(t)/(1+t) dt.

    The integral is taken in the log-SNR variable v = ln(1 + t), where the
    1/(1+t) kernel disappears and the integrand is just the coverage curve
    pcov(e^v - 1): a plateau that decays past the cell's SNR headroom.
    First-kind nodes u_k = cos((2k-1) pi / (2N)) on (-1, 1) are mapped by
    v = c (1+u)/(1-u), with c the half-coverage point in v so node placement
    tracks the curve.  Working in v matters: in raw t the integrand carries
    mass spread over every decade up to the headroom limit, and no placement
    of 64 nodes resolves all of them at once.
    """
    spec = spec or DEFAULT_QUADRATURE
    c = _gcq_scale(pcov)
    if c == 0.0:
        return 0.0
    n = spec.gcq_order
    k = np.arange(1, n + 1)
    u = np.cos((2 * k - 1) * np.pi / (2 * n))
    v = c * (1 + u) / (1 - u)
    w = np.sqrt(1 - u * u) * 2.0 * c / ((1 - u) * (1 - u))
    vals = np.array(
        [float(pcov(math.expm1(vk))) if vk < 690.0 else 0.0 for vk in v]
    )
    return float(np.pi / n * np.sum(w * vals))


class InfeasibleError(RuntimeError):
    """The equality constraints cannot be satisfied within the bounds."""


@dataclass
class LeastSquaresProblem:
    """min 0.5 ||residual(x)||^2 over box bounds, optionally subject to
    linear equality rows eq_matrix @ x = eq_rhs."""

    residual: Callable[[np.ndarray], np.ndarray]
    lower: np.ndarray
    upper: np.ndarray
    x0: np.ndarray
    eq_matrix: np.ndarray | None = None
    eq_rhs: np.ndarray | None = None

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        self.x0 = np.asarray(self.x0, dtype=float)
        n = self.x0.size
        if self.lower.shape != (n,) or self.upper.shape != (n,):
            raise ValueError("bounds must match the parameter vector")
        if np.any(self.lower > self.upper):
            raise ValueError("need lower <= upper")
        if (self.eq_matrix is None) != (self.eq_rhs is None):
            raise ValueError("eq_matrix and eq_rhs go together")
        if self.eq_matrix is not None:
            self.eq_matrix = np.atleast_2d(np.asarray(self.eq_matrix, dtype=float))
            self.eq_rhs = np.atleast_1d(np.asarray(self.eq_rhs, dtype=float))
            if self.eq_matrix.shape != (self.eq_rhs.size, n):
                raise ValueError("equality rows must match the parameter vector")


@dataclass
class LsqResult:
    x: np.ndarray
    resnorm: float
    phase1_resnorm: float
    stagnated: bool = False
    message: str = ""


_FEAS_TOL = 1e-9


def _repair_feasibility(x, col_weight, lo, hi, a_mat, rhs, iters=200):
    """Move x onto {A x = rhs} inside the box, spending the correction
    preferentially on coordinates the residual is insensitive to.

    ``col_weight`` holds phase-1 Jacobian column norms; a zero column marks a
    slack coordinate that can absorb constraint violations for free.
    """
    x = np.clip(x, lo, hi)
    scale = np.max(col_weight) if np.max(col_weight) > 0 else 1.0
    softness = 1.0 / (col_weight / scale + 1e-9)
    for _ in range(iters):
        viol = a_mat @ x - rhs
        if np.max(np.abs(viol)) < 1e-12:
            break
        for k in range(a_mat.shape[0]):
            row = a_mat[k]
            idx = np.nonzero(row)[0]
            r = row[idx] @ x[idx] - rhs[k]
            if abs(r) < 1e-13:
                continue
            s = softness[idx]
            denom = np.sum(row[idx] ** 2 * s)
            x[idx] -= r * s * row[idx] / denom
        x = np.clip(x, lo, hi)
    return x


def solve_constrained_lsq(problem: LeastSquaresProblem) -> LsqResult:
    """Two-phase solve: bounded trust-region least squares first (the
    equality rows are ignored), then an SLSQP re-solve of the same objective
    with the equality rows, warm-started from the repaired phase-1 point.

    The returned point is feasible to 1e-9 and its objective never exceeds
    the warm start's.  Stagnation (phase 2 unable to improve) is flagged,
    not raised.
    """
    lo, hi = problem.lower, problem.upper
    x0 = np.clip(problem.x0, lo, hi)
    r1 = optimize.least_squares(problem.residual, x0, bounds=(lo, hi),
                                method="trf", xtol=1e-15, ftol=1e-15, gtol=1e-15)
    phase1_resnorm = float(np.linalg.norm(r1.fun))

    def objective(x):
        return 0.5 * float(np.sum(np.asarray(problem.residual(x)) ** 2))

    if problem.eq_matrix is None:
        return LsqResult(x=r1.x, resnorm=phase1_resnorm,
                         phase1_resnorm=phase1_resnorm, message=r1.message)

    a_mat, rhs = problem.eq_matrix, problem.eq_rhs
    col_weight = np.linalg.norm(r1.jac, axis=0)
    warm = _repair_feasibility(r1.x.copy(), col_weight, lo, hi, a_mat, rhs)
    warm_feasible = np.max(np.abs(a_mat @ warm - rhs)) <= _FEAS_TOL

    cons = [{"type": "eq", "fun": lambda x: a_mat @ x - rhs}]
    r2 = optimize.minimize(objective, warm, method="SLSQP", constraints=cons,
                           bounds=list(zip(lo, hi)),
                           options={"maxiter": 3000, "ftol": 1e-18})
    cand = np.clip(r2.x, lo, hi)
    cand_feasible = np.max(np.abs(a_mat @ cand - rhs)) <= _FEAS_TOL

    stagnated = False
    message = r2.message
    if cand_feasible and (not warm_feasible or objective(cand) <= objective(warm)):
        best = cand
    elif warm_feasible:
        best = warm
        stagnated = True
        message = f"phase 2 fell back to the warm start ({r2.message})"
    else:
        raise InfeasibleError(
            "no feasible point found; the equality rows appear inconsistent "
            "with the bounds")
    return LsqResult(x=best, resnorm=float(np.sqrt(2.0 * objective(best))),
                     phase1_resnorm=phase1_resnorm, stagnated=stagnated,
                     message=message)
