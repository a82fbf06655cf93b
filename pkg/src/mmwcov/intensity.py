"""Exact intensity of the path-loss process seen by the typical user.

Projecting the base-station PPP through the three-state link model and the
per-state loss laws yields two one-dimensional PPPs on the path-loss axis
(one per state).  Their mean measures Lambda_s([0, x)) have closed forms
built from two primitives Upsilon0 / Upsilon1; everything here evaluates
those primitives, their densities, the resulting path-loss CDF and the
communication-blockage probability, plus the Log-Normal partial moments and
the brute-force shadowing expectation used to validate the two-ball
approximation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .channel import LinkStateParams, PathLossParams
from .numerics import erf, erfc

__all__ = [
    "IntensityConstants",
    "LogNormalMoments",
    "upsilon0",
    "upsilon1",
    "lambda_los",
    "lambda_nlos",
    "lambda_deriv",
    "pathloss_cdf",
    "lognormal_partial_moments",
    "blockage_intensity",
    "blockage_probability",
    "expected_intensity_numeric",
]

# Below this outage decay rate the no-outage limit form is used; the exact
# branch would otherwise multiply 0 by unbounded terms.
NO_OUTAGE_EPS = 1e-12

_STATE = {"los": 0, "nlos": 1}


@dataclass(frozen=True)
class LogNormalMoments:
    """Log-Normal shadowing in natural-log units: ln A ~ N(mu, sigma^2)."""

    mu: float
    sigma: float

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")


@dataclass(frozen=True)
class IntensityConstants:
    """Pre-computed constants of the closed-form intensities.

    q, t, v, z are (LOS, NLOS) pairs: Q_s = delta_los/kappa_s,
    T_s = delta_out/kappa_s, V_s = (delta_los+delta_out)/kappa_s and the
    path-loss breakpoint Z_s = (kappa_s * r_b)**beta_s where
    r_b = ln(gamma_out)/delta_out is the distance where outage kicks in.
    """

    lam: float
    link: LinkStateParams
    los: PathLossParams
    nlos: PathLossParams
    k1: float
    k2: float
    r_const: float
    w_const: float
    q: tuple
    t: tuple
    v: tuple
    z: tuple

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("density must be positive")
        ref = _compute_constants(self.link, self.los, self.nlos, self.lam)
        for name, want in ref.items():
            got = np.asarray(getattr(self, name), dtype=float)
            want = np.asarray(want, dtype=float)
            if not np.allclose(got, want, rtol=1e-12, atol=0.0, equal_nan=True):
                raise ValueError(f"constant {name} inconsistent with parameters")

    @property
    def no_outage(self) -> bool:
        return self.link.delta_out < NO_OUTAGE_EPS

    def state_loss(self, state: str) -> PathLossParams:
        return (self.los, self.nlos)[_STATE[state]]

    @staticmethod
    def from_params(link: LinkStateParams, los: PathLossParams,
                    nlos: PathLossParams, lam: float) -> "IntensityConstants":
        return IntensityConstants(lam=lam, link=link, los=los, nlos=nlos,
                                  **_compute_constants(link, los, nlos, lam))


def _compute_constants(link, los, nlos, lam):
    dl, do = link.delta_los, link.delta_out
    gl, go = link.gamma_los, link.gamma_out
    if do >= NO_OUTAGE_EPS and go < 1.0:
        raise ValueError("gamma_out must be >= 1 when delta_out > 0")
    kappas = (los.kappa, nlos.kappa)
    q = tuple(dl / k for k in kappas)
    if do < NO_OUTAGE_EPS:
        # No-outage limit: the breakpoint recedes to infinity and the
        # two-segment terms never activate.
        k2, r_const, w_const = 0.0, math.inf, math.inf
        t = (0.0, 0.0)
        v = q
        z = (math.inf, math.inf)
    else:
        r_b = math.log(go) / do
        k2 = 2.0 * math.pi * lam * gl * go / (dl + do) ** 2
        r_const = dl * r_b
        w_const = (dl + do) * r_b
        t = tuple(do / k for k in kappas)
        v = tuple((dl + do) / k for k in kappas)
        z = ((los.kappa * r_b) ** los.beta, (nlos.kappa * r_b) ** nlos.beta)
    k1 = 2.0 * math.pi * lam * gl / dl ** 2 if dl > 0 else math.inf
    return dict(k1=k1, k2=k2, r_const=r_const, w_const=w_const,
                q=q, t=t, v=v, z=z)


def _ramp(u):
    """1 - e^{-u}(1 + u), i.e. a^2 * integral_0^{u/a} e^{-a r} r dr.

    Series below 1e-3 (the direct form cancels catastrophically there),
    extended continuously to u = +inf.
    """
    u = np.asarray(u, dtype=float)
    with np.errstate(invalid="ignore"):
        direct = -np.expm1(-u) - u * np.exp(-u)
    series = u * u * (0.5 + u * (-1.0 / 3.0 + u * (0.125 - u / 30.0)))
    out = np.where(u < 1e-3, series, direct)
    return np.where(np.isinf(u), 1.0, out)


def _decay(u):
    """e^{-u}(1 + u), extended continuously to u = +inf."""
    u = np.asarray(u, dtype=float)
    with np.errstate(invalid="ignore"):
        val = np.exp(-u) * (1.0 + u)
    return np.where(np.isinf(u), 0.0, val)


def _check_x(x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("path-loss argument must be >= 0")
    return x


def _scalar_ok(x, out):
    return float(out) if np.ndim(x) == 0 else out


def upsilon0(x, state: str, c: IntensityConstants):
    """Mean measure primitive weighted by the LOS occupancy curve.

    Upsilon0([0, x); s) counts BSs whose state-s loss is below x, each
    carrying the weight (1 - p_out(r)) * gamma_los * e^{-delta_los r}.
    """
    xa = _check_x(x)
    s = _STATE[state]
    beta = c.state_loss(state).beta
    xr = xa ** (1.0 / beta)
    if c.no_outage:
        thin = min(1.0, c.link.gamma_out)
        out = thin * c.k1 * _ramp(c.q[s] * xr)
        return _scalar_ok(x, out)
    below = c.k1 * _ramp(c.q[s] * xr)
    above = (c.k2 * (_decay(c.w_const) - _decay(c.v[s] * xr))
             + c.k1 * _ramp(c.r_const))
    out = np.where(xa < c.z[s], below, above)
    return _scalar_ok(x, out)


def upsilon1(x, state: str, c: IntensityConstants):
    """Mean measure primitive weighted by 1 - p_out(r) only (both states)."""
    xa = _check_x(x)
    s = _STATE[state]
    loss = c.state_loss(state)
    area = math.pi * c.lam / loss.kappa ** 2
    if c.no_outage:
        thin = min(1.0, c.link.gamma_out)
        return _scalar_ok(x, thin * area * xa ** (2.0 / loss.beta))
    below = area * xa ** (2.0 / loss.beta)
    do, go = c.link.delta_out, c.link.gamma_out
    r_b = c.link.outage_break_distance
    xr = xa ** (1.0 / loss.beta)
    above = (math.pi * c.lam * r_b ** 2
             + 2.0 * math.pi * c.lam * go / do ** 2
             * (_decay(do * r_b) - _decay(c.t[s] * xr)))
    out = np.where(xa < c.z[s], below, above)
    return _scalar_ok(x, out)


def lambda_los(x, c: IntensityConstants):
    """Mean measure of the LOS path-loss process on [0, x)."""
    return upsilon0(x, "los", c)


def lambda_nlos(x, c: IntensityConstants):
    """Mean measure of the NLOS path-loss process on [0, x)."""
    return upsilon1(x, "nlos", c) - upsilon0(x, "nlos", c)


def lambda_deriv(x, state: str, c: IntensityConstants):
    """Density of the state-s path-loss process (d Lambda_s / dx).

    Piecewise smooth; evaluation exactly at the breakpoint Z_s returns the
    right limit, matching the H(0) := 1 convention of the measures.
    """
    xa = _check_x(x)
    if np.any(xa <= 0):
        raise ValueError("density is defined for x > 0")
    s = _STATE[state]
    loss = c.state_loss(state)
    beta = loss.beta
    xr = xa ** (1.0 / beta)
    xpow = xa ** (2.0 / beta - 1.0)

    def d_upsilon0(rate_lo, rate_hi):
        # d/dx of K * _ramp(rate * x^{1/beta}) = K rate^2/beta x^{2/beta-1} e^{-rate x^{1/beta}}
        lower = c.k1 * (rate_lo ** 2 / beta) * xpow * np.exp(-rate_lo * xr)
        if c.no_outage:
            return min(1.0, c.link.gamma_out) * lower
        upper = c.k2 * (rate_hi ** 2 / beta) * xpow * np.exp(-rate_hi * xr)
        return np.where(xa < c.z[s], lower, upper)

    du0 = d_upsilon0(c.q[s], c.v[s])
    if state == "los":
        return _scalar_ok(x, du0)
    area = math.pi * c.lam / loss.kappa ** 2
    base = area * (2.0 / beta) * xpow
    if c.no_outage:
        du1 = min(1.0, c.link.gamma_out) * base
    else:
        go = c.link.gamma_out
        du1 = np.where(xa < c.z[s], base, base * go * np.exp(-c.t[s] * xr))
    return _scalar_ok(x, du1 - du0)


def pathloss_cdf(x, c: IntensityConstants):
    """CDF of the smallest path loss: 1 - exp(-Lambda_LOS - Lambda_NLOS).

    The limit at x -> inf is 1 - blockage_probability, not 1: with positive
    outage decay the whole network can be unreachable.
    """
    xa = _check_x(x)
    total = lambda_los(xa, c) + lambda_nlos(xa, c)
    return _scalar_ok(x, -np.expm1(-np.asarray(total, dtype=float)))


def lognormal_partial_moments(mom: LogNormalMoments, nu: float, y):
    """Truncated Log-Normal moments (m, F, m_bar) at threshold y > 0.

    m(nu, y)   = E[A^nu ; A <= y]
               = 1/2 e^{nu mu + nu^2 sigma^2 / 2} erfc(nu sigma/sqrt2 - (ln y - mu)/(sqrt2 sigma))
    F(y)       = CDF, m_bar = full moment - m.
    """
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise ValueError("threshold must be positive")
    full = math.exp(nu * mom.mu + 0.5 * (nu * mom.sigma) ** 2)
    arg = (np.log(y) - mom.mu) / (math.sqrt(2.0) * mom.sigma)
    m = 0.5 * full * erfc(nu * mom.sigma / math.sqrt(2.0) - arg)
    f = 0.5 + 0.5 * erf(arg)
    m = np.minimum(m, full)
    return m, f, full - m


def blockage_intensity(params: LinkStateParams, lam: float) -> float:
    """Total mean measure Lambda_LOS(inf) + Lambda_NLOS(inf).

    Equals Upsilon1(inf) because the Upsilon0 tails of the two states
    coincide and cancel; infinite when outage is disabled.
    """
    if params.delta_out < NO_OUTAGE_EPS:
        return math.inf
    if params.gamma_out < 1.0:
        raise ValueError("gamma_out must be >= 1 when delta_out > 0")
    lg = math.log(params.gamma_out)
    return math.pi * lam * (lg / params.delta_out) ** 2 \
        + 2.0 * math.pi * lam / params.delta_out ** 2 * (1.0 + lg)


def blockage_probability(params: LinkStateParams, lam: float) -> float:
    """Probability that no BS is in LOS or NLOS (communication blockage)."""
    return math.exp(-blockage_intensity(params, lam))


# --- shadowing expectation -------------------------------------------------

_GH_CACHE = {}


def _gh_rule(order: int):
    if order not in _GH_CACHE:
        nodes, weights = np.polynomial.hermite_e.hermegauss(order)
        _GH_CACHE[order] = (nodes, weights / math.sqrt(2.0 * math.pi))
    return _GH_CACHE[order]


def _gh_expect(fn, mom: LogNormalMoments, x, order: int):
    nodes, weights = _gh_rule(order)
    scales = np.exp(mom.mu + mom.sigma * nodes)
    vals = fn(np.multiply.outer(scales, np.asarray(x, dtype=float)))
    return np.tensordot(weights, vals, axes=(0, 0))


def expected_intensity_numeric(x, mom_los: LogNormalMoments,
                               mom_nlos: LogNormalMoments,
                               c: IntensityConstants, *, rel_tol: float = 1e-8):
    """E[Lambda_LOS([0, A_LOS x))] + E[Lambda_NLOS([0, A_NLOS x))].

    Gauss-Hermite in ln A (order 64); when doubling the order moves the
    answer by more than rel_tol the offending term is recomputed by adaptive
    quadrature.  This is the brute-force reference the closed-form two-ball
    approximation is judged against; it has no closed form itself.
    """
    xa = _check_x(x)
    total = np.zeros(np.shape(xa))
    for fn, mom in ((lambda_los, mom_los), (lambda_nlos, mom_nlos)):
        coarse = _gh_expect(lambda ax: fn(ax, c), mom, xa, 64)
        fine = _gh_expect(lambda ax: fn(ax, c), mom, xa, 128)
        err = np.abs(fine - coarse)
        ok = err <= rel_tol * np.maximum(np.abs(fine), 1e-300)
        if np.all(ok):
            total = total + fine
            continue
        refined = np.array(fine, dtype=float, copy=True)
        flat = refined.reshape(-1)
        for idx in np.nonzero(~np.asarray(ok).reshape(-1))[0]:
            xi = float(np.asarray(xa).reshape(-1)[idx])
            val, _ = integrate.quad(
                lambda u: fn(math.exp(mom.mu + mom.sigma * u) * xi, c)
                * math.exp(-0.5 * u * u) / math.sqrt(2.0 * math.pi),
                -10.0, 10.0, limit=200)
            flat[idx] = val
        total = total + refined
    return _scalar_ok(x, total)
