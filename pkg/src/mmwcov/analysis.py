"""Coverage probability and average rate in the noise-limited regime.

Association rules: serve from the BS with the smallest path loss, or from
the one with the highest received power (shadowing included in the metric).
The first leads to per-state single integrals over the serving-link density
with a survival factor; the second reduces to a void probability of the
shifted path-loss process.  Beam misalignment enters as a four-term gain
mixture, multiple tiers by superposing per-tier intensities.

Thresholds T are linear SNR ratios; dB shows up only in the default grid.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .channel import (AntennaPattern, LinkStateParams, PathLossParams,
                      Preset, RadioConfig, dbm_to_mw, link_state_probs,
                      noise_power)
from .intensity import (IntensityConstants, LogNormalMoments,
                        expected_intensity_numeric, lambda_los, lambda_nlos,
                        pathloss_cdf)
from .numerics import (DEFAULT_QUADRATURE, QuadratureError, QuadratureSpec,
                       erf, erfc, gcq_rate, integrate_semi_infinite)
from .twoball import TwoBallParams, approx_intensity_lognormal

__all__ = [
    "TierConfig",
    "Scenario",
    "CoverageCurve",
    "ASSOC_PATHLOSS",
    "ASSOC_POWER",
    "default_threshold_grid",
    "pcov_smallest_pathloss",
    "pcov_iid_fading",
    "pcov_highest_power",
    "pcov_with_beam_errors",
    "pcov_multitier",
    "rate",
    "coverage_curve",
]

ASSOC_PATHLOSS = "smallest-pathloss"
ASSOC_POWER = "highest-power"

LN2 = math.log(2.0)


@dataclass(frozen=True)
class TierConfig:
    """One BS tier: density (or the equivalent cell radius), transmit power
    and the BS antenna pattern.  Give exactly one of density / cell_radius;
    the other is filled in via lambda = 1/(pi R_c^2)."""

    tx_power_dbm: float
    bs_pattern: AntennaPattern
    density: float = 0.0
    cell_radius: float = 0.0

    def __post_init__(self):
        if (self.density > 0) == (self.cell_radius > 0):
            raise ValueError("give exactly one of density, cell_radius")
        if self.density > 0:
            object.__setattr__(self, "cell_radius",
                               1.0 / math.sqrt(math.pi * self.density))
        else:
            object.__setattr__(self, "density",
                               1.0 / (math.pi * self.cell_radius ** 2))

    @property
    def tx_power_mw(self) -> float:
        return dbm_to_mw(self.tx_power_dbm)


@dataclass(frozen=True)
class Scenario:
    """Everything a coverage computation needs.  Link state and path-loss
    laws are shared across tiers; per-tier knobs are power, density and the
    BS pattern.  radio.tx_power_dbm is ignored in favor of the tiers'."""

    tiers: tuple
    link: LinkStateParams
    los: PathLossParams
    nlos: PathLossParams
    radio: RadioConfig
    mt_pattern: AntennaPattern
    association: str = ASSOC_PATHLOSS
    beam_error_std: tuple | None = None
    two_ball: TwoBallParams | None = None

    def __post_init__(self):
        object.__setattr__(self, "tiers", tuple(self.tiers))
        if len(self.tiers) < 1:
            raise ValueError("need at least one tier")
        if self.association not in (ASSOC_PATHLOSS, ASSOC_POWER):
            raise ValueError(f"unknown association {self.association!r}")
        if self.beam_error_std is not None:
            sbs, smt = self.beam_error_std
            if sbs < 0 or smt < 0:
                raise ValueError("beam error std must be >= 0")

    @staticmethod
    def single_tier(preset: Preset, radio: RadioConfig,
                    bs_pattern: AntennaPattern, mt_pattern: AntennaPattern,
                    cell_radius: float = 0.0, density: float = 0.0,
                    association: str = ASSOC_PATHLOSS,
                    beam_error_std=None, two_ball=None) -> "Scenario":
        tier = TierConfig(tx_power_dbm=radio.tx_power_dbm,
                          bs_pattern=bs_pattern, density=density,
                          cell_radius=cell_radius)
        return Scenario(tiers=(tier,), link=preset.link, los=preset.los,
                        nlos=preset.nlos, radio=radio, mt_pattern=mt_pattern,
                        association=association,
                        beam_error_std=beam_error_std, two_ball=two_ball)


@dataclass(frozen=True)
class CoverageCurve:
    """Coverage probability sampled on a threshold grid (linear T)."""

    thresholds: tuple
    values: tuple

    def __post_init__(self):
        object.__setattr__(self, "thresholds", tuple(float(t) for t in self.thresholds))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if len(self.thresholds) != len(self.values):
            raise ValueError("thresholds and values differ in length")
        vals = np.asarray(self.values)
        if np.any(vals < -1e-12) or np.any(vals > 1.0 + 1e-12):
            raise ValueError("coverage values must lie in [0, 1]")
        if np.any(np.diff(vals) > 1e-9):
            raise ValueError("coverage must be non-increasing in T")


def default_threshold_grid() -> np.ndarray:
    """Linear thresholds for -20..40 dB in 1 dB steps."""
    return 10.0 ** (np.arange(-20, 41) / 10.0)


def _single_tier(scn: Scenario):
    if len(scn.tiers) != 1:
        raise ValueError("this operation handles a single tier")
    return scn.tiers[0]


def _no_beam_errors(scn: Scenario):
    if scn.beam_error_std is not None:
        raise ValueError("beam errors are handled by pcov_with_beam_errors")


def _gamma0(scn: Scenario, tier: TierConfig, gain) -> float:
    """Boresight SNR numerator over noise: P * G0 / sigma_N^2."""
    g0 = gain if gain is not None else tier.bs_pattern.gain_max * scn.mt_pattern.gain_max
    return tier.tx_power_mw * g0 / noise_power(scn.radio)


def _check_threshold(t: float) -> float:
    t = float(t)
    if t <= 0:
        raise ValueError("threshold must be positive (pass a small value for the T->0 limit)")
    return t


def _r_breakpoints(c: IntensityConstants, beta: float, kappa: float):
    """Distances where the state's own occupancy or either intensity kinks."""
    pts = set()
    if math.isfinite(c.link.outage_break_distance):
        pts.add(c.link.outage_break_distance)
    for z in c.z:
        if math.isfinite(z):
            pts.add(z ** (1.0 / beta) / kappa)
    return sorted(pts)


def _lognorm_sf(y, mom: LogNormalMoments):
    # P(A > y) for Log-Normal A; y <= 0 gives 1
    if y <= 0:
        return 1.0
    return 0.5 * erfc((math.log(y) - mom.mu) / (math.sqrt(2.0) * mom.sigma))


def _tail_radii(gamma0, t_lin, loss):
    """Radii where the shadowing tail factor switches on/off (mu -+ 6 sigma).

    At extreme thresholds the coverage integrand collapses to a spike many
    orders of magnitude narrower than the outage break distance; handing the
    spike's edges to the quadrature keeps it from being skipped over.
    """
    base = math.log(gamma0) - math.log(t_lin) + loss.mu
    pts = []
    for j in (-6.0, 0.0, 6.0):
        ln_r = (base + j * loss.sigma) / loss.beta - math.log(loss.kappa)
        if ln_r < 690.0:
            pts.append(math.exp(ln_r))
    return pts


def pcov_smallest_pathloss(scn: Scenario, t_lin: float, gain=None,
                           quad: QuadratureSpec | None = None) -> float:
    """Coverage under smallest-path-loss association.

    Sum over the serving state s of the radial integral of
    (fading tail at T l_s(r) / gamma0) * p_s(r) * r * exp(-Lambda_tot(l_s(r))),
    the survival factor covering both states' processes.
    """
    tier = _single_tier(scn)
    _no_beam_errors(scn)
    t_lin = _check_threshold(t_lin)
    quad = quad or DEFAULT_QUADRATURE
    lam = tier.density
    c = IntensityConstants.from_params(scn.link, scn.los, scn.nlos, lam)
    gamma0 = _gamma0(scn, tier, gain)

    total = 0.0
    for state, loss in (("los", scn.los), ("nlos", scn.nlos)):
        mom = LogNormalMoments(loss.mu, loss.sigma)
        idx = 0 if state == "los" else 1

        def integrand(r, _idx=idx, _loss=loss, _mom=mom):
            if r <= 0:
                return 0.0
            x = (_loss.kappa * r) ** _loss.beta
            probs = link_state_probs(scn.link, r)
            p_s = float(probs[_idx])
            if p_s == 0.0:
                return 0.0
            surv = math.exp(-(lambda_los(x, c) + lambda_nlos(x, c)))
            tail = _lognorm_sf(t_lin * x / gamma0, _mom)
            return tail * p_s * r * surv

        pts = _r_breakpoints(c, loss.beta, loss.kappa) + _tail_radii(gamma0, t_lin, loss)
        try:
            val, _ = integrate_semi_infinite(integrand, quad, breakpoints=pts)
        except QuadratureError as e:
            if abs(e.best_estimate) <= quad.abs_tol:
                # convergence chatter around a value that is zero to double
                # precision (huge T pushes the tail factor into subnormals)
                val = 0.0
            else:
                raise QuadratureError(f"{state} coverage integral failed: {e.message}",
                                      e.best_estimate, e.error_estimate) from e
        total += 2.0 * math.pi * lam * val
    return min(max(total, 0.0), 1.0)


def pcov_iid_fading(scn: Scenario, t_lin: float, gain=None,
                    quad: QuadratureSpec | None = None) -> float:
    """Coverage when the fading law is the same for LOS and NLOS: the
    path-loss CDF integrated against the common Log-Normal PDF."""
    tier = _single_tier(scn)
    _no_beam_errors(scn)
    t_lin = _check_threshold(t_lin)
    if (scn.los.mu_db, scn.los.sigma_db) != (scn.nlos.mu_db, scn.nlos.sigma_db):
        raise ValueError("iid-fading form needs equal shadowing across states")
    quad = quad or DEFAULT_QUADRATURE
    lam = tier.density
    c = IntensityConstants.from_params(scn.link, scn.los, scn.nlos, lam)
    gamma0 = _gamma0(scn, tier, gain)
    mu, sigma = scn.los.mu, scn.los.sigma
    norm = 1.0 / (sigma * math.sqrt(2.0 * math.pi))

    def integrand(a):
        if a <= 0:
            return 0.0
        pdf = norm / a * math.exp(-0.5 * ((math.log(a) - mu) / sigma) ** 2)
        return pathloss_cdf(gamma0 * a / t_lin, c) * pdf

    breakpoints = [z * t_lin / gamma0 for z in c.z if math.isfinite(z)]
    # anchor the fading density's mass region so a near-degenerate sigma
    # (point-mass limit) cannot slip between quadrature nodes
    breakpoints += [math.exp(mu + j * sigma) for j in (-6.0, -1.0, 0.0, 1.0, 6.0)]
    try:
        val, _ = integrate_semi_infinite(integrand, quad,
                                         breakpoints=sorted(breakpoints))
    except QuadratureError as e:
        if abs(e.best_estimate) <= quad.abs_tol:
            val = 0.0
        else:
            raise QuadratureError(f"iid-fading coverage integral failed: {e.message}",
                                  e.best_estimate, e.error_estimate) from e
    return min(max(val, 0.0), 1.0)


def pcov_highest_power(scn: Scenario, t_lin: float, mode: str = "exact",
                       gain=None, quad: QuadratureSpec | None = None) -> float:
    """Coverage under highest-received-power association: the void
    probability of the shadowing-shifted process below gamma0 / T."""
    tier = _single_tier(scn)
    _no_beam_errors(scn)
    t_lin = _check_threshold(t_lin)
    mass = _tier_power_mass(scn, tier, t_lin, mode, gain)
    return min(max(-math.expm1(-mass), 0.0), 1.0)


def _tier_power_mass(scn: Scenario, tier: TierConfig, t_lin: float, mode: str,
                     gain) -> float:
    """One tier's intensity mass below the coverage threshold.

    The tier EIRP folds into the Log-Normal location as an additive ln shift;
    single- and multi-tier coverage share this path so the one-tier case of
    the superposition is the single-tier formula, float for float.
    """
    if gain is None:
        x_t = scn.mt_pattern.gain_max / (noise_power(scn.radio) * t_lin)
        shift = math.log(tier.tx_power_mw * tier.bs_pattern.gain_max)
    else:
        x_t = gain / (noise_power(scn.radio) * t_lin)
        shift = math.log(tier.tx_power_mw)
    return _power_intensity(scn, x_t, tier.density, mode, mu_shift=shift)


def _power_intensity(scn: Scenario, x_t: float, lam: float, mode: str,
                     mu_shift: float = 0.0) -> float:
    mom_l = LogNormalMoments(scn.los.mu + mu_shift, scn.los.sigma)
    mom_n = LogNormalMoments(scn.nlos.mu + mu_shift, scn.nlos.sigma)
    if mode == "exact":
        c = IntensityConstants.from_params(scn.link, scn.los, scn.nlos, lam)
        return float(expected_intensity_numeric(x_t, mom_l, mom_n, c))
    if mode == "twoball":
        if scn.two_ball is None:
            raise ValueError("twoball mode needs Scenario.two_ball parameters")
        tb = scn.two_ball
        return (approx_intensity_lognormal(x_t, "los", tb, lam,
                                           scn.los.kappa, scn.los.beta, mom_l)
                + approx_intensity_lognormal(x_t, "nlos", tb, lam,
                                             scn.nlos.kappa, scn.nlos.beta, mom_n))
    raise ValueError(f"unknown mode {mode!r}")


def pcov_with_beam_errors(scn: Scenario, t_lin: float, base=None, **base_kw) -> float:
    """Average the base coverage over the four main/side lobe alignments.

    Each side q is aligned with probability F_q = erf(omega_q / (2 sqrt2
    sigma_q)) (half-Normal error vs. half beamwidth); the weights multiply
    across the two sides and sum to 1 exactly.
    """
    if scn.beam_error_std is None:
        raise ValueError("scenario has no beam_error_std")
    tier = _single_tier(scn)
    base = base or (pcov_highest_power if scn.association == ASSOC_POWER
                    else pcov_smallest_pathloss)
    aligned = []
    for pattern, sig in zip((tier.bs_pattern, scn.mt_pattern), scn.beam_error_std):
        if sig == 0.0:
            aligned.append(1.0)
        else:
            aligned.append(float(erf(pattern.beamwidth / (2.0 * math.sqrt(2.0) * sig))))
    f_bs, f_mt = aligned
    scn_plain = Scenario(tiers=scn.tiers, link=scn.link, los=scn.los,
                         nlos=scn.nlos, radio=scn.radio,
                         mt_pattern=scn.mt_pattern, association=scn.association,
                         beam_error_std=None, two_ball=scn.two_ball)
    total = 0.0
    for g_bs, w_bs in ((tier.bs_pattern.gain_max, f_bs),
                       (tier.bs_pattern.gain_min, 1.0 - f_bs)):
        for g_mt, w_mt in ((scn.mt_pattern.gain_max, f_mt),
                           (scn.mt_pattern.gain_min, 1.0 - f_mt)):
            if w_bs * w_mt == 0.0:
                continue
            total += w_bs * w_mt * base(scn_plain, t_lin, gain=g_bs * g_mt, **base_kw)
    return min(max(total, 0.0), 1.0)


def pcov_multitier(scn: Scenario, t_lin: float, mode: str = "exact",
                   quad: QuadratureSpec | None = None) -> float:
    """Coverage across tiers under highest-received-power association.

    Per-tier intensities superpose; each tier's EIRP P_k G_k^max folds into
    the Log-Normal location as an additive ln shift, so the single-tier
    expectation machinery applies term by term.
    """
    _no_beam_errors(scn)
    if scn.association != ASSOC_POWER:
        raise ValueError("multi-tier analysis assumes highest-power association")
    t_lin = _check_threshold(t_lin)
    mass = 0.0
    for tier in scn.tiers:
        mass += _tier_power_mass(scn, tier, t_lin, mode, None)
    return min(max(-math.expm1(-mass), 0.0), 1.0)


def rate(scn: Scenario, pcov=None, mode: str = "gcq",
         quad: QuadratureSpec | None = None) -> float:
    """Average rate BW/ln2 * int_0^inf Pcov(t)/(1+t) dt in bit/s.

    gcq       Gauss-Chebyshev on the mapped integrand (fast, fixed order);
    adaptive  substitution v = ln(1+t), then adaptive quadrature;
    highsnr   closed-form inner expectation (ln gamma0 >> 0 premise), only
              valid for smallest-path-loss association.
    """
    quad = quad or DEFAULT_QUADRATURE
    bw = scn.radio.bandwidth_hz
    if mode in ("gcq", "adaptive"):
        if pcov is None:
            raise ValueError("gcq/adaptive rate needs a pcov callable")
        if mode == "gcq":
            return bw / LN2 * gcq_rate(pcov, quad)

        def v_integrand(v):
            if v <= 0.0:
                return float(pcov(1e-300))
            if v > 690.0:
                # expm1 overflows here, and coverage at thresholds beyond
                # e^690 underflows to 0 for any finite SNR scale anyway
                return 0.0
            return float(pcov(math.expm1(v)))

        val, _ = integrate_semi_infinite(v_integrand, quad)
        return bw / LN2 * val
    if mode != "highsnr":
        raise ValueError(f"unknown rate mode {mode!r}")

    tier = _single_tier(scn)
    _no_beam_errors(scn)
    if scn.association != ASSOC_PATHLOSS:
        raise ValueError("highsnr rate applies to smallest-path-loss association")
    lam = tier.density
    c = IntensityConstants.from_params(scn.link, scn.los, scn.nlos, lam)
    gamma0 = _gamma0(scn, tier, None)
    if gamma0 < 100.0:
        warnings.warn("high-SNR rate premise is weak below ~20 dB of gamma0",
                      RuntimeWarning)

    total = 0.0
    for state, loss in (("los", scn.los), ("nlos", scn.nlos)):
        idx = 0 if state == "los" else 1
        sig = loss.sigma

        def integrand(r, _idx=idx, _loss=loss, _sig=sig):
            if r <= 0:
                return 0.0
            x = (_loss.kappa * r) ** _loss.beta
            probs = link_state_probs(scn.link, r)
            p_s = float(probs[_idx])
            if p_s == 0.0:
                return 0.0
            g = math.log(gamma0 / x) + _loss.mu
            inner = (g * (1.0 - 0.5 * erfc(g / (math.sqrt(2.0) * _sig)))
                     + _sig / math.sqrt(2.0 * math.pi) * math.exp(-0.5 * (g / _sig) ** 2))
            surv = math.exp(-(lambda_los(x, c) + lambda_nlos(x, c)))
            return inner * p_s * r * surv

        pts = _r_breakpoints(c, loss.beta, loss.kappa) + _tail_radii(gamma0, 1.0, loss)
        val, _ = integrate_semi_infinite(integrand, quad, breakpoints=pts)
        total += 2.0 * math.pi * lam * val
    return bw / LN2 * total


def coverage_curve(scn: Scenario, pcov, thresholds=None, **kw) -> CoverageCurve:
    """Sample a pcov op on a threshold grid (default -20..40 dB, 1 dB)."""
    ts = default_threshold_grid() if thresholds is None else np.asarray(thresholds, dtype=float)
    vals = [pcov(scn, float(t), **kw) for t in ts]
    return CoverageCurve(thresholds=tuple(ts), values=tuple(vals))
