"""Channel primitives: three-state link model, close-in path loss, sectored
antenna pattern, shadowing parameterization and thermal noise.

Everything is stored and returned in linear units (power ratios, mW for
powers); dB shows up only in constructors and converters.  Distances are in
meters, angles in radians.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "LinkStateParams",
    "PathLossParams",
    "AntennaPattern",
    "RadioConfig",
    "Preset",
    "PRESETS",
    "MMWAVE_28GHZ",
    "MMWAVE_73GHZ",
    "UWAVE_2_5GHZ",
    "link_state_probs",
    "path_loss",
    "kappa_from_floating_intercept",
    "noise_power",
    "sectored_gain",
    "main_lobe_probability",
    "db_to_nats",
    "dbm_to_mw",
]

LN10 = math.log(10.0)


def db_to_nats(value_db: float) -> float:
    """dB -> natural-log units (used for Log-Normal shadowing moments)."""
    return value_db * LN10 / 10.0


def dbm_to_mw(value_dbm: float) -> float:
    return 10.0 ** (value_dbm / 10.0)


@dataclass(frozen=True)
class LinkStateParams:
    """Constants of the three-state (LOS / NLOS / outage) link model.

    delta_los, delta_out are decay rates in 1/m; gamma_los, gamma_out are the
    dimensionless amplitudes.  The outage curve is
    p_out(r) = max(0, 1 - gamma_out * exp(-delta_out * r)).
    """

    delta_los: float
    gamma_los: float
    delta_out: float
    gamma_out: float

    def __post_init__(self):
        if self.delta_los < 0 or self.delta_out < 0:
            raise ValueError("decay rates must be non-negative")
        if not 0.0 < self.gamma_los <= 1.0:
            raise ValueError("gamma_los must be in (0, 1]")

    @property
    def outage_break_distance(self) -> float:
        """Distance where p_out leaves zero; inf when outage is disabled."""
        if self.delta_out <= 0.0 or self.gamma_out <= 1.0:
            return math.inf
        return math.log(self.gamma_out) / self.delta_out


@dataclass(frozen=True)
class PathLossParams:
    """Close-in path-loss law l(r) = (kappa * r)**beta plus the per-state
    Log-Normal shadowing moments in dB."""

    kappa: float
    beta: float
    mu_db: float = 0.0
    sigma_db: float = 1e-9

    def __post_init__(self):
        if self.kappa <= 0 or self.beta <= 0:
            raise ValueError("kappa and beta must be positive")
        if self.sigma_db <= 0:
            raise ValueError("sigma_db must be positive")

    @property
    def mu(self) -> float:
        return db_to_nats(self.mu_db)

    @property
    def sigma(self) -> float:
        return db_to_nats(self.sigma_db)


@dataclass(frozen=True)
class AntennaPattern:
    """Two-level sectored pattern: gain_max inside the main lobe, gain_min
    outside.  beamwidth is in radians."""

    gain_max: float
    gain_min: float
    beamwidth: float

    def __post_init__(self):
        if not self.gain_max >= self.gain_min > 0:
            raise ValueError("need gain_max >= gain_min > 0")
        if not 0.0 < self.beamwidth <= 2.0 * math.pi:
            raise ValueError("beamwidth must be in (0, 2*pi]")

    @staticmethod
    def from_db(gain_max_db: float, gain_min_db: float, beamwidth_deg: float) -> "AntennaPattern":
        return AntennaPattern(10.0 ** (gain_max_db / 10.0),
                              10.0 ** (gain_min_db / 10.0),
                              math.radians(beamwidth_deg))


@dataclass(frozen=True)
class RadioConfig:
    tx_power_dbm: float
    bandwidth_hz: float
    noise_figure_db: float

    def __post_init__(self):
        if self.bandwidth_hz <= 0:
            raise ValueError("bandwidth_hz must be positive")

    @property
    def tx_power_mw(self) -> float:
        return dbm_to_mw(self.tx_power_dbm)


def link_state_probs(params: LinkStateParams, r):
    """(p_los, p_nlos, p_out) at distance r (meters, scalar or array).

    p_out = max(0, 1 - gamma_out exp(-delta_out r)); the remaining mass is
    split gamma_los exp(-delta_los r) : 1 - gamma_los exp(-delta_los r)
    between LOS and NLOS, so the three sum to 1 up to one rounding.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("distance must be >= 0")
    p_out = np.maximum(0.0, 1.0 - params.gamma_out * np.exp(-params.delta_out * r))
    los_given_link = params.gamma_los * np.exp(-params.delta_los * r)
    p_los = (1.0 - p_out) * los_given_link
    p_nlos = (1.0 - p_out) * (1.0 - los_given_link)
    return p_los, p_nlos, p_out


def path_loss(params: PathLossParams, r):
    """Dimensionless propagation loss (kappa * r)**beta; requires r > 0."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("path loss is defined for r > 0 only")
    out = (params.kappa * r) ** params.beta
    return float(out) if out.ndim == 0 else out


def kappa_from_floating_intercept(alpha_db: float, beta: float) -> float:
    """Convert a floating-intercept law alpha_db + 10*beta*log10(r) into the
    close-in constant kappa with (kappa * r)**beta = 10**(alpha_db/10) * r**beta."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    return 10.0 ** (alpha_db / (10.0 * beta))


def noise_power(cfg: RadioConfig) -> float:
    """Thermal noise power in linear mW: -174 dBm/Hz + 10 log10(BW) + F."""
    noise_dbm = -174.0 + 10.0 * math.log10(cfg.bandwidth_hz) + cfg.noise_figure_db
    return dbm_to_mw(noise_dbm)


def sectored_gain(pattern: AntennaPattern, theta):
    """Linear gain at off-boresight angle theta: the main lobe applies for
    |theta| <= beamwidth, the side lobe elsewhere.  theta is wrapped to
    [-pi, pi) first."""
    theta = np.asarray(theta, dtype=float)
    wrapped = np.mod(theta + np.pi, 2.0 * np.pi) - np.pi
    out = np.where(np.abs(wrapped) <= pattern.beamwidth, pattern.gain_max, pattern.gain_min)
    return float(out) if out.ndim == 0 else out


def main_lobe_probability(pattern: AntennaPattern) -> float:
    """Weight of the max-gain atom in the interfering-link gain mixture
    (a randomly oriented interferer hits the main lobe w.p. beamwidth/(2 pi))."""
    return pattern.beamwidth / (2.0 * math.pi)


@dataclass(frozen=True)
class Preset:
    """A named carrier setup: blockage constants plus LOS/NLOS loss laws."""

    name: str
    carrier_ghz: float
    link: LinkStateParams
    los: PathLossParams
    nlos: PathLossParams


# Canonical blockage constants for the mmWave presets: break distance
# ln(gamma_out)/delta_out = 5.2 * 30 = 156 m.
_MMWAVE_LINK = LinkStateParams(delta_los=1.0 / 67.1, gamma_los=1.0,
                               delta_out=1.0 / 30.0, gamma_out=math.exp(5.2))

MMWAVE_28GHZ = Preset(
    name="mmwave-28ghz",
    carrier_ghz=28.0,
    link=_MMWAVE_LINK,
    los=PathLossParams(kappa=kappa_from_floating_intercept(61.4, 2.0), beta=2.0, sigma_db=5.8),
    nlos=PathLossParams(kappa=kappa_from_floating_intercept(72.0, 2.92), beta=2.92, sigma_db=8.7),
)

MMWAVE_73GHZ = Preset(
    name="mmwave-73ghz",
    carrier_ghz=73.0,
    link=_MMWAVE_LINK,
    los=PathLossParams(kappa=kappa_from_floating_intercept(69.8, 2.0), beta=2.0, sigma_db=5.8),
    nlos=PathLossParams(kappa=kappa_from_floating_intercept(82.7, 2.69), beta=2.69, sigma_db=8.7),
)

# Single-state microwave baseline: no outage, and delta_los large enough that
# the LOS probability underflows to zero for any r of interest, which reduces
# the three-state machinery to an always-NLOS network.  The loss law is the
# floating intercept 22.7 + 36.7 log10(r) + 26 log10(2.5) dB.
_UWAVE_ALPHA_DB = 22.7 + 26.0 * math.log10(2.5)

UWAVE_2_5GHZ = Preset(
    name="uwave-2.5ghz",
    carrier_ghz=2.5,
    link=LinkStateParams(delta_los=1e12, gamma_los=1.0, delta_out=0.0, gamma_out=1.0),
    los=PathLossParams(kappa=kappa_from_floating_intercept(_UWAVE_ALPHA_DB, 3.67), beta=3.67, sigma_db=4.0),
    nlos=PathLossParams(kappa=kappa_from_floating_intercept(_UWAVE_ALPHA_DB, 3.67), beta=3.67, sigma_db=4.0),
)

PRESETS = {p.name: p for p in (MMWAVE_28GHZ, MMWAVE_73GHZ, UWAVE_2_5GHZ)}
