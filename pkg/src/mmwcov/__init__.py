"""Coverage and rate analysis for blockage-limited cellular networks.

Closed-form link intensities, coverage/rate integrals for both cell
association rules, a two-ball piecewise approximation with its fitting
machinery, and a reproducible Monte Carlo engine for validation.
"""

from .analysis import (ASSOC_PATHLOSS, ASSOC_POWER, CoverageCurve, Scenario,
                       TierConfig, coverage_curve, default_threshold_grid,
                       pcov_highest_power, pcov_iid_fading, pcov_multitier,
                       pcov_smallest_pathloss, pcov_with_beam_errors, rate)
from .channel import (MMWAVE_28GHZ, MMWAVE_73GHZ, PRESETS, UWAVE_2_5GHZ,
                      AntennaPattern, LinkStateParams, PathLossParams, Preset,
                      RadioConfig, kappa_from_floating_intercept,
                      link_state_probs, noise_power, path_loss)
from .intensity import (IntensityConstants, blockage_intensity,
                        blockage_probability, expected_intensity_numeric,
                        lambda_deriv, lambda_los, lambda_nlos,
                        lognormal_partial_moments, pathloss_cdf, upsilon0,
                        upsilon1)
from .mcsim import (NoiseGap, Realization, SimConfig, SimResult,
                    noise_limited_gap, realize, simulate, simulate_multitier)
from .twoball import (FIT_RECIPES, TABLE_PARAMS, TwoBallFit, TwoBallParams,
                      approx_intensity, approx_intensity_lognormal,
                      fit_table_preset, fit_two_ball, power_grid)

__version__ = "0.1.0"

__all__ = [
    "ASSOC_PATHLOSS", "ASSOC_POWER", "CoverageCurve", "Scenario", "TierConfig",
    "coverage_curve", "default_threshold_grid", "pcov_highest_power",
    "pcov_iid_fading", "pcov_multitier", "pcov_smallest_pathloss",
    "pcov_with_beam_errors", "rate",
    "MMWAVE_28GHZ", "MMWAVE_73GHZ", "PRESETS", "UWAVE_2_5GHZ",
    "AntennaPattern", "LinkStateParams", "PathLossParams", "Preset",
    "RadioConfig", "kappa_from_floating_intercept", "link_state_probs",
    "noise_power", "path_loss",
    "IntensityConstants", "blockage_intensity", "blockage_probability",
    "expected_intensity_numeric", "lambda_deriv", "lambda_los", "lambda_nlos",
    "lognormal_partial_moments", "pathloss_cdf", "upsilon0", "upsilon1",
    "NoiseGap", "Realization", "SimConfig", "SimResult", "noise_limited_gap",
    "realize", "simulate", "simulate_multitier",
    "FIT_RECIPES", "TABLE_PARAMS", "TwoBallFit", "TwoBallParams",
    "approx_intensity", "approx_intensity_lognormal", "fit_table_preset",
    "fit_two_ball", "power_grid",
    "__version__",
]
