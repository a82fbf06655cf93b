"""Two-ball approximate intensities, their shadowing expectation, and the
intensity-matching fit."""
import json
import math

import numpy as np
import pytest
from scipy import integrate, stats

from mmwcov.channel import MMWAVE_28GHZ, MMWAVE_73GHZ, path_loss
from mmwcov.intensity import LogNormalMoments
from mmwcov.twoball import (FIT_RECIPES, TABLE_PARAMS, TwoBallConstants,
                            TwoBallParams, approx_intensity,
                            approx_intensity_lognormal, fit_two_ball,
                            power_grid, table_fit_grid)

LAM = 1.0 / (math.pi * 100.0 ** 2)

TB = TwoBallParams(60.0, 190.0,
                   q_los=(0.85, 0.10, 0.0),
                   q_nlos=(0.15, 0.75, 0.0),
                   q_out=(0.0, 0.15, 1.0))


def band_prob(tb, state, r):
    qs = {"los": tb.q_los, "nlos": tb.q_nlos, "out": tb.q_out}[state]
    if r < tb.d1:
        return qs[0]
    if r < tb.d2:
        return qs[1]
    return qs[2]


def radial_mass(x, state, tb, lam, kappa, beta):
    if x <= 0.0:
        return 0.0
    r_top = x ** (1.0 / beta) / kappa
    pts = [d for d in (tb.d1, tb.d2) if d < r_top]
    val, _ = integrate.quad(lambda r: band_prob(tb, state, r) * r, 0.0, r_top,
                            points=pts or None, limit=200,
                            epsabs=0.0, epsrel=1e-11)
    return 2.0 * math.pi * lam * val


def test_approx_intensity_matches_radial_integral():
    rng = np.random.default_rng(41)
    for state in ("los", "nlos"):
        for preset in (MMWAVE_28GHZ, MMWAVE_73GHZ):
            loss = preset.los if state == "los" else preset.nlos
            for _ in range(40):
                x = path_loss(loss, rng.uniform(1.0, 600.0))
                got = approx_intensity(x, state, TB, LAM, loss.kappa, loss.beta)
                want = radial_mass(x, state, TB, LAM, loss.kappa, loss.beta)
                assert got == pytest.approx(want, rel=1e-8, abs=1e-300)


def test_approx_intensity_zero_at_zero_and_monotone():
    loss = MMWAVE_28GHZ.los
    assert approx_intensity(0.0, "los", TB, LAM, loss.kappa, loss.beta) == 0.0
    x = np.geomspace(1.0, 1e16, 4000)
    vals = approx_intensity(x, "los", TB, LAM, loss.kappa, loss.beta)
    assert np.all(np.diff(vals) >= 0.0)
    assert np.all(vals >= 0.0)


def test_uniform_band_probabilities_collapse_to_one_ball():
    q = 0.37
    tb = TwoBallParams(60.0, 190.0, q_los=(q, q, q),
                       q_nlos=(1 - q, 1 - q, 1 - q), q_out=(0.0, 0.0, 0.0))
    loss = MMWAVE_28GHZ.los
    for dist in (5.0, 59.0, 60.0, 150.0, 400.0):
        x = path_loss(loss, dist)
        want = math.pi * LAM * loss.kappa ** -2.0 * q * x ** (2.0 / loss.beta)
        got = approx_intensity(x, "los", tb, LAM, loss.kappa, loss.beta)
        assert got == pytest.approx(want, rel=1e-12)


def test_lognormal_expectation_matches_quadrature():
    rng = np.random.default_rng(43)
    loss = MMWAVE_28GHZ.nlos
    mom = LogNormalMoments(loss.mu, loss.sigma)
    for _ in range(25):
        x = path_loss(loss, rng.uniform(2.0, 500.0))
        got = approx_intensity_lognormal(x, "nlos", TB, LAM, loss.kappa,
                                         loss.beta, mom)
        want, _ = integrate.quad(
            lambda z: approx_intensity(x * math.exp(mom.mu + mom.sigma * z),
                                       "nlos", TB, LAM, loss.kappa, loss.beta)
            * stats.norm.pdf(z), -10.0, 10.0, limit=300,
            epsabs=1e-14, epsrel=1e-11)
        assert got == pytest.approx(want, rel=1e-8)


def test_lognormal_expectation_degenerates_without_shadowing():
    loss = MMWAVE_28GHZ.los
    mom = LogNormalMoments(0.0, 1e-9)
    for dist in (10.0, 100.0, 300.0):
        x = path_loss(loss, dist)
        plain = approx_intensity(x, "los", TB, LAM, loss.kappa, loss.beta)
        shadowed = approx_intensity_lognormal(x, "los", TB, LAM, loss.kappa,
                                              loss.beta, mom)
        assert shadowed == pytest.approx(plain, rel=1e-9)


def test_lognormal_expectation_monotone_on_table_params():
    tb = TABLE_PARAMS["mmwave-28ghz"]
    loss = MMWAVE_28GHZ.los
    mom = LogNormalMoments(loss.mu, loss.sigma)
    x = np.geomspace(1e2, 1e14, 200)
    vals = [approx_intensity_lognormal(float(v), "los", tb, LAM, loss.kappa,
                                       loss.beta, mom) for v in x]
    assert np.all(np.diff(vals) >= 0.0)


def test_table_params_frozen_values():
    tb28 = TABLE_PARAMS["mmwave-28ghz"]
    assert tb28.d1 == 56.9945
    assert tb28.d2 == 201.4371
    assert tb28.q_los == (0.8282, 0.1216, 0.0)
    assert tb28.q_nlos == (0.1718, 0.7424, 0.0)
    assert tb28.q_out == (0.0, 0.136, 1.0)
    tb73 = TABLE_PARAMS["mmwave-73ghz"]
    assert tb73.d1 == 53.6287
    assert tb73.d2 == 195.3275
    assert tb73.q_los == (0.8670, 0.1339, 0.0)


def test_two_ball_params_validation():
    with pytest.raises(ValueError):
        TwoBallParams(190.0, 60.0, (1, 0, 0), (0, 1, 0), (0, 0, 1))
    with pytest.raises(ValueError):
        TwoBallParams(60.0, 190.0, (0.5, 0, 0), (0.2, 1, 0), (0, 0, 1))
    with pytest.raises(ValueError):
        TwoBallParams(60.0, 190.0, (1.2, 0, 0), (-0.2, 1, 0), (0, 0, 1))
    with pytest.raises(ValueError):
        TwoBallParams(60.0, 190.0, (1, 0), (0, 1), (0, 0))


def test_constants_recompute_and_tamper_detection():
    loss = MMWAVE_28GHZ.los
    c = TwoBallConstants.from_params(TB, "los", LAM, loss.kappa)
    kwargs = dict(lam=c.lam, kappa=c.kappa, d1=c.d1, d2=c.d2, q=c.q,
                  g1=c.g1, g2=c.g2, g3=c.g3, g4=c.g4, g5=c.g5, g6=c.g6)
    TwoBallConstants(**kwargs)
    kwargs["g3"] = kwargs["g3"] + 1.0
    with pytest.raises(ValueError, match="g3"):
        TwoBallConstants(**kwargs)


def test_power_grid():
    g = power_grid(1.0, 1e6, 50, nu=-0.7)
    assert g[0] == pytest.approx(1.0, rel=1e-12)
    assert g[-1] == pytest.approx(1e6, rel=1e-12)
    assert len(g) == 50
    assert np.all(np.diff(g) > 0.0)
    # nu = -1 is exactly logarithmic spacing
    np.testing.assert_allclose(power_grid(2.0, 32.0, 5, nu=-1.0),
                               np.geomspace(2.0, 32.0, 5), rtol=1e-12)
    with pytest.raises(ValueError):
        power_grid(5.0, 1.0, 10)
    with pytest.raises(ValueError):
        power_grid(0.0, 1.0, 10)


def test_fit_recovers_synthetic_truth():
    preset = MMWAVE_28GHZ

    def exact(x):
        x = np.asarray(x, dtype=float)
        return (approx_intensity(x, "los", TB, LAM, preset.los.kappa,
                                 preset.los.beta)
                + approx_intensity(x, "nlos", TB, LAM, preset.nlos.kappa,
                                   preset.nlos.beta))

    lo = path_loss(preset.los, 1.0)
    hi = path_loss(preset.nlos, 800.0)
    grid = power_grid(lo, hi, 300, nu=-0.7)
    fit = fit_two_ball(exact, grid, lam=LAM, los=preset.los, nlos=preset.nlos,
                       n_starts=4, seed=1)
    p = fit.params
    assert p.d1 == pytest.approx(TB.d1, rel=1e-4)
    assert p.d2 == pytest.approx(TB.d2, rel=1e-4)
    for got, want in ((p.q_los, TB.q_los), (p.q_nlos, TB.q_nlos),
                      (p.q_out, TB.q_out)):
        np.testing.assert_allclose(got, want, atol=1e-4)
    assert not fit.stagnated
    assert fit.n_dropped == 0
    assert fit.resnorm < 1e-4
    # feasibility out of the box: simplex rows and bounds
    for band in range(3):
        total = p.q_los[band] + p.q_nlos[band] + p.q_out[band]
        assert abs(total - 1.0) <= 1e-9


def test_fit_report_is_serializable():
    def exact(x):
        x = np.asarray(x, dtype=float)
        return (approx_intensity(x, "los", TB, LAM, MMWAVE_28GHZ.los.kappa, 2.0)
                + approx_intensity(x, "nlos", TB, LAM,
                                   MMWAVE_28GHZ.nlos.kappa, 2.92))

    grid = power_grid(path_loss(MMWAVE_28GHZ.los, 1.0),
                      path_loss(MMWAVE_28GHZ.nlos, 500.0), 80)
    fit = fit_two_ball(exact, grid, lam=LAM, los=MMWAVE_28GHZ.los,
                       nlos=MMWAVE_28GHZ.nlos, n_starts=2, seed=5)
    doc = fit.as_dict()
    text = json.dumps(doc)
    back = json.loads(text)
    assert back["params"]["d1"] == fit.params.d1
    assert len(back["grid"]) == len(back["model"]) == 80


def test_fit_input_validation():
    grid = np.geomspace(1e2, 1e8, 50)
    with pytest.raises(ValueError):
        fit_two_ball(lambda x: np.zeros(10), grid, lam=LAM,
                     los=MMWAVE_28GHZ.los, nlos=MMWAVE_28GHZ.nlos)
    with pytest.raises(ValueError):
        fit_two_ball(lambda x: np.zeros_like(np.asarray(x)), grid, lam=LAM,
                     los=MMWAVE_28GHZ.los, nlos=MMWAVE_28GHZ.nlos)


def test_fit_recipes_cover_both_presets():
    assert set(FIT_RECIPES) >= {"mmwave-28ghz", "mmwave-73ghz"}
    for preset in (MMWAVE_28GHZ, MMWAVE_73GHZ):
        grid = table_fit_grid(preset)
        assert np.all(np.diff(grid) >= 0.0)
        assert grid[0] > 0.0
        assert grid[-1] == pytest.approx(
            path_loss(preset.nlos, FIT_RECIPES[preset.name]["r_far"]), rel=1e-12)
