"""Exact intensity machinery checked against its radial-integral definition.

The closed forms under test all describe the mass of the path-loss process
below a level x; the oracle recomputes that mass as 2 pi lam * integral of
(state probability at r) * r dr up to the distance where the path loss
crosses x, by adaptive quadrature.
"""
import math

import numpy as np
import pytest
from scipy import integrate, stats

from mmwcov.channel import (LinkStateParams, PathLossParams, MMWAVE_28GHZ,
                            kappa_from_floating_intercept, link_state_probs,
                            path_loss)
from mmwcov.intensity import (IntensityConstants, LogNormalMoments,
                              blockage_intensity, blockage_probability,
                              expected_intensity_numeric, lambda_deriv,
                              lambda_los, lambda_nlos,
                              lognormal_partial_moments, pathloss_cdf,
                              upsilon0, upsilon1)

LAM_150 = 1.0 / (math.pi * 150.0 ** 2)
CANON = IntensityConstants.from_params(MMWAVE_28GHZ.link, MMWAVE_28GHZ.los,
                                       MMWAVE_28GHZ.nlos, LAM_150)


def radial_mass(x, link, loss, lam, weight):
    """2 pi lam int_0^{x^{1/beta}/kappa} weight(r) r dr by quadrature."""
    if x <= 0.0:
        return 0.0
    r_top = x ** (1.0 / loss.beta) / loss.kappa
    rb = link.outage_break_distance
    pts = [rb] if math.isfinite(rb) and rb < r_top else None
    val, _ = integrate.quad(lambda r: weight(r) * r, 0.0, r_top,
                            points=pts, limit=200, epsabs=0.0, epsrel=1e-11)
    return 2.0 * math.pi * lam * val


def draw_constants(rng):
    link = LinkStateParams(delta_los=rng.uniform(0.005, 0.05),
                           gamma_los=rng.uniform(0.5, 1.0),
                           delta_out=rng.uniform(0.01, 0.1),
                           gamma_out=math.exp(rng.uniform(0.5, 6.0)))
    los = PathLossParams(kappa_from_floating_intercept(
        rng.uniform(50.0, 75.0), 2.0), 2.0)
    nlos = PathLossParams(kappa_from_floating_intercept(
        rng.uniform(65.0, 85.0), rng.uniform(2.2, 3.2)), rng.uniform(2.2, 3.2))
    # beta must match the kappa conversion, so redraw nlos coherently
    beta_n = rng.uniform(2.2, 3.2)
    nlos = PathLossParams(kappa_from_floating_intercept(
        rng.uniform(65.0, 85.0), beta_n), beta_n)
    lam = 1.0 / (math.pi * rng.uniform(30.0, 300.0) ** 2)
    return IntensityConstants.from_params(link, los, nlos, lam)


def test_upsilon_matches_radial_integral_on_random_draws():
    rng = np.random.default_rng(19)
    for _ in range(60):
        c = draw_constants(rng)
        for state in ("los", "nlos"):
            loss = c.state_loss(state)
            p_los_w = lambda r: link_state_probs(c.link, r)[0]
            not_out_w = lambda r: 1.0 - link_state_probs(c.link, r)[2]
            for _ in range(3):
                x = path_loss(loss, rng.uniform(1.0, 400.0))
                ref0 = radial_mass(x, c.link, loss, c.lam, p_los_w)
                ref1 = radial_mass(x, c.link, loss, c.lam, not_out_w)
                assert upsilon0(x, state, c) == pytest.approx(ref0, rel=1e-7)
                assert upsilon1(x, state, c) == pytest.approx(ref1, rel=1e-7)


def test_state_intensities_match_radial_integral():
    c = CANON
    p_l = lambda r: link_state_probs(c.link, r)[0]
    p_n = lambda r: link_state_probs(c.link, r)[1]
    for dist in (10.0, 100.0, 156.0, 200.0, 500.0):
        x_l = path_loss(c.los, dist)
        x_n = path_loss(c.nlos, dist)
        assert lambda_los(x_l, c) == pytest.approx(
            radial_mass(x_l, c.link, c.los, c.lam, p_l), rel=1e-8)
        assert lambda_nlos(x_n, c) == pytest.approx(
            radial_mass(x_n, c.link, c.nlos, c.lam, p_n), rel=1e-8)


def test_intensity_zero_at_zero():
    for state in ("los", "nlos"):
        assert upsilon0(0.0, state, CANON) == 0.0
        assert upsilon1(0.0, state, CANON) == 0.0
    assert lambda_los(0.0, CANON) == 0.0
    assert lambda_nlos(0.0, CANON) == 0.0
    assert pathloss_cdf(0.0, CANON) == 0.0


def test_intensities_nonnegative_and_nondecreasing_on_grid():
    x = np.geomspace(1e-2, 1e18, 10_000)
    for f in (lambda_los, lambda_nlos):
        vals = f(x, CANON)
        assert np.all(vals >= 0.0)
        assert np.all(np.diff(vals) >= -1e-12 * vals[1:])


def test_derivative_matches_finite_differences():
    rng = np.random.default_rng(23)
    checked = 0
    while checked < 200:
        c = draw_constants(rng)
        state = ("los", "nlos")[checked % 2]
        loss = c.state_loss(state)
        z = c.z[0 if state == "los" else 1]
        x = path_loss(loss, rng.uniform(2.0, 400.0))
        h = 1e-5 * x
        if abs(x - z) < 2.0 * h:  # bracket must not straddle the breakpoint
            continue
        fn = lambda_los if state == "los" else lambda_nlos
        hi, lo = fn(x + h, c), fn(x - h, c)
        if hi - lo <= 1e-10 * hi:
            # the difference has cancelled below ~6 digits; a central
            # difference carries no information about the density here
            continue
        fd = (hi - lo) / (2.0 * h)
        got = lambda_deriv(x, state, c)
        assert got == pytest.approx(fd, rel=1e-5)
        checked += 1


def test_continuity_at_the_breakpoint():
    rng = np.random.default_rng(29)
    cases = [CANON] + [draw_constants(rng) for _ in range(20)]
    for c in cases:
        for i, state in enumerate(("los", "nlos")):
            z = c.z[i]
            for f in (lambda_los, lambda_nlos):
                lo = f(z * (1.0 - 1e-12), c)
                hi = f(z * (1.0 + 1e-12), c)
                assert abs(hi - lo) < 1e-9


def test_no_outage_closed_forms():
    link = LinkStateParams(1.0 / 67.1, 1.0, 0.0, 1.0)
    c = IntensityConstants.from_params(link, MMWAVE_28GHZ.los,
                                       MMWAVE_28GHZ.nlos, LAM_150)
    assert c.no_outage
    for i, state in enumerate(("los", "nlos")):
        loss = c.state_loss(state)
        q = c.q[i]
        for dist in (5.0, 80.0, 800.0):
            x = path_loss(loss, dist)
            u = q * x ** (1.0 / loss.beta)
            want0 = c.k1 * (1.0 - math.exp(-u) - u * math.exp(-u))
            want1 = math.pi * c.lam * loss.kappa ** -2.0 * x ** (2.0 / loss.beta)
            assert upsilon0(x, state, c) == pytest.approx(want0, rel=1e-12)
            assert upsilon1(x, state, c) == pytest.approx(want1, rel=1e-12)


def test_upsilon1_is_the_disc_area_below_the_breakpoint():
    c = CANON
    for i, state in enumerate(("los", "nlos")):
        loss = c.state_loss(state)
        x = 0.5 * c.z[i]
        want = math.pi * c.lam * loss.kappa ** -2.0 * x ** (2.0 / loss.beta)
        assert upsilon1(x, state, c) == pytest.approx(want, rel=1e-12)


def test_upsilon1_limit_is_the_blockage_intensity():
    want = blockage_intensity(CANON.link, CANON.lam)
    for state in ("los", "nlos"):
        assert upsilon1(1e30, state, CANON) == pytest.approx(want, rel=1e-10)
    # hand value for the canonical outage parameters:
    # pi lam (156^2 + 2 * 30^2 * (1 + 5.2))
    assert want == pytest.approx(math.pi * LAM_150 * 35496.0, rel=1e-12)


def test_total_intensity_limit_matches_blockage_probability():
    total = lambda_los(1e30, CANON) + lambda_nlos(1e30, CANON)
    p_blk = blockage_probability(CANON.link, CANON.lam)
    assert math.exp(-total) == pytest.approx(p_blk, rel=1e-10)
    assert 1.0 - pathloss_cdf(1e30, CANON) == pytest.approx(p_blk, rel=1e-10)


def test_blockage_edge_cases():
    no_out = LinkStateParams(1.0 / 67.1, 1.0, 0.0, 1.0)
    assert blockage_probability(no_out, LAM_150) == 0.0
    assert blockage_probability(MMWAVE_28GHZ.link, 1e-300) == 1.0
    assert math.isinf(blockage_intensity(no_out, LAM_150))


def test_partial_moments_closed_form():
    mom = LogNormalMoments(0.0, 0.5)
    nu, y = 2.0 / 2.92, 1.7
    m, big_f, m_bar = lognormal_partial_moments(mom, nu, y)
    pdf = lambda a: stats.lognorm.pdf(a, s=mom.sigma, scale=math.exp(mom.mu))
    ref, _ = integrate.quad(lambda a: a ** nu * pdf(a), 0.0, y)
    assert m == pytest.approx(ref, abs=1e-10, rel=1e-10)
    assert big_f == pytest.approx(stats.lognorm.cdf(y, s=0.5), rel=1e-12)
    full = math.exp(nu * mom.mu + 0.5 * nu ** 2 * mom.sigma ** 2)
    assert m_bar == pytest.approx(full - ref, rel=1e-9)


def test_partial_moments_limits_and_random_draws():
    rng = np.random.default_rng(31)
    for _ in range(50):
        mom = LogNormalMoments(rng.uniform(-1.0, 1.0), rng.uniform(0.1, 2.0))
        nu = rng.uniform(0.0, 1.5)
        y = math.exp(rng.uniform(-2.0, 3.0))
        m, big_f, m_bar = lognormal_partial_moments(mom, nu, y)
        pdf = lambda a: stats.lognorm.pdf(a, s=mom.sigma,
                                          scale=math.exp(mom.mu))
        peak = math.exp(mom.mu)
        ref, _ = integrate.quad(lambda a: a ** nu * pdf(a), 0.0, y, limit=200,
                                points=[peak] if peak < y else None,
                                epsabs=1e-14, epsrel=1e-11)
        full = math.exp(nu * mom.mu + 0.5 * nu ** 2 * mom.sigma ** 2)
        assert m == pytest.approx(ref, rel=1e-8, abs=1e-12)
        assert m + m_bar == pytest.approx(full, rel=1e-12)
        # nu = 0 collapses the moment onto the CDF
        m0, f0, _ = lognormal_partial_moments(mom, 0.0, y)
        assert m0 == pytest.approx(f0, rel=1e-12)
    # y beyond any mass: the full moment and unit CDF
    mom = LogNormalMoments(0.3, 0.7)
    m, big_f, m_bar = lognormal_partial_moments(mom, 1.2, 1e12)
    assert m == pytest.approx(math.exp(1.2 * 0.3 + 0.5 * 1.2 ** 2 * 0.7 ** 2),
                              rel=1e-12)
    assert big_f == 1.0
    assert m_bar == pytest.approx(0.0, abs=1e-12)


def test_expected_intensity_degenerate_shadowing():
    tiny = LogNormalMoments(0.0, 1e-9)
    for dist in (20.0, 150.0, 400.0):
        x = path_loss(MMWAVE_28GHZ.los, dist)
        want = lambda_los(x, CANON) + lambda_nlos(x, CANON)
        got = expected_intensity_numeric(x, tiny, tiny, CANON)
        assert got == pytest.approx(want, rel=1e-9)


def test_expected_intensity_against_direct_quadrature():
    mom_l = LogNormalMoments(MMWAVE_28GHZ.los.mu, MMWAVE_28GHZ.los.sigma)
    mom_n = LogNormalMoments(MMWAVE_28GHZ.nlos.mu, MMWAVE_28GHZ.nlos.sigma)

    def oracle(x):
        total = 0.0
        for fn, mom in ((lambda_los, mom_l), (lambda_nlos, mom_n)):
            val, _ = integrate.quad(
                lambda z: fn(x * math.exp(mom.mu + mom.sigma * z), CANON)
                * stats.norm.pdf(z), -8.0, 8.0, limit=300, epsabs=1e-14,
                epsrel=1e-11)
            total += val
        return total

    # the expectation itself promises ~1e-8, so allow for its own error
    for dist in (30.0, 120.0, 300.0):
        x = path_loss(MMWAVE_28GHZ.los, dist)
        got = expected_intensity_numeric(x, mom_l, mom_n, CANON)
        assert got == pytest.approx(oracle(x), rel=5e-8)
    # monotone non-decreasing in x
    xs = np.geomspace(1e2, 1e14, 60)
    vals = [expected_intensity_numeric(float(x), mom_l, mom_n, CANON)
            for x in xs]
    assert np.all(np.diff(vals) >= 0.0)


def test_constants_recompute_and_tamper_detection():
    c = CANON
    assert c.k1 == pytest.approx(
        2.0 * math.pi * c.lam * c.link.gamma_los / c.link.delta_los ** 2,
        rel=1e-14)
    rb = c.link.outage_break_distance
    assert c.z[0] == pytest.approx((c.los.kappa * rb) ** c.los.beta, rel=1e-12)
    assert c.z[1] == pytest.approx((c.nlos.kappa * rb) ** c.nlos.beta, rel=1e-12)
    assert not c.no_outage
    with pytest.raises(ValueError):
        IntensityConstants(lam=c.lam, link=c.link, los=c.los, nlos=c.nlos,
                           k1=c.k1 * 1.01, k2=c.k2, r_const=c.r_const,
                           w_const=c.w_const, q=c.q, t=c.t, v=c.v, z=c.z)


def test_argument_validation():
    with pytest.raises(ValueError):
        LogNormalMoments(0.0, 0.0)
    with pytest.raises(ValueError):
        IntensityConstants.from_params(MMWAVE_28GHZ.link, MMWAVE_28GHZ.los,
                                       MMWAVE_28GHZ.nlos, 0.0)
    with pytest.raises(ValueError):
        upsilon0(-1.0, "los", CANON)
    with pytest.raises(ValueError):
        pathloss_cdf(-1.0, CANON)
    with pytest.raises(ValueError):
        lambda_deriv(0.0, "los", CANON)
    with pytest.raises(ValueError):
        lognormal_partial_moments(LogNormalMoments(0.0, 1.0), 1.0, 0.0)
    # outage decay without the amplification makes the state law ill-posed
    with pytest.raises(ValueError):
        IntensityConstants.from_params(
            LinkStateParams(0.01, 1.0, 0.05, 0.5),
            MMWAVE_28GHZ.los, MMWAVE_28GHZ.nlos, LAM_150)
