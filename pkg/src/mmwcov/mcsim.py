"""Monte Carlo validation engine.

Drops a Poisson field of base stations in a disc around the probe
receiver, assigns link states and shadowing, draws sectored-beam
orientations for every interfering station, applies the configured cell
association and accumulates SNR/SINR statistics with confidence
intervals.  Realization k always draws from the k-th child of a single
seed sequence, so results are bit-identical no matter how the work is
chunked across processes.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .analysis import (ASSOC_POWER, CoverageCurve, Scenario,
                       default_threshold_grid)
from .channel import link_state_probs, main_lobe_probability, noise_power
from .twoball import _resolve_workers

LOS, NLOS, OUT = 0, 1, 2

_Z95 = 1.959963984540054  # two-sided 95% normal quantile

_RECORD_KEYS = ("snr", "sinr", "association", "blockage")


def _min_window(scn: Scenario) -> float:
    """Smallest window that keeps truncation bias negligible.

    Five outage break distances when outage is enabled (beyond that the
    non-outage probability is ~1e-9); without outage there is no such
    scale, so fall back to ten cell radii.
    """
    rb = scn.link.outage_break_distance
    if math.isfinite(rb):
        return 5.0 * rb
    return 10.0 * max(t.cell_radius for t in scn.tiers)


@dataclass(frozen=True)
class SimConfig:
    """One simulation campaign: scenario, window, count, seed.

    window_radius 0 means "use the documented default" (see
    _min_window).  record selects which statistics the result carries;
    the random stream is the same for every choice.
    """

    scenario: Scenario
    window_radius: float = 0.0
    realizations: int = 100_000
    rng_seed: int = 1
    record: tuple = _RECORD_KEYS

    def __post_init__(self):
        if self.realizations < 1:
            raise ValueError("realizations must be >= 1")
        object.__setattr__(self, "record", tuple(self.record))
        unknown = set(self.record) - set(_RECORD_KEYS)
        if unknown:
            raise ValueError(f"unknown record keys: {sorted(unknown)}")
        if len(self.scenario.tiers) > 1 and self.scenario.association != ASSOC_POWER:
            raise ValueError("multi-tier runs use highest-received-power association")
        need = _min_window(self.scenario)
        if self.window_radius == 0.0:
            object.__setattr__(self, "window_radius", need)
        elif self.window_radius < need * (1.0 - 1e-9):
            raise ValueError(
                f"window_radius {self.window_radius:g} m risks truncation bias; "
                f"need >= {need:g} m")


@dataclass(frozen=True)
class Realization:
    """Full per-station record of a single deployment draw."""

    radius: np.ndarray        # distance to the probe receiver, m
    angle: np.ndarray         # rad, kept for completeness
    state: np.ndarray         # LOS / NLOS / OUT per station
    path_loss: np.ndarray     # linear; inf in outage
    shadow: np.ndarray        # linear shadowing gain
    bs_gain: np.ndarray       # interferer-side BS beam draw
    mt_gain: np.ndarray       # interferer-side MT beam draw
    tier: np.ndarray          # tier index per station
    serving: int              # index into the arrays, -1 when blocked
    blocked: bool
    snr: float
    sinr: float


@dataclass(frozen=True)
class SimResult:
    """Empirical counterpart of a CoverageCurve plus estimator metadata.

    Fields not selected in SimConfig.record are None.  serving_state_share
    is the fraction of realizations served by (LOS, NLOS, nothing).
    """

    thresholds: tuple
    realizations: int
    window_radius: float
    rng_seed: int
    snr_coverage: CoverageCurve | None = None
    snr_ci: tuple | None = None
    sinr_coverage: CoverageCurve | None = None
    sinr_ci: tuple | None = None
    rate_snr: float | None = None
    rate_snr_ci: float | None = None
    rate_sinr: float | None = None
    rate_sinr_ci: float | None = None
    blockage: float | None = None
    blockage_ci: float | None = None
    serving_state_share: tuple | None = None
    serving_tier_share: tuple | None = None


@dataclass(frozen=True)
class NoiseGap:
    """Paired-sample gap between SNR and SINR coverage per threshold."""

    thresholds: tuple
    snr_coverage: tuple
    sinr_coverage: tuple
    gap: tuple
    gap_ci: tuple


class _Prepared:
    """Per-run constants unpacked from the scenario once."""

    def __init__(self, cfg: SimConfig):
        scn = cfg.scenario
        self.window = cfg.window_radius
        area = math.pi * self.window ** 2
        self.link = scn.link
        self.noise = noise_power(scn.radio)
        self.bandwidth = scn.radio.bandwidth_hz
        self.kl, self.bl = scn.los.kappa, scn.los.beta
        self.kn, self.bn = scn.nlos.kappa, scn.nlos.beta
        self.ml, self.sl = scn.los.mu, scn.los.sigma
        self.mn, self.sn = scn.nlos.mu, scn.nlos.sigma
        self.mean_count = tuple(t.density * area for t in scn.tiers)
        self.power = np.array([t.tx_power_mw for t in scn.tiers])
        self.bs_max = np.array([t.bs_pattern.gain_max for t in scn.tiers])
        self.bs_min = np.array([t.bs_pattern.gain_min for t in scn.tiers])
        self.bs_main = np.array([main_lobe_probability(t.bs_pattern)
                                 for t in scn.tiers])
        self.bs_half = np.array([0.5 * t.bs_pattern.beamwidth for t in scn.tiers])
        mt = scn.mt_pattern
        self.mt_max, self.mt_min = mt.gain_max, mt.gain_min
        self.mt_main = main_lobe_probability(mt)
        self.mt_half = 0.5 * mt.beamwidth
        self.powered = scn.association == ASSOC_POWER
        self.beam = scn.beam_error_std
        # power * max BS gain, the association weight of Eq. 2 in the
        # multi-tier model (constant within a tier)
        self.assoc_weight = self.power * self.bs_max


def _draw_one(ctx: _Prepared, rng, zero_interference: bool):
    """One deployment: returns per-BS arrays plus the serving summary.

    The draw order is fixed (per tier: count, radius, angle, state,
    shadowing, BS beam, MT beam; then the two beam-error normals) so a
    given child seed always yields the same deployment regardless of
    association rule or record selection.
    """
    r_parts, ang_parts, u_parts, z_parts, ub_parts, um_parts, tid_parts = \
        [], [], [], [], [], [], []
    for k, mean in enumerate(ctx.mean_count):
        n = rng.poisson(mean)
        r_parts.append(ctx.window * np.sqrt(rng.random(n)))
        ang_parts.append(2.0 * math.pi * rng.random(n))
        u_parts.append(rng.random(n))
        z_parts.append(rng.standard_normal(n))
        ub_parts.append(rng.random(n))
        um_parts.append(rng.random(n))
        tid_parts.append(np.full(n, k, dtype=np.int64))
    r = np.concatenate(r_parts)
    ang = np.concatenate(ang_parts)
    u = np.concatenate(u_parts)
    z = np.concatenate(z_parts)
    ub = np.concatenate(ub_parts)
    um = np.concatenate(um_parts)
    tid = np.concatenate(tid_parts)
    if ctx.beam is not None:
        eps_bs = rng.standard_normal() * ctx.beam[0]
        eps_mt = rng.standard_normal() * ctx.beam[1]

    p_los, p_nlos, _ = link_state_probs(ctx.link, r)
    state = np.full(r.shape, OUT, dtype=np.int8)
    state[u < p_los + p_nlos] = NLOS
    state[u < p_los] = LOS

    loss = np.full(r.shape, np.inf)
    shadow = np.ones(r.shape)
    m = state == LOS
    loss[m] = (ctx.kl * r[m]) ** ctx.bl
    shadow[m] = np.exp(ctx.ml + ctx.sl * z[m])
    m = state == NLOS
    loss[m] = (ctx.kn * r[m]) ** ctx.bn
    shadow[m] = np.exp(ctx.mn + ctx.sn * z[m])

    bs_gain = np.where(ub < ctx.bs_main[tid], ctx.bs_max[tid], ctx.bs_min[tid])
    mt_gain = np.where(um < ctx.mt_main, ctx.mt_max, ctx.mt_min)

    if not np.isfinite(loss).any():
        return (r, ang, state, loss, shadow, bs_gain, mt_gain, tid,
                -1, True, 0.0, 0.0)

    # outage stations carry an infinite metric, so argmin lands on a
    # live one; ties break on the first (lowest) index
    if ctx.powered:
        metric = loss / (shadow * ctx.assoc_weight[tid])
    else:
        metric = loss
    serving = int(np.argmin(metric))
    k0 = int(tid[serving])

    if ctx.beam is None:
        g0_bs = ctx.bs_max[k0]
        g0_mt = ctx.mt_max
    else:
        g0_bs = ctx.bs_max[k0] if abs(eps_bs) <= ctx.bs_half[k0] else ctx.bs_min[k0]
        g0_mt = ctx.mt_max if abs(eps_mt) <= ctx.mt_half else ctx.mt_min
    u0 = ctx.power[k0] * g0_bs * g0_mt * shadow[serving] / loss[serving]

    # outage terms vanish on their own (finite / inf)
    w = ctx.power[tid] * bs_gain * mt_gain * shadow / loss
    w[serving] = 0.0
    i_agg = 0.0 if zero_interference else float(np.sum(w))

    snr = u0 / ctx.noise
    sinr = u0 / (ctx.noise + i_agg)
    return (r, ang, state, loss, shadow, bs_gain, mt_gain, tid,
            serving, False, snr, sinr)


def _run_chunk(cfg: SimConfig, start: int, stop: int, zero_interference: bool):
    """Realizations [start, stop) of the campaign, in index order."""
    ctx = _Prepared(cfg)
    children = np.random.SeedSequence(cfg.rng_seed).spawn(cfg.realizations)
    m = stop - start
    snr = np.empty(m)
    sinr = np.empty(m)
    serve_state = np.empty(m, dtype=np.int8)
    serve_tier = np.empty(m, dtype=np.int8)
    for j in range(m):
        rng = np.random.default_rng(children[start + j])
        out = _draw_one(ctx, rng, zero_interference)
        serving, blocked = out[8], out[9]
        snr[j], sinr[j] = out[10], out[11]
        serve_state[j] = -1 if blocked else out[2][serving]
        serve_tier[j] = -1 if blocked else out[7][serving]
    return snr, sinr, serve_state, serve_tier


def _collect(cfg: SimConfig, zero_interference: bool, workers=None):
    n = cfg.realizations
    workers = _resolve_workers(workers, n)
    if workers <= 1 or n < 256:
        return _run_chunk(cfg, 0, n, zero_interference)
    bounds = np.linspace(0, n, workers + 1).astype(int)
    args = [(cfg, int(a), int(b), zero_interference)
            for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_run_chunk_star, args))
    return tuple(np.concatenate([p[i] for p in parts]) for i in range(4))


def _run_chunk_star(args):
    return _run_chunk(*args)


def _binom_ci(p, n):
    return _Z95 * np.sqrt(p * (1.0 - p) / n)


def _coverage(values: np.ndarray, thresholds: np.ndarray):
    cov = np.array([np.count_nonzero(values >= t) for t in thresholds],
                   dtype=float) / values.size
    return cov, _binom_ci(cov, values.size)


def _rate(values: np.ndarray, bandwidth: float):
    per = bandwidth * np.log2(1.0 + values)
    half = _Z95 * per.std(ddof=1) / math.sqrt(per.size) if per.size > 1 else 0.0
    return float(per.mean()), float(half)


def realize(cfg: SimConfig, index: int) -> Realization:
    """Replay realization `index` of the campaign in full detail."""
    if not 0 <= index < cfg.realizations:
        raise ValueError("realization index out of range")
    ctx = _Prepared(cfg)
    # spawn(n)[i] appends (i,) to the parent spawn key, so the direct
    # construction replays stream i without materializing all n children
    child = np.random.SeedSequence(cfg.rng_seed, spawn_key=(index,))
    out = _draw_one(ctx, np.random.default_rng(child), False)
    return Realization(radius=out[0], angle=out[1], state=out[2],
                       path_loss=out[3], shadow=out[4], bs_gain=out[5],
                       mt_gain=out[6], tier=out[7], serving=out[8],
                       blocked=out[9], snr=out[10], sinr=out[11])


def simulate(cfg: SimConfig, thresholds=None, workers=None) -> SimResult:
    """Run the campaign and aggregate the statistics in SimConfig.record.

    Coverage curves are empirical tail frequencies of SNR and SINR on
    the threshold grid (default -20..40 dB); rates are mean Shannon
    rates; all intervals are 95% normal/binomial half-widths.
    """
    thr = default_threshold_grid() if thresholds is None else np.asarray(
        thresholds, dtype=float)
    snr, sinr, serve_state, serve_tier = _collect(cfg, False, workers)
    n = cfg.realizations
    bw = cfg.scenario.radio.bandwidth_hz
    rec = {}
    if "snr" in cfg.record:
        cov, ci = _coverage(snr, thr)
        rec["snr_coverage"] = CoverageCurve(thr, cov)
        rec["snr_ci"] = tuple(ci)
        rec["rate_snr"], rec["rate_snr_ci"] = _rate(snr, bw)
    if "sinr" in cfg.record:
        cov, ci = _coverage(sinr, thr)
        rec["sinr_coverage"] = CoverageCurve(thr, cov)
        rec["sinr_ci"] = tuple(ci)
        rec["rate_sinr"], rec["rate_sinr_ci"] = _rate(sinr, bw)
    if "blockage" in cfg.record:
        p = np.count_nonzero(serve_state < 0) / n
        rec["blockage"] = float(p)
        rec["blockage_ci"] = float(_binom_ci(p, n))
    if "association" in cfg.record:
        rec["serving_state_share"] = tuple(
            float(np.count_nonzero(serve_state == s) / n) for s in (LOS, NLOS, -1))
        rec["serving_tier_share"] = tuple(
            float(np.count_nonzero(serve_tier == k) / n)
            for k in range(len(cfg.scenario.tiers)))
    return SimResult(thresholds=tuple(float(t) for t in thr),
                     realizations=n, window_radius=cfg.window_radius,
                     rng_seed=cfg.rng_seed, **rec)


def noise_limited_gap(cfg: SimConfig, thresholds=None, workers=None,
                      zero_interference: bool = False) -> NoiseGap:
    """Per-threshold |SINR coverage - SNR coverage| as a paired sample.

    SINR <= SNR per realization, so the per-realization indicator
    difference is a Bernoulli variable; its mean is the gap and its
    binomial half-width the confidence interval.  zero_interference
    short-circuits the aggregate interference to exactly 0 (the gap
    must then vanish identically).
    """
    thr = default_threshold_grid() if thresholds is None else np.asarray(
        thresholds, dtype=float)
    snr, sinr, _, _ = _collect(cfg, zero_interference, workers)
    n = snr.size
    snr_cov = np.empty(thr.size)
    sinr_cov = np.empty(thr.size)
    gap = np.empty(thr.size)
    ci = np.empty(thr.size)
    for i, t in enumerate(thr):
        a = snr >= t
        b = sinr >= t
        snr_cov[i] = np.count_nonzero(a) / n
        sinr_cov[i] = np.count_nonzero(b) / n
        d = a & ~b
        pd = np.count_nonzero(d) / n
        gap[i] = pd
        ci[i] = _binom_ci(pd, n)
    return NoiseGap(thresholds=tuple(float(t) for t in thr),
                    snr_coverage=tuple(snr_cov), sinr_coverage=tuple(sinr_cov),
                    gap=tuple(gap), gap_ci=tuple(ci))


def simulate_multitier(cfg: SimConfig, thresholds=None, workers=None) -> SimResult:
    """simulate() with the multi-tier precondition made explicit."""
    if len(cfg.scenario.tiers) < 2:
        raise ValueError("simulate_multitier needs at least two tiers")
    return simulate(cfg, thresholds, workers)
