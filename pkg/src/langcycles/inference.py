"""Model fitting and comparison for article-change histories.

Provides the population-level Poisson baseline, individual-based scenarios
(child-based, usage-based, network-structured) whose origin-fixation
parameters are derived from Wright-Fisher quantities, AICc model
comparison, parameter sweeps and Monte Carlo goodness of fit.

Free-parameter counting: the baseline has k = 1 (the mean rate); derived
scenarios are counted with k = 2 (innovation rate and selection strength),
with structural settings (R, T_M, nu, epsilon) treated as fixed hypotheses
per curve.  Counts are recorded in every report.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Mapping

import numpy as np
from scipy.optimize import minimize_scalar

from .data_model import changes_count, path_stages
from .demography import DemographyFit, mean_population_sizes
from .fixation import (DiffusionParams, NetworkSpec, fixation_probability,
                       fixation_time_moments, sampled_effective_population_size)
from .likelihood import (DEFAULT_INVERSION, InversionConfig, NumericalError,
                         OriginFixationParams, dataset_log_likelihood,
                         language_log_likelihood, path_rates,
                         poisson_count_distribution)

N_STAGES = 4
DEFAULT_RATE_BOUNDS = (1e-7, 1e-1)     # per year, for the baseline rate
DEFAULT_ETA_BOUNDS = (1e-15, 1e-1)     # per interaction, for eta_bar
SEARCH_REL_TOL = 1e-4


def aicc(k: int, n: int, log_likelihood: float) -> float:
    """Akaike information criterion corrected for small samples."""
    if n <= k + 1:
        raise ValueError(f"AICc needs n > k + 1 (got n={n}, k={k})")
    return 2.0 * k - 2.0 * log_likelihood + 2.0 * k * (k + 1) / (n - k - 1)


@dataclass(frozen=True)
class WrightFisherParams:
    """Individual-level scenario: community size, network, interaction, bias.

    ``N = None`` takes each language's demographic mean size; a number
    fixes one size for all languages.  ``nu = None`` means a homogeneous
    population.  ``s = math.inf`` selects the strong-selection limit
    (every innovation fixes instantly).  ``epsilon`` may exceed 1 when a
    (R, T_M) combination implies it; such points are flagged unphysical.
    """

    R: float
    epsilon: float = 1.0
    eta_bar: float | None = None
    s: float = 0.0
    nu: float | None = None
    z_min: int = 2
    N: float | None = None

    def __post_init__(self):
        if not self.R > 0:
            raise ValueError("interaction rate R must be positive")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if math.isnan(self.s):
            raise ValueError("selection strength must not be NaN")
        if self.s == -math.inf:
            raise ValueError("s = -inf leaves no route to fixation")

    @property
    def memory_time(self) -> float:
        return 1.0 / (self.R * self.epsilon)


@dataclass(frozen=True)
class FitReport:
    """Outcome of one model fit: MLE, information criteria, diagnostics."""

    article: str
    model: str
    mle_value: float
    log_likelihood: float
    k: int
    n: int
    aicc: float
    delta_aicc: float | None = None
    reference: str | None = None
    p_value: float | None = None
    overdispersion_changes: float | None = None
    overdispersion_binary: float | None = None
    flags: tuple[str, ...] = ()
    settings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _maximize_on_log_axis(objective, lo: float, hi: float,
                          rel_tol: float = SEARCH_REL_TOL):
    """Bracketed 1-D maximisation of objective(x) over x in [lo, hi], log axis.

    Returns (x_opt, value, boundary_flag); the boundary flag is set when
    the optimum sits against either search bound.
    """
    lls, lhs = math.log(lo), math.log(hi)
    res = minimize_scalar(lambda lx: -objective(math.exp(lx)),
                          bounds=(lls, lhs), method="bounded",
                          options={"xatol": rel_tol})
    x = math.exp(res.x)
    at_bound = res.x - lls < 4 * rel_tol or lhs - res.x < 4 * rel_tol
    return x, -res.fun, at_bound


def fit_poisson_baseline(histories, article: str, fractions,
                         bounds: tuple[float, float] = DEFAULT_RATE_BOUNDS,
                         cfg: InversionConfig = DEFAULT_INVERSION) -> FitReport:
    """Maximum-likelihood Poisson baseline (instant fixation).

    Fits the single mean rate with stage rates ``omega_bar / (4 f_i)`` by
    a bracketed search on the log axis; an optimum at a search bound is
    flagged, not fatal.
    """
    histories = list(histories)
    f = tuple(fractions)

    def lnL(omega_bar):
        params = OriginFixationParams.from_mean_rate(omega_bar, f)
        return dataset_log_likelihood(histories, article, params, cfg)

    omega, value, at_bound = _maximize_on_log_axis(lnL, *bounds)
    n = len(histories)
    return FitReport(
        article=article, model="baseline", mle_value=omega,
        log_likelihood=value, k=1, n=n, aicc=aicc(1, n, value),
        flags=("mle_at_search_boundary",) if at_bound else (),
        settings={"rate_bounds": list(bounds),
                  "stage_rates": "omega_bar / (4 f_i)"},
    )


def _language_scenario_basis(wf: WrightFisherParams, size: float, fractions,
                             ne_ratio: float):
    """Per-language scenario quantities independent of eta_bar.

    Returns (base stage rates at eta_bar = 1, mean fixation, var fixation,
    poisson flag).
    """
    f = tuple(fractions)
    if wf.s == math.inf:
        # strong-selection limit: every innovation fixes, instantly
        base = tuple(size * wf.R / (N_STAGES * fi) for fi in f)
        return base, 0.0, 0.0, True
    t_m = wf.memory_time
    ne = size * ne_ratio / wf.epsilon
    diff = DiffusionParams(Ne=ne, s=wf.s, T_M=t_m)
    q = fixation_probability(min(wf.epsilon / size, 1.0), diff)
    if q <= 0.0:
        raise NumericalError(
            f"fixation probability underflowed at Ne={ne:.3g}, s={wf.s}")
    moments = fixation_time_moments(diff)
    base = tuple(size * wf.R * q / (N_STAGES * fi) for fi in f)
    return base, moments.mean, moments.variance, False


def scenario_params(histories, article: str, wf: WrightFisherParams,
                    sizes: Mapping[str, float], fractions, eta_bar: float,
                    seed: int = 0,
                    ne_table: Mapping[str, float] | None = None,
                    ) -> dict[str, OriginFixationParams]:
    """Per-language origin-fixation parameters implied by a scenario.

    Innovation rates are stage-dependent, ``eta_i = eta_bar / (4 f_i)``,
    so the emergent origination rates keep the stationary distribution of
    the baseline.  ``sizes`` maps language name to mean community size;
    ``ne_table`` optionally supplies per-language network effective-size
    ratios already sampled (see :func:`network_ne_ratios`).
    """
    out = {}
    for idx, h in enumerate(histories):
        size = wf.N if wf.N is not None else sizes[h.name]
        ratio = 1.0
        if wf.nu is not None:
            if ne_table is not None:
                ratio = ne_table[h.name]
            else:
                ratio = _sample_ne_ratio(size, wf.nu, wf.z_min, seed, idx)
        base, mean_fix, var_fix, poisson = _language_scenario_basis(
            wf, size, fractions, ratio)
        out[h.name] = OriginFixationParams(
            stage_rates=tuple(eta_bar * b for b in base),
            mean_fixation=mean_fix, var_fixation=var_fix,
            poisson_limit=poisson)
    return out


def _sample_ne_ratio(size: float, nu: float, z_min: int,
                     seed: int, lang_index: int) -> float:
    """Sampled z-moment ratio mean(z)^2 / mean(z^2) for one community.

    The stream is derived from (seed, language index, nu) only, so a
    sweep over selection strengths reuses one network realisation per
    language and curve.
    """
    n = max(int(size), z_min + 2)
    spec = NetworkSpec(N=n, nu=nu, z_min=z_min, epsilon=1.0)
    rng = np.random.default_rng([seed, lang_index, int(round(nu * 1e9))])
    return sampled_effective_population_size(spec, rng) / n


def network_ne_ratios(histories, sizes: Mapping[str, float], nu: float,
                      z_min: int = 2, seed: int = 0) -> dict[str, float]:
    """Precompute per-language network size ratios for a sweep."""
    return {h.name: _sample_ne_ratio(
        sizes[h.name], nu, z_min, seed, idx)
        for idx, h in enumerate(histories)}


def evaluate_scenario(histories, article: str, wf: WrightFisherParams,
                      demography: DemographyFit | Mapping[str, float],
                      fractions, baseline: FitReport | None = None,
                      eta_bounds: tuple[float, float] = DEFAULT_ETA_BOUNDS,
                      seed: int = 0, model: str = "scenario",
                      cfg: InversionConfig = DEFAULT_INVERSION,
                      ne_table: Mapping[str, float] | None = None) -> FitReport:
    """Fit a Wright-Fisher scenario by maximising over the innovation rate.

    All structural settings (R, epsilon or memory time, s, nu) are held
    fixed; only the mean innovation rate per interaction is free, found by
    the same bracketed log-axis search as the baseline rate.  The report
    carries k = 2 (innovation rate and selection strength).
    """
    histories = list(histories)
    sizes = (demography if isinstance(demography, Mapping)
             else mean_population_sizes(histories, demography))
    if wf.nu is not None and ne_table is None:
        ne_table = network_ne_ratios(histories, sizes, wf.nu, wf.z_min, seed)
    if wf.eta_bar is not None:
        eta, value, at_bound = wf.eta_bar, None, False
        params = scenario_params(histories, article, wf, sizes, fractions,
                                 wf.eta_bar, seed, ne_table)
        value = sum(language_log_likelihood(h, article, params[h.name], cfg)
                    for h in histories)
    else:
        def lnL(eta_bar):
            params = scenario_params(histories, article, wf, sizes,
                                     fractions, eta_bar, seed, ne_table)
            return sum(language_log_likelihood(h, article, params[h.name],
                                               cfg) for h in histories)

        eta, value, at_bound = _maximize_on_log_axis(lnL, *eta_bounds)

    flags = []
    if at_bound:
        flags.append("mle_at_search_boundary")
    if wf.epsilon > 1.0:
        flags.append("unphysical_epsilon")
    n = len(histories)
    k = 2
    a = aicc(k, n, value)
    return FitReport(
        article=article, model=model, mle_value=eta, log_likelihood=value,
        k=k, n=n, aicc=a,
        delta_aicc=None if baseline is None else a - baseline.aicc,
        reference=None if baseline is None else baseline.model,
        flags=tuple(flags),
        settings={
            "R": wf.R, "epsilon": wf.epsilon, "s": wf.s,
            "memory_time": wf.memory_time, "nu": wf.nu, "z_min": wf.z_min,
            "N": wf.N, "seed": seed,
            "innovation_rates": "eta_i = eta_bar / (4 f_i)",
        },
    )


@dataclass(frozen=True)
class SweepRow:
    """One grid point of a sweep: coordinates plus report or failure."""

    coords: dict
    report: FitReport | None
    error: str | None = None


def child_grid(s_values, R: float = 0.04, epsilon: float = 1.0,
               nu: float | None = None, z_min: int = 2):
    """Grid over selection strength for generation-paced learners."""
    return [({"s": s, "R": R, "epsilon": epsilon, "nu": nu},
             WrightFisherParams(R=R, epsilon=epsilon, s=s, nu=nu,
                                z_min=z_min))
            for s in s_values]


def usage_grid(R_values, T_M: float, s: float = 0.0,
               nu: float | None = None, z_min: int = 2):
    """Grid over interaction rate at fixed memory time (epsilon = 1/(R T_M))."""
    return [({"R": R, "T_M": T_M, "epsilon": 1.0 / (R * T_M), "s": s,
              "nu": nu},
             WrightFisherParams(R=R, epsilon=1.0 / (R * T_M), s=s, nu=nu,
                                z_min=z_min))
            for R in R_values]


def network_grid(nu_values, s_values, R: float = 0.04, epsilon: float = 1.0,
                 z_min: int = 2):
    """Grid over (nu, s) for power-law network scenarios."""
    return [({"nu": nu, "s": s, "R": R, "epsilon": epsilon},
             WrightFisherParams(R=R, epsilon=epsilon, s=s, nu=nu,
                                z_min=z_min))
            for nu in nu_values for s in s_values]


def sweep(histories, article: str, grid,
          demography: DemographyFit | Mapping[str, float], fractions,
          baseline: FitReport | None = None, seed: int = 0,
          cfg: InversionConfig = DEFAULT_INVERSION,
          eta_bounds: tuple[float, float] = DEFAULT_ETA_BOUNDS,
          jobs: int = 1) -> list[SweepRow]:
    """Evaluate a scenario grid; failures are recorded and do not abort.

    Network size ratios are sampled once per (language, nu) so curves over
    s reuse one realisation.  Results are independent of ``jobs``.
    """
    histories = list(histories)
    grid = list(grid)
    if not grid:
        return []
    sizes = (demography if isinstance(demography, Mapping)
             else mean_population_sizes(histories, demography))
    ne_tables = {}
    for coords, wf in grid:
        if wf.nu is not None and wf.nu not in ne_tables:
            ne_tables[wf.nu] = network_ne_ratios(histories, sizes, wf.nu,
                                                 wf.z_min, seed)

    def run_point(item):
        coords, wf = item
        try:
            rep = evaluate_scenario(
                histories, article, wf, sizes, fractions, baseline=baseline,
                eta_bounds=eta_bounds, seed=seed, cfg=cfg,
                model=coords.get("model", "scenario"),
                ne_table=ne_tables.get(wf.nu))
            return SweepRow(coords=coords, report=rep)
        except (NumericalError, ValueError, ArithmeticError) as exc:
            return SweepRow(coords=coords, report=None, error=str(exc))

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(run_point, grid))
    return [run_point(item) for item in grid]


@dataclass(frozen=True)
class GofResult:
    """Monte Carlo goodness of fit: p-value and overdispersion statistics."""

    p_value: float
    overdispersion_changes: float
    overdispersion_binary: float
    n_sim: int
    seed: int
    excluded_changes: tuple[str, ...] = ()
    excluded_binary: tuple[str, ...] = ()


_PMF_TAIL = 1e-12


def _poisson_outcome_pmf(history, article: str,
                         params: OriginFixationParams):
    """(pmf over m, per-m log likelihood) for one language, Poisson limit."""
    record = history.record(article)
    start = record.stages[0]
    t = history.observation_time
    m_max = 8
    while True:
        rates = [params.stage_rates[(start + j) % N_STAGES]
                 for j in range(m_max + 1)]
        pmf = poisson_count_distribution(t, rates, m_max)
        if 1.0 - pmf.sum() < _PMF_TAIL or m_max > 4096:
            break
        m_max = m_max * 2
    keep = max(np.flatnonzero(pmf > 0)) + 1
    pmf = pmf[:keep]
    with np.errstate(divide="ignore"):
        lnp = np.log(pmf)
    return pmf, lnp


def monte_carlo_gof(histories, article: str,
                    params: OriginFixationParams | Mapping[str, OriginFixationParams],
                    n_sim: int = 10 ** 6, seed: int = 0,
                    cfg: InversionConfig = DEFAULT_INVERSION) -> GofResult:
    """Parametric Monte Carlo goodness of fit at fixed parameters.

    Simulates the origin-fixation outcome (number of completed changes)
    for every language over its observation windows, ``n_sim`` times.  The
    p-value is the fraction of simulated datasets whose likelihood falls
    strictly below the observed dataset's.  Overdispersions are the mean
    over languages of the observed squared deviation divided by the
    simulation variance, for the change count and for the at-least-one-
    change indicator; languages with zero simulation variance are excluded
    from the affected statistic and reported.

    ``params`` may be shared or a per-language mapping (as produced by
    :func:`scenario_params`).
    """
    if n_sim < 10 ** 3:
        raise ValueError("n_sim must be at least 1000")
    histories = list(histories)
    sim_lnL = np.zeros(n_sim)
    obs_lnL = 0.0
    o_changes, o_binary = [], []
    excluded_changes, excluded_binary = [], []

    for idx, h in enumerate(histories):
        p = params[h.name] if isinstance(params, Mapping) else params
        rng = np.random.default_rng([seed, idx])
        m_obs = changes_count(h.record(article))
        if p.poisson_limit:
            pmf, lnp = _poisson_outcome_pmf(h, article, p)
            cdf = np.cumsum(pmf)
            cdf[-1] = max(cdf[-1], 1.0)
            draws = np.searchsorted(cdf, rng.random(n_sim), side="right")
            sim_lnL += lnp[draws]
            obs_here = (lnp[m_obs] if m_obs < len(lnp) else -np.inf)
        else:
            draws = _simulate_finite_fixation(h, article, p, n_sim, rng)
            lnp = _finite_fixation_lnL_table(h, article, p,
                                             int(draws.max()), cfg)
            sim_lnL += lnp[draws]
            obs_here = language_log_likelihood(h, article, p, cfg)
        obs_lnL += obs_here

        mu, var = draws.mean(), draws.var()
        if var > 0:
            o_changes.append((m_obs - mu) ** 2 / var)
        else:
            excluded_changes.append(h.name)
        b = draws >= 1
        mu_b, var_b = b.mean(), b.var()
        if var_b > 0:
            o_binary.append((float(m_obs >= 1) - mu_b) ** 2 / var_b)
        else:
            excluded_binary.append(h.name)

    return GofResult(
        p_value=float(np.mean(sim_lnL < obs_lnL)),
        overdispersion_changes=float(np.mean(o_changes)),
        overdispersion_binary=float(np.mean(o_binary)),
        n_sim=n_sim, seed=seed,
        excluded_changes=tuple(excluded_changes),
        excluded_binary=tuple(excluded_binary),
    )


def _simulate_finite_fixation(history, article: str,
                              params: OriginFixationParams, n_sim: int,
                              rng: np.random.Generator) -> np.ndarray:
    """Simulated change counts with exponential waits plus Gamma fixations."""
    record = history.record(article)
    start = record.stages[0]
    t = history.observation_time
    alpha, beta = params.gamma()
    remaining = np.full(n_sim, float(t))
    counts = np.zeros(n_sim, dtype=np.int64)
    stage = start
    active = np.arange(n_sim)
    while active.size:
        rate = params.stage_rates[stage % N_STAGES]
        dur = (rng.exponential(1.0 / rate, active.size)
               + rng.gamma(alpha, 1.0 / beta, active.size))
        remaining[active] -= dur
        done = remaining[active] > 0
        counts[active[done]] += 1
        active = active[done]
        stage += 1
    return counts


_EULER_M_CAP = 32


def _finite_fixation_lnL_table(history, article: str,
                               params: OriginFixationParams, m_hi: int,
                               cfg: InversionConfig) -> np.ndarray:
    """ln L_m for m = 0..m_hi at fixed language and parameters.

    Interference corrections are included so simulated datasets are scored
    with the same likelihood as the observed one.  Beyond ``m`` = 32 the
    inversion's accuracy degrades, so the Poisson-limit value is used for
    those (astronomically rare) tail outcomes.
    """
    from .likelihood import invert_likelihood, poisson_path_log_likelihood, \
        interference_factor

    record = history.record(article)
    start = record.stages[0]
    t = history.observation_time
    alpha, beta = params.gamma()
    out = np.empty(m_hi + 1)
    for m in range(m_hi + 1):
        rates = np.array([params.stage_rates[(start + j) % N_STAGES]
                          for j in range(m + 1)])
        if m <= _EULER_M_CAP:
            val = invert_likelihood(m, t, rates, alpha, beta, cfg)
        else:
            val = poisson_path_log_likelihood(m, t, rates)
        val += sum(math.log(interference_factor(rates[i],
                                                params.mean_fixation))
                   for i in range(m))
        out[m] = val
    return out
