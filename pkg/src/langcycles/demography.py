"""Historical population model N_i(t) = w_i * N0 * g(t).

Region sizes are assumed to keep constant ratios over time, with a single
universal growth curve g(t) (t in years, 1 BCE = year 0).  The weights and
growth curve are found by a constrained linear least-squares fit to log
sizes; ln g(t) is then summarised by a quartic polynomial.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

DEFAULT_REFERENCE_REGION = "Iceland"


@dataclass(frozen=True)
class DemographyFit:
    """Fitted population model: scale, region weights, growth polynomial.

    ``g_coeffs`` are the coefficients c0..c4 of the quartic fitted to
    ln g(t); ``residual_quantiles`` is the central-95% range of the log
    residuals.  ``growth_table`` holds the fitted (t_j, ln g(t_j)) points.
    """

    N0: float
    weights: dict[str, float]
    g_coeffs: tuple[float, ...]
    r_squared: float
    residual_quantiles: tuple[float, float]
    reference_region: str
    residuals: np.ndarray = field(repr=False, compare=False)
    growth_table: tuple[tuple[float, float], ...] = field(repr=False,
                                                          compare=False)


def fit_population_model(records,
                         reference_region: str = DEFAULT_REFERENCE_REGION,
                         ) -> DemographyFit:
    """Fit the constant-ratio growth model to a regional population survey.

    Minimises the squared residuals of ``ln N_i(t_j) = ln N0 + ln w_i +
    ln g(t_j)``; the decomposition is made unique by pinning the reference
    region's weight to 1 and ln g to 0 at the time point nearest year 0
    (explicit constraint substitution, not pseudo-inverse regularisation).

    Parameters
    ----------
    records : sequence of RegionPopulationRecord
    reference_region : str
        Region whose weight defines the scale (default the smallest
        surveyed region, Iceland).

    Returns
    -------
    DemographyFit
    """
    records = list(records)
    regions = sorted({r.region for r in records})
    years = sorted({float(r.year) for r in records})
    if reference_region not in regions:
        raise ValueError(
            f"reference region {reference_region!r} absent from the survey")
    if len(regions) < 2 or len(years) < 2:
        raise ValueError("need at least two regions and two time points")

    t0 = min(years, key=lambda y: abs(y))
    free_regions = [r for r in regions if r != reference_region]
    free_years = [y for y in years if y != t0]
    region_col = {r: 1 + i for i, r in enumerate(free_regions)}
    year_col = {y: 1 + len(free_regions) + j for j, y in enumerate(free_years)}

    n_obs = len(records)
    n_par = 1 + len(free_regions) + len(free_years)
    X = np.zeros((n_obs, n_par))
    y = np.empty(n_obs)
    X[:, 0] = 1.0
    for k, rec in enumerate(records):
        y[k] = np.log(rec.size)
        if rec.region != reference_region:
            X[k, region_col[rec.region]] = 1.0
        if float(rec.year) != t0:
            X[k, year_col[float(rec.year)]] = 1.0

    theta, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < n_par:
        raise ValueError(
            "least-squares system is underdetermined after constraints "
            "(some region/time combination is unobservable)")

    fitted = X @ theta
    residuals = y - fitted
    ss_res = float(residuals @ residuals)
    centred = y - y.mean()
    ss_tot = float(centred @ centred)
    r_squared = 1.0 - ss_res / ss_tot

    weights = {reference_region: 1.0}
    for r in free_regions:
        weights[r] = float(np.exp(theta[region_col[r]]))
    ln_g = {t0: 0.0}
    for yv in free_years:
        ln_g[yv] = float(theta[year_col[yv]])

    ts = np.array(years)
    bs = np.array([ln_g[t] for t in years])
    # fit the quartic on a rescaled axis for conditioning, then convert back
    scale = 1000.0
    d = np.polynomial.polynomial.polyfit(ts / scale, bs, deg=4)
    coeffs = tuple(float(d[k] / scale ** k) for k in range(5))

    q_lo, q_hi = np.quantile(residuals, [0.025, 0.975])
    return DemographyFit(
        N0=float(np.exp(theta[0])),
        weights=weights,
        g_coeffs=coeffs,
        r_squared=r_squared,
        residual_quantiles=(float(q_lo), float(q_hi)),
        reference_region=reference_region,
        residuals=residuals,
        growth_table=tuple(zip(years, bs)),
    )


def growth_g(t, coeffs):
    """Growth factor exp(c0 + c1 t + ... + c4 t^4); accepts arrays."""
    c = np.asarray(coeffs, dtype=float)
    return np.exp(np.polynomial.polynomial.polyval(np.asarray(t, float), c))


def mean_growth(windows, coeffs, rel_tol: float = 1e-6) -> float:
    """Time average of g(t) over a union of observation windows."""
    total = sum(w.duration for w in windows)
    acc = 0.0
    for w in windows:
        val, _ = integrate.quad(lambda t: growth_g(t, coeffs),
                                w.start, w.end, epsabs=0.0, epsrel=rel_tol,
                                limit=200)
        acc += val
    return acc / total


def language_mean_size(language, fit: DemographyFit) -> float:
    """Historical mean speech-community size from geographic composition.

    ``N0 * sum_r fraction_r * w_r`` times the mean of g over the language's
    observation windows.  Every composition region must be in the fit.
    """
    if not language.composition:
        raise KeyError(f"{language.name}: no geographic composition recorded")
    comp = 0.0
    for region, frac in language.composition.items():
        if region not in fit.weights:
            raise KeyError(
                f"{language.name}: region {region!r} not in demography fit")
        comp += frac * fit.weights[region]
    return fit.N0 * comp * mean_growth(language.windows, fit.g_coeffs)


def mean_population_sizes(histories, fit: DemographyFit,
                          use_table_weights: bool = True) -> dict[str, float]:
    """Mean community size per language for scenario evaluation.

    By default uses each history's tabulated weight (the authoritative
    value); ``use_table_weights=False`` recomputes the composite weight
    from the geographic composition instead.
    """
    out = {}
    for h in histories:
        if use_table_weights:
            out[h.name] = fit.N0 * h.weight * mean_growth(h.windows,
                                                          fit.g_coeffs)
        else:
            out[h.name] = language_mean_size(h, fit)
    return out
