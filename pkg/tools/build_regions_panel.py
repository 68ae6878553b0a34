"""Construct the bundled regional population panel (``regions.tsv``).

The original size survey is not redistributable, so the package ships a
synthetic panel built around the constant-ratio growth model with the
published region weights, overall scale, growth polynomial, fit quality and
residual spread.  The construction makes the least-squares decomposition
recover those targets exactly:

* log-sizes are model values plus a skewed residual sample projected onto
  the orthogonal complement of the fit design, so the fitted weights, scale
  and growth curve equal the generating ones;
* the tabulated ln g values deviate from the target quartic only within the
  polynomial fit's null space, so the re-fitted polynomial coefficients
  equal the target coefficients;
* the residual scale is set from the model variance to pin R^2, and the
  residual shape is searched so the central-95% range lands on target.

Run from the repository root:  python tools/build_regions_panel.py
"""

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from langcycles.data_model import load_regions  # noqa: E402
from langcycles.demography import fit_population_model, growth_g  # noqa: E402

OUT = Path(__file__).resolve().parents[1] / "src/langcycles/data/regions.tsv"

N0 = 14600.0
G_COEFFS = np.array([-0.0127, -2.00e-4, 2.13e-7, 2.04e-10, 2.55e-14])
R2_TARGET = 0.923
Q_TARGET = (-1.02, 1.30)
Q_TOL = 0.02

WEIGHTS = {
    "Ancient Egypt": 181., "Arabia": 105., "Austria": 41.2, "Bolivia": 18.3,
    "Bulgaria": 32.8, "C Turkestan Tibet": 53.9, "Caucasia": 40.1,
    "Chile": 17.8, "China": 3390., "Czechoslovakia": 77.6, "Denmark": 18.5,
    "Ecuador": 13.7, "Egypt": 114., "England Wales": 92.7, "Ethiopia": 50.3,
    "France": 366., "Germany": 245., "Greece": 55.0, "Guatemala": 14.3,
    "Iberia": 241., "Iceland": 1.00, "Iran": 130., "Iraq": 43.7,
    "Ireland": 26.2, "Italy": 288., "Japan": 231., "Khmer Republic": 32.4,
    "Korea": 82.1, "Libya": 12.1, "Maghreb": 125., "Mexico": 111.,
    "Mongolia": 11.4, "Nepal": 56.0, "Norway": 13.5,
    "Pakistan India Bangladesh": 2950., "Palestine Jordan": 20.5,
    "Peru": 39.9, "Poland": 84.7, "Romania": 53.5, "Russia In Europe": 323.,
    "Sri Lanka": 32.0, "Sweden": 29.3, "Syria Lebanon": 38.5,
    "Turkey In Asia": 230., "Yugoslavia": 81.5,
}

YEARS = [-5000, -4500, -4000, -3500, -3000, -2500, -2000, -1700, -1400,
         -1000, -800, -600, -400, -200, 0, 200, 400, 600, 800, 1000, 1100,
         1200, 1300, 1400, 1500, 1600, 1650, 1700, 1750, 1800, 1850, 1900,
         1925, 1950, 1975]

# survey coverage is uneven: the ancient river-valley regions are sampled
# over the whole range, most of the Old World from the early first
# millennium BCE, and smaller or later-attested regions more coarsely
FULL = set(YEARS)
SPARSE_MED = {200, 600, 1000, 1300, 1600, 1800, 1900, 1975}
SPARSE_NEW = {-400, 0, 400, 800, 1200, 1500, 1700, 1850, 1950}

COVERAGE = {}
for _r in ("Ancient Egypt", "Iraq", "China", "Pakistan India Bangladesh"):
    COVERAGE[_r] = {y for y in YEARS if y >= -5000}
COVERAGE["Ancient Egypt"] = {y for y in COVERAGE["Ancient Egypt"] if y <= 800}
for _r in ("Iran", "Greece", "Italy", "Iberia", "France", "Turkey In Asia",
           "Syria Lebanon", "Palestine Jordan", "Arabia"):
    COVERAGE[_r] = {y for y in YEARS if y >= -2000}
COVERAGE["Egypt"] = {y for y in YEARS if y >= -600}
for _r in ("England Wales", "Germany", "Ireland", "Caucasia", "Ethiopia",
           "Maghreb", "Libya", "Korea", "Japan", "Khmer Republic",
           "C Turkestan Tibet", "Sri Lanka", "Nepal", "Russia In Europe"):
    COVERAGE[_r] = {y for y in YEARS if y >= -1000}
for _r in ("Denmark", "Sweden", "Norway", "Austria", "Czechoslovakia",
           "Poland", "Romania", "Bulgaria", "Yugoslavia", "Mongolia"):
    COVERAGE[_r] = SPARSE_MED
for _r in ("Mexico", "Peru", "Bolivia", "Ecuador", "Chile", "Guatemala"):
    COVERAGE[_r] = SPARSE_NEW
COVERAGE["Iceland"] = {y for y in YEARS if y >= 1000}


def target_ln_g():
    """ln g values on the year grid: target quartic plus a null-space tweak.

    The tweak is orthogonal to the quartic design (so polynomial re-fit is
    unchanged) and forces ln g(0) = 0 as the fit constraint requires.
    """
    ts = np.array(YEARS, float)
    poly = np.polynomial.polynomial.polyval(ts / 1000.0,
                                            G_COEFFS * 1000.0 ** np.arange(5))
    V = np.vander(ts / 1000.0, 5, increasing=True)
    i0 = YEARS.index(0)
    e0 = np.zeros(len(ts))
    e0[i0] = 1.0
    coef, *_ = np.linalg.lstsq(V, e0, rcond=None)
    u = e0 - V @ coef
    delta = u * (-poly[i0] / u[i0])
    return dict(zip(YEARS, poly + delta))


def build_design(cells, regions, years, ref="Iceland", t0=0):
    region_col = {r: 1 + i for i, r in enumerate(r for r in regions if r != ref)}
    year_col = {y: 1 + len(region_col) + j
                for j, y in enumerate(y for y in years if y != t0)}
    X = np.zeros((len(cells), 1 + len(region_col) + len(year_col)))
    X[:, 0] = 1.0
    for k, (r, y) in enumerate(cells):
        if r != ref:
            X[k, region_col[r]] = 1.0
        if y != t0:
            X[k, year_col[y]] = 1.0
    return X


def main():
    regions = sorted(WEIGHTS)
    cells = [(r, y) for r in regions for y in YEARS if y in COVERAGE[r]]
    lng = target_ln_g()
    X = build_design(cells, regions, YEARS)
    theta = np.concatenate([
        [np.log(N0)],
        [np.log(WEIGHTS[r]) for r in regions if r != "Iceland"],
        [lng[y] for y in YEARS if y != 0],
    ])
    model = X @ theta
    v_model = float(np.sum((model - model.mean()) ** 2))
    print(f"{len(cells)} cells, model variance per cell = "
          f"{v_model / len(cells):.3f}")

    # Residual family: a tight, mildly right-skewed core plus a ~6% share
    # of large excursions (wars, plagues, colonisation collapses), slightly
    # skewed to the upside.  The overall scale is pinned by the R^2 target,
    # so the outlier magnitudes are searched until the post-projection
    # central-95% range lands on the published interval.
    from scipy.optimize import minimize

    p_out = 0.06
    n = len(cells)

    def make_eps(params, seed):
        c_right, c_left = params
        rng = np.random.default_rng(1_000_000 + seed)
        raw = np.exp(0.3 * rng.standard_normal(n)) - 1.0
        is_out = rng.random(n) < p_out
        n_out = int(is_out.sum())
        pos = rng.random(n_out) < 0.55
        mag = np.where(pos, abs(c_right), abs(c_left)) * rng.uniform(
            1.0, 1.45, n_out)
        raw[is_out] = np.where(pos, mag, -mag)
        coef, *_ = np.linalg.lstsq(X, raw, rcond=None)
        eps = raw - X @ coef
        eps *= np.sqrt(v_model * (1.0 / R2_TARGET - 1.0) / float(eps @ eps))
        return eps

    def quantile_err(params, seed):
        q = np.quantile(make_eps(params, seed), [0.025, 0.975])
        return max(abs(q[0] - Q_TARGET[0]), abs(q[1] - Q_TARGET[1]))

    best = None
    for seed in range(20):
        res = minimize(quantile_err, x0=[2.6, 2.0], args=(seed,),
                       method="Nelder-Mead",
                       options={"xatol": 1e-3, "fatol": 1e-4, "maxiter": 300})
        if best is None or res.fun < best[0]:
            best = (res.fun, res.x, seed)
        if best[0] < Q_TOL / 4:
            break
    err, copt, seed = best
    eps = make_eps(copt, seed)
    q = np.quantile(eps, [0.025, 0.975])
    print(f"residual search: c_right={copt[0]:.3f} c_left={copt[1]:.3f} "
          f"seed={seed} quantiles=({q[0]:+.3f}, {q[1]:+.3f}) err={err:.4f}")
    if err > Q_TOL:
        raise SystemExit("no residual sample met the quantile targets")

    y_log = model + eps
    sizes = np.exp(y_log)
    lines = [
        "# Historical population sizes (persons) of the geographical regions",
        "# relevant to the language sample, at survey time points (years,",
        "# negative = BCE).  Synthetic panel calibrated to the published",
        "# constant-ratio growth fit; see tools/build_regions_panel.py.",
        "region\tyear\tsize",
    ]
    for (r, yv), s in zip(cells, sizes):
        lines.append(f"{r}\t{yv}\t{s:.6g}")
    OUT.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {OUT} ({len(cells)} records, {len(regions)} regions)")

    # verify by running the real fit on the written file
    fit = fit_population_model(load_regions(OUT))
    print(f"N0 = {fit.N0:.1f} (target {N0})")
    print(f"R^2 = {fit.r_squared:.4f} (target {R2_TARGET})")
    print(f"quantiles = ({fit.residual_quantiles[0]:+.3f}, "
          f"{fit.residual_quantiles[1]:+.3f})")
    print("coeffs   =", " ".join(f"{c:.3e}" for c in fit.g_coeffs))
    print("targets  =", " ".join(f"{c:.3e}" for c in G_COEFFS))
    w_err = max(abs(fit.weights[r] / WEIGHTS[r] - 1) for r in regions)
    print(f"max weight error = {w_err:.2e}")
    g75 = growth_g(1975.0, fit.g_coeffs)
    print(f"g(1975) = {g75:.6f}")
    assert abs(fit.N0 / N0 - 1) < 1e-5
    assert abs(fit.r_squared - R2_TARGET) < 5e-4
    assert all(abs(fit.g_coeffs[k] / G_COEFFS[k] - 1) < 1e-3 for k in range(5))
    assert w_err < 1e-4  # file rounds sizes to 6 significant digits
    print("verification passed")


if __name__ == "__main__":
    main()
