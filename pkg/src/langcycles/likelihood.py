"""Probability of exactly m stage changes in time t, via Laplace inversion.

A completed change is an exponential origination wait (rate ``omega_i``,
depending on the stage being left) followed by a Gamma(alpha, beta) fixation
time; the transform of the exactly-m counting probability is inverted
numerically with the Euler algorithm.  Three measures keep the log
likelihood accurate across the full parameter range:

* for m = 0 the transform of ``1 - L_0`` is inverted and ``log1p`` applied,
  so near-certain outcomes lose no precision;
* otherwise the contour is shifted to the transform singularity nearest the
  origin, extracting the leading exponential decay exactly;
* the Euler sum is accumulated in log domain with the largest term factored
  out, so huge and tiny terms cannot overflow.

The Poisson limit (instant fixation, ``beta -> inf``) is also available as
a dedicated exact path through the counting chain (uniformisation) rather
than as a large-beta approximation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import poisson as _poisson_dist

from .fixation import gamma_params

__all__ = [
    "InversionConfig", "OriginFixationParams", "NumericalError",
    "likelihood_transform", "invert_likelihood", "interference_factor",
    "poisson_count_distribution", "poisson_path_log_likelihood",
    "language_log_likelihood", "dataset_log_likelihood", "path_rates",
]

# total chain intensity (max rate * t) beyond which the Poisson path returns
# a slowest-rate surrogate instead of the exact chain solution
_POISSON_INTENSITY_CAP = 600.0


class NumericalError(RuntimeError):
    """The inversion could not reach the configured precision."""


def _nodes_for_digits(digits: int) -> int:
    # Euler summation yields ~0.6 decimal digits per acceleration order
    return 2 * math.ceil(digits / 0.6)


@dataclass(frozen=True)
class InversionConfig:
    """Euler-inversion nodes and weights for a requested precision.

    ``node_count`` defaults to the value implied by ``precision_digits``
    (5 digits -> 18 nodes).  Nodes are ``A/2 + i*pi*k`` for k = 0..n-1 with
    ``A = (n-1) ln(10) / 3``; weights carry the alternating signs, the
    Euler-acceleration binomial tail and the ``exp(A/2)`` prefactor.
    """

    precision_digits: int = 5
    node_count: int | None = None
    nodes: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n = self.node_count
        if n is None:
            n = _nodes_for_digits(self.precision_digits)
            object.__setattr__(self, "node_count", n)
        if n < 4:
            raise ValueError("node_count must be at least 4")
        A = (n - 1) * math.log(10.0) / 3.0
        k = np.arange(n)
        nodes = A / 2.0 + 1j * math.pi * k
        n_accel = n // 2 - 1 if n % 2 == 0 else (n - 1) // 2
        n_plain = n - n_accel - 1
        xi = np.ones(n)
        xi[0] = 0.5
        comb = [math.comb(n_accel, i) for i in range(n_accel + 1)]
        tail = np.cumsum(comb[::-1])[::-1]  # sum_{i>=j} C(n_accel, i)
        for j in range(1, n_accel + 1):
            xi[n_plain + j] = tail[j] / 2.0 ** n_accel
        weights = (-1.0) ** k * xi * math.exp(A / 2.0)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)


DEFAULT_INVERSION = InversionConfig()


def _check_rates(rates, m: int) -> np.ndarray:
    r = np.asarray(rates, dtype=float)
    if r.ndim != 1 or r.size != m + 1:
        raise ValueError(f"need {m + 1} path rates for m={m}, got {r.size}")
    if np.any(r <= 0):
        raise ValueError("all path rates must be positive")
    return r


def _cexpm1(z: complex) -> complex:
    """exp(z) - 1 for complex z without cancellation near z = 0."""
    x, y = z.real, z.imag
    return complex(math.expm1(x) * math.cos(y) - 2.0 * math.sin(y / 2.0) ** 2,
                   math.exp(x) * math.sin(y))


def _log_transform(s: complex, m: int, rates: np.ndarray,
                   alpha: float, beta: float) -> complex:
    """Principal-branch log of the exactly-m counting transform at s.

    ``beta = inf`` selects the exact Poisson limit of the Gamma factors.
    Exponentiating the sum of principal logs reproduces the product
    exactly, so individual branch choices are immaterial downstream.
    """
    poisson = math.isinf(beta)
    w_next = rates[m]
    if s == 0:
        # removable singularity: the bracket vanishes linearly at s = 0
        return complex(np.log(1.0 / w_next + (0.0 if poisson else alpha / beta)))
    log_val = 0.0 + 0.0j
    for i in range(m):
        log_val += math.log(rates[i]) - np.log(rates[i] + s)
    if not poisson:
        log_val += m * alpha * (math.log(beta) - np.log(beta + s))
    # bracket 1 - G with G = (w/(w+s)) * (beta/(beta+s))^alpha
    log_g = math.log(w_next) - np.log(w_next + s)
    if not poisson:
        log_g += alpha * (math.log(beta) - np.log(beta + s))
    one_minus_g = -_cexpm1(log_g)
    if one_minus_g == 0:
        raise ZeroDivisionError("transform bracket vanished")
    return log_val + np.log(one_minus_g) - np.log(s)


def likelihood_transform(s: complex, m: int, rates, alpha: float,
                         beta: float) -> complex:
    """Laplace transform of the exactly-m change probability at frequency s.

    Valid to the right of every transform singularity, i.e. for
    ``Re(s) > -min(beta, rates)``; evaluation at a pole raises.
    """
    r = _check_rates(rates, m)
    s = complex(s)
    limit = min(float(np.min(r)), beta)
    if s.real <= -limit:
        raise ValueError(
            f"Re(s)={s.real} is not right of the singularities at -{limit}")
    return complex(np.exp(_log_transform(s, m, r, alpha, beta)))


def _euler_sum_plain(log_f, t: float, cfg: InversionConfig) -> float:
    """Direct Euler sum (1/t) sum_k c_k Re f(zeta_k / t) for modest values."""
    total = 0.0
    for c, zeta in zip(cfg.weights, cfg.nodes):
        total += c * np.exp(log_f(zeta / t)).real
    return total / t


def _euler_sum_log(log_f, t: float, cfg: InversionConfig) -> float:
    """log of the Euler sum, accumulated with the largest term factored out."""
    log_mag = np.full(cfg.node_count, -np.inf)
    sign = np.zeros(cfg.node_count)
    for k, (c, zeta) in enumerate(zip(cfg.weights, cfg.nodes)):
        lv = log_f(zeta / t)
        cos_term = math.cos(lv.imag)
        if cos_term == 0.0 or c == 0.0:
            continue
        log_mag[k] = math.log(abs(c)) + lv.real + math.log(abs(cos_term))
        sign[k] = math.copysign(1.0, c) * math.copysign(1.0, cos_term)
    peak = np.max(log_mag)
    if not np.isfinite(peak):
        raise NumericalError("all Euler terms vanished")
    total = float(np.sum(sign * np.exp(log_mag - peak)))
    if total <= 0.0:
        raise NumericalError(
            "Euler sum lost all significant digits (non-positive result); "
            "increase node_count / precision_digits")
    return peak + math.log(total) - math.log(t)


def invert_likelihood(m: int, t: float, rates, alpha: float, beta: float,
                      cfg: InversionConfig = DEFAULT_INVERSION) -> float:
    """ln of the probability of exactly m changes by time t.

    ``rates`` are the m+1 origination rates along the observed path, and
    (alpha, beta) the Gamma fixation parameters; ``beta = inf`` gives the
    instant-fixation limit.  See the module docstring for the stability
    measures; raises :class:`NumericalError` if the configured node count
    cannot produce a positive result.
    """
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    r = _check_rates(rates, m)
    if not math.isinf(beta):
        if not (alpha > 0 and beta > 0):
            raise ValueError("Gamma parameters must be positive")

    if m == 0:
        # route the near-certain regime through 1 - L_0
        def log_u(s):   # transform of 1 - L_0: G_1(s) / s
            lg = math.log(r[0]) - np.log(r[0] + s)
            if not math.isinf(beta):
                lg += alpha * (math.log(beta) - np.log(beta + s))
            return lg - np.log(s)

        u = _euler_sum_plain(log_u, t, cfg)
        if u < 0.5:
            if u <= -1e-6:
                raise NumericalError(f"inverted 1 - L_0 = {u} out of range")
            return math.log1p(-max(u, 0.0))

    # leading-decay extraction: shift to the singularity nearest the origin
    s_star = min(float(np.min(r)), beta)

    def log_shifted(s):
        return _log_transform(s - s_star, m, r, alpha, beta)

    return -s_star * t + _euler_sum_log(log_shifted, t, cfg)


def interference_factor(omega: float, mean_fixation: float) -> float:
    """Probability a change fixes before the next origination, exp(-w*T)."""
    if omega < 0 or mean_fixation < 0:
        raise ValueError("rate and mean fixation time must be non-negative")
    return math.exp(-omega * mean_fixation)


def poisson_count_distribution(t: float, rates, m_max: int) -> np.ndarray:
    """P(exactly m changes by t) for m = 0..m_max in the instant-fixation limit.

    Solves the pure-birth counting chain with the given per-step rates
    (length >= m_max + 1) by uniformisation; entries are exact to double
    precision.  The returned array omits the lumped probability of more
    than ``m_max`` changes, so it sums to <= 1.
    """
    r = np.asarray(rates, dtype=float)
    if r.size < m_max + 1:
        raise ValueError("need a rate for every state up to m_max")
    if np.any(r <= 0):
        raise ValueError("rates must be positive")
    lam = float(r.max()) * (1.0 + 1e-12)
    x = lam * t
    if x > 5000.0:
        raise NumericalError(f"total chain intensity {x:.3g} too large")
    n_max = int(_poisson_dist.isf(1e-18, x)) + 10 if x > 0 else 10
    pois = _poisson_dist.pmf(np.arange(n_max + 1), x)
    stay = 1.0 - r[:m_max + 1] / lam
    step = r[:m_max + 1] / lam
    v = np.zeros(m_max + 2)
    v[0] = 1.0
    out = np.zeros(m_max + 1)
    for n in range(n_max + 1):
        out += pois[n] * v[:m_max + 1]
        nv = v.copy()
        nv[:m_max + 1] = v[:m_max + 1] * stay
        nv[1:m_max + 2] += v[:m_max + 1] * step
        v = nv
    return out


def poisson_path_log_likelihood(m: int, t: float, rates) -> float:
    """ln L_m(t) in the instant-fixation limit (dedicated exact path).

    Exact via the counting chain while every ``rate * t`` is below
    ~600; beyond that (far outside any optimum, where the exact value
    would underflow) it degrades to the slowest-rate Poisson bound, which
    preserves monotone behaviour for bracketed searches.
    """
    r = _check_rates(rates, m)
    if m == 0:
        return -r[0] * t
    if float(r.max()) * t > _POISSON_INTENSITY_CAP:
        r_min = float(r.min())
        return (m * math.log(r_min * t) - r_min * t - math.lgamma(m + 1)
                + float(np.sum(np.log(r[:m] / r_min))))
    p = poisson_count_distribution(t, r, m)[m]
    if p <= 0.0:
        raise NumericalError(f"counting-chain probability underflow at m={m}")
    return math.log(p)


@dataclass(frozen=True)
class OriginFixationParams:
    """Population-level model: per-stage origination rates plus fixation law.

    ``stage_rates`` holds one origination rate per cycle stage (the rate of
    leaving that stage).  With ``poisson_limit`` set, fixation is treated
    as instantaneous and the moment fields are ignored.
    """

    stage_rates: tuple[float, ...]
    mean_fixation: float = 0.0
    var_fixation: float = 0.0
    poisson_limit: bool = True

    def __post_init__(self):
        if any(r <= 0 for r in self.stage_rates):
            raise ValueError("stage rates must be positive")
        if not self.poisson_limit and not (self.mean_fixation > 0
                                           and self.var_fixation > 0):
            raise ValueError("finite-fixation params need positive moments")

    @classmethod
    def from_mean_rate(cls, omega_bar: float, fractions,
                       mean_fixation: float = 0.0, var_fixation: float = 0.0,
                       poisson_limit: bool = True) -> "OriginFixationParams":
        """Stage rates ``omega_bar / (V * f_i)`` from stationary fractions."""
        f = tuple(fractions)
        rates = tuple(omega_bar / (len(f) * fi) for fi in f)
        return cls(rates, mean_fixation, var_fixation, poisson_limit)

    def gamma(self) -> tuple[float, float]:
        from .fixation import FixationMoments
        return gamma_params(FixationMoments(self.mean_fixation,
                                            self.var_fixation, "quadrature"))


def path_rates(stages, params: OriginFixationParams) -> np.ndarray:
    """Origination rates along a visited-stage path (one per origination).

    The k-th origination departs from the k-th visited stage, so the rate
    beyond the observed path belongs to the stage reached last.
    """
    return np.array([params.stage_rates[s % len(params.stage_rates)]
                     for s in stages], dtype=float)


def language_log_likelihood(history, article: str,
                            params: OriginFixationParams,
                            cfg: InversionConfig = DEFAULT_INVERSION) -> float:
    """Interference-corrected ln likelihood of one language's record.

    The path starts at the first recorded stage and advances cyclically;
    the effective time is the summed window duration.  Each completed
    change contributes an interference factor exp(-w_i * mean_fixation).
    """
    from .data_model import path_stages

    record = history.record(article)
    stages = path_stages(record)
    m = len(stages) - 1
    t = history.observation_time
    rates = path_rates(stages, params)
    if params.poisson_limit:
        ln = poisson_path_log_likelihood(m, t, rates)
    else:
        alpha, beta = params.gamma()
        ln = invert_likelihood(m, t, rates, alpha, beta, cfg)
        ln += sum(math.log(interference_factor(rates[i],
                                               params.mean_fixation))
                  for i in range(m))
    return ln


def dataset_log_likelihood(histories, article: str,
                           params: OriginFixationParams,
                           cfg: InversionConfig = DEFAULT_INVERSION) -> float:
    """Sum of per-language log likelihoods in fixed (input) order."""
    if not histories:
        raise ValueError("dataset must be non-empty")
    return sum(language_log_likelihood(h, article, params, cfg)
               for h in histories)
