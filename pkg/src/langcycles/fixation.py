"""Fixation functionals of the Wright-Fisher diffusion.

The diffusion for the population-level innovation frequency x is
parameterised by an effective population size ``Ne``, a selection strength
``s`` and a memory lifetime ``T_M``; all fixation quantities depend on s and
Ne only through the combination ``S = 2 * Ne * s``.

Conditional fixation-time moments are computed from the backward-equation
recursion by nested quadrature, with series branches where quadrature is
unreliable: a small-S Taylor expansion and a large-S asymptotic expansion.
The moments are symmetric under s -> -s, and negative selection is folded
onto positive through that symmetry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

EULER_MASCHERONI = 0.5772156649015329

# branch thresholds on S = 2*Ne*|s|
TAYLOR_MEAN_MAX = 1e-3
TAYLOR_SECOND_MAX = 1e-2
ASYMPTOTIC_MIN = 500.0

_QUAD_OPTS = dict(epsabs=0.0, epsrel=1e-8, limit=400)
_INNER_QUAD_OPTS = dict(epsabs=0.0, epsrel=1e-10, limit=400)


@dataclass(frozen=True)
class DiffusionParams:
    """Diffusion parameters: effective size, selection strength, memory lifetime."""

    Ne: float
    s: float
    T_M: float = 1.0

    def __post_init__(self):
        if not self.Ne > 0:
            raise ValueError(f"Ne must be positive, got {self.Ne}")
        if not self.T_M > 0:
            raise ValueError(f"T_M must be positive, got {self.T_M}")
        if not math.isfinite(self.s):
            raise ValueError(f"s must be finite, got {self.s}")


@dataclass(frozen=True)
class FixationMoments:
    """Mean and variance of the fixation time conditioned on fixation."""

    mean: float
    variance: float
    regime: str  # 'taylor' | 'quadrature' | 'asymptotic'

    @property
    def second_moment(self) -> float:
        return self.variance + self.mean ** 2


@dataclass(frozen=True)
class NetworkSpec:
    """Power-law social network: size, degree exponent, cutoff, update fraction."""

    N: int
    nu: float
    z_min: int = 2
    epsilon: float = 1.0

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("N must be at least 2")
        if self.z_min < 1:
            raise ValueError("z_min must be at least 1")
        if not 0 < self.epsilon <= 1:
            raise ValueError("epsilon must be in (0, 1]")
        if not self.nu > 0:
            raise ValueError("nu must be positive")


def fixation_probability(x0: float, params: DiffusionParams) -> float:
    """Probability that an innovation at frequency x0 reaches fixation.

    Evaluates ``(1 - exp(-S*x0)) / (1 - exp(-S))`` with ``S = 2*Ne*s`` in
    expm1 form, stable for |S| from 1e-12 up to beyond 1e3 and for either
    sign of s; the s -> 0 limit returns x0.
    """
    if not 0.0 <= x0 <= 1.0:
        raise ValueError(f"x0 must lie in [0, 1], got {x0}")
    S = 2.0 * params.Ne * params.s
    if S == 0.0:
        return float(x0)
    if S > 0:
        return float(np.expm1(-S * x0) / np.expm1(-S))
    # multiply through by exp(S) so every exponent is non-positive
    return float((np.exp(S) - np.exp(S * (1.0 - x0))) / np.expm1(S))


def _Q(y, S):
    """Fixation probability from frequency y at S > 0 (vectorised, stable)."""
    return np.expm1(-S * y) / np.expm1(-S)


def _mean_integrand(y, S):
    # Q(y) * (1 - exp(-S(1-y))) / (S y (1-y)); finite limits 1 at both ends
    return _Q(y, S) * (-np.expm1(-S * (1.0 - y))) / (S * y * (1.0 - y))


def _f1(x, S):
    """Unconditioned first-moment function F1(x) in units of 2*Ne*T_M.

    Uses folded exponentials so every exponent is non-positive; valid for
    S > 0 and 0 < x < 1.
    """
    d2 = np.expm1(-S) ** 2

    def inner_a(y):
        return ((np.exp(-S * (x - y)) - np.exp(-S * (1.0 - y)))
                * np.expm1(-S * y) ** 2 / (d2 * S * y * (1.0 - y)))

    a, _ = integrate.quad(inner_a, 0.0, x, **_INNER_QUAD_OPTS)
    b, _ = integrate.quad(_mean_integrand, x, 1.0, args=(S,),
                          **_INNER_QUAD_OPTS)
    return a + _Q(x, S) * b


def _quad_points(S):
    """Breakpoint hints for the boundary layers of width ~ 1/S."""
    if S <= 20.0:
        return None
    w = min(0.2, 20.0 / S)
    return [w, 1.0 - w]


def _mean_reduced(S: float) -> float:
    """I(S) such that mean = 2 * Ne * T_M * I(S); quadrature branch."""
    val, _ = integrate.quad(_mean_integrand, 0.0, 1.0, args=(S,),
                            points=_quad_points(S), **_QUAD_OPTS)
    return val


def _second_reduced(S: float) -> float:
    """J(S) such that second moment = 8 * Ne^2 * T_M^2 * J(S)."""

    def outer(y):
        return _f1(y, S) * (-np.expm1(-S * (1.0 - y))) / (S * y * (1.0 - y))

    val, _ = integrate.quad(outer, 0.0, 1.0, points=_quad_points(S),
                            **_QUAD_OPTS)
    return val / 2.0


def _mean_taylor(S):
    return 1.0 - S * S / 72.0


def _second_taylor(S):
    return (math.pi ** 2 / 6.0 - 1.0) + (math.pi ** 2 / 72.0 - 17.0 / 108.0) * S * S


def _mean_asymptotic(S):
    return (2.0 / S) * (math.log(S) + EULER_MASCHERONI - 1.0 / S)


def _second_asymptotic(S):
    L = math.log(S) + EULER_MASCHERONI
    return (2.0 * L * L + math.pi ** 2 / 6.0) / (S * S)


_reduced_cache: dict[float, tuple[float, float, str]] = {}


def _reduced_moments(S: float) -> tuple[float, float, str]:
    """(I(S), J(S), regime) with branch selection and caching."""
    got = _reduced_cache.get(S)
    if got is not None:
        return got
    if S > ASYMPTOTIC_MIN:
        out = (_mean_asymptotic(S), _second_asymptotic(S), "asymptotic")
    elif S < TAYLOR_MEAN_MAX:
        out = (_mean_taylor(S), _second_taylor(S), "taylor")
    else:
        mean = _mean_reduced(S)
        second = (_second_taylor(S) if S < TAYLOR_SECOND_MAX
                  else _second_reduced(S))
        out = (mean, second, "quadrature")
    if not (np.isfinite(out[0]) and np.isfinite(out[1])):
        raise ArithmeticError(
            f"fixation-moment quadrature failed to converge at S={S}")
    _reduced_cache[S] = out
    return out


def fixation_time_moments(params: DiffusionParams) -> FixationMoments:
    """Mean and variance of the fixation time conditioned on fixation.

    Single-mutant limit of the backward-equation moment recursion.  The
    result is symmetric in s -> -s, which this implementation uses to fold
    negative selection onto positive.  Branches: Taylor series for
    ``2*Ne*|s|`` below 1e-3 (mean) and 1e-2 (second moment), asymptotic
    expansion above 500, nested quadrature in between.
    """
    S = 2.0 * params.Ne * abs(params.s)
    scale = 2.0 * params.Ne * params.T_M
    I, J, regime = _reduced_moments(S)
    mean = scale * I
    second = 2.0 * scale * scale * J
    variance = second - mean * mean
    if not (mean > 0 and variance > 0):
        raise ArithmeticError(
            f"non-positive fixation moments at S={S}: mean={mean}, var={variance}")
    return FixationMoments(mean=mean, variance=variance, regime=regime)


def gamma_params(moments: FixationMoments) -> tuple[float, float]:
    """Shape and rate of the Gamma distribution matching mean and variance."""
    if not (moments.mean > 0 and moments.variance > 0):
        raise ValueError("moments must be positive")
    alpha = moments.mean ** 2 / moments.variance
    beta = moments.mean / moments.variance
    return alpha, beta


def effective_population_size(spec: NetworkSpec, degrees) -> float:
    """Effective population size ``(N/eps) * mean(z)^2 / mean(z^2)``.

    ``degrees`` is a sample of neighbourhood sizes; by Cauchy-Schwarz the
    result never exceeds ``N / eps``.
    """
    z = np.asarray(degrees, dtype=float)
    if z.size == 0:
        raise ValueError("degree sample must be non-empty")
    if np.any(z < 1):
        raise ValueError("degrees must be at least 1")
    return (spec.N / spec.epsilon) * z.mean() ** 2 / np.mean(z * z)


def _power_interval(p: float, a: float, b: float) -> float:
    """Integral of z^-p over [a, b] (a, b > 0)."""
    if abs(p - 1.0) < 1e-9:
        return math.log(b / a)
    return (a ** (1.0 - p) - b ** (1.0 - p)) / (p - 1.0)


def _power_tail_sum(p: float, a: int, b: int) -> float:
    """Euler-Maclaurin value of sum_{z=a}^{b} z^-p, accurate for a >> 1."""
    if a > b:
        return 0.0
    f = lambda z: z ** (-p)
    fp = lambda z: -p * z ** (-p - 1.0)
    fppp = lambda z: -p * (p + 1.0) * (p + 2.0) * z ** (-p - 3.0)
    return (_power_interval(p, a, b) + 0.5 * (f(a) + f(b))
            + (fp(b) - fp(a)) / 12.0 - (fppp(b) - fppp(a)) / 720.0)


_EXACT_HEAD = 1_000_000


class _TruncatedZipf:
    """Discrete law p_z ~ z^-(1+nu) on [z_min, z_max], exact inverse CDF.

    The head of the support (up to 1e6 values) is tabulated exactly; for
    larger supports the far tail's cumulative sums are evaluated by
    Euler-Maclaurin (accurate to double precision at such arguments) and
    inverted by bisection.
    """

    def __init__(self, nu: float, z_min: int, z_max: int):
        if z_max < z_min:
            raise ValueError("empty degree support")
        self.p = 1.0 + nu
        self.z_min = z_min
        self.z_max = z_max
        head_max = min(z_max, z_min + _EXACT_HEAD - 1)
        z = np.arange(z_min, head_max + 1, dtype=float)
        w = z ** (-self.p)
        self.head_cum = np.cumsum(w)
        self.head_max = head_max
        tail = (_power_tail_sum(self.p, head_max + 1, z_max)
                if head_max < z_max else 0.0)
        self.total = self.head_cum[-1] + tail
        self.head_frac = self.head_cum[-1] / self.total

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        u = rng.random(n)
        out = np.empty(n, dtype=np.int64)
        in_head = u < self.head_frac
        idx = np.searchsorted(self.head_cum,
                              u[in_head] * self.total, side="right")
        out[in_head] = self.z_min + idx
        n_tail = int(np.count_nonzero(~in_head))
        if n_tail:
            targets = u[~in_head] * self.total - self.head_cum[-1]
            out[~in_head] = [self._invert_tail(t) for t in targets]
        return out

    def _invert_tail(self, target: float) -> int:
        lo, hi = self.head_max + 1, self.z_max
        while lo < hi:
            mid = (lo + hi) // 2
            if _power_tail_sum(self.p, self.head_max + 1, mid) >= target:
                hi = mid
            else:
                lo = mid + 1
        return lo


def sample_power_law_degrees(spec: NetworkSpec, seed,
                             size: int | None = None) -> np.ndarray:
    """Draw i.i.d. degrees from the truncated power law on [z_min, N-1].

    Inverse-CDF sampling on the normalised discrete law; deterministic for
    a given seed.  ``size`` defaults to N (one degree per speaker).
    """
    rng = seed if isinstance(seed, np.random.Generator) \
        else np.random.default_rng(seed)
    dist = _TruncatedZipf(spec.nu, spec.z_min, spec.N - 1)
    return dist.sample(spec.N if size is None else size, rng)


def sampled_effective_population_size(spec: NetworkSpec, seed,
                                      chunk: int = 10_000_000) -> float:
    """Effective size from a full N-degree sample, streamed in chunks.

    Equivalent to ``effective_population_size(spec,
    sample_power_law_degrees(spec, seed))`` without materialising the
    sample; intended for community sizes in the 1e7-1e9 range.
    """
    rng = seed if isinstance(seed, np.random.Generator) \
        else np.random.default_rng(seed)
    dist = _TruncatedZipf(spec.nu, spec.z_min, spec.N - 1)
    remaining = spec.N
    s1 = 0.0
    s2 = 0.0
    while remaining > 0:
        n = min(chunk, remaining)
        z = dist.sample(n, rng).astype(float)
        s1 += z.sum()
        s2 += np.dot(z, z)
        remaining -= n
    zbar = s1 / spec.N
    z2bar = s2 / spec.N
    return (spec.N / spec.epsilon) * zbar * zbar / z2bar


def origination_rate(N: float, R: float, eta: float, epsilon: float,
                     diffusion: DiffusionParams) -> float:
    """Population rate of successful originations, ``N R eta Q(eps/N)``."""
    if min(N, R, eta, epsilon) <= 0:
        raise ValueError("N, R, eta and epsilon must all be positive")
    if epsilon / N > 1:
        raise ValueError("initial frequency eps/N exceeds 1")
    return N * R * eta * fixation_probability(epsilon / N, diffusion)
