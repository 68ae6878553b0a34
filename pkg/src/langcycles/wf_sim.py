"""Forward Monte Carlo simulation of the Wright-Fisher speaker model.

Speakers carry an innovation frequency x in [0, 1].  Updates are
synchronous at rate R: every speaker samples one instance of behaviour
from its neighbourhood (innovation weighted 1 + s, plus a misperception
probability eta), then keeps a fraction 1 - epsilon of its stored
behaviour, x' = (1 - epsilon) x + epsilon tau.  Homogeneous populations
use the complete graph (self excluded); networked populations use a
configuration-model graph built from a power-law degree sample.

Batches of independent runs are vectorised as (runs x speakers) arrays,
which keeps a 10^5-run fixation experiment in seconds-to-minutes range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fixation import (DiffusionParams, NetworkSpec, fixation_probability,
                       fixation_time_moments, gamma_params,
                       sample_power_law_degrees, effective_population_size)

ABSORB_TOL = 1e-9   # |x - boundary| below this counts as absorbed (eps < 1)
_CHUNK_RUNS = 20_000


@dataclass(frozen=True)
class SimConfig:
    """One Wright-Fisher simulation setting."""

    N: int
    epsilon: float = 1.0
    s: float = 0.0
    eta: float = 0.0
    R: float = 1.0                      # updates per year
    network: NetworkSpec | None = None  # None = homogeneous (complete graph)
    x0_speakers: int = 1                # initial innovators, at level epsilon
    max_steps: int = 10_000_000
    seed: int = 0

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("need at least two speakers")
        if not 0 < self.epsilon <= 1:
            raise ValueError("epsilon must be in (0, 1]")
        if not 0 <= self.x0_speakers <= self.N:
            raise ValueError("x0_speakers outside population")
        if self.R <= 0:
            raise ValueError("update rate must be positive")

    @property
    def memory_time(self) -> float:
        return 1.0 / (self.R * self.epsilon)

    def diffusion(self) -> DiffusionParams:
        """Matching diffusion parameters (homogeneous: Ne = N / epsilon)."""
        if self.network is None:
            ne = self.N / self.epsilon
        else:
            degs = sample_power_law_degrees(self.network, self.seed + 101)
            ne = effective_population_size(self.network, degs)
        return DiffusionParams(Ne=ne, s=self.s, T_M=self.memory_time)


@dataclass(frozen=True)
class SimOutcome:
    """Result of a single run."""

    fixed: bool
    lost: bool
    truncated: bool
    time: float                 # years to absorption (or truncation)
    trajectory: np.ndarray | None = field(default=None, repr=False)


def _perception_probability(xbar, s, eta):
    return ((1.0 - xbar) * eta + (1.0 + s) * xbar) / (1.0 + xbar * s)


def _neighbour_matrix(network: NetworkSpec, rng) -> list[np.ndarray]:
    """Configuration-model neighbour lists from a power-law degree sample.

    Stub pairing with self-loops and duplicate edges discarded; isolated
    speakers are given one uniformly chosen neighbour so every speaker can
    interact.
    """
    degs = sample_power_law_degrees(network, rng)
    stubs = np.repeat(np.arange(network.N), degs)
    rng.shuffle(stubs)
    if stubs.size % 2:
        stubs = stubs[:-1]
    a, b = stubs[0::2], stubs[1::2]
    neigh = [set() for _ in range(network.N)]
    for i, j in zip(a, b):
        if i != j:
            neigh[int(i)].add(int(j))
            neigh[int(j)].add(int(i))
    for i in range(network.N):
        if not neigh[i]:
            j = int(rng.integers(network.N - 1))
            j = j + 1 if j >= i else j
            neigh[i].add(j)
            neigh[j].add(i)
    return [np.fromiter(s, dtype=np.int64) for s in neigh]


def simulate_run(cfg: SimConfig, record_every: int = 0) -> SimOutcome:
    """Run one population to fixation, loss, or the step cap.

    With eta > 0 the all-zero state is not absorbing (new innovations keep
    arising), so only fixation terminates such runs.  ``record_every``
    stores the population mean every that many update steps.
    """
    rng = np.random.default_rng(cfg.seed)
    x = np.zeros(cfg.N)
    x[:cfg.x0_speakers] = cfg.epsilon
    neigh = None if cfg.network is None else _neighbour_matrix(cfg.network, rng)
    traj = [] if record_every else None
    total = x.sum()
    for step in range(1, cfg.max_steps + 1):
        if cfg.network is None:
            xbar = (total - x) / (cfg.N - 1)
        else:
            xbar = np.array([x[nb].mean() for nb in neigh])
        p = _perception_probability(xbar, cfg.s, cfg.eta)
        tau = rng.random(cfg.N) < p
        x = (1.0 - cfg.epsilon) * x + cfg.epsilon * tau
        total = x.sum()
        if record_every and step % record_every == 0:
            traj.append(total / cfg.N)
        if x.min() >= 1.0 - ABSORB_TOL:
            return SimOutcome(True, False, False, step / cfg.R,
                              np.array(traj) if traj is not None else None)
        if cfg.eta == 0.0 and x.max() <= ABSORB_TOL:
            return SimOutcome(False, True, False, step / cfg.R,
                              np.array(traj) if traj is not None else None)
    return SimOutcome(False, False, True, cfg.max_steps / cfg.R,
                      np.array(traj) if traj is not None else None)


def _batch_absorption_steps(cfg: SimConfig, n_runs: int,
                            rng: np.random.Generator):
    """Steps-to-absorption for a batch of homogeneous eta = 0 runs.

    Returns (fixed_steps, lost_steps, n_truncated); vectorised over runs.
    """
    if cfg.network is not None:
        raise ValueError("batch engine supports homogeneous populations only")
    fixed_steps, lost_steps = [], []
    n_trunc = 0
    remaining = n_runs
    while remaining > 0:
        runs = min(_CHUNK_RUNS, remaining)
        remaining -= runs
        x = np.zeros((runs, cfg.N))
        x[:, :cfg.x0_speakers] = cfg.epsilon
        steps = np.zeros(runs, dtype=np.int64)
        active = np.arange(runs)
        for step in range(1, cfg.max_steps + 1):
            xa = x[active]
            xbar = (xa.sum(axis=1)[:, None] - xa) / (cfg.N - 1)
            p = _perception_probability(xbar, cfg.s, cfg.eta)
            xa = (1.0 - cfg.epsilon) * xa + cfg.epsilon * (
                rng.random(xa.shape) < p)
            x[active] = xa
            hi = xa.min(axis=1) >= 1.0 - ABSORB_TOL
            lo = xa.max(axis=1) <= ABSORB_TOL
            done = hi | lo
            if done.any():
                steps[active[done]] = step
                fixed_steps.extend(steps[active[hi]].tolist())
                lost_steps.extend(steps[active[lo]].tolist())
                active = active[~done]
            if active.size == 0:
                break
        n_trunc += active.size
    return (np.array(fixed_steps, dtype=float),
            np.array(lost_steps, dtype=float), n_trunc)


def fixation_fraction(cfg: SimConfig, n_runs: int):
    """Fraction of runs that fix, with its binomial standard error."""
    rng = np.random.default_rng(cfg.seed)
    fixed, lost, trunc = _batch_absorption_steps(cfg, n_runs, rng)
    if trunc:
        raise RuntimeError(f"{trunc} runs hit the step cap; raise max_steps")
    p = fixed.size / n_runs
    return p, math.sqrt(p * (1.0 - p) / n_runs)


@dataclass(frozen=True)
class FixationTimeDistribution:
    """Conditional fixation-time sample with its Gamma-approximation overlay."""

    n_runs: int
    n_fixed: int
    mean: float
    variance: float
    bin_edges: np.ndarray = field(repr=False)
    counts: np.ndarray = field(repr=False)
    gamma_alpha: float = float("nan")
    gamma_beta: float = float("nan")
    gamma_density: np.ndarray | None = field(default=None, repr=False)
    too_few_fixations: bool = False


def fixation_time_distribution(cfg: SimConfig, n_runs: int,
                               bins: int = 40) -> FixationTimeDistribution:
    """Histogram and moments of fixation times conditioned on fixation.

    Requires eta = 0 (innovations cannot re-arise, so conditioning on
    fixation is well defined).  Overlays the Gamma density whose (alpha,
    beta) derive from the matching diffusion's fixation moments; fewer
    than 100 fixation events sets the statistical-insufficiency flag.
    """
    if cfg.eta != 0.0:
        raise ValueError("conditional fixation times need eta = 0")
    rng = np.random.default_rng(cfg.seed)
    fixed, _, trunc = _batch_absorption_steps(cfg, n_runs, rng)
    times = fixed / cfg.R
    too_few = times.size < 100
    if times.size == 0:
        edges = np.linspace(0.0, 1.0, bins + 1)
        return FixationTimeDistribution(
            n_runs=n_runs, n_fixed=0, mean=float("nan"),
            variance=float("nan"), bin_edges=edges,
            counts=np.zeros(bins), too_few_fixations=True)
    edges = np.linspace(0.0, float(times.max()) * 1.02, bins + 1)
    counts, _ = np.histogram(times, bins=edges)
    moments = fixation_time_moments(cfg.diffusion())
    alpha, beta = gamma_params(moments)
    centers = 0.5 * (edges[:-1] + edges[1:])
    log_density = (alpha * math.log(beta) - math.lgamma(alpha)
                   + (alpha - 1.0) * np.log(centers) - beta * centers)
    return FixationTimeDistribution(
        n_runs=n_runs, n_fixed=int(times.size),
        mean=float(times.mean()), variance=float(times.var(ddof=1)),
        bin_edges=edges, counts=counts,
        gamma_alpha=alpha, gamma_beta=beta,
        gamma_density=np.exp(log_density),
        too_few_fixations=too_few,
    )


@dataclass(frozen=True)
class InterferencePoint:
    """One interference measurement: P(first innovation fixes) at strength I."""

    interference: float        # I = omega_successful * mean fixation time
    seed_rate: float           # raw seeding rate of second innovations, /yr
    p_first_fixes: float
    std_error: float
    n_counted: int
    expected: float            # exp(-I)


def interference_experiment(cfg: SimConfig, omega_grid, n_runs: int,
                            ) -> list[InterferencePoint]:
    """Two-innovation competition: how often does the first change complete?

    The first innovation is seeded in one speaker; a second, competing
    innovation (one further step along the cycle, carrying the same
    selective advantage over its predecessor) is seeded into random
    speakers as a Poisson process with each requested raw rate omega.
    Runs in which the first innovation dies before any second seeding
    occurred are ordinary failed originations and are discarded; among the
    rest, fixation of the first innovation counts as success.

    The interference coordinate I rescales each raw rate by the fixation
    probability of a fresh seed, giving the rate of *successful* second
    originations, times the mean fixation time.
    """
    diff = cfg.diffusion()
    q_seed = fixation_probability(cfg.epsilon / cfg.N, diff)
    t_fix = fixation_time_moments(diff).mean
    out = []
    for gi, omega in enumerate(omega_grid):
        rng = np.random.default_rng([cfg.seed, gi])
        wins = 0
        losses = 0
        remaining = n_runs
        while remaining > 0:
            runs = min(_CHUNK_RUNS // 4, remaining)
            remaining -= runs
            w, l = _interference_batch(cfg, omega, runs, rng)
            wins += w
            losses += l
        counted = wins + losses
        p = wins / counted if counted else float("nan")
        se = (math.sqrt(p * (1.0 - p) / counted) if counted else float("nan"))
        i_val = omega * q_seed * t_fix
        out.append(InterferencePoint(
            interference=i_val, seed_rate=omega, p_first_fixes=p,
            std_error=se, n_counted=counted, expected=math.exp(-i_val)))
    return out


def _interference_batch(cfg: SimConfig, omega: float, runs: int,
                        rng: np.random.Generator) -> tuple[int, int]:
    """(successes, interference losses) for one batch of two-variant runs."""
    N, eps, s = cfg.N, cfg.epsilon, cfg.s
    x1 = np.zeros((runs, N))
    x2 = np.zeros((runs, N))
    x1[:, 0] = eps
    seeded = np.zeros(runs, dtype=bool)
    next_seed = rng.exponential(1.0 / omega, runs)  # years
    wins = 0
    losses = 0
    active = np.arange(runs)
    dt = 1.0 / cfg.R
    for step in range(1, cfg.max_steps + 1):
        t_now = step * dt
        a1, a2 = x1[active], x2[active]
        s1 = (a1.sum(axis=1)[:, None] - a1) / (N - 1)
        s2 = (a2.sum(axis=1)[:, None] - a2) / (N - 1)
        w0 = 1.0 - s1 - s2
        w1 = s1 * (1.0 + s)
        w2 = s2 * (1.0 + s) ** 2
        z = w0 + w1 + w2
        u = rng.random(a1.shape) * z
        tau1 = (u >= w0) & (u < w0 + w1)
        tau2 = u >= w0 + w1
        a1 = (1.0 - eps) * a1 + eps * tau1
        a2 = (1.0 - eps) * a2 + eps * tau2
        # Poisson seeding of the second innovation
        due = next_seed[active] <= t_now
        if due.any():
            rows = np.flatnonzero(due)
            cols = rng.integers(N, size=rows.size)
            a1[rows, cols] *= (1.0 - eps)
            a2[rows, cols] = (1.0 - eps) * a2[rows, cols] + eps
            seeded[active[rows]] = True
            next_seed[active[rows]] = t_now + rng.exponential(
                1.0 / omega, rows.size)
        x1[active] = a1
        x2[active] = a2
        first_fixed = a1.min(axis=1) >= 1.0 - ABSORB_TOL
        first_dead = a1.max(axis=1) <= ABSORB_TOL
        done = first_fixed | first_dead
        if done.any():
            wins += int(first_fixed.sum())
            losses += int((first_dead & seeded[active]).sum())
            active = active[~done]
        if active.size == 0:
            break
    return wins, losses
