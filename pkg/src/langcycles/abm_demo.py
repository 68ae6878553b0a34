"""Demonstration agent-based model with birth, death and evolving networks.

A deliberately over-featured model of a speech community: agents are born
to parents, inherit part of the parent's interaction network, expand their
network in adolescence with age homophily, interact at individually
varying, age-decaying rates, update stored behaviour by their own replace-
ment fraction, and carry individual innovation biases.  Its purpose is to
show that population-mean behaviour still follows the Wright-Fisher
diffusion: increments of the mean innovation frequency over short windows
have first and second moments proportional to x(1-x), with amplitudes
close to naive averages of the individual-level parameters.
"""

from __future__ import annotations

import heapq
import math
import random
from dataclasses import dataclass, field

import numpy as np

# event kinds, in tie-break order after (time, agent id)
_DEATH, _BIRTH, _EXPAND, _INTERACT = 0, 1, 2, 3
_RESAMPLE_CAP = 100       # birth-age redraws before the offspring is dropped
_PARTICIPATION_CAP = 50   # participation redraws before forcing one speaker


@dataclass(frozen=True)
class DemoParams:
    """All 23 demonstration-model parameters (defaults = reference setting)."""

    K: int = 1000              # carrying capacity
    mu_k: float = 2.0          # mean offspring count (geometric, from 0)
    mu_b: float = 30.0         # parent age at offspring birth, years
    sigma_b: float = 8.0
    mu_e: float = 18.0         # age at network expansion, years
    sigma_e: float = 4.0
    mu_d: float = 60.0         # lifespan, years
    sigma_d: float = 12.0
    mu_i: float = 3.0          # mean inherited interlocutors
    mu_i2: float = 10.0        # mean interlocutors after expansion
    h: float = 0.2             # age homophily at expansion
    w0: float = 1.0            # weight of retained interlocutors at expansion
    mu_R: float = 1.0          # interaction rate at birth, per year
    sigma_R: float = 0.1
    mu_r: float = 10.0         # rate-decrease factor, R_inf = R_0 / (1 + r)
    sigma_r: float = 10.0
    mu_theta: float = 20.0     # rate-decay timescale, years
    sigma_theta: float = 10.0
    q: float = 0.5             # per-interlocutor participation probability
    mu_eps: float = 0.15       # replacement fraction (Beta on [0, 1])
    sigma_eps: float = 0.15
    mu_chi: float = 0.0        # innovation bias (normal)
    sigma_chi: float = 0.005

    def beta_eps_shapes(self) -> tuple[float, float]:
        m, v = self.mu_eps, self.sigma_eps ** 2
        if v == 0:
            return math.inf, math.inf
        if v >= m * (1.0 - m):
            raise ValueError("sigma_eps too large for a Beta distribution")
        a = m * (m * (1.0 - m) / v - 1.0)
        return a, a * (1.0 - m) / m


@dataclass(frozen=True)
class DemoRun:
    """Sampled trajectory of one demonstration-model run."""

    times: np.ndarray = field(repr=False)
    mean_x: np.ndarray = field(repr=False)
    population: np.ndarray = field(repr=False)
    sample_interval: float
    restarts: int
    dropped_offspring: int
    isolated_interactions: int
    seed: int


def _gamma_draw(rng: random.Random, mean: float, sd: float) -> float:
    if sd == 0.0:
        return mean
    shape = (mean / sd) ** 2
    return rng.gammavariate(shape, sd * sd / mean)


class _Simulation:
    def __init__(self, params: DemoParams, seed: int):
        self.p = params
        self.rng = random.Random(seed)
        self.nprng = np.random.default_rng(seed ^ 0x5EED)
        cap = 4096
        self.birth_t = np.empty(cap)
        self.x = np.empty(cap)
        self.n_agents = 0
        self.scalars: list[dict] = []      # per-agent draws and schedules
        self.interloc: list[list[int]] = []
        self.alive: list[bool] = []
        self.alive_ids: list[int] = []
        self.pos: dict[int, int] = {}
        self.sum_x = 0.0
        self.heap: list = []
        self.restarts = 0
        self.dropped_offspring = 0
        self.isolated_interactions = 0
        a, b = params.beta_eps_shapes()
        self.eps_shapes = (a, b)

    # -- agent bookkeeping -------------------------------------------------
    def _grow(self):
        cap = self.birth_t.size * 2
        self.birth_t = np.resize(self.birth_t, cap)
        self.x = np.resize(self.x, cap)

    def add_agent(self, t: float, parent: int | None, x: float) -> int:
        p, rng = self.p, self.rng
        if self.n_agents == self.birth_t.size:
            self._grow()
        aid = self.n_agents
        self.n_agents += 1
        d = _gamma_draw(rng, p.mu_d, p.sigma_d)
        a_eps, b_eps = self.eps_shapes
        eps = p.mu_eps if math.isinf(a_eps) else rng.betavariate(a_eps, b_eps)
        chi = rng.gauss(p.mu_chi, p.sigma_chi)
        r0 = _gamma_draw(rng, p.mu_R, p.sigma_R)
        rdec = _gamma_draw(rng, p.mu_r, p.sigma_r)
        theta = _gamma_draw(rng, p.mu_theta, p.sigma_theta)
        self.birth_t[aid] = t
        self.x[aid] = x
        self.scalars.append({
            "death": t + d, "eps": eps, "chi": chi,
            "R0": r0, "Rinf": r0 / (1.0 + rdec), "theta": theta,
        })
        inher: list[int] = []
        if parent is not None:
            inher.append(parent)
            existing = [i for i in self.interloc[parent] if self.alive[i]]
            z = len(existing)
            if z:
                keep_p = min(1.0, p.mu_i / z)
                inher.extend(i for i in existing if rng.random() < keep_p)
        self.interloc.append(inher)
        self.alive.append(True)
        self.pos[aid] = len(self.alive_ids)
        self.alive_ids.append(aid)
        self.sum_x += x

        heapq.heappush(self.heap, (t + d, aid, _DEATH))
        heapq.heappush(self.heap,
                       (t + _gamma_draw(rng, p.mu_e, p.sigma_e), aid, _EXPAND))
        self._schedule_interaction(aid, t)
        # offspring schedule: geometric count, Gamma birth ages below d
        pk = 1.0 / (1.0 + p.mu_k)
        k = int(math.log(max(rng.random(), 1e-300)) / math.log(1.0 - pk))
        for _ in range(k):
            for _ in range(_RESAMPLE_CAP):
                b_age = _gamma_draw(rng, p.mu_b, p.sigma_b)
                if b_age <= d:
                    heapq.heappush(self.heap, (t + b_age, aid, _BIRTH))
                    break
            else:
                self.dropped_offspring += 1
        return aid

    def remove_agent(self, aid: int, t: float):
        self.alive[aid] = False
        self.sum_x -= self.x[aid]
        last = self.alive_ids[-1]
        i = self.pos.pop(aid)
        if last != aid:
            self.alive_ids[i] = last
            self.pos[last] = i
        self.alive_ids.pop()
        if not self.alive_ids:
            self.restarts += 1
            self.add_agent(t, None, float(self.x[aid]))

    # -- events -------------------------------------------------------------
    def _schedule_interaction(self, aid: int, t: float):
        # thinning with the current-age rate as majorant (R(a) is decreasing,
        # so accepting the next candidate with R(then)/R(now) is exact)
        rate_now = self._rate(aid, t)
        self.scalars[aid]["majorant"] = rate_now
        heapq.heappush(self.heap,
                       (t + self.rng.expovariate(rate_now), aid, _INTERACT))

    def _rate(self, aid: int, t: float) -> float:
        sc = self.scalars[aid]
        age = t - self.birth_t[aid]
        return sc["Rinf"] + (sc["R0"] - sc["Rinf"]) * math.exp(
            -age / sc["theta"])

    def handle_birth(self, parent: int, t: float):
        n = len(self.alive_ids)
        p = self.p
        if n >= p.K and self.rng.random() >= 1.0 - p.K / (n * p.mu_k):
            return
        if not self.alive[parent]:
            return
        self.add_agent(t, parent, float(self.x[parent]))

    def handle_expand(self, aid: int, t: float):
        p = self.p
        ids = np.array(self.alive_ids, dtype=np.int64)
        ids = ids[ids != aid]
        if ids.size == 0:
            self.interloc[aid] = []
            return
        current = set(i for i in self.interloc[aid] if self.alive[i])
        ages = t - self.birth_t[ids]
        own_age = t - self.birth_t[aid]
        w = np.exp(-p.h * np.abs(ages - own_age))
        if current:
            w[np.isin(ids, list(current))] = p.w0
        prob = np.minimum(1.0, p.mu_i2 * w / w.sum())
        marked = ids[self.nprng.random(ids.size) < prob]
        self.interloc[aid] = [int(i) for i in marked]

    def run(self, t_end: float, sample_interval: float, on_sample):
        heap = self.heap
        next_sample = 0.0
        while heap:
            t, aid, kind = heapq.heappop(heap)
            if t > t_end:
                heapq.heappush(heap, (t, aid, kind))
                break
            while next_sample <= t and next_sample <= t_end:
                on_sample(next_sample, self.sum_x, len(self.alive_ids))
                next_sample += sample_interval
            if kind == _DEATH:
                if self.alive[aid]:
                    self.remove_agent(aid, t)
            elif kind == _BIRTH:
                self.handle_birth(aid, t)
            elif kind == _EXPAND:
                if self.alive[aid]:
                    self.handle_expand(aid, t)
            elif kind == _INTERACT:
                if self.alive[aid]:
                    self._interact(aid, t)
        while next_sample <= t_end:
            on_sample(next_sample, self.sum_x, len(self.alive_ids))
            next_sample += sample_interval

    def _interact(self, aid: int, t: float):
        p, rng = self.p, self.rng
        sc = self.scalars[aid]
        majorant = sc["majorant"]
        rate_now = self._rate(aid, t)
        accept = rng.random() < rate_now / majorant
        self._schedule_interaction(aid, t)
        if not accept:
            return
        partners = [i for i in self.interloc[aid] if self.alive[i]]
        if len(partners) < len(self.interloc[aid]) / 2:
            self.interloc[aid] = partners
        if not partners:
            self.isolated_interactions += 1
            return
        chosen: list[int] = []
        for _ in range(_PARTICIPATION_CAP):
            chosen = [i for i in partners if rng.random() < p.q]
            if chosen:
                break
        else:
            chosen = [partners[rng.randrange(len(partners))]]
        y = sum(self.x[i] for i in chosen) / len(chosen)
        chi = sc["chi"]
        p_tau = (1.0 + chi) * y / (1.0 + chi * y)
        tau = 1.0 if rng.random() < min(max(p_tau, 0.0), 1.0) else 0.0
        eps = sc["eps"]
        old = self.x[aid]
        new = (1.0 - eps) * old + eps * tau
        self.x[aid] = new
        self.sum_x += new - old


def run_demo(params: DemoParams, duration: float, initial_x: float,
             seed: int = 0, sample_interval: float = 1.0,
             burn_in: float = 200.0) -> DemoRun:
    """Simulate the demonstration model and sample the population mean.

    The population is initialised with K agents and run for ``burn_in``
    years so the age structure, network and size settle; then every
    agent's innovation frequency is set to ``initial_x`` and the mean is
    recorded every ``sample_interval`` years for ``duration`` years.
    With no innovation source in this model, all-0 and all-1 are
    absorbing.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    sim = _Simulation(params, seed)
    for _ in range(params.K):
        sim.add_agent(-burn_in, None, 0.0)
    # founders have no parents: bootstrap their networks uniformly
    ids = list(range(params.K))
    for aid in ids:
        others = [i for i in ids if i != aid]
        k = min(len(others), int(params.mu_i2))
        sim.interloc[aid] = sim.rng.sample(others, k)

    # settle demography, then reset behaviour for the measurement phase
    times: list[float] = []
    means: list[float] = []
    pops: list[int] = []

    def discard(t, sx, n):
        pass

    sim.run(t_end=-1e-9, sample_interval=burn_in + 1.0, on_sample=discard)
    # reposition the clock: events before t=0 were consumed by run();
    # set every live agent's x to the initial condition
    for aid in sim.alive_ids:
        sim.x[aid] = initial_x
    sim.sum_x = initial_x * len(sim.alive_ids)

    def record(t, sx, n):
        times.append(t)
        means.append(sx / n if n else float("nan"))
        pops.append(n)

    sim.run(t_end=duration, sample_interval=sample_interval, on_sample=record)
    return DemoRun(
        times=np.array(times), mean_x=np.array(means),
        population=np.array(pops, dtype=np.int64),
        sample_interval=sample_interval,
        restarts=sim.restarts, dropped_offspring=sim.dropped_offspring,
        isolated_interactions=sim.isolated_interactions, seed=seed)


@dataclass(frozen=True)
class JumpMomentFit:
    """Binned jump moments with parabolic amplitude fits (per-year units)."""

    x_centers: np.ndarray = field(repr=False)
    counts: np.ndarray = field(repr=False)
    m1: np.ndarray = field(repr=False)
    m2: np.ndarray = field(repr=False)
    dt: float
    amplitude_m1: float
    amplitude_m2: float
    r_squared_m1: float
    r_squared_m2: float
    dropped_bins: int


def estimate_jump_moments(runs, dt: float = 10.0, n_bins: int = 9,
                          x_range: tuple[float, float] = (0.05, 0.95),
                          min_count: int = 25) -> JumpMomentFit:
    """Binned increment moments of the population mean, with parabola fits.

    Accepts one DemoRun or a sequence.  Increments are taken over windows
    of ``dt`` years, binned by the window's starting mean; each moment is
    fitted by least squares (bins weighted by sample count) to
    ``A x (1 - x) dt``, and the amplitudes are reported per year.
    Underpopulated bins are dropped and counted.
    """
    if isinstance(runs, DemoRun):
        runs = [runs]
    xs, dxs = [], []
    for run in runs:
        stride = max(1, int(round(dt / run.sample_interval)))
        x = run.mean_x[::stride]
        xs.append(x[:-1])
        dxs.append(np.diff(x))
    x0 = np.concatenate(xs)
    dx = np.concatenate(dxs)
    ok = np.isfinite(x0) & np.isfinite(dx)
    x0, dx = x0[ok], dx[ok]

    edges = np.linspace(x_range[0], x_range[1], n_bins + 1)
    which = np.digitize(x0, edges) - 1
    centers = 0.5 * (edges[:-1] + edges[1:])
    counts = np.zeros(n_bins, dtype=np.int64)
    m1 = np.full(n_bins, np.nan)
    m2 = np.full(n_bins, np.nan)
    for b in range(n_bins):
        sel = which == b
        counts[b] = int(sel.sum())
        if counts[b]:
            m1[b] = dx[sel].mean()
            m2[b] = (dx[sel] ** 2).mean()
    keep = counts >= min_count
    dropped = int(np.sum(~keep & (counts > 0)))

    phi = centers * (1.0 - centers) * dt

    def wfit(m):
        w = counts[keep].astype(float)
        f, y = phi[keep], m[keep]
        amp = float(np.sum(w * f * y) / np.sum(w * f * f))
        resid = y - amp * f
        ybar = np.sum(w * y) / np.sum(w)
        ss_res = float(np.sum(w * resid ** 2))
        ss_tot = float(np.sum(w * (y - ybar) ** 2))
        r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else float("nan")
        return amp / dt, r2

    a1, r2_1 = wfit(m1)
    a2, r2_2 = wfit(m2)
    return JumpMomentFit(
        x_centers=centers, counts=counts, m1=m1, m2=m2, dt=dt,
        amplitude_m1=a1, amplitude_m2=a2,
        r_squared_m1=r2_1, r_squared_m2=r2_2, dropped_bins=dropped)


def naive_estimates(params: DemoParams, n_mc: int = 100_000, seed: int = 0,
                    mean_population: float | None = None,
                    ) -> tuple[float, float, float]:
    """Naive (T_M, s, Ne) by averaging the individual-level distributions.

    The population-average interaction rate is the renewal average
    E[integral of R over a lifespan] / E[lifespan], estimated by Monte
    Carlo over the lifespan and rate-parameter distributions.  The
    replacement-fraction moments come from the Beta parameters, the bias
    is its mean, and Ne = N_mean * mean(eps) / mean(eps^2).
    """
    rng = random.Random(seed)
    p = params
    num = 0.0
    den = 0.0
    for _ in range(n_mc):
        d = _gamma_draw(rng, p.mu_d, p.sigma_d)
        r0 = _gamma_draw(rng, p.mu_R, p.sigma_R)
        rdec = _gamma_draw(rng, p.mu_r, p.sigma_r)
        theta = _gamma_draw(rng, p.mu_theta, p.sigma_theta)
        rinf = r0 / (1.0 + rdec)
        num += rinf * d + (r0 - rinf) * theta * (1.0 - math.exp(-d / theta))
        den += d
    r_bar = num / den
    eps_mean = p.mu_eps
    eps_sq = p.mu_eps ** 2 + p.sigma_eps ** 2
    n_mean = float(params.K if mean_population is None else mean_population)
    t_m = 1.0 / (r_bar * eps_mean)
    ne = n_mean * eps_mean / eps_sq
    return t_m, p.mu_chi, ne
