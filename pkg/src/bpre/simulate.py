"""Trajectory generation for the branching process in random environment.

Populations are advanced with aggregate samplers instead of per-individual
loops. Three regimes keep this exact while populations are small and
cheap once they are astronomically large:

* A (count <= exact_cap): exact aggregate laws (multinomial cells,
  Poisson, negative binomial, deterministic multiples);
* B (exact_cap < count <= aggregate_cap): the same laws, but any cell with
  mean above ``normal_approx_min_mean`` is a rounded Gaussian with matched
  mean and variance;
* C (count > aggregate_cap): log-scale, ``log Z += log A + log Delta`` with
  ``log Delta ~ N(-v/2Z, v/Z)``, ``v = Var(xi/A)``. Extinction is not
  modelled here; from 1e12 individuals its probability is far below 1e-100.

Randomness: stream ``stream_id`` is lane ``stream_id % BLOCK_SIZE`` of block
``stream_id // BLOCK_SIZE``. Each (seed, block, generation) triple keys its
own Philox stream, and blocks are merged in order, so any trajectory is a
pure function of (seed, stream_id) whatever the worker count.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from scipy import special

from .envmodel import EnvironmentModel, OffspringLaw
from .errors import BudgetExceeded, ModelError
from .numerics import ordered_map, stream_generator

BLOCK_SIZE = 8192
BUDGET_FACTOR = 1000


@dataclass(frozen=True)
class SimPolicy:
    exact_cap: int = 10**4
    aggregate_cap: float = 1e12
    survival_margin: int = 20
    normal_approx_min_mean: float = 1e6

    def __post_init__(self):
        if not self.exact_cap < self.aggregate_cap:
            raise ModelError("exact_cap must be below aggregate_cap")
        if self.aggregate_cap > 2.0**52:
            raise ModelError("aggregate_cap must keep counts exactly representable")
        if self.survival_margin < 0:
            raise ModelError("survival_margin must be >= 0")
        if not self.normal_approx_min_mean > 0:
            raise ModelError("normal_approx_min_mean must be positive")

    def with_margin(self, m: int) -> "SimPolicy":
        return SimPolicy(self.exact_cap, self.aggregate_cap, m, self.normal_approx_min_mean)


@dataclass(frozen=True)
class Exact:
    count: int


@dataclass(frozen=True)
class LogScale:
    logz: float
    approximate: bool = True


PopulationState = Exact | LogScale


# --- aggregate samplers -----------------------------------------------------

def _rounded_gaussian(mean, var, rng, upper=None):
    x = np.rint(mean + np.sqrt(var) * rng.standard_normal(mean.shape))
    x = np.maximum(x, 0.0)
    if upper is not None:
        x = np.minimum(x, upper)
    return x


def _binomial_cells(n: np.ndarray, p: float, approx: np.ndarray, rng, thr: float) -> np.ndarray:
    out = np.empty(n.shape, dtype=np.float64)
    mean = n * p
    big = approx & (mean > thr)
    small = ~big
    out[small] = rng.binomial(n[small].astype(np.int64), p)
    if big.any():
        out[big] = _rounded_gaussian(mean[big], mean[big] * (1.0 - p), rng, upper=n[big])
    return out


def _poisson_cells(mean: np.ndarray, approx: np.ndarray, rng, thr: float) -> np.ndarray:
    out = np.empty(mean.shape, dtype=np.float64)
    big = approx & (mean > thr)
    small = ~big
    out[small] = rng.poisson(mean[small])
    if big.any():
        out[big] = _rounded_gaussian(mean[big], mean[big], rng)
    return out


def aggregate_offspring(law: OffspringLaw, count: np.ndarray, rng: np.random.Generator,
                        approx: np.ndarray, thr: float) -> np.ndarray:
    """Total offspring of ``count`` iid individuals with law ``law`` (vectorized).

    ``approx`` marks lanes in regime B, where Gaussian cells are allowed.
    """
    count = np.asarray(count, dtype=np.float64)
    if law.kind == "dirac":
        return law.m * count
    if law.kind == "poisson":
        return _poisson_cells(count * law.a, approx, rng, thr)
    if law.kind == "geometric":
        p = law.p
        out = np.empty(count.shape, dtype=np.float64)
        mean = count * (1.0 - p) / p
        big = approx & (mean > thr)
        small = ~big
        out[small] = rng.negative_binomial(count[small], p)
        if big.any():
            out[big] = _rounded_gaussian(mean[big], mean[big] / p, rng)
        return out
    # explicit pmf: multinomial through successive conditional binomials
    pmf = np.asarray(law.pmf)
    cats = [j for j in range(pmf.size) if pmf[j] > 0]
    tail = np.cumsum(pmf[cats][::-1])[::-1]  # P(category >= current among cats)
    rem = count.copy()
    total = np.zeros_like(count)
    for idx, j in enumerate(cats[:-1]):
        pc = min(1.0, pmf[j] / tail[idx])
        nj = _binomial_cells(rem, pc, approx, rng, thr)
        total += j * nj
        rem -= nj
    total += cats[-1] * rem
    return total


def _offspring_logscale_var(law: OffspringLaw) -> float:
    return law.variance / law.mean**2


def step(state: PopulationState, law: OffspringLaw, rng: np.random.Generator,
         policy: SimPolicy = SimPolicy()) -> PopulationState:
    """Advance one population by one generation under a fixed offspring law."""
    if isinstance(state, LogScale):
        v = _offspring_logscale_var(law)
        z = math.exp(state.logz)
        delta = -v / (2 * z) + math.sqrt(v / z) * rng.standard_normal()
        return LogScale(state.logz + math.log(law.mean) + delta)
    if state.count == 0:
        return state
    approx = np.array([state.count > policy.exact_cap])
    new = float(aggregate_offspring(law, np.array([float(state.count)]), rng, approx,
                                    policy.normal_approx_min_mean)[0])
    if new > policy.aggregate_cap:
        return LogScale(math.log(new))
    return Exact(int(new))


# --- block simulation -------------------------------------------------------

@dataclass
class BlockPaths:
    """All lanes of one block, generations 0..n_max (rows)."""

    block: int
    count: np.ndarray
    logz: np.ndarray
    logpi: np.ndarray
    logscale: np.ndarray
    env: np.ndarray

    @property
    def alive(self) -> np.ndarray:
        return self.logscale | (self.count > 0)

    @property
    def stream_ids(self) -> np.ndarray:
        lanes = self.count.shape[1]
        return self.block * BLOCK_SIZE + np.arange(lanes, dtype=np.int64)


def _draw_environment(model: EnvironmentModel, u: np.ndarray):
    """Map uniforms to (environment record, mean A) per lane."""
    if model.is_mixture:
        cum = np.cumsum(model.weights)
        idx = np.minimum(np.searchsorted(cum, u, side="right"), len(model.weights) - 1)
        return idx, np.array([l.mean for l in model.laws])[idx]
    lo, hi = model.log_a_bounds
    if model.kind == "poisson_loguniform":
        x = lo + u * (hi - lo)
    else:
        sd = math.sqrt(model.v)
        pa = special.ndtr((lo - model.m) / sd)
        pb = special.ndtr((hi - model.m) / sd)
        x = np.clip(model.m + sd * special.ndtri(pa + u * (pb - pa)), lo, hi)
    a = np.exp(x)
    return a, a


def simulate_block(model: EnvironmentModel, n_max: int, seed: int, block: int,
                   policy: SimPolicy = SimPolicy(), lanes: int = BLOCK_SIZE) -> BlockPaths:
    if n_max < 1:
        raise ModelError("n_max must be >= 1")
    shape = (n_max + 1, lanes)
    count = np.zeros(shape)
    logz = np.zeros(shape)
    logpi = np.zeros(shape)
    logscale = np.zeros(shape, dtype=bool)
    env = np.zeros((n_max, lanes), dtype=np.int64 if model.is_mixture else np.float64)
    count[0] = 1.0
    thr = policy.normal_approx_min_mean
    for g in range(n_max):
        rng = stream_generator(seed, block, g)
        rec, A = _draw_environment(model, rng.random(lanes))
        env[g] = rec
        logpi[g + 1] = logpi[g] + np.log(A)
        c, lz, ls = count[g], logz[g], logscale[g]
        nc, nlz, nls = c.copy(), lz.copy(), ls.copy()
        exact_alive = (~ls) & (c > 0)
        if model.is_mixture:
            groups = [(law, exact_alive & (rec == i), ls & (rec == i))
                      for i, law in enumerate(model.laws)]
            for law, ex, lg in groups:
                if ex.any():
                    nc[ex] = aggregate_offspring(law, c[ex], rng, c[ex] > policy.exact_cap, thr)
                if lg.any():
                    v = _offspring_logscale_var(law)
                    z = np.exp(lz[lg])
                    nlz[lg] = (lz[lg] + math.log(law.mean) - v / (2 * z)
                               + np.sqrt(v / z) * rng.standard_normal(z.shape))
        else:
            ex = exact_alive
            if ex.any():
                nc[ex] = _poisson_cells(c[ex] * rec[ex], c[ex] > policy.exact_cap, rng, thr)
            if ls.any():
                a = rec[ls]
                z = np.exp(lz[ls])
                v = 1.0 / a
                nlz[ls] = lz[ls] + np.log(a) - v / (2 * z) + np.sqrt(v / z) * rng.standard_normal(z.shape)
        # log Z accumulated through exact ratios so deterministic growth matches log Pi bitwise
        grew = exact_alive & (nc > 0)
        nlz[grew] = lz[grew] + np.log(nc[grew] / c[grew])
        died = exact_alive & (nc == 0)
        nlz[died] = -np.inf
        nlz[(~ls) & (c == 0)] = -np.inf
        to_log = grew & (nc > policy.aggregate_cap)
        nls[to_log] = True
        nc[nls] = np.nan
        count[g + 1], logz[g + 1], logscale[g + 1] = nc, nlz, nls
    return BlockPaths(block, count, logz, logpi, logscale, env)


def iter_blocks(model: EnvironmentModel, n_max: int, seed: int, policy: SimPolicy = SimPolicy(),
                threads: int = 1, first_block: int = 0, stop_block: int | None = None
                ) -> Iterator[BlockPaths]:
    """Blocks ``first_block, first_block+1, ...`` in order, computed in batches."""
    batch = max(1, threads) * 2
    for start in itertools.count(first_block, batch):
        stop = start + batch if stop_block is None else min(start + batch, stop_block)
        if stop <= start:
            return
        yield from ordered_map(lambda b: simulate_block(model, n_max, seed, b, policy),
                               range(start, stop), threads)


# --- single trajectories ----------------------------------------------------

@dataclass
class Trajectory:
    stream_id: int
    env_record: np.ndarray
    states: list
    logz: np.ndarray
    logpi: np.ndarray
    alive: np.ndarray

    @property
    def n_max(self) -> int:
        return len(self.states) - 1


def simulate_trajectory(model: EnvironmentModel, n_max: int, stream_id: int, seed: int,
                        policy: SimPolicy = SimPolicy()) -> Trajectory:
    """One trajectory; identical to lane ``stream_id`` of any ensemble with this seed."""
    block, lane = divmod(int(stream_id), BLOCK_SIZE)
    bp = simulate_block(model, n_max, seed, block, policy)
    states = [LogScale(float(bp.logz[g, lane])) if bp.logscale[g, lane]
              else Exact(int(bp.count[g, lane])) for g in range(n_max + 1)]
    return Trajectory(int(stream_id), bp.env[:, lane].copy(), states, bp.logz[:, lane].copy(),
                      bp.logpi[:, lane].copy(), bp.alive[:, lane].copy())


# --- ensembles --------------------------------------------------------------

@dataclass
class Ensemble:
    """Trajectories at horizon ``n``; survivor-filtered unless ``margin`` is None.

    ``all_log_pi`` holds log Pi_n of every attempted stream (stream order), the
    unconditional reference sample used by control-variate estimators.
    """

    n: int
    margin: int | None
    stream_ids: np.ndarray
    alive: np.ndarray
    log_z: np.ndarray
    log_pi: np.ndarray
    attempted: int
    survived_to_n: int
    survived_to_n_m: int
    all_log_pi: np.ndarray
    checkpoints: dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def size(self) -> int:
        return int(self.log_z.size)

    @property
    def survival_fraction(self) -> float:
        return self.survived_to_n_m / self.attempted

    def survivors_log_z(self) -> np.ndarray:
        return self.log_z[self.alive]

    def to_csv(self, path: Path | str) -> None:
        gens = sorted(self.checkpoints)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["stream_id", "alive_n", f"logZ_{self.n}"] + [f"logZ_{g}" for g in gens])
            for i in range(self.size):
                w.writerow([int(self.stream_ids[i]), int(self.alive[i]), repr(float(self.log_z[i]))]
                           + [repr(float(self.checkpoints[g][i])) for g in gens])


def survivor_ensemble(model: EnvironmentModel, n: int, n_target: int, seed: int,
                      policy: SimPolicy = SimPolicy(), threads: int = 1,
                      checkpoints: Sequence[int] = ()) -> Ensemble:
    """First ``n_target`` streams (in stream order) with ``Z_{n+margin} > 0``."""
    if n < 1 or n_target < 1:
        raise ModelError("n and n_target must be >= 1")
    m = policy.survival_margin
    horizon = max([n + m, *checkpoints])
    budget = BUDGET_FACTOR * n_target
    ids, lz, lp, allpi = [], [], [], []
    cps = {g: [] for g in checkpoints}
    got = attempted = surv_n = surv_nm = 0
    for bp in iter_blocks(model, horizon, seed, policy, threads):
        alive = bp.alive
        keep = alive[n + m]
        need = n_target - got
        if int(keep.sum()) >= need:
            last = int(np.flatnonzero(keep)[need - 1])
            cut = last + 1
        else:
            cut = keep.size
        sel = keep[:cut]
        ids.append(bp.stream_ids[:cut][sel])
        lz.append(bp.logz[n, :cut][sel])
        lp.append(bp.logpi[n, :cut][sel])
        allpi.append(bp.logpi[n, :cut])
        for g in checkpoints:
            cps[g].append(bp.logz[g, :cut][sel])
        attempted += cut
        surv_n += int(alive[n, :cut].sum())
        surv_nm += int(sel.sum())
        got += int(sel.sum())
        if got >= n_target:
            break
        if attempted >= budget:
            raise BudgetExceeded(
                f"only {got} of {n_target} survivors after {attempted} attempts; "
                "model is close to critical")
    log_z = np.concatenate(lz)
    return Ensemble(n, m, np.concatenate(ids), np.ones(log_z.size, dtype=bool), log_z,
                    np.concatenate(lp), attempted, surv_n, surv_nm, np.concatenate(allpi),
                    {g: np.concatenate(v) for g, v in cps.items()})


def raw_ensemble(model: EnvironmentModel, n: int, size: int, seed: int,
                 policy: SimPolicy = SimPolicy(), threads: int = 1,
                 checkpoints: Sequence[int] = ()) -> Ensemble:
    """Streams ``0..size-1`` at horizon ``n`` without any survival filter."""
    horizon = max([n, *checkpoints])
    nblocks = -(-size // BLOCK_SIZE)
    parts = list(iter_blocks(model, horizon, seed, policy, threads, stop_block=nblocks))
    def cat(rows):
        return np.concatenate(rows)[:size]
    alive = cat([bp.alive[n] for bp in parts])
    log_pi = cat([bp.logpi[n] for bp in parts])
    m_alive = alive
    if checkpoints:
        m_alive = cat([bp.alive[max(checkpoints)] for bp in parts])
    return Ensemble(n, None, np.arange(size, dtype=np.int64), alive,
                    cat([bp.logz[n] for bp in parts]), log_pi, size, int(alive.sum()),
                    int(m_alive.sum()), log_pi,
                    {g: cat([bp.logz[g] for bp in parts]) for g in checkpoints})
