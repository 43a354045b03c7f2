"""Monte Carlo checks of the limit theorems for log Z_n: the central limit
theorem, the renewal theorem, and the decay estimates on small populations,
negative moments, the survival gap and log-moments."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .envmodel import EnvironmentModel
from .errors import HypothesisViolation, ModelError
from .numerics import dkw_bound, geometric_fit, norm_cdf, pairwise_sum, sup_distance
from .oracle import iter_exact
from .simulate import BLOCK_SIZE, Ensemble, SimPolicy, iter_blocks, survivor_ensemble

DECAY_KINDS = ("small_pop", "neg_moment", "survival_gap", "log_moment")


@dataclass(frozen=True)
class CltResult:
    n: int
    ks: float
    dkw: float
    size: int


def clt_statistic(ensemble: Ensemble, model: EnvironmentModel, n: int | None = None) -> CltResult:
    """Kolmogorov-Smirnov distance of standardized survivor log Z_n to Phi."""
    n = ensemble.n if n is None else n
    if not model.sigma2 > 0:
        raise ModelError("degenerate input: sigma = 0")
    L = ensemble.survivors_log_z()
    if L.size == 0:
        raise ModelError("empty ensemble")
    z = np.sort((L - n * model.mu) / (model.sigma * math.sqrt(n)))
    return CltResult(n, sup_distance(z, norm_cdf(z)), dkw_bound(z.size), z.size)


# --- renewal ----------------------------------------------------------------

@dataclass(frozen=True)
class RenewalEstimate:
    y: float
    B: float
    C: float
    estimate: float
    stderr: float
    target: float
    horizon: int
    size: int
    unfinished: float  # fraction of survivors not yet beyond the window at the horizon

    def interval(self, z: float = 1.96) -> tuple[float, float]:
        return self.estimate - z * self.stderr, self.estimate + z * self.stderr

    def row(self) -> list:
        return [repr(self.y), repr(self.B), repr(self.C), repr(self.estimate),
                repr(self.stderr), repr(self.target)]


def renewal_horizon(model: EnvironmentModel, y: float, C: float, extra: int = 20) -> int:
    h0 = math.ceil((y + C) / model.mu)
    return math.ceil((y + C + 5 * model.sigma * math.sqrt(h0)) / model.mu) + extra


def visit_counts(model: EnvironmentModel, windows: Sequence[tuple[float, float]], y: float, N: int,
                 seed: int, policy: SimPolicy = SimPolicy(), threads: int = 1):
    """Per-survivor visit counts ``#{n : log Z_n in y + [B, C]}`` for each window."""
    if model.lattice:
        raise HypothesisViolation("nonlattice", "nonlattice required for the renewal estimate")
    if not y > 0:
        raise ModelError("y must be positive")
    for B, C in windows:
        if not 0 <= B < C:
            raise ModelError("need 0 <= B < C")
    c_max = max(C for _, C in windows)
    H = renewal_horizon(model, y, c_max)
    ens = survivor_ensemble(model, H, N, seed, policy, threads, checkpoints=range(1, H + 1))
    paths = np.stack([ens.checkpoints[g] for g in range(1, H + 1)])
    counts = [np.sum((paths >= y + B) & (paths <= y + C), axis=0) for B, C in windows]
    unfinished = float(np.mean(paths[-1] <= y + c_max))
    return counts, H, unfinished, ens.size


def renewal_estimate(model: EnvironmentModel, B: float, C: float, y: float, N: int, seed: int,
                     policy: SimPolicy = SimPolicy(), threads: int = 1) -> RenewalEstimate:
    """Expected number of generations with log Z_n in ``y + [B, C]`` given survival."""
    (counts,), H, unfinished, size = visit_counts(model, [(B, C)], y, N, seed, policy, threads)
    return _renewal_record(model, counts, B, C, y, H, unfinished, size)


def _renewal_record(model, counts, B, C, y, H, unfinished, size) -> RenewalEstimate:
    counts = np.ascontiguousarray(counts, dtype=float)
    m = pairwise_sum(counts) / counts.size
    sd = math.sqrt(pairwise_sum((counts - m) ** 2) / max(counts.size - 1, 1))
    return RenewalEstimate(y, B, C, m, sd / math.sqrt(counts.size), (C - B) / model.mu, H,
                           size, unfinished)


def renewal_windows(model: EnvironmentModel, windows: Sequence[tuple[float, float]], y: float,
                    N: int, seed: int, policy: SimPolicy = SimPolicy(),
                    threads: int = 1) -> list[RenewalEstimate]:
    """Several windows evaluated on one common set of trajectories."""
    counts, H, unfinished, size = visit_counts(model, windows, y, N, seed, policy, threads)
    return [_renewal_record(model, c, B, C, y, H, unfinished, size)
            for c, (B, C) in zip(counts, windows)]


# --- decay scans ------------------------------------------------------------

@dataclass
class DecayScanResult:
    kind: str
    param: float
    n_list: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    rate: float | None = None
    C: float | None = None
    r2: float | None = None
    below_noise: bool = False
    statistic: np.ndarray | None = field(default=None)

    @property
    def decays(self) -> bool:
        if self.kind == "log_moment":
            return True
        return self.below_noise or (self.rate is not None and self.rate > 0)

    @property
    def argmax_n(self) -> int | None:
        if self.statistic is None:
            return None
        return int(self.n_list[int(np.argmax(self.statistic))])

    def to_csv(self, path: Path | str) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "value", "stderr"])
            for n, v, e in zip(self.n_list, self.values, self.stderr):
                w.writerow([int(n), repr(float(v)), repr(float(e))])


def _decay_terms(kind: str, param: float, logz: np.ndarray, alive: np.ndarray, n: int,
                 alive_later: np.ndarray | None) -> np.ndarray:
    if kind == "small_pop":
        return (alive & (logz <= param * n)).astype(float)
    if kind == "neg_moment":
        return np.where(alive, np.exp(-param * np.where(alive, logz, 0.0)), 0.0)
    if kind == "survival_gap":
        return (alive & ~alive_later).astype(float)
    return np.where(alive, np.where(alive, logz, 0.0) ** int(param), 0.0)


def _check_decay_params(model: EnvironmentModel, kind: str, param: float, q: float | None):
    if kind not in DECAY_KINDS:
        raise ModelError(f"unknown decay scan kind {kind!r}")
    if kind == "small_pop" and not 0 <= param < model.mu:
        raise ModelError("small_pop needs 0 <= theta < mu")
    if kind == "neg_moment" and not param > 0:
        raise ModelError("neg_moment needs delta > 0")
    if kind == "survival_gap" and (int(param) != param or param < 1):
        raise ModelError("survival_gap needs an integer margin m >= 1")
    if kind == "log_moment":
        if int(param) != param or param < 1:
            raise ModelError("log_moment needs a positive integer k")
        if q is not None and not param < q:
            raise ModelError("log_moment needs k < q")


def decay_scan(model: EnvironmentModel, kind: str, param: float, n_list: Sequence[int], N: int,
               seed: int, policy: SimPolicy = SimPolicy(), threads: int = 1,
               q: float | None = None) -> DecayScanResult:
    """Monte Carlo estimate of a decaying functional of Z_n over ``n_list``.

    Raw (unconditioned) trajectories, streams 0..N-1. Exponential kinds get
    a log-linear fit over the points distinguishable from zero (value above
    two standard errors); ``rate`` is the fitted decay exponent.
    """
    _check_decay_params(model, kind, param, q)
    n_list = np.asarray(sorted(n_list), dtype=int)
    extra = int(param) if kind == "survival_gap" else 0
    horizon = int(n_list[-1]) + extra
    nblocks = -(-N // BLOCK_SIZE)
    sums, sq = [], []
    for bp in iter_blocks(model, horizon, seed, policy, threads, stop_block=nblocks):
        lanes = min(BLOCK_SIZE, N - bp.block * BLOCK_SIZE)
        alive = bp.alive[:, :lanes]
        logz = bp.logz[:, :lanes]
        rows = np.stack([_decay_terms(kind, param, logz[n], alive[n], n,
                                      alive[n + extra] if extra else None) for n in n_list])
        sums.append(np.add.reduce(rows, axis=1))
        sq.append(np.add.reduce(rows**2, axis=1))
    total = np.array([pairwise_sum(col) for col in np.stack(sums).T])
    total_sq = np.array([pairwise_sum(col) for col in np.stack(sq).T])
    mean = total / N
    var = np.maximum(total_sq / N - mean**2, 0.0) * N / max(N - 1, 1)
    se = np.sqrt(var / N)
    res = DecayScanResult(kind, float(param), n_list, mean, se)
    if kind == "log_moment":
        res.statistic = mean / n_list.astype(float) ** int(param)
        return res
    ok = mean > 2 * se
    if ok.sum() < 2:
        res.below_noise = True
        return res
    C, rho, r2 = geometric_fit(n_list[ok], mean[ok])
    res.C, res.rate, res.r2 = C, -math.log(rho), r2
    return res


def oracle_decay_values(model: EnvironmentModel, kind: str, param: float, n_list: Sequence[int],
                        k_max: int = 4096) -> np.ndarray:
    """Exact counterparts of :func:`decay_scan` values for finite-support mixtures."""
    _check_decay_params(model, kind, param, None)
    n_list = list(n_list)
    extra = int(param) if kind == "survival_gap" else 0
    dists = {d.n: d for d in iter_exact(model, max(n_list) + extra, k_max)}
    out = []
    for n in n_list:
        d = dists[n]
        if kind == "small_pop":
            out.append(d.expect_alive(lambda k: (np.log(k) <= param * n).astype(float)))
        elif kind == "neg_moment":
            out.append(d.expect_alive(lambda k: k ** (-param)))
        elif kind == "survival_gap":
            out.append(d.survival - dists[n + extra].survival)
        else:
            out.append(d.expect_alive(lambda k: np.log(k) ** int(param)))
    return np.array(out)
