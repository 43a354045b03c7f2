"""Estimation of the normalized characteristic function ``phi_n``.

``phi_n(s) = E[Z_n^{is} | survival] / lambda(s)^n`` compares log Z_n with the
random walk log Pi_n on the Fourier side. This module estimates it from
ensembles, recovers its derivatives at zero from moment identities, fits
the geometric convergence in n, and scans |lambda| over frequency bands.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import optimize

from .envmodel import EnvironmentModel, lambda_analytic
from .errors import ModelError, NumericalError
from .numerics import geometric_fit, pairwise_sum
from .simulate import Ensemble

NOISE_FLOOR = 1e-13
MAX_ARG_STEP = math.pi / 4
UNDERFLOW_LOG = -700.0


@dataclass(frozen=True)
class SGrid:
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or not np.all(np.diff(pts) > 0):
            raise ModelError("grid points must be strictly increasing")
        if not np.any(pts == 0) or not np.allclose(pts, -pts[::-1], rtol=0, atol=1e-14):
            raise ModelError("grid must be symmetric about 0 and contain 0")
        object.__setattr__(self, "points", pts)

    @classmethod
    def symmetric(cls, s_max: float = 0.5, points: int = 41) -> "SGrid":
        if points % 2 == 0 or points < 3:
            raise ModelError("a symmetric grid needs an odd number (>= 3) of points")
        half = np.linspace(0.0, s_max, points // 2 + 1)
        return cls(np.concatenate([-half[:0:-1], half]))

    @property
    def nonnegative(self) -> np.ndarray:
        return self.points[self.points >= 0]


@dataclass(frozen=True)
class CharFnEstimate:
    n: int
    s: np.ndarray
    phi: np.ndarray
    stderr: np.ndarray
    size: int

    @property
    def usable(self) -> np.ndarray:
        return np.isfinite(self.phi)

    def at(self, s: float) -> tuple[complex, float]:
        i = int(np.argmin(np.abs(self.s - s)))
        return complex(self.phi[i]), float(self.stderr[i])

    def to_csv(self, path: Path | str, append: bool = False) -> None:
        with open(path, "a" if append else "w", newline="") as fh:
            w = csv.writer(fh)
            if not append:
                w.writerow(["n", "s", "re_phi", "im_phi", "stderr"])
            for s, p, e in zip(self.s, self.phi, self.stderr):
                w.writerow([self.n, repr(float(s)), repr(float(p.real)), repr(float(p.imag)), repr(float(e))])


def log_lambda_branch(model: EnvironmentModel, s_nonneg: np.ndarray) -> np.ndarray:
    """Continuous logarithm of lambda along increasing s >= 0, anchored at log lambda(0) = 0."""
    s_nonneg = np.asarray(s_nonneg, dtype=float)
    if s_nonneg[0] != 0 or np.any(np.diff(s_nonneg) <= 0):
        raise ModelError("branch tracking needs increasing points starting at 0")
    lam = np.asarray(lambda_analytic(model, s_nonneg))
    if np.any(lam == 0):
        raise NumericalError("lambda vanishes on the grid")
    arg = np.angle(lam)
    steps = np.diff(arg)
    steps = (steps + math.pi) % (2 * math.pi) - math.pi
    if np.any(np.abs(steps) >= MAX_ARG_STEP):
        raise NumericalError("branch tracking failure: grid too coarse for arg lambda")
    return np.log(np.abs(lam)) + 1j * np.concatenate([[0.0], np.cumsum(steps)])


def _lambda_power(model: EnvironmentModel, s_nonneg: np.ndarray, n: int) -> np.ndarray:
    """lambda(s)^n via the tracked branch; NaN where it underflows."""
    log_pow = n * log_lambda_branch(model, s_nonneg)
    out = np.exp(log_pow)
    out[log_pow.real < UNDERFLOW_LOG] = np.nan
    return out


def estimate_phi(ensemble: Ensemble, model: EnvironmentModel, grid: SGrid) -> CharFnEstimate:
    """Survivor average of Z_n^{is} divided by lambda(s)^n on ``grid``.

    Values at -s are the conjugates of those at s (same sample); s = 0 is 1.
    """
    L = np.ascontiguousarray(ensemble.survivors_log_z())
    N = L.size
    if N == 0:
        raise ModelError("empty ensemble")
    s_pos = grid.nonnegative
    lam_n = _lambda_power(model, s_pos, ensemble.n)
    phi = np.empty(s_pos.size, dtype=complex)
    se = np.empty(s_pos.size)
    for i, s in enumerate(s_pos):
        if s == 0:
            phi[i], se[i] = 1.0, 0.0
            continue
        if not np.isfinite(lam_n[i]):
            phi[i], se[i] = np.nan, np.nan
            continue
        x = s * L
        c, sn = np.cos(x), np.sin(x)
        mc, ms = pairwise_sum(c) / N, pairwise_sum(sn) / N
        var = (pairwise_sum((c - mc) ** 2) + pairwise_sum((sn - ms) ** 2)) / max(N - 1, 1)
        phi[i] = complex(mc, ms) / lam_n[i]
        se[i] = math.sqrt(var / N) / abs(lam_n[i])
    neg = s_pos[:0:-1]
    return CharFnEstimate(
        ensemble.n,
        np.concatenate([-neg, s_pos]),
        np.concatenate([np.conj(phi[:0:-1]), phi]),
        np.concatenate([se[:0:-1], se]),
        N,
    )


@dataclass(frozen=True)
class ConvergenceFit:
    C: float
    rho: float
    r2: float
    flagged: bool
    n_used: int

    @property
    def geometric(self) -> bool:
        return self.flagged or self.rho < 1


def convergence_fit(values: Sequence, n: Sequence[int] | None = None) -> ConvergenceFit:
    """Fit ``|v_{n+1} - v_n| ~ C rho^n`` by least squares on the log scale.

    Increments at the numerical noise floor are dropped; when fewer than two
    remain the sequence counts as converged and is flagged with rho = 0.
    """
    v = np.asarray(values)
    if v.size < 5:
        raise ModelError("convergence fit needs at least 5 terms")
    idx = np.arange(1, v.size + 1) if n is None else np.asarray(n)
    inc = np.abs(np.diff(v))
    floor = NOISE_FLOOR * max(1.0, float(np.max(np.abs(v))))
    keep = inc > floor
    if keep.sum() < 2:
        return ConvergenceFit(0.0, 0.0, math.nan, True, int(keep.sum()))
    C, rho, r2 = geometric_fit(idx[:-1][keep], inc[keep])
    return ConvergenceFit(C, rho, r2, False, int(keep.sum()))


@dataclass
class PhiDerivatives:
    j: int
    n: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    fit: ConvergenceFit | None
    limit: complex | None
    limit_stderr: float | None

    @property
    def refused(self) -> bool:
        return self.limit is None


def phi_derivative_at_zero(ensemble: Ensemble, model: EnvironmentModel, j: int) -> tuple[complex, float]:
    """phi_n^{(j)}(0) with standard error.

    Solves ``E[(i log Z_n)^j] = sum_m C(j,m) phi_n^{(m)}(0) (lambda^n)^{(j-m)}(0)``
    with the unconditional moments of log Pi_n taken from the attempted streams
    instead of their exact values; the expectation is unchanged, and for
    deterministic reproduction the estimate is zero sample by sample.
    """
    if j == 0:
        return 1.0 + 0j, 0.0
    if j < 0:
        raise ModelError("derivative order must be >= 0")
    if j > 2:
        return _phi_derivative_series(ensemble, model, j)
    n = ensemble.n
    surv_mask = np.zeros(ensemble.attempted, dtype=bool)
    surv_ids = ensemble.stream_ids[ensemble.alive]
    surv_mask[surv_ids] = True
    L = np.ascontiguousarray(ensemble.log_z[ensemble.alive])
    S = np.ascontiguousarray(ensemble.all_log_pi)
    if L.size == 0:
        raise ModelError("empty ensemble")
    centre = n * model.mu
    if j == 1:
        f, g = L, S
    else:
        f, g = (L - centre) ** 2, (S - centre) ** 2
    fbar = pairwise_sum(f) / f.size
    gbar = pairwise_sum(g) / g.size
    theta = fbar - gbar
    # influence of each attempted stream on the two-sample estimator
    p_hat = f.size / S.size
    infl = -(g - gbar)
    infl[surv_mask] += (f - fbar) / p_hat
    se = math.sqrt(pairwise_sum(infl**2) / (S.size * max(S.size - 1, 1)))
    return (1j * theta, se) if j == 1 else (complex(-theta), se)


def _centered_moments(x: np.ndarray, centre: float, j: int) -> np.ndarray:
    d = x - centre
    out, p = np.empty(j + 1), np.ones_like(d)
    for m in range(j + 1):
        out[m] = pairwise_sum(np.ascontiguousarray(p)) / d.size
        p = p * d
    return out


def _series_ratio_derivative(L: np.ndarray, S: np.ndarray, centre: float, j: int) -> complex:
    """j-th derivative at 0 of E e^{is(L-c)} / E e^{is(S-c)}, by power-series division."""
    scale = np.array([1j**m / math.factorial(m) for m in range(j + 1)])
    a = _centered_moments(L, centre, j) * scale
    b = _centered_moments(S, centre, j) * scale
    c = np.zeros(j + 1, dtype=complex)
    for m in range(j + 1):
        c[m] = a[m] - np.dot(c[:m], b[m:0:-1])
    return complex(math.factorial(j) * c[j])


def _phi_derivative_series(ensemble: Ensemble, model: EnvironmentModel, j: int,
                           batches: int = 20) -> tuple[complex, float]:
    """Any order via moment-series division; standard error from contiguous batch means."""
    L = np.ascontiguousarray(ensemble.log_z[ensemble.alive])
    S = np.ascontiguousarray(ensemble.all_log_pi)
    if L.size == 0:
        raise ModelError("empty ensemble")
    centre = ensemble.n * model.mu
    est = _series_ratio_derivative(L, S, centre, j)
    if L.size < 2 * batches:
        return est, math.nan
    # batches split the attempted streams; survivors follow their stream
    surv_pos = ensemble.stream_ids[ensemble.alive]
    edges = np.linspace(0, S.size, batches + 1).astype(int)
    parts = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (surv_pos >= lo) & (surv_pos < hi)
        if not sel.any():
            return est, math.nan
        parts.append(_series_ratio_derivative(L[sel], S[lo:hi], centre, j))
    parts = np.array(parts)
    se = math.sqrt(float(np.sum(np.abs(parts - parts.mean()) ** 2)) / (batches * (batches - 1)))
    return est, se


def phi_deriv0(ensembles: Sequence[Ensemble], model: EnvironmentModel, j: int,
               max_chi2: float = 10.0) -> PhiDerivatives:
    """phi_n^{(j)}(0) along the ensembles' horizons plus a geometric extrapolation.

    The limit comes from a weighted fit of ``v_n = v + C rho^n``; it is refused
    (``limit`` None) when the residuals are not geometric: rho not below 1
    or a reduced chi-square above ``max_chi2``.
    """
    ns = np.array([e.n for e in ensembles])
    vals, ses = zip(*(phi_derivative_at_zero(e, model, j) for e in ensembles))
    vals = np.array(vals, dtype=complex)
    ses = np.array(ses)
    if vals.size < 5:
        return PhiDerivatives(j, ns, vals, ses, None, None, None)
    fit = convergence_fit(vals, ns)
    if fit.flagged:
        return PhiDerivatives(j, ns, vals, ses, fit, complex(vals[-1]), float(ses[-1]))
    unit = 1j**j
    comp = (vals / unit).real
    sigma = np.maximum(ses, 1e-15)

    def model_fn(n, lim, c, rho):
        return lim + c * rho ** (n - ns[0])

    try:
        popt, pcov = optimize.curve_fit(
            model_fn, ns.astype(float), comp, p0=(comp[-1], comp[0] - comp[-1], 0.7),
            sigma=sigma, absolute_sigma=True,
            bounds=([-np.inf, -np.inf, 1e-6], [np.inf, np.inf, 0.999]))
    except (RuntimeError, ValueError):
        return PhiDerivatives(j, ns, vals, ses, fit, None, None)
    chi2 = float(np.sum(((comp - model_fn(ns, *popt)) / sigma) ** 2)) / max(ns.size - 3, 1)
    if popt[2] >= 0.99 or chi2 > max_chi2 or not np.isfinite(pcov[0, 0]):
        return PhiDerivatives(j, ns, vals, ses, fit, None, None)
    return PhiDerivatives(j, ns, vals, ses, fit, complex(unit * popt[0]), math.sqrt(pcov[0, 0]))


def lambda_band_sup(model: EnvironmentModel, band: tuple[float, float],
                    resolution: float = 0.01, refine: int = 5) -> float:
    """sup of |lambda(s)| for s in [s_lo, s_hi], grid scan plus local refinement."""
    lo, hi = map(float, band)
    if not 0 < lo < hi:
        raise ModelError("band must satisfy 0 < s_lo < s_hi")
    s = np.linspace(lo, hi, max(3, int(math.ceil((hi - lo) / resolution)) + 1))
    mod = np.abs(lambda_analytic(model, s))
    best = float(mod.max())
    h = s[1] - s[0]
    for i in np.argsort(mod)[::-1][:refine]:
        a, b = max(lo, s[i] - h), min(hi, s[i] + h)
        res = optimize.minimize_scalar(lambda x: -abs(lambda_analytic(model, x)),
                                       bounds=(a, b), method="bounded",
                                       options={"xatol": 1e-10})
        best = max(best, -float(res.fun))
    return min(best, 1.0)


def write_fit_report(path: Path | str, s_values, fits: Sequence[ConvergenceFit]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "C", "rho", "r2"])
        for s, f in zip(s_values, fits):
            w.writerow([repr(float(s)), repr(f.C), repr(f.rho), repr(f.r2)])
