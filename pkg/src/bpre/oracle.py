"""Exact law of Z_n for finite-support finite mixtures.

Ground truth for the simulator, the characteristic-function estimators and
the Edgeworth sign conventions. Conditioning is on survival up to the
horizon, ``{Z_n > 0}``; survival forever is not finitely computable.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator

import numpy as np

from .envmodel import EnvironmentModel, lambda_analytic
from .errors import ModelError, NumericalError
from .numerics import norm_cdf, norm_pdf

TAIL_WARN = 0.01
PHI_TAIL_MAX = 1e-9


@dataclass(frozen=True)
class ExactDist:
    n: int
    atoms: np.ndarray
    tail_mass: float

    @property
    def k_max(self) -> int:
        return self.atoms.size - 1

    @property
    def warning(self) -> bool:
        return self.tail_mass > TAIL_WARN

    @property
    def survival(self) -> float:
        return 1.0 - float(self.atoms[0])

    def expect_alive(self, fn: Callable[[np.ndarray], np.ndarray]) -> float:
        """E[fn(Z_n) ; Z_n >= 1] over the tracked window."""
        k = np.arange(1, self.atoms.size, dtype=float)
        return float(np.dot(self.atoms[1:], fn(k)))

    def conditional_log_moment(self, j: int) -> float:
        """E[(log Z_n)^j | Z_n > 0]."""
        return self.expect_alive(lambda k: np.log(k) ** j) / self.survival

    def to_csv(self, path: Path | str) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "probability"])
            for k, p in enumerate(self.atoms):
                w.writerow([k, repr(float(p))])
            w.writerow(["tail", repr(self.tail_mass)])


def _check_oracle_model(model: EnvironmentModel):
    if not model.is_mixture or not all(l.finite_support for l in model.laws):
        raise ModelError("the exact oracle needs a finite mixture of finite-support laws")


def _one_step(model: EnvironmentModel, atoms: np.ndarray) -> tuple[np.ndarray, float]:
    """Annealed one-generation kernel on the window 0..K; returns (atoms, mass lost)."""
    K = atoms.size - 1
    kmax = int(np.flatnonzero(atoms).max()) if atoms.any() else 0
    out = np.zeros(K + 1)
    lost = 0.0
    for law, w in zip(model.laws, model.weights):
        if w == 0:
            continue
        p = law.support_pmf()
        power = np.zeros(K + 1)
        power[0] = 1.0
        power_lost = 0.0
        for k in range(kmax + 1):
            if k > 0:
                full = np.convolve(power, p)
                power = full[:K + 1]
                power_lost += float(full[K + 1:].sum())
            pk = atoms[k]
            if pk > 0:
                out += (w * pk) * power
                lost += w * pk * power_lost
    return out, lost


def iter_exact(model: EnvironmentModel, n_max: int, k_max: int) -> Iterator[ExactDist]:
    """Exact laws of Z_1, ..., Z_{n_max} on the window 0..k_max."""
    _check_oracle_model(model)
    if k_max < 1:
        raise ModelError("k_max must be >= 1")
    atoms = np.zeros(k_max + 1)
    atoms[1] = 1.0
    tail = 0.0
    for t in range(1, n_max + 1):
        atoms, lost = _one_step(model, atoms)
        tail += lost
        yield ExactDist(t, atoms, tail)


def default_k_max(model: EnvironmentModel, n: int, cap: int = 4096) -> int:
    top = max(l.support_pmf().size - 1 for l in model.laws)
    return int(min(cap, max(1, top) ** n)) if top > 1 else 1


def exact_distribution(model: EnvironmentModel, n: int, k_max: int | None = None) -> ExactDist:
    if n < 1:
        raise ModelError("n must be >= 1")
    _check_oracle_model(model)
    k_max = default_k_max(model, n) if k_max is None else k_max
    dist = None
    for dist in iter_exact(model, n, k_max):
        pass
    return dist


@dataclass(frozen=True)
class SurvivalCurve:
    survival: np.ndarray      # P[Z_t > 0], t = 1..n_max
    tail_mass: np.ndarray

    @property
    def decrements(self) -> np.ndarray:
        """P[U_t] - P[U_{t+1}], t = 1..n_max-1."""
        return self.survival[:-1] - self.survival[1:]

    def to_csv(self, path: Path | str) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "survival", "tail_mass"])
            for t, (s, tm) in enumerate(zip(self.survival, self.tail_mass), start=1):
                w.writerow([t, repr(float(s)), repr(float(tm))])


def exact_survival_curve(model: EnvironmentModel, n_max: int, k_max: int = 4096) -> SurvivalCurve:
    """1 - P[Z_t = 0] for t = 1..n_max.

    Mass that leaves the window has more than ``k_max`` individuals; its
    extinction probability is negligible, so P[Z_t = 0] stays exact.
    """
    surv, tails = [], []
    for d in iter_exact(model, n_max, k_max):
        surv.append(d.survival)
        tails.append(d.tail_mass)
    return SurvivalCurve(np.array(surv), np.array(tails))


def exact_phi(model: EnvironmentModel, n: int, s: float, k_max: int | None = None,
              dist: ExactDist | None = None) -> complex:
    """E[Z_n^{is} | Z_n > 0] / lambda(s)^n."""
    if dist is None:
        dist = exact_distribution(model, n, k_max)
    if dist.tail_mass >= PHI_TAIL_MAX:
        raise NumericalError(f"tail mass {dist.tail_mass:.3g} too heavy for exact phi; raise k_max")
    if s == 0:
        return 1.0 + 0.0j
    k = np.arange(1, dist.atoms.size, dtype=float)
    num = complex(np.dot(dist.atoms[1:], np.exp(1j * s * np.log(k))))
    return num / (dist.survival * lambda_analytic(model, s) ** dist.n)


def iid_edgeworth_reference(cumulants, n: int, x):
    """Classical first-order Edgeworth CDF of a standardized sum of n iid terms."""
    k2, k3 = float(cumulants[1]), float(cumulants[2])
    if k2 <= 0:
        raise ModelError("kappa_2 must be positive")
    x = np.asarray(x, dtype=float)
    out = norm_cdf(x) - norm_pdf(x) * (k3 / (6.0 * k2**1.5 * math.sqrt(n))) * (x * x - 1.0)
    return float(out) if out.ndim == 0 else out
