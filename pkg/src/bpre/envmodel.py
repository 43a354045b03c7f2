"""Offspring laws, random-environment models and their analytic quantities.

An environment model is the law of the random offspring distribution ``Q``.
Everything downstream is anchored on three exact functionals of it:
the characteristic function ``lambda(s) = E[A^{is}]`` of ``log A``,
the cumulants of ``log A``, and the hypothesis checks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np
from scipy import integrate, special, stats

from .errors import HypothesisViolation, ModelError, NumericalError

PMF_TOL = 1e-12
MAX_CUMULANT_ORDER = 8
# ratios of log-means closer than this to a p/q with q <= LATTICE_MAX_DENOM
# are treated as rational
LATTICE_MAX_DENOM = 10**6
LATTICE_REL_TOL = 1e-13

LAW_KINDS = ("explicit", "dirac", "poisson", "geometric")
MODEL_KINDS = ("finite_mixture", "poisson_lognormal_trunc", "poisson_loguniform")


@dataclass(frozen=True)
class OffspringLaw:
    """One reproduction law on the non-negative integers."""

    kind: str
    pmf: tuple[float, ...] = ()
    m: int = 0
    a: float = 0.0
    p: float = 0.0

    def __post_init__(self):
        if self.kind == "explicit":
            pmf = np.asarray(self.pmf, dtype=float)
            if pmf.ndim != 1 or pmf.size == 0:
                raise ModelError("explicit law needs a non-empty pmf")
            if np.any(pmf < 0) or not np.all(np.isfinite(pmf)):
                raise ModelError(f"negative or non-finite probability in pmf {self.pmf}")
            if abs(pmf.sum() - 1.0) > PMF_TOL:
                raise ModelError(f"pmf sums to {pmf.sum():.15g}, not 1")
            object.__setattr__(self, "pmf", tuple(float(x) for x in pmf))
        elif self.kind == "dirac":
            if int(self.m) != self.m or self.m < 1:
                raise ModelError(f"Dirac law needs a positive integer, got {self.m}")
            object.__setattr__(self, "m", int(self.m))
        elif self.kind == "poisson":
            if not (self.a > 0 and math.isfinite(self.a)):
                raise ModelError(f"Poisson mean must be positive, got {self.a}")
        elif self.kind == "geometric":
            if not 0 < self.p < 1:
                raise ModelError(f"geometric success probability must lie in (0,1), got {self.p}")
        else:
            raise ModelError(f"unknown offspring law kind {self.kind!r}")
        if not self.mean > 0:
            raise ModelError("offspring mean must be positive")

    @classmethod
    def explicit(cls, pmf: Sequence[float]) -> "OffspringLaw":
        return cls("explicit", pmf=tuple(pmf))

    @classmethod
    def dirac(cls, m: int) -> "OffspringLaw":
        return cls("dirac", m=m)

    @classmethod
    def poisson(cls, a: float) -> "OffspringLaw":
        return cls("poisson", a=float(a))

    @classmethod
    def geometric(cls, p: float) -> "OffspringLaw":
        return cls("geometric", p=float(p))

    @property
    def mean(self) -> float:
        if self.kind == "explicit":
            return float(np.dot(np.arange(len(self.pmf)), self.pmf))
        if self.kind == "dirac":
            return float(self.m)
        if self.kind == "poisson":
            return self.a
        return (1.0 - self.p) / self.p

    @property
    def variance(self) -> float:
        if self.kind == "explicit":
            k = np.arange(len(self.pmf))
            return float(np.dot((k - self.mean) ** 2, self.pmf))
        if self.kind == "dirac":
            return 0.0
        if self.kind == "poisson":
            return self.a
        return (1.0 - self.p) / self.p**2

    @property
    def zero_mass(self) -> float:
        if self.kind == "explicit":
            return self.pmf[0]
        if self.kind == "dirac":
            return 0.0
        if self.kind == "poisson":
            return math.exp(-self.a)
        return self.p

    @property
    def finite_support(self) -> bool:
        return self.kind in ("explicit", "dirac")

    def support_pmf(self) -> np.ndarray:
        """pmf over 0..max support, for finite-support laws."""
        if self.kind == "explicit":
            return np.array(self.pmf)
        if self.kind == "dirac":
            out = np.zeros(self.m + 1)
            out[self.m] = 1.0
            return out
        raise ModelError(f"{self.kind} law has infinite support")

    def normalized_power_moment(self, p: float) -> float:
        """E[(xi / A)^p] for one individual's offspring count xi."""
        A = self.mean
        if self.finite_support:
            pmf = self.support_pmf()
            k = np.arange(pmf.size)
            return float(np.dot(pmf, (k / A) ** p))
        if self.kind == "poisson":
            kmax = int(self.a + 40 * math.sqrt(self.a) + 60)
            k = np.arange(kmax + 1)
            return float(np.dot(stats.poisson.pmf(k, self.a), (k / A) ** p))
        # geometric: truncate where the remaining tail is below 1e-18
        kmax = int(math.ceil(math.log(1e-18) / math.log1p(-self.p))) + 10
        k = np.arange(kmax + 1)
        return float(np.dot(stats.geom.pmf(k + 1, self.p), (k / A) ** p))

    def to_spec(self) -> dict:
        if self.kind == "explicit":
            return {"kind": "explicit", "pmf": list(self.pmf)}
        if self.kind == "dirac":
            return {"kind": "dirac", "m": self.m}
        if self.kind == "poisson":
            return {"kind": "poisson", "a": self.a}
        return {"kind": "geometric", "p": self.p}


@dataclass(frozen=True)
class EnvironmentModel:
    """Law of the random offspring distribution, with derived constants.

    ``mu``/``sigma2`` are mean and variance of ``log A``; ``gamma`` is the
    essential supremum of ``Q(0)``.
    """

    kind: str
    laws: tuple[OffspringLaw, ...] = ()
    weights: tuple[float, ...] = ()
    m: float = math.nan
    v: float = math.nan
    a_min: float = math.nan
    a_max: float = math.nan
    mu: float = field(init=False)
    sigma2: float = field(init=False)
    gamma: float = field(init=False)
    lattice: bool = field(init=False)

    def __post_init__(self):
        if self.kind == "finite_mixture":
            if len(self.laws) == 0 or len(self.laws) != len(self.weights):
                raise ModelError("finite mixture needs one weight per law")
            w = np.asarray(self.weights, dtype=float)
            if np.any(w < 0) or not np.all(np.isfinite(w)):
                raise ModelError(f"negative mixture weight in {self.weights}")
            if abs(w.sum() - 1.0) > PMF_TOL:
                raise ModelError(f"mixture weights sum to {w.sum():.15g}, not 1")
            object.__setattr__(self, "laws", tuple(self.laws))
            object.__setattr__(self, "weights", tuple(float(x) for x in w))
            active = w > 0
            gamma = max(l.zero_mass for l, a in zip(self.laws, active) if a)
        elif self.kind in ("poisson_lognormal_trunc", "poisson_loguniform"):
            if not (self.a_min > 0 and self.a_max > self.a_min and math.isfinite(self.a_max)):
                raise ModelError(f"need 0 < a_min < a_max < inf, got [{self.a_min}, {self.a_max}]")
            if self.kind == "poisson_lognormal_trunc" and not (self.v > 0 and math.isfinite(self.m)):
                raise ModelError("log-normal family needs finite m and v > 0")
            gamma = math.exp(-self.a_min)
        else:
            raise ModelError(f"unknown model kind {self.kind!r}")
        object.__setattr__(self, "gamma", float(gamma))
        mom = _central_moments(self, 2)
        object.__setattr__(self, "mu", mom[0])
        object.__setattr__(self, "sigma2", max(mom[2], 0.0))
        object.__setattr__(self, "lattice", _is_lattice(self))
        if not self.mu > 0:
            raise HypothesisViolation(
                "supercriticality", f"E log A = {self.mu:.6g} must be > 0")
        if not self.gamma < 1:
            raise HypothesisViolation("H2", f"sup Q(0) = {self.gamma:.6g} must be < 1")

    @property
    def is_mixture(self) -> bool:
        return self.kind == "finite_mixture"

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)

    @property
    def log_means(self) -> np.ndarray:
        """log A_i of the mixture components."""
        return np.log([l.mean for l in self.laws])

    @property
    def log_a_bounds(self) -> tuple[float, float]:
        return math.log(self.a_min), math.log(self.a_max)

    def to_spec(self) -> dict:
        if self.is_mixture:
            return {"kind": self.kind, "laws": [l.to_spec() for l in self.laws],
                    "weights": list(self.weights)}
        out = {"kind": self.kind, "a_min": self.a_min, "a_max": self.a_max}
        if self.kind == "poisson_lognormal_trunc":
            out.update(m=self.m, v=self.v)
        return out


@dataclass(frozen=True)
class HypothesisReport:
    mu: float
    sigma2: float
    gamma: float
    q: float
    p: float
    h1_value: float
    nonlattice: bool
    cramer: bool
    supercritical: bool
    strongly_nonlattice: bool  # log A not on any shifted lattice a + hZ, i.e. |lambda(s)| < 1 for s != 0

    @property
    def h1(self) -> bool:
        return math.isfinite(self.h1_value)

    @property
    def h2(self) -> bool:
        return self.gamma < 1


# --- construction -----------------------------------------------------------

_LAW_KEYS = {"explicit": {"pmf"}, "dirac": {"m"}, "poisson": {"a"}, "geometric": {"p"}}
_MODEL_KEYS = {
    "finite_mixture": {"laws", "weights"},
    "poisson_lognormal_trunc": {"m", "v", "a_min", "a_max"},
    "poisson_loguniform": {"a_min", "a_max"},
}


def _check_keys(block: Mapping, allowed: set, where: str):
    unknown = set(block) - allowed - {"kind"}
    if unknown:
        raise ModelError(f"unknown key(s) {sorted(unknown)} in {where}")
    missing = allowed - set(block)
    if missing:
        raise ModelError(f"missing key(s) {sorted(missing)} in {where}")


def build_law(spec: Mapping) -> OffspringLaw:
    kind = spec.get("kind")
    if kind not in _LAW_KEYS:
        raise ModelError(f"unknown offspring law kind {kind!r}")
    _check_keys(spec, _LAW_KEYS[kind], f"{kind} law")
    if kind == "explicit":
        return OffspringLaw.explicit(spec["pmf"])
    if kind == "dirac":
        return OffspringLaw.dirac(spec["m"])
    if kind == "poisson":
        return OffspringLaw.poisson(spec["a"])
    return OffspringLaw.geometric(spec["p"])


def build_model(spec: Mapping) -> EnvironmentModel:
    """Validate a model description (the ``[model]`` config block)."""
    kind = spec.get("kind")
    if kind not in _MODEL_KEYS:
        raise ModelError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    _check_keys(spec, _MODEL_KEYS[kind], "model")
    if kind == "finite_mixture":
        laws = tuple(build_law(l) for l in spec["laws"])
        return EnvironmentModel(kind, laws=laws, weights=tuple(spec["weights"]))
    if kind == "poisson_loguniform":
        return EnvironmentModel(kind, a_min=float(spec["a_min"]), a_max=float(spec["a_max"]))
    return EnvironmentModel(kind, m=float(spec["m"]), v=float(spec["v"]),
                            a_min=float(spec["a_min"]), a_max=float(spec["a_max"]))


def finite_mixture(laws: Sequence[OffspringLaw], weights: Sequence[float]) -> EnvironmentModel:
    return EnvironmentModel("finite_mixture", laws=tuple(laws), weights=tuple(weights))


def dirac_mixture(values: Sequence[int], weights: Sequence[float]) -> EnvironmentModel:
    return finite_mixture([OffspringLaw.dirac(m) for m in values], weights)


# --- analytic functionals ---------------------------------------------------

def _lognormal_trunc_parts(model: EnvironmentModel):
    lo, hi = model.log_a_bounds
    sd = math.sqrt(model.v)
    return lo, hi, sd, (lo - model.m) / sd, (hi - model.m) / sd


def lambda_analytic(model: EnvironmentModel, s):
    """Characteristic function of log A, ``E[A^{is}]``; scalar or array ``s``."""
    s_arr = np.asarray(s, dtype=float)
    if model.is_mixture:
        w = np.asarray(model.weights)
        ell = model.log_means
        out = np.exp(1j * np.multiply.outer(s_arr, ell)) @ w
    elif model.kind == "poisson_loguniform":
        lo, hi = model.log_a_bounds
        with np.errstate(invalid="ignore", divide="ignore"):
            out = (np.exp(1j * s_arr * hi) - np.exp(1j * s_arr * lo)) / (1j * s_arr * (hi - lo))
    else:
        lo, hi, sd, alpha, beta = _lognormal_trunc_parts(model)
        norm = special.ndtr(beta) - special.ndtr(alpha)
        shift = 1j * s_arr * sd
        out = (np.exp(1j * s_arr * model.m - 0.5 * model.v * s_arr**2)
               * (special.ndtr(beta - shift) - special.ndtr(alpha - shift)) / norm)
        if not np.all(np.isfinite(out)):
            raise NumericalError("closed-form truncated-normal characteristic function overflowed")
    out = np.where(s_arr == 0, 1.0 + 0j, out)
    return complex(out) if np.ndim(out) == 0 else out


def lambda_quadrature(model: EnvironmentModel, s: float, tol: float = 1e-10) -> complex:
    """Independent quadrature evaluation of lambda for the continuous families."""
    if model.is_mixture:
        raise ModelError("quadrature route is for continuous families only")
    lo, hi = model.log_a_bounds
    dens = _log_a_density(model)
    re, err_re = integrate.quad(lambda x: math.cos(s * x) * dens(x), lo, hi,
                                epsabs=tol / 4, epsrel=0, limit=400)
    im, err_im = integrate.quad(lambda x: math.sin(s * x) * dens(x), lo, hi,
                                epsabs=tol / 4, epsrel=0, limit=400)
    if err_re + err_im > tol:
        raise NumericalError(f"quadrature did not converge: achieved error {err_re + err_im:.3g}")
    return complex(re, im)


def _log_a_density(model: EnvironmentModel):
    lo, hi = model.log_a_bounds
    if model.kind == "poisson_loguniform":
        width = hi - lo
        return lambda x: 1.0 / width
    _, _, sd, alpha, beta = _lognormal_trunc_parts(model)
    norm = special.ndtr(beta) - special.ndtr(alpha)
    return lambda x: math.exp(-0.5 * ((x - model.m) / sd) ** 2) / (sd * math.sqrt(2 * math.pi) * norm)


def _central_moments(model: EnvironmentModel, r: int) -> list[float]:
    """[mean, 0, c_2, ..., c_r] of log A (index j holds the j-th central moment, j >= 2)."""
    out = [0.0] * (r + 1)
    if model.is_mixture:
        w = np.asarray(model.weights)
        ell = model.log_means
        mean = float(np.dot(w, ell))
        d = ell - mean
        for j in range(2, r + 1):
            out[j] = float(np.dot(w, d**j))
    elif model.kind == "poisson_loguniform":
        lo, hi = model.log_a_bounds
        mean = 0.5 * (lo + hi)
        h = 0.5 * (hi - lo)
        for j in range(2, r + 1):
            out[j] = h**j / (j + 1) if j % 2 == 0 else 0.0
    else:
        lo, hi, sd, alpha, beta = _lognormal_trunc_parts(model)
        dist = stats.truncnorm(alpha, beta, loc=model.m, scale=sd)
        mean = float(dist.mean())
        for j in range(2, r + 1):
            val, err = integrate.quad(lambda x: (x - mean) ** j * dist.pdf(x), lo, hi,
                                      epsabs=1e-14, epsrel=1e-12, limit=400)
            out[j] = val
    out[0] = mean
    return out


def log_a_cumulants(model: EnvironmentModel, r: int) -> np.ndarray:
    """Cumulants kappa_1..kappa_r of log A from its exact central moments."""
    if r > MAX_CUMULANT_ORDER:
        raise ModelError(f"cumulants beyond order {MAX_CUMULANT_ORDER} are unsupported")
    if r < 1:
        raise ModelError("r must be >= 1")
    cm = _central_moments(model, r)
    m = [1.0] + [0.0] + cm[2:]  # central moments with m_1 = 0
    kappa = [0.0] * (r + 1)
    for n in range(2, r + 1):
        kappa[n] = m[n] - sum(math.comb(n - 1, k - 1) * kappa[k] * m[n - k]
                              for k in range(2, n - 1))
    kappa[1] = cm[0]
    return np.array(kappa[1:])


def _is_lattice(model: EnvironmentModel) -> bool:
    """Whether all log A atoms sit in one group hZ (so lambda(s) = 1 for some s != 0)."""
    if not model.is_mixture:
        return False
    ell = [x for x, w in zip(model.log_means, model.weights) if w > 0 and x != 0.0]
    return not ell or _rationally_dependent(ell)


def _rationally_dependent(values) -> bool:
    base = values[0]
    for x in values[1:]:
        ratio = x / base
        approx = Fraction(ratio).limit_denominator(LATTICE_MAX_DENOM)
        if abs(ratio - float(approx)) > LATTICE_REL_TOL * max(1.0, abs(ratio)):
            return False
    return True


def _is_shifted_lattice(model: EnvironmentModel) -> bool:
    """Whether log A sits on some a + hZ, so that |lambda(s)| = 1 for some s != 0."""
    if not model.is_mixture:
        return False
    ell = sorted({x for x, w in zip(model.log_means, model.weights) if w > 0})
    diffs = [x - ell[0] for x in ell[1:]]
    return not diffs or _rationally_dependent(diffs)


def check_hypotheses(model: EnvironmentModel, q: float, p: float) -> HypothesisReport:
    """Evaluate the moment hypothesis and the structural flags for ``model``."""
    if not q > 1:
        raise ModelError(f"q must exceed 1, got {q}")
    if not 1 < p <= 2:
        raise ModelError(f"p must lie in (1, 2], got {p}")
    if model.is_mixture:
        h1 = 0.0
        for law, w in zip(model.laws, model.weights):
            if w == 0:
                continue
            ell = math.log(law.mean)
            h1 += w * (1 + abs(ell) ** q) * (law.normalized_power_moment(p) + 1)
        cramer = False
    else:
        lo, hi = model.log_a_bounds
        dens = _log_a_density(model)

        def integrand(x):
            return dens(x) * (1 + abs(x) ** q) * (OffspringLaw.poisson(math.exp(x)).normalized_power_moment(p) + 1)

        h1, _ = integrate.quad(integrand, lo, hi, epsrel=1e-10, limit=200)
        cramer = True
    return HypothesisReport(
        mu=model.mu, sigma2=model.sigma2, gamma=model.gamma, q=q, p=p,
        h1_value=float(h1) if math.isfinite(h1) else math.inf,
        nonlattice=not model.lattice, cramer=cramer, supercritical=model.mu > 0,
        strongly_nonlattice=not _is_shifted_lattice(model),
    )


# --- reference models used by the test and acceptance suites ---------------

REFERENCE_MODELS: dict[str, dict] = {
    "dirac2": {"kind": "finite_mixture", "laws": [{"kind": "dirac", "m": 2}], "weights": [1.0]},
    "M0": {
        "kind": "finite_mixture",
        "laws": [{"kind": "explicit", "pmf": [0.2, 0.3, 0.5]},
                 {"kind": "explicit", "pmf": [0.1, 0.2, 0.7]}],
        "weights": [0.5, 0.5],
    },
    "d23_half": {"kind": "finite_mixture",
                 "laws": [{"kind": "dirac", "m": 2}, {"kind": "dirac", "m": 3}],
                 "weights": [0.5, 0.5]},
    "d23_quarter": {"kind": "finite_mixture",
                    "laws": [{"kind": "dirac", "m": 2}, {"kind": "dirac", "m": 3}],
                    "weights": [0.75, 0.25]},
    "loguniform": {"kind": "poisson_loguniform", "a_min": 1.2, "a_max": 3.0},
    "lognormal": {"kind": "poisson_lognormal_trunc", "m": 0.6, "v": 0.09,
                  "a_min": 1.1, "a_max": 4.0},
}


def reference_model(name: str) -> EnvironmentModel:
    try:
        return build_model(REFERENCE_MODELS[name])
    except KeyError:
        raise ModelError(f"no reference model named {name!r}") from None
