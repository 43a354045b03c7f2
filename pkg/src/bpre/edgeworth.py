"""Edgeworth expansion of the law of log Z_n.

Pipeline: the characteristic function of the standardized log Z_n is
``phi(t u / sigma) * exp(W(t, u))`` to the required order, with
``u = n^{-1/2}``. Expanding in ``u`` gives polynomials ``p_k(t)``; each
``t^j exp(-t^2/2)`` is the Fourier transform of ``(-i)^j H_j psi``, and
integrating ``H_j psi`` gives ``-H_{j-1} psi``. Hence

    G_r(x) = Phi(x) - psi(x) sum_k n^{1-k/2} Q_k(x),
    Q_k(x) = sum_j (-i)^j a_{j,k} H_{j-1}(x),

with ``a_{j,k}`` the coefficient of ``t^j`` in ``p_k``. Signs follow from
that chain alone and are pinned by the classical iid expansion
(phi = 1 gives ``Q_3 = kappa_3 / (6 sigma^3) * (x^2 - 1)``).

Series arithmetic is exact over the Gaussian rationals generated by the
(float) inputs.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from .envmodel import EnvironmentModel
from .errors import ModelError
from .numerics import dkw_bound, norm_cdf, norm_pdf, sup_distance
from .simulate import Ensemble

MAX_ORDER = 8
IMAG_TOL = 1e-10


@dataclass(frozen=True)
class GaussRat:
    """Exact complex number with rational parts."""

    re: Fraction = Fraction(0)
    im: Fraction = Fraction(0)

    @classmethod
    def of(cls, z) -> "GaussRat":
        if isinstance(z, GaussRat):
            return z
        z = complex(z)
        return cls(Fraction(z.real), Fraction(z.imag))

    def __add__(self, o):
        o = GaussRat.of(o)
        return GaussRat(self.re + o.re, self.im + o.im)

    __radd__ = __add__

    def __neg__(self):
        return GaussRat(-self.re, -self.im)

    def __sub__(self, o):
        return self + (-GaussRat.of(o))

    def __mul__(self, o):
        if isinstance(o, (int, Fraction)):
            return GaussRat(self.re * o, self.im * o)
        o = GaussRat.of(o)
        return GaussRat(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)

    __rmul__ = __mul__

    def __truediv__(self, o):
        if not isinstance(o, (int, Fraction)):
            raise TypeError("division by rationals only")
        return GaussRat(self.re / o, self.im / o)

    def __bool__(self):
        return bool(self.re) or bool(self.im)

    def __complex__(self):
        return complex(float(self.re), float(self.im))


I_POW = [GaussRat(Fraction(1)), GaussRat(Fraction(0), Fraction(1)),
         GaussRat(Fraction(-1)), GaussRat(Fraction(0), Fraction(-1))]


def i_pow(k: int) -> GaussRat:
    return I_POW[k % 4]


@dataclass
class FormalSeries:
    """Bivariate polynomial in (t, u) truncated at ``max_t``/``max_u``."""

    coeffs: dict[tuple[int, int], GaussRat] = field(default_factory=dict)
    max_t: int = 72
    max_u: int = 6

    @classmethod
    def one(cls, max_t: int, max_u: int) -> "FormalSeries":
        return cls({(0, 0): GaussRat(Fraction(1))}, max_t, max_u)

    def _new(self, coeffs):
        return FormalSeries({k: v for k, v in coeffs.items() if v}, self.max_t, self.max_u)

    def __add__(self, other: "FormalSeries") -> "FormalSeries":
        out = dict(self.coeffs)
        for k, v in other.coeffs.items():
            out[k] = out.get(k, GaussRat()) + v
        return self._new(out)

    def __mul__(self, other):
        if not isinstance(other, FormalSeries):
            return self._new({k: v * other for k, v in self.coeffs.items()})
        out: dict[tuple[int, int], GaussRat] = {}
        for (ta, ua), va in self.coeffs.items():
            for (tb, ub), vb in other.coeffs.items():
                tu = (ta + tb, ua + ub)
                if tu[1] > self.max_u:
                    continue
                if tu[0] > self.max_t:
                    raise OverflowError("t-degree exceeds the declared maximum")
                out[tu] = out.get(tu, GaussRat()) + va * vb
        return self._new(out)

    def u_slice(self, k: int) -> dict[int, GaussRat]:
        """Coefficients of u^k as a polynomial in t (degree -> coefficient)."""
        return {t: v for (t, u), v in sorted(self.coeffs.items()) if u == k}


def truncated_exp(w: FormalSeries, order: int) -> FormalSeries:
    """sum_{l=0}^{order} w^l / l!, valid because w has no u^0 terms."""
    out = FormalSeries.one(w.max_t, w.max_u)
    term = FormalSeries.one(w.max_t, w.max_u)
    for l in range(1, order + 1):
        term = term * w * Fraction(1, l)
        out = out + term
    return out


@dataclass(frozen=True)
class HermiteBasis:
    """Probabilists' Hermite polynomials, integer coefficients lowest degree first."""

    table: tuple[tuple[int, ...], ...]

    def coeffs(self, j: int) -> tuple[int, ...]:
        return self.table[j]

    def __call__(self, j: int, x):
        return np.polynomial.polynomial.polyval(x, self.table[j])

    @property
    def jmax(self) -> int:
        return len(self.table) - 1


def hermite(jmax: int) -> HermiteBasis:
    if not 0 <= jmax <= 32:
        raise ModelError("jmax must lie in [0, 32]")
    table = [[1], [0, 1]]
    for j in range(1, jmax):
        nxt = [0] + table[j]  # x * H_j
        for d, c in enumerate(table[j - 1]):
            nxt[d] -= j * c
        table.append(nxt)
    return HermiteBasis(tuple(tuple(h) for h in table[: jmax + 1]))


@dataclass
class EdgeworthSeries:
    r: int
    sigma: float
    cumulants: tuple[float, ...]
    phi_derivs: tuple[complex, ...]
    series: FormalSeries
    pk: dict[int, dict[int, GaussRat]]
    Qk: dict[int, np.ndarray] = field(default_factory=dict)

    def s_k(self, k: int) -> int:
        return max(self.pk[k], default=0)


def expand_pk(cumulants: Sequence[float], phi_derivs: Sequence[complex], r: int) -> EdgeworthSeries:
    """Expand phi(tu/sigma) exp(W) in u and extract p_3..p_r.

    ``cumulants`` are kappa_1..kappa_r of log A; ``phi_derivs`` are
    phi'(0), phi''(0), ... (at least r-2 of them).
    """
    if not 3 <= r <= MAX_ORDER:
        raise ModelError(f"order r must lie in [3, {MAX_ORDER}]")
    if len(cumulants) < r:
        raise ModelError(f"need cumulants up to order {r}")
    if len(phi_derivs) < r - 2:
        raise ModelError(f"need phi derivatives up to order {r - 2}")
    k2 = float(cumulants[1])
    if not k2 > 0:
        raise ModelError("degenerate input: sigma = 0")
    sigma = math.sqrt(k2)
    inv_sigma = 1 / Fraction(sigma)
    max_u = r - 2
    max_t = r * (r + 1)
    w = FormalSeries({}, max_t, max_u)
    for k in range(3, r + 1):
        # Lambda^{(k)}(0) = i^k kappa_k
        c = i_pow(k) * GaussRat.of(float(cumulants[k - 1])) * (inv_sigma**k / math.factorial(k))
        w = w + FormalSeries({(k, k - 2): c}, max_t, max_u)
    phi_factor = FormalSeries.one(max_t, max_u)
    for k in range(1, r - 1):
        c = GaussRat.of(phi_derivs[k - 1]) * (inv_sigma**k / math.factorial(k))
        phi_factor = phi_factor + FormalSeries({(k, k): c}, max_t, max_u)
    full = truncated_exp(w, r - 2) * phi_factor
    pk = {k: full.u_slice(k - 2) for k in range(3, r + 1)}
    return EdgeworthSeries(r, sigma, tuple(map(float, cumulants[:r])),
                           tuple(complex(z) for z in phi_derivs), full, pk)


def pk_to_Qk(series: EdgeworthSeries, basis: HermiteBasis | None = None) -> dict[int, np.ndarray]:
    """Real power-basis coefficients of Q_3..Q_r (stored on ``series`` too)."""
    need = max((max(p, default=0) for p in series.pk.values()), default=0)
    if basis is None or basis.jmax < need:
        basis = hermite(max(need, 1))
    out = {}
    for k, poly in series.pk.items():
        acc: dict[int, GaussRat] = {}
        for j, a in poly.items():
            if j == 0:
                if a:
                    raise ModelError(f"p_{k} has a constant term; inputs are inconsistent")
                continue
            c = i_pow(-j) * a   # (-i)^j = i^{-j}
            for d, h in enumerate(basis.coeffs(j - 1)):
                if h:
                    acc[d] = acc.get(d, GaussRat()) + c * h
        deg = max(acc, default=0)
        coeffs = np.zeros(deg + 1)
        for d, v in acc.items():
            z = complex(v)
            if abs(z.imag) > IMAG_TOL:
                raise ModelError(
                    f"Q_{k} has imaginary residue {z.imag:.3g}; check that phi^(j)(0) lies in i^j R")
            coeffs[d] = z.real
        out[k] = coeffs
    series.Qk = out
    return out


def edgeworth_series(cumulants: Sequence[float], phi_derivs: Sequence[complex], r: int) -> EdgeworthSeries:
    series = expand_pk(cumulants, phi_derivs, r)
    pk_to_Qk(series)
    return series


def evaluate_Gr(series: EdgeworthSeries, n: int, x):
    """Phi(x) - psi(x) sum_k n^{1-k/2} Q_k(x)."""
    if n < 1:
        raise ModelError("n must be >= 1")
    if not series.Qk:
        pk_to_Qk(series)
    x = np.asarray(x, dtype=float)
    corr = np.zeros_like(x)
    for k, q in series.Qk.items():
        corr = corr + n ** (1 - k / 2) * np.polynomial.polynomial.polyval(x, q)
    out = norm_cdf(x) - norm_pdf(x) * corr
    return float(out) if out.ndim == 0 else out


def gr_sensitivity_phi1(series: EdgeworthSeries, n: int, x):
    """dG_r/dc where phi'(0) = i c; G_r is affine in phi'(0)."""
    bumped = list(series.phi_derivs)
    bumped[0] = bumped[0] + 1j
    other = edgeworth_series(series.cumulants, bumped, series.r)
    return evaluate_Gr(other, n, x) - evaluate_Gr(series, n, x)


@dataclass(frozen=True)
class CdfComparison:
    n: int
    r: int | None
    size: int
    dist_phi: float
    dist_gr: float | None
    dkw: float
    gr_band: float = 0.0

    @property
    def phi_distinguishable(self) -> bool:
        return self.dist_phi > 3 * self.dkw

    def summary_row(self) -> list:
        return [self.n, self.r, repr(self.dist_phi), repr(self.dist_gr), repr(self.dkw)]


def compare_sample(z: np.ndarray, series: EdgeworthSeries | None, n: int,
                   phi1_stderr: float = 0.0, alpha: float = 0.01) -> CdfComparison:
    """Sup distances from the empirical CDF of standardized ``z`` to Phi and G_r."""
    z = np.sort(np.asarray(z, dtype=float))
    if z.size == 0:
        raise ModelError("empty ensemble")
    d_phi = sup_distance(z, norm_cdf(z))
    d_g = band = None
    if series is not None:
        d_g = sup_distance(z, evaluate_Gr(series, n, z))
        if phi1_stderr:
            grid = np.linspace(-5, 5, 201)
            band = float(np.max(np.abs(gr_sensitivity_phi1(series, n, grid)))) * phi1_stderr
    return CdfComparison(n, series.r if series else None, z.size, d_phi, d_g,
                         dkw_bound(z.size, alpha), band or 0.0)


def standardize(ensemble: Ensemble, model: EnvironmentModel, n: int | None = None) -> np.ndarray:
    n = ensemble.n if n is None else n
    if not model.sigma2 > 0:
        raise ModelError("degenerate input: sigma = 0")
    L = ensemble.survivors_log_z()
    if L.size == 0:
        raise ModelError("empty ensemble")
    return (L - n * model.mu) / (model.sigma * math.sqrt(n))


def cdf_compare(ensemble: Ensemble, model: EnvironmentModel, series: EdgeworthSeries | None,
                n: int | None = None, phi1_stderr: float = 0.0) -> CdfComparison:
    n = ensemble.n if n is None else n
    return compare_sample(standardize(ensemble, model, n), series, n, phi1_stderr)


def write_cdf_table(path: Path | str, z: np.ndarray, series: EdgeworthSeries | None, n: int,
                    grid: np.ndarray | None = None) -> None:
    """CSV (x, F_hat, G_r, Phi) on an x-grid."""
    z = np.sort(np.asarray(z, dtype=float))
    grid = np.linspace(-4, 4, 161) if grid is None else grid
    fhat = np.searchsorted(z, grid, side="right") / z.size
    g = evaluate_Gr(series, n, grid) if series is not None else np.full(grid.shape, np.nan)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "F_hat", "G_r", "Phi"])
        for row in zip(grid, fhat, g, norm_cdf(grid)):
            w.writerow([repr(float(v)) for v in row])
