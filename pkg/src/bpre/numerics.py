"""Shared numerical helpers: counter-keyed random streams, deterministic
reductions, Gaussian functions and sup-norm CDF distances."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Iterator, TypeVar

import numpy as np
from scipy import special

T = TypeVar("T")
R = TypeVar("R")

SQRT_2PI = math.sqrt(2.0 * math.pi)


def stream_generator(seed: int, *key: int) -> np.random.Generator:
    """Philox generator keyed by ``(seed, *key)``.

    The key tuple fully determines the stream, so results never depend on
    which worker consumed it or in what order.
    """
    ss = np.random.SeedSequence([int(seed), *map(int, key)])
    return np.random.Generator(np.random.Philox(ss))


def ordered_map(fn: Callable[[T], R], items: Iterable[T], threads: int = 1) -> Iterator[R]:
    """``map`` over ``items`` with up to ``threads`` workers, yielding in input order."""
    if threads <= 1:
        yield from map(fn, items)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        yield from pool.map(fn, items)


def pairwise_sum(x) -> float | complex:
    """Sum over a contiguous copy so the reduction tree depends only on ``len(x)``."""
    arr = np.ascontiguousarray(x)
    if np.iscomplexobj(arr):
        return complex(np.add.reduce(arr.real), np.add.reduce(arr.imag))
    return float(np.add.reduce(arr.astype(float, copy=False)))


def mean_and_stderr(x) -> tuple[float, float]:
    arr = np.ascontiguousarray(x, dtype=float)
    n = arr.size
    if n == 0:
        return math.nan, math.nan
    m = pairwise_sum(arr) / n
    if n == 1:
        return m, math.nan
    var = pairwise_sum((arr - m) ** 2) / (n - 1)
    return m, math.sqrt(var / n)


def norm_cdf(x):
    return special.ndtr(x)


def norm_pdf(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x) / SQRT_2PI


def dkw_bound(n: int, alpha: float = 0.01) -> float:
    """Two-sided Dvoretzky-Kiefer-Wolfowitz (Massart) band half-width."""
    return math.sqrt(math.log(2.0 / alpha) / (2.0 * n))


def sup_distance(sorted_sample: np.ndarray, cdf_values: np.ndarray) -> float:
    """sup_x |F_hat(x) - F(x)| for a continuous ``F`` given at the sorted sample.

    Both one-sided limits of the empirical CDF are checked, so ties are
    handled correctly.
    """
    n = sorted_sample.size
    if n == 0:
        raise ValueError("empty sample")
    upper = np.arange(1, n + 1) / n
    lower = np.arange(0, n) / n
    return float(max(np.max(np.abs(upper - cdf_values)), np.max(np.abs(cdf_values - lower))))


def geometric_fit(n: np.ndarray, values: np.ndarray) -> tuple[float, float, float]:
    """Least-squares line through ``(n, log values)``; returns (C, rho, R^2)."""
    n = np.asarray(n, dtype=float)
    y = np.log(np.asarray(values, dtype=float))
    slope, intercept = np.polyfit(n, y, 1)
    resid = y - (slope * n + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return math.exp(intercept), math.exp(slope), r2
