import math

import numpy as np
import pytest

from bpre.envmodel import (OffspringLaw, build_model, check_hypotheses, dirac_mixture,
                           lambda_analytic, lambda_quadrature, log_a_cumulants, reference_model)
from bpre.errors import HypothesisViolation, ModelError
from bpre.numerics import stream_generator


def test_dirac2_model(dirac2):
    assert dirac2.mu == math.log(2)
    assert dirac2.sigma2 == 0
    assert dirac2.gamma == 0


def test_m0_moments(m0):
    assert m0.mu == pytest.approx((math.log(1.3) + math.log(1.6)) / 2, abs=1e-14)
    assert m0.mu == pytest.approx(0.36618, abs=1e-5)
    assert m0.gamma == 0.2


def test_dirac1_not_supercritical():
    with pytest.raises(HypothesisViolation) as exc:
        dirac_mixture([1], [1.0])
    assert exc.value.hypothesis == "supercriticality"


def test_h2_boundary_unreachable():
    # gamma = 1 needs a law with Q(0) = 1, whose mean A = 0 is already refused
    with pytest.raises(ModelError):
        build_model({"kind": "finite_mixture", "weights": [0.5, 0.5],
                     "laws": [{"kind": "explicit", "pmf": [1.0]}, {"kind": "dirac", "m": 5}]})


@pytest.mark.parametrize("spec", [
    {"kind": "finite_mixture", "laws": [{"kind": "explicit", "pmf": [-0.1, 0.1, 1.0]}], "weights": [1.0]},
    {"kind": "finite_mixture", "laws": [{"kind": "dirac", "m": 2}], "weights": [0.9]},
    {"kind": "finite_mixture", "laws": [{"kind": "dirac", "m": 2}], "weights": [1.0], "extra": 1},
    {"kind": "poisson_loguniform", "a_min": 0.0, "a_max": 3.0},
    {"kind": "nonsense"},
])
def test_invalid_specs(spec):
    with pytest.raises(ModelError):
        build_model(spec)


def test_offspring_law_invariants():
    assert OffspringLaw.dirac(3).mean == 3 and OffspringLaw.dirac(3).zero_mass == 0
    assert OffspringLaw.poisson(1.7).zero_mass == pytest.approx(math.exp(-1.7), rel=1e-15)
    with pytest.raises(ModelError):
        OffspringLaw.explicit([0.5, 0.5 + 1e-9])
    with pytest.raises(ModelError):
        OffspringLaw.geometric(1.0)


def test_lambda_examples(dirac2, m0):
    assert lambda_analytic(dirac2, 0.0) == 1 + 0j
    z = lambda_analytic(dirac2, 0.5)
    # the published rounding of this value is off by about 2e-4
    assert z == pytest.approx(complex(0.94056, 0.33954), abs=3e-4)
    assert z == pytest.approx(np.exp(0.5j * math.log(2)), abs=1e-15)
    expected = 0.5 * 1.3**1j + 0.5 * 1.6**1j
    assert lambda_analytic(m0, 1.0) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("name", ["loguniform", "lognormal"])
def test_lambda_closed_form_matches_quadrature(name):
    model = reference_model(name)
    for s in (0.3, 1.0, 4.0, 11.0):
        assert abs(lambda_analytic(model, s) - lambda_quadrature(model, s)) < 1e-10
    assert lambda_analytic(model, 0.0) == 1


def test_cumulant_examples(dirac2, d23_half, d23_quarter):
    k = log_a_cumulants(dirac2, 3)
    assert k[0] == pytest.approx(math.log(2), abs=1e-15) and k[1] == 0 and k[2] == 0
    assert abs(log_a_cumulants(d23_half, 3)[2]) < 1e-15
    k = log_a_cumulants(d23_quarter, 3)
    l2, l3 = math.log(2), math.log(3)
    d = l3 - l2
    assert k[0] == pytest.approx(0.75 * l2 + 0.25 * l3, abs=1e-15)
    assert k[1] == pytest.approx(0.75 * 0.25 * d * d, abs=1e-15)
    assert k[2] == pytest.approx(0.75 * 0.25 * (0.75 - 0.25) * d**3, abs=1e-15)
    # published rounding of the leading value is off in the fifth digit
    assert k[0] == pytest.approx(0.79449, abs=5e-5)
    assert k[1] == pytest.approx(0.03083, abs=1e-5)
    assert k[2] == pytest.approx(0.006249, abs=1e-6)


def test_cumulants_order_cap(m0):
    with pytest.raises(ModelError):
        log_a_cumulants(m0, 9)


@pytest.mark.parametrize("name", ["M0", "d23_quarter", "loguniform", "lognormal"])
def test_cumulants_match_stored_moments(name):
    model = reference_model(name)
    k = log_a_cumulants(model, 2)
    assert abs(k[0] - model.mu) < 1e-10 and abs(k[1] - model.sigma2) < 1e-10


def test_lognormal_cumulants_against_quadrature():
    from scipy import integrate
    model = reference_model("lognormal")
    lo, hi = model.log_a_bounds
    sd = math.sqrt(model.v)
    dens = lambda x: math.exp(-0.5 * ((x - model.m) / sd) ** 2)
    z = integrate.quad(dens, lo, hi)[0]
    mu = integrate.quad(lambda x: x * dens(x), lo, hi)[0] / z
    m3 = integrate.quad(lambda x: (x - mu) ** 3 * dens(x), lo, hi)[0] / z
    assert log_a_cumulants(model, 3)[2] == pytest.approx(m3, abs=1e-10)


def test_hypotheses_examples(dirac2, d23_half):
    rep = check_hypotheses(dirac2, 4.0, 2.0)
    assert not rep.nonlattice and not rep.cramer and rep.h1 and math.isfinite(rep.h1_value)
    rep = check_hypotheses(d23_half, 4.0, 2.0)
    assert rep.nonlattice and not rep.cramer
    rep = check_hypotheses(reference_model("loguniform"), 4.0, 2.0)
    assert rep.gamma == pytest.approx(math.exp(-1.2), abs=1e-15)
    assert rep.gamma == pytest.approx(0.3012, abs=1e-4)
    assert rep.cramer and rep.nonlattice and rep.h2


def test_hypotheses_argument_checks(m0):
    with pytest.raises(ModelError):
        check_hypotheses(m0, 1.0, 2.0)
    with pytest.raises(ModelError):
        check_hypotheses(m0, 4.0, 2.5)


def test_lattice_detection():
    assert dirac_mixture([2, 4], [0.5, 0.5]).lattice      # log 4 = 2 log 2
    assert dirac_mixture([4, 8], [0.5, 0.5]).lattice      # ratio 3/2
    assert not dirac_mixture([2, 3], [0.5, 0.5]).lattice
    assert not dirac_mixture([2, 3, 4], [0.2, 0.3, 0.5]).lattice


def test_h1_finite_sum(m0):
    rep = check_hypotheses(m0, 2.0, 2.0)
    direct = 0.0
    for pmf, w in (([0.2, 0.3, 0.5], 0.5), ([0.1, 0.2, 0.7], 0.5)):
        a = sum(j * p for j, p in enumerate(pmf))
        mom = sum(p * (j / a) ** 2 for j, p in enumerate(pmf))
        direct += w * (1 + abs(math.log(a)) ** 2) * (mom + 1)
    assert rep.h1_value == pytest.approx(direct, rel=1e-14)


def test_empirical_characteristic_function(d23_quarter):
    rng = stream_generator(11, 0)
    N = 10**6
    logs = np.where(rng.random(N) < 0.75, math.log(2), math.log(3))
    for s in (0.5, 2.0, 7.0):
        c, sn = np.cos(s * logs), np.sin(s * logs)
        se = math.sqrt((c.var() + sn.var()) / N)
        assert abs(complex(c.mean(), sn.mean()) - lambda_analytic(d23_quarter, s)) < 4 * se
