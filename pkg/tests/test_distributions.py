"""Family math against scipy.stats, parameter transforms, cure-model sampling."""

import math

import numpy as np
import pytest
from scipy import stats

from eventcast.distributions import (CURE_PROB_CAP, CureModelParams,
                                     CureModelSpec, Exponential, FamilyKind,
                                     LogNormal, Weibull, cdf,
                                     cure_prob_from_theta, cure_prob_to_theta,
                                     cure_survival, describe_family,
                                     family_from_theta, family_to_theta,
                                     inverse_survival, kind_of, log_pdf,
                                     log_survival, params_from_vector,
                                     params_to_vector, pdf, sample,
                                     sample_cure, survival)

GRID = np.array([0.01, 0.5, 1.0, 7.0, 30.0, 365.0, 4000.0])


def frozen(family):
    """The scipy.stats equivalent of one of our families."""
    if isinstance(family, Exponential):
        return stats.expon(scale=1.0 / family.rate)
    if isinstance(family, Weibull):
        return stats.weibull_min(family.shape, scale=family.scale)
    return stats.lognorm(s=family.sdlog, scale=math.exp(family.meanlog))


@pytest.mark.parametrize("family", [
    Exponential(rate=0.004),
    Weibull(shape=0.8, rateparam=0.01),
    Weibull(shape=1.7, rateparam=2e-4),
    LogNormal(meanlog=5.0, sdlog=1.3),
])
class TestAgainstScipy:
    def test_survival_and_cdf(self, family):
        ref = frozen(family)
        np.testing.assert_allclose(survival(family, GRID), ref.sf(GRID), rtol=1e-12)
        np.testing.assert_allclose(cdf(family, GRID), ref.cdf(GRID), rtol=1e-10)
        np.testing.assert_allclose(log_survival(family, GRID), ref.logsf(GRID),
                                   rtol=1e-10, atol=1e-12)

    def test_density(self, family):
        ref = frozen(family)
        np.testing.assert_allclose(pdf(family, GRID), ref.pdf(GRID), rtol=1e-10)
        np.testing.assert_allclose(log_pdf(family, GRID), ref.logpdf(GRID),
                                   rtol=1e-10)

    def test_inverse_survival(self, family):
        u = np.array([0.999, 0.9, 0.5, 0.1, 1e-6])
        ref = frozen(family)
        np.testing.assert_allclose(inverse_survival(family, u), ref.isf(u),
                                   rtol=1e-9)
        np.testing.assert_allclose(survival(family, inverse_survival(family, u)),
                                   u, rtol=1e-9)

    def test_sampling_matches_distribution(self, family):
        rng = np.random.default_rng(7)
        draws = sample(family, rng, size=2000)
        assert stats.kstest(draws, frozen(family).cdf).pvalue > 0.01


def test_scalar_in_scalar_out():
    fam = Exponential(rate=0.01)
    assert isinstance(survival(fam, 10.0), float)
    assert isinstance(inverse_survival(fam, 0.5), float)
    assert isinstance(log_pdf(fam, 10.0), float)
    assert isinstance(survival(fam, np.array([10.0])), np.ndarray)


def test_density_edge_cases_at_zero():
    assert log_pdf(Weibull(shape=2.0, rateparam=0.1), 0.0) == -math.inf
    assert log_pdf(Weibull(shape=0.5, rateparam=0.1), 0.0) == math.inf
    assert log_pdf(LogNormal(meanlog=0.0, sdlog=1.0), 0.0) == -math.inf
    assert log_pdf(Exponential(rate=0.0), 5.0) == -math.inf
    assert survival(Exponential(rate=0.0), 1e9) == 1.0
    assert inverse_survival(Exponential(rate=0.0), 0.5) == math.inf


def test_weibull_parametrization_roundtrip():
    w = Weibull.from_shape_scale(1.3, 250.0)
    assert w.scale == pytest.approx(250.0, rel=1e-12)
    # survival at the scale is exp(-1) for every shape
    assert survival(w, 250.0) == pytest.approx(math.exp(-1.0), rel=1e-12)


def test_parameter_validation():
    with pytest.raises(ValueError):
        Exponential(rate=-0.1)
    with pytest.raises(ValueError):
        Weibull(shape=0.0, rateparam=1.0)
    with pytest.raises(ValueError):
        Weibull(shape=1.0, rateparam=0.0)
    with pytest.raises(ValueError):
        LogNormal(meanlog=0.0, sdlog=0.0)
    with pytest.raises(ValueError):
        CureModelParams(Exponential(0.01), Exponential(0.001), cure_prob=1.5)
    with pytest.raises(ValueError):
        inverse_survival(Exponential(0.01), 0.0)


def test_family_kind_parse():
    assert FamilyKind.parse("exp") is FamilyKind.EXPONENTIAL
    assert FamilyKind.parse("Weibull") is FamilyKind.WEIBULL
    assert FamilyKind.parse("log-normal") is FamilyKind.LOGNORMAL
    assert FamilyKind.EXPONENTIAL.n_params == 1
    assert FamilyKind.WEIBULL.n_params == 2
    with pytest.raises(ValueError, match="unknown family"):
        FamilyKind.parse("gamma")


def test_kind_of_and_describe():
    w = Weibull(shape=0.8, rateparam=0.01)
    assert kind_of(w) is FamilyKind.WEIBULL
    desc = describe_family(w)
    assert desc["family"] == "weibull"
    assert desc["scale"] == pytest.approx(w.scale)
    assert describe_family(Exponential(0.2)) == {"family": "exponential", "rate": 0.2}
    assert set(describe_family(LogNormal(1.0, 2.0))) == {"family", "meanlog", "sdlog"}
    with pytest.raises(TypeError):
        kind_of("weibull")


def test_theta_roundtrips():
    for fam in (Exponential(0.004), Weibull(1.3, 2e-4), LogNormal(4.0, 0.7)):
        back = family_from_theta(kind_of(fam), family_to_theta(fam))
        for key, val in describe_family(fam).items():
            if key != "family":
                assert describe_family(back)[key] == pytest.approx(val, rel=1e-12)
    with pytest.raises(ValueError):
        family_to_theta(Exponential(0.0))


def test_cure_prob_transform():
    r = 0.37
    assert cure_prob_from_theta(cure_prob_to_theta(r)) == pytest.approx(r, rel=1e-12)
    assert cure_prob_from_theta(1e9) == CURE_PROB_CAP
    for bad in (0.0, 1.0):
        with pytest.raises(ValueError):
            cure_prob_to_theta(bad)


def test_params_vector_roundtrip():
    params = CureModelParams(event=Weibull(0.9, 0.02),
                             dropout=Exponential(0.001), cure_prob=0.25)
    spec = CureModelSpec(FamilyKind.WEIBULL, FamilyKind.EXPONENTIAL)
    vec = params_to_vector(params)
    assert len(vec) == 4
    back = params_from_vector(spec, vec)
    assert back.cure_prob == pytest.approx(0.25, rel=1e-12)
    assert back.event.shape == pytest.approx(0.9, rel=1e-12)
    assert back.dropout.rate == pytest.approx(0.001, rel=1e-12)

    vec2 = params_to_vector(params, with_cure=False, include_dropout=False)
    assert len(vec2) == 2
    back2 = params_from_vector(spec, vec2, with_cure=False, include_dropout=False)
    assert back2.cure_prob == 0.0
    assert back2.dropout == Exponential(rate=0.0)


def test_spec_counts_parameters():
    assert CureModelSpec(FamilyKind.WEIBULL, FamilyKind.WEIBULL).n_params == 4
    assert CureModelSpec(FamilyKind.EXPONENTIAL, None).n_params == 1


def test_cure_survival_mixture():
    params = CureModelParams(Exponential(0.01), Exponential(0.001), cure_prob=0.3)
    t = np.array([0.0, 50.0, 1e6])
    expected = 0.3 + 0.7 * np.exp(-0.01 * t)
    np.testing.assert_allclose(cure_survival(params, t), expected, rtol=1e-12)
    assert cure_survival(params, 1e12) == pytest.approx(0.3)


def test_sample_cure_frequencies():
    params = CureModelParams(Exponential(0.01), Exponential(0.002), cure_prob=0.4)
    rng = np.random.default_rng(11)
    draws = [sample_cure(params, rng) for _ in range(4000)]
    cured_frac = np.mean([c for c, _, _ in draws])
    # binomial sd is about 0.008 here
    assert cured_frac == pytest.approx(0.4, abs=0.04)
    assert all(t is None for c, t, _ in draws if c)
    times = [t for c, t, _ in draws if not c]
    assert np.mean(times) == pytest.approx(100.0, rel=0.1)
