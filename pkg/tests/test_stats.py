"""Normal CDF / quantile against scipy and published quantile values."""

import numpy as np
import pytest
from scipy import special, stats

from outrand.stats import normal_cdf, normal_pdf, normal_quantile

# Standard normal quantiles as tabulated (e.g. any statistics handbook).
TABULATED = [
    (0.5, 0.0),
    (0.975, 1.959964),
    (0.995, 2.575829),
    (0.01, -2.326348),
    (0.005, -2.575829),
    (0.1, -1.281552),
]


def test_cdf_matches_scipy():
    xs = np.linspace(-8.0, 8.0, 321)
    ours = np.array([normal_cdf(x) for x in xs])
    np.testing.assert_allclose(ours, stats.norm.cdf(xs), rtol=0, atol=1e-14)


def test_pdf_matches_scipy():
    xs = np.linspace(-6.0, 6.0, 101)
    ours = np.array([normal_pdf(x) for x in xs])
    np.testing.assert_allclose(ours, stats.norm.pdf(xs), rtol=1e-12, atol=0)


@pytest.mark.parametrize("p,expected", TABULATED)
def test_quantile_tabulated(p, expected):
    assert normal_quantile(p) == pytest.approx(expected, abs=5e-7)


def test_quantile_absolute_error_below_1e9():
    ps = np.concatenate([
        np.geomspace(1e-12, 0.5, 300),
        1.0 - np.geomspace(1e-12, 0.5, 300),
    ])
    errs = [abs(normal_quantile(p) - special.ndtri(p)) for p in ps]
    assert max(errs) < 1e-9


def test_quantile_round_trip():
    for p in (1e-9, 1e-4, 0.3, 0.5, 0.77, 1 - 1e-6):
        assert normal_cdf(normal_quantile(p)) == pytest.approx(p, rel=1e-12, abs=1e-15)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.2, 1.7])
def test_quantile_domain(p):
    with pytest.raises(ValueError):
        normal_quantile(p)
