import math

import arviz as az
import numpy as np
import pytest

from srm_reciprocity.diagnostics import (SUMMARY_COLUMNS, effective_sample_size, posterior_summary, split_chains,
                                         split_rhat)
from srm_reciprocity.errors import InsufficientDrawsError


def ar1_chains(rng, n_chains, n_draws, phi):
    chains = np.empty((n_chains, n_draws))
    innovation_sd = math.sqrt(1.0 - phi * phi)
    for c in range(n_chains):
        value = rng.standard_normal()
        for t in range(n_draws):
            value = phi * value + innovation_sd * rng.standard_normal()
            chains[c, t] = value
    return chains


def test_split_chains_drops_middle_draw():
    draws = np.arange(14.0).reshape(2, 7)
    split = split_chains(draws)
    assert split.shape == (4, 3)
    np.testing.assert_array_equal(split[0], [0, 1, 2])
    np.testing.assert_array_equal(split[2], [4, 5, 6])


def test_rhat_of_constant_chains_is_nan():
    assert math.isnan(split_rhat(np.full((4, 100), 2.5)))


def test_rhat_of_mixed_chains_is_close_to_one(rng):
    draws = rng.standard_normal((2, 10000))
    assert split_rhat(draws) < 1.01


def test_rhat_detects_offset_chain(rng):
    draws = rng.standard_normal((2, 10000))
    draws[1] += 10.0
    assert split_rhat(draws) > 2.0


def test_rhat_detects_trend_within_single_chain():
    """Split halves of a drifting chain disagree even with one chain."""
    draws = np.linspace(0.0, 20.0, 1000) + np.sin(np.arange(1000))
    assert split_rhat(draws) > 1.5


def test_rhat_with_non_finite_draws_is_nan(rng):
    draws = rng.standard_normal((2, 50))
    draws[0, 3] = np.inf
    assert math.isnan(split_rhat(draws))


@pytest.mark.parametrize("statistic", [split_rhat, effective_sample_size])
def test_too_few_draws(statistic):
    with pytest.raises(InsufficientDrawsError):
        statistic(np.arange(7.0))


def test_rejects_three_dimensional_input():
    with pytest.raises(ValueError):
        split_rhat(np.zeros((2, 2, 10)))


def test_ess_of_independent_draws(rng):
    draws = rng.standard_normal((4, 1000))
    ess = effective_sample_size(draws)
    assert 3000.0 <= ess <= 4000.0


def test_ess_of_autocorrelated_draws(rng):
    phi = 0.9
    draws = ar1_chains(rng, 4, 5000, phi)
    expected = draws.size * (1.0 - phi) / (1.0 + phi)
    assert abs(effective_sample_size(draws) - expected) < 0.25 * expected


def test_ess_of_constant_chain_is_nan():
    assert math.isnan(effective_sample_size(np.ones(200)))


def test_ess_never_exceeds_draw_count():
    # alternating sign draws are anticorrelated
    draws = np.tile([1.0, -1.0], 500)[np.newaxis, :]
    assert effective_sample_size(draws) <= draws.size


def test_summary_columns_and_values():
    draws = np.array([1.0, 2.0, 3.0] * 4).reshape(1, 12, 1)
    draws = np.concatenate([draws, np.full((1, 12, 1), 7.0)], axis=2)
    summary = posterior_summary(draws, ['x', 'constant'])
    assert list(summary.columns) == SUMMARY_COLUMNS
    assert list(summary.index) == ['x', 'constant']
    assert summary.loc['x', 'mean'] == pytest.approx(2.0)
    assert summary.loc['x', 'q50'] == pytest.approx(2.0)
    assert summary.loc['constant', 'sd'] == 0.0
    assert summary.loc['constant', 'q05'] == 7.0
    assert math.isnan(summary.loc['constant', 'rhat'])


def test_summary_with_too_few_draws_reports_nan_diagnostics():
    summary = posterior_summary(np.arange(4.0).reshape(2, 2, 1), ['x'])
    assert summary.loc['x', 'mean'] == pytest.approx(1.5)
    assert math.isnan(summary.loc['x', 'rhat'])
    assert math.isnan(summary.loc['x', 'ess'])


def test_summary_rejects_name_mismatch():
    with pytest.raises(ValueError):
        posterior_summary(np.zeros((1, 10, 2)), ['only_one'])


def test_statistics_agree_with_arviz(rng):
    draws = rng.standard_normal((3, 400)) + np.linspace(0.0, 0.3, 400)
    assert split_rhat(draws) == pytest.approx(float(az.rhat(draws, method="split")))
    assert effective_sample_size(draws) == pytest.approx(min(float(az.ess(draws, method="mean")), draws.size))
