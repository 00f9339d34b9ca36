import json
import math

import numpy as np
import pytest
from scipy.stats import halfnorm

from srm_reciprocity.dyad_data import NetworkDataset
from srm_reciprocity.model import FixedEffects, ModelConfig, ParameterLayout, VarianceComponents
from srm_reciprocity.reciprocity import GridSpec, dyadic_reciprocity, reciprocity_curve
from srm_reciprocity.sampler import (ChainDiagnostics, PosteriorSamples, SamplerConfig, adaptation_windows,
                                     base_point, fit, identifiability_warnings, initialize, read_posterior,
                                     write_posterior)
from srm_reciprocity.simulator import CovariateGenerator, SimulationSpec, simulate

POPULATION = ['alpha', 'beta', 'sigma_a', 'sigma_b', 'rho_ab', 'sigma_u', 'sigma_v', 'rho_uv', 'sigma_d']


def quick_config(**overrides):
    settings = dict(chains=2, warmup_iterations=30, sampling_iterations=20, seed=5, max_tree_depth=5,
                    latent_thin=10, progress=False)
    settings.update(overrides)
    return SamplerConfig(**settings)


@pytest.mark.parametrize("overrides", [
    {'chains': 0},
    {'sampling_iterations': 0},
    {'warmup_iterations': -1},
    {'target_accept': 1.0},
    {'max_tree_depth': 0},
    {'latent_thin': -1},
    {'parameterization': 'whitened'},
    {'threads': 0},
])
def test_sampler_config_validation(overrides):
    with pytest.raises(ValueError):
        SamplerConfig(**overrides)


def test_sampler_config_dict_omits_runtime_settings():
    data = SamplerConfig(threads=3).to_dict()
    assert 'threads' not in data and 'progress' not in data
    assert data['parameterization'] == 'noncentered'


def test_initial_alpha_is_pooled_logit():
    records = [("a", "b", 5, 10, 0.0, None), ("b", "a", 5, 10, 0.0, None), ("a", "c", 2, 4, 0.0, None)]
    dataset = NetworkDataset.from_records(records)
    config = ModelConfig()
    layout = ParameterLayout.for_dataset(dataset, config)
    theta = base_point(dataset, config)
    assert theta[layout.index['alpha']] == pytest.approx(0.0)
    assert theta[layout.index['sigma_a']] == pytest.approx(math.log(0.5))
    assert theta[layout.index['rho_ab']] == 0.0
    assert theta[layout.index['beta']] == 0.0


@pytest.mark.parametrize("successes, expected", [(10, 4.0), (0, -4.0)])
def test_initial_alpha_is_clamped(successes, expected):
    records = [("a", "b", successes, 10, 0.0, None), ("b", "a", successes, 10, 0.0, None)]
    dataset = NetworkDataset.from_records(records)
    config = ModelConfig()
    theta = base_point(dataset, config)
    assert theta[ParameterLayout.for_dataset(dataset, config).index['alpha']] == expected


def test_jittered_start_stays_near_base_point(simulated, rng):
    dataset, _ = simulated
    config = ModelConfig()
    base = base_point(dataset, config)
    for _ in range(5):
        theta = initialize(dataset, config, rng)
        assert theta.shape == base.shape
        assert np.max(np.abs(theta - base)) <= 0.1


@pytest.mark.parametrize("warmup, expected", [
    (1000, (75, [100, 150, 250, 450, 950])),
    (100, (15, [90])),
    (10, (10, [])),
    (0, (0, [])),
])
def test_adaptation_windows(warmup, expected):
    assert adaptation_windows(warmup) == expected


def test_short_fit_shapes_and_determinism(simulated):
    dataset, _ = simulated
    samples, diagnostics = fit(dataset, ModelConfig(), quick_config())
    again, _ = fit(dataset, ModelConfig(), quick_config(threads=2))

    assert samples.parameter_names == POPULATION
    assert samples.draws.shape == (2, 20, 9)
    assert np.all(np.isfinite(samples.draws))
    np.testing.assert_array_equal(samples.draws, again.draws)

    # latents kept at draws 0 and 10
    n_latent = 8 + 8 + 28 + 28 + 56
    assert samples.latent_draws.shape == (2, 2, n_latent)
    assert len(samples.latent_names) == n_latent

    assert set(diagnostics.rhat) == set(POPULATION)
    assert len(diagnostics.divergences) == 2
    assert all(step > 0.0 for step in diagnostics.step_size)
    assert samples.dataset_fingerprint == dataset.fingerprint()
    assert samples.config['sampler']['seed'] == 5


ONE_WAY = [("1", "2", 1, 4, 0.0, None), ("1", "3", 1, 4, 0.0, None), ("2", "3", 1, 4, 0.0, None)]


@pytest.mark.parametrize("parameterization", ['noncentered', 'centered'])
@pytest.mark.parametrize("seed", range(15))
def test_short_fits_on_tiny_networks_finish(triad, parameterization, seed):
    config = SamplerConfig(chains=1, warmup_iterations=100, sampling_iterations=50, seed=seed, latent_thin=0,
                           parameterization=parameterization, progress=False)
    for dataset in (triad, NetworkDataset.from_records(ONE_WAY)):
        samples, diagnostics = fit(dataset, ModelConfig(), config)
        assert samples.draws.shape == (1, 50, 9)
        assert np.all(np.isfinite(samples.draws))
        assert 0 <= diagnostics.divergences[0] <= 50


def test_different_seed_changes_draws(simulated):
    dataset, _ = simulated
    first, _ = fit(dataset, ModelConfig(), quick_config(chains=1))
    second, _ = fit(dataset, ModelConfig(), quick_config(chains=1, seed=6))
    assert not np.array_equal(first.draws, second.draws)


def test_reduced_model_fit(simulated):
    dataset, _ = simulated
    config = ModelConfig(overdispersion_enabled=False, random_slopes_enabled=False)
    samples, _ = fit(dataset, config, quick_config(chains=1, latent_thin=0, parameterization='centered'))
    assert samples.parameter_names == ['alpha', 'beta', 'sigma_a', 'sigma_b', 'rho_ab', 'sigma_u']
    assert samples.latent_draws is None
    assert np.all(samples.column('sigma_u') > 0.0)


def test_posterior_round_trip(simulated, tmp_path):
    dataset, _ = simulated
    samples, diagnostics = fit(dataset, ModelConfig(), quick_config())
    written = write_posterior(samples, diagnostics, tmp_path, warnings=["check me"])
    assert [path.name for path in written] == ["posterior.csv", "diagnostics.json", "latents.csv"]

    metadata = json.loads((tmp_path / "diagnostics.json").read_text())
    assert metadata['parameters'] == POPULATION
    assert metadata['warnings'] == ["check me"]
    assert ChainDiagnostics.from_dict(metadata['diagnostics']).divergences == diagnostics.divergences

    loaded = read_posterior(tmp_path / "posterior.csv")
    assert loaded.parameter_names == POPULATION
    np.testing.assert_allclose(loaded.draws, samples.draws, rtol=1e-15, atol=0.0)
    assert loaded.covariate['transform']['kind'] == 'none'
    assert loaded.config['model']['overdispersion_enabled'] is True


def test_read_posterior_without_metadata(tmp_path):
    (tmp_path / "draws.csv").write_text("chain,iteration,alpha,sigma_u\n0,0,0.1,1.0\n0,1,0.2,1.1\n")
    loaded = read_posterior(tmp_path / "draws.csv")
    assert loaded.draws.shape == (1, 2, 2)
    assert loaded.covariate == {}


def test_read_posterior_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_posterior(tmp_path / "absent.csv")


@pytest.mark.parametrize("name, value", [("sigma_u", 0.0), ("rho_ab", 1.0), ("alpha", float('nan'))])
def test_posterior_samples_reject_invalid_draws(name, value):
    draws = np.full((1, 3, 1), value)
    with pytest.raises(ValueError):
        PosteriorSamples(draws=draws, parameter_names=[name])


def test_identifiability_warnings_one_way_design():
    records = ONE_WAY
    messages = identifiability_warnings(NetworkDataset.from_records(records), ModelConfig())
    assert len(messages) == 2
    assert any("confounded" in message for message in messages)
    assert len(identifiability_warnings(NetworkDataset.from_records(records),
                                        ModelConfig(overdispersion_enabled=False))) == 1


def test_identifiability_warnings_reciprocated_design(triad):
    assert identifiability_warnings(triad, ModelConfig()) == []


def test_diagnostics_convergence_and_rate():
    diagnostics = ChainDiagnostics(rhat={'alpha': 1.01, 'beta': 1.02}, ess={'alpha': 400.0, 'beta': 300.0},
                                   divergences=[1, 3], warmup_divergences=[5, 0], max_tree_depth_hits=[0, 0],
                                   mean_accept_stat=[0.8, 0.82], step_size=[0.3, 0.25],
                                   mean_leapfrog_steps=[7.0, 7.5], sampling_iterations=100)
    assert diagnostics.divergence_rate == pytest.approx(0.02)
    assert diagnostics.converged()
    diagnostics.rhat['beta'] = float('nan')
    assert not diagnostics.converged()


RECOVERY_FIXED = FixedEffects(alpha=-1.0, beta=0.5)
RECOVERY_TRUTH = VarianceComponents(sigma_a=0.8, sigma_b=0.6, rho_ab=0.3, sigma_u=1.0,
                                    sigma_v=0.5, rho_uv=0.4, sigma_d=0.3)
RECOVERY_SEEDS = (101, 102, 103, 104, 105)


@pytest.fixture(scope="module")
def recovery_fits():
    """Five seeded 40-node round robins, each fitted with 4 chains x (1000 + 1000)."""
    fits = []
    for seed in RECOVERY_SEEDS:
        spec = SimulationSpec(n_nodes=40, fixed=RECOVERY_FIXED, components=RECOVERY_TRUTH, trials_per_cell=20,
                              covariate=CovariateGenerator(kind='uniform', low=-1.0, high=1.0), seed=seed)
        dataset, _ = simulate(spec)
        samples, diagnostics = fit(dataset, ModelConfig(),
                                   SamplerConfig(chains=4, warmup_iterations=1000, sampling_iterations=1000,
                                                 seed=seed, latent_thin=0, threads=4, progress=False))
        fits.append((dataset, samples, diagnostics))
    return fits


@pytest.mark.slow
def test_recovers_population_parameters(recovery_fits):
    truth = {'alpha': RECOVERY_FIXED.alpha, 'beta': RECOVERY_FIXED.beta, **{
        name: getattr(RECOVERY_TRUTH, name) for name in POPULATION[2:]}}
    well_covered = 0
    for _, samples, diagnostics in recovery_fits:
        assert all(value < 1.05 for value in diagnostics.rhat.values()), diagnostics.rhat
        assert all(value > 200.0 for value in diagnostics.ess.values()), diagnostics.ess
        covered = 0
        for name, value in truth.items():
            lower, upper = np.quantile(samples.pooled(name), [0.05, 0.95])
            covered += lower <= value <= upper
        well_covered += covered >= 7
    assert well_covered >= 4


@pytest.mark.slow
def test_recovers_reciprocity_curve(recovery_fits):
    dataset, samples, _ = recovery_fits[0]
    x = dataset.covariate
    points = (float(np.min(x)), float(np.mean(x)), float(np.max(x)))
    curve = reciprocity_curve(samples, GridSpec(values=points))
    assert len(curve) == 3
    true_rho = dyadic_reciprocity(curve.grid, RECOVERY_TRUTH)
    assert np.all((curve.rho_q05 <= true_rho) & (true_rho <= curve.rho_q95))
    assert np.all((curve.rho_q05 <= curve.rho_mean) & (curve.rho_mean <= curve.rho_q95))


@pytest.mark.slow
def test_zero_variance_truth_shrinks_every_sd():
    zero = VarianceComponents(sigma_a=0.0, sigma_b=0.0, rho_ab=0.0, sigma_u=0.0, sigma_v=0.0, rho_uv=0.0,
                              sigma_d=0.0)
    spec = SimulationSpec(n_nodes=20, fixed=FixedEffects(0.0, 0.0), components=zero, trials_per_cell=20,
                          covariate=CovariateGenerator(kind='uniform', low=-1.0, high=1.0), seed=77)
    dataset, _ = simulate(spec)
    config = ModelConfig()
    samples, _ = fit(dataset, config, SamplerConfig(chains=2, warmup_iterations=500, sampling_iterations=500,
                                                    seed=8, latent_thin=0, progress=False))
    prior_median = float(halfnorm(scale=config.prior.scale_sd).median())
    for name in ('sigma_a', 'sigma_b', 'sigma_u', 'sigma_v', 'sigma_d'):
        assert float(np.median(samples.pooled(name))) < prior_median, name


@pytest.mark.slow
def test_more_trials_contract_the_intercept_posterior():
    def posterior_sd(trials):
        spec = SimulationSpec(n_nodes=15, components=VarianceComponents(sigma_d=0.3, sigma_v=0.3),
                              trials_per_cell=trials, seed=13)
        dataset, _ = simulate(spec)
        samples, _ = fit(dataset, ModelConfig(),
                         SamplerConfig(chains=2, warmup_iterations=300, sampling_iterations=300,
                                       seed=3, latent_thin=0, progress=False))
        return float(np.std(samples.pooled('alpha')))

    assert posterior_sd(100) < posterior_sd(2)
