import json

import pandas as pd
import pytest

from srm_reciprocity.cli import EXIT_DATA, EXIT_DIAGNOSTICS, EXIT_FAILURE, EXIT_OK, EXIT_USAGE, build_parser, main
from srm_reciprocity.manifest import file_sha256, load_manifest

QUICK_FIT = ['--chains', '2', '--warmup', '20', '--samples', '10', '--max-tree-depth', '4', '--threads', '1',
             '--quiet']


@pytest.fixture(scope="module")
def simulated_dir(tmp_path_factory):
    out_dir = tmp_path_factory.mktemp("sim")
    assert main(['simulate', '--nodes', '6', '--trials', '5', '--seed', '3', '--output-dir', str(out_dir),
                 '--quiet']) == EXIT_OK
    return out_dir


@pytest.fixture(scope="module")
def fit_dir(simulated_dir, tmp_path_factory):
    out_dir = tmp_path_factory.mktemp("fit")
    code = main(['fit', '--data', str(simulated_dir / "dataset.csv"), '--seed', '1', '--output-dir', str(out_dir)]
                + QUICK_FIT)
    assert code == EXIT_OK
    return out_dir


def test_parser_lists_subcommands():
    assert set(build_parser().subcommands) == {'simulate', 'fit', 'reciprocity', 'summarize'}


def test_simulate_writes_round_robin(tmp_path):
    assert main(['simulate', '--nodes', '20', '--seed', '9', '--output-dir', str(tmp_path), '--quiet']) == EXIT_OK
    frame = pd.read_csv(tmp_path / "dataset.csv")
    assert len(frame) == 380
    assert list(frame.columns) == ['ego', 'alter', 'successes', 'trials', 'covariate']
    truth = json.loads((tmp_path / "truth.json").read_text())
    assert truth['seed'] == 9
    manifest = load_manifest(tmp_path / "manifest-simulate.json")
    assert manifest['outputs'] == ["dataset.csv", "truth.json"]
    assert manifest['seeds'] == {'simulation': 9}


def test_simulate_is_reproducible(tmp_path):
    for name in ("first", "second"):
        assert main(['simulate', '--nodes', '7', '--seed', '4', '--output-dir', str(tmp_path / name),
                     '--quiet']) == EXIT_OK
    for output in ("dataset.csv", "truth.json"):
        assert file_sha256(tmp_path / "first" / output) == file_sha256(tmp_path / "second" / output)


def run_pipeline(root):
    sim_dir, fit_dir, curve_dir = root / "sim", root / "fit", root / "curve"
    assert main(['simulate', '--nodes', '6', '--trials', '8', '--covariate', 'uniform', '--sigma-v', '0.5',
                 '--seed', '12', '--output-dir', str(sim_dir), '--quiet']) == EXIT_OK
    assert main(['fit', '--data', str(sim_dir / "dataset.csv"), '--seed', '21', '--chains', '2', '--warmup', '20',
                 '--samples', '10', '--max-tree-depth', '4', '--threads', '2', '--quiet',
                 '--output-dir', str(fit_dir)]) == EXIT_OK
    assert main(['reciprocity', '--posterior', str(fit_dir / "posterior.csv"), '--output-dir', str(curve_dir),
                 '--quiet']) == EXIT_OK
    return sorted(path.relative_to(root) for path in root.rglob("*")
                  if path.is_file() and not path.name.startswith("manifest-"))


def test_pipeline_outputs_are_byte_identical(tmp_path):
    first = run_pipeline(tmp_path / "first")
    second = run_pipeline(tmp_path / "second")
    assert first == second
    names = {path.name for path in first}
    assert {"dataset.csv", "posterior.csv", "latents.csv", "reciprocity_curve.csv",
            "generalized_reciprocity.json"} <= names
    for relative in first:
        assert file_sha256(tmp_path / "first" / relative) == file_sha256(tmp_path / "second" / relative), relative


def test_simulate_requires_nodes(tmp_path):
    assert main(['simulate', '--output-dir', str(tmp_path)]) == EXIT_USAGE


def test_simulate_invalid_spec(tmp_path):
    assert main(['simulate', '--nodes', '5', '--rho-ab', '1.5', '--output-dir', str(tmp_path),
                 '--quiet']) == EXIT_USAGE
    assert main(['simulate', '--nodes', '2', '--output-dir', str(tmp_path), '--quiet']) == EXIT_USAGE


def test_unknown_command():
    assert main(['plot']) == EXIT_USAGE


def test_fit_outputs(fit_dir, simulated_dir):
    summary = pd.read_csv(fit_dir / "summary.csv", index_col=0)
    assert len(summary) == 9
    assert list(summary.columns) == ['mean', 'sd', 'q05', 'q50', 'q95', 'rhat', 'ess']

    posterior = pd.read_csv(fit_dir / "posterior.csv")
    assert len(posterior) == 20
    assert set(posterior['chain']) == {0, 1}

    metadata = json.loads((fit_dir / "diagnostics.json").read_text())
    assert metadata['seed'] == 1
    assert metadata['covariate']['min'] >= 0.0 and metadata['covariate']['max'] <= 1.0

    manifest = load_manifest(fit_dir / "manifest-fit.json")
    assert set(manifest['outputs']) == {"posterior.csv", "diagnostics.json", "latents.csv", "summary.csv"}
    data_path = str(simulated_dir / "dataset.csv")
    assert manifest['inputs'][data_path] == file_sha256(data_path)


def test_fit_without_overdispersion(simulated_dir, tmp_path):
    code = main(['fit', '--data', str(simulated_dir / "dataset.csv"), '--no-overdispersion', '--latent-thin', '0',
                 '--output-dir', str(tmp_path)] + QUICK_FIT)
    assert code == EXIT_OK
    summary = pd.read_csv(tmp_path / "summary.csv", index_col=0)
    assert 'sigma_d' not in summary.index
    assert len(summary) == 8
    assert not (tmp_path / "latents.csv").exists()


def test_strict_fit_fails_on_undefined_rhat(simulated_dir, tmp_path):
    code = main(['fit', '--data', str(simulated_dir / "dataset.csv"), '--chains', '2', '--warmup', '0',
                 '--samples', '1', '--strict', '--quiet', '--output-dir', str(tmp_path)])
    assert code == EXIT_DIAGNOSTICS
    assert (tmp_path / "posterior.csv").exists()


def test_fit_rejects_invalid_data(write_csv_text, tmp_path):
    path = write_csv_text("ego,alter,successes,trials,covariate\n1,2,5,4,0.0\n2,1,1,4,0.0\n")
    assert main(['fit', '--data', str(path), '--output-dir', str(tmp_path)] + QUICK_FIT) == EXIT_DATA


def test_fit_missing_data_file(tmp_path):
    assert main(['fit', '--data', str(tmp_path / "absent.csv"), '--output-dir', str(tmp_path)]
                + QUICK_FIT) == EXIT_FAILURE


def test_fit_from_config_file(simulated_dir, tmp_path):
    config = tmp_path / "fit.conf"
    config.write_text(
        "# quick fit\n"
        f"data = {simulated_dir / 'dataset.csv'}\n"
        "chains = 1\n"
        "warmup = 10\n"
        "samples = 10\n"
        "max-tree-depth = 4\n"
        "no_random_slopes = yes\n"
        "quiet = true\n"
    )
    out_dir = tmp_path / "out"
    assert main(['fit', '--config', str(config), '--output-dir', str(out_dir)]) == EXIT_OK
    posterior = pd.read_csv(out_dir / "posterior.csv")
    assert len(posterior) == 10
    assert 'sigma_v' not in posterior.columns
    manifest = load_manifest(out_dir / "manifest-fit.json")
    assert manifest['config']['chains'] == 1


def test_config_file_unknown_key(tmp_path):
    config = tmp_path / "fit.conf"
    config.write_text("data = x.csv\nbogus = 1\n")
    assert main(['fit', '--config', str(config)]) == EXIT_USAGE


def test_config_file_bad_choice(tmp_path):
    config = tmp_path / "fit.conf"
    config.write_text("data = x.csv\nparameterization = whitened\n")
    assert main(['fit', '--config', str(config)]) == EXIT_USAGE


def test_reciprocity_default_grid(fit_dir, tmp_path):
    assert main(['reciprocity', '--posterior', str(fit_dir / "posterior.csv"), '--output-dir', str(tmp_path),
                 '--quiet']) == EXIT_OK
    curve = pd.read_csv(tmp_path / "reciprocity_curve.csv")
    assert len(curve) == 101
    for column in ('rho_mean', 'rho_median', 'rho_q05', 'rho_q95'):
        assert curve[column].between(0.0, 1.0, inclusive='left').all()
    partition = pd.read_csv(tmp_path / "variance_partition.csv")
    assert len(partition) == 101
    general = json.loads((tmp_path / "generalized_reciprocity.json").read_text())
    assert -1.0 < general['generalized_reciprocity']['mean'] < 1.0
    manifest = load_manifest(tmp_path / "manifest-reciprocity.json")
    assert manifest['outputs'] == ["reciprocity_curve.csv", "variance_partition.csv",
                                   "generalized_reciprocity.json"]


def test_reciprocity_single_point(fit_dir, tmp_path):
    assert main(['reciprocity', '--posterior', str(fit_dir / "posterior.csv"), '--grid', '0',
                 '--output-dir', str(tmp_path), '--quiet']) == EXIT_OK
    curve = pd.read_csv(tmp_path / "reciprocity_curve.csv")
    assert len(curve) == 1
    assert curve.loc[0, 'x'] == 0.0


def test_reciprocity_missing_posterior(tmp_path):
    assert main(['reciprocity', '--posterior', str(tmp_path / "absent.csv")]) == EXIT_FAILURE


def test_reciprocity_missing_columns(tmp_path):
    (tmp_path / "posterior.csv").write_text("chain,iteration,alpha,sigma_u\n0,0,0.1,1.0\n0,1,0.2,1.1\n")
    assert main(['reciprocity', '--posterior', str(tmp_path / "posterior.csv"), '--grid', '0',
                 '--quiet']) == EXIT_FAILURE


def test_summarize(simulated_dir, tmp_path, capsys):
    assert main(['summarize', '--data', str(simulated_dir / "dataset.csv"), '--output-dir', str(tmp_path),
                 '--quiet']) == EXIT_OK
    assert "n_dyads: 15" in capsys.readouterr().out
    summary = json.loads((tmp_path / "dataset_summary.json").read_text())
    assert summary['n_nodes'] == 6
    assert summary['both_directions_fraction'] == 1.0
