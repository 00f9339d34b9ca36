"""
Command-line interface: simulate, fit, reciprocity and summarize.

Each subcommand writes its outputs plus a ``manifest-<command>.json`` into an
output directory. Flags can also come from a ``key = value`` file given with
``--config``; flags on the command line win.
"""

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .dyad_data import (COVARIATE_TRANSFORMS, IngestConfig, NetworkDataset, load_csv, load_ingest_config,
                        summarize, write_csv)
from .errors import (DataValidationError, DiagnosticsFailedError, InvalidSpecError,
                     MissingColumnsError, SRMError)
from .manifest import RunManifest
from .model import FixedEffects, ModelConfig, VarianceComponents
from .reciprocity import (DEFAULT_GRID_POINTS, GridSpec, generalized_reciprocity_summary, reciprocity_curve,
                          variance_partition_curve, write_curve_csv, write_generalized_json,
                          write_partition_csv)
from .sampler import (PARAMETERIZATIONS, RHAT_THRESHOLD, SamplerConfig, fit, identifiability_warnings,
                      read_posterior, write_posterior)
from .settings import configure_logging, default_threads, normalize_key, parse_bool, read_key_value_file
from .simulator import CovariateGenerator, SimulationSpec, simulate, write_truth_json

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_DIAGNOSTICS = 3
EXIT_DATA = 4

# simulation defaults
DEFAULT_TRIALS = 10
DEFAULT_ALPHA = -1.0
DEFAULT_BETA = 0.5
DEFAULT_SIGMA_A = 1.0
DEFAULT_SIGMA_B = 1.0
DEFAULT_RHO_AB = 0.3
DEFAULT_SIGMA_U = 1.0
DEFAULT_SIGMA_V = 0.5
DEFAULT_RHO_UV = 0.3
DEFAULT_SIGMA_D = 0.5
DEFAULT_COVARIATE = 'uniform'
DEFAULT_SIM_DIR = "simulated"

# sampler defaults
DEFAULT_CHAINS = 4
DEFAULT_WARMUP = 1000
DEFAULT_SAMPLES = 1000
DEFAULT_FIT_DIR = "fit-output"


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--config', help='key = value file mirroring any flag of this command')
    parser.add_argument('--verbose', '-v', action='store_true', help='Enable debug logging')
    parser.add_argument('--quiet', '-q', action='store_true', help='Only warnings and errors; no progress bars')
    parser.add_argument('--log-file', help='Also write the log to this file')


def _add_ingest(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--data', '-d', required=True, help='Directed observations CSV')
    parser.add_argument('--ingest-config', help='key = value file remapping column names')
    parser.add_argument('--covariate-transform', choices=COVARIATE_TRANSFORMS,
                        help='Rescale the covariate before modelling (default: none)')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='srm-reciprocity',
        description='Binomial Social Relations Model with covariate-dependent dyadic reciprocity',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog='''Examples:
  # Simulate a complete 20-node network
  %(prog)s simulate --nodes 20 --trials 10 --seed 7 --output-dir sim

  # Fit it with 4 chains on 4 threads
  %(prog)s fit --data sim/dataset.csv --seed 1 --threads 4 --output-dir fit

  # Reciprocity curve over the observed covariate range
  %(prog)s reciprocity --posterior fit/posterior.csv

  # Single-point evaluation at x = 0
  %(prog)s reciprocity --posterior fit/posterior.csv --grid 0

  # Flags from a file
  %(prog)s fit --config fit.conf
        '''
    )
    commands = parser.add_subparsers(dest='command', metavar='command')
    commands.required = True

    sim = commands.add_parser('simulate', help='Draw a synthetic dataset with known truth',
                              formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    sim.add_argument('--nodes', '-n', type=int, required=True, help='Number of nodes')
    sim.add_argument('--trials', type=int, default=DEFAULT_TRIALS, help='Trials per directed cell')
    sim.add_argument('--seed', type=int, default=0, help='Random seed')
    sim.add_argument('--alpha', type=float, default=DEFAULT_ALPHA)
    sim.add_argument('--beta', type=float, default=DEFAULT_BETA)
    sim.add_argument('--sigma-a', type=float, default=DEFAULT_SIGMA_A)
    sim.add_argument('--sigma-b', type=float, default=DEFAULT_SIGMA_B)
    sim.add_argument('--rho-ab', type=float, default=DEFAULT_RHO_AB)
    sim.add_argument('--sigma-u', type=float, default=DEFAULT_SIGMA_U)
    sim.add_argument('--sigma-v', type=float, default=DEFAULT_SIGMA_V)
    sim.add_argument('--rho-uv', type=float, default=DEFAULT_RHO_UV)
    sim.add_argument('--sigma-d', type=float, default=DEFAULT_SIGMA_D)
    sim.add_argument('--covariate', choices=['constant', 'uniform', 'binary'], default=DEFAULT_COVARIATE,
                     help='Dyad covariate generator')
    sim.add_argument('--covariate-value', type=float, default=0.0, help='Value of a constant covariate')
    sim.add_argument('--covariate-low', type=float, default=0.0)
    sim.add_argument('--covariate-high', type=float, default=1.0)
    sim.add_argument('--covariate-p', type=float, default=0.5, help='P(x = 1) for a binary covariate')
    sim.add_argument('--missing-fraction', type=float, default=0.0, help='Share of dyads left unobserved')
    sim.add_argument('--output-dir', '-o', default=DEFAULT_SIM_DIR)
    _add_common(sim)

    fit_parser = commands.add_parser('fit', help='Sample the posterior', formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    _add_ingest(fit_parser)
    fit_parser.add_argument('--chains', type=int, default=DEFAULT_CHAINS)
    fit_parser.add_argument('--warmup', type=int, default=DEFAULT_WARMUP, help='Warmup iterations per chain')
    fit_parser.add_argument('--samples', type=int, default=DEFAULT_SAMPLES, help='Retained iterations per chain')
    fit_parser.add_argument('--seed', type=int, default=0)
    fit_parser.add_argument('--target-accept', type=float, default=0.8)
    fit_parser.add_argument('--max-tree-depth', type=int, default=10)
    fit_parser.add_argument('--parameterization', choices=PARAMETERIZATIONS, default='noncentered')
    fit_parser.add_argument('--latent-thin', type=int, default=10,
                            help='Keep every k-th latent draw (0 drops latents)')
    fit_parser.add_argument('--threads', type=int, default=default_threads(),
                            help='Chains run concurrently (env SRM_THREADS)')
    fit_parser.add_argument('--no-overdispersion', action='store_true', help='Drop the per-cell overdispersion term')
    fit_parser.add_argument('--no-random-slopes', action='store_true',
                            help='Drop the dyad slope (constant dyadic reciprocity)')
    fit_parser.add_argument('--strict', action='store_true',
                            help=f'Exit 3 unless every R-hat < {RHAT_THRESHOLD}')
    fit_parser.add_argument('--output-dir', '-o', default=DEFAULT_FIT_DIR)
    _add_common(fit_parser)

    rec = commands.add_parser('reciprocity', help='Dyadic reciprocity curve from posterior draws',
                              formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    rec.add_argument('--posterior', '-p', required=True, help='posterior.csv written by fit')
    rec.add_argument('--metadata', help='diagnostics.json written by fit (default: next to the posterior)')
    rec.add_argument('--grid', help="Covariate grid: 'lo:hi:n' or comma-separated values (default: observed range)")
    rec.add_argument('--grid-points', type=int, default=DEFAULT_GRID_POINTS,
                     help='Points of the default grid')
    rec.add_argument('--output-dir', '-o', help='Output directory (default: the posterior directory)')
    _add_common(rec)

    summ = commands.add_parser('summarize', help='Describe a dataset')
    _add_ingest(summ)
    summ.add_argument('--output-dir', '-o', help='Also write dataset_summary.json here')
    _add_common(summ)

    parser.subcommands = commands.choices
    return parser


# ----------------------------------------------------------------------
# config files
# ----------------------------------------------------------------------

def _apply_config_file(parser: argparse.ArgumentParser, argv: Sequence[str]) -> None:
    """Turn ``--config`` values into subparser defaults (explicit flags still win)."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument('command', nargs='?')
    pre.add_argument('--config')
    known, _ = pre.parse_known_args(argv)
    if not known.config or known.command not in parser.subcommands:
        return

    sub = parser.subcommands[known.command]
    try:
        values = read_key_value_file(known.config)
    except (OSError, ValueError) as e:
        sub.error(str(e))

    actions = {}
    for action in sub._actions:
        for option in action.option_strings:
            actions[normalize_key(option)] = action
        actions.setdefault(normalize_key(action.dest), action)

    defaults = {}
    for key, raw in values.items():
        action = actions.get(key)
        if action is None or action.dest in ('help', 'config'):
            sub.error(f"unknown key {key!r} in {known.config}")
        try:
            if isinstance(action, argparse._StoreTrueAction):
                value = parse_bool(raw)
            else:
                value = action.type(raw) if action.type else raw
        except ValueError as e:
            sub.error(f"bad value for {key!r} in {known.config}: {e}")
        if action.choices is not None and value not in action.choices:
            sub.error(f"{key!r} must be one of {list(action.choices)}, got {value!r}")
        defaults[action.dest] = value
        action.required = False
    sub.set_defaults(**defaults)
    logger.debug(f"Loaded {len(defaults)} setting(s) from {known.config}")


def _config_echo(args: argparse.Namespace) -> Dict[str, object]:
    return {key: value for key, value in sorted(vars(args).items()) if key not in ('verbose', 'quiet')}


def _ingest_config(args: argparse.Namespace) -> IngestConfig:
    config = load_ingest_config(args.ingest_config) if args.ingest_config else IngestConfig()
    if args.covariate_transform:
        config = dataclasses.replace(config, covariate_transform=args.covariate_transform)
    return config


def _load_dataset(args: argparse.Namespace, manifest: RunManifest) -> NetworkDataset:
    dataset = load_csv(args.data, _ingest_config(args))
    manifest.add_input(args.data)
    if args.ingest_config:
        manifest.add_input(args.ingest_config)
    return dataset


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------

def cmd_simulate(args: argparse.Namespace) -> List[Path]:
    """Write dataset.csv, truth.json and the manifest."""
    try:
        spec = SimulationSpec(
            n_nodes=args.nodes,
            fixed=FixedEffects(alpha=args.alpha, beta=args.beta),
            components=VarianceComponents(sigma_a=args.sigma_a, sigma_b=args.sigma_b, rho_ab=args.rho_ab,
                                          sigma_u=args.sigma_u, sigma_v=args.sigma_v, rho_uv=args.rho_uv,
                                          sigma_d=args.sigma_d),
            trials_per_cell=args.trials,
            covariate=CovariateGenerator(kind=args.covariate, value=args.covariate_value,
                                         low=args.covariate_low, high=args.covariate_high, p=args.covariate_p),
            missing_fraction=args.missing_fraction,
            seed=args.seed,
        )
    except ValueError as e:
        raise InvalidSpecError(str(e)) from e

    manifest = RunManifest(command='simulate', config=_config_echo(args), seeds={'simulation': args.seed})
    dataset, latents = simulate(spec)

    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = [write_csv(dataset, out_dir / "dataset.csv"),
               write_truth_json(out_dir / "truth.json", spec, dataset, latents)]
    manifest.add_outputs(outputs)
    manifest.write(out_dir)

    print(f"\n✓ Simulated {dataset.n_observations} observations over {dataset.n_nodes} nodes")
    print(f"  Dyads: {dataset.n_dyads}")
    print(f"  Output directory: {out_dir}")
    return outputs


def cmd_fit(args: argparse.Namespace) -> List[Path]:
    """
    Write posterior.csv, diagnostics.json, summary.csv, latents.csv and the manifest.

    Raises:
        DiagnosticsFailedError: under ``--strict`` when an R-hat is >= 1.05 or undefined
            (outputs are written first)
    """
    manifest = RunManifest(command='fit', config=_config_echo(args), seeds={'sampler': args.seed})
    dataset = _load_dataset(args, manifest)
    model_config = ModelConfig(overdispersion_enabled=not args.no_overdispersion,
                               random_slopes_enabled=not args.no_random_slopes)
    sampler_config = SamplerConfig(
        chains=args.chains,
        warmup_iterations=args.warmup,
        sampling_iterations=args.samples,
        seed=args.seed,
        target_accept=args.target_accept,
        max_tree_depth=args.max_tree_depth,
        latent_thin=args.latent_thin,
        parameterization=args.parameterization,
        threads=args.threads,
        progress=not args.quiet,
    )

    samples, diagnostics = fit(dataset, model_config, sampler_config)

    out_dir = Path(args.output_dir)
    outputs = write_posterior(samples, diagnostics, out_dir,
                              warnings=identifiability_warnings(dataset, model_config))
    summary = samples.summary()
    summary_path = out_dir / "summary.csv"
    summary.to_csv(summary_path)
    outputs.append(summary_path)
    manifest.add_outputs(outputs)
    manifest.write(out_dir)

    converged = diagnostics.converged()
    print(f"\n{'✓' if converged else '⚠'} Sampling finished: {samples.n_chains} chain(s) x {samples.n_iterations} draws")
    print(summary.to_string(float_format=lambda value: f"{value:.3f}"))
    print(f"  Divergent transitions: {sum(diagnostics.divergences)}")
    print(f"  Output directory: {out_dir}")

    if not converged:
        if args.strict:
            raise DiagnosticsFailedError(f"R-hat check failed (threshold {RHAT_THRESHOLD})")
        logger.warning(f"Some R-hat values are >= {RHAT_THRESHOLD} or undefined; run longer chains")
    return outputs


def _model_config_for(samples, metadata_config: Optional[Dict[str, object]]) -> ModelConfig:
    if metadata_config:
        return ModelConfig.from_dict(metadata_config)
    return ModelConfig(overdispersion_enabled=samples.has('sigma_d'),
                       random_slopes_enabled=samples.has('sigma_v'))


def cmd_reciprocity(args: argparse.Namespace) -> List[Path]:
    """Write reciprocity_curve.csv, variance_partition.csv, generalized_reciprocity.json and the manifest."""
    posterior_path = Path(args.posterior)
    metadata_path = Path(args.metadata) if args.metadata else posterior_path.with_name("diagnostics.json")
    samples = read_posterior(posterior_path, metadata_path)

    manifest = RunManifest(command='reciprocity', config=_config_echo(args))
    manifest.add_input(posterior_path)
    if metadata_path.exists():
        manifest.add_input(metadata_path)

    config = _model_config_for(samples, samples.config.get('model'))
    grid_spec = GridSpec.parse(args.grid) if args.grid else GridSpec(points=args.grid_points)
    curve = reciprocity_curve(samples, grid_spec, config)
    partition = variance_partition_curve(samples, grid_spec, config)
    general = generalized_reciprocity_summary(samples)

    out_dir = Path(args.output_dir) if args.output_dir else posterior_path.parent
    outputs = [write_curve_csv(curve, out_dir / "reciprocity_curve.csv"),
               write_partition_csv(partition, out_dir / "variance_partition.csv"),
               write_generalized_json(general, out_dir / "generalized_reciprocity.json", curve)]
    manifest.add_outputs(outputs)
    manifest.write(out_dir)

    print(f"\n✓ Dyadic reciprocity evaluated at {len(curve)} grid point(s)")
    print(f"  rho(x) range of posterior means: [{np.min(curve.rho_mean):.3f}, {np.max(curve.rho_mean):.3f}]")
    print(f"  Generalized reciprocity rho_ab: mean {general['mean']:.3f}, median {general['median']:.3f}, "
          f"90% interval [{general['q05']:.3f}, {general['q95']:.3f}]")
    print(f"  Output directory: {out_dir}")
    return outputs


def cmd_summarize(args: argparse.Namespace) -> List[Path]:
    """Print the dataset summary; with ``--output-dir`` also write it as JSON."""
    manifest = RunManifest(command='summarize', config=_config_echo(args))
    dataset = _load_dataset(args, manifest)
    summary = summarize(dataset)
    for message in identifiability_warnings(dataset, ModelConfig()):
        logger.warning(message)

    print(f"\nDataset: {args.data}")
    for key, value in summary.to_dict().items():
        print(f"  {key}: {value}")

    outputs: List[Path] = []
    if args.output_dir:
        out_dir = Path(args.output_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / "dataset_summary.json"
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(summary.to_dict(), f, indent=2)
        outputs.append(path)
        manifest.add_outputs(outputs)
        manifest.write(out_dir)
    return outputs


COMMANDS = {
    'simulate': cmd_simulate,
    'fit': cmd_fit,
    'reciprocity': cmd_reciprocity,
    'summarize': cmd_summarize,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand and return its exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE

    configure_logging(verbose=args.verbose, quiet=args.quiet, log_file=args.log_file)

    try:
        COMMANDS[args.command](args)
        return EXIT_OK
    except DiagnosticsFailedError as e:
        logger.error(str(e))
        return EXIT_DIAGNOSTICS
    except DataValidationError as e:
        logger.error(f"Invalid data: {e}")
        return EXIT_DATA
    except InvalidSpecError as e:
        logger.error(f"Invalid specification: {e}")
        return EXIT_USAGE
    except (FileNotFoundError, MissingColumnsError) as e:
        logger.error(str(e))
        return EXIT_FAILURE
    except KeyboardInterrupt:
        logger.info("Interrupted by user")
        return EXIT_FAILURE
    except (SRMError, ValueError, OSError) as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_FAILURE
