"""
Posterior sampling for the binomial SRM.

A multinomial No-U-Turn sampler (generalised momentum-sum U-turn criterion)
with a diagonal mass matrix. During warmup the step size follows Nesterov dual
averaging and the mass matrix is re-estimated at the end of doubling slow
windows; both are frozen once warmup ends. Chains run independently, each on
its own PCG64 stream seeded from (seed, chain index).
"""

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, NamedTuple, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy.special import logit
from tqdm import tqdm

from . import __version__
from .diagnostics import effective_sample_size, posterior_summary, split_rhat
from .dyad_data import NetworkDataset, summarize
from .errors import InitializationError, InsufficientDrawsError
from .model import CenteredPosterior, ModelConfig, NonCenteredPosterior, ParameterLayout

logger = logging.getLogger(__name__)

PARAMETERIZATIONS = ('noncentered', 'centered')
INIT_RETRIES = 100
INIT_JITTER = 0.1
ALPHA_INIT_BOUND = 4.0
SD_INIT = 0.5
RHAT_THRESHOLD = 1.05
DIVERGENCE_WARN_RATE = 0.01

LogDensity = Callable[[np.ndarray], Tuple[float, np.ndarray]]


@dataclass(frozen=True)
class SamplerConfig:
    chains: int = 4
    warmup_iterations: int = 1000
    sampling_iterations: int = 1000
    seed: int = 0
    target_accept: float = 0.8
    max_tree_depth: int = 10
    divergence_threshold: float = 1000.0
    adapt_mass_matrix: bool = True
    init_buffer: int = 75
    term_buffer: int = 50
    base_window: int = 25
    latent_thin: int = 10
    parameterization: str = 'noncentered'
    threads: int = 1
    progress: bool = True

    def __post_init__(self):
        if self.chains < 1:
            raise ValueError(f"chains must be >= 1, got {self.chains}")
        if self.sampling_iterations < 1:
            raise ValueError(f"sampling_iterations must be >= 1, got {self.sampling_iterations}")
        if self.warmup_iterations < 0:
            raise ValueError(f"warmup_iterations must be >= 0, got {self.warmup_iterations}")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError(f"target_accept must be in (0, 1), got {self.target_accept}")
        if self.max_tree_depth < 1:
            raise ValueError(f"max_tree_depth must be >= 1, got {self.max_tree_depth}")
        if self.latent_thin < 0:
            raise ValueError(f"latent_thin must be >= 0, got {self.latent_thin}")
        if self.parameterization not in PARAMETERIZATIONS:
            raise ValueError(f"parameterization must be one of {PARAMETERIZATIONS}, got {self.parameterization!r}")
        if self.threads < 1:
            raise ValueError(f"threads must be >= 1, got {self.threads}")

    def to_dict(self) -> Dict[str, object]:
        data = asdict(self)
        data.pop('progress')
        data.pop('threads')
        return data


@dataclass
class ChainDiagnostics:
    rhat: Dict[str, float]
    ess: Dict[str, float]
    divergences: List[int]
    warmup_divergences: List[int]
    max_tree_depth_hits: List[int]
    mean_accept_stat: List[float]
    step_size: List[float]
    mean_leapfrog_steps: List[float]
    sampling_iterations: int

    @property
    def divergence_rate(self) -> float:
        total = self.sampling_iterations * len(self.divergences)
        return sum(self.divergences) / total if total else 0.0

    def converged(self, threshold: float = RHAT_THRESHOLD) -> bool:
        """True when every R-hat is finite and below ``threshold``."""
        return all(math.isfinite(value) and value < threshold for value in self.rhat.values())

    def to_dict(self) -> Dict[str, object]:
        data = asdict(self)
        data['divergence_rate'] = self.divergence_rate
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, object]) -> 'ChainDiagnostics':
        fields = {key: value for key, value in data.items() if key != 'divergence_rate'}
        return cls(**fields)


@dataclass(eq=False)
class PosteriorSamples:
    """
    Retained draws on the constrained scale.

    ``draws`` is (chains, iterations, parameters); latent draws, when kept,
    are (chains, thinned iterations, latents).
    """
    draws: np.ndarray
    parameter_names: List[str]
    dataset_fingerprint: str = ''
    config: Dict[str, object] = field(default_factory=dict)
    covariate: Dict[str, object] = field(default_factory=dict)
    latent_draws: Optional[np.ndarray] = None
    latent_names: List[str] = field(default_factory=list)

    def __post_init__(self):
        self.draws = np.asarray(self.draws, dtype=float)
        if self.draws.ndim != 3 or self.draws.shape[2] != len(self.parameter_names):
            raise ValueError(f"draws must be (chains, iterations, {len(self.parameter_names)}), "
                             f"got {self.draws.shape}")
        if not np.all(np.isfinite(self.draws)):
            raise ValueError("posterior draws contain NaN or Inf")
        for k, name in enumerate(self.parameter_names):
            column = self.draws[:, :, k]
            if name.startswith('sigma_') and np.any(column <= 0.0):
                raise ValueError(f"{name} has non-positive draws")
            if name.startswith('rho_') and np.any(np.abs(column) >= 1.0):
                raise ValueError(f"{name} has draws outside (-1, 1)")

    @property
    def n_chains(self) -> int:
        return self.draws.shape[0]

    @property
    def n_iterations(self) -> int:
        return self.draws.shape[1]

    def has(self, name: str) -> bool:
        return name in self.parameter_names

    def column(self, name: str) -> np.ndarray:
        """(chains, iterations) draws of one parameter."""
        return self.draws[:, :, self.parameter_names.index(name)]

    def pooled(self, name: str) -> np.ndarray:
        return self.column(name).ravel()

    def population_frame(self) -> pd.DataFrame:
        chains, iterations, _ = self.draws.shape
        frame = pd.DataFrame(self.draws.reshape(chains * iterations, -1), columns=self.parameter_names)
        frame.insert(0, 'iteration', np.tile(np.arange(iterations), chains))
        frame.insert(0, 'chain', np.repeat(np.arange(chains), iterations))
        return frame

    def summary(self) -> pd.DataFrame:
        return posterior_summary(self.draws, self.parameter_names)


# ----------------------------------------------------------------------
# initialisation
# ----------------------------------------------------------------------

def base_point(dataset: NetworkDataset, model_config: ModelConfig) -> np.ndarray:
    """Un-jittered starting point on the unconstrained scale."""
    layout = ParameterLayout.for_dataset(dataset, model_config)
    theta = np.zeros(layout.size)
    pooled = float(np.sum(dataset.successes) / np.sum(dataset.trials))
    with np.errstate(divide='ignore'):
        theta[layout.index['alpha']] = float(np.clip(logit(pooled), -ALPHA_INIT_BOUND, ALPHA_INIT_BOUND))
    for name, i in layout.index.items():
        if name.startswith('sigma_'):
            theta[i] = math.log(SD_INIT)
    return theta


def initialize(dataset: NetworkDataset, model_config: ModelConfig, rng: np.random.Generator) -> np.ndarray:
    """
    Starting point for one chain.

    alpha is the pooled empirical logit clamped to [-4, 4], beta and all latents
    are 0, sds 0.5 and correlations 0; every coordinate is then jittered by
    Uniform(-0.1, 0.1) on the unconstrained scale.
    """
    theta = base_point(dataset, model_config)
    return theta + rng.uniform(-INIT_JITTER, INIT_JITTER, size=theta.size)


def _finite_start(posterior: LogDensity, dataset: NetworkDataset, model_config: ModelConfig,
                  rng: np.random.Generator):
    for attempt in range(INIT_RETRIES + 1):
        theta = initialize(dataset, model_config, rng)
        logp, grad = posterior(theta)
        if math.isfinite(logp) and np.all(np.isfinite(grad)):
            if attempt:
                logger.debug(f"Finite starting point after {attempt} retries")
            return theta, logp, grad
    raise InitializationError(f"non-finite log-posterior at initialization after {INIT_RETRIES} retry jitters")


# ----------------------------------------------------------------------
# Hamiltonian machinery
# ----------------------------------------------------------------------

class _Point(NamedTuple):
    q: np.ndarray
    p: np.ndarray
    grad: np.ndarray
    logp: float


@dataclass
class _Subtree:
    near: _Point
    far: _Point
    proposal: _Point
    log_weight: float
    rho: np.ndarray
    turning: bool
    diverging: bool
    n_leapfrog: int
    sum_accept: float


class _Hamiltonian:
    def __init__(self, posterior: LogDensity, inv_mass: np.ndarray, threshold: float):
        self.posterior = posterior
        self.inv_mass = inv_mass
        self.threshold = threshold

    def kinetic(self, p: np.ndarray) -> float:
        return 0.5 * float(np.dot(p, self.inv_mass * p))

    def energy(self, point: _Point) -> float:
        return -point.logp + self.kinetic(point.p)

    def leapfrog(self, point: _Point, step: float) -> _Point:
        p_half = point.p + 0.5 * step * point.grad
        q = point.q + step * self.inv_mass * p_half
        try:
            logp, grad = self.posterior(q)
        except (ValueError, OverflowError, ZeroDivisionError, FloatingPointError) as e:
            logger.debug(f"log density failed during leapfrog: {e}")
            return _Point(q, p_half, np.zeros_like(q), -math.inf)
        if not math.isfinite(logp):
            return _Point(q, p_half, np.zeros_like(q), -math.inf)
        return _Point(q, p_half + 0.5 * step * grad, grad, logp)

    def sample_momentum(self, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal(self.inv_mass.size) / np.sqrt(self.inv_mass)

    def is_turning(self, p_start: np.ndarray, p_end: np.ndarray, rho: np.ndarray) -> bool:
        return (float(np.dot(self.inv_mass * p_start, rho)) <= 0.0
                or float(np.dot(self.inv_mass * p_end, rho)) <= 0.0)


def _build_tree(ham: _Hamiltonian, start: _Point, step: float, depth: int, energy0: float,
                rng: np.random.Generator) -> _Subtree:
    """Subtree of 2**depth leapfrog steps from ``start`` in the direction of ``step``."""
    if depth == 0:
        point = ham.leapfrog(start, step)
        energy = ham.energy(point) if math.isfinite(point.logp) else math.inf
        if not math.isfinite(energy):
            energy = math.inf
        delta = energy - energy0
        diverging = delta > ham.threshold
        accept = 0.0 if not math.isfinite(delta) else min(1.0, math.exp(-delta))
        return _Subtree(point, point, point, -delta, point.p.copy(), False, diverging, 1, accept)

    first = _build_tree(ham, start, step, depth - 1, energy0, rng)
    if first.diverging or first.turning:
        return first
    second = _build_tree(ham, first.far, step, depth - 1, energy0, rng)
    n_leapfrog = first.n_leapfrog + second.n_leapfrog
    sum_accept = first.sum_accept + second.sum_accept
    if second.diverging or second.turning:
        return _Subtree(first.near, second.far, first.proposal, first.log_weight, first.rho,
                        second.turning, second.diverging, n_leapfrog, sum_accept)

    log_weight = float(np.logaddexp(first.log_weight, second.log_weight))
    proposal = second.proposal if math.log(rng.random()) < second.log_weight - log_weight else first.proposal
    rho = first.rho + second.rho
    turning = (ham.is_turning(first.near.p, second.far.p, rho)
               or ham.is_turning(first.near.p, second.near.p, first.rho + second.near.p)
               or ham.is_turning(first.far.p, second.far.p, first.far.p + second.rho))
    return _Subtree(first.near, second.far, proposal, log_weight, rho, turning, False, n_leapfrog, sum_accept)


class _Transition(NamedTuple):
    point: _Point
    accept_stat: float
    n_leapfrog: int
    depth: int
    divergent: bool


def _nuts_transition(ham: _Hamiltonian, current: _Point, step: float, max_depth: int,
                     rng: np.random.Generator) -> _Transition:
    start = current._replace(p=ham.sample_momentum(rng))
    energy0 = ham.energy(start)
    minus = plus = start
    proposal = start
    log_weight = 0.0
    rho = start.p.copy()
    n_leapfrog, sum_accept, depth, divergent = 0, 0.0, 0, False

    while depth < max_depth:
        forward = rng.random() < 0.5
        edge, other = (plus, minus) if forward else (minus, plus)
        sub = _build_tree(ham, edge, step if forward else -step, depth, energy0, rng)
        n_leapfrog += sub.n_leapfrog
        sum_accept += sub.sum_accept
        depth += 1
        if sub.diverging:
            divergent = True
            break
        if sub.turning:
            break

        # biased progressive sampling favours the new subtree
        if math.log(rng.random()) < sub.log_weight - log_weight:
            proposal = sub.proposal
        log_weight = float(np.logaddexp(log_weight, sub.log_weight))

        rho_total = rho + sub.rho
        turning = (ham.is_turning(other.p, sub.far.p, rho_total)
                   or ham.is_turning(other.p, sub.near.p, rho + sub.near.p)
                   or ham.is_turning(edge.p, sub.far.p, edge.p + sub.rho))
        if forward:
            plus = sub.far
        else:
            minus = sub.far
        rho = rho_total
        if turning:
            break

    accept_stat = sum_accept / n_leapfrog if n_leapfrog else 0.0
    return _Transition(proposal, accept_stat, n_leapfrog, depth, divergent)


def _find_reasonable_step_size(ham: _Hamiltonian, point: _Point, step: float,
                               rng: np.random.Generator) -> float:
    """Double or halve the step until one leapfrog step crosses acceptance 0.8."""
    target = math.log(0.8)

    def log_accept(eps: float) -> float:
        start = point._replace(p=ham.sample_momentum(rng))
        new = ham.leapfrog(start, eps)
        if not math.isfinite(new.logp):
            return -math.inf
        return ham.energy(start) - ham.energy(new)

    direction = 1 if log_accept(step) > target else -1
    for _ in range(100):
        value = log_accept(step)
        if direction == 1 and not value > target:
            break
        if direction == -1 and not value < target:
            break
        step = step * 2.0 if direction == 1 else step / 2.0
        if step > 1e7 or step < 1e-10:
            break
    return float(np.clip(step, 1e-10, 1e7))


class _DualAveraging:
    def __init__(self, target: float, gamma: float = 0.05, t0: float = 10.0, kappa: float = 0.75):
        self.target = target
        self.gamma = gamma
        self.t0 = t0
        self.kappa = kappa
        self.restart(1.0)

    def restart(self, step: float) -> None:
        self.mu = math.log(10.0 * step)
        self.counter = 0
        self.h_bar = 0.0
        self.log_step_bar = 0.0

    def update(self, accept_stat: float) -> float:
        self.counter += 1
        eta = 1.0 / (self.counter + self.t0)
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.target - accept_stat)
        log_step = self.mu - math.sqrt(self.counter) / self.gamma * self.h_bar
        weight = self.counter ** (-self.kappa)
        self.log_step_bar = weight * log_step + (1.0 - weight) * self.log_step_bar
        return math.exp(log_step)

    @property
    def final_step(self) -> float:
        return math.exp(self.log_step_bar)


class _Welford:
    def __init__(self, dimension: int):
        self.dimension = dimension
        self.reset()

    def reset(self) -> None:
        self.count = 0
        self.mean = np.zeros(self.dimension)
        self.m2 = np.zeros(self.dimension)

    def add(self, value: np.ndarray) -> None:
        self.count += 1
        delta = value - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (value - self.mean)

    def regularized_variance(self) -> np.ndarray:
        variance = self.m2 / (self.count - 1.0)
        weight = self.count / (self.count + 5.0)
        return weight * variance + 1e-3 * (1.0 - weight)


def adaptation_windows(warmup: int, init_buffer: int = 75, term_buffer: int = 50,
                       base_window: int = 25) -> Tuple[int, List[int]]:
    """
    Mass-matrix window schedule.

    Returns the first iteration of slow adaptation and the (exclusive) end of
    every slow window. Short warmups use 15% / 75% / 10% proportions.
    """
    if warmup < 20:
        return warmup, []
    if init_buffer + term_buffer + base_window > warmup:
        init_buffer = int(0.15 * warmup)
        term_buffer = int(0.1 * warmup)
        base_window = warmup - init_buffer - term_buffer
    slow_end = warmup - term_buffer
    ends: List[int] = []
    start, size = init_buffer, base_window
    while start < slow_end:
        end = start + size
        if end + 2 * size > slow_end:
            end = slow_end
        ends.append(end)
        start, size = end, 2 * size
    return init_buffer, ends


@dataclass
class _ChainResult:
    population: np.ndarray
    latents: Optional[np.ndarray]
    log_density: np.ndarray
    divergences: int
    warmup_divergences: int
    max_depth_hits: int
    mean_accept_stat: float
    step_size: float
    mean_leapfrog_steps: float


def _run_chain(posterior: CenteredPosterior, dataset: NetworkDataset, model_config: ModelConfig,
               config: SamplerConfig, chain: int) -> _ChainResult:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(config.seed), chain])))
    layout = posterior.layout
    theta, logp, grad = _finite_start(posterior, dataset, model_config, rng)
    ham = _Hamiltonian(posterior, np.ones(layout.size), config.divergence_threshold)
    point = _Point(theta, np.zeros(layout.size), grad, logp)

    step = _find_reasonable_step_size(ham, point, 0.1, rng)
    dual = _DualAveraging(config.target_accept)
    dual.restart(step)
    slow_start, window_ends = (adaptation_windows(config.warmup_iterations, config.init_buffer,
                                                  config.term_buffer, config.base_window)
                               if config.adapt_mass_matrix else (config.warmup_iterations, []))
    slow_end = window_ends[-1] if window_ends else slow_start
    welford = _Welford(layout.size)

    keep_latents = config.latent_thin > 0
    n_samples = config.sampling_iterations
    population = np.empty((n_samples, layout.n_population))
    log_density = np.empty(n_samples)
    latent_rows: List[np.ndarray] = []
    divergences = warmup_divergences = depth_hits = 0
    accept_total = leapfrog_total = 0.0

    total = config.warmup_iterations + n_samples
    with tqdm(total=total, desc=f"Chain {chain}", unit="iter", position=chain, leave=False,
              disable=not config.progress) as pbar:
        for iteration in range(total):
            warming = iteration < config.warmup_iterations
            transition = _nuts_transition(ham, point, step, config.max_tree_depth, rng)
            point = transition.point

            if warming:
                warmup_divergences += transition.divergent
                step = dual.update(transition.accept_stat)
                if slow_start <= iteration < slow_end:
                    welford.add(point.q)
                if iteration + 1 in window_ends:
                    ham.inv_mass = welford.regularized_variance()
                    welford.reset()
                    step = _find_reasonable_step_size(ham, point, step, rng)
                    dual.restart(step)
                if iteration + 1 == config.warmup_iterations:
                    step = dual.final_step
            else:
                k = iteration - config.warmup_iterations
                population[k] = layout.constrain(point.q)
                log_density[k] = point.logp
                divergences += transition.divergent
                depth_hits += transition.depth >= config.max_tree_depth
                accept_total += transition.accept_stat
                leapfrog_total += transition.n_leapfrog
                if keep_latents and k % config.latent_thin == 0:
                    latent_rows.append(posterior.latent_block(point.q))

            pbar.update(1)
            if iteration % 10 == 0 or iteration + 1 == total:
                pbar.set_postfix({"phase": "warmup" if warming else "sampling", "step": f"{step:.3g}",
                                  "div": divergences + warmup_divergences})

    return _ChainResult(
        population=population,
        latents=np.asarray(latent_rows) if keep_latents else None,
        log_density=log_density,
        divergences=divergences,
        warmup_divergences=warmup_divergences,
        max_depth_hits=depth_hits,
        mean_accept_stat=accept_total / n_samples,
        step_size=step,
        mean_leapfrog_steps=leapfrog_total / n_samples,
    )


# ----------------------------------------------------------------------
# fitting
# ----------------------------------------------------------------------

def identifiability_warnings(dataset: NetworkDataset, model_config: ModelConfig) -> List[str]:
    """Design problems that leave variance components weakly identified."""
    messages = []
    both = dataset.both_directions_mask()
    reciprocal_nodes = set()
    for dyad, observed in zip(dataset.dyads, both):
        if observed:
            reciprocal_nodes.update((dyad.lo.index, dyad.hi.index))
    if len(reciprocal_nodes) < 2:
        messages.append("fewer than 2 nodes take part in a dyad observed in both directions; "
                        "sender/receiver variances are not identified")
    if not np.any(both) and model_config.overdispersion_enabled:
        messages.append("no dyad is observed in both directions; sigma_u and sigma_d are confounded")
    return messages


def _make_posterior(dataset: NetworkDataset, model_config: ModelConfig,
                    parameterization: str) -> CenteredPosterior:
    if parameterization == 'centered':
        return CenteredPosterior(dataset, model_config)
    return NonCenteredPosterior(dataset, model_config)


def _rhat_or_nan(draws: np.ndarray) -> float:
    try:
        return split_rhat(draws)
    except InsufficientDrawsError:
        return float('nan')


def _ess_or_nan(draws: np.ndarray) -> float:
    try:
        return effective_sample_size(draws)
    except InsufficientDrawsError:
        return float('nan')


def fit(dataset: NetworkDataset, model_config: Optional[ModelConfig] = None,
        sampler_config: Optional[SamplerConfig] = None) -> Tuple[PosteriorSamples, ChainDiagnostics]:
    """
    Sample the posterior of every model unknown.

    Args:
        dataset: validated dataset
        model_config: model switches and priors
        sampler_config: chains, iterations, seed and adaptation settings

    Returns:
        (PosteriorSamples, ChainDiagnostics); deterministic for a given seed
        and chain count

    Raises:
        InitializationError: if no finite starting point is found
    """
    model_config = model_config or ModelConfig()
    config = sampler_config or SamplerConfig()
    for message in identifiability_warnings(dataset, model_config):
        logger.warning(message)

    posterior = _make_posterior(dataset, model_config, config.parameterization)
    layout = posterior.layout
    logger.info(f"Sampling {config.chains} chain(s) x ({config.warmup_iterations} warmup + "
                f"{config.sampling_iterations} draws) over {layout.size} unconstrained parameters "
                f"({config.parameterization})")

    workers = min(config.threads, config.chains)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_run_chain, posterior, dataset, model_config, config, chain)
                   for chain in range(config.chains)]
        results = [future.result() for future in futures]

    draws = np.stack([result.population for result in results])
    latent_draws = None
    if config.latent_thin > 0:
        latent_draws = np.stack([result.latents for result in results])

    names = layout.population_names
    diagnostics = ChainDiagnostics(
        rhat={name: _rhat_or_nan(draws[:, :, k]) for k, name in enumerate(names)},
        ess={name: _ess_or_nan(draws[:, :, k]) for k, name in enumerate(names)},
        divergences=[result.divergences for result in results],
        warmup_divergences=[result.warmup_divergences for result in results],
        max_tree_depth_hits=[result.max_depth_hits for result in results],
        mean_accept_stat=[result.mean_accept_stat for result in results],
        step_size=[result.step_size for result in results],
        mean_leapfrog_steps=[result.mean_leapfrog_steps for result in results],
        sampling_iterations=config.sampling_iterations,
    )
    if diagnostics.divergence_rate > DIVERGENCE_WARN_RATE:
        logger.warning(f"{sum(diagnostics.divergences)} divergent transitions after warmup "
                       f"({diagnostics.divergence_rate:.1%}); posterior estimates may be biased")
    if not diagnostics.converged():
        worst = max(diagnostics.rhat.items(), key=lambda item: item[1] if math.isfinite(item[1]) else math.inf)
        logger.warning(f"Chains have not converged: R-hat({worst[0]}) = {worst[1]:.3f}")

    summary = summarize(dataset)
    samples = PosteriorSamples(
        draws=draws,
        parameter_names=list(names),
        dataset_fingerprint=dataset.fingerprint(),
        config={'model': model_config.to_dict(), 'sampler': config.to_dict()},
        covariate={'min': summary.covariate_min, 'max': summary.covariate_max,
                   'mean': summary.covariate_mean, 'transform': dataset.covariate_transform.to_dict()},
        latent_draws=latent_draws,
        latent_names=layout.latent_names(dataset) if latent_draws is not None else [],
    )
    return samples, diagnostics


# ----------------------------------------------------------------------
# persistence
# ----------------------------------------------------------------------

def write_posterior(samples: PosteriorSamples, diagnostics: ChainDiagnostics, output_dir: Union[str, Path],
                    warnings: Optional[List[str]] = None) -> List[Path]:
    """
    Write posterior.csv, diagnostics.json and (if kept) latents.csv.

    Returns:
        Paths of the written files
    """
    out_dir = Path(output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    posterior_path = out_dir / "posterior.csv"
    samples.population_frame().to_csv(posterior_path, index=False)
    written.append(posterior_path)

    metadata = {
        'tool_version': __version__,
        'dataset_fingerprint': samples.dataset_fingerprint,
        'parameters': samples.parameter_names,
        'seed': samples.config.get('sampler', {}).get('seed'),
        'config': samples.config,
        'covariate': samples.covariate,
        'diagnostics': diagnostics.to_dict(),
        'warnings': list(warnings or []),
    }
    metadata_path = out_dir / "diagnostics.json"
    with open(metadata_path, 'w', encoding='utf-8') as f:
        json.dump(metadata, f, indent=2, ensure_ascii=False)
    written.append(metadata_path)

    if samples.latent_draws is not None:
        chains, kept, _ = samples.latent_draws.shape
        frame = pd.DataFrame(samples.latent_draws.reshape(chains * kept, -1), columns=samples.latent_names)
        frame.insert(0, 'draw', np.tile(np.arange(kept), chains))
        frame.insert(0, 'chain', np.repeat(np.arange(chains), kept))
        latents_path = out_dir / "latents.csv"
        frame.to_csv(latents_path, index=False)
        written.append(latents_path)
    return written


def read_posterior(csv_path: Union[str, Path], metadata_path: Optional[Union[str, Path]] = None) -> PosteriorSamples:
    """
    Load population draws written by :func:`write_posterior`.

    The metadata JSON defaults to ``diagnostics.json`` next to the CSV and is
    optional.
    """
    csv_path = Path(csv_path)
    if not csv_path.exists():
        raise FileNotFoundError(f"Posterior file not found: {csv_path}")
    frame = pd.read_csv(csv_path, float_precision='round_trip')
    for column in ('chain', 'iteration'):
        if column not in frame.columns:
            raise ValueError(f"{csv_path} is missing the {column!r} column")

    metadata: Dict[str, object] = {}
    metadata_path = Path(metadata_path) if metadata_path else csv_path.with_name("diagnostics.json")
    if metadata_path.exists():
        with open(metadata_path, 'r', encoding='utf-8') as f:
            metadata = json.load(f)
    else:
        logger.info(f"No metadata found at {metadata_path}; covariate range unknown")

    frame = frame.sort_values(['chain', 'iteration'], kind='mergesort')
    names = [column for column in frame.columns if column not in ('chain', 'iteration')]
    chain_ids = frame['chain'].unique()
    counts = frame.groupby('chain').size()
    if counts.nunique() != 1:
        raise ValueError(f"{csv_path}: chains have unequal numbers of draws")
    draws = frame[names].to_numpy(dtype=float).reshape(len(chain_ids), int(counts.iloc[0]), len(names))
    return PosteriorSamples(
        draws=draws,
        parameter_names=names,
        dataset_fingerprint=str(metadata.get('dataset_fingerprint', '')),
        config=dict(metadata.get('config', {})),
        covariate=dict(metadata.get('covariate', {})),
    )
