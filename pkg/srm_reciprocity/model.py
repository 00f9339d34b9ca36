"""
Binomial Social Relations Model with dyad-level random intercepts and slopes.

    y_ij ~ Binomial(n_ij, p_ij)
    logit(p_ij) = alpha + a_i + b_j + beta * x_ij + u_|ij| + v_|ij| * x_ij + d_ij

(a_i, b_i) and (u_|ij|, v_|ij|) are zero-mean bivariate normal with their own
2x2 covariance matrices, d_ij ~ Normal(0, sigma_d^2). Variance components are
parameterised by (sd, sd, correlation); the sampler works on the unconstrained
scale (log for sds, atanh for correlations).
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np
from scipy.special import expit, gammaln

from .dyad_data import DirectedObservation, NetworkDataset
from .errors import DimensionMismatchError

logger = logging.getLogger(__name__)

# Variance of the standard logistic distribution. Often quoted as 3.29.
LATENT_RESIDUAL_VARIANCE = math.pi ** 2 / 3

LOG_2PI = math.log(2.0 * math.pi)
HALF_LOG_2_OVER_PI = 0.5 * math.log(2.0 / math.pi)
LOG_HALF = math.log(0.5)


@dataclass(frozen=True)
class FixedEffects:
    alpha: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta)):
            raise ValueError(f"fixed effects must be finite, got alpha={self.alpha}, beta={self.beta}")


@dataclass(frozen=True)
class VarianceComponents:
    """
    Sender/receiver and dyad covariance matrices plus overdispersion sd.

    Sds may be zero for simulation truths; the posterior itself only visits
    strictly positive sds.
    """
    sigma_a: float = 1.0
    sigma_b: float = 1.0
    rho_ab: float = 0.0
    sigma_u: float = 1.0
    sigma_v: float = 0.0
    rho_uv: float = 0.0
    sigma_d: float = 0.0

    def __post_init__(self):
        for name in ('sigma_a', 'sigma_b', 'sigma_u', 'sigma_v', 'sigma_d'):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0.0):
                raise ValueError(f"{name} must be a finite non-negative number, got {value}")
        for name in ('rho_ab', 'rho_uv'):
            value = getattr(self, name)
            if not -1.0 < value < 1.0:
                raise ValueError(f"{name} must lie in (-1, 1), got {value}")

    @property
    def sigma_ab(self) -> float:
        return self.rho_ab * self.sigma_a * self.sigma_b

    @property
    def sigma_uv(self) -> float:
        return self.rho_uv * self.sigma_u * self.sigma_v

    def sender_receiver_covariance(self) -> np.ndarray:
        return np.array([[self.sigma_a ** 2, self.sigma_ab],
                         [self.sigma_ab, self.sigma_b ** 2]])

    def dyad_covariance(self) -> np.ndarray:
        return np.array([[self.sigma_u ** 2, self.sigma_uv],
                         [self.sigma_uv, self.sigma_v ** 2]])

    @classmethod
    def from_covariance_matrices(cls, sender_receiver: np.ndarray, dyad: np.ndarray,
                                 sigma_d: float = 0.0) -> 'VarianceComponents':
        """Build from the two 2x2 covariance matrices (correlation 0 when an sd is 0)."""
        def split(matrix):
            matrix = np.asarray(matrix, dtype=float)
            sd1, sd2 = math.sqrt(matrix[0, 0]), math.sqrt(matrix[1, 1])
            rho = matrix[1, 0] / (sd1 * sd2) if sd1 > 0 and sd2 > 0 else 0.0
            return sd1, sd2, rho

        sigma_a, sigma_b, rho_ab = split(sender_receiver)
        sigma_u, sigma_v, rho_uv = split(dyad)
        return cls(sigma_a=sigma_a, sigma_b=sigma_b, rho_ab=rho_ab,
                   sigma_u=sigma_u, sigma_v=sigma_v, rho_uv=rho_uv, sigma_d=sigma_d)

    def validate(self, config: 'ModelConfig') -> None:
        """Check the components are usable by a model with this config."""
        if config.overdispersion_enabled and self.sigma_d <= 0.0:
            raise ValueError("sigma_d must be positive when overdispersion is enabled")
        if not config.random_slopes_enabled and (self.sigma_v != 0.0 or self.rho_uv != 0.0):
            raise ValueError("sigma_v and rho_uv must be 0 when random slopes are disabled")

    def to_dict(self) -> Dict[str, float]:
        return {'sigma_a': self.sigma_a, 'sigma_b': self.sigma_b, 'rho_ab': self.rho_ab,
                'sigma_u': self.sigma_u, 'sigma_v': self.sigma_v, 'rho_uv': self.rho_uv,
                'sigma_d': self.sigma_d}

    @classmethod
    def from_mapping(cls, values: Mapping[str, float]) -> 'VarianceComponents':
        """Missing keys default to 0 (absent model terms)."""
        return cls(**{name: float(values.get(name, 0.0)) for name in
                      ('sigma_a', 'sigma_b', 'rho_ab', 'sigma_u', 'sigma_v', 'rho_uv', 'sigma_d')})


@dataclass(frozen=True, eq=False)
class LatentEffects:
    """Per-node, per-dyad and per-directed-cell random effects."""
    sender: np.ndarray
    receiver: np.ndarray
    dyad_intercept: np.ndarray
    dyad_slope: np.ndarray
    overdispersion: np.ndarray

    @classmethod
    def zeros(cls, dataset: NetworkDataset, config: 'ModelConfig') -> 'LatentEffects':
        n_slopes = dataset.n_dyads if config.random_slopes_enabled else 0
        n_cells = dataset.n_observations if config.overdispersion_enabled else 0
        return cls(sender=np.zeros(dataset.n_nodes), receiver=np.zeros(dataset.n_nodes),
                   dyad_intercept=np.zeros(dataset.n_dyads), dyad_slope=np.zeros(n_slopes),
                   overdispersion=np.zeros(n_cells))

    def check(self, dataset: NetworkDataset, config: 'ModelConfig') -> None:
        expected = {
            'sender': dataset.n_nodes,
            'receiver': dataset.n_nodes,
            'dyad_intercept': dataset.n_dyads,
            'dyad_slope': dataset.n_dyads if config.random_slopes_enabled else 0,
            'overdispersion': dataset.n_observations if config.overdispersion_enabled else 0,
        }
        for name, length in expected.items():
            actual = np.shape(getattr(self, name))
            if actual != (length,):
                raise DimensionMismatchError(f"{name} has shape {actual}, expected ({length},)")


@dataclass(frozen=True)
class PriorConfig:
    """Hyperprior scales: Normal(0, fixed_effect_sd^2) and half-Normal(0, scale_sd^2)."""
    fixed_effect_sd: float = 5.0
    scale_sd: float = 2.0


@dataclass(frozen=True)
class ModelConfig:
    overdispersion_enabled: bool = True
    random_slopes_enabled: bool = True
    prior: PriorConfig = field(default_factory=PriorConfig)
    latent_residual_variance: float = field(default=LATENT_RESIDUAL_VARIANCE, init=False)

    def to_dict(self) -> Dict[str, object]:
        return {
            'overdispersion_enabled': self.overdispersion_enabled,
            'random_slopes_enabled': self.random_slopes_enabled,
            'fixed_effect_prior_sd': self.prior.fixed_effect_sd,
            'scale_prior_sd': self.prior.scale_sd,
            'latent_residual_variance': self.latent_residual_variance,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, object]) -> 'ModelConfig':
        prior = PriorConfig(fixed_effect_sd=float(data.get('fixed_effect_prior_sd', 5.0)),
                            scale_sd=float(data.get('scale_prior_sd', 2.0)))
        return cls(overdispersion_enabled=bool(data.get('overdispersion_enabled', True)),
                   random_slopes_enabled=bool(data.get('random_slopes_enabled', True)),
                   prior=prior)


# ----------------------------------------------------------------------
# point evaluations
# ----------------------------------------------------------------------

def inv_logit(eta):
    """Logistic function; overflow-free for any finite input."""
    return expit(eta)


def linear_predictor(obs: DirectedObservation, fx: FixedEffects, latent: LatentEffects,
                     dataset: NetworkDataset) -> float:
    """Logit of p_ij for one observation of ``dataset``."""
    dyad = dataset.dyad_of(obs.ego, obs.alter).id
    x = float(dataset.covariate_transform.apply(obs.covariate))
    eta = (fx.alpha + latent.sender[obs.ego.index] + latent.receiver[obs.alter.index]
           + fx.beta * x + latent.dyad_intercept[dyad])
    if len(latent.dyad_slope):
        eta += latent.dyad_slope[dyad] * x
    if len(latent.overdispersion):
        eta += latent.overdispersion[_cell_position(dataset, obs)]
    return float(eta)


def _cell_position(dataset: NetworkDataset, obs: DirectedObservation) -> int:
    # observations are sorted by (ego, alter)
    pairs = dataset.ego_index * dataset.n_nodes + dataset.alter_index
    position = int(np.searchsorted(pairs, obs.ego.index * dataset.n_nodes + obs.alter.index))
    if position >= len(pairs) or pairs[position] != obs.ego.index * dataset.n_nodes + obs.alter.index:
        raise DimensionMismatchError(f"observation {obs.ego.label}->{obs.alter.label} not in dataset")
    return position


def linear_predictors(dataset: NetworkDataset, fx: FixedEffects, latent: LatentEffects) -> np.ndarray:
    """Vector of logits, one per observation in canonical order."""
    x = dataset.covariate
    eta = (fx.alpha + latent.sender[dataset.ego_index] + latent.receiver[dataset.alter_index]
           + fx.beta * x + latent.dyad_intercept[dataset.dyad_index])
    if len(latent.dyad_slope):
        eta = eta + latent.dyad_slope[dataset.dyad_index] * x
    if len(latent.overdispersion):
        eta = eta + latent.overdispersion
    return eta


def log_binomial_coefficients(dataset: NetworkDataset) -> np.ndarray:
    n, y = dataset.trials, dataset.successes
    return gammaln(n + 1.0) - gammaln(y + 1.0) - gammaln(n - y + 1.0)


def _binomial_log_mass(y: np.ndarray, n: np.ndarray, eta: np.ndarray) -> np.ndarray:
    # y*log(p) + (n-y)*log(1-p) == y*eta - n*log(1 + e^eta)
    return y * eta - n * np.logaddexp(0.0, eta)


def log_likelihood(dataset: NetworkDataset, fx: FixedEffects, latent: LatentEffects,
                   config: Optional['ModelConfig'] = None) -> float:
    """
    Binomial log-likelihood including the log binomial coefficients.

    Raises:
        DimensionMismatchError: if latent vectors do not match the dataset
    """
    if config is not None:
        latent.check(dataset, config)
    else:
        _check_core_lengths(dataset, latent)
    eta = linear_predictors(dataset, fx, latent)
    terms = log_binomial_coefficients(dataset) + _binomial_log_mass(dataset.successes, dataset.trials, eta)
    return float(np.sum(terms))


def _check_core_lengths(dataset: NetworkDataset, latent: LatentEffects) -> None:
    for name, length in (('sender', dataset.n_nodes), ('receiver', dataset.n_nodes),
                         ('dyad_intercept', dataset.n_dyads)):
        if np.shape(getattr(latent, name)) != (length,):
            raise DimensionMismatchError(f"{name} has shape {np.shape(getattr(latent, name))}, expected ({length},)")
    if len(latent.dyad_slope) not in (0, dataset.n_dyads):
        raise DimensionMismatchError(f"dyad_slope has length {len(latent.dyad_slope)}, expected {dataset.n_dyads}")
    if len(latent.overdispersion) not in (0, dataset.n_observations):
        raise DimensionMismatchError(
            f"overdispersion has length {len(latent.overdispersion)}, expected {dataset.n_observations}")


# ----------------------------------------------------------------------
# densities with gradients
# ----------------------------------------------------------------------

def _normal_terms(x: np.ndarray, sd: float):
    """Sum of N(0, sd^2) log-densities; gradients wrt x and log(sd)."""
    k = x.size
    ss = np.dot(x, x) / (sd * sd)
    value = -k * (0.5 * LOG_2PI + np.log(sd)) - 0.5 * ss
    return value, -x / (sd * sd), -k + ss


def _bivariate_normal_terms(x1: np.ndarray, x2: np.ndarray, sd1: float, sd2: float, rho: float):
    """
    Sum of zero-mean bivariate normal log-densities over pairs (x1[k], x2[k]).

    Returns the value and gradients wrt x1, x2, log(sd1), log(sd2), atanh(rho).
    """
    k = x1.size
    w = 1.0 - rho * rho
    z1 = x1 / sd1
    z2 = x2 / sd2
    s11 = np.dot(z1, z1)
    s22 = np.dot(z2, z2)
    s12 = np.dot(z1, z2)
    q = s11 - 2.0 * rho * s12 + s22
    value = -k * (LOG_2PI + np.log(sd1) + np.log(sd2) + 0.5 * np.log(w)) - 0.5 * q / w
    grad_x1 = -(z1 - rho * z2) / (sd1 * w)
    grad_x2 = -(z2 - rho * z1) / (sd2 * w)
    grad_log_sd1 = -k + (s11 - rho * s12) / w
    grad_log_sd2 = -k + (s22 - rho * s12) / w
    grad_atanh_rho = k * rho + s12 - rho * q / w
    return value, grad_x1, grad_x2, grad_log_sd1, grad_log_sd2, grad_atanh_rho


def _half_normal_log_density(sd: float, scale: float) -> float:
    return HALF_LOG_2_OVER_PI - np.log(scale) - 0.5 * (sd / scale) ** 2


def _normal_log_density(x: float, scale: float) -> float:
    return -0.5 * LOG_2PI - np.log(scale) - 0.5 * (x / scale) ** 2


def log_prior_terms(fx: FixedEffects, components: VarianceComponents, latent: LatentEffects,
                    config: ModelConfig) -> Dict[str, float]:
    """
    Log-prior contributions on the constrained scale, by name.

    Keys: 'sender_receiver', 'dyad', 'overdispersion', 'hyperprior'.
    """
    prior = config.prior
    sender_receiver = _bivariate_normal_terms(np.asarray(latent.sender, float), np.asarray(latent.receiver, float),
                                              components.sigma_a, components.sigma_b, components.rho_ab)[0]
    if config.random_slopes_enabled:
        dyad = _bivariate_normal_terms(np.asarray(latent.dyad_intercept, float),
                                       np.asarray(latent.dyad_slope, float),
                                       components.sigma_u, components.sigma_v, components.rho_uv)[0]
    else:
        dyad = _normal_terms(np.asarray(latent.dyad_intercept, float), components.sigma_u)[0]
    overdispersion = 0.0
    if config.overdispersion_enabled:
        overdispersion = _normal_terms(np.asarray(latent.overdispersion, float), components.sigma_d)[0]

    hyper = (_normal_log_density(fx.alpha, prior.fixed_effect_sd)
             + _normal_log_density(fx.beta, prior.fixed_effect_sd))
    scales = [components.sigma_a, components.sigma_b, components.sigma_u]
    correlations = 1
    if config.random_slopes_enabled:
        scales.append(components.sigma_v)
        correlations += 1
    if config.overdispersion_enabled:
        scales.append(components.sigma_d)
    hyper += sum(_half_normal_log_density(sd, prior.scale_sd) for sd in scales)
    hyper += correlations * LOG_HALF

    return {'sender_receiver': float(sender_receiver), 'dyad': float(dyad),
            'overdispersion': float(overdispersion), 'hyperprior': float(hyper)}


def log_prior(fx: FixedEffects, components: VarianceComponents, latent: LatentEffects,
              config: ModelConfig) -> float:
    """
    Log-prior on the constrained scale.

    Latent pairs are bivariate normal under their covariance matrices, d_ij is
    Normal(0, sigma_d^2), alpha and beta are Normal(0, 5^2), every sd is
    half-Normal(0, 2^2) and correlations are uniform on (-1, 1).
    """
    return sum(log_prior_terms(fx, components, latent, config).values())


# ----------------------------------------------------------------------
# unconstrained parameter vector
# ----------------------------------------------------------------------

class ParameterLayout:
    """
    Ordering of the unconstrained parameter vector.

    ``alpha, beta, log_sigma_a, log_sigma_b, atanh_rho_ab, log_sigma_u,
    [log_sigma_v, atanh_rho_uv], [log_sigma_d], a[N], b[N], u[D], [v[D]], [d[M]]``
    """

    def __init__(self, n_nodes: int, n_dyads: int, n_cells: int, config: ModelConfig):
        self.n_nodes = n_nodes
        self.n_dyads = n_dyads
        self.n_cells = n_cells
        self.config = config

        names = ['alpha', 'beta', 'sigma_a', 'sigma_b', 'rho_ab', 'sigma_u']
        if config.random_slopes_enabled:
            names += ['sigma_v', 'rho_uv']
        if config.overdispersion_enabled:
            names.append('sigma_d')
        self.population_names: List[str] = names
        self.index: Dict[str, int] = {name: i for i, name in enumerate(names)}
        self.n_population = len(names)

        offset = self.n_population
        self.latent_slices: Dict[str, slice] = {}
        blocks = [('sender', n_nodes), ('receiver', n_nodes), ('dyad_intercept', n_dyads)]
        if config.random_slopes_enabled:
            blocks.append(('dyad_slope', n_dyads))
        if config.overdispersion_enabled:
            blocks.append(('overdispersion', n_cells))
        for name, length in blocks:
            self.latent_slices[name] = slice(offset, offset + length)
            offset += length
        self.latent = slice(self.n_population, offset)
        self.size = offset

    @classmethod
    def for_dataset(cls, dataset: NetworkDataset, config: ModelConfig) -> 'ParameterLayout':
        return cls(dataset.n_nodes, dataset.n_dyads, dataset.n_observations, config)

    @property
    def unconstrained_names(self) -> List[str]:
        renamed = []
        for name in self.population_names:
            if name.startswith('sigma_'):
                renamed.append(f"log_{name}")
            elif name.startswith('rho_'):
                renamed.append(f"atanh_{name}")
            else:
                renamed.append(name)
        return renamed

    def latent_names(self, dataset: NetworkDataset) -> List[str]:
        names = [f"a[{node.label}]" for node in dataset.nodes]
        names += [f"b[{node.label}]" for node in dataset.nodes]
        names += [f"u[{d.lo.label}|{d.hi.label}]" for d in dataset.dyads]
        if 'dyad_slope' in self.latent_slices:
            names += [f"v[{d.lo.label}|{d.hi.label}]" for d in dataset.dyads]
        if 'overdispersion' in self.latent_slices:
            names += [f"d[{o.ego.label}>{o.alter.label}]" for o in dataset.observations]
        return names

    def constrain(self, unconstrained: np.ndarray) -> np.ndarray:
        """Population block on the constrained scale."""
        values = np.array(unconstrained[:self.n_population], dtype=float)
        for name, i in self.index.items():
            if name.startswith('sigma_'):
                values[i] = math.exp(values[i])
            elif name.startswith('rho_'):
                values[i] = math.tanh(values[i])
        return values

    def unconstrain(self, constrained: np.ndarray) -> np.ndarray:
        values = np.array(constrained, dtype=float)
        for name, i in self.index.items():
            if name.startswith('sigma_'):
                values[i] = math.log(values[i])
            elif name.startswith('rho_'):
                values[i] = math.atanh(values[i])
        return values

    def pack(self, fx: FixedEffects, components: VarianceComponents, latent: LatentEffects) -> np.ndarray:
        """Unconstrained vector from structured values (sds must be positive)."""
        theta = np.zeros(self.size)
        all_values = {'alpha': fx.alpha, 'beta': fx.beta, **components.to_dict()}
        theta[:self.n_population] = self.unconstrain(
            np.array([all_values[name] for name in self.population_names]))
        for name, block in self.latent_slices.items():
            vector = np.asarray(getattr(latent, name), dtype=float)
            if vector.shape != (block.stop - block.start,):
                raise DimensionMismatchError(f"{name} has shape {vector.shape}, expected ({block.stop - block.start},)")
            theta[block] = vector
        return theta

    def unpack(self, theta: np.ndarray) -> Tuple[FixedEffects, VarianceComponents, LatentEffects]:
        """Structured values from an unconstrained (centred) vector."""
        if np.shape(theta) != (self.size,):
            raise DimensionMismatchError(f"parameter vector has shape {np.shape(theta)}, expected ({self.size},)")
        population = dict(zip(self.population_names, self.constrain(theta)))
        fx = FixedEffects(alpha=population.pop('alpha'), beta=population.pop('beta'))
        components = VarianceComponents.from_mapping(population)
        empty = np.zeros(0)
        latent = LatentEffects(**{name: np.array(theta[self.latent_slices[name]]) if name in self.latent_slices
                                  else empty for name in
                                  ('sender', 'receiver', 'dyad_intercept', 'dyad_slope', 'overdispersion')})
        return fx, components, latent


class CenteredPosterior:
    """
    Log-posterior and gradient over the centred unconstrained vector.

    Includes the log/atanh Jacobians so it is a proper density on that scale.
    """

    def __init__(self, dataset: NetworkDataset, config: ModelConfig):
        self.dataset = dataset
        self.config = config
        self.layout = ParameterLayout.for_dataset(dataset, config)
        self._ego = dataset.ego_index
        self._alter = dataset.alter_index
        self._dyad = dataset.dyad_index
        self._x = np.asarray(dataset.covariate, dtype=float)
        self._y = np.asarray(dataset.successes, dtype=float)
        self._n = np.asarray(dataset.trials, dtype=float)
        self._log_binomial_constant = float(np.sum(log_binomial_coefficients(dataset)))

    @property
    def dimension(self) -> int:
        return self.layout.size

    # shared pieces ------------------------------------------------------
    def _hyper(self, theta: np.ndarray) -> Dict[str, float]:
        idx = self.layout.index
        hyper = {'alpha': theta[0], 'beta': theta[1]}
        for name in ('sigma_a', 'sigma_b', 'sigma_u', 'sigma_v', 'sigma_d'):
            hyper[name] = np.exp(theta[idx[name]]) if name in idx else 0.0
        for name in ('rho_ab', 'rho_uv'):
            hyper[name] = np.tanh(theta[idx[name]]) if name in idx else 0.0
        return hyper

    def _likelihood(self, hyper: Dict[str, float], a, b, u, v, d):
        """Log-likelihood and dL/d(eta) per observation."""
        x = self._x
        eta = hyper['alpha'] + a[self._ego] + b[self._alter] + hyper['beta'] * x + u[self._dyad]
        if v is not None:
            eta = eta + v[self._dyad] * x
        if d is not None:
            eta = eta + d
        value = self._log_binomial_constant + float(np.sum(_binomial_log_mass(self._y, self._n, eta)))
        return value, self._y - self._n * expit(eta)

    def _hyperprior(self, hyper: Dict[str, float], grad: np.ndarray) -> float:
        """Hyperpriors plus transform Jacobians; adds gradients in place."""
        prior = self.config.prior
        idx = self.layout.index
        value = 0.0
        for name in ('alpha', 'beta'):
            value += _normal_log_density(hyper[name], prior.fixed_effect_sd)
            grad[idx[name]] -= hyper[name] / prior.fixed_effect_sd ** 2
        for name in ('sigma_a', 'sigma_b', 'sigma_u', 'sigma_v', 'sigma_d'):
            if name not in idx:
                continue
            sd = hyper[name]
            value += _half_normal_log_density(sd, prior.scale_sd) + np.log(sd)
            grad[idx[name]] += 1.0 - (sd / prior.scale_sd) ** 2
        for name in ('rho_ab', 'rho_uv'):
            if name not in idx:
                continue
            rho = hyper[name]
            value += LOG_HALF + np.log1p(-rho * rho)
            grad[idx[name]] -= 2.0 * rho
        return value

    def _latent_gradients(self, g_eta: np.ndarray):
        n_nodes, n_dyads = self.layout.n_nodes, self.layout.n_dyads
        g_a = np.bincount(self._ego, weights=g_eta, minlength=n_nodes)
        g_b = np.bincount(self._alter, weights=g_eta, minlength=n_nodes)
        g_u = np.bincount(self._dyad, weights=g_eta, minlength=n_dyads)
        g_v = np.bincount(self._dyad, weights=g_eta * self._x, minlength=n_dyads)
        return g_a, g_b, g_u, g_v

    def latent_block(self, theta: np.ndarray) -> np.ndarray:
        """Centred latent effects (a, b, u, [v], [d]) concatenated."""
        return np.array(theta[self.layout.latent])

    def to_centered(self, theta: np.ndarray) -> np.ndarray:
        return np.array(theta)

    def from_centered(self, theta: np.ndarray) -> np.ndarray:
        return np.array(theta)

    # evaluation -----------------------------------------------------------
    def __call__(self, theta: np.ndarray) -> Tuple[float, np.ndarray]:
        layout = self.layout
        slices = layout.latent_slices
        idx = layout.index
        slopes = 'dyad_slope' in slices
        overdispersed = 'overdispersion' in slices
        grad = np.zeros(layout.size)

        with np.errstate(over='ignore', invalid='ignore', divide='ignore'):
            hyper = self._hyper(theta)
            a, b, u = theta[slices['sender']], theta[slices['receiver']], theta[slices['dyad_intercept']]
            v = theta[slices['dyad_slope']] if slopes else None
            d = theta[slices['overdispersion']] if overdispersed else None

            value, g_eta = self._likelihood(hyper, a, b, u, v, d)
            g_a, g_b, g_u, g_v = self._latent_gradients(g_eta)
            grad[idx['alpha']] += float(np.sum(g_eta))
            grad[idx['beta']] += float(np.dot(g_eta, self._x))

            sr = _bivariate_normal_terms(a, b, hyper['sigma_a'], hyper['sigma_b'], hyper['rho_ab'])
            value += sr[0]
            grad[slices['sender']] = g_a + sr[1]
            grad[slices['receiver']] = g_b + sr[2]
            grad[idx['sigma_a']] += sr[3]
            grad[idx['sigma_b']] += sr[4]
            grad[idx['rho_ab']] += sr[5]

            if slopes:
                dy = _bivariate_normal_terms(u, v, hyper['sigma_u'], hyper['sigma_v'], hyper['rho_uv'])
                value += dy[0]
                grad[slices['dyad_intercept']] = g_u + dy[1]
                grad[slices['dyad_slope']] = g_v + dy[2]
                grad[idx['sigma_u']] += dy[3]
                grad[idx['sigma_v']] += dy[4]
                grad[idx['rho_uv']] += dy[5]
            else:
                du = _normal_terms(u, hyper['sigma_u'])
                value += du[0]
                grad[slices['dyad_intercept']] = g_u + du[1]
                grad[idx['sigma_u']] += du[2]

            if overdispersed:
                dd = _normal_terms(d, hyper['sigma_d'])
                value += dd[0]
                grad[slices['overdispersion']] = g_eta + dd[1]
                grad[idx['sigma_d']] += dd[2]

            value += self._hyperprior(hyper, grad)
        return float(value), grad


class NonCenteredPosterior(CenteredPosterior):
    """
    Log-posterior over standardised latents.

    The latent block holds z with (a, b) = L_ab z, (u, v) = L_uv z and
    d = sigma_d z, where L is the lower Cholesky factor of the 2x2 covariance.
    The density equals the centred one plus log|det L| per latent pair.
    """

    def _transform(self, hyper: Dict[str, float], theta: np.ndarray):
        slices = self.layout.latent_slices
        za, zb, zu = theta[slices['sender']], theta[slices['receiver']], theta[slices['dyad_intercept']]
        root_ab = np.sqrt(1.0 - hyper['rho_ab'] ** 2)
        a = hyper['sigma_a'] * za
        b = hyper['sigma_b'] * (hyper['rho_ab'] * za + root_ab * zb)
        u = hyper['sigma_u'] * zu
        v = d = None
        if 'dyad_slope' in slices:
            zv = theta[slices['dyad_slope']]
            root_uv = np.sqrt(1.0 - hyper['rho_uv'] ** 2)
            v = hyper['sigma_v'] * (hyper['rho_uv'] * zu + root_uv * zv)
        if 'overdispersion' in slices:
            d = hyper['sigma_d'] * theta[slices['overdispersion']]
        return a, b, u, v, d

    def latent_block(self, theta: np.ndarray) -> np.ndarray:
        hyper = self._hyper(theta)
        return np.concatenate([block for block in self._transform(hyper, theta) if block is not None])

    def to_centered(self, theta: np.ndarray) -> np.ndarray:
        centered = np.array(theta, dtype=float)
        centered[self.layout.latent] = self.latent_block(theta)
        return centered

    def from_centered(self, theta: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`to_centered`."""
        hyper = self._hyper(theta)
        slices = self.layout.latent_slices
        out = np.array(theta, dtype=float)
        za = theta[slices['sender']] / hyper['sigma_a']
        root_ab = np.sqrt(1.0 - hyper['rho_ab'] ** 2)
        out[slices['sender']] = za
        out[slices['receiver']] = (theta[slices['receiver']] / hyper['sigma_b'] - hyper['rho_ab'] * za) / root_ab
        zu = theta[slices['dyad_intercept']] / hyper['sigma_u']
        out[slices['dyad_intercept']] = zu
        if 'dyad_slope' in slices:
            root_uv = np.sqrt(1.0 - hyper['rho_uv'] ** 2)
            out[slices['dyad_slope']] = (theta[slices['dyad_slope']] / hyper['sigma_v']
                                         - hyper['rho_uv'] * zu) / root_uv
        if 'overdispersion' in slices:
            out[slices['overdispersion']] = theta[slices['overdispersion']] / hyper['sigma_d']
        return out

    def __call__(self, theta: np.ndarray) -> Tuple[float, np.ndarray]:
        layout = self.layout
        slices = layout.latent_slices
        idx = layout.index
        grad = np.zeros(layout.size)

        with np.errstate(over='ignore', invalid='ignore', divide='ignore'):
            hyper = self._hyper(theta)
            a, b, u, v, d = self._transform(hyper, theta)
            value, g_eta = self._likelihood(hyper, a, b, u, v, d)
            g_a, g_b, g_u, g_v = self._latent_gradients(g_eta)
            grad[idx['alpha']] += float(np.sum(g_eta))
            grad[idx['beta']] += float(np.dot(g_eta, self._x))

            z = theta[layout.latent]
            value += -0.5 * z.size * LOG_2PI - 0.5 * float(np.dot(z, z))
            grad[layout.latent] -= z

            za, zb = theta[slices['sender']], theta[slices['receiver']]
            sa, sb, rab = hyper['sigma_a'], hyper['sigma_b'], hyper['rho_ab']
            wab = 1.0 - rab * rab
            root_ab = np.sqrt(wab)
            grad[slices['sender']] += sa * g_a + sb * rab * g_b
            grad[slices['receiver']] += sb * root_ab * g_b
            grad[idx['sigma_a']] += float(np.dot(g_a, a))
            grad[idx['sigma_b']] += float(np.dot(g_b, b))
            grad[idx['rho_ab']] += sb * float(np.dot(g_b, wab * za - rab * root_ab * zb))

            zu = theta[slices['dyad_intercept']]
            su = hyper['sigma_u']
            grad[idx['sigma_u']] += float(np.dot(g_u, u))
            if v is not None:
                zv = theta[slices['dyad_slope']]
                sv, ruv = hyper['sigma_v'], hyper['rho_uv']
                wuv = 1.0 - ruv * ruv
                root_uv = np.sqrt(wuv)
                grad[slices['dyad_intercept']] += su * g_u + sv * ruv * g_v
                grad[slices['dyad_slope']] += sv * root_uv * g_v
                grad[idx['sigma_v']] += float(np.dot(g_v, v))
                grad[idx['rho_uv']] += sv * float(np.dot(g_v, wuv * zu - ruv * root_uv * zv))
            else:
                grad[slices['dyad_intercept']] += su * g_u

            if d is not None:
                grad[slices['overdispersion']] += hyper['sigma_d'] * g_eta
                grad[idx['sigma_d']] += float(np.dot(g_eta, d))

            value += self._hyperprior(hyper, grad)
        return float(value), grad


def log_posterior_and_gradient(dataset: NetworkDataset, fx: FixedEffects, components: VarianceComponents,
                               latent: LatentEffects, config: ModelConfig) -> Tuple[float, np.ndarray]:
    """
    Log-posterior on the unconstrained scale and its exact gradient.

    The gradient is ordered as :class:`ParameterLayout`; sds are differentiated
    through log(sd) and correlations through atanh(rho).

    Raises:
        DimensionMismatchError: if latent vectors do not match the dataset
    """
    latent.check(dataset, config)
    components.validate(config)
    posterior = CenteredPosterior(dataset, config)
    return posterior(posterior.layout.pack(fx, components, latent))
