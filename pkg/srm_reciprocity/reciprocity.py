"""
Reciprocity quantities derived from the variance components.

The dyadic variance at covariate value x is the quadratic form
(1, x) Sigma_dyad (1, x)', and the dyadic reciprocity correlation is that
variance over itself plus the overdispersion variance and the logistic latent
residual pi^2/3 (about 3.29). Posterior curves evaluate the formulas per draw
and summarise the transformed draws.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .dyad_data import CovariateTransform
from .errors import MissingColumnsError
from .model import LATENT_RESIDUAL_VARIANCE, ModelConfig, VarianceComponents
from .sampler import PosteriorSamples

logger = logging.getLogger(__name__)

DEFAULT_GRID_POINTS = 101
CURVE_COLUMNS = ['x', 'rho_mean', 'rho_median', 'rho_q05', 'rho_q95',
                 'dyad_var_mean', 'dyad_var_q05', 'dyad_var_q95']
# largest double below 1; rho is capped here when the dyad variance swamps the noise
RHO_CEILING = float(np.nextafter(1.0, 0.0))


# ----------------------------------------------------------------------
# pointwise formulas
# ----------------------------------------------------------------------

def _quadratic(x, sigma_u, sigma_v, rho_uv):
    x = np.asarray(x, dtype=float)
    value = sigma_u ** 2 + 2.0 * rho_uv * sigma_u * sigma_v * x + sigma_v ** 2 * x ** 2
    # exact PSD form is >= 0; rounding near the vertex can dip below
    return np.maximum(value, 0.0)


def _ratio(quadratic, sigma_d, include_overdispersion: bool):
    noise = LATENT_RESIDUAL_VARIANCE
    if include_overdispersion:
        noise = noise + np.asarray(sigma_d, dtype=float) ** 2
    with np.errstate(invalid='ignore'):
        ratio = quadratic / (quadratic + noise)
    ratio = np.where(np.isinf(quadratic), RHO_CEILING, ratio)
    return np.minimum(ratio, RHO_CEILING)


def _scalar_or_array(value):
    return float(value) if np.ndim(value) == 0 else value


def dyadic_variance(x, components: VarianceComponents):
    """
    sigma_u^2 + 2 sigma_uv x + sigma_v^2 x^2; broadcasts over ``x``.

    Nonnegative for every x because Sigma_dyad is PSD.
    """
    value = _quadratic(x, components.sigma_u, components.sigma_v, components.rho_uv)
    return _scalar_or_array(value)


def dyadic_reciprocity(x, components: VarianceComponents, config: Optional[ModelConfig] = None):
    """
    Dyadic reciprocity correlation at covariate value(s) ``x`` (model scale).

    The overdispersion variance joins the denominator only when overdispersion
    is enabled in ``config``. Always in [0, 1).
    """
    config = config or ModelConfig()
    quadratic = _quadratic(x, components.sigma_u, components.sigma_v, components.rho_uv)
    return _scalar_or_array(_ratio(quadratic, components.sigma_d, config.overdispersion_enabled))


def generalized_reciprocity(components: VarianceComponents) -> float:
    """Correlation between an individual's sender and receiver effects."""
    return float(components.rho_ab)


def variance_partition(x, components: VarianceComponents,
                       config: Optional[ModelConfig] = None) -> Dict[str, float]:
    """
    Shares of the latent-scale variance of one directed outcome at ``x``.

    Sources are sender, receiver, dyad (the quadratic at x), overdispersion and
    the pi^2/3 logistic residual; the shares sum to 1.
    """
    config = config or ModelConfig()
    parts = {
        'sender': components.sigma_a ** 2,
        'receiver': components.sigma_b ** 2,
        'dyad': float(dyadic_variance(float(x), components)),
        'overdispersion': components.sigma_d ** 2 if config.overdispersion_enabled else 0.0,
        'residual': LATENT_RESIDUAL_VARIANCE,
    }
    total = sum(parts.values())
    return {name: value / total for name, value in parts.items()}


# ----------------------------------------------------------------------
# grids and curves
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    """
    Covariate grid on the original scale.

    Either explicit ``values`` or ``points`` equally spaced values on
    [lower, upper]; bounds default to the observed covariate range.
    """
    values: Optional[Tuple[float, ...]] = None
    lower: Optional[float] = None
    upper: Optional[float] = None
    points: int = DEFAULT_GRID_POINTS

    def __post_init__(self):
        if self.values is not None and len(self.values) == 0:
            raise ValueError("grid needs at least one value")
        if self.points < 1:
            raise ValueError(f"grid points must be >= 1, got {self.points}")
        if self.lower is not None and self.upper is not None and self.lower > self.upper:
            raise ValueError(f"grid lower bound {self.lower} exceeds upper bound {self.upper}")

    @classmethod
    def parse(cls, text: str) -> 'GridSpec':
        """
        ``lo:hi:n`` for an even grid, otherwise a comma-separated list of values.

        Examples:
            "0"            -> single point at 0
            "-1:1:21"      -> 21 points from -1 to 1
            "0,0.5,1"      -> three explicit points
        """
        text = text.strip()
        if not text:
            raise ValueError("empty grid specification")
        if ':' in text:
            parts = text.split(':')
            if len(parts) != 3:
                raise ValueError(f"grid range must read lo:hi:n, got {text!r}")
            return cls(lower=float(parts[0]), upper=float(parts[1]), points=int(parts[2]))
        return cls(values=tuple(float(part) for part in text.split(',') if part.strip()))

    def resolve(self, observed_min: Optional[float] = None, observed_max: Optional[float] = None) -> np.ndarray:
        """Strictly increasing grid values."""
        if self.values is not None:
            grid = np.unique(np.asarray(self.values, dtype=float))
        else:
            lower = self.lower if self.lower is not None else observed_min
            upper = self.upper if self.upper is not None else observed_max
            if lower is None or upper is None or not np.isfinite([lower, upper]).all():
                raise ValueError("grid bounds unknown: no observed covariate range recorded, pass an explicit grid")
            if lower == upper:
                logger.info(f"Degenerate covariate range; evaluating a single point at {lower}")
                grid = np.array([float(lower)])
            else:
                grid = np.linspace(float(lower), float(upper), self.points)
        if not np.all(np.isfinite(grid)):
            raise ValueError("grid values must be finite")
        return grid


@dataclass(eq=False)
class ReciprocityCurve:
    grid: np.ndarray
    rho_mean: np.ndarray
    rho_median: np.ndarray
    rho_q05: np.ndarray
    rho_q95: np.ndarray
    dyad_var_mean: np.ndarray
    dyad_var_median: np.ndarray
    dyad_var_q05: np.ndarray
    dyad_var_q95: np.ndarray
    overdispersion_included: bool
    transform: CovariateTransform = field(default_factory=CovariateTransform)

    def __post_init__(self):
        if self.grid.size > 1 and not np.all(np.diff(self.grid) > 0):
            raise ValueError("grid must be strictly increasing")
        for name in ('rho_mean', 'rho_median', 'rho_q05', 'rho_q95'):
            values = getattr(self, name)
            if np.any(values < 0.0) or np.any(values >= 1.0):
                raise ValueError(f"{name} outside [0, 1)")

    def __len__(self) -> int:
        return self.grid.size

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'x': self.grid,
            'rho_mean': self.rho_mean,
            'rho_median': self.rho_median,
            'rho_q05': self.rho_q05,
            'rho_q95': self.rho_q95,
            'dyad_var_mean': self.dyad_var_mean,
            'dyad_var_q05': self.dyad_var_q05,
            'dyad_var_q95': self.dyad_var_q95,
        })[CURVE_COLUMNS]


def _required(samples: PosteriorSamples, names: Sequence[str]) -> None:
    missing = [name for name in names if not samples.has(name)]
    if missing:
        raise MissingColumnsError(f"posterior draws lack required columns: {', '.join(missing)}")


def _pooled_or_zero(samples: PosteriorSamples, name: str, size: int) -> np.ndarray:
    return samples.pooled(name) if samples.has(name) else np.zeros(size)


def _dyad_draws(samples: PosteriorSamples, config: ModelConfig):
    required = ['sigma_u']
    if config.random_slopes_enabled:
        required += ['sigma_v', 'rho_uv']
    if config.overdispersion_enabled:
        required.append('sigma_d')
    _required(samples, required)
    sigma_u = samples.pooled('sigma_u')
    size = sigma_u.size
    sigma_v = _pooled_or_zero(samples, 'sigma_v', size) if config.random_slopes_enabled else np.zeros(size)
    rho_uv = _pooled_or_zero(samples, 'rho_uv', size) if config.random_slopes_enabled else np.zeros(size)
    sigma_d = _pooled_or_zero(samples, 'sigma_d', size)
    return sigma_u, sigma_v, rho_uv, sigma_d


def _transform_of(samples: PosteriorSamples) -> CovariateTransform:
    return CovariateTransform.from_dict(samples.covariate.get('transform'))


def _model_grid(samples: PosteriorSamples, grid_spec: Optional[GridSpec]):
    grid_spec = grid_spec or GridSpec()
    grid = grid_spec.resolve(samples.covariate.get('min'), samples.covariate.get('max'))
    transform = _transform_of(samples)
    return grid, np.atleast_1d(transform.apply(grid)), transform


def reciprocity_curve(samples: PosteriorSamples, grid_spec: Optional[GridSpec] = None,
                      config: Optional[ModelConfig] = None) -> ReciprocityCurve:
    """
    Posterior summaries of the dyadic reciprocity and dyadic variance over a grid.

    Every posterior draw is pushed through the formulas at every grid point and
    the resulting (grid x draws) matrices are summarised row by row, so the
    summaries describe the transformed draws.

    Args:
        samples: posterior draws holding the dyad variance components
        grid_spec: covariate grid on the original scale (default: 101 points
            over the observed range)
        config: model switches; decides whether sigma_d enters the denominator

    Returns:
        ReciprocityCurve

    Raises:
        MissingColumnsError: if a required variance-component column is absent
    """
    config = config or ModelConfig()
    sigma_u, sigma_v, rho_uv, sigma_d = _dyad_draws(samples, config)
    grid, model_x, transform = _model_grid(samples, grid_spec)

    variance = _quadratic(model_x[:, np.newaxis], sigma_u[np.newaxis, :],
                          sigma_v[np.newaxis, :], rho_uv[np.newaxis, :])
    rho = _ratio(variance, sigma_d[np.newaxis, :], config.overdispersion_enabled)

    rho_q05, rho_median, rho_q95 = np.quantile(rho, [0.05, 0.5, 0.95], axis=1)
    var_q05, var_median, var_q95 = np.quantile(variance, [0.05, 0.5, 0.95], axis=1)
    logger.info(f"Evaluated dyadic reciprocity at {grid.size} grid point(s) over {sigma_u.size} draws")
    return ReciprocityCurve(
        grid=grid,
        rho_mean=rho.mean(axis=1),
        rho_median=rho_median,
        rho_q05=rho_q05,
        rho_q95=rho_q95,
        dyad_var_mean=variance.mean(axis=1),
        dyad_var_median=var_median,
        dyad_var_q05=var_q05,
        dyad_var_q95=var_q95,
        overdispersion_included=config.overdispersion_enabled,
        transform=transform,
    )


def variance_partition_curve(samples: PosteriorSamples, grid_spec: Optional[GridSpec] = None,
                             config: Optional[ModelConfig] = None) -> pd.DataFrame:
    """Posterior-mean variance shares at every grid point (columns x, sender, ..., residual)."""
    config = config or ModelConfig()
    _required(samples, ['sigma_a', 'sigma_b'])
    sigma_u, sigma_v, rho_uv, sigma_d = _dyad_draws(samples, config)
    grid, model_x, _ = _model_grid(samples, grid_spec)

    sender = samples.pooled('sigma_a') ** 2
    receiver = samples.pooled('sigma_b') ** 2
    dyad = _quadratic(model_x[:, np.newaxis], sigma_u, sigma_v, rho_uv)
    overdispersion = sigma_d ** 2 if config.overdispersion_enabled else np.zeros_like(sigma_u)
    total = sender + receiver + dyad + overdispersion + LATENT_RESIDUAL_VARIANCE

    frame = pd.DataFrame({'x': grid})
    frame['sender'] = (sender / total).mean(axis=1)
    frame['receiver'] = (receiver / total).mean(axis=1)
    frame['dyad'] = (dyad / total).mean(axis=1)
    frame['overdispersion'] = (overdispersion / total).mean(axis=1)
    frame['residual'] = (LATENT_RESIDUAL_VARIANCE / total).mean(axis=1)
    return frame


def generalized_reciprocity_summary(samples: PosteriorSamples) -> Dict[str, float]:
    """Mean, median and 5%/95% quantiles of the rho_ab draws."""
    _required(samples, ['rho_ab'])
    draws = samples.pooled('rho_ab')
    q05, median, q95 = np.quantile(draws, [0.05, 0.5, 0.95])
    return {'mean': float(np.mean(draws)), 'median': float(median),
            'q05': float(q05), 'q95': float(q95), 'draws': int(draws.size)}


# ----------------------------------------------------------------------
# output
# ----------------------------------------------------------------------

def write_curve_csv(curve: ReciprocityCurve, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    curve.to_frame().to_csv(path, index=False, float_format='%.17g')
    return path


def write_partition_csv(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format='%.17g')
    return path


def write_generalized_json(summary: Dict[str, float], path: Union[str, Path],
                           curve: Optional[ReciprocityCurve] = None) -> Path:
    path = Path(path)
    payload: Dict[str, object] = {'generalized_reciprocity': summary}
    if curve is not None:
        payload['overdispersion_included'] = curve.overdispersion_included
        payload['covariate_transform'] = curve.transform.to_dict()
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(payload, f, indent=2)
    return path
