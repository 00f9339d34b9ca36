"""
Synthetic data from the model's own generative process.

Random numbers come from numpy's PCG64 bit generator seeded through
``SeedSequence(seed)``; the draw order is fixed (sender/receiver normals,
dyad selection, covariates, dyad normals, overdispersion normals, binomial
outcomes) so any PCG64 implementation can replay a stream.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np

from .dyad_data import NetworkDataset
from .errors import InvalidSpecError
from .model import FixedEffects, LatentEffects, VarianceComponents, inv_logit, linear_predictors

logger = logging.getLogger(__name__)

RNG_ALGORITHM = "numpy PCG64 via SeedSequence(seed)"
COVARIATE_KINDS = ('constant', 'uniform', 'binary', 'matrix')


@dataclass(frozen=True, eq=False)
class CovariateGenerator:
    """How the dyad covariate is drawn; always shared by both directions of a dyad."""
    kind: str = 'constant'
    value: float = 0.0
    low: float = 0.0
    high: float = 1.0
    p: float = 0.5
    matrix: Optional[np.ndarray] = None

    def validate(self, n_nodes: int) -> None:
        if self.kind not in COVARIATE_KINDS:
            raise InvalidSpecError(f"covariate kind must be one of {COVARIATE_KINDS}, got {self.kind!r}")
        if self.kind == 'constant' and not math.isfinite(self.value):
            raise InvalidSpecError("constant covariate must be finite")
        if self.kind == 'uniform' and not (math.isfinite(self.low) and math.isfinite(self.high)
                                           and self.low < self.high):
            raise InvalidSpecError(f"uniform covariate needs low < high, got ({self.low}, {self.high})")
        if self.kind == 'binary' and not 0.0 <= self.p <= 1.0:
            raise InvalidSpecError(f"binary covariate probability must be in [0, 1], got {self.p}")
        if self.kind == 'matrix':
            if self.matrix is None:
                raise InvalidSpecError("matrix covariate requires a matrix")
            matrix = np.asarray(self.matrix, dtype=float)
            if matrix.shape != (n_nodes, n_nodes):
                raise InvalidSpecError(f"covariate matrix must be {n_nodes}x{n_nodes}, got {matrix.shape}")
            if not np.all(np.isfinite(matrix)):
                raise InvalidSpecError("covariate matrix contains non-finite values")
            if not np.array_equal(matrix, matrix.T):
                raise InvalidSpecError("covariate matrix must be symmetric")

    def draw(self, rng: np.random.Generator, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        count = len(lo)
        if self.kind == 'constant':
            return np.full(count, float(self.value))
        if self.kind == 'uniform':
            return rng.uniform(self.low, self.high, size=count)
        if self.kind == 'binary':
            return (rng.random(size=count) < self.p).astype(float)
        return np.asarray(self.matrix, dtype=float)[lo, hi]

    def to_dict(self) -> Dict[str, object]:
        data = {'kind': self.kind}
        if self.kind == 'constant':
            data['value'] = self.value
        elif self.kind == 'uniform':
            data.update(low=self.low, high=self.high)
        elif self.kind == 'binary':
            data['p'] = self.p
        else:
            data['matrix'] = np.asarray(self.matrix, dtype=float).tolist()
        return data


@dataclass(frozen=True, eq=False)
class SimulationSpec:
    n_nodes: int
    fixed: FixedEffects = field(default_factory=FixedEffects)
    components: VarianceComponents = field(default_factory=VarianceComponents)
    trials_per_cell: Union[int, np.ndarray] = 10
    covariate: CovariateGenerator = field(default_factory=CovariateGenerator)
    missing_fraction: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        if int(self.n_nodes) != self.n_nodes or self.n_nodes < 3:
            raise InvalidSpecError(f"n_nodes must be an integer >= 3, got {self.n_nodes}")
        if isinstance(self.trials_per_cell, (int, np.integer)):
            if self.trials_per_cell < 1:
                raise InvalidSpecError(f"trials_per_cell must be >= 1, got {self.trials_per_cell}")
        else:
            table = np.asarray(self.trials_per_cell)
            if table.shape != (self.n_nodes, self.n_nodes):
                raise InvalidSpecError(f"trials table must be {self.n_nodes}x{self.n_nodes}, got {table.shape}")
            off_diagonal = table[~np.eye(self.n_nodes, dtype=bool)]
            if np.any(off_diagonal < 1) or np.any(off_diagonal != np.round(off_diagonal)):
                raise InvalidSpecError("trials table entries must be integers >= 1 off the diagonal")
        if not 0.0 <= self.missing_fraction < 1.0:
            raise InvalidSpecError(f"missing_fraction must be in [0, 1), got {self.missing_fraction}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise InvalidSpecError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        self.covariate.validate(self.n_nodes)

    @property
    def n_possible_dyads(self) -> int:
        return self.n_nodes * (self.n_nodes - 1) // 2

    @property
    def n_observed_dyads(self) -> int:
        return max(1, int(math.floor((1.0 - self.missing_fraction) * self.n_possible_dyads + 0.5)))

    def to_dict(self) -> Dict[str, object]:
        trials = (int(self.trials_per_cell) if isinstance(self.trials_per_cell, (int, np.integer))
                  else np.asarray(self.trials_per_cell).astype(int).tolist())
        return {
            'n_nodes': int(self.n_nodes),
            'alpha': self.fixed.alpha,
            'beta': self.fixed.beta,
            **self.components.to_dict(),
            'trials_per_cell': trials,
            'covariate': self.covariate.to_dict(),
            'missing_fraction': self.missing_fraction,
            'seed': int(self.seed),
            'rng': RNG_ALGORITHM,
        }


@dataclass(frozen=True)
class MomentReport:
    """Sample moments of the latent draws (population variance, ddof=0)."""
    var_a: float
    var_b: float
    corr_ab: float
    var_u: float
    var_v: float
    corr_uv: float
    var_d: float
    n_nodes: int
    n_dyads: int
    n_cells: int

    def to_dict(self) -> Dict[str, float]:
        return dict(self.__dict__)


def cholesky_2x2(sd1: float, sd2: float, rho: float) -> np.ndarray:
    """Lower Cholesky factor of [[sd1^2, rho sd1 sd2], [rho sd1 sd2, sd2^2]]; valid for zero sds."""
    return np.array([[sd1, 0.0],
                     [rho * sd2, sd2 * math.sqrt(1.0 - rho * rho)]])


def unrank_dyads(ranks: np.ndarray, n_nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    """(lo, hi) node pairs for positions in the lexicographic list of pairs lo < hi."""
    rows = np.arange(n_nodes, dtype=np.int64)
    offsets = rows * (2 * n_nodes - rows - 1) // 2
    ranks = np.asarray(ranks, dtype=np.int64)
    lo = np.searchsorted(offsets, ranks, side='right') - 1
    hi = ranks - offsets[lo] + lo + 1
    return lo.astype(np.intp), hi.astype(np.intp)


def _bivariate_draws(rng: np.random.Generator, count: int, sd1: float, sd2: float, rho: float) -> np.ndarray:
    standard = rng.standard_normal(size=(count, 2))
    return standard @ cholesky_2x2(sd1, sd2, rho).T


def simulate(spec: SimulationSpec) -> Tuple[NetworkDataset, LatentEffects]:
    """
    Draw a dataset and its true latent effects.

    Every observed dyad is observed in both directions; dyads are dropped
    uniformly at random according to ``spec.missing_fraction``.

    Raises:
        InvalidSpecError: if the specification is invalid
    """
    spec.validate()
    n = int(spec.n_nodes)
    c = spec.components
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(spec.seed))))

    sender_receiver = _bivariate_draws(rng, n, c.sigma_a, c.sigma_b, c.rho_ab)

    if spec.missing_fraction > 0.0:
        ranks = np.sort(rng.choice(spec.n_possible_dyads, size=spec.n_observed_dyads, replace=False))
    else:
        ranks = np.arange(spec.n_possible_dyads)
    lo, hi = unrank_dyads(ranks, n)
    dyad_covariate = spec.covariate.draw(rng, lo, hi)
    dyad_effects = _bivariate_draws(rng, len(ranks), c.sigma_u, c.sigma_v, c.rho_uv)

    # canonical order: by ego then alter
    ego = np.concatenate([lo, hi])
    alter = np.concatenate([hi, lo])
    dyad_of_cell = np.concatenate([np.arange(len(ranks)), np.arange(len(ranks))])
    order = np.lexsort((alter, ego))
    ego, alter, dyad_of_cell = ego[order], alter[order], dyad_of_cell[order]
    x = dyad_covariate[dyad_of_cell]

    overdispersion = c.sigma_d * rng.standard_normal(size=len(ego))
    if isinstance(spec.trials_per_cell, (int, np.integer)):
        trials = np.full(len(ego), int(spec.trials_per_cell), dtype=np.int64)
    else:
        trials = np.asarray(spec.trials_per_cell)[ego, alter].astype(np.int64)

    eta = (spec.fixed.alpha + sender_receiver[ego, 0] + sender_receiver[alter, 1] + spec.fixed.beta * x
           + dyad_effects[dyad_of_cell, 0] + dyad_effects[dyad_of_cell, 1] * x + overdispersion)
    successes = rng.binomial(trials, inv_logit(eta))

    width = max(4, len(str(n - 1)))
    labels = [f"node{i:0{width}d}" for i in range(n)]
    records = [(labels[e], labels[a], int(s), int(t), float(v), None)
               for e, a, s, t, v in zip(ego, alter, successes, trials, x)]
    dataset = NetworkDataset.from_records(records, roster=labels, source=f"simulated(seed={int(spec.seed)})")

    # from_records re-sorts the same way; dyad ids follow lexicographic (lo, hi) rank order
    latents = LatentEffects(
        sender=sender_receiver[:, 0].copy(),
        receiver=sender_receiver[:, 1].copy(),
        dyad_intercept=dyad_effects[:, 0].copy(),
        dyad_slope=dyad_effects[:, 1].copy(),
        overdispersion=overdispersion,
    )
    logger.info(f"Simulated {dataset.n_observations} observations over {n} nodes and "
                f"{dataset.n_dyads} dyads (seed {int(spec.seed)})")
    return dataset, latents


def simulated_probabilities(dataset: NetworkDataset, fixed: FixedEffects, latents: LatentEffects) -> np.ndarray:
    """p_ij implied by the true parameters, in canonical observation order."""
    return inv_logit(linear_predictors(dataset, fixed, latents))


def _variance(values: np.ndarray) -> float:
    return float(np.var(values)) if len(values) else float('nan')


def _correlation(first: np.ndarray, second: np.ndarray) -> float:
    if len(first) < 2:
        return float('nan')
    sd1, sd2 = np.std(first), np.std(second)
    if sd1 == 0.0 or sd2 == 0.0:
        return float('nan')
    return float(np.mean((first - first.mean()) * (second - second.mean())) / (sd1 * sd2))


def empirical_moments(dataset: NetworkDataset, latents: LatentEffects) -> MomentReport:
    """Sample variances and correlations of true latent draws."""
    return MomentReport(
        var_a=_variance(latents.sender),
        var_b=_variance(latents.receiver),
        corr_ab=_correlation(latents.sender, latents.receiver),
        var_u=_variance(latents.dyad_intercept),
        var_v=_variance(latents.dyad_slope),
        corr_uv=_correlation(latents.dyad_intercept, latents.dyad_slope),
        var_d=_variance(latents.overdispersion),
        n_nodes=dataset.n_nodes,
        n_dyads=dataset.n_dyads,
        n_cells=dataset.n_observations,
    )


def write_truth_json(path: Union[str, Path], spec: SimulationSpec, dataset: NetworkDataset,
                     latents: LatentEffects) -> Path:
    """Specification, seed and true latent effects keyed by node/dyad/cell label."""
    out_path = Path(path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    truth = {
        'spec': spec.to_dict(),
        'seed': int(spec.seed),
        'dataset_fingerprint': dataset.fingerprint(),
        'latents': {
            'sender': {node.label: float(v) for node, v in zip(dataset.nodes, latents.sender)},
            'receiver': {node.label: float(v) for node, v in zip(dataset.nodes, latents.receiver)},
            'dyad_intercept': {f"{d.lo.label}|{d.hi.label}": float(v)
                               for d, v in zip(dataset.dyads, latents.dyad_intercept)},
            'dyad_slope': {f"{d.lo.label}|{d.hi.label}": float(v)
                           for d, v in zip(dataset.dyads, latents.dyad_slope)},
            'overdispersion': {f"{o.ego.label}>{o.alter.label}": float(v)
                               for o, v in zip(dataset.observations, latents.overdispersion)},
        },
        'moments': empirical_moments(dataset, latents).to_dict(),
    }
    with open(out_path, 'w', encoding='utf-8') as f:
        json.dump(truth, f, indent=2, ensure_ascii=False)
    return out_path
