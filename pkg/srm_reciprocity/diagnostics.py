"""
Convergence diagnostics for MCMC output: split R-hat, effective sample size
and per-parameter posterior summaries.

R-hat and ESS come from arviz; this module adds the minimum-draw check, NaN on
degenerate chains and the cap of ESS at the total number of draws.
"""

import logging
import warnings
from typing import Optional, Sequence

import arviz as az
import numpy as np
import pandas as pd

from .errors import InsufficientDrawsError

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = ['mean', 'sd', 'q05', 'q50', 'q95', 'rhat', 'ess']
MIN_DRAWS = 8


def _as_chains(draws) -> np.ndarray:
    """(chains, draws) array; a 1-D input is a single chain."""
    array = np.asarray(draws, dtype=float)
    if array.ndim == 1:
        array = array[np.newaxis, :]
    if array.ndim != 2:
        raise ValueError(f"draws must be 1-D or 2-D (chains x draws), got shape {array.shape}")
    return array


def split_chains(draws: np.ndarray) -> np.ndarray:
    """Split every chain in half (dropping the middle draw of odd-length chains)."""
    n_chain, n_draw = draws.shape
    half = n_draw // 2
    return np.vstack([draws[:, :half], draws[:, n_draw - half:]])


def split_rhat(draws) -> float:
    """
    Split-chain potential scale reduction factor for one parameter.

    Args:
        draws: array (chains x draws) or a single chain

    Returns:
        R-hat, or nan when the within-chain variance is zero (degenerate)

    Raises:
        InsufficientDrawsError: fewer than 4 draws per split segment
    """
    chains = _as_chains(draws)
    if chains.shape[1] < MIN_DRAWS:
        raise InsufficientDrawsError(f"split R-hat needs at least 4 draws per half-chain, got {chains.shape[1]} draws")
    if not np.all(np.isfinite(chains)):
        return float('nan')
    if float(np.mean(split_chains(chains).var(axis=1, ddof=1))) == 0.0:
        logger.warning("split R-hat is degenerate: zero within-chain variance")
        return float('nan')
    return float(az.rhat(chains, method="split"))


def effective_sample_size(draws) -> float:
    """
    Effective sample size of the mean, capped at the total number of draws.

    Returns:
        ESS, or nan when the draws have zero variance (degenerate)

    Raises:
        InsufficientDrawsError: fewer than 8 draws per chain
    """
    chains = _as_chains(draws)
    n_chain, n_draw = chains.shape
    if n_draw < MIN_DRAWS:
        raise InsufficientDrawsError(f"ESS needs at least 8 draws per chain, got {n_draw}")
    if not np.all(np.isfinite(chains)):
        return float('nan')
    if float(np.var(chains)) == 0.0:
        logger.warning("ESS is degenerate: zero variance")
        return float('nan')
    ess = float(az.ess(chains, method="mean"))
    total = float(n_chain * n_draw)
    if not np.isfinite(ess):
        return float('nan')
    return min(ess, total)


def _safe(statistic, draws) -> float:
    try:
        return statistic(draws)
    except InsufficientDrawsError:
        return float('nan')


def posterior_summary(draws: np.ndarray, names: Sequence[str],
                      quantiles: Optional[Sequence[float]] = (0.05, 0.5, 0.95)) -> pd.DataFrame:
    """
    Per-parameter mean, sd, 5%/50%/95% quantiles, split R-hat and ESS.

    Args:
        draws: array (chains x draws x parameters)
        names: parameter names, one per last-axis entry

    Returns:
        DataFrame indexed by parameter with columns mean, sd, q05, q50, q95, rhat, ess
    """
    array = np.asarray(draws, dtype=float)
    if array.ndim != 3 or array.shape[2] != len(names):
        raise ValueError(f"draws must be (chains, draws, {len(names)}), got {array.shape}")
    if array.shape[0] * array.shape[1] == 0:
        raise ValueError("posterior_summary needs at least one draw")

    rows = []
    for k, name in enumerate(names):
        chains = array[:, :, k]
        pooled = chains.ravel()
        q05, q50, q95 = np.quantile(pooled, quantiles)
        with warnings.catch_warnings():
            warnings.simplefilter('ignore', RuntimeWarning)
            rows.append({
                'parameter': name,
                'mean': float(np.mean(pooled)),
                'sd': float(np.std(pooled, ddof=1)) if pooled.size > 1 else 0.0,
                'q05': float(q05),
                'q50': float(q50),
                'q95': float(q95),
                'rhat': _safe(split_rhat, chains),
                'ess': _safe(effective_sample_size, chains),
            })
    return pd.DataFrame(rows).set_index('parameter')[SUMMARY_COLUMNS]
