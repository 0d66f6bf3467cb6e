"""
Generalized Cox-Snell residuals and simulated QQ envelopes.
"""

import sys
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Dict, Optional

import numpy as np
from scipy import stats

from config import defaults
from config.classes import EnvelopeBand, FitResult, OptimOptions, ResidualReport, Theta, TobitDataset
from core import lsdist
from core.errors import ConvergenceError, FailureBudgetError, NumericalError, FamilyParameterError
from core.inference import fit
from utils.functions import substream


def _raw_residuals(theta: Theta, data: TobitDataset):
    """-log(1 - F(z_i)) with z_i taken at gamma for censored rows; flags capped entries."""
    mu = data.X @ np.asarray(theta.beta)
    z = (data.y - mu) / theta.dispersion
    with np.errstate(invalid="ignore"):
        r = -np.asarray(lsdist.log_sym_cdf(theta.family, -z))
    capped = ~np.isfinite(r) | (r > defaults.RESIDUAL_CAP)
    r = np.where(capped, defaults.RESIDUAL_CAP, r)
    return r, capped


def gcs_residuals_at(theta: Theta, data: TobitDataset, censoring_adjustment: bool = False) -> ResidualReport:
    """GCS residuals at a given parameter value."""
    r, capped = _raw_residuals(theta, data)
    if censoring_adjustment:
        r = np.where(data.censored, r + 1.0, r)
    ks = stats.kstest(r, "expon")
    flags = []
    if capped.any():
        flags.append(f"residuals-capped: {int(capped.sum())}")
    return ResidualReport(
        residuals=r.tolist(),
        censored_flags=data.censored.tolist(),
        capped_flags=capped.tolist(),
        adjusted=censoring_adjustment,
        ks_statistic=float(ks.statistic),
        ks_pvalue=float(ks.pvalue),
        warning_flags=flags,
    )


def gcs_residuals(fitted: FitResult, data: TobitDataset, censoring_adjustment: bool = False) -> ResidualReport:
    """
    GCS residuals of a converged fit.

    Censored rows are evaluated at the censoring point and flagged. With
    censoring_adjustment the censored residuals are shifted by +1.
    """
    if not fitted.converged:
        raise ConvergenceError("residuals need a converged fit", fitted.optim)
    return gcs_residuals_at(fitted.theta_hat, data, censoring_adjustment)


def simulate_response(theta: Theta, data: TobitDataset, rng: np.random.Generator) -> TobitDataset:
    """New responses from the model at theta, same design and censoring point."""
    latent = data.X @ np.asarray(theta.beta) + theta.dispersion * lsdist.sym_sample(theta.family, rng, data.n)
    censored = latent <= data.gamma
    return data.with_response(np.where(censored, data.gamma, latent), censored)


def _replicate(fitted: FitResult, data: TobitDataset, seed: int, j: int,
               options: Optional[OptimOptions]) -> Optional[np.ndarray]:
    rng = substream(seed, defaults.ENVELOPE_STREAM, j)
    theta = fitted.theta_hat
    try:
        simulated = simulate_response(theta, data, rng)
        refit = fit(simulated, theta.family, theta.free_extra, restriction=fitted.fixed or None,
                    theta0=theta, options=options, log_phi=fitted.log_phi, compute_se=False)
    except (NumericalError, FamilyParameterError, ValueError):
        return None
    if not refit.converged:
        return None
    r, _ = _raw_residuals(refit.theta_hat, simulated)
    return np.sort(r)


def qq_envelope(fitted: FitResult, data: TobitDataset, replications: int = defaults.ENVELOPE_REPLICATIONS,
                level: float = defaults.ENVELOPE_LEVEL, seed: int = 0, workers: Optional[int] = None,
                options: Optional[OptimOptions] = None) -> EnvelopeBand:
    """
    Simulated envelope for the sorted GCS residuals against EXP(1) quantiles.

    Args:
        fitted: converged fit on data
        data: the data the fit was computed on
        replications: number of simulated datasets
        level: pointwise coverage of the band, 0 collapses it to the median
        seed: base seed; replication j draws from its own substream
        workers: thread count for the refits
        options: optimizer settings for the refits

    Returns:
        EnvelopeBand
    """
    if not fitted.converged:
        raise ConvergenceError("envelope needs a converged fit", fitted.optim)
    if replications < 1:
        raise ValueError("replications must be positive")
    if not 0.0 <= level < 1.0:
        raise ValueError("level must lie in [0, 1)")
    if not isinstance(seed, (int, np.integer)) or seed < 0:
        raise ValueError(f"seed must be a non-negative integer, got {seed!r}")

    results: Dict[int, Optional[np.ndarray]] = {}
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            futures = {executor.submit(_replicate, fitted, data, seed, j, options): j for j in range(replications)}
            for future in as_completed(futures):
                results[futures[future]] = future.result()
    else:
        for j in range(replications):
            results[j] = _replicate(fitted, data, seed, j, options)

    sims = [results[j] for j in range(replications) if results[j] is not None]
    failures = replications - len(sims)
    allowed = int(defaults.ENVELOPE_FAILURE_BUDGET * replications)
    if failures > allowed:
        raise FailureBudgetError(failures, allowed, "envelope refits")
    if failures:
        print(f"⚠️ {failures} envelope replication(s) failed to refit", file=sys.stderr)

    draws = np.vstack(sims)
    lower = np.quantile(draws, 0.5 * (1.0 - level), axis=0)
    median = np.quantile(draws, 0.5, axis=0)
    upper = np.quantile(draws, 0.5 * (1.0 + level), axis=0)

    r, _ = _raw_residuals(fitted.theta_hat, data)
    order = np.argsort(r, kind="stable")
    observed = r[order]
    n = data.n
    theoretical = -np.log1p(-np.arange(1, n + 1) / (n + 1.0))
    inside = float(np.mean((observed >= lower) & (observed <= upper)))

    return EnvelopeBand(
        theoretical_quantiles=theoretical.tolist(),
        observed=observed.tolist(),
        observed_censored=data.censored[order].tolist(),
        lower=lower.tolist(),
        median=median.tolist(),
        upper=upper.tolist(),
        coverage_level=level,
        replications=replications,
        failures=failures,
        seed=seed,
        observed_inside=inside,
    )
