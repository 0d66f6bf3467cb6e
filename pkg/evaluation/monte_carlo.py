"""
Monte Carlo studies: bias/MSE of the estimators and size/power of the LR and
gradient tests under tobit log-symmetric data.

Every replication draws from its own RNG substream keyed by
(seed, cell_id, replication, attempt), so reports do not depend on the
worker count or completion order.
"""

import math
import sys
from concurrent.futures import ProcessPoolExecutor, as_completed
from itertools import product
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np

from config import defaults
from config.classes import BiasMseConfig, GeneratorFamily, McRecord, McReport, PowerConfig, TobitDataset
from core import lsdist
from core.errors import DataContractError, FailureBudgetError, FamilyParameterError, NumericalError
from core.inference import chi2_upper_quantile, fit, run_tests
from utils.functions import substream, write_csv

_DESIGN_KEY = 1_000_003  # replication slot reserved for a fixed design


def uniform_design(n: int, p: int, rng: np.random.Generator) -> np.ndarray:
    """Intercept plus p - 1 independent U(0, 1) covariates."""
    return np.column_stack([np.ones(n), rng.uniform(0.0, 1.0, size=(n, p - 1))])


def simulate_dataset(family: GeneratorFamily, n: int, beta: Sequence[float], phi: Optional[float], rho: float,
                     rng: np.random.Generator, X: Optional[np.ndarray] = None) -> TobitDataset:
    """
    Draw one tobit log-symmetric dataset with censoring proportion rho.

    gamma sits midway between the m-th and (m+1)-th order statistics of the
    latent responses (m = round(rho * n)), so exactly m cases are censored.
    """
    beta = np.asarray(beta, dtype=float)
    p = beta.size
    if X is None:
        X = uniform_design(n, p, rng)
    if X.shape != (n, p):
        raise DataContractError(f"design must be {n} x {p}, got {X.shape}")
    if p > 1 and np.any(np.ptp(X[:, 1:], axis=0) == 0):
        raise DataContractError("degenerate covariate column")
    if not 0.0 <= rho < 1.0:
        raise DataContractError(f"censoring proportion must lie in [0, 1), got {rho}")

    dispersion = phi if family.fixed_phi is None else family.fixed_phi
    latent = X @ beta + dispersion * lsdist.sym_sample(family, rng, n)

    m = int(math.floor(rho * n + 0.5))
    if n - m < p + 1:
        raise DataContractError(f"only {n - m} uncensored cases for {p} coefficients")
    ordered = np.sort(latent)
    gamma = ordered[0] - dispersion if m == 0 else 0.5 * (ordered[m - 1] + ordered[m])
    censored = latent <= gamma
    names = ["intercept"] + [f"x{j}" for j in range(1, p)]
    return TobitDataset(y=np.where(censored, gamma, latent), censored=censored, X=X, gamma=gamma,
                        covariate_names=names)


# Replications (module level so process pools can pickle them)

def _bias_replication(family, n, phi, rho, beta, seed, cell_id, r, X, max_attempts):
    for attempt in range(max_attempts):
        rng = substream(seed, cell_id, r, attempt)
        try:
            data = simulate_dataset(family, n, beta, phi, rho, rng, X)
            result = fit(data, family, compute_se=False)
        except (NumericalError, FamilyParameterError, DataContractError):
            continue
        if result.converged:
            estimates = [result.estimate("phi")] + [result.estimate(name) for name in data.covariate_names]
            return r, attempt, np.asarray(estimates)
    return r, max_attempts, None


def _power_replication(family, n, phi, rho, beta, seed, cell_id, r, X, max_attempts):
    restriction = {f"x{len(beta) - 1}": 0.0}
    for attempt in range(max_attempts):
        rng = substream(seed, cell_id, r, attempt)
        try:
            data = simulate_dataset(family, n, beta, phi, rho, rng, X)
            lr, gr = run_tests(data, family, restriction, kind="both")
        except (NumericalError, FamilyParameterError, DataContractError):
            continue
        return r, attempt, np.array([lr.statistic, gr.statistic])
    return r, max_attempts, None


def _run_cell(task: Callable, args: Tuple, replications: int, workers: Optional[int]) -> Dict[int, Tuple]:
    results = {}
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            futures = {executor.submit(task, *args[:7], r, *args[7:]): r for r in range(replications)}
            for future in as_completed(futures):
                r, attempt, value = future.result()
                results[r] = (attempt, value)
    else:
        for r in range(replications):
            _, attempt, value = task(*args[:7], r, *args[7:])
            results[r] = (attempt, value)
    return results


def _apply_budget(results: Dict[int, Tuple], replications: int, failure_budget: float, context: str):
    """Accept redrawn replications in index order until the budget is spent."""
    allowed = max(1, math.ceil(failure_budget * replications))
    redraws, failures, accepted = 0, 0, []
    for r in range(replications):
        attempt, value = results[r]
        if value is None:
            failures += 1
        elif attempt == 0:
            accepted.append(value)
        elif redraws + attempt <= allowed:
            redraws += attempt
            accepted.append(value)
        else:
            failures += 1
    if failures > allowed or not accepted:
        raise FailureBudgetError(failures, allowed, context)
    return np.vstack(accepted), redraws, failures


def _cell_design(config, cell_id: int, n: int, p: int) -> Optional[np.ndarray]:
    if config.redraw_covariates:
        return None
    return uniform_design(n, p, substream(config.seed, cell_id, _DESIGN_KEY))


def run_bias_mse(config: BiasMseConfig, workers: Optional[int] = None, progress: bool = True) -> McReport:
    """Bias, MSE and Monte Carlo standard errors of (phi, beta) per (n, phi, rho) cell."""
    workers = workers or config.workers
    beta = tuple(config.beta_true)
    names = ["phi"] + [f"beta{j}" for j in range(len(beta))]
    records = []
    cells = list(product(config.n_grid, config.phi_grid, config.rho_grid))
    for cell_id, (n, phi, rho) in enumerate(cells):
        X = _cell_design(config, cell_id, n, len(beta))
        args = (config.family, n, phi, rho, beta, config.seed, cell_id, X, defaults.MC_MAX_ATTEMPTS)
        results = _run_cell(_bias_replication, args, config.replications, workers)
        context = f"n={n} phi={phi:g} rho={rho:g}"
        estimates, redraws, failures = _apply_budget(results, config.replications, config.failure_budget, context)
        errors = estimates - np.array([phi, *beta])
        m = errors.shape[0]
        for j, name in enumerate(names):
            e = errors[:, j]
            records.append(McRecord(
                n=n, phi=phi, rho=rho, parameter=name,
                bias=float(np.mean(e)),
                mse=float(np.mean(e ** 2)),
                mc_standard_error=float(np.std(e, ddof=1) / math.sqrt(m)) if m > 1 else 0.0,
                replications=m, redraws=redraws, failures=failures,
            ))
        if progress:
            print(f"📊 {context}: {m} replications, {redraws} redraws, {failures} failures", file=sys.stderr)
    return McReport(
        study="bias-mse", family=config.family, records=records, replications=config.replications,
        seed=config.seed, covariates_redrawn=config.redraw_covariates, config=config.model_dump(mode="json"),
    )


def run_power(config: PowerConfig, workers: Optional[int] = None, progress: bool = True) -> McReport:
    """Rejection rates of the LR and gradient tests of beta_4 = 0 per (n, rho, beta_4) cell."""
    workers = workers or config.workers
    critical = {level: chi2_upper_quantile(level, 1) for level in config.nominal_levels}
    records = []
    cells = list(product(config.n_grid, config.rho_grid, config.beta4_grid))
    for cell_id, (n, rho, beta4) in enumerate(cells):
        beta = tuple(config.beta_true) + (beta4,)
        X = _cell_design(config, cell_id, n, len(beta))
        args = (config.family, n, config.phi, rho, beta, config.seed, cell_id, X, defaults.MC_MAX_ATTEMPTS)
        results = _run_cell(_power_replication, args, config.replications, workers)
        context = f"n={n} rho={rho:g} beta4={beta4:g}"
        statistics, redraws, failures = _apply_budget(results, config.replications, config.failure_budget, context)
        m = statistics.shape[0]
        for level in config.nominal_levels:
            lr_rate = float(np.mean(statistics[:, 0] > critical[level]))
            gr_rate = float(np.mean(statistics[:, 1] > critical[level]))
            records.append(McRecord(
                n=n, phi=config.phi, rho=rho, beta4=beta4, level=level,
                rejection_rate_lr=lr_rate, rejection_rate_gr=gr_rate,
                mc_standard_error=math.sqrt(lr_rate * (1.0 - lr_rate) / m),
                replications=m, redraws=redraws, failures=failures,
            ))
        if progress:
            print(f"📊 {context}: {m} replications, {redraws} redraws, {failures} failures", file=sys.stderr)
    return McReport(
        study="power", family=config.family, records=records, replications=config.replications,
        seed=config.seed, covariates_redrawn=config.redraw_covariates, config=config.model_dump(mode="json"),
    )


def run_study(config: Union[BiasMseConfig, PowerConfig], workers: Optional[int] = None,
              progress: bool = True) -> McReport:
    if isinstance(config, PowerConfig):
        return run_power(config, workers, progress)
    return run_bias_mse(config, workers, progress)


# Reporting

RECORD_FIELDS = list(McRecord.model_fields)


def report_to_csv(report: McReport, file_path: Optional[str] = None) -> str:
    rows = [record.model_dump() for record in report.records]
    return write_csv(rows, RECORD_FIELDS, file_path)


def render_table(report: McReport) -> str:
    """Plain-text table: bias (MSE) per phi, or LR / GR rejection percentages per beta_4."""
    lines = [f"{report.study} study, {report.family.label}, {report.replications} replications, seed {report.seed}"]
    records = report.records
    if report.study == "bias-mse":
        phis = sorted({r.phi for r in records})
        for rho in sorted({r.rho for r in records}):
            lines.append(f"\nrho = {rho:.2f}")
            lines.append(f"{'n':>5} {'param':>7} " + " ".join(f"{'phi=' + format(p, 'g'):>22}" for p in phis))
            for n in sorted({r.n for r in records}):
                for name in dict.fromkeys(r.parameter for r in records):
                    cells = []
                    for p in phis:
                        rec = next(r for r in records if (r.n, r.rho, r.phi, r.parameter) == (n, rho, p, name))
                        cells.append(f"{rec.bias:>10.4f} ({rec.mse:.4f})".rjust(22))
                    lines.append(f"{n:>5} {name:>7} " + " ".join(cells))
    else:
        beta4s = sorted({r.beta4 for r in records})
        for rho in sorted({r.rho for r in records}):
            for level in sorted({r.level for r in records}):
                lines.append(f"\nrho = {rho:.2f}, nominal level {100 * level:g}%")
                lines.append(f"{'n':>5} {'test':>4} " + " ".join(f"{b:>7.2f}" for b in beta4s))
                for n in sorted({r.n for r in records}):
                    row = {r.beta4: r for r in records if (r.n, r.rho, r.level) == (n, rho, level)}
                    lines.append(f"{n:>5} {'LR':>4} " + " ".join(f"{100 * row[b].rejection_rate_lr:>7.1f}" for b in beta4s))
                    lines.append(f"{'':>5} {'GR':>4} " + " ".join(f"{100 * row[b].rejection_rate_gr:>7.1f}" for b in beta4s))
    return "\n".join(lines) + "\n"
