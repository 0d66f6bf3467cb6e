"""
Maximization of the tobit log-likelihood.

maximize() is a BFGS quasi-Newton ascent with a backtracking Armijo line
search. It only ever sees working coordinates; the caller maps them.
"""

from typing import Callable, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from config import defaults
from config.classes import GeneratorFamily, LineSearchOptions, OptimOptions, OptimResult, Theta, TobitDataset
from core.errors import DataContractError, NumericalError


Objective = Callable[[np.ndarray], float]
Gradient = Callable[[np.ndarray], np.ndarray]


def _usable(f: float) -> bool:
    return np.isfinite(f) and f > defaults.LOGLIK_SENTINEL


def _line_search(objective, gradient, x, f, g, direction, slope, ls: LineSearchOptions):
    """
    Backtracking Armijo search for an ascent direction.

    Returns (x_new, f_new, g_new, evaluations) or None when no step is accepted.
    Once the predicted increase drops below floating-point resolution of f,
    a step is accepted only if it reduces the gradient norm.
    """
    alpha = 1.0
    resolution = 64.0 * defaults.EPS * (1.0 + abs(f))
    g_norm = np.max(np.abs(g))
    evaluations = 0
    for _ in range(ls.max_backtracks):
        x_new = x + alpha * direction
        f_new = objective(x_new)
        evaluations += 1
        if _usable(f_new):
            if f_new >= f + ls.sufficient_increase * alpha * slope:
                g_new = gradient(x_new)
                if np.all(np.isfinite(g_new)):
                    return x_new, f_new, g_new, evaluations
            elif alpha * slope <= resolution and f_new >= f - resolution:
                g_new = gradient(x_new)
                if np.all(np.isfinite(g_new)) and np.max(np.abs(g_new)) < g_norm:
                    return x_new, f_new, g_new, evaluations
        alpha *= ls.contraction
    return None


def maximize(objective: Objective, gradient: Gradient, theta0: Sequence[float],
             options: Optional[OptimOptions] = None) -> OptimResult:
    """
    Maximize objective starting from theta0.

    Args:
        objective: log-likelihood in working coordinates; non-finite or the
            sentinel value marks points outside the support
        gradient: analytic gradient of objective
        theta0: starting point
        options: iteration limits and tolerances

    Returns:
        OptimResult; converged is True only when max |gradient| <= tolerance
    """
    options = options or OptimOptions()
    x = np.array(theta0, dtype=float)
    f = objective(x)
    if not _usable(f):
        raise NumericalError("objective is not finite at the starting point")
    g = gradient(x)
    if not np.all(np.isfinite(g)):
        raise NumericalError("gradient is not finite at the starting point")

    m = x.size
    H = np.eye(m)
    scaled = not options.scale_first_update
    evaluations = 1
    skipped = 0
    message = "maximum iterations reached"
    iteration = 0

    while iteration < options.max_iterations:
        if np.max(np.abs(g)) <= options.gradient_tolerance:
            message = "gradient tolerance reached"
            break
        iteration += 1

        direction = H @ g
        slope = float(g @ direction)
        if not slope > 0 or not np.isfinite(slope):
            H = np.eye(m)
            direction = g.copy()
            slope = float(g @ g)

        step = _line_search(objective, gradient, x, f, g, direction, slope, options.line_search)
        if step is None:
            message = "line search failed"
            break
        x_new, f_new, g_new, used = step
        evaluations += used

        s = x_new - x
        y = g - g_new
        x, f, g = x_new, f_new, g_new

        if np.max(np.abs(s)) <= options.step_tolerance * (1.0 + np.max(np.abs(x))):
            message = "step tolerance reached"
            break

        sy = float(s @ y)
        if sy <= defaults.CURVATURE_TOLERANCE * np.linalg.norm(s) * np.linalg.norm(y):
            skipped += 1
            continue
        if not scaled:
            H = (sy / float(y @ y)) * np.eye(m)
            scaled = True
        rho = 1.0 / sy
        V = np.eye(m) - rho * np.outer(s, y)
        H = V @ H @ V.T + rho * np.outer(s, s)

    g_norm = float(np.max(np.abs(g))) if g.size else 0.0
    converged = g_norm <= options.gradient_tolerance
    if converged:
        message = "gradient tolerance reached"
    return OptimResult(
        theta_hat=x.tolist(),
        loglik_at_max=float(f),
        iterations=iteration,
        converged=converged,
        final_gradient_norm=g_norm,
        gradient_tolerance=options.gradient_tolerance,
        skipped_updates=skipped,
        function_evaluations=evaluations,
        message=message,
    )


def _steps(theta: np.ndarray, h: float) -> np.ndarray:
    return h * np.maximum(1.0, np.abs(theta))


def numerical_gradient(f: Objective, theta: Sequence[float], h: float = defaults.FD_STEP) -> np.ndarray:
    """Central-difference gradient with step h * max(1, |theta_j|)."""
    theta = np.asarray(theta, dtype=float)
    steps = _steps(theta, h)
    out = np.empty(theta.size)
    for j in range(theta.size):
        e = np.zeros(theta.size)
        e[j] = steps[j]
        up, down = f(theta + e), f(theta - e)
        if not (np.isfinite(up) and np.isfinite(down)):
            raise NumericalError(f"non-finite evaluation while differencing coordinate {j}")
        out[j] = (up - down) / (2.0 * steps[j])
    return out


def numerical_jacobian(g: Gradient, theta: Sequence[float], h: float = defaults.FD_STEP) -> np.ndarray:
    """Central-difference Jacobian; column j holds d g / d theta_j."""
    theta = np.asarray(theta, dtype=float)
    steps = _steps(theta, h)
    columns = []
    for j in range(theta.size):
        e = np.zeros(theta.size)
        e[j] = steps[j]
        up, down = np.asarray(g(theta + e)), np.asarray(g(theta - e))
        if not (np.all(np.isfinite(up)) and np.all(np.isfinite(down))):
            raise NumericalError(f"non-finite evaluation while differencing coordinate {j}")
        columns.append((up - down) / (2.0 * steps[j]))
    return np.column_stack(columns)


def starting_values(data: TobitDataset, family: GeneratorFamily,
                    free_extra: Optional[Sequence[bool]] = None) -> Theta:
    """
    Least-squares start on the uncensored cases.

    Estimated extra parameters start at the family defaults.
    """
    keep = ~data.censored
    Xu, yu = data.X[keep], data.y[keep]
    if Xu.shape[0] < data.p + 1:
        raise DataContractError(
            f"{Xu.shape[0]} uncensored cases cannot identify {data.p} coefficients and a dispersion"
        )
    if np.linalg.matrix_rank(Xu) < data.p:
        raise DataContractError("design restricted to uncensored cases is rank deficient")
    beta, *_ = np.linalg.lstsq(Xu, yu, rcond=None)
    resid = yu - Xu @ beta
    phi = max(float(np.std(resid)), defaults.PHI_FLOOR)

    free = tuple(free_extra) if free_extra is not None else defaults.DEFAULT_FREE_EXTRA[family.kind.value]
    if len(free) != family.n_extra:
        raise DataContractError(f"{family.kind.value} needs {family.n_extra} free_extra flag(s)")
    if any(free):
        start = defaults.EXTRA_PARAMETER_START[family.kind.value]
        family = family.with_xi([s if f else x for x, s, f in zip(family.xi, start, free)])
    try:
        return Theta(beta=beta, phi=None if family.fixed_phi else phi, family=family, free_extra=free)
    except ValidationError as e:
        raise DataContractError(str(e)) from e
