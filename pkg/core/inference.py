"""
Maximum likelihood fitting, standard errors and LR / gradient tests.
"""

import math
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import special

from config import defaults
from config.classes import (
    FitResult,
    GeneratorFamily,
    FamilyKind,
    OptimOptions,
    TestResult,
    Theta,
    TobitDataset,
)
from core import tobit_model
from core.errors import (
    ConvergenceError,
    FamilyParameterError,
    InformationMatrixError,
    NumericalError,
    RestrictionError,
)
from core.optimizer import maximize, starting_values


# Chi-square tail

def chi2_upper_tail(x: float, r: int) -> float:
    """P(chi2_r > x)."""
    if r < 1:
        raise ValueError("degrees of freedom must be positive")
    if not math.isfinite(x) or x < 0:
        raise ValueError(f"chi-square statistic must be finite and non-negative, got {x!r}")
    if x == 0:
        return 1.0
    if r == 2:
        return math.exp(-0.5 * x)
    return float(special.gammaincc(0.5 * r, 0.5 * x))


def chi2_upper_quantile(delta: float, r: int) -> float:
    """x with P(chi2_r > x) = delta."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if r < 1:
        raise ValueError("degrees of freedom must be positive")
    return 2.0 * float(special.gammainccinv(0.5 * r, delta))


# Working coordinates

class WorkingMap:
    """
    Elementwise map from unconstrained working values to natural values.

    phi and positive extras go through exp, the power-exponential extra
    through tanh, regression coefficients are left alone.
    """

    def __init__(self, transforms: Sequence[str]):
        self.transforms = list(transforms)

    @classmethod
    def for_names(cls, names: Sequence[str], family: GeneratorFamily, log_phi: bool = True) -> "WorkingMap":
        transforms = []
        for name in names:
            if name == "phi":
                transforms.append("log" if log_phi else "identity")
            elif name.startswith("xi") and name[2:].isdigit():
                transforms.append("tanh" if family.kind is FamilyKind.POWER_EXPONENTIAL else "log")
            else:
                transforms.append("identity")
        return cls(transforms)

    def forward(self, natural: Sequence[float]) -> np.ndarray:
        out = np.asarray(natural, dtype=float).copy()
        for i, t in enumerate(self.transforms):
            if t == "log":
                out[i] = math.log(out[i])
            elif t == "tanh":
                out[i] = math.atanh(min(out[i], 1.0 - 1e-12))
        return out

    def backward(self, working: Sequence[float]) -> np.ndarray:
        out = np.asarray(working, dtype=float).copy()
        with np.errstate(over="ignore"):
            for i, t in enumerate(self.transforms):
                if t == "log":
                    out[i] = np.exp(out[i])
                elif t == "tanh":
                    out[i] = np.tanh(out[i])
        return out

    def derivatives(self, working: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
        """First and second derivatives of backward()."""
        w = np.asarray(working, dtype=float)
        d1, d2 = np.ones_like(w), np.zeros_like(w)
        for i, t in enumerate(self.transforms):
            if t == "log":
                d1[i] = d2[i] = math.exp(w[i])
            elif t == "tanh":
                th = math.tanh(w[i])
                d1[i] = 1.0 - th * th
                d2[i] = -2.0 * th * d1[i]
        return d1, d2


def _layout(data: TobitDataset, template: Theta, restriction: Optional[Dict[str, float]]):
    names = tobit_model.parameter_names(data, template.family, template.free_extra)
    fixed = tobit_model.restriction_indices(names, restriction)
    if len(fixed) == len(names):
        raise RestrictionError("restriction leaves no parameter to estimate")
    free_idx = [i for i in range(len(names)) if i not in fixed]
    return names, fixed, free_idx


def standard_errors(theta_hat: Theta, data: TobitDataset, restriction: Optional[Dict[str, float]] = None,
                    log_phi: bool = True) -> np.ndarray:
    """
    Standard errors of the estimated natural coordinates.

    The observed information is formed in working coordinates and mapped
    back with the delta method.
    """
    names, _, free_idx = _layout(data, theta_hat, restriction)
    free_names = [names[i] for i in free_idx]
    wmap = WorkingMap.for_names(free_names, theta_hat.family, log_phi)
    w = wmap.forward(tobit_model.pack(theta_hat)[free_idx])
    d1, d2 = wmap.derivatives(w)

    H = tobit_model.hessian(theta_hat, data)[np.ix_(free_idx, free_idx)]
    g = tobit_model.score(theta_hat, data)[free_idx]
    info = -(d1[:, None] * H * d1[None, :] + np.diag(g * d2))
    eigenvalues = np.linalg.eigvalsh(info)
    if not np.all(np.isfinite(eigenvalues)) or eigenvalues.min() <= 0:
        raise InformationMatrixError(float(np.nanmin(eigenvalues)))
    cov = np.linalg.inv(info)
    return np.abs(d1) * np.sqrt(np.diag(cov))


# Fitting

def fit(data: TobitDataset, family: GeneratorFamily, free_extra: Optional[Sequence[bool]] = None,
        restriction: Optional[Dict[str, float]] = None, theta0: Optional[Theta] = None,
        options: Optional[OptimOptions] = None, log_phi: bool = True, compute_se: bool = True,
        penalize_fixed_extra: bool = False) -> FitResult:
    """
    Maximum likelihood fit of a tobit log-symmetric model.

    Args:
        data: censored dataset
        family: generator family; its xi are the values of fixed extras
        free_extra: which extra parameters to estimate (family default if None)
        restriction: parameter name -> value held fixed during the fit
        theta0: warm start; restricted coordinates are overwritten
        options: optimizer settings
        log_phi: optimize log(phi) instead of phi
        compute_se: attach standard errors from the observed information
        penalize_fixed_extra: count fixed extra parameters in AIC/BIC

    Returns:
        FitResult with estimates, standard errors and information criteria
    """
    if theta0 is not None:
        if theta0.family.kind is not family.kind:
            raise FamilyParameterError("theta0 belongs to a different family")
        template = theta0
    else:
        template = starting_values(data, family, free_extra)

    names, fixed, free_idx = _layout(data, template, restriction)
    natural0 = tobit_model.pack(template)
    for i, value in fixed.items():
        natural0[i] = value
    template = tobit_model.unpack(natural0, template)

    free_names = [names[i] for i in free_idx]
    wmap = WorkingMap.for_names(free_names, template.family, log_phi)

    def to_theta(w):
        natural = natural0.copy()
        natural[free_idx] = wmap.backward(w)
        return tobit_model.unpack(natural, template)

    def objective(w):
        try:
            value = tobit_model.loglik(to_theta(w), data)
        except (FamilyParameterError, NumericalError):
            return defaults.LOGLIK_SENTINEL
        return value if np.isfinite(value) else defaults.LOGLIK_SENTINEL

    def gradient(w):
        try:
            g = tobit_model.score(to_theta(w), data)[free_idx]
        except (FamilyParameterError, NumericalError):
            return np.full(len(free_idx), np.nan)
        return g * wmap.derivatives(w)[0]

    optim = maximize(objective, gradient, wmap.forward(natural0[free_idx]), options)
    theta_hat = to_theta(optim.theta_hat)
    estimates = tobit_model.pack(theta_hat)[free_idx]

    flags = []
    se: List[Optional[float]] = [None] * len(free_idx)
    if not optim.converged:
        flags.append(f"not-converged: {optim.message}")
    if optim.skipped_updates:
        flags.append(f"bfgs-skipped-updates: {optim.skipped_updates}")
    if compute_se and optim.converged:
        try:
            se = [float(s) for s in standard_errors(theta_hat, data, restriction, log_phi)]
        except NumericalError as e:
            flags.append(f"se-unavailable: {e}")

    k = len(free_idx)
    if penalize_fixed_extra:
        k += sum(1 for free in theta_hat.free_extra if not free)
    ll = optim.loglik_at_max
    return FitResult(
        theta_hat=theta_hat,
        parameter_names=free_names,
        estimates=[float(v) for v in estimates],
        se=se,
        loglik=ll,
        aic=-2.0 * ll + 2.0 * k,
        bic=-2.0 * ll + k * math.log(data.n),
        k=k,
        n_total=data.n,
        n_censored=data.n_censored,
        censored_proportion=data.censored_proportion,
        fixed={names[i]: v for i, v in fixed.items()},
        log_phi=log_phi,
        optim=optim,
        warning_flags=flags,
    )


# Hypothesis tests

def _fit_pair(data, family, restriction, free_extra, unrestricted, options, log_phi):
    if not restriction:
        raise RestrictionError("a test needs at least one restricted parameter")
    if unrestricted is None:
        unrestricted = fit(data, family, free_extra, options=options, log_phi=log_phi)
    if not unrestricted.converged:
        raise ConvergenceError("unrestricted fit did not converge", unrestricted.optim)

    tries = (unrestricted.theta_hat, None)
    restricted = None
    for theta0 in tries:
        try:
            restricted = fit(data, family, unrestricted.theta_hat.free_extra, restriction=restriction,
                             theta0=theta0, options=options, log_phi=log_phi)
        except (NumericalError, FamilyParameterError):
            continue
        if restricted.converged:
            return unrestricted, restricted
    raise ConvergenceError("restricted fit did not converge", restricted.optim if restricted else None)


def _lr(unrestricted: FitResult, restricted: FitResult, restriction) -> TestResult:
    statistic = 2.0 * (unrestricted.loglik - restricted.loglik)
    if not math.isfinite(statistic):
        raise NumericalError(f"LR statistic is not finite: {statistic!r}")
    flags = []
    if statistic < 0:
        if statistic < defaults.LR_CLAMP:
            flags.append(f"lr-negative: {statistic:.3e}")
        statistic = 0.0
    df = len(restriction)
    return TestResult(
        kind="LR", statistic=statistic, df=df, p_value=chi2_upper_tail(statistic, df),
        restriction=dict(restriction), warning_flags=flags,
        restricted_fit=restricted, unrestricted_fit=unrestricted,
    )


def _gr(data, unrestricted: FitResult, restricted: FitResult, restriction) -> TestResult:
    theta_tilde = restricted.theta_hat
    U = tobit_model.score(theta_tilde, data)
    diff = tobit_model.pack(unrestricted.theta_hat) - tobit_model.pack(theta_tilde)
    statistic = float(U @ diff)
    if not math.isfinite(statistic):
        raise NumericalError(f"gradient statistic is not finite: {statistic!r}")
    flags = []
    if statistic < 0:
        flags.append(f"gr-negative: {statistic:.3e}")
    df = len(restriction)
    return TestResult(
        kind="GR", statistic=statistic, df=df, p_value=chi2_upper_tail(max(statistic, 0.0), df),
        restriction=dict(restriction), warning_flags=flags,
        restricted_fit=restricted, unrestricted_fit=unrestricted,
    )


def lr_test(data: TobitDataset, family: GeneratorFamily, restriction: Dict[str, float],
            free_extra: Optional[Sequence[bool]] = None, unrestricted: Optional[FitResult] = None,
            options: Optional[OptimOptions] = None, log_phi: bool = True) -> TestResult:
    """Likelihood ratio test of restriction against the unrestricted model."""
    full, restricted = _fit_pair(data, family, restriction, free_extra, unrestricted, options, log_phi)
    return _lr(full, restricted, restriction)


def gr_test(data: TobitDataset, family: GeneratorFamily, restriction: Dict[str, float],
            free_extra: Optional[Sequence[bool]] = None, unrestricted: Optional[FitResult] = None,
            options: Optional[OptimOptions] = None, log_phi: bool = True) -> TestResult:
    """
    Gradient test: score at the restricted fit times the estimate difference.

    Negative statistics are kept and flagged; the p-value uses the positive part.
    """
    full, restricted = _fit_pair(data, family, restriction, free_extra, unrestricted, options, log_phi)
    return _gr(data, full, restricted, restriction)


def run_tests(data: TobitDataset, family: GeneratorFamily, restriction: Dict[str, float], kind: str = "both",
              free_extra: Optional[Sequence[bool]] = None, options: Optional[OptimOptions] = None,
              log_phi: bool = True) -> List[TestResult]:
    """LR and/or GR tests sharing one unrestricted and one restricted fit."""
    if kind not in ("lr", "gr", "both"):
        raise ValueError(f"unknown test kind {kind!r}")
    full, restricted = _fit_pair(data, family, restriction, free_extra, None, options, log_phi)
    out = []
    if kind in ("lr", "both"):
        out.append(_lr(full, restricted, restriction))
    if kind in ("gr", "both"):
        out.append(_gr(data, full, restricted, restriction))
    return out


# Model comparison

Candidate = Union[GeneratorFamily, Tuple[GeneratorFamily, Sequence[bool]]]


def compare_models(data: TobitDataset, candidates: Iterable[Candidate], options: Optional[OptimOptions] = None,
                   penalize_fixed_extra: bool = False) -> List[FitResult]:
    """Fit every candidate family and return the fits ordered by AIC."""
    fits = []
    for candidate in candidates:
        family, free_extra = candidate if isinstance(candidate, tuple) else (candidate, None)
        fits.append(fit(data, family, free_extra, options=options, penalize_fixed_extra=penalize_fixed_extra))
    return sorted(fits, key=lambda f: (not f.converged, f.aic))
