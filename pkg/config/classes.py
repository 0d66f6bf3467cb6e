from __future__ import annotations

import math
from enum import Enum
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from config import defaults


# Families

class FamilyKind(str, Enum):
    NORMAL = "normal"
    STUDENT_T = "student-t"
    POWER_EXPONENTIAL = "power-exponential"
    BIRNBAUM_SAUNDERS = "birnbaum-saunders"
    BIRNBAUM_SAUNDERS_T = "birnbaum-saunders-t"


class GeneratorFamily(BaseModel):
    """
    A density generator g together with its extra parameters.

    The BS kinds carry a fixed dispersion; every other kind estimates phi.
    """
    model_config = ConfigDict(frozen=True)

    kind: FamilyKind = Field(..., description="Generator kind")
    xi: Tuple[float, ...] = Field(default=(), description="Extra parameters in declaration order")

    @field_validator("xi", mode="before")
    @classmethod
    def coerce_xi(cls, v):
        if v is None:
            return ()
        if isinstance(v, (int, float)):
            return (float(v),)
        return tuple(float(x) for x in v)

    @model_validator(mode="after")
    def check_extra(self):
        expected = defaults.EXTRA_PARAMETER_COUNT[self.kind.value]
        if len(self.xi) != expected:
            raise ValueError(f"{self.kind.value} takes {expected} extra parameter(s), got {len(self.xi)}")
        if not all(math.isfinite(x) for x in self.xi):
            raise ValueError(f"{self.kind.value}: extra parameters must be finite")
        if self.kind is FamilyKind.POWER_EXPONENTIAL:
            if not -1.0 < self.xi[0] <= 1.0:
                raise ValueError(f"power-exponential requires -1 < xi <= 1, got {self.xi[0]}")
        elif self.xi and min(self.xi) <= 0.0:
            raise ValueError(f"{self.kind.value} requires positive extra parameters, got {self.xi}")
        return self

    @classmethod
    def of(cls, kind: str | FamilyKind, *xi: float) -> "GeneratorFamily":
        return cls(kind=kind, xi=xi)

    def with_xi(self, xi) -> "GeneratorFamily":
        return GeneratorFamily(kind=self.kind, xi=tuple(xi))

    @property
    def n_extra(self) -> int:
        return len(self.xi)

    @property
    def fixed_phi(self) -> Optional[float]:
        if self.kind in (FamilyKind.BIRNBAUM_SAUNDERS, FamilyKind.BIRNBAUM_SAUNDERS_T):
            return defaults.BS_FIXED_PHI
        return None

    @property
    def label(self) -> str:
        if not self.xi:
            return self.kind.value
        return f"{self.kind.value}({', '.join(f'{x:g}' for x in self.xi)})"


class LogSymmetricParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    eta: float = Field(..., gt=0, description="Median of T")
    phi: float = Field(..., gt=0, description="Dispersion of log T")
    family: GeneratorFamily


# Data

class TobitDataset(BaseModel):
    """
    Left-censored observations on the log scale.

    Censored responses are stored equal to gamma; uncensored responses must
    lie strictly above it.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    y: np.ndarray = Field(..., description="Response (log scale), censored entries equal gamma")
    censored: np.ndarray = Field(..., description="Boolean censoring indicator")
    X: np.ndarray = Field(..., description="n x p design matrix")
    gamma: float = Field(..., description="Censoring point (log scale)")
    covariate_names: List[str] = Field(default_factory=list, description="Column names of X")

    @model_validator(mode="before")
    @classmethod
    def coerce_arrays(cls, data: Any):
        if not isinstance(data, dict):
            return data
        data = dict(data)
        X = np.array(data.get("X"), dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        censored = np.array(data.get("censored"), dtype=bool).reshape(-1)
        y = np.array(data.get("y"), dtype=float).reshape(-1)
        gamma = float(data.get("gamma"))
        if y.shape == censored.shape:
            y = np.where(censored, gamma, y)
        for arr in (X, censored, y):
            arr.setflags(write=False)
        data.update(X=X, censored=censored, y=y, gamma=gamma)
        if not data.get("covariate_names"):
            data["covariate_names"] = [f"x{j}" for j in range(X.shape[1])]
        return data

    @model_validator(mode="after")
    def check_contract(self):
        n = self.y.shape[0]
        if n == 0:
            raise ValueError("dataset is empty")
        if self.X.shape[0] != n or self.censored.shape[0] != n:
            raise ValueError(f"row mismatch: y has {n}, X has {self.X.shape[0]}, censored has {self.censored.shape[0]}")
        if len(self.covariate_names) != self.X.shape[1]:
            raise ValueError("covariate_names must match the columns of X")
        if not math.isfinite(self.gamma):
            raise ValueError("gamma must be finite")
        if not np.all(np.isfinite(self.X)) or not np.all(np.isfinite(self.y)):
            raise ValueError("y and X must be finite")
        bad = np.flatnonzero(~self.censored & (self.y <= self.gamma))
        if bad.size:
            raise ValueError(f"uncensored responses at or below gamma at rows {bad[:5].tolist()}")
        return self

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    @property
    def p(self) -> int:
        return int(self.X.shape[1])

    @property
    def n_censored(self) -> int:
        return int(self.censored.sum())

    @property
    def censored_proportion(self) -> float:
        return self.n_censored / self.n

    def with_response(self, y: np.ndarray, censored: np.ndarray) -> "TobitDataset":
        return TobitDataset(y=y, censored=censored, X=self.X, gamma=self.gamma,
                            covariate_names=list(self.covariate_names))


# Parameters

class Theta(BaseModel):
    """
    Natural-scale parameter vector: beta, phi (absent for BS kinds) and the family.
    """
    beta: Tuple[float, ...] = Field(..., description="Regression coefficients")
    phi: Optional[float] = Field(default=None, description="Dispersion, None when fixed by the family")
    family: GeneratorFamily
    free_extra: Tuple[bool, ...] = Field(default=(), description="Which extra parameters are estimated")

    @field_validator("beta", mode="before")
    @classmethod
    def coerce_beta(cls, v):
        return tuple(float(b) for b in np.atleast_1d(v))

    @model_validator(mode="after")
    def check_theta(self):
        if not self.free_extra:
            self.free_extra = defaults.DEFAULT_FREE_EXTRA[self.family.kind.value]
        if len(self.free_extra) != self.family.n_extra:
            raise ValueError("free_extra must have one flag per extra parameter")
        fixed = self.family.fixed_phi
        if fixed is not None:
            if self.phi is not None and not math.isclose(self.phi, fixed):
                raise ValueError(f"{self.family.kind.value} fixes phi at {fixed}")
            self.phi = None
        elif self.phi is None or not self.phi > 0 or not math.isfinite(self.phi):
            raise ValueError(f"phi must be positive and finite, got {self.phi}")
        if not all(math.isfinite(b) for b in self.beta):
            raise ValueError("beta must be finite")
        return self

    @property
    def dispersion(self) -> float:
        return self.phi if self.phi is not None else self.family.fixed_phi

    @property
    def phi_free(self) -> bool:
        return self.family.fixed_phi is None


class StandardizedResiduals(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    zeta_c: np.ndarray = Field(..., description="(gamma - mu_i) / phi for censored cases")
    zeta: np.ndarray = Field(..., description="(y_i - mu_i) / phi for uncensored cases")


# Optimization

class LineSearchOptions(BaseModel):
    sufficient_increase: float = Field(default=1e-4, gt=0, lt=1, description="Armijo constant c")
    contraction: float = Field(default=0.5, gt=0, lt=1, description="Step shrink factor")
    max_backtracks: int = Field(default=60, ge=1)


class OptimOptions(BaseModel):
    max_iterations: int = Field(default=500, ge=1)
    gradient_tolerance: float = Field(default=1e-8, gt=0)
    step_tolerance: float = Field(default=1e-12, gt=0)
    scale_first_update: bool = Field(default=True, description="Rescale the identity before the first BFGS update")
    line_search: LineSearchOptions = Field(default_factory=LineSearchOptions)


class OptimResult(BaseModel):
    theta_hat: List[float] = Field(..., description="Maximizer in working coordinates")
    loglik_at_max: float
    iterations: int
    converged: bool
    final_gradient_norm: float = Field(..., description="max |gradient| at the returned point")
    gradient_tolerance: float
    skipped_updates: int = 0
    function_evaluations: int = 0
    message: str = ""

    @model_validator(mode="after")
    def check_converged(self):
        if self.converged and not self.final_gradient_norm <= self.gradient_tolerance:
            raise ValueError("converged requires the final gradient norm within tolerance")
        return self


# Inference

class FitResult(BaseModel):
    theta_hat: Theta
    parameter_names: List[str] = Field(..., description="Names of the estimated coordinates")
    estimates: List[float]
    se: List[Optional[float]] = Field(..., description="Standard errors, None where unavailable")
    loglik: float
    aic: float
    bic: float
    k: int = Field(..., description="Number of estimated parameters")
    n_total: int
    n_censored: int
    censored_proportion: float
    fixed: Dict[str, float] = Field(default_factory=dict, description="Coordinates held fixed")
    log_phi: bool = True
    optim: OptimResult
    warning_flags: List[str] = Field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.optim.converged

    def estimate(self, name: str) -> float:
        if name in self.fixed:
            return self.fixed[name]
        return self.estimates[self.parameter_names.index(name)]


class TestResult(BaseModel):
    __test__ = False

    model_config = ConfigDict(populate_by_name=True)

    kind: Literal["LR", "GR"]
    statistic: float
    df: int = Field(..., ge=1)
    p_value: float = Field(..., ge=0.0, le=1.0)
    restriction: Dict[str, float] = Field(default_factory=dict)
    warning_flags: List[str] = Field(default_factory=list)
    restricted_fit: FitResult = Field(..., alias="restricted")
    unrestricted_fit: FitResult = Field(..., alias="unrestricted")


# Diagnostics

class ResidualReport(BaseModel):
    residuals: List[float]
    censored_flags: List[bool]
    capped_flags: List[bool]
    adjusted: bool = Field(default=False, description="Censored residuals shifted by +1")
    ks_statistic: float
    ks_pvalue: float
    warning_flags: List[str] = Field(default_factory=list)


class EnvelopeBand(BaseModel):
    theoretical_quantiles: List[float]
    observed: List[float] = Field(..., description="Sorted residuals of the fitted model")
    observed_censored: List[bool]
    lower: List[float]
    median: List[float]
    upper: List[float]
    coverage_level: float = Field(..., ge=0.0, lt=1.0)
    replications: int
    failures: int
    seed: int
    observed_inside: float = Field(..., description="Share of observed residuals inside the band")

    @model_validator(mode="after")
    def check_band(self):
        n = len(self.theoretical_quantiles)
        if not (len(self.lower) == len(self.median) == len(self.upper) == len(self.observed) == n):
            raise ValueError("envelope vectors must share one length")
        lo, md, up = (np.asarray(v) for v in (self.lower, self.median, self.upper))
        if np.any(lo > md + 1e-12) or np.any(md > up + 1e-12):
            raise ValueError("envelope must satisfy lower <= median <= upper")
        return self


# Monte Carlo

class _StudyConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    schema_version: int = Field(default=defaults.STUDY_SCHEMA_VERSION, description="Study config schema version")
    family: GeneratorFamily
    n_grid: List[int]
    rho_grid: List[float]
    replications: int = Field(default=defaults.MC_REPLICATIONS, ge=1)
    seed: int = Field(default=0, ge=0)
    workers: Optional[int] = Field(default=None, ge=1)
    redraw_covariates: bool = Field(default=True, description="Fresh covariates in every replication")
    failure_budget: float = Field(default=defaults.MC_FAILURE_BUDGET, ge=0.0, lt=1.0)

    @field_validator("schema_version")
    @classmethod
    def check_version(cls, v):
        if v != defaults.STUDY_SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {v}; this build reads version {defaults.STUDY_SCHEMA_VERSION}")
        return v

    @field_validator("n_grid")
    @classmethod
    def check_n(cls, v):
        if not v or min(v) < 5:
            raise ValueError("n_grid needs sample sizes of at least 5")
        return v

    @field_validator("rho_grid")
    @classmethod
    def check_rho(cls, v):
        if not v or any(not 0.0 <= r < 1.0 for r in v):
            raise ValueError("censoring proportions must lie in [0, 1)")
        return v

    @model_validator(mode="after")
    def check_family(self):
        if self.family.fixed_phi is not None:
            raise ValueError("Monte Carlo studies cover the families with an estimated dispersion")
        return self


class BiasMseConfig(_StudyConfig):
    n_grid: List[int] = Field(default_factory=lambda: list(defaults.BIAS_MSE_N_GRID))
    phi_grid: List[float] = Field(default_factory=lambda: list(defaults.BIAS_MSE_PHI_GRID))
    rho_grid: List[float] = Field(default_factory=lambda: list(defaults.BIAS_MSE_RHO_GRID))
    beta_true: Tuple[float, ...] = Field(default=defaults.BIAS_MSE_BETA)

    @field_validator("phi_grid")
    @classmethod
    def check_phi(cls, v):
        if not v or min(v) <= 0:
            raise ValueError("phi_grid must hold positive dispersions")
        return v


class PowerConfig(_StudyConfig):
    n_grid: List[int] = Field(default_factory=lambda: list(defaults.POWER_N_GRID))
    rho_grid: List[float] = Field(default_factory=lambda: list(defaults.POWER_RHO_GRID))
    phi: float = Field(default=defaults.POWER_PHI, gt=0)
    beta_true: Tuple[float, ...] = Field(default=defaults.POWER_BETA, description="beta_0 .. beta_3")
    beta4_grid: List[float] = Field(default_factory=lambda: list(defaults.POWER_BETA4_GRID))
    nominal_levels: List[float] = Field(default_factory=lambda: list(defaults.NOMINAL_LEVELS))

    @field_validator("nominal_levels")
    @classmethod
    def check_levels(cls, v):
        if not v or any(not 0.0 < a < 1.0 for a in v):
            raise ValueError("nominal levels must lie in (0, 1)")
        return sorted(v)


class McRecord(BaseModel):
    n: int
    phi: float
    rho: float
    parameter: Optional[str] = None
    beta4: Optional[float] = None
    level: Optional[float] = None
    bias: Optional[float] = None
    mse: Optional[float] = None
    rejection_rate_lr: Optional[float] = None
    rejection_rate_gr: Optional[float] = None
    mc_standard_error: float = Field(..., description="Monte Carlo standard error of bias or LR rejection rate")
    replications: int = Field(..., description="Successful replications behind the record")
    redraws: int = 0
    failures: int = 0


class McReport(BaseModel):
    study: Literal["bias-mse", "power"]
    family: GeneratorFamily
    records: List[McRecord]
    replications: int
    seed: int
    covariates_redrawn: bool
    censoring_mechanism: str = "empirical quantile of the latent response"
    config: Dict[str, Any] = Field(default_factory=dict)
