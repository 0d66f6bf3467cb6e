"""
Tobit log-symmetric model: log-likelihood, score and observed Hessian.

Censored cases contribute log F_Z(zeta_c); uncensored cases contribute
-log(phi) + log f_Z(zeta). Score and Hessian are analytic in (beta, phi);
estimated extra parameters are differentiated numerically.
"""

from typing import Dict, List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from config import defaults
from config.classes import GeneratorFamily, StandardizedResiduals, Theta, TobitDataset
from core import lsdist
from core.errors import FamilyParameterError, NumericalError, RestrictionError


def standardize(theta: Theta, data: TobitDataset) -> StandardizedResiduals:
    phi = theta.dispersion
    if not phi > 0:
        raise FamilyParameterError(f"phi must be positive, got {phi}")
    if len(theta.beta) != data.p:
        raise FamilyParameterError(f"beta has {len(theta.beta)} entries, design has {data.p} columns")
    mu = data.X @ np.asarray(theta.beta)
    c = data.censored
    return StandardizedResiduals(
        zeta_c=(data.gamma - mu[c]) / phi,
        zeta=(data.y[~c] - mu[~c]) / phi,
    )


def loglik_contributions(theta: Theta, data: TobitDataset) -> np.ndarray:
    """Per-observation log-likelihood in row order."""
    res = standardize(theta, data)
    family = theta.family
    out = np.empty(data.n)
    c = data.censored
    out[c] = lsdist.log_sym_cdf(family, res.zeta_c)
    out[~c] = -np.log(theta.dispersion) + np.asarray(lsdist.log_sym_pdf(family, res.zeta))
    return out


def loglik(theta: Theta, data: TobitDataset) -> float:
    """Log-likelihood; -inf when a censored probability underflows."""
    total = float(np.sum(loglik_contributions(theta, data)))
    if np.isnan(total):
        raise NumericalError("log-likelihood evaluated to NaN")
    return total


# Parameter layout

def parameter_names(data: TobitDataset, family: GeneratorFamily, free_extra: Sequence[bool]) -> List[str]:
    """Natural coordinates in order: beta, phi (when estimated), free extras."""
    names = list(data.covariate_names)
    if family.fixed_phi is None:
        names.append("phi")
    names += [f"xi{j + 1}" for j, free in enumerate(free_extra) if free]
    return names


def pack(theta: Theta) -> np.ndarray:
    values = list(theta.beta)
    if theta.phi_free:
        values.append(theta.phi)
    values += [x for x, free in zip(theta.family.xi, theta.free_extra) if free]
    return np.asarray(values, dtype=float)


def unpack(vector: Sequence[float], template: Theta) -> Theta:
    """Inverse of pack; fixed extras are taken from the template."""
    vector = np.asarray(vector, dtype=float)
    p = len(template.beta)
    beta = vector[:p]
    pos = p
    phi = None
    if template.phi_free:
        phi = float(vector[pos])
        pos += 1
    xi = list(template.family.xi)
    for j, free in enumerate(template.free_extra):
        if free:
            xi[j] = float(vector[pos])
            pos += 1
    try:
        family = template.family.with_xi(xi) if template.free_extra and any(template.free_extra) else template.family
        return Theta(beta=beta, phi=phi, family=family, free_extra=template.free_extra)
    except ValidationError as e:
        raise FamilyParameterError(str(e)) from e


# Derivatives

def _beta_phi_score(theta: Theta, data: TobitDataset) -> np.ndarray:
    family = theta.family
    phi = theta.dispersion
    res = standardize(theta, data)
    c = data.censored
    Xc, Xu = data.X[c], data.X[~c]
    omega = np.asarray(lsdist.inverse_mills(family, res.zeta_c))
    h1 = np.asarray(lsdist.dlog_sym_pdf(family, res.zeta))

    g_beta = -(Xc.T @ omega + Xu.T @ h1) / phi
    parts = [g_beta]
    if theta.phi_free:
        g_phi = -np.sum(omega * res.zeta_c) / phi - np.sum(1.0 + h1 * res.zeta) / phi
        parts.append([g_phi])
    return np.concatenate(parts)


def _shifted(theta: Theta, j: int, delta: float) -> Theta:
    xi = list(theta.family.xi)
    xi[j] += delta
    try:
        family = theta.family.with_xi(xi)
    except ValidationError as e:
        raise FamilyParameterError(str(e)) from e
    return Theta(beta=theta.beta, phi=theta.phi, family=family, free_extra=theta.free_extra)


def _extra_difference(theta: Theta, j: int, func, step: float):
    """Central difference of func in extra j, one-sided at the edge of the domain."""
    h = step * max(1.0, abs(theta.family.xi[j]))
    try:
        up = func(_shifted(theta, j, h))
    except FamilyParameterError:
        return (func(theta) - func(_shifted(theta, j, -h))) / h
    try:
        down = func(_shifted(theta, j, -h))
    except FamilyParameterError:
        return (up - func(theta)) / h
    return (up - down) / (2.0 * h)


def _free_extra_indices(theta: Theta) -> List[int]:
    return [j for j, free in enumerate(theta.free_extra) if free]


def score(theta: Theta, data: TobitDataset) -> np.ndarray:
    """Gradient of loglik in the natural coordinates of pack(theta)."""
    g = _beta_phi_score(theta, data)
    extras = [_extra_difference(theta, j, lambda t: loglik(t, data), defaults.FD_STEP_EXTRA)
              for j in _free_extra_indices(theta)]
    out = np.concatenate([g, extras]) if extras else g
    if not np.all(np.isfinite(out)):
        raise NumericalError("score is not finite")
    return out


def _beta_phi_hessian(theta: Theta, data: TobitDataset) -> np.ndarray:
    family = theta.family
    phi = theta.dispersion
    res = standardize(theta, data)
    c = data.censored
    Xc, Xu = data.X[c], data.X[~c]
    zc, zu = res.zeta_c, res.zeta

    omega = np.asarray(lsdist.inverse_mills(family, zc))
    d_omega = omega * (np.asarray(lsdist.dlog_sym_pdf(family, zc)) - omega)
    h1 = np.asarray(lsdist.dlog_sym_pdf(family, zu))
    h2 = np.asarray(lsdist.d2log_sym_pdf(family, zu))

    H_bb = (Xc.T * d_omega) @ Xc + (Xu.T * h2) @ Xu
    if not theta.phi_free:
        return H_bb / phi ** 2
    H_bp = Xc.T @ (d_omega * zc + omega) + Xu.T @ (h2 * zu + h1)
    H_pp = np.sum(d_omega * zc ** 2 + 2.0 * omega * zc) + np.sum(1.0 + h2 * zu ** 2 + 2.0 * h1 * zu)
    p = data.p
    H = np.empty((p + 1, p + 1))
    H[:p, :p] = H_bb
    H[:p, p] = H[p, :p] = H_bp
    H[p, p] = H_pp
    return H / phi ** 2


def hessian(theta: Theta, data: TobitDataset) -> np.ndarray:
    """Observed Hessian of loglik in the natural coordinates of pack(theta)."""
    H0 = _beta_phi_hessian(theta, data)
    free = _free_extra_indices(theta)
    if not free:
        H = H0
    else:
        m = H0.shape[0]
        H = np.zeros((m + len(free), m + len(free)))
        H[:m, :m] = H0
        for a, j in enumerate(free):
            cross = _extra_difference(theta, j, lambda t: _beta_phi_score(t, data), defaults.FD_STEP_EXTRA)
            H[:m, m + a] = H[m + a, :m] = cross
            for b, l in enumerate(free[a:], start=a):
                inner = lambda t, l=l: _extra_difference(t, l, lambda s: loglik(s, data), defaults.FD_STEP_EXTRA)
                H[m + a, m + b] = H[m + b, m + a] = _extra_difference(
                    theta, j, inner, defaults.FD_STEP_EXTRA_SECOND
                )
    if not np.all(np.isfinite(H)):
        raise NumericalError("Hessian is not finite")
    return 0.5 * (H + H.T)


def restriction_indices(names: Sequence[str], restriction: Optional[Dict[str, float]]) -> Dict[int, float]:
    """Map a name->value restriction onto coordinate indices."""
    out = {}
    for name, value in (restriction or {}).items():
        if name not in names:
            raise RestrictionError(f"unknown parameter {name!r}; expected one of {list(names)}")
        out[list(names).index(name)] = float(value)
    return out
