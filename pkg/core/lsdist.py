"""
Standard symmetric generators and the log-symmetric laws built on them.

A generator g defines the standard density f_Z(z) = c * g_raw(z^2). T is
log-symmetric when log T = log(eta) + phi * Z. Every function accepts a
scalar or an array and returns the same shape.
"""

import math
from functools import lru_cache

import numpy as np
from scipy import special
from scipy.integrate import quad
from scipy.optimize import brentq

from config import defaults
from config.classes import FamilyKind, GeneratorFamily, LogSymmetricParams
from core.errors import FamilyParameterError, NumericalError


_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_LOG2 = math.log(2.0)


def _asarray(x):
    arr = np.asarray(x, dtype=float)
    return arr, arr.ndim == 0


def _out(arr, scalar):
    return float(arr) if scalar else arr


def _pe_exponent(family: GeneratorFamily) -> float:
    """k = 1/(1+xi) in g(u) = exp(-u^k / 2)."""
    return 1.0 / (1.0 + family.xi[0])


def _log_cosh(s):
    return np.logaddexp(s, -s) - _LOG2


# Generator kernels

def _log_kernel(family: GeneratorFamily, u: np.ndarray) -> np.ndarray:
    """Unnormalized log g_raw(u)."""
    kind = family.kind
    with np.errstate(over="ignore", invalid="ignore"):
        if kind is FamilyKind.NORMAL:
            return -0.5 * u
        if kind is FamilyKind.STUDENT_T:
            xi = family.xi[0]
            return -0.5 * (xi + 1.0) * np.log1p(u / xi)
        if kind is FamilyKind.POWER_EXPONENTIAL:
            return -0.5 * np.power(u, _pe_exponent(family))
        s = np.sqrt(u)
        if kind is FamilyKind.BIRNBAUM_SAUNDERS:
            xi = family.xi[0]
            return _log_cosh(s) - (2.0 / xi ** 2) * np.sinh(s) ** 2
        xi1, xi2 = family.xi
        return _log_cosh(s) - 0.5 * (xi2 + 1.0) * np.log(xi2 * xi1 ** 2 + 4.0 * np.sinh(s) ** 2)


def _log_constant(family: GeneratorFamily) -> float:
    kind = family.kind
    if kind is FamilyKind.NORMAL:
        return -_LOG_SQRT_2PI
    if kind is FamilyKind.STUDENT_T:
        xi = family.xi[0]
        return special.gammaln(0.5 * (xi + 1.0)) - special.gammaln(0.5 * xi) - 0.5 * math.log(math.pi * xi)
    if kind is FamilyKind.POWER_EXPONENTIAL:
        a = 0.5 * (1.0 + family.xi[0])
        return -math.log(1.0 + family.xi[0]) - a * _LOG2 - special.gammaln(a)
    if kind is FamilyKind.BIRNBAUM_SAUNDERS:
        return _LOG2 - math.log(family.xi[0]) - _LOG_SQRT_2PI
    xi1, xi2 = family.xi
    log_t = special.gammaln(0.5 * (xi2 + 1.0)) - special.gammaln(0.5 * xi2) - 0.5 * math.log(math.pi * xi2)
    return _LOG2 - math.log(xi1) + log_t + 0.5 * (xi2 + 1.0) * math.log(xi2 * xi1 ** 2)


def _kernel_mass(family: GeneratorFamily, log_c: float) -> float:
    def integrand(z):
        return math.exp(log_c + float(_log_kernel(family, np.float64(z * z))))

    body, _ = quad(integrand, 0.0, 1.0, epsabs=1e-13, epsrel=1e-12, limit=200)
    tail, _ = quad(integrand, 1.0, np.inf, epsabs=1e-13, epsrel=1e-12, limit=200)
    return 2.0 * (body + tail)


@lru_cache(maxsize=256)
def normalizing_constant(family: GeneratorFamily) -> float:
    """
    Constant c making c * g_raw(z^2) a density on the real line.

    The closed form is checked once per family against quadrature.
    """
    log_c = _log_constant(family)
    mass = _kernel_mass(family, log_c)
    if not abs(mass - 1.0) < 1e-6:
        raise NumericalError(f"{family.label}: normalized kernel integrates to {mass:.10f}")
    return math.exp(log_c)


def log_g(family: GeneratorFamily, u):
    """Normalized log g(u) for u >= 0."""
    arr, scalar = _asarray(u)
    if np.any(arr < 0):
        raise FamilyParameterError("generator argument u must be non-negative")
    return _out(math.log(normalizing_constant(family)) + _log_kernel(family, arr), scalar)


# Standard symmetric law

def log_sym_pdf(family: GeneratorFamily, z):
    arr, scalar = _asarray(z)
    return _out(math.log(normalizing_constant(family)) + _log_kernel(family, arr * arr), scalar)


def sym_pdf(family: GeneratorFamily, z):
    return np.exp(log_sym_pdf(family, z))


def _pe_lower_tail(family: GeneratorFamily, absz):
    """P(Z <= -|z|) for the power-exponential kind."""
    k = _pe_exponent(family)
    return 0.5 * special.gammaincc(0.5 / k, 0.5 * np.power(absz, 2.0 * k))


def _sinh_map(family: GeneratorFamily, z):
    return (2.0 / family.xi[0]) * np.sinh(z)


def sym_cdf(family: GeneratorFamily, z):
    arr, scalar = _asarray(z)
    kind = family.kind
    with np.errstate(over="ignore"):
        if kind is FamilyKind.NORMAL:
            out = special.ndtr(arr)
        elif kind is FamilyKind.STUDENT_T:
            out = special.stdtr(family.xi[0], arr)
        elif kind is FamilyKind.POWER_EXPONENTIAL:
            tail = _pe_lower_tail(family, np.abs(arr))
            out = np.where(arr < 0, tail, 1.0 - tail)
        elif kind is FamilyKind.BIRNBAUM_SAUNDERS:
            out = special.ndtr(_sinh_map(family, arr))
        else:
            out = special.stdtr(family.xi[1], _sinh_map(family, arr))
    return _out(out, scalar)


def log_sym_cdf(family: GeneratorFamily, z):
    """log F_Z(z), accurate far into the lower tail; -inf on underflow."""
    arr, scalar = _asarray(z)
    kind = family.kind
    with np.errstate(over="ignore", divide="ignore"):
        if kind is FamilyKind.NORMAL:
            out = special.log_ndtr(arr)
        elif kind is FamilyKind.BIRNBAUM_SAUNDERS:
            out = special.log_ndtr(_sinh_map(family, arr))
        elif kind is FamilyKind.POWER_EXPONENTIAL:
            tail = _pe_lower_tail(family, np.abs(arr))
            out = np.where(arr < 0, np.log(tail), np.log1p(-tail))
        else:
            if kind is FamilyKind.STUDENT_T:
                nu, w = family.xi[0], arr
            else:
                nu, w = family.xi[1], _sinh_map(family, arr)
            lower = special.stdtr(nu, -np.abs(w))
            out = np.where(w < 0, np.log(lower), np.log1p(-lower))
    return _out(out, scalar)


def _check_probability(arr):
    if np.any(~(arr > 0.0) | ~(arr < 1.0)):
        raise FamilyParameterError("probabilities must lie strictly inside (0, 1)")


def _bracketed_quantile(family: GeneratorFamily, p: float) -> float:
    lo, hi = -1.0, 1.0
    while sym_cdf(family, lo) > p:
        lo *= 2.0
    while sym_cdf(family, hi) < p:
        hi *= 2.0
    return brentq(lambda z: sym_cdf(family, z) - p, lo, hi, xtol=1e-14, rtol=4 * defaults.EPS, maxiter=500)


def sym_quantile(family: GeneratorFamily, p, method: str = "closed"):
    """
    Inverse of sym_cdf.

    Args:
        family: generator family
        p: probability (or array) strictly inside (0, 1)
        method: "closed" uses the analytic inverse, "bracket" root-finds the CDF

    Returns:
        z with F_Z(z) = p
    """
    arr, scalar = _asarray(p)
    _check_probability(arr)
    if method == "bracket":
        out = np.vectorize(lambda q: _bracketed_quantile(family, q), otypes=[float])(arr)
        return _out(out, scalar)
    if method != "closed":
        raise ValueError(f"unknown quantile method {method!r}")
    kind = family.kind
    if kind is FamilyKind.NORMAL:
        out = special.ndtri(arr)
    elif kind is FamilyKind.STUDENT_T:
        out = special.stdtrit(family.xi[0], arr)
    elif kind is FamilyKind.POWER_EXPONENTIAL:
        k = _pe_exponent(family)
        tail = np.where(arr < 0.5, arr, 1.0 - arr)
        x = special.gammainccinv(0.5 / k, 2.0 * tail)
        out = np.sign(arr - 0.5) * np.power(2.0 * x, 0.5 / k)
    elif kind is FamilyKind.BIRNBAUM_SAUNDERS:
        out = np.arcsinh(0.5 * family.xi[0] * special.ndtri(arr))
    else:
        out = np.arcsinh(0.5 * family.xi[0] * special.stdtrit(family.xi[1], arr))
    return _out(out, scalar)


def sym_sample(family: GeneratorFamily, rng: np.random.Generator, n: int) -> np.ndarray:
    kind = family.kind
    if kind is FamilyKind.NORMAL:
        return rng.standard_normal(n)
    if kind is FamilyKind.STUDENT_T:
        return rng.standard_t(family.xi[0], n)
    if kind is FamilyKind.POWER_EXPONENTIAL:
        # |Z|^(2k) / 2 is Gamma(1/(2k)) distributed
        shape = 0.5 * (1.0 + family.xi[0])
        magnitude = np.power(2.0 * rng.gamma(shape, size=n), shape)
        sign = 2.0 * rng.integers(0, 2, size=n) - 1.0
        return sign * magnitude
    if kind is FamilyKind.BIRNBAUM_SAUNDERS:
        return np.arcsinh(0.5 * family.xi[0] * rng.standard_normal(n))
    return np.arcsinh(0.5 * family.xi[0] * rng.standard_t(family.xi[1], n))


# Log-symmetric law of T

def _standardize_t(params: LogSymmetricParams, t):
    arr, scalar = _asarray(t)
    if np.any(~(arr > 0)):
        raise FamilyParameterError("log-symmetric support is t > 0")
    return (np.log(arr) - math.log(params.eta)) / params.phi, arr, scalar


def ls_pdf(params: LogSymmetricParams, t):
    z, arr, scalar = _standardize_t(params, t)
    return _out(np.asarray(sym_pdf(params.family, z)) / (params.phi * arr), scalar)


def ls_cdf(params: LogSymmetricParams, t):
    z, _, scalar = _standardize_t(params, t)
    return _out(np.asarray(sym_cdf(params.family, z)), scalar)


def ls_quantile(params: LogSymmetricParams, p):
    arr, scalar = _asarray(p)
    z = np.asarray(sym_quantile(params.family, arr))
    return _out(params.eta * np.exp(params.phi * z), scalar)


def ls_sample(params: LogSymmetricParams, rng: np.random.Generator, n: int) -> np.ndarray:
    return params.eta * np.exp(params.phi * sym_sample(params.family, rng, n))


# Weights v(u) = g'(u)/g(u) and their derivatives

def _bs_p(u):
    """d/du log cosh(sqrt u) and its derivative."""
    small = u < defaults.SERIES_CUTOFF
    s = np.sqrt(np.where(small, 1.0, u))
    with np.errstate(over="ignore", invalid="ignore"):
        p = np.where(small, 0.5 - u / 6.0 + u ** 2 / 15.0 - 17.0 * u ** 3 / 630.0, np.tanh(s) / (2.0 * s))
        dp = np.where(
            small,
            -1.0 / 6.0 + 2.0 * u / 15.0 - 17.0 * u ** 2 / 210.0,
            (s / np.cosh(s) ** 2 - np.tanh(s)) / (4.0 * s ** 3),
        )
    return p, dp


def _bs_q(u):
    """d/du sinh^2(sqrt u) and its derivative."""
    small = u < defaults.SERIES_CUTOFF
    s = np.sqrt(np.where(small, 1.0, u))
    with np.errstate(over="ignore", invalid="ignore"):
        q = np.where(small, 1.0 + 2.0 * u / 3.0 + 2.0 * u ** 2 / 15.0 + 4.0 * u ** 3 / 315.0,
                     np.sinh(2.0 * s) / (2.0 * s))
        dq = np.where(
            small,
            2.0 / 3.0 + 4.0 * u / 15.0 + 4.0 * u ** 2 / 105.0,
            (2.0 * s * np.cosh(2.0 * s) - np.sinh(2.0 * s)) / (4.0 * s ** 3),
        )
    return q, dq


def _pe_power(family: GeneratorFamily, u, exponent, coefficient, which):
    k = _pe_exponent(family)
    at_zero = u == 0
    if np.any(at_zero) and exponent < 0:
        raise FamilyParameterError(
            f"power-exponential {which} is unbounded at u = 0 for xi = {family.xi[0]:g}"
        )
    with np.errstate(divide="ignore"):
        out = coefficient * np.power(np.where(at_zero, 1.0, u), exponent)
    if np.any(at_zero):
        out = np.where(at_zero, coefficient if exponent == 0 else 0.0, out)
    return out


def v_weight(family: GeneratorFamily, u):
    """v(u) = g'(u) / g(u)."""
    arr, scalar = _asarray(u)
    if np.any(arr < 0):
        raise FamilyParameterError("generator argument u must be non-negative")
    kind = family.kind
    if kind is FamilyKind.NORMAL:
        out = np.full_like(arr, -0.5)
    elif kind is FamilyKind.STUDENT_T:
        xi = family.xi[0]
        out = -(xi + 1.0) / (2.0 * (xi + arr))
    elif kind is FamilyKind.POWER_EXPONENTIAL:
        k = _pe_exponent(family)
        out = _pe_power(family, arr, k - 1.0, -0.5 * k, "weight")
    elif kind is FamilyKind.BIRNBAUM_SAUNDERS:
        p, _ = _bs_p(arr)
        q, _ = _bs_q(arr)
        out = p - (2.0 / family.xi[0] ** 2) * q
    else:
        xi1, xi2 = family.xi
        p, _ = _bs_p(arr)
        q, _ = _bs_q(arr)
        with np.errstate(over="ignore", invalid="ignore"):
            out = p - 2.0 * (xi2 + 1.0) * q / (xi2 * xi1 ** 2 + 4.0 * np.sinh(np.sqrt(arr)) ** 2)
    return _out(out, scalar)


def v_weight_prime(family: GeneratorFamily, u):
    """dv/du."""
    arr, scalar = _asarray(u)
    if np.any(arr < 0):
        raise FamilyParameterError("generator argument u must be non-negative")
    kind = family.kind
    if kind is FamilyKind.NORMAL:
        out = np.zeros_like(arr)
    elif kind is FamilyKind.STUDENT_T:
        xi = family.xi[0]
        out = (xi + 1.0) / (2.0 * (xi + arr) ** 2)
    elif kind is FamilyKind.POWER_EXPONENTIAL:
        k = _pe_exponent(family)
        if k == 1.0:
            out = np.zeros_like(arr)
        else:
            out = _pe_power(family, arr, k - 2.0, -0.5 * k * (k - 1.0), "weight derivative")
    elif kind is FamilyKind.BIRNBAUM_SAUNDERS:
        _, dp = _bs_p(arr)
        _, dq = _bs_q(arr)
        out = dp - (2.0 / family.xi[0] ** 2) * dq
    else:
        xi1, xi2 = family.xi
        _, dp = _bs_p(arr)
        q, dq = _bs_q(arr)
        with np.errstate(over="ignore", invalid="ignore"):
            d = xi2 * xi1 ** 2 + 4.0 * np.sinh(np.sqrt(arr)) ** 2
            out = dp - 2.0 * (xi2 + 1.0) * (dq * d - 4.0 * q ** 2) / d ** 2
    return _out(out, scalar)


# Derivatives of log f_Z in z

def dlog_sym_pdf(family: GeneratorFamily, z):
    """d/dz log f_Z(z), equal to 2 z v(z^2)."""
    arr, scalar = _asarray(z)
    kind = family.kind
    with np.errstate(over="ignore", invalid="ignore"):
        if kind is FamilyKind.NORMAL:
            out = -arr
        elif kind is FamilyKind.STUDENT_T:
            xi = family.xi[0]
            out = -(xi + 1.0) * arr / (xi + arr ** 2)
        elif kind is FamilyKind.POWER_EXPONENTIAL:
            k = _pe_exponent(family)
            out = -k * np.sign(arr) * np.power(np.abs(arr), 2.0 * k - 1.0)
        elif kind is FamilyKind.BIRNBAUM_SAUNDERS:
            out = np.tanh(arr) - (2.0 / family.xi[0] ** 2) * np.sinh(2.0 * arr)
        else:
            xi1, xi2 = family.xi
            w = (2.0 / xi1) * np.sinh(arr)
            dw = (2.0 / xi1) * np.cosh(arr)
            out = np.tanh(arr) - (xi2 + 1.0) * w * dw / (xi2 + w ** 2)
    return _out(out, scalar)


def d2log_sym_pdf(family: GeneratorFamily, z):
    """d^2/dz^2 log f_Z(z), equal to 2 v(z^2) + 4 z^2 v'(z^2)."""
    arr, scalar = _asarray(z)
    kind = family.kind
    with np.errstate(over="ignore", invalid="ignore"):
        if kind is FamilyKind.NORMAL:
            out = np.full_like(arr, -1.0)
        elif kind is FamilyKind.STUDENT_T:
            xi = family.xi[0]
            out = -(xi + 1.0) * (xi - arr ** 2) / (xi + arr ** 2) ** 2
        elif kind is FamilyKind.POWER_EXPONENTIAL:
            k = _pe_exponent(family)
            if k == 0.5:
                out = np.zeros_like(arr)
            else:
                if k < 1.0 and np.any(arr == 0):
                    raise FamilyParameterError(
                        f"power-exponential curvature is unbounded at z = 0 for xi = {family.xi[0]:g}"
                    )
                out = -k * (2.0 * k - 1.0) * np.power(np.abs(arr), 2.0 * k - 2.0)
        elif kind is FamilyKind.BIRNBAUM_SAUNDERS:
            out = 1.0 / np.cosh(arr) ** 2 - (4.0 / family.xi[0] ** 2) * np.cosh(2.0 * arr)
        else:
            xi1, xi2 = family.xi
            w = (2.0 / xi1) * np.sinh(arr)
            dw = (2.0 / xi1) * np.cosh(arr)
            d = xi2 + w ** 2
            out = 1.0 / np.cosh(arr) ** 2 - (xi2 + 1.0) * ((dw ** 2 + w ** 2) * d - 2.0 * w ** 2 * dw ** 2) / d ** 2
    return _out(out, scalar)


def inverse_mills(family: GeneratorFamily, z):
    """Omega(z) = f_Z(z) / F_Z(z)."""
    arr, scalar = _asarray(z)
    with np.errstate(invalid="ignore", over="ignore"):
        out = np.exp(np.asarray(log_sym_pdf(family, arr)) - np.asarray(log_sym_cdf(family, arr)))
    return _out(out, scalar)
