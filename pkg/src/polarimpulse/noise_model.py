"""
Middleton Class A impulsive noise.

The noise is a Poisson-weighted Gaussian mixture: term ``m`` occurs with
probability ``exp(-A) A^m / m!`` and has variance
``sigma_g2 * (m / (A * gamma) + 1)``.  The infinite sum is truncated at
``truncation_M`` terms and the retained weights are renormalized.

All likelihood arithmetic is carried out in the log domain; with small
``gamma`` the term variances span several orders of magnitude and direct
evaluation underflows.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.special import gammaln, logsumexp

from .errors import ParameterError

#: Complex-noise conventions.  ``"full"``: real and imaginary parts each carry
#: variance sigma_m^2 (the two-dimensional density with 1/(2 pi sigma_m^2)).
#: ``"split"``: each part carries sigma_m^2 / 2, so |z|^2 has mean sigma_m^2.
COMPLEX_CONVENTIONS = ("full", "split")


@dataclass(frozen=True)
class MixtureTerm:
    """One retained term of the Class A mixture."""

    m: int
    weight: float
    sigma_m2: float


@dataclass(frozen=True)
class ClassAParams:
    """Parameters of the Middleton Class A model.

    Parameters
    ----------
    A : float
        Impulsive index, ``0 < A <= 1``.
    gamma : float
        Background-to-impulsive power ratio, ``> 0``.
    sigma_g2 : float
        Variance of the background Gaussian component, ``> 0``.
    truncation_M : int
        Number of mixture terms retained.
    """

    A: float
    gamma: float
    sigma_g2: float
    truncation_M: int = 20

    def __post_init__(self):
        for name in ("A", "gamma", "sigma_g2"):
            v = getattr(self, name)
            if not isinstance(v, (int, float, np.floating, np.integer)) or not math.isfinite(v):
                raise ParameterError(f"{name} must be a finite number, got {v!r}")
        if not 0.0 < self.A <= 1.0:
            raise ParameterError(f"A must lie in (0, 1], got {self.A}")
        if self.gamma <= 0.0:
            raise ParameterError(f"gamma must be positive, got {self.gamma}")
        if self.sigma_g2 <= 0.0:
            raise ParameterError(f"sigma_g2 must be positive, got {self.sigma_g2}")
        if int(self.truncation_M) != self.truncation_M or self.truncation_M < 1:
            raise ParameterError(f"truncation_M must be an integer >= 1, got {self.truncation_M}")

    @classmethod
    def from_snr_db(cls, snr_db, A, gamma, truncation_M=20):
        """Parameters whose total noise variance is ``10**(-snr_db/10)``.

        The SNR axis counts total noise power (background plus impulsive)
        against a unit-energy BPSK symbol.
        """
        sigma_z2 = 10.0 ** (-float(snr_db) / 10.0)
        return cls(A=A, gamma=gamma, sigma_g2=sigma_z2 * gamma / (1.0 + gamma),
                   truncation_M=truncation_M)

    @property
    def snr_db(self):
        return -10.0 * math.log10(total_variance(self))

    def terms(self):
        """Retained mixture terms with renormalized weights."""
        w, s2 = self.weights_and_variances()
        return [MixtureTerm(m, float(w[m]), float(s2[m])) for m in range(len(w))]

    def weights_and_variances(self):
        """Arrays ``(weights, sigma_m2)`` of length ``truncation_M``."""
        return _mixture_arrays(self.A, self.gamma, self.sigma_g2, int(self.truncation_M))


@functools.lru_cache(maxsize=256)
def _mixture_arrays(A, gamma, sigma_g2, M):
    m = np.arange(M, dtype=float)
    log_w = -A + m * math.log(A) - gammaln(m + 1.0)
    log_w -= logsumexp(log_w)
    w = np.exp(log_w)
    s2 = sigma_g2 * (m / (A * gamma) + 1.0)
    w.flags.writeable = False
    s2.flags.writeable = False
    return w, s2


def _check(params):
    if not isinstance(params, ClassAParams):
        raise ParameterError(f"expected ClassAParams, got {type(params).__name__}")


def log_pdf_real(params: ClassAParams, z):
    """Natural log of the real Class A density."""
    _check(params)
    w, s2 = params.weights_and_variances()
    z = np.asarray(z, dtype=float)
    coef = np.log(w) - 0.5 * np.log(2.0 * np.pi * s2)
    expo = coef - z[..., None] ** 2 / (2.0 * s2)
    return logsumexp(expo, axis=-1)


def pdf_real(params: ClassAParams, z):
    """Density of real Class A noise at amplitude ``z``."""
    return np.exp(log_pdf_real(params, z))


def pdf_complex(params: ClassAParams, z, convention="full"):
    """Density of circularly symmetric complex Class A noise.

    With ``convention="full"`` this is the mixture of two-dimensional
    Gaussians with per-dimension variance sigma_m^2; with ``"split"`` the
    per-dimension variance is sigma_m^2 / 2.
    """
    _check(params)
    if convention not in COMPLEX_CONVENTIONS:
        raise ParameterError(f"unknown complex convention {convention!r}")
    w, s2 = params.weights_and_variances()
    if convention == "split":
        s2 = s2 / 2.0
    r2 = np.abs(np.asarray(z, dtype=complex)) ** 2
    expo = np.log(w) - np.log(2.0 * np.pi * s2) - r2[..., None] / (2.0 * s2)
    return np.exp(logsumexp(expo, axis=-1))


def sample(params: ClassAParams, count, complex_flag=False, rng=None, convention="full"):
    """Draw ``count`` noise samples.

    Each sample first picks a mixture state ``m`` with probability
    ``weight_m`` and then draws a zero-mean Gaussian with variance
    ``sigma_m2``.  Complex samples draw real and imaginary parts
    independently with the per-dimension variance fixed by ``convention``.
    """
    _check(params)
    count = int(count)
    if count < 1:
        raise ParameterError(f"count must be >= 1, got {count}")
    if rng is None:
        raise ParameterError("an explicit numpy Generator is required")
    w, s2 = params.weights_and_variances()
    cdf = np.cumsum(w)
    cdf[-1] = 1.0
    states = np.searchsorted(cdf, rng.random(count), side="right")
    if not complex_flag:
        return rng.standard_normal(count) * np.sqrt(s2[states])
    if convention not in COMPLEX_CONVENTIONS:
        raise ParameterError(f"unknown complex convention {convention!r}")
    per_dim = s2[states] if convention == "full" else s2[states] / 2.0
    g = rng.standard_normal((count, 2))
    return (g[:, 0] + 1j * g[:, 1]) * np.sqrt(per_dim)


def total_variance(params: ClassAParams):
    """Total noise variance sigma_z^2 of the real model.

    Evaluated as the truncated series
    ``exp(-A) (sigma_g2 / gamma) sum_m A^m/m! (m/A + gamma)``.
    The untruncated series equals ``sigma_g2 (1 + gamma) / gamma``; a
    discrepancy beyond truncation error raises a warning.
    """
    _check(params)
    A, gamma = params.A, params.gamma
    M = int(params.truncation_M)
    m = np.arange(M, dtype=float)
    log_w = -A + m * math.log(A) - gammaln(m + 1.0)
    tail = max(0.0, 1.0 - float(np.exp(logsumexp(log_w))))
    w = np.exp(log_w - logsumexp(log_w))
    series = params.sigma_g2 / gamma * float(np.sum(w * (m / A + gamma)))
    closed = params.sigma_g2 * (1.0 + gamma) / gamma
    if abs(series - closed) > closed * (1e-9 + tail * M / A):
        warnings.warn(f"total_variance series {series!r} disagrees with closed form {closed!r}",
                      RuntimeWarning, stacklevel=2)
    return series


@njit(cache=True)
def _log_mix(d2, logc, inv2s2):
    # logc is nonincreasing and every exponent is <= logc[k], so the scan
    # stops once logc[k] falls 40 nats below the running maximum
    M = logc.shape[0]
    mx = -np.inf
    for k in range(M):
        if logc[k] < mx:
            break
        t = logc[k] - d2 * inv2s2[k]
        if t > mx:
            mx = t
    s = 0.0
    for k in range(M):
        if logc[k] - mx < -40.0:
            break
        t = logc[k] - d2 * inv2s2[k] - mx
        if t > -40.0:
            s += math.exp(t)
    return mx + math.log(s)


@njit(cache=True)
def _llr_kernel(y, logc, inv2s2, out):
    for i in range(y.shape[0]):
        dp = y[i] - 1.0
        dm = y[i] + 1.0
        out[i] = _log_mix(dp * dp, logc, inv2s2) - _log_mix(dm * dm, logc, inv2s2)


@functools.lru_cache(maxsize=256)
def _llr_constants(A, gamma, sigma_g2, M):
    w, s2 = _mixture_arrays(A, gamma, sigma_g2, M)
    return np.log(w) - 0.5 * np.log(s2), 1.0 / (2.0 * s2)


def llr_exact(params: ClassAParams, y):
    """Channel LLR ``log p(y | x=+1) / p(y | x=-1)`` in nats (bit 0 maps to +1)."""
    _check(params)
    logc, inv2s2 = _llr_constants(params.A, params.gamma, params.sigma_g2, int(params.truncation_M))
    arr = np.asarray(y, dtype=float)
    flat = np.ascontiguousarray(arr.ravel())
    out = np.empty_like(flat)
    _llr_kernel(flat, logc, inv2s2, out)
    if arr.ndim == 0:
        return float(out[0])
    return out.reshape(arr.shape)
