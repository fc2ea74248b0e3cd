"""
OFDM front end: unitary DFT pair, blanking/clipping, per-subcarrier LLRs.

BPSK symbols ride on the real axis of each subcarrier.  With the ``"full"``
complex-noise convention the real part of every subcarrier's noise has the
same variance as the single-carrier real channel, so both systems share one
SNR axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import noise_model
from .errors import DimensionError, ParameterError
from .noise_model import ClassAParams

NONLINEARITIES = ("none", "blanking", "clipping")
LLR_VARIANCE_MODES = ("analytic", "empirical")


@dataclass(frozen=True)
class OfdmConfig:
    num_carriers: int
    nonlinearity: str = "none"
    threshold_T: float | None = None
    llr_variance_mode: str = "empirical"

    def __post_init__(self):
        N = self.num_carriers
        if N < 1 or N & (N - 1):
            raise ParameterError(f"num_carriers must be a power of two, got {N}")
        if self.nonlinearity not in NONLINEARITIES:
            raise ParameterError(f"nonlinearity must be one of {NONLINEARITIES}, got {self.nonlinearity!r}")
        if self.llr_variance_mode not in LLR_VARIANCE_MODES:
            raise ParameterError(f"llr_variance_mode must be one of {LLR_VARIANCE_MODES}")
        if self.nonlinearity != "none":
            if self.threshold_T is None or not self.threshold_T > 0:
                raise ParameterError("threshold_T must be positive when a nonlinearity is used")
            if self.llr_variance_mode == "analytic":
                raise ParameterError("analytic LLR scaling ignores the nonlinearity; use 'empirical'")


def _check_length(x, N):
    if N is not None and x.shape[-1] != N:
        raise DimensionError(f"expected length {N}, got {x.shape[-1]}")


def ofdm_modulate(symbols, N=None):
    """Unitary IDFT along the last axis (1/sqrt(N) scaling)."""
    x = np.asarray(symbols)
    _check_length(x, N)
    return np.fft.ifft(x, axis=-1, norm="ortho")


def ofdm_demodulate(samples, N=None):
    """Unitary DFT along the last axis; inverse of :func:`ofdm_modulate`."""
    y = np.asarray(samples)
    _check_length(y, N)
    return np.fft.fft(y, axis=-1, norm="ortho")


def apply_nonlinearity(samples, config: OfdmConfig):
    """Blank (zero) or clip (limit magnitude to T, keep phase) samples with ``|y| >= T``."""
    y = np.asarray(samples, dtype=complex)
    if config.nonlinearity == "none":
        return y.copy()
    T = config.threshold_T
    mag = np.abs(y)
    big = mag >= T
    out = y.copy()
    if config.nonlinearity == "blanking":
        out[big] = 0.0
    else:
        out[big] = y[big] * (T / mag[big])
    return out


def subcarrier_llrs(subcarrier_values, noise_variance_per_real_dim, gain=1.0):
    """``L_k = 2 g Re(Y_k) / sigma_r^2`` for BPSK on the real axis.

    ``gain`` is the effective signal amplitude after the front end (1 when
    there is no nonlinearity).
    """
    if not noise_variance_per_real_dim > 0:
        raise ParameterError("noise variance must be positive")
    return 2.0 * gain * np.real(subcarrier_values) / noise_variance_per_real_dim


def analytic_real_variance(params: ClassAParams, convention="full"):
    """Per-carrier variance of ``Re(Z_k)`` under the Gaussian approximation."""
    s2 = noise_model.total_variance(params)
    return s2 if convention == "full" else s2 / 2.0


def transmit(bits, params: ClassAParams, config: OfdmConfig, rng, convention="full"):
    """Send codeword(s) through the OFDM chain; returns demodulated subcarrier values.

    ``bits`` has shape ``(N,)`` or ``(B, N)``; noise is drawn row by row so a
    block's samples depend only on ``rng``'s state at that row.
    """
    c = np.atleast_2d(bits)
    N = config.num_carriers
    _check_length(c, N)
    tx = ofdm_modulate(1.0 - 2.0 * c)
    noise = np.stack([noise_model.sample(params, N, True, rng, convention) for _ in range(c.shape[0])])
    rx = apply_nonlinearity(tx + noise, config)
    out = ofdm_demodulate(rx)
    return out[0] if np.ndim(bits) == 1 else out


def calibrate(params: ClassAParams, config: OfdmConfig, rng, symbols=100_000, convention="full"):
    """Estimate ``(gain, sigma_r^2)`` of ``Re(Y_k)`` through the complete front end.

    Random BPSK OFDM symbols are passed through noise, the nonlinearity and
    the DFT; ``gain`` is the regression slope of ``Re(Y_k)`` on the sent
    symbol and ``sigma_r^2`` the residual variance.
    """
    N = config.num_carriers
    nsym = max(1, math.ceil(symbols / N))
    x = 1.0 - 2.0 * rng.integers(0, 2, size=(nsym, N))
    tx = ofdm_modulate(x)
    noise = noise_model.sample(params, nsym * N, True, rng, convention).reshape(nsym, N)
    Y = np.real(ofdm_demodulate(apply_nonlinearity(tx + noise, config)))
    gain = float(np.mean(Y * x))
    resid = Y - gain * x
    var = float(np.mean(resid ** 2))
    if not gain > 0:
        raise ParameterError(f"front end destroys the signal (gain {gain:.3g}); raise threshold_T")
    return gain, var


def effective_gaussian_variance(params, config: OfdmConfig, rng=None, symbols=100_000,
                                convention="full"):
    """Variance of the equivalent unit-gain Gaussian channel seen by the decoder.

    This is the quantity that enters the closed-form initial LLR density.
    """
    if config.llr_variance_mode == "analytic":
        return analytic_real_variance(params, convention)
    gain, var = calibrate(params, config, rng, symbols, convention)
    return var / gain ** 2
