import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from polarimpulse import ClassAParams, DimensionError, ParameterError
from polarimpulse.config import CodeSpec, ExperimentConfig, NoiseSpec
from polarimpulse.harness import resolve, run_fer
from polarimpulse.noise_model import sample, total_variance
from polarimpulse.ofdm import (
    OfdmConfig,
    analytic_real_variance,
    apply_nonlinearity,
    calibrate,
    effective_gaussian_variance,
    ofdm_demodulate,
    ofdm_modulate,
    subcarrier_llrs,
    transmit,
)

P = ClassAParams(0.1, 0.1, 0.1)


@pytest.mark.parametrize("N", [1, 8, 256, 4096])
def test_round_trip_and_parseval(N):
    rng = np.random.default_rng(N)
    x = rng.normal(size=N) + 1j * rng.normal(size=N)
    t = ofdm_modulate(x)
    assert np.max(np.abs(ofdm_demodulate(t) - x)) < 1e-12
    assert np.max(np.abs(ofdm_modulate(ofdm_demodulate(x)) - x)) < 1e-12
    assert np.sum(np.abs(t) ** 2) == pytest.approx(np.sum(np.abs(x) ** 2), abs=1e-9)


def test_dft_pairs():
    N = 16
    t = ofdm_modulate(np.ones(N))
    assert t[0] == pytest.approx(math.sqrt(N))
    assert np.max(np.abs(t[1:])) < 1e-12
    spread = ofdm_demodulate(np.eye(N)[3] * 2.0)
    assert np.allclose(np.abs(spread), 2.0 / math.sqrt(N))


def test_length_checked():
    with pytest.raises(DimensionError):
        ofdm_modulate(np.ones(8), N=16)
    with pytest.raises(DimensionError):
        ofdm_demodulate(np.ones(8), N=4)


def test_config_validation():
    with pytest.raises(ParameterError):
        OfdmConfig(12)
    with pytest.raises(ParameterError):
        OfdmConfig(16, "blanking")
    with pytest.raises(ParameterError):
        OfdmConfig(16, "clipping", 2.0, "analytic")
    with pytest.raises(ParameterError):
        OfdmConfig(16, "squash", 2.0)


def test_nonlinearity_examples():
    y = 3 * np.exp(1j * np.pi / 4)
    clip = OfdmConfig(4, "clipping", 2.0)
    blank = OfdmConfig(4, "blanking", 2.0)
    assert apply_nonlinearity([y], clip)[0] == pytest.approx(2 * np.exp(1j * np.pi / 4), abs=1e-15)
    assert apply_nonlinearity([y, 2.0, 1.0], blank).tolist() == [0, 0, 1.0]
    small = np.array([0.5, -1.2j, 1 + 1j])
    assert np.array_equal(apply_nonlinearity(small, clip), small)
    assert np.array_equal(apply_nonlinearity(small, blank), small)


@given(T=st.floats(0.01, 10), seed=st.integers(0, 1000))
def test_nonlinearity_never_adds_energy(T, seed):
    rng = np.random.default_rng(seed)
    y = rng.standard_cauchy(64) + 1j * rng.normal(size=64)
    e = np.sum(np.abs(y) ** 2)
    for mode in ("blanking", "clipping"):
        out = apply_nonlinearity(y, OfdmConfig(64, mode, T))
        assert np.sum(np.abs(out) ** 2) <= e


def test_llr_scaling():
    Y = np.array([0.5 + 2j, -1.0, 2.0])
    assert subcarrier_llrs(Y, 1.0).tolist() == [1.0, -2.0, 4.0]
    assert np.allclose(subcarrier_llrs(Y, 2.0), subcarrier_llrs(Y, 1.0) / 2)
    assert subcarrier_llrs(np.array([1.0]), 1e-3)[0] > 1000
    with pytest.raises(ParameterError):
        subcarrier_llrs(Y, 0.0)


@pytest.mark.parametrize("convention", ["full", "split"])
def test_per_carrier_variance(convention):
    N = 64
    rng = np.random.default_rng(3)
    z = sample(P, N * 2000, True, rng, convention).reshape(-1, N)
    Z = ofdm_demodulate(z)
    # the DFT preserves the per-dimension variance of white noise
    assert np.var(Z.real) == pytest.approx(np.var(z.real), rel=0.05)
    assert np.var(Z.real) == pytest.approx(analytic_real_variance(P, convention), rel=0.05)


def test_kurtosis_falls_with_carriers():
    budget = 1 << 20
    rng = np.random.default_rng(4)
    kurt = []
    for N in (64, 256, 1024):
        z = sample(P, budget, True, rng).reshape(-1, N)
        kurt.append(stats.kurtosis(ofdm_demodulate(z).real.ravel()))
    assert kurt[0] > kurt[1] > kurt[2]


def test_transmit_noiseless_limit():
    p = ClassAParams(0.1, 0.1, 1e-12, truncation_M=1)
    bits = np.random.default_rng(0).integers(0, 2, (3, 16))
    Y = transmit(bits, p, OfdmConfig(16), np.random.default_rng(1))
    assert np.allclose(Y.real, 1 - 2 * bits, atol=1e-4)


def test_calibration_without_nonlinearity():
    gain, var = calibrate(P, OfdmConfig(64), np.random.default_rng(5), symbols=200_000)
    assert gain == pytest.approx(1.0, abs=0.01)
    assert var == pytest.approx(total_variance(P), rel=0.03)


def test_blanking_calibration_shrinks_gain():
    p = ClassAParams.from_snr_db(0.0, 0.1, 0.1)
    cfg = OfdmConfig(64, "blanking", 2.0)
    gain, var = calibrate(p, cfg, np.random.default_rng(6))
    assert 0 < gain < 1
    # blanking removes most impulsive energy
    assert effective_gaussian_variance(p, cfg, np.random.default_rng(6)) < total_variance(p)


def test_awgn_equivalence():
    # Gaussian noise: OFDM and single carrier see the same real-part channel
    noise = NoiseSpec(0.1, 0.1, truncation_M=1)
    base = ExperimentConfig(noise, CodeSpec(64, 32, "heuristic", 2.0), (2.0,), min_block_errors=10**6,
                            max_blocks=4000, seed=3)
    sc = run_fer(resolve(base))[0]
    of = run_fer(resolve(base.replace(modulation="ofdm", ofdm=OfdmConfig(64, llr_variance_mode="analytic"))))[0]
    p = (sc.block_errors + of.block_errors) / (sc.blocks_run + of.blocks_run)
    se = math.sqrt(p * (1 - p) * 2 / sc.blocks_run)
    assert 0.01 < sc.fer < 0.9
    assert abs(sc.fer - of.fer) < 4 * se
