import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import erfc

from _oracles import de_leaves_n4, dyadic, quantize
from polarimpulse import ClassAParams, DimensionError, ParameterError
from polarimpulse.construction import (
    DEFAULT_GRID,
    Grid,
    QuantizedDensity,
    bhattacharyya_initial,
    bhattacharyya_leaves,
    blep_bounds,
    de_check_convolve,
    de_construct,
    de_evolve,
    de_var_convolve,
    error_probability,
    heuristic_construct,
    initial_density_class_a,
    initial_density_gaussian,
    select_info_set,
)
from polarimpulse.noise_model import total_variance

G = DEFAULT_GRID
TWO_POINT = {2.0: 0.9, -2.0: 0.1}


def gaussian_params(sigma2):
    return ClassAParams(0.1, 0.1, sigma2, truncation_M=1)


# ---------------------------------------------------------------------------
# heuristic


def test_heuristic_n4_leaves():
    assert bhattacharyya_leaves(4, 0.5).tolist() == [0.9375, 0.5625, 0.4375, 0.0625]


def test_heuristic_fixed_points():
    assert not bhattacharyya_leaves(16, 0.0).any()
    assert np.all(bhattacharyya_leaves(16, 1.0) == 1.0)


@given(z0=st.floats(1e-6, 1 - 1e-6), n=st.integers(1, 8))
def test_heuristic_monotone_children(z0, n):
    z = np.array([z0])
    for _ in range(n):
        nxt = np.empty(2 * len(z))
        nxt[0::2], nxt[1::2] = 2 * z - z * z, z * z
        assert np.all(nxt[0::2] >= z) and np.all(nxt[1::2] <= z)
        z = nxt
    assert np.array_equal(z, bhattacharyya_leaves(1 << n, z0))


def test_heuristic_construct_selects_smallest():
    res = heuristic_construct(8, 3, 0.5)
    z = res.per_channel
    assert res.info_set == tuple(sorted(np.argsort(z, kind="stable")[:3]))
    assert res.code().K == 3
    assert res.blep_product <= res.blep_sum


@pytest.mark.parametrize("sigma2", [0.25, 0.7, 1.0, 2.0, 8.0])
def test_bhattacharyya_gaussian_limit(sigma2):
    assert bhattacharyya_initial(gaussian_params(sigma2)) == pytest.approx(math.exp(-1 / (2 * sigma2)), abs=1e-6)


def test_bhattacharyya_half_point():
    # Z0 = 1/2 in the Gaussian limit exactly when sigma^2 = 1/(2 ln 2)
    assert bhattacharyya_initial(gaussian_params(1 / (2 * math.log(2)))) == pytest.approx(0.5, abs=1e-9)


def test_bhattacharyya_useless_channel():
    assert bhattacharyya_initial(gaussian_params(1e6)) == pytest.approx(1.0, abs=1e-5)


@pytest.mark.parametrize("gamma", [0.1, 0.3])
def test_bhattacharyya_class_a_in_range(gamma):
    z = bhattacharyya_initial(ClassAParams.from_snr_db(-3.0, 0.1, gamma))
    assert 0 < z < 1


# ---------------------------------------------------------------------------
# densities


def test_error_probability_examples():
    assert error_probability(QuantizedDensity.point_mass(G, 3.0)) == 0.0
    assert error_probability(QuantizedDensity.point_mass(G, 0.0)) == 0.5
    assert error_probability(QuantizedDensity.from_points(G, {-1.0: 0.3, 1.0: 0.7})) == pytest.approx(0.3)


def test_gaussian_initial_moments():
    d = initial_density_gaussian(1.1)
    assert d.mean() == pytest.approx(2 / 1.1, abs=G.step)
    assert d.mean() == pytest.approx(1.818, abs=1e-3)
    assert d.variance() == pytest.approx(4 / 1.1, abs=2 * G.step)
    assert d.total() == pytest.approx(1.0, abs=1e-12)
    assert d.symmetry_defect(floor=1e-6) < 0.1


def test_gaussian_initial_error_probability():
    for s2 in (0.5, 1.0, 2.0):
        q = 0.5 * erfc(1 / math.sqrt(2 * s2))
        assert initial_density_gaussian(s2).error_probability() == pytest.approx(q, rel=0.01)


def test_class_a_histogram_gaussian_limit():
    p = ClassAParams(0.1, 0.1, 1.0, truncation_M=1)
    hist = initial_density_class_a(p, 10**7, rng=np.random.default_rng(5))
    ref = initial_density_gaussian(1.0)
    assert 0.5 * np.abs(hist.masses - ref.masses).sum() < 0.01
    assert hist.error_probability() == pytest.approx(0.5 * erfc(1 / math.sqrt(2)), rel=0.01)


@pytest.mark.parametrize("gamma", [0.1, 0.3])
def test_class_a_histogram_basic(gamma):
    d = initial_density_class_a(ClassAParams.from_snr_db(-4.0, 0.1, gamma), 10**5,
                                rng=np.random.default_rng(1))
    assert d.mean() > 0
    assert d.total() == pytest.approx(1.0, abs=1e-12)


def test_two_point_check_convolution():
    d = QuantizedDensity.from_points(G, TWO_POINT)
    out = de_check_convolve(d, d)
    v = 2 * math.atanh(math.tanh(1.0) ** 2)
    expected = QuantizedDensity.from_points(G, {v: 0.81 + 0.01, -v: 0.18})
    np.testing.assert_allclose(out.masses, expected.masses, atol=1e-15)
    assert abs(G.centers[np.argmax(out.masses)] - 1.3246) <= G.step / 2


def test_two_point_var_convolution():
    d = QuantizedDensity.from_points(G, TWO_POINT)
    out = de_var_convolve(d, d)
    expected = QuantizedDensity.from_points(G, {4.0: 0.81, 0.0: 0.18, -4.0: 0.01})
    np.testing.assert_allclose(out.masses, expected.masses, atol=1e-15)


def test_point_mass_convolutions():
    zero = QuantizedDensity.point_mass(G, 0.0)
    a = QuantizedDensity.point_mass(G, 3.0)
    b = QuantizedDensity.point_mass(G, -1.25)
    assert np.array_equal(de_check_convolve(a, zero).masses, zero.masses)
    assert np.array_equal(de_var_convolve(a, b).masses, QuantizedDensity.point_mass(G, 1.75).masses)


def test_var_saturation():
    g = Grid(1.0, 4)
    a = QuantizedDensity.point_mass(g, 3.0)
    out = de_var_convolve(a, a)
    assert out.masses[-1] == 1.0
    assert out.saturation_mass == 1.0


def test_grid_mismatch():
    with pytest.raises(DimensionError):
        de_var_convolve(QuantizedDensity.point_mass(G, 0), QuantizedDensity.point_mass(Grid(0.5, 10), 0))
    with pytest.raises(DimensionError):
        QuantizedDensity(G, np.ones(3))


densities = st.lists(st.floats(0, 1), min_size=33, max_size=33).filter(lambda m: sum(m) > 1e-3)


@given(ma=densities, mb=densities)
@settings(max_examples=50)
def test_convolution_properties(ma, mb):
    g = Grid(0.25, 16)
    a = QuantizedDensity(g, np.array(ma) / sum(ma))
    b = QuantizedDensity(g, np.array(mb) / sum(mb))
    chk = de_check_convolve(a, b)
    var = de_var_convolve(a, b)
    for d in (chk, var):
        assert abs(d.total() - 1.0) < 1e-10
        assert np.all(d.masses >= 0)
    if var.saturation_mass == 0:
        assert var.mean() == pytest.approx(a.mean() + b.mean(), abs=2 * g.step)


@pytest.mark.parametrize("s2", [0.3, 1.0, 3.0])
def test_check_degrades_and_polarizes(s2):
    d = initial_density_gaussian(s2)
    pe = d.error_probability()
    minus = de_check_convolve(d, d).error_probability()
    plus = de_var_convolve(d, d).error_probability()
    assert minus >= pe - 1e-12
    assert plus <= pe
    assert de_evolve(d, 1).tolist() == [minus, plus]


def test_evolve_mass_conservation():
    init = initial_density_class_a(ClassAParams.from_snr_db(-5.0, 0.1, 0.1), 10**5,
                                   rng=np.random.default_rng(2))
    for d in de_evolve(init, 3, keep_densities=True):
        assert abs(d.total() - 1.0) < 1e-10


def test_evolve_pure_noise_fixed_point():
    pe = de_evolve(QuantizedDensity.point_mass(G, 0.0), 4)
    assert np.all(pe == 0.5)


def test_evolve_rejects_bad_n():
    with pytest.raises(ParameterError):
        de_evolve(QuantizedDensity.point_mass(G, 0.0), -1)


@pytest.mark.parametrize("s2", [0.4, 1.0, 2.5])
def test_de_matches_exhaustive_oracle_n4(s2):
    g = Grid(0.5, 8)
    init = initial_density_gaussian(s2, g)
    pe_ref, dens_ref = de_leaves_n4(init.masses, g.step, g.half_range)
    dens = de_evolve(init, 2, keep_densities=True)
    for d, ref in zip(dens, dens_ref):
        np.testing.assert_allclose(d.masses, ref, rtol=1e-12, atol=1e-16)
    np.testing.assert_allclose(de_evolve(init, 2), pe_ref, rtol=1e-12, atol=1e-16)


@pytest.mark.parametrize("s2", [0.4, 1.0, 2.5])
def test_de_bit_exact_on_dyadic_masses(s2):
    g = Grid(0.5, 8)
    init = QuantizedDensity(g, dyadic(initial_density_gaussian(s2, g).masses))
    pe_ref, dens_ref = de_leaves_n4(init.masses, g.step, g.half_range)
    for d, ref in zip(de_evolve(init, 2, keep_densities=True), dens_ref):
        assert np.array_equal(d.masses, ref)
    assert np.array_equal(de_evolve(init, 2), pe_ref)


def test_de_matches_exhaustive_oracle_n2():
    g = Grid(0.5, 8)
    init = initial_density_gaussian(0.8, g)
    # first-level outputs are the leaf densities of N=2
    lvl = de_evolve(init, 1, keep_densities=True)
    ref_minus = np.zeros(g.size)
    ref_plus = np.zeros(g.size)
    vals = np.arange(-8, 9)
    for a, pa in zip(vals, init.masses):
        for b, pb in zip(vals, init.masses):
            f = 0 if a == 0 or b == 0 else quantize(2 * math.atanh(math.tanh(a / 4) * math.tanh(b / 4)), 0.5, 8)
            ref_minus[f + 8] += pa * pb
            ref_plus[max(-8, min(8, a + b)) + 8] += pa * pb
    np.testing.assert_allclose(lvl[0].masses, ref_minus, rtol=1e-12, atol=1e-16)
    np.testing.assert_allclose(lvl[1].masses, ref_plus, rtol=1e-12, atol=1e-16)


def test_blep_examples():
    prod, total = blep_bounds([0.01, 0.02, 0.3], (0, 1))
    assert prod == pytest.approx(0.0298, abs=1e-15)
    assert total == pytest.approx(0.03, abs=1e-15)
    assert blep_bounds(np.zeros(8), (1, 2)) == (0.0, 0.0)


@given(pe=st.lists(st.floats(0, 0.5), min_size=1, max_size=64))
def test_blep_product_below_sum(pe):
    prod, total = blep_bounds(pe, tuple(range(len(pe))))
    assert 0 <= prod <= total + 1e-15 <= 1 + 1e-15


def test_select_ties_lower_index():
    assert select_info_set([0.1, 0.0, 0.1, 0.0, 0.1], 3) == (0, 1, 3)


def test_de_construct_result():
    res = de_construct(initial_density_gaussian(0.5), 16, 8)
    assert res.K == 8 and res.N == 16
    pe = res.per_channel
    assert max(pe[list(res.info_set)]) <= min(np.delete(pe, list(res.info_set)))
    csv = res.reliability_csv().splitlines()
    assert csv[0] == "index,pe,rank" and len(csv) == 17


def test_de_and_heuristic_agree_at_n64():
    s2 = 10 ** (-1.0 / 10)
    de = de_construct(initial_density_gaussian(s2), 64, 32)
    heur = heuristic_construct(64, 32, bhattacharyya_initial(gaussian_params(s2)))
    assert len(set(de.info_set) & set(heur.info_set)) >= 0.9 * 32


def test_grid_refinement_stable():
    s2 = 10 ** (-1.0 / 10)
    coarse = de_evolve(initial_density_gaussian(s2, Grid(0.25, 120)), 4)
    fine = de_evolve(initial_density_gaussian(s2, Grid(0.125, 480)), 4)
    big = coarse > 1e-6
    assert np.all(np.abs(fine[big] - coarse[big]) / coarse[big] < 0.05)


def test_total_variance_feeds_gaussian_density():
    s2 = total_variance(ClassAParams(0.1, 0.1, 0.1))
    assert initial_density_gaussian(s2).mean() == pytest.approx(1.818, abs=1e-3)
