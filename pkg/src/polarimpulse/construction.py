"""
Polar code construction for Class A channels.

Two methods are provided:

* the Bhattacharyya heuristic, which evaluates the channel's Bhattacharyya
  parameter at a design SNR and pushes it through the erasure-channel
  recursion ``z- = 2z - z^2``, ``z+ = z^2``;
* density evolution (DE) over quantized LLR densities, which tracks the
  exact check-node and variable-node convolutions of SC decoding and yields
  per-bit-channel error probabilities and a block-error estimate.

Leaf ordering follows :mod:`polarimpulse.polar_codec`: entry ``2j`` of a
level is the check-node child of entry ``j`` of the previous level and
``2j + 1`` the variable-node child.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import integrate
from scipy.special import erfcinv, ndtr

from . import noise_model
from .errors import DimensionError, NumericalError, ParameterError
from .noise_model import ClassAParams
from .polar_codec import PolarCode, f_combine


@dataclass(frozen=True)
class Grid:
    """Uniform LLR grid with bins centred at ``k * step``, ``|k| <= half_range``."""

    step: float = 1.0 / 16.0
    half_range: int = 960

    def __post_init__(self):
        if not self.step > 0:
            raise ParameterError(f"grid step must be positive, got {self.step}")
        if int(self.half_range) != self.half_range or self.half_range < 1:
            raise ParameterError(f"half_range must be a positive integer, got {self.half_range}")

    @property
    def size(self):
        return 2 * self.half_range + 1

    @property
    def centers(self):
        return np.arange(-self.half_range, self.half_range + 1) * self.step

    @property
    def limit(self):
        return self.half_range * self.step

    def index(self, values):
        """Nearest-bin indices (ties away from zero), saturated at the grid ends."""
        v = np.asarray(values, dtype=float) / self.step
        k = np.sign(v) * np.floor(np.abs(v) + 0.5)
        k = np.clip(k, -self.half_range, self.half_range)
        return k.astype(np.int64) + self.half_range


DEFAULT_GRID = Grid()


@dataclass
class QuantizedDensity:
    """Probability masses of an LLR on a uniform grid.

    ``saturation_mass`` records the mass that fell outside the grid while
    this density was produced and was clamped into the extreme bins.
    """

    grid: Grid
    masses: np.ndarray
    saturation_mass: float = 0.0

    def __post_init__(self):
        self.masses = np.asarray(self.masses, dtype=float)
        if self.masses.shape != (self.grid.size,):
            raise DimensionError(f"expected {self.grid.size} masses, got shape {self.masses.shape}")

    @property
    def grid_step(self):
        return self.grid.step

    @property
    def half_range(self):
        return self.grid.half_range

    @classmethod
    def point_mass(cls, grid, value):
        m = np.zeros(grid.size)
        m[grid.index(value)] = 1.0
        return cls(grid, m)

    @classmethod
    def from_points(cls, grid, points):
        """Density from ``{llr_value: probability}``, rounded to the grid."""
        m = np.zeros(grid.size)
        for v, p in points.items():
            m[grid.index(v)] += p
        return cls(grid, m)

    def total(self):
        return float(self.masses.sum())

    def mean(self):
        return float(np.dot(self.grid.centers, self.masses))

    def variance(self):
        c = self.grid.centers
        mu = np.dot(c, self.masses)
        return float(np.dot((c - mu) ** 2, self.masses))

    def error_probability(self):
        return error_probability(self)

    def symmetry_defect(self, floor=1e-12):
        """Largest relative violation of ``a(-l) = exp(-l) a(l)`` over bins with mass > ``floor``.

        Quantization perturbs the symmetry, so this is a diagnostic only.
        """
        H = self.grid.half_range
        pos = self.masses[H + 1:]
        neg = self.masses[:H][::-1]
        l = self.grid.centers[H + 1:]
        ok = pos > floor
        if not ok.any():
            return 0.0
        pred = pos[ok] * np.exp(-l[ok])
        return float(np.max(np.abs(neg[ok] - pred) / pos[ok]))

    def to_csv(self, path):
        """Debug dump: ``bin_center,mass`` rows."""
        with open(path, "w", newline="\n") as fh:
            fh.write("bin_center,mass\n")
            for c, m in zip(self.grid.centers, self.masses):
                fh.write(f"{c!r},{m!r}\n")


def _same_grid(a, b):
    if a.grid != b.grid:
        raise DimensionError(f"grid mismatch: {a.grid} vs {b.grid}")


def error_probability(d: QuantizedDensity):
    """Mass below zero plus half the mass in the zero bin."""
    H = d.grid.half_range
    return float(min(0.5, d.masses[:H].sum() + 0.5 * d.masses[H]))


# ---------------------------------------------------------------------------
# initial densities


def initial_density_gaussian(sigma_z2, grid=DEFAULT_GRID):
    """LLR density of BPSK over Gaussian noise with variance ``sigma_z2``.

    The LLR is normal with mean ``2/sigma_z2`` and variance ``4/sigma_z2``;
    each bin receives the exact integral of that density over the bin, and
    the tails beyond the grid go to the extreme bins.
    """
    if not sigma_z2 > 0:
        raise ParameterError(f"sigma_z2 must be positive, got {sigma_z2}")
    mu = 2.0 / sigma_z2
    sd = 2.0 / math.sqrt(sigma_z2)
    edges = (np.arange(-grid.half_range, grid.half_range + 2) - 0.5) * grid.step
    t = (edges - mu) / sd
    t[0], t[-1] = -np.inf, np.inf
    lower = ndtr(t)
    upper = ndtr(-t)
    # difference the tail that is small on each side to keep relative accuracy
    masses = np.where(t[1:] <= 0, lower[1:] - lower[:-1], upper[:-1] - upper[1:])
    masses = np.clip(masses, 0.0, None)
    sat = float(lower[1] + upper[-2])
    return QuantizedDensity(grid, masses / masses.sum(), saturation_mass=sat)


def initial_density_class_a(params: ClassAParams, sample_budget=10**7, grid=DEFAULT_GRID,
                            rng=None, chunk=1 << 20):
    """Histogram estimate of the channel-LLR density under ``x = +1``.

    Draws ``sample_budget`` Class A noise samples, maps ``1 + z`` through
    :func:`noise_model.llr_exact` and bins the result.
    """
    sample_budget = int(sample_budget)
    if sample_budget < 1:
        raise ParameterError("sample_budget must be positive")
    if rng is None:
        rng = np.random.default_rng(0)
    counts = np.zeros(grid.size, dtype=np.int64)
    sat = 0
    done = 0
    while done < sample_budget:
        c = min(chunk, sample_budget - done)
        llr = noise_model.llr_exact(params, 1.0 + noise_model.sample(params, c, rng=rng))
        sat += int(np.count_nonzero(np.abs(llr) > grid.limit + 0.5 * grid.step))
        counts += np.bincount(grid.index(llr), minlength=grid.size)
        done += c
    frac = sat / sample_budget
    if frac > 0.01:
        warnings.warn(f"{100 * frac:.2f}% of initial LLR samples saturated the grid "
                      f"(limit {grid.limit} nats)", RuntimeWarning, stacklevel=2)
    return QuantizedDensity(grid, counts / sample_budget, saturation_mass=frac)


# ---------------------------------------------------------------------------
# convolutions


@functools.lru_cache(maxsize=8)
def _check_table(step, half_range):
    mag = np.arange(half_range + 1) * step
    f = f_combine(mag[:, None], mag[None, :])
    return np.floor(f / step + 0.5).astype(np.int32)


@njit(cache=True)
def _check_kernel(a, b, tab, H, out):
    n = a.shape[0]
    for k in range(n):
        ak = a[k]
        if ak == 0.0:
            continue
        pk = k - H
        mk = pk if pk >= 0 else -pk
        for j in range(n):
            bj = b[j]
            if bj == 0.0:
                continue
            pj = j - H
            r = tab[mk, pj if pj >= 0 else -pj]
            if (pk < 0) != (pj < 0):
                r = -r
            out[H + r] += ak * bj


def de_check_convolve(a: QuantizedDensity, b: QuantizedDensity):
    """Density of ``f_combine(X, Y)`` for independent ``X ~ a``, ``Y ~ b``.

    Every pair of bins is enumerated; the combined value is rounded to the
    nearest bin.  The output cannot leave the grid since ``|f| <= min``.
    """
    _same_grid(a, b)
    H = a.grid.half_range
    out = np.zeros(a.grid.size)
    _check_kernel(a.masses, b.masses, _check_table(a.grid.step, H), H, out)
    return QuantizedDensity(a.grid, out)


def de_var_convolve(a: QuantizedDensity, b: QuantizedDensity):
    """Density of ``X + Y``; mass beyond the grid piles into the extreme bins."""
    _same_grid(a, b)
    H = a.grid.half_range
    full = np.convolve(a.masses, b.masses)
    out = full[H:3 * H + 1].copy()
    low = full[:H].sum()
    high = full[3 * H + 1:].sum()
    out[0] += low
    out[-1] += high
    return QuantizedDensity(a.grid, out, saturation_mass=float(low + high))


def de_evolve(initial: QuantizedDensity, n, keep_densities=False):
    """Evolve ``initial`` through ``n`` polarization levels.

    Returns the ``2**n`` leaf error probabilities, or the leaf densities
    themselves when ``keep_densities`` is set.
    """
    if int(n) != n or n < 0:
        raise ParameterError(f"n must be a non-negative integer, got {n}")
    level = [initial]
    for depth in range(int(n)):
        last = depth == n - 1 and not keep_densities
        nxt = []
        for d in level:
            minus = de_check_convolve(d, d)
            plus = de_var_convolve(d, d)
            if last:
                nxt.extend((error_probability(minus), error_probability(plus)))
            else:
                nxt.extend((minus, plus))
        level = nxt
    if keep_densities:
        return level
    if n == 0:
        return np.array([error_probability(initial)])
    return np.asarray(level, dtype=float)


# ---------------------------------------------------------------------------
# construction results


@dataclass
class ConstructionResult:
    """Per-bit-channel reliabilities and the chosen information set.

    ``per_channel`` holds Bhattacharyya parameters for the heuristic and
    DE error probabilities otherwise; smaller is more reliable.
    """

    method: str
    per_channel: np.ndarray
    info_set: tuple
    blep_product: float
    blep_sum: float
    meta: dict = field(default_factory=dict)

    @property
    def N(self):
        return len(self.per_channel)

    @property
    def K(self):
        return len(self.info_set)

    def code(self):
        return PolarCode(N=self.N, K=self.K, info_set=self.info_set)

    def ranks(self):
        """Rank of each channel (0 = most reliable), ties by lower index."""
        order = reliability_order(self.per_channel)
        r = np.empty(self.N, dtype=np.int64)
        r[order] = np.arange(self.N)
        return r

    def reliability_csv(self):
        label = "z" if self.method == "heuristic" else "pe"
        rows = [f"index,{label},rank"]
        for i, (v, r) in enumerate(zip(self.per_channel, self.ranks())):
            rows.append(f"{i},{float(v)!r},{r}")
        return "\n".join(rows) + "\n"

    def write_reliability_csv(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write(self.reliability_csv())


def reliability_order(values):
    """Indices sorted by increasing value; equal values keep the lower index first."""
    return np.argsort(np.asarray(values, dtype=float), kind="stable")


def select_info_set(values, K):
    return tuple(sorted(int(i) for i in reliability_order(values)[:K]))


def blep_bounds(pe, info_set):
    """``(1 - prod(1 - P_e), sum P_e)`` over ``info_set``, the latter clipped at 1."""
    p = np.clip(np.asarray(pe, dtype=float)[list(info_set)], 0.0, 1.0)
    prod = float(-np.expm1(np.sum(np.log1p(-p)))) if len(p) else 0.0
    return prod, float(min(1.0, p.sum()))


def de_construct(initial: QuantizedDensity, N, K):
    """Density-evolution construction: the K bit channels with smallest P_e."""
    n = int(N).bit_length() - 1
    if N < 1 or (1 << n) != N:
        raise ParameterError(f"N must be a power of two, got {N}")
    if not 0 <= K <= N:
        raise ParameterError(f"K must lie in [0, N], got {K}")
    pe = de_evolve(initial, n)
    info = select_info_set(pe, K)
    prod, total = blep_bounds(pe, info)
    return ConstructionResult("density-evolution", pe, info, prod, total)


# ---------------------------------------------------------------------------
# Bhattacharyya heuristic


def bhattacharyya_initial(params: ClassAParams, coverage=1e-9):
    """Bhattacharyya parameter of the BPSK Class A channel by quadrature.

    Integrates ``sqrt(p(y|+1) p(y|-1))`` over a range wide enough that the
    widest retained mixture term leaves less than ``coverage`` mass outside.
    """
    _, s2 = params.weights_and_variances()
    # Gaussian tail beyond 1 + t*sigma_max is below coverage for this t
    t = math.sqrt(2.0) * float(erfcinv(coverage))
    R = 1.0 + t * math.sqrt(s2.max())

    def integrand(y):
        y = np.asarray(y, dtype=float)
        return np.exp(0.5 * (noise_model.log_pdf_real(params, y - 1.0)
                             + noise_model.log_pdf_real(params, y + 1.0)))

    sigma_min = math.sqrt(s2.min())
    pts = sorted({p for p in (0.5, 1.0, 1.0 + 5 * sigma_min, 2.0) if p < R})
    val, err, info = _quad(integrand, 0.0, R, pts)
    z = 2.0 * val
    if not (0.0 <= z <= 1.0 + 1e-9) or err > 1e-8:
        raise NumericalError(f"Bhattacharyya quadrature failed: value={z!r}, "
                             f"abserr={err!r}, range=[0,{R}], evaluations={info.get('neval')}")
    return min(z, 1.0)


def _quad(fn, a, b, points):
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err, info = integrate.quad(fn, a, b, points=points or None, limit=500,
                                            epsabs=1e-13, epsrel=1e-11, full_output=True)[:3]
        except integrate.IntegrationWarning as exc:
            raise NumericalError(f"quadrature did not converge on [{a}, {b}]: {exc}") from exc
    return val, err, info


def bhattacharyya_leaves(N, z0):
    """Leaf Bhattacharyya values from the erasure recursion, decoder order."""
    n = int(N).bit_length() - 1
    if N < 1 or (1 << n) != N:
        raise ParameterError(f"N must be a power of two, got {N}")
    if not 0.0 <= z0 <= 1.0:
        raise ParameterError(f"z0 must lie in [0, 1], got {z0}")
    z = np.array([float(z0)])
    for _ in range(n):
        nxt = np.empty(2 * len(z))
        nxt[0::2] = 2.0 * z - z * z
        nxt[1::2] = z * z
        z = nxt
    return z


def heuristic_construct(N, K, z0):
    """Bhattacharyya-heuristic construction from the initial parameter ``z0``."""
    if not 0 <= K <= N:
        raise ParameterError(f"K must lie in [0, N], got {K}")
    z = bhattacharyya_leaves(N, z0)
    info = select_info_set(z, K)
    prod, total = blep_bounds(z, info)
    return ConstructionResult("heuristic", z, info, prod, total, meta={"z0": float(z0)})


def heuristic_construct_at_snr(N, K, design_snr_db, A, gamma, truncation_M=20):
    """Heuristic construction with ``z0`` evaluated on the Class A channel at a design SNR."""
    params = ClassAParams.from_snr_db(design_snr_db, A, gamma, truncation_M)
    res = heuristic_construct(N, K, bhattacharyya_initial(params))
    res.meta["design_snr_db"] = float(design_snr_db)
    return res
