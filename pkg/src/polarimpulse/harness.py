"""
Monte Carlo frame-error simulation and analytic block-error bounds.

Every simulated block draws its message and noise from its own Philox
stream keyed by ``(seed, point index, block index)``, so results do not
depend on how blocks are batched or spread over worker processes.  Blocks
are tallied strictly in index order and the stopping rule (``min_block_errors``
or ``max_blocks``) is applied block by block.
"""

from __future__ import annotations

import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import construction, noise_model, ofdm
from .config import ExperimentConfig
from .errors import ConfigError
from .polar_codec import PolarCode, encode, read_info_set, sc_decode

log = logging.getLogger(__name__)

# spawn-key prefixes separating the independent random streams of a run
_BLOCKS, _CALIBRATION, _BOUND, _CONSTRUCTION = 0, 1, 2, 3


def stream(seed, *key):
    """Counter-based generator for the stream identified by ``(seed, *key)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=key)))


def wilson_interval(errors, trials, z=1.959963984540054):
    """Wilson score interval ``(low, high)`` for a binomial proportion."""
    if trials <= 0:
        return 0.0, 1.0
    p = errors / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z / denom * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials))
    return max(0.0, center - half), min(1.0, center + half)


@dataclass(frozen=True)
class FerRecord:
    snr_db: float
    blocks_run: int
    block_errors: int
    bit_errors: int
    bits_per_block: int

    @property
    def fer(self):
        return self.block_errors / self.blocks_run if self.blocks_run else float("nan")

    @property
    def ber(self):
        n = self.blocks_run * self.bits_per_block
        return self.bit_errors / n if n else float("nan")

    @property
    def interval(self):
        return wilson_interval(self.block_errors, self.blocks_run)

    @property
    def ci95(self):
        """Half-width of the 95% Wilson interval."""
        lo, hi = self.interval
        return (hi - lo) / 2.0


@dataclass(frozen=True)
class BoundRecord:
    snr_db: float
    blep_product: float
    blep_sum: float
    saturation: float

    @property
    def quantization_ok(self):
        return self.saturation < 0.01


# ---------------------------------------------------------------------------
# code resolution


def build_code(config: ExperimentConfig):
    """Construct (or load) the code described by ``config.code_spec``."""
    spec = config.code_spec
    if spec.method == "file":
        code = read_info_set(spec.info_set_file)
        if (code.N, code.K) != (spec.N, spec.K):
            raise ConfigError(f"{spec.info_set_file}: holds N={code.N} K={code.K}, "
                              f"config says N={spec.N} K={spec.K}")
        return code
    return construct(config, spec.method, spec.design_snr_db).code()


def construct(config: ExperimentConfig, method, design_snr_db):
    """Construction result for ``config``'s channel at a design SNR."""
    spec = config.code_spec
    params = config.noise.params_at(design_snr_db)
    if method == "heuristic":
        z0 = construction.bhattacharyya_initial(params)
        res = construction.heuristic_construct(spec.N, spec.K, z0)
    elif method == "de":
        initial = initial_density(config, params, stream(spec.construction_seed, _CONSTRUCTION),
                                  spec.construction_samples)
        res = construction.de_construct(initial, spec.N, spec.K)
    else:
        raise ConfigError(f"unknown construction method {method!r}")
    res.meta["design_snr_db"] = float(design_snr_db)
    return res


def resolve(config: ExperimentConfig):
    return config if config.code is not None else config.with_code(build_code(config))


def initial_density(config, params, rng, samples):
    """Channel-LLR density for DE: histogram for single carrier, Gaussian for OFDM."""
    if config.modulation == "single-carrier":
        return construction.initial_density_class_a(params, samples, config.grid, rng)
    var = ofdm.effective_gaussian_variance(params, config.ofdm, rng, config.calibration_symbols,
                                           config.complex_convention)
    return construction.initial_density_gaussian(var, config.grid)


# ---------------------------------------------------------------------------
# Monte Carlo


@dataclass(frozen=True)
class PointTask:
    """Everything a worker needs to simulate blocks at one operating point."""

    code: PolarCode
    params: noise_model.ClassAParams
    modulation: str
    ofdm_config: ofdm.OfdmConfig | None
    convention: str
    llr_gain: float
    llr_variance: float
    seed: int
    point: int

    def simulate(self, start, count):
        """Per-block ``(block_error, bit_errors)`` for blocks ``start .. start+count-1``."""
        N, K = self.code.N, self.code.K
        cplx = self.modulation == "ofdm"
        msgs = np.empty((count, K), dtype=np.uint8)
        noise = np.empty((count, N), dtype=complex if cplx else float)
        for r in range(count):
            rng = stream(self.seed, _BLOCKS, self.point, start + r)
            msgs[r] = rng.integers(0, 2, K, dtype=np.uint8)
            noise[r] = noise_model.sample(self.params, N, cplx, rng, self.convention)
        x = 1.0 - 2.0 * encode(self.code, msgs)
        if not cplx:
            llrs = noise_model.llr_exact(self.params, x + noise)
        else:
            rx = ofdm.apply_nonlinearity(ofdm.ofdm_modulate(x) + noise, self.ofdm_config)
            llrs = ofdm.subcarrier_llrs(ofdm.ofdm_demodulate(rx), self.llr_variance, self.llr_gain)
        est, _ = sc_decode(self.code, llrs)
        wrong = est != msgs
        return wrong.any(axis=1), wrong.sum(axis=1)


@dataclass(frozen=True)
class BernoulliTask:
    """Dummy channel whose blocks fail independently with probability ``p``."""

    p: float
    seed: int
    point: int = 0
    bits_per_block: int = 1

    def simulate(self, start, count):
        err = np.array([stream(self.seed, _BLOCKS, self.point, start + r).random() < self.p
                        for r in range(count)])
        return err, err.astype(np.int64)


def point_task(config: ExperimentConfig, point):
    if config.code is None:
        raise ConfigError("no code: construct or load one before simulating")
    snr = config.snr_points[point]
    params = config.noise.params_at(snr)
    gain, var = 1.0, 1.0
    if config.modulation == "ofdm":
        if config.ofdm.llr_variance_mode == "analytic":
            var = ofdm.analytic_real_variance(params, config.complex_convention)
        else:
            gain, var = ofdm.calibrate(params, config.ofdm, stream(config.seed, _CALIBRATION, point),
                                       config.calibration_symbols, config.complex_convention)
    return PointTask(config.code, params, config.modulation, config.ofdm,
                     config.complex_convention, gain, var, config.seed, point)


def _chunks(max_blocks, first=32, largest=2048):
    start, size = 0, first
    while start < max_blocks:
        n = min(size, max_blocks - start)
        yield start, n
        start += n
        size = min(2 * size, largest)


def run_point(task, min_block_errors, max_blocks, executor=None, workers=1, snr_db=0.0,
              bits_per_block=None):
    """Simulate one operating point until the stopping rule fires."""
    if bits_per_block is None:
        bits_per_block = task.code.K if hasattr(task, "code") else task.bits_per_block
    blocks = errors = bit_errors = 0
    chunks = _chunks(max_blocks)
    pending = []
    done = False

    def submit():
        nxt = next(chunks, None)
        if nxt is None:
            return False
        if executor is None:
            pending.append(nxt + (None,))
        else:
            pending.append(nxt + (executor.submit(task.simulate, *nxt),))
        return True

    for _ in range(max(1, 2 * workers)):
        submit()
    while pending and not done:
        start, count, fut = pending.pop(0)
        blk_err, bit_err = fut.result() if fut is not None else task.simulate(start, count)
        for e, b in zip(blk_err, bit_err):
            blocks += 1
            errors += int(e)
            bit_errors += int(b)
            if errors >= min_block_errors or blocks >= max_blocks:
                done = True
                break
        if not done:
            submit()
    for _, _, fut in pending:
        if fut is not None:
            fut.cancel()
    return FerRecord(float(snr_db), blocks, errors, bit_errors, bits_per_block)


def run_fer(config: ExperimentConfig, progress=None):
    """Simulated FER/BER at every SNR point of ``config`` (code must be resolved)."""
    if config.code is None:
        raise ConfigError("no code: construct or load one before simulating")
    records = []
    executor = ProcessPoolExecutor(config.workers) if config.workers > 1 else None
    try:
        for i, snr in enumerate(config.snr_points):
            task = point_task(config, i)
            rec = run_point(task, config.min_block_errors, config.max_blocks, executor,
                            config.workers, snr, config.code.K)
            log.info("snr=%.3f dB blocks=%d errors=%d fer=%.3e", snr, rec.blocks_run,
                     rec.block_errors, rec.fer)
            if progress is not None:
                progress(rec)
            records.append(rec)
    finally:
        if executor is not None:
            executor.shutdown(cancel_futures=True)
    return records


def run_bound(config: ExperimentConfig):
    """DE block-error bounds of ``config.code`` at every SNR point."""
    if config.code is None:
        raise ConfigError("no code: construct or load one before bounding")
    out = []
    for i, snr in enumerate(config.snr_points):
        params = config.noise.params_at(snr)
        init = initial_density(config, params, stream(config.seed, _BOUND, i), config.bound_samples)
        pe = construction.de_evolve(init, config.code.n)
        prod, total = construction.blep_bounds(pe, config.code.info_set)
        out.append(BoundRecord(float(snr), prod, total, float(init.saturation_mass)))
    return out


# ---------------------------------------------------------------------------
# sweeps


def sweep_design_snr(config: ExperimentConfig, design_snrs, pilot_snr):
    """Heuristic constructions at each design SNR, scored by FER at ``pilot_snr``.

    Returns ``(rows, best)`` where rows are ``(design_snr, code, FerRecord)``
    and ``best`` is the row with the lowest FER (earliest on ties).
    """
    pilot = config.replace(snr_points=(pilot_snr,))
    rows = []
    for d in design_snrs:
        code = construct(config, "heuristic", d).code()
        rec = run_fer(pilot.with_code(code))[0]
        rows.append((float(d), code, rec))
    best = min(rows, key=lambda r: (r[2].fer, r[2].block_errors))
    return rows, best


def sweep_threshold(config: ExperimentConfig, thresholds, snr_db):
    """FER at ``snr_db`` for each front-end threshold T (OFDM with a nonlinearity)."""
    if config.modulation != "ofdm" or config.ofdm.nonlinearity == "none":
        raise ConfigError("threshold sweeps need ofdm modulation with a nonlinearity")
    config = resolve(config)
    rows = []
    for T in thresholds:
        cfg = config.replace(snr_points=(snr_db,),
                             ofdm=ofdm.OfdmConfig(config.ofdm.num_carriers, config.ofdm.nonlinearity,
                                                  float(T), config.ofdm.llr_variance_mode))
        rows.append((float(T), run_fer(cfg)[0]))
    return rows


# ---------------------------------------------------------------------------
# analysis helpers


def snr_at_fer(snrs, fers, target):
    """SNR where the curve first crosses ``target``, interpolating log10(FER) linearly.

    Returns ``nan`` when the curve never reaches the target.
    """
    s = np.asarray(snrs, dtype=float)
    f = np.asarray(fers, dtype=float)
    for i in range(len(s) - 1):
        if f[i] >= target > f[i + 1] or (f[i] > target >= f[i + 1]):
            if f[i + 1] <= 0:
                return float(s[i + 1])
            a, b = math.log10(f[i]), math.log10(f[i + 1])
            return float(s[i] + (math.log10(target) - a) / (b - a) * (s[i + 1] - s[i]))
    return float("nan")


def per_db_improvement(snrs, fers, span=3.0):
    """Average factor by which FER falls per dB over the last ``span`` dB of a curve."""
    s = np.asarray(snrs, dtype=float)
    f = np.asarray(fers, dtype=float)
    end = s[-1]
    start_idx = int(np.searchsorted(s, end - span - 1e-9))
    if start_idx >= len(s) - 1 or f[-1] <= 0:
        return float("nan")
    width = end - s[start_idx]
    return float((f[start_idx] / f[-1]) ** (1.0 / width))


# ---------------------------------------------------------------------------
# CSV output


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _header(config, kind):
    blob = json.dumps(config.canonical(), sort_keys=True, separators=(",", ":"))
    return [f"# polarimpulse {kind}", f"# config_sha256={config.digest()}", f"# config={blob}"]


def results_csv(config, records, bounds=None):
    """Results table text; bound columns appear when ``bounds`` is given."""
    cols = ["snr_db", "blocks", "block_errors", "bit_errors", "fer", "ber", "ci95"]
    if bounds is not None:
        cols += ["blep_product", "blep_sum"]
    buf = io.StringIO()
    for line in _header(config, "fer"):
        buf.write(line + "\n")
    buf.write(",".join(cols) + "\n")
    for i, r in enumerate(records):
        row = [r.snr_db, r.blocks_run, r.block_errors, r.bit_errors, r.fer, r.ber, r.ci95]
        if bounds is not None:
            row += [bounds[i].blep_product, bounds[i].blep_sum]
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def bound_csv(config, bounds):
    buf = io.StringIO()
    for line in _header(config, "bound"):
        buf.write(line + "\n")
    buf.write("snr_db,blep_product,blep_sum,saturation\n")
    for b in bounds:
        buf.write(",".join(_fmt(v) for v in (b.snr_db, b.blep_product, b.blep_sum, b.saturation)) + "\n")
    return buf.getvalue()


def read_csv_table(path):
    """Read a results/bound CSV (comment lines skipped) into a dict of columns."""
    with open(path) as fh:
        rows = [ln.rstrip("\n") for ln in fh if ln.strip() and not ln.startswith("#")]
    if not rows:
        raise ValueError(f"{path}: no table")
    names = rows[0].split(",")
    cols = {n: [] for n in names}
    for ln in rows[1:]:
        for n, v in zip(names, ln.split(",")):
            cols[n].append(float(v))
    return cols
