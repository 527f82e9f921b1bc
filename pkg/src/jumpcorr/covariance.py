"""Dwell-time covariance analysis across a dataset ensemble.

The central statistic is the normalized covariance of the two qubits'
dwell staircases,

    C(dt) = < tau_A(t) tau_B(t + dt) > / (<tau_A> <tau_B>) - 1,

averaged over every valid t in every dataset of the ensemble, with the
normalizing means taken over the full ensemble.  Uncorrelated devices
give C = 0 at all lags; devices sharing jump schedules for a fraction
of the time show a positive peak at dt = 0 decaying on the dwell
time scale.  Detection-threshold calibration simulates ensembles at a
ladder of injected correlation fractions and compares their fitted
amplitudes against a null-ensemble floor.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidInputError, UndefinedCorrelationError
from .estimator import (
    DwellSeries,
    PeakModel,
    StateTrace,
    dwell_series,
    trace_from_trajectory,
    two_point_filter,
)
from .numerics import ExponentialFit, fit_exponential
from .readout import ReadoutModel, synthesize_iq
from .telegraph import CorrelationInjection, TelegraphConfig, rates_from_t1, sample_correlated_pair


def peaks_from_model(model: ReadoutModel, weight_g: float = 0.5) -> PeakModel:
    """PeakModel with the exact means and sigma of a known readout model.

    Used where the generating model is available (simulation pipelines),
    bypassing the histogram estimation step.
    """
    ax = np.array(model.mean_e, dtype=float) - np.array(model.mean_g, dtype=float)
    ax = ax / np.linalg.norm(ax)
    mu_g = float(np.dot(model.mean_g, ax))
    mu_e = float(np.dot(model.mean_e, ax))
    return PeakModel(mu_g, mu_e, model.sigma, model.sigma, (float(ax[0]), float(ax[1])),
                     tuple(model.mean_g), tuple(model.mean_e), weight_g)


@dataclass
class DatasetEnsemble:
    """Paired dwell staircases of the two devices over many datasets.

    ``tau_a`` and ``tau_b`` are (count, n_samples) arrays, one row per
    dataset, all sharing one sample period.
    """

    tau_a: np.ndarray
    tau_b: np.ndarray
    sample_period: float

    def __post_init__(self):
        self.tau_a = np.asarray(self.tau_a, dtype=float)
        self.tau_b = np.asarray(self.tau_b, dtype=float)
        if self.tau_a.shape != self.tau_b.shape or self.tau_a.ndim != 2:
            raise InvalidInputError(
                f"tau arrays must be equal-shape 2D, got {self.tau_a.shape} and {self.tau_b.shape}"
            )
        if self.tau_a.shape[0] < 1:
            raise InvalidInputError("ensemble must contain at least one dataset")

    @classmethod
    def from_dwell_series(cls, pairs: list[tuple[DwellSeries, DwellSeries]]) -> "DatasetEnsemble":
        if not pairs:
            raise InvalidInputError("empty ensemble")
        period = pairs[0][0].sample_period
        n = len(pairs[0][0])
        for a, b in pairs:
            if a.sample_period != period or b.sample_period != period:
                raise InvalidInputError("all series must share one sample period")
            if len(a) != n or len(b) != n:
                raise InvalidInputError("all series must share one length")
        return cls(
            np.stack([a.tau for a, _ in pairs]),
            np.stack([b.tau for _, b in pairs]),
            period,
        )

    @property
    def count(self) -> int:
        return self.tau_a.shape[0]

    @property
    def n_samples(self) -> int:
        return self.tau_a.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples * self.sample_period


@dataclass
class CovarianceCurve:
    """C(dt) with per-lag standard errors and an optional decay fit."""

    delta_t: np.ndarray
    c: np.ndarray
    stderr: np.ndarray
    count: int
    fit: ExponentialFit | None = None

    def detected_amplitude(self) -> float:
        if self.fit is None:
            raise InvalidInputError("curve has no fit attached")
        return self.fit.amplitude


def default_lags(sample_period: float, max_lag: float = 2000.0) -> np.ndarray:
    """Symmetric lag grid in sample-period steps, spanning +-max_lag."""
    k = int(math.floor(max_lag / sample_period + 1e-9))
    return np.arange(-k, k + 1) * sample_period


def _lag_bins(lags, sample_period: float, n_samples: int) -> np.ndarray:
    lags = np.asarray(lags, dtype=float)
    if lags.size == 0:
        raise InvalidInputError("need at least one lag")
    bins = lags / sample_period
    rounded = np.rint(bins)
    if np.any(np.abs(bins - rounded) > 1e-6):
        raise InvalidInputError("lags must be integer multiples of the sample period")
    bins = rounded.astype(int)
    if np.any(np.abs(bins) >= n_samples / 2):
        raise InvalidInputError("|lag| must stay below half the dataset duration")
    if np.unique(bins).size != bins.size:
        raise InvalidInputError("duplicate lags")
    if np.any(np.diff(bins) <= 0):
        raise InvalidInputError("lags must be strictly increasing")
    return bins


def _lagged_product_means(tau_a: np.ndarray, tau_b: np.ndarray, bins: np.ndarray) -> np.ndarray:
    """Per-dataset mean of tau_a(t) * tau_b(t + lag) for each lag.

    All lags of one dataset chunk come from a single FFT cross
    correlation; edge truncation divides each lag's sum by its overlap
    length.  Summation order is fixed, so results do not depend on how
    callers parallelize over datasets.
    """
    count, n = tau_a.shape
    overlap = n - np.abs(bins)
    size = 2 * n
    out = np.empty((count, bins.size))
    # Chunk datasets to bound the FFT workspace.
    chunk = max(1, int(64 * 1024 * 1024 / (16 * size)))
    for start in range(0, count, chunk):
        a = tau_a[start:start + chunk]
        b = tau_b[start:start + chunk]
        fa = np.fft.rfft(a, size, axis=1)
        fb = np.fft.rfft(b, size, axis=1)
        corr = np.fft.irfft(np.conj(fa) * fb, size, axis=1)
        # corr[:, d] = sum_t a[t] b[t+d] for d >= 0; negative lags wrap.
        idx = np.where(bins >= 0, bins, size + bins)
        out[start:start + chunk] = corr[:, idx]
    return out / overlap


def _window_means(tau_a: np.ndarray, tau_b: np.ndarray, bins: np.ndarray):
    """Per-dataset means of each series over its lag-overlap window.

    At lag d >= 0 the products pair tau_a[0:n-d] with tau_b[d:n]; these
    are the means over exactly those windows, via prefix sums.
    """
    count, n = tau_a.shape
    pa = np.concatenate([np.zeros((count, 1)), np.cumsum(tau_a, axis=1)], axis=1)
    pb = np.concatenate([np.zeros((count, 1)), np.cumsum(tau_b, axis=1)], axis=1)
    overlap = n - np.abs(bins)
    pos = bins >= 0
    sum_a = np.where(pos, pa[:, n - np.abs(bins)], pa[:, [n]] - pa[:, np.abs(bins)])
    sum_b = np.where(pos, pb[:, [n]] - pb[:, np.abs(bins)], pb[:, n - np.abs(bins)])
    return sum_a / overlap, sum_b / overlap


def _brute_force_curve(tau_a, tau_b, bins, mean_mode: str, windowed: bool):
    """Direct double-loop evaluation; the oracle the fast path must match."""
    count, n = tau_a.shape
    products = np.zeros((count, len(bins)))
    win_a = np.zeros((count, len(bins)))
    win_b = np.zeros((count, len(bins)))
    for k in range(count):
        for j, d in enumerate(bins):
            total = 0.0
            sa = 0.0
            sb = 0.0
            m = 0
            for t in range(n):
                u = t + d
                if 0 <= u < n:
                    total += tau_a[k, t] * tau_b[k, u]
                    sa += tau_a[k, t]
                    sb += tau_b[k, u]
                    m += 1
            products[k, j] = total / m
            win_a[k, j] = sa / m
            win_b[k, j] = sb / m
    return _normalize(products, win_a, win_b, tau_a, tau_b, mean_mode, windowed)


def _normalize(products, win_a, win_b, tau_a, tau_b, mean_mode: str, windowed: bool):
    """Per-dataset covariance rows from product means and window means."""
    if mean_mode == "per_dataset":
        if windowed:
            denom = win_a * win_b
        else:
            denom = tau_a.mean(axis=1, keepdims=True) * tau_b.mean(axis=1, keepdims=True)
    elif mean_mode == "grand":
        if windowed:
            denom = win_a.mean(axis=0, keepdims=True) * win_b.mean(axis=0, keepdims=True)
        else:
            denom = float(tau_a.mean()) * float(tau_b.mean())
            denom = np.full((1, products.shape[1]), denom)
    else:
        raise InvalidInputError(f"unknown mean_mode {mean_mode!r}")
    if np.any(denom == 0.0):
        raise InvalidInputError("degenerate series: zero mean dwell in a normalization window")
    return products / denom - 1.0


def normalized_covariance(
    ensemble: DatasetEnsemble,
    lags=None,
    mean_mode: str = "per_dataset",
    windowed: bool = True,
    use_fft: bool = True,
) -> CovarianceCurve:
    """Normalized covariance curve of an ensemble.

    ``mean_mode`` selects the normalization: ``per_dataset`` (default)
    divides each dataset by its own dwell means, which cancels
    dataset-scale dwell fluctuations; ``grand`` divides by means pooled
    over the whole ensemble.  With ``windowed`` (default) the means are
    taken over the same edge-truncated overlap window as the lag's
    products, which removes the positive offset that boundary-truncated
    runs otherwise leave at every lag (the offset is of order
    mean_dwell/duration, ~1.5% at 20.48 ms windows, and overwhelms
    sub-percent injected correlations).  Standard errors are the spread
    of per-dataset curves over sqrt(count).
    """
    if lags is None:
        lags = default_lags(ensemble.sample_period)
    bins = _lag_bins(lags, ensemble.sample_period, ensemble.n_samples)
    lags = np.asarray(lags, dtype=float)

    if use_fft:
        products = _lagged_product_means(ensemble.tau_a, ensemble.tau_b, bins)
        win_a, win_b = _window_means(ensemble.tau_a, ensemble.tau_b, bins)
        per_dataset = _normalize(products, win_a, win_b, ensemble.tau_a, ensemble.tau_b,
                                 mean_mode, windowed)
    else:
        per_dataset = _brute_force_curve(ensemble.tau_a, ensemble.tau_b, bins,
                                         mean_mode, windowed)

    c = per_dataset.mean(axis=0)
    if ensemble.count > 1:
        stderr = per_dataset.std(axis=0, ddof=1) / math.sqrt(ensemble.count)
    else:
        stderr = np.zeros_like(c)
    return CovarianceCurve(lags, c, stderr, ensemble.count)


def fit_covariance_decay(curve: CovarianceCurve, decay_bounds: tuple[float, float] | None = None) -> CovarianceCurve:
    """Fit A * exp(-|dt|/tau_c) to the curve and attach the result.

    Unless overridden, the decay time is confined to [grid step, half
    the lag span]: slower decays are indistinguishable from a constant
    offset within the window, and letting null fits park there would
    report broad noise as amplitude.
    """
    if curve.delta_t.size < 5:
        raise InvalidInputError("need at least 5 lags to fit the decay")
    if decay_bounds is None:
        span = float(np.abs(curve.delta_t).max())
        step = float(np.min(np.diff(np.sort(np.unique(np.abs(curve.delta_t))))))
        decay_bounds = (max(step, span * 1e-9), max(span / 2.0, 2 * step))
    curve.fit = fit_exponential(curve.delta_t, curve.c, decay_bounds=decay_bounds)
    return curve


@dataclass
class StateCorrelationCurve:
    """Mean lagged Pearson correlation of binary state traces."""

    delta_t: np.ndarray
    r: np.ndarray
    stderr: np.ndarray
    count: int


def state_correlation(trace_a: StateTrace, trace_b: StateTrace, lags) -> np.ndarray:
    """Pearson correlation of two binary traces at each lag.

    Overlapping windows are truncated at the record edges; a constant
    window makes the correlation undefined and raises.
    """
    if len(trace_a) != len(trace_b):
        raise InvalidInputError("traces must have equal length")
    if trace_a.sample_period != trace_b.sample_period:
        raise InvalidInputError("traces must share sample period")
    a = trace_a.states.astype(float)
    b = trace_b.states.astype(float)
    bins = _lag_bins(lags, trace_a.sample_period, len(a))
    out = np.empty(bins.size)
    for j, d in enumerate(bins):
        if d >= 0:
            x, y = a[: len(a) - d], b[d:]
        else:
            x, y = a[-d:], b[: len(b) + d]
        sx, sy = x.std(), y.std()
        if sx == 0.0 or sy == 0.0:
            raise UndefinedCorrelationError(
                f"constant trace window at lag {d} bins; correlation undefined"
            )
        out[j] = float(np.mean((x - x.mean()) * (y - y.mean())) / (sx * sy))
    return out


def state_correlation_ensemble(pairs: list[tuple[StateTrace, StateTrace]], lags) -> StateCorrelationCurve:
    """Per-dataset state correlations averaged over an ensemble.

    The standard error is the cross-dataset spread over sqrt(count),
    which (unlike 1/sqrt(n_samples)) remains valid for the strongly
    autocorrelated telegraph traces.
    """
    if not pairs:
        raise InvalidInputError("empty ensemble")
    rows = np.stack([state_correlation(a, b, lags) for a, b in pairs])
    r = rows.mean(axis=0)
    count = rows.shape[0]
    stderr = rows.std(axis=0, ddof=1) / math.sqrt(count) if count > 1 else np.zeros_like(r)
    return StateCorrelationCurve(np.asarray(lags, dtype=float), r, stderr, count)


@dataclass
class FractionResult:
    fraction: float
    amplitudes: list[float]
    decay_times: list[float]
    median_amplitude: float
    amplitude_spread: float
    detected: bool
    failures: int = 0


@dataclass
class ThresholdReport:
    """Outcome of a detection-threshold calibration run."""

    fractions: list[FractionResult]
    null_amplitudes: list[float]
    null_floor: float
    null_floor_percentile: float
    smallest_detected: float | None

    def row_for(self, fraction: float) -> FractionResult:
        for row in self.fractions:
            if row.fraction == fraction:
                return row
        raise KeyError(fraction)


def injection_decay_scale(config_a: TelegraphConfig, config_b: TelegraphConfig,
                          injection: CorrelationInjection) -> float:
    """Expected covariance decay scale of shared-jump epochs, us.

    The covariance of the injected correlation decays on the scale of
    the dwell containing a random correlated instant, i.e. the
    time-weighted mean dwell of the shared schedule,
    E[dwell^2]/E[dwell] for the alternating-exponential process.
    """
    p_e = 0.5 * (config_a.p_e + config_b.p_e)
    up, down = rates_from_t1(injection.correlated_t1, p_e)
    mean_g, mean_e = 1.0 / up, 1.0 / down
    return (mean_g**2 + mean_e**2) / (0.5 * (mean_g + mean_e))


def default_padding(config_a: TelegraphConfig, config_b: TelegraphConfig,
                    dwell_scales: float = 6.0) -> float:
    """Simulation padding long enough that edge runs know their true length.

    Several multiples of the longest mean dwell; runs still straddling
    the padded edges are exponentially rare (~e^-6 at the default).
    """
    longest = 0.0
    for cfg in (config_a, config_b):
        up, down = cfg.rates
        for rate in (up, down):
            if rate > 0:
                longest = max(longest, 1.0 / rate)
    period = config_a.sample_period
    return math.ceil(dwell_scales * longest / period) * period


@dataclass(frozen=True)
class EnsembleSpec:
    """Everything needed to simulate and reduce one ensemble.

    ``padding`` extends each simulated dataset on both sides before the
    analysis window is sliced back out, so dwell values near window
    edges are exact; None picks :func:`default_padding`.
    """

    config_a: TelegraphConfig
    config_b: TelegraphConfig
    injection: CorrelationInjection
    datasets: int
    lags: np.ndarray
    pipeline: str = "truth"  # or "filtered"
    readout: ReadoutModel | None = None
    mean_mode: str = "per_dataset"
    threads: int = 1
    padding: float | None = None

    def resolved_padding(self) -> float:
        if self.padding is None:
            return default_padding(self.config_a, self.config_b)
        return self.padding


def _slice_window(series: DwellSeries, trace: StateTrace, pad_bins: int):
    if pad_bins == 0:
        return series, trace
    sl = slice(pad_bins, len(series.tau) - pad_bins)
    return (
        DwellSeries(series.tau[sl], series.boundary[sl], series.sample_period),
        StateTrace(trace.states[sl], trace.sample_period),
    )


def _dataset_dwells(spec: EnsembleSpec, root_seed: np.random.SeedSequence, index: int):
    pair_seed, noise_a, noise_b = root_seed.spawn(3)
    padding = spec.resolved_padding()
    traj_a, traj_b = sample_correlated_pair(
        spec.config_a, spec.config_b, spec.injection, pair_seed, padding=padding
    )
    if spec.pipeline == "truth":
        trace_a = trace_from_trajectory(traj_a)
        trace_b = trace_from_trajectory(traj_b)
    elif spec.pipeline == "filtered":
        if spec.readout is None:
            raise InvalidInputError("filtered pipeline needs a readout model")
        peaks = peaks_from_model(spec.readout)
        rec_a = synthesize_iq(traj_a, spec.readout, noise_a)
        rec_b = synthesize_iq(traj_b, spec.readout, noise_b)
        trace_a = two_point_filter(rec_a, peaks)
        trace_b = two_point_filter(rec_b, peaks)
    else:
        raise InvalidInputError(f"unknown pipeline {spec.pipeline!r}")
    pad_bins = int(round(padding / spec.config_a.sample_period))
    dw_a, trace_a = _slice_window(dwell_series(trace_a), trace_a, pad_bins)
    dw_b, trace_b = _slice_window(dwell_series(trace_b), trace_b, pad_bins)
    return dw_a, dw_b, trace_a, trace_b


def simulate_ensemble(spec: EnsembleSpec, seed, return_traces: bool = False):
    """Simulate ``spec.datasets`` correlated pairs and reduce to dwell arrays.

    Dataset k always uses the k-th derived seed, so results are
    independent of worker count and collection order.
    """
    if isinstance(seed, np.random.SeedSequence):
        root = seed
    else:
        root = np.random.SeedSequence(int(seed))
    children = root.spawn(spec.datasets)

    def build(k):
        return _dataset_dwells(spec, children[k], k)

    if spec.threads > 1:
        with ThreadPoolExecutor(max_workers=spec.threads) as pool:
            results = list(pool.map(build, range(spec.datasets)))
    else:
        results = [build(k) for k in range(spec.datasets)]

    ensemble = DatasetEnsemble.from_dwell_series([(a, b) for a, b, _, _ in results])
    if return_traces:
        return ensemble, [(ta, tb) for _, _, ta, tb in results]
    return ensemble


def detection_threshold(
    config_a: TelegraphConfig,
    config_b: TelegraphConfig,
    injection_template: CorrelationInjection,
    fractions,
    *,
    datasets_per_ensemble: int,
    ensembles_per_fraction: int,
    null_ensembles: int,
    seed,
    lags=None,
    pipeline: str = "truth",
    readout: ReadoutModel | None = None,
    mean_mode: str = "per_dataset",
    null_floor_percentile: float = 95.0,
    decay_band: tuple[float, float] | None = None,
    threads: int = 1,
) -> ThresholdReport:
    """Calibrate the smallest injected correlated-time fraction detectable.

    For every fraction (and for ``null_ensembles`` zero-injection
    ensembles) this simulates ``ensembles_per_fraction`` independent
    ensembles, reduces each to a covariance curve, fits the exponential
    decay, and compares median fitted amplitudes against the null floor
    (the ``null_floor_percentile`` percentile of |null amplitude|).

    All fits share one decay band, by default (0.5, 2.0) times the
    injection's expected decay scale: amplitudes are only comparable
    across ensembles when fitted against a common template band, and an
    unconstrained decay lets null fits trade decay time against
    amplitude and inflate the floor.

    Per-ensemble simulation or fit failures are recorded and skipped; a
    fraction only errors out if every one of its ensembles fails.
    """
    fractions = sorted(float(f) for f in fractions)
    if ensembles_per_fraction < 1:
        raise InvalidInputError("ensembles_per_fraction must be >= 1")
    if null_ensembles < 1:
        raise InvalidInputError("need at least one null ensemble")
    if lags is None:
        lags = default_lags(config_a.sample_period)
    lags = np.asarray(lags, dtype=float)

    if isinstance(seed, np.random.SeedSequence):
        root = seed
    else:
        root = np.random.SeedSequence(int(seed))

    if decay_band is None:
        scale = injection_decay_scale(config_a, config_b, injection_template)
        decay_band = (0.5 * scale, 2.0 * scale)

    def run_one(fraction: float, stream: int, index: int):
        injection = replace(injection_template, fraction=fraction)
        spec = EnsembleSpec(config_a, config_b, injection, datasets_per_ensemble,
                            lags, pipeline, readout, mean_mode, threads)
        ens_seed = np.random.SeedSequence(
            entropy=root.entropy, spawn_key=root.spawn_key + (stream, index)
        )
        ensemble = simulate_ensemble(spec, ens_seed)
        curve = fit_covariance_decay(normalized_covariance(ensemble, lags, mean_mode),
                                     decay_bounds=decay_band)
        return curve.fit.amplitude, curve.fit.decay_time

    null_amps: list[float] = []
    null_failures = 0
    for i in range(null_ensembles):
        try:
            amp, _ = run_one(0.0, 0, i)
            null_amps.append(amp)
        except Exception:
            null_failures += 1
    if not null_amps:
        raise InvalidInputError("every null ensemble failed; cannot set a floor")
    null_floor = float(np.percentile(np.abs(null_amps), null_floor_percentile))

    rows: list[FractionResult] = []
    for j, fraction in enumerate(fractions):
        amps: list[float] = []
        taus: list[float] = []
        failures = 0
        for i in range(ensembles_per_fraction):
            try:
                amp, tau = run_one(fraction, 1 + j, i)
                amps.append(amp)
                taus.append(tau)
            except Exception:
                failures += 1
        if not amps:
            raise InvalidInputError(f"every ensemble at fraction {fraction} failed")
        median = float(np.median(amps))
        spread = float(np.std(amps, ddof=1)) if len(amps) > 1 else 0.0
        rows.append(FractionResult(fraction, amps, taus, median, spread,
                                   bool(median > null_floor), failures))

    detected = [r.fraction for r in rows if r.detected]
    return ThresholdReport(rows, null_amps, null_floor, null_floor_percentile,
                           min(detected) if detected else None)
