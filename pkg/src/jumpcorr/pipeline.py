"""Run orchestration: stages, outputs, manifest, reproducibility.

Stages (canonical order): spectrum, simulate, synthesize, filter,
dwell, covariance, calibrate.  A selection always executes in canonical
order; a stage consumes upstream products from memory when the upstream
stage ran in the same invocation, falls back to per-dataset files from
a previous run into the same output directory when every dataset was
exported, and raises DependencyError otherwise.

Reproducibility contract: identical config bytes plus identical seed
produce byte-identical CSV and IQR1 outputs, independent of the worker
thread count.  Dataset k of the main chain draws from seed stream
(trajectory, k); readout noise from (readout, k, device); calibration
ensembles from the calibration stream.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .config import ExperimentConfig, load_config
from .covariance import (
    DatasetEnsemble,
    default_lags,
    default_padding,
    detection_threshold,
    fit_covariance_decay,
    normalized_covariance,
    peaks_from_model,
    state_correlation_ensemble,
)
from .errors import DependencyError, InvalidInputError
from .estimator import DwellSeries, StateTrace, dwell_series, trace_from_trajectory, two_point_filter
from .fileio import (
    atomic_write_text,
    read_dwell_series,
    read_iqr,
    read_state_trace,
    write_covariance_curve,
    write_dwell_series,
    write_iqr,
    write_state_correlation,
    write_state_trace,
    write_threshold_report,
    write_trajectory,
)
from .fluxonium import (
    DEVICE_A,
    DEVICE_B,
    fit_spectrum,
    read_spectrum_csv,
    spectrum_sweep,
    write_fit_params,
)
from .readout import IQRecord, synthesize_iq
from .seeding import STREAM_CALIBRATION, STREAM_READOUT, STREAM_TRAJECTORY, child_sequence
from .telegraph import TelegraphTrajectory, sample_correlated_pair

STAGES = ("spectrum", "simulate", "synthesize", "filter", "dwell", "covariance", "calibrate")


@dataclass
class RunManifest:
    """What a run produced, and from which inputs."""

    config_digest: str
    tool_version: str
    seed: int
    threads: int
    stages: list[str]
    outputs: dict[str, list[str]] = field(default_factory=dict)
    timings_s: dict[str, float] = field(default_factory=dict)
    dataset_seed_rule: str = ""
    calibration_seed_rule: str = ""

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True) + "\n"


def normalize_stages(stages) -> list[str]:
    if stages is None:
        selected = list(STAGES)
    elif isinstance(stages, str):
        selected = [s.strip() for s in stages.split(",") if s.strip()]
    else:
        selected = list(stages)
    for s in selected:
        if s not in STAGES:
            raise InvalidInputError(f"unknown stage {s!r}; valid: {', '.join(STAGES)}")
    return [s for s in STAGES if s in selected]


def _window_trajectory(traj: TelegraphTrajectory, pad_bins: int) -> TelegraphTrajectory:
    """Slice the analysis window out of a padded trajectory."""
    if pad_bins == 0:
        return traj
    period = traj.sample_period
    pad_us = pad_bins * period
    n = traj.n_samples - 2 * pad_bins
    start = traj.jump_times.searchsorted(pad_us, side="right")
    stop = traj.jump_times.searchsorted(pad_us + n * period, side="right")
    jumps = traj.jump_times[start:stop] - pad_us
    initial = (traj.initial_state + start) % 2
    return TelegraphTrajectory(traj.states[pad_bins:-pad_bins].copy(), period, jumps, int(initial))


class _Runner:
    def __init__(self, config: ExperimentConfig, out_dir: str, threads: int):
        self.config = config
        self.out = out_dir
        self.threads = threads
        self.memory: dict[str, object] = {}
        self.manifest_outputs: dict[str, list[str]] = {}

        mon = config.monitoring
        self.fraction = config.injection.fractions[0]
        self.injection = config.injection.injection(self.fraction)
        self.telegraph_a = config.device_a.telegraph(mon.sample_period_us, mon.duration_us)
        self.telegraph_b = config.device_b.telegraph(mon.sample_period_us, mon.duration_us)
        self.padding = default_padding(self.telegraph_a, self.telegraph_b)
        self.pad_bins = int(round(self.padding / mon.sample_period_us))
        self.n_bins = int(round(mon.duration_us / mon.sample_period_us))
        self.readout_model = config.readout.model()
        self.peaks = peaks_from_model(self.readout_model)

    # -- path helpers ---------------------------------------------------
    def path(self, name: str) -> str:
        return os.path.join(self.out, name)

    def record(self, stage: str, *names: str) -> None:
        self.manifest_outputs.setdefault(stage, []).extend(names)

    def _per_dataset(self, kind: str, device: str, k: int) -> str:
        ext = "iqr" if kind == "record" else "csv"
        return f"{kind}_{device}_{k:04d}.{ext}"

    # -- dataset construction -------------------------------------------
    def _build_dataset(self, k: int):
        pair_seed = child_sequence(self.config.seed, STREAM_TRAJECTORY, k)
        traj_a, traj_b = sample_correlated_pair(
            self.telegraph_a, self.telegraph_b, self.injection, pair_seed, padding=self.padding
        )
        return traj_a, traj_b

    def _synthesize(self, k: int, traj_a, traj_b):
        rec_a = synthesize_iq(traj_a, self.readout_model, child_sequence(self.config.seed, STREAM_READOUT, k, 0))
        rec_b = synthesize_iq(traj_b, self.readout_model, child_sequence(self.config.seed, STREAM_READOUT, k, 1))
        return rec_a, rec_b

    def _map(self, fn, items):
        if self.threads > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                return list(pool.map(fn, items))
        return [fn(i) for i in items]

    # -- stages ----------------------------------------------------------
    def stage_spectrum(self):
        fluxes = np.linspace(0.0, 1.0, self.config.spectrum_flux_points)
        for name, params in (("A", self.config.device_a.fluxonium or DEVICE_A),
                             ("B", self.config.device_b.fluxonium or DEVICE_B)):
            points = spectrum_sweep(params, fluxes)
            lines = ["phi_ext,f01_ghz"] + [f"{p.phi_ext:.10g},{p.f01_ghz:.10g}" for p in points]
            fname = f"spectrum_device_{name}.csv"
            atomic_write_text(self.path(fname), "\n".join(lines) + "\n")
            self.record("spectrum", fname)
        if self.config.spectrum_data_path:
            data = read_spectrum_csv(self.config.spectrum_data_path)
            initial = self.config.device_a.fluxonium or DEVICE_A
            fitted, offset, result = fit_spectrum(data, initial, flux_offset_free=True)
            write_fit_params(self.path("fitted_params.txt"), fitted, offset)
            self.record("spectrum", "fitted_params.txt")

    def stage_simulate(self):
        datasets = self.config.monitoring.datasets
        pairs = self._map(self._build_dataset, range(datasets))
        self.memory["trajectories"] = pairs
        for k in range(min(self.config.export_limit, datasets)):
            for device, traj in (("A", pairs[k][0]), ("B", pairs[k][1])):
                window = _window_trajectory(traj, self.pad_bins)
                csv = self._per_dataset("trajectory", device, k)
                jumps = f"trajectory_{device}_{k:04d}_jumps.txt"
                write_trajectory(self.path(csv), self.path(jumps), window)
                self.record("simulate", csv, jumps)

    def _trajectories(self):
        if "trajectories" not in self.memory:
            raise DependencyError("stage needs trajectories; run the simulate stage first")
        return self.memory["trajectories"]

    def stage_synthesize(self):
        pairs = self._trajectories()
        records = self._map(lambda k: self._synthesize(k, *pairs[k]), range(len(pairs)))
        self.memory["records"] = records
        for k in range(min(self.config.export_limit, len(records))):
            for device, rec in (("A", records[k][0]), ("B", records[k][1])):
                window = IQRecord(rec.samples[self.pad_bins:len(rec.samples) - self.pad_bins],
                                  rec.sample_period)
                name = self._per_dataset("record", device, k)
                write_iqr(self.path(name), window)
                self.record("synthesize", name)

    def _load_all(self, kind: str, loader):
        datasets = self.config.monitoring.datasets
        out = []
        for k in range(datasets):
            pair = []
            for device in ("A", "B"):
                fname = self.path(self._per_dataset(kind, device, k))
                if not os.path.exists(fname):
                    raise DependencyError(
                        f"missing upstream output {fname}; run the producing stage "
                        "in this invocation or export every dataset (export_limit >= datasets)"
                    )
                pair.append(loader(fname))
            out.append(tuple(pair))
        return out

    def stage_filter(self):
        mode = self.config.analysis.filter_mode
        if "records" in self.memory:
            records = self.memory["records"]
            traces = self._map(
                lambda k: (two_point_filter(records[k][0], self.peaks, mode=mode),
                           two_point_filter(records[k][1], self.peaks, mode=mode)),
                range(len(records)),
            )
            padded = True
        else:
            period = self.config.monitoring.sample_period_us
            records = self._load_all("record", lambda p: read_iqr(p))
            traces = [
                (two_point_filter(a, self.peaks, mode=mode), two_point_filter(b, self.peaks, mode=mode))
                for a, b in records
            ]
            padded = False
        self.memory["filtered"] = (traces, padded)
        for k in range(min(self.config.export_limit, len(traces))):
            for device, trace in (("A", traces[k][0]), ("B", traces[k][1])):
                window = trace
                if padded:
                    window = StateTrace(trace.states[self.pad_bins:len(trace.states) - self.pad_bins],
                                        trace.sample_period)
                name = self._per_dataset("state", device, k)
                write_state_trace(self.path(name), window)
                self.record("filter", name)

    def _traces_for_analysis(self):
        """(padded?, list of trace pairs) according to the configured pipeline."""
        if self.config.analysis.pipeline == "filtered":
            if "filtered" in self.memory:
                return self.memory["filtered"][1], self.memory["filtered"][0]
            period = self.config.monitoring.sample_period_us
            return False, self._load_all("state", lambda p: read_state_trace(p, period))
        if "trajectories" in self.memory:
            pairs = self.memory["trajectories"]
            return True, [(trace_from_trajectory(a), trace_from_trajectory(b)) for a, b in pairs]
        period = self.config.monitoring.sample_period_us
        return False, self._load_all("trajectory", lambda p: read_state_trace(p, period))

    def stage_dwell(self):
        padded, traces = self._traces_for_analysis()
        pad = self.pad_bins if padded else 0

        def build(pair):
            out = []
            for trace in pair:
                d = dwell_series(trace)
                if pad:
                    sl = slice(pad, len(d.tau) - pad)
                    d = DwellSeries(d.tau[sl], d.boundary[sl], d.sample_period)
                out.append(d)
            return tuple(out)

        dwells = self._map(build, traces)
        if pad:
            traces = [
                (StateTrace(a.states[pad:len(a.states) - pad], a.sample_period),
                 StateTrace(b.states[pad:len(b.states) - pad], b.sample_period))
                for a, b in traces
            ]
        self.memory["dwells"] = dwells
        self.memory["window_traces"] = traces
        for k in range(min(self.config.export_limit, len(dwells))):
            for device, dw in (("A", dwells[k][0]), ("B", dwells[k][1])):
                name = self._per_dataset("dwell", device, k)
                write_dwell_series(self.path(name), dw)
                self.record("dwell", name)

    def stage_covariance(self):
        period = self.config.monitoring.sample_period_us
        if "dwells" in self.memory:
            dwells = self.memory["dwells"]
            traces = self.memory["window_traces"]
        else:
            dwells = self._load_all("dwell", lambda p: read_dwell_series(p, period))
            try:
                traces = self._load_all("state", lambda p: read_state_trace(p, period))
            except DependencyError:
                traces = self._load_all("trajectory", lambda p: read_state_trace(p, period))

        analysis = self.config.analysis
        lags = default_lags(period, analysis.lag_max_us)
        ensemble = DatasetEnsemble.from_dwell_series(dwells)
        curve = normalized_covariance(ensemble, lags, analysis.mean_mode, analysis.windowed_means)
        fit_covariance_decay(curve)
        write_covariance_curve(self.path("covariance_curve.csv"), curve)
        fit_lines = [
            f"amplitude={curve.fit.amplitude:.10g}",
            f"decay_time_us={curve.fit.decay_time:.10g}",
            f"decay_undetermined={int(curve.fit.decay_undetermined)}",
            f"converged={int(curve.fit.fit.converged)}",
            f"residual_norm={curve.fit.fit.residual_norm:.10g}",
        ]
        atomic_write_text(self.path("covariance_fit.txt"), "\n".join(fit_lines) + "\n")

        state_lags = default_lags(period, analysis.state_lag_max_us)
        state_curve = state_correlation_ensemble(traces, state_lags)
        write_state_correlation(self.path("state_correlation.csv"), state_curve)
        self.record("covariance", "covariance_curve.csv", "covariance_fit.txt", "state_correlation.csv")

    def stage_calibrate(self):
        analysis = self.config.analysis
        fractions = [f for f in self.config.injection.fractions if f > 0]
        report = detection_threshold(
            self.telegraph_a,
            self.telegraph_b,
            self.injection,
            fractions,
            datasets_per_ensemble=self.config.monitoring.datasets,
            ensembles_per_fraction=analysis.ensembles_per_fraction,
            null_ensembles=analysis.null_ensembles,
            seed=child_sequence(self.config.seed, STREAM_CALIBRATION),
            lags=default_lags(self.config.monitoring.sample_period_us, analysis.lag_max_us),
            pipeline=analysis.pipeline,
            readout=self.readout_model,
            mean_mode=analysis.mean_mode,
            null_floor_percentile=analysis.null_floor_percentile,
            threads=self.threads,
        )
        write_threshold_report(self.path("threshold_report.txt"), report)
        self.record("calibrate", "threshold_report.txt")
        self.memory["threshold_report"] = report


def run_pipeline(config, stages=None, out_dir=".", seed=None, threads=None) -> RunManifest:
    """Execute the selected stages of a configured run.

    ``config`` is an ExperimentConfig or a path to a config file; the
    optional ``seed``/``threads`` override the configured values.
    """
    if not isinstance(config, ExperimentConfig):
        config = load_config(config)
    if seed is not None:
        if not 0 <= int(seed) < 2**64:
            raise InvalidInputError(f"seed must fit in 64 bits, got {seed}")
        config.seed = int(seed)
    threads = config.threads if threads is None else max(1, int(threads))
    selected = normalize_stages(stages)

    os.makedirs(out_dir, exist_ok=True)
    runner = _Runner(config, out_dir, threads)
    manifest = RunManifest(
        config_digest=config.digest,
        tool_version=__version__,
        seed=config.seed,
        threads=threads,
        stages=selected,
        dataset_seed_rule=f"SeedSequence(seed, spawn_key=({STREAM_TRAJECTORY}|{STREAM_READOUT}, dataset_index[, device]))",
        calibration_seed_rule=f"SeedSequence(seed, spawn_key=({STREAM_CALIBRATION},)).spawn_key + (stream, ensemble)",
    )
    for stage in selected:
        t0 = time.perf_counter()
        getattr(runner, f"stage_{stage}")()
        manifest.timings_s[stage] = round(time.perf_counter() - t0, 6)
    manifest.outputs = runner.manifest_outputs
    atomic_write_text(os.path.join(out_dir, "manifest.json"), manifest.to_json())
    return manifest
