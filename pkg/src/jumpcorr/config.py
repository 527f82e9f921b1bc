"""Experiment configuration: INI-style sections, validated into dataclasses.

A config file fully determines a run, including all randomness (the
master seed is mandatory).  Device blocks specify either the telegraph
parameters directly (t1/p_e) or the physics they derive from
(f01/temperature, or fluxonium circuit energies plus a flux bias).

Example::

    [run]
    seed = 20260810
    datasets = 2000
    export_limit = 4

    [monitoring]
    sample_period_us = 5.0
    duration_us = 20480.0

    [device.A]
    t1_us = 100.0
    f01_ghz = 0.565
    temperature_mk = 20.0

    [device.B]
    t1_us = 100.0
    e_j_ghz = 6.203243769153
    e_c_ghz = 2.5
    e_l_ghz = 0.359256072103
    phi_ext = 0.5
    temperature_mk = 25.0

    [readout]
    separation = 1.0
    target_fidelity = 0.95

    [injection]
    fractions = 0, 0.01, 0.03
    epoch_mean_length_us = 500.0
    correlated_t1_us = 150.0

    [analysis]
    lag_max_us = 2000.0
    filter_mode = peak
    pipeline = truth
    mean_mode = per_dataset
    ensembles_per_fraction = 10
    null_ensembles = 20
    null_floor_percentile = 95.0
"""

from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass, field

from .errors import ValidationError
from .fluxonium import FluxoniumParams, transition_frequency
from .readout import ReadoutModel, sigma_for_fidelity
from .telegraph import CorrelationInjection, TelegraphConfig, equilibrium_population


@dataclass
class DeviceSettings:
    name: str
    t1_us: float
    p_e: float
    f01_ghz: float | None = None
    temperature_mk: float | None = None
    fluxonium: FluxoniumParams | None = None
    phi_ext: float = 0.5

    def telegraph(self, sample_period: float, duration: float, seed: int = 0) -> TelegraphConfig:
        return TelegraphConfig(self.t1_us, self.p_e, sample_period, duration, seed)


@dataclass
class ReadoutSettings:
    mean_g: tuple[float, float]
    mean_e: tuple[float, float]
    sigma: float
    target_fidelity: float | None

    def model(self) -> ReadoutModel:
        return ReadoutModel(self.mean_g, self.mean_e, self.sigma)


@dataclass
class MonitoringSettings:
    sample_period_us: float
    duration_us: float
    datasets: int


@dataclass
class InjectionSettings:
    fractions: list[float]
    epoch_mean_length_us: float
    correlated_t1_us: float
    align_boundaries: bool = True

    def injection(self, fraction: float) -> CorrelationInjection:
        return CorrelationInjection(fraction, self.epoch_mean_length_us,
                                    self.correlated_t1_us, self.align_boundaries)


@dataclass
class AnalysisSettings:
    lag_max_us: float = 2000.0
    filter_mode: str = "peak"
    pipeline: str = "truth"
    mean_mode: str = "per_dataset"
    windowed_means: bool = True
    ensembles_per_fraction: int = 3
    null_ensembles: int = 5
    null_floor_percentile: float = 95.0
    state_lag_max_us: float = 250.0


@dataclass
class ExperimentConfig:
    seed: int
    device_a: DeviceSettings
    device_b: DeviceSettings
    monitoring: MonitoringSettings
    readout: ReadoutSettings
    injection: InjectionSettings
    analysis: AnalysisSettings
    export_limit: int = 4
    threads: int = 1
    spectrum_flux_points: int = 81
    spectrum_data_path: str | None = None
    digest: str = ""


def _fail(path, message):
    raise ValidationError(f"{path}: {message}")


class _Section:
    """One INI section with typed, path-reporting accessors."""

    def __init__(self, name, raw):
        self.name = name
        self.raw = dict(raw)
        self.seen = set()

    def _get(self, key, default, cast, required=False):
        path = f"{self.name}.{key}"
        if key not in self.raw:
            if required:
                _fail(path, "missing required key")
            return default
        self.seen.add(key)
        text = self.raw[key].strip()
        try:
            return cast(text)
        except ValidationError:
            raise
        except Exception:
            _fail(path, f"cannot parse value {text!r}")

    def get_float(self, key, default=None, required=False):
        return self._get(key, default, float, required)

    def get_int(self, key, default=None, required=False):
        return self._get(key, default, int, required)

    def get_str(self, key, default=None, required=False):
        return self._get(key, default, str, required)

    def get_bool(self, key, default=None, required=False):
        def cast(text):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        return self._get(key, default, cast, required)

    def get_floats(self, key, default=None, required=False):
        return self._get(key, default, lambda t: [float(x) for x in t.split(",") if x.strip() != ""], required)

    def check_unknown(self, known):
        for key in self.raw:
            if key not in known:
                _fail(f"{self.name}.{key}", "unknown key")


def _parse_device(section: _Section, sample_period, duration) -> DeviceSettings:
    name = section.name.split(".", 1)[1]
    known = {"t1_us", "p_e", "f01_ghz", "temperature_mk",
             "e_j_ghz", "e_c_ghz", "e_l_ghz", "basis_size", "phi_ext"}
    section.check_unknown(known)

    t1 = section.get_float("t1_us", required=True)
    if not t1 > 0:
        _fail(f"{section.name}.t1_us", f"must be positive, got {t1}")

    flux = None
    f01 = section.get_float("f01_ghz")
    e_j = section.get_float("e_j_ghz")
    if e_j is not None:
        e_c = section.get_float("e_c_ghz", required=True)
        e_l = section.get_float("e_l_ghz", required=True)
        basis = section.get_int("basis_size", 100)
        phi_ext = section.get_float("phi_ext", 0.5)
        try:
            flux = FluxoniumParams(e_j, e_c, e_l, basis)
        except ValueError as exc:
            _fail(section.name, str(exc))
        if f01 is None:
            f01 = transition_frequency(flux, phi_ext)
    else:
        phi_ext = section.get_float("phi_ext", 0.5)

    p_e = section.get_float("p_e")
    temperature = section.get_float("temperature_mk")
    if p_e is None:
        if temperature is None or f01 is None:
            _fail(section.name, "need p_e, or temperature_mk plus f01_ghz/fluxonium energies")
        if temperature <= 0:
            _fail(f"{section.name}.temperature_mk", f"must be positive, got {temperature}")
        p_e = equilibrium_population(f01, temperature)
    if not 0 <= p_e < 0.5:
        _fail(f"{section.name}.p_e", f"thermal population must lie in [0, 0.5), got {p_e:.4g}")

    try:
        TelegraphConfig(t1, p_e, sample_period, duration)
    except ValueError as exc:
        _fail(section.name, str(exc))
    return DeviceSettings(name, t1, p_e, f01, temperature, flux, phi_ext)


def parse_config(text: str, digest: str = "") -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ValidationError(f"config: {exc}") from exc

    sections = {name: _Section(name, parser[name]) for name in parser.sections()}
    for required in ("run", "monitoring", "device.A", "device.B"):
        if required not in sections:
            _fail(required, "missing required section")
    known_sections = {"run", "monitoring", "device.A", "device.B", "readout", "injection", "analysis"}
    for name in sections:
        if name not in known_sections:
            _fail(name, "unknown section")

    run = sections["run"]
    run.check_unknown({"seed", "datasets", "export_limit", "threads",
                       "spectrum_flux_points", "spectrum_data_path"})
    seed = run.get_int("seed", required=True)
    if not 0 <= seed < 2**64:
        _fail("run.seed", f"must fit in 64 bits, got {seed}")
    datasets = run.get_int("datasets", 100)
    if datasets < 1:
        _fail("run.datasets", f"must be >= 1, got {datasets}")
    export_limit = run.get_int("export_limit", 4)
    if export_limit < 0:
        _fail("run.export_limit", f"must be >= 0, got {export_limit}")
    threads = run.get_int("threads", 1)
    if threads < 1:
        _fail("run.threads", f"must be >= 1, got {threads}")
    spectrum_points = run.get_int("spectrum_flux_points", 81)
    if spectrum_points < 2:
        _fail("run.spectrum_flux_points", f"must be >= 2, got {spectrum_points}")
    spectrum_data = run.get_str("spectrum_data_path")

    mon = sections["monitoring"]
    mon.check_unknown({"sample_period_us", "duration_us"})
    sample_period = mon.get_float("sample_period_us", 5.0)
    duration = mon.get_float("duration_us", 20480.0)
    if not sample_period > 0:
        _fail("monitoring.sample_period_us", f"must be positive, got {sample_period}")
    if not duration > 0:
        _fail("monitoring.duration_us", f"must be positive, got {duration}")
    n = duration / sample_period
    if abs(n - round(n)) > 1e-9 * max(1.0, n):
        _fail("monitoring.duration_us", f"{duration} is not an integer multiple of {sample_period}")
    monitoring = MonitoringSettings(sample_period, duration, datasets)

    device_a = _parse_device(sections["device.A"], sample_period, duration)
    device_b = _parse_device(sections["device.B"], sample_period, duration)

    if "readout" in sections:
        rd = sections["readout"]
        rd.check_unknown({"separation", "sigma", "target_fidelity",
                          "mean_g_i", "mean_g_q", "mean_e_i", "mean_e_q"})
        separation = rd.get_float("separation", 1.0)
        if not separation > 0:
            _fail("readout.separation", f"must be positive, got {separation}")
        mean_g = (rd.get_float("mean_g_i", 0.0), rd.get_float("mean_g_q", 0.0))
        mean_e = (rd.get_float("mean_e_i", mean_g[0] + separation), rd.get_float("mean_e_q", mean_g[1]))
        if mean_g == mean_e:
            _fail("readout.mean_e_i", "state means must differ")
        sigma = rd.get_float("sigma")
        fidelity = rd.get_float("target_fidelity")
        if sigma is None:
            if fidelity is None:
                fidelity = 0.95
            if not 0.5 < fidelity < 1:
                _fail("readout.target_fidelity", f"must lie in (0.5, 1), got {fidelity}")
            actual_sep = math.hypot(mean_e[0] - mean_g[0], mean_e[1] - mean_g[1])
            sigma = sigma_for_fidelity(fidelity, actual_sep)
        elif sigma <= 0:
            _fail("readout.sigma", f"must be positive, got {sigma}")
        readout = ReadoutSettings(mean_g, mean_e, sigma, fidelity)
    else:
        readout = ReadoutSettings((0.0, 0.0), (1.0, 0.0), sigma_for_fidelity(0.95, 1.0), 0.95)

    if "injection" in sections:
        inj = sections["injection"]
        inj.check_unknown({"fractions", "epoch_mean_length_us", "correlated_t1_us", "align_boundaries"})
        fractions = inj.get_floats("fractions", [0.0])
        for f in fractions:
            if not 0 <= f <= 1:
                _fail("injection.fractions", f"fractions must lie in [0, 1], got {f}")
        epoch_len = inj.get_float("epoch_mean_length_us", 500.0)
        if epoch_len < 10 * sample_period:
            _fail("injection.epoch_mean_length_us",
                  f"must be >= 10 sample periods ({10 * sample_period}), got {epoch_len}")
        corr_t1 = inj.get_float("correlated_t1_us", device_a.t1_us)
        if not corr_t1 > 0:
            _fail("injection.correlated_t1_us", f"must be positive, got {corr_t1}")
        align = inj.get_bool("align_boundaries", True)
        injection = InjectionSettings(sorted(fractions), epoch_len, corr_t1, align)
    else:
        injection = InjectionSettings([0.0], 500.0, device_a.t1_us, True)

    analysis = AnalysisSettings()
    if "analysis" in sections:
        an = sections["analysis"]
        an.check_unknown({"lag_max_us", "filter_mode", "pipeline", "mean_mode", "windowed_means",
                          "ensembles_per_fraction", "null_ensembles", "null_floor_percentile",
                          "state_lag_max_us"})
        analysis.lag_max_us = an.get_float("lag_max_us", 2000.0)
        if not 0 < analysis.lag_max_us < duration / 2:
            _fail("analysis.lag_max_us", f"must lie in (0, duration/2), got {analysis.lag_max_us}")
        analysis.filter_mode = an.get_str("filter_mode", "peak")
        if analysis.filter_mode not in ("peak", "midpoint"):
            _fail("analysis.filter_mode", f"must be 'peak' or 'midpoint', got {analysis.filter_mode!r}")
        analysis.pipeline = an.get_str("pipeline", "truth")
        if analysis.pipeline not in ("truth", "filtered"):
            _fail("analysis.pipeline", f"must be 'truth' or 'filtered', got {analysis.pipeline!r}")
        analysis.mean_mode = an.get_str("mean_mode", "per_dataset")
        if analysis.mean_mode not in ("per_dataset", "grand"):
            _fail("analysis.mean_mode", f"must be 'per_dataset' or 'grand', got {analysis.mean_mode!r}")
        analysis.windowed_means = an.get_bool("windowed_means", True)
        analysis.ensembles_per_fraction = an.get_int("ensembles_per_fraction", 3)
        if analysis.ensembles_per_fraction < 1:
            _fail("analysis.ensembles_per_fraction", "must be >= 1")
        analysis.null_ensembles = an.get_int("null_ensembles", 5)
        if analysis.null_ensembles < 1:
            _fail("analysis.null_ensembles", "must be >= 1")
        analysis.null_floor_percentile = an.get_float("null_floor_percentile", 95.0)
        if not 50 <= analysis.null_floor_percentile <= 100:
            _fail("analysis.null_floor_percentile", "must lie in [50, 100]")
        analysis.state_lag_max_us = an.get_float("state_lag_max_us", 250.0)
        if not 0 < analysis.state_lag_max_us < duration / 2:
            _fail("analysis.state_lag_max_us", "must lie in (0, duration/2)")

    return ExperimentConfig(
        seed=seed,
        device_a=device_a,
        device_b=device_b,
        monitoring=monitoring,
        readout=readout,
        injection=injection,
        analysis=analysis,
        export_limit=export_limit,
        threads=threads,
        spectrum_flux_points=spectrum_points,
        spectrum_data_path=spectrum_data,
        digest=digest,
    )


def load_config(path) -> ExperimentConfig:
    """Parse and validate a config file; the digest hashes its exact bytes."""
    with open(path, "rb") as fh:
        raw = fh.read()
    digest = hashlib.sha256(raw).hexdigest()
    return parse_config(raw.decode("utf-8"), digest)
