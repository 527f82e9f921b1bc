"""File formats: IQR1 binary records, CSV exports, report text.

IQR1 layout (little endian):

    bytes 0-3    magic "IQR1"
    bytes 4-7    format version, u32 (currently 1)
    bytes 8-15   sample count, u64
    bytes 16-23  sample period in nanoseconds, u64
    bytes 24-31  reserved (zero)
    payload      interleaved I, Q as IEEE-754 binary32

All writers go through a temp-file-plus-rename so partially written
outputs never appear under their final name.
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

from .covariance import CovarianceCurve, StateCorrelationCurve, ThresholdReport
from .errors import (
    FileCorruptionError,
    FileFormatError,
    FileVersionError,
    InvalidInputError,
)
from .estimator import DwellSeries, StateTrace, LABEL_STATES, STATE_LABELS
from .readout import IQRecord
from .telegraph import TelegraphTrajectory

IQR_MAGIC = b"IQR1"
IQR_VERSION = 1
_HEADER = struct.Struct("<4sIQQ8s")


def atomic_write(path, payload: bytes) -> None:
    """Write bytes to ``path`` via a temp file in the same directory."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write(path, text.encode("utf-8"))


def write_iqr(path, record: IQRecord) -> None:
    """Persist an IQ record in the IQR1 format."""
    period_ns = int(round(record.sample_period * 1000.0))
    header = _HEADER.pack(IQR_MAGIC, IQR_VERSION, record.n_samples, period_ns, b"\0" * 8)
    payload = np.ascontiguousarray(record.samples, dtype="<f4").tobytes()
    atomic_write(path, header + payload)


def read_iqr(path) -> IQRecord:
    """Read an IQR1 file; round trips are bit identical."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise FileFormatError(f"{path}: shorter than an IQR1 header")
    magic, version, count, period_ns, _ = _HEADER.unpack_from(raw)
    if magic != IQR_MAGIC:
        raise FileFormatError(f"{path}: bad magic {magic!r}")
    if version != IQR_VERSION:
        raise FileVersionError(f"{path}: unsupported IQR version {version}")
    expected = count * 2 * 4
    body = raw[_HEADER.size:]
    if len(body) != expected:
        raise FileCorruptionError(
            f"{path}: header declares {count} samples ({expected} payload bytes), found {len(body)}"
        )
    samples = np.frombuffer(body, dtype="<f4").reshape(count, 2)
    return IQRecord(samples.copy(), period_ns / 1000.0)


def write_trajectory(path_csv, path_jumps, trajectory: TelegraphTrajectory) -> None:
    """Trajectory sidecar: binned-state CSV plus jump-instant list."""
    lines = ["bin_index,state"]
    lines += [f"{i},{STATE_LABELS[int(s)]}" for i, s in enumerate(trajectory.states)]
    atomic_write_text(path_csv, "\n".join(lines) + "\n")
    jumps = "\n".join(f"{t!r}" for t in trajectory.jump_times)
    atomic_write_text(path_jumps, "# jump_times_us\n" + jumps + ("\n" if jumps else ""))


def write_state_trace(path, trace: StateTrace) -> None:
    lines = ["bin_index,state"]
    lines += [f"{i},{STATE_LABELS[int(s)]}" for i, s in enumerate(trace.states)]
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_state_trace(path, sample_period: float) -> StateTrace:
    states = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "bin_index,state":
            raise FileFormatError(f"{path}: unexpected header {header!r}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            _, label = line.split(",")
            try:
                states.append(LABEL_STATES[label])
            except KeyError:
                raise FileFormatError(f"{path}: unknown state label {label!r}") from None
    return StateTrace(np.array(states, dtype=np.uint8), sample_period)


def write_dwell_series(path, dwells: DwellSeries) -> None:
    lines = ["bin_index,tau_us,boundary_flag"]
    lines += [
        f"{i},{tau:.10g},{int(flag)}"
        for i, (tau, flag) in enumerate(zip(dwells.tau, dwells.boundary))
    ]
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_dwell_series(path, sample_period: float) -> DwellSeries:
    tau = []
    flags = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "bin_index,tau_us,boundary_flag":
            raise FileFormatError(f"{path}: unexpected header {header!r}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            _, t, flag = line.split(",")
            tau.append(float(t))
            flags.append(bool(int(flag)))
    return DwellSeries(np.array(tau), np.array(flags, dtype=bool), sample_period)


def write_covariance_curve(path, curve: CovarianceCurve) -> None:
    lines = ["delta_t_us,c,stderr"]
    lines += [
        f"{dt:.10g},{c:.12g},{se:.12g}"
        for dt, c, se in zip(curve.delta_t, curve.c, curve.stderr)
    ]
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_covariance_curve(path, count: int = 0) -> CovarianceCurve:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "delta_t_us,c,stderr":
            raise FileFormatError(f"{path}: unexpected header {header!r}")
        for line in fh:
            line = line.strip()
            if line:
                rows.append(tuple(float(x) for x in line.split(",")))
    arr = np.array(rows)
    if arr.size == 0:
        raise FileCorruptionError(f"{path}: no data rows")
    return CovarianceCurve(arr[:, 0], arr[:, 1], arr[:, 2], count)


def write_state_correlation(path, curve: StateCorrelationCurve) -> None:
    lines = ["delta_t_us,r,stderr"]
    lines += [
        f"{dt:.10g},{r:.12g},{se:.12g}"
        for dt, r, se in zip(curve.delta_t, curve.r, curve.stderr)
    ]
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_threshold_report(path, report: ThresholdReport) -> None:
    """Structured text export of a calibration run."""
    lines = [
        f"null_floor={report.null_floor:.10g}",
        f"null_floor_percentile={report.null_floor_percentile:.10g}",
        f"null_ensembles={len(report.null_amplitudes)}",
        "smallest_detected=" + ("none" if report.smallest_detected is None
                                else f"{report.smallest_detected:.10g}"),
        "fraction,amplitude,amplitude_err,detected",
    ]
    lines += [
        f"{row.fraction:.10g},{row.median_amplitude:.10g},{row.amplitude_spread:.10g},{int(row.detected)}"
        for row in report.fractions
    ]
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_histogram(path, hist) -> None:
    """2D histogram as CSV: i_center,q_center,count plus an overflow line."""
    ci = 0.5 * (hist.i_edges[:-1] + hist.i_edges[1:])
    cq = 0.5 * (hist.q_edges[:-1] + hist.q_edges[1:])
    lines = [f"# overflow={hist.overflow}", "i,q,count"]
    for a in range(len(ci)):
        for b in range(len(cq)):
            lines.append(f"{ci[a]:.10g},{cq[b]:.10g},{int(hist.counts[a, b])}")
    atomic_write_text(path, "\n".join(lines) + "\n")
