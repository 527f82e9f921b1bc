"""Figure rendering for the report command.

Reads the delimited outputs of a run directory and renders the standard
set of figures next to them: spectrum curves, I/Q histograms, jump
traces with state estimates, dwell staircases, the covariance curve
with its exponential fit, and the detection-threshold summary.
"""

from __future__ import annotations

import glob
import math
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import DependencyError
from .fileio import read_iqr
from .readout import histogram2d

DEVICE_COLORS = {"A": "tab:green", "B": "tab:blue"}


def _read_csv(path):
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    header = lines[0].split(",")
    rows = [ln.split(",") for ln in lines[1:]]
    return header, rows


def _numeric_columns(path):
    _, rows = _read_csv(path)
    return np.array([[float(x) for x in row] for row in rows])


def _save(fig, out_dir, name, written):
    path = os.path.join(out_dir, name)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    written.append(name)


def render_spectrum(out_dir, written):
    made = False
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    for device in ("A", "B"):
        path = os.path.join(out_dir, f"spectrum_device_{device}.csv")
        if not os.path.exists(path):
            continue
        data = _numeric_columns(path)
        ax.plot(data[:, 0], data[:, 1], color=DEVICE_COLORS[device], label=f"device {device}")
        made = True
    if not made:
        plt.close(fig)
        return
    ax.set_xlabel(r"$\Phi_\mathrm{ext}/\Phi_0$")
    ax.set_ylabel(r"$f_{01}$ (GHz)")
    ax.legend(frameon=False)
    ax.set_title("Transition frequency vs external flux")
    _save(fig, out_dir, "fig_spectrum.png", written)


def render_histograms(out_dir, written):
    made = False
    fig, axes = plt.subplots(1, 2, figsize=(8.0, 3.4))
    for ax, device in zip(axes, ("A", "B")):
        paths = sorted(glob.glob(os.path.join(out_dir, f"record_{device}_*.iqr")))
        if not paths:
            ax.set_visible(False)
            continue
        records = [read_iqr(p) for p in paths]
        hist = histogram2d(records, bins=64)
        extent = (hist.i_edges[0], hist.i_edges[-1], hist.q_edges[0], hist.q_edges[-1])
        ax.imshow(hist.counts.T, origin="lower", extent=extent, aspect="auto", cmap="viridis")
        ax.set_xlabel("I (photons)")
        ax.set_ylabel("Q (photons)")
        total = hist.total
        ax.set_title(f"device {device} ({total} counts)")
        made = True
    if not made:
        plt.close(fig)
        return
    _save(fig, out_dir, "fig_histograms.png", written)


def _read_states(path):
    _, rows = _read_csv(path)
    return np.array([1 if r[1] == "e" else 0 for r in rows], dtype=float)


def render_traces(out_dir, written, sample_period=None):
    made = False
    fig, axes = plt.subplots(2, 1, figsize=(8.0, 4.2), sharex=True)
    for ax, device in zip(axes, ("A", "B")):
        rec_path = os.path.join(out_dir, f"record_{device}_0000.iqr")
        state_path = os.path.join(out_dir, f"state_{device}_0000.csv")
        traj_path = os.path.join(out_dir, f"trajectory_{device}_0000.csv")
        have_rec = os.path.exists(rec_path)
        src = state_path if os.path.exists(state_path) else traj_path
        if not (have_rec or os.path.exists(src)):
            ax.set_visible(False)
            continue
        color = DEVICE_COLORS[device]
        if have_rec:
            rec = read_iqr(rec_path)
            t = np.arange(rec.n_samples) * rec.sample_period / 1000.0
            ax.plot(t, rec.samples[:, 0], color="0.75", lw=0.5, label="I quadrature")
        if os.path.exists(src):
            states = _read_states(src)
            t = np.arange(len(states)) * (sample_period or 5.0) / 1000.0
            ax.plot(t, states, color=color, lw=1.2, label="state estimate" if src == state_path else "state")
        ax.set_ylabel(f"device {device}")
        ax.legend(frameon=False, loc="upper right", fontsize=8)
        made = True
    if not made:
        plt.close(fig)
        return
    axes[-1].set_xlabel("time (ms)")
    _save(fig, out_dir, "fig_traces.png", written)


def render_dwells(out_dir, written):
    made = False
    fig, ax = plt.subplots(figsize=(8.0, 3.2))
    for device in ("A", "B"):
        path = os.path.join(out_dir, f"dwell_{device}_0000.csv")
        if not os.path.exists(path):
            continue
        data = _numeric_columns(path)
        t = data[:, 0] * 5.0 / 1000.0
        ax.plot(t, data[:, 1] / 1000.0, color=DEVICE_COLORS[device], label=f"$\\tau_{device}$")
        made = True
    if not made:
        plt.close(fig)
        return
    ax.set_xlabel("time (ms)")
    ax.set_ylabel(r"$\tau$ (ms)")
    ax.legend(frameon=False)
    _save(fig, out_dir, "fig_dwells.png", written)


def render_covariance(out_dir, written):
    path = os.path.join(out_dir, "covariance_curve.csv")
    if not os.path.exists(path):
        return
    data = _numeric_columns(path)
    fig, ax = plt.subplots(figsize=(5.6, 3.6))
    ax.errorbar(data[:, 0] / 1000.0, data[:, 1], yerr=data[:, 2],
                fmt=".", ms=2.5, color="k", ecolor="0.8", lw=0.8, label="covariance")
    fit_path = os.path.join(out_dir, "covariance_fit.txt")
    if os.path.exists(fit_path):
        fit = {}
        for line in open(fit_path, encoding="utf-8"):
            key, _, val = line.strip().partition("=")
            fit[key] = float(val)
        if fit.get("decay_undetermined", 0.0) == 0.0 and math.isfinite(fit.get("decay_time_us", math.nan)):
            dt = data[:, 0]
            model = fit["amplitude"] * np.exp(-np.abs(dt) / fit["decay_time_us"])
            ax.plot(dt / 1000.0, model, color="tab:red", lw=1.2,
                    label=f"fit: A={fit['amplitude']:.4f}, $\\tau_c$={fit['decay_time_us']:.0f} us")
    ax.set_xlabel(r"$\delta t$ (ms)")
    ax.set_ylabel(r"$C(\delta t)$")
    ax.legend(frameon=False, fontsize=8)
    _save(fig, out_dir, "fig_covariance.png", written)


def render_threshold(out_dir, written):
    path = os.path.join(out_dir, "threshold_report.txt")
    if not os.path.exists(path):
        return
    floor = None
    rows = []
    in_table = False
    for line in open(path, encoding="utf-8"):
        line = line.strip()
        if line.startswith("null_floor="):
            floor = float(line.split("=")[1])
        elif line == "fraction,amplitude,amplitude_err,detected":
            in_table = True
        elif in_table and line:
            f, a, e, d = line.split(",")
            rows.append((float(f), float(a), float(e), int(d)))
    if not rows:
        return
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    fr = [r[0] * 100 for r in rows]
    ax.errorbar(fr, [r[1] for r in rows], yerr=[r[2] for r in rows],
                fmt="o", color="tab:blue", label="median fitted amplitude")
    if floor is not None:
        ax.axhline(floor, color="tab:red", ls="--", lw=1.0, label="null floor")
    ax.set_xlabel("injected correlated fraction (%)")
    ax.set_ylabel("fitted amplitude")
    ax.legend(frameon=False, fontsize=8)
    _save(fig, out_dir, "fig_threshold.png", written)


def render_report(out_dir) -> list[str]:
    """Render every figure supported by the files present in out_dir."""
    if not os.path.isdir(out_dir):
        raise DependencyError(f"{out_dir} is not a directory")
    written: list[str] = []
    render_spectrum(out_dir, written)
    render_histograms(out_dir, written)
    render_traces(out_dir, written)
    render_dwells(out_dir, written)
    render_covariance(out_dir, written)
    render_threshold(out_dir, written)
    if not written:
        raise DependencyError(
            f"{out_dir} holds no renderable outputs; run pipeline stages first"
        )
    return written
