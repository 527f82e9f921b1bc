"""State estimation from noisy I/Q records.

The estimator mirrors the experimental chain: characterize the two
histogram peaks, project samples onto the axis joining them, run a
latching two-point filter whose thresholds sit half a standard
deviation from each peak, then read dwell times off the recovered state
sequence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    InsufficientStatisticsError,
    InvalidInputError,
    InvalidPeaksError,
    UnresolvablePeaksError,
)
from .numerics import nonlinear_least_squares
from .readout import Histogram2D, IQRecord, histogram2d
from .telegraph import EXCITED, GROUND, TelegraphTrajectory

STATE_LABELS = {GROUND: "g", EXCITED: "e"}
LABEL_STATES = {"g": GROUND, "e": EXCITED}


@dataclass
class StateTrace:
    """Binary state sequence at a fixed sample period."""

    states: np.ndarray
    sample_period: float

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.uint8)
        if self.states.ndim != 1 or len(self.states) == 0:
            raise InvalidInputError("states must be a nonempty 1D sequence")
        if self.states.max(initial=0) > 1:
            raise InvalidInputError("states must be 0 (g) or 1 (e)")
        if not self.sample_period > 0:
            raise InvalidInputError("sample_period must be positive")

    def __len__(self):
        return len(self.states)


def trace_from_trajectory(trajectory: TelegraphTrajectory) -> StateTrace:
    """Ground-truth binned states viewed as a StateTrace."""
    return StateTrace(trajectory.states.copy(), trajectory.sample_period)


@dataclass
class DwellSeries:
    """Staircase tau(t): length of the constant-state run containing each sample.

    ``boundary`` flags samples whose run touches a record edge; those
    runs are truncated and excluded from rate estimation.
    """

    tau: np.ndarray
    boundary: np.ndarray
    sample_period: float

    def __len__(self):
        return len(self.tau)


@dataclass(frozen=True)
class PeakModel:
    """Projected two-peak description of the readout response.

    ``axis`` is the unit vector from the g peak toward the e peak, so
    the projected means always satisfy mu_g < mu_e.  2D means and
    weights are kept for reporting and population estimates.
    """

    mu_g: float
    mu_e: float
    sigma_g: float
    sigma_e: float
    axis: tuple[float, float]
    mean_g_iq: tuple[float, float] = (0.0, 0.0)
    mean_e_iq: tuple[float, float] = (0.0, 0.0)
    weight_g: float = 0.5

    def __post_init__(self):
        if not self.mu_g < self.mu_e:
            raise InvalidInputError("projected means must satisfy mu_g < mu_e")
        if not (self.sigma_g > 0 and self.sigma_e > 0):
            raise InvalidInputError("sigmas must be positive")

    @property
    def weight_e(self) -> float:
        return 1.0 - self.weight_g

    def project(self, samples: np.ndarray) -> np.ndarray:
        return samples[:, 0] * self.axis[0] + samples[:, 1] * self.axis[1]


def _mixture_initial_guess(hist: Histogram2D):
    counts = hist.counts
    ci = 0.5 * (hist.i_edges[:-1] + hist.i_edges[1:])
    cq = 0.5 * (hist.q_edges[:-1] + hist.q_edges[1:])
    # Primary peak at the histogram mode; secondary at the mode of the
    # remainder after masking the primary's neighborhood.
    k0 = np.unravel_index(np.argmax(counts), counts.shape)
    span = math.hypot(ci[-1] - ci[0], cq[-1] - cq[0])
    masked = counts.copy()
    ii, qq = np.meshgrid(ci, cq, indexing="ij")
    near = np.hypot(ii - ci[k0[0]], qq - cq[k0[1]]) < 0.15 * span
    masked[near] = 0
    k1 = np.unravel_index(np.argmax(masked), counts.shape)
    sigma0 = max(0.05 * span, 0.5 * math.hypot(ci[k1[0]] - ci[k0[0]], cq[k1[1]] - cq[k0[1]]) / 3.0)
    return (
        counts[k0], ci[k0[0]], cq[k0[1]], sigma0,
        max(counts[k1], 1.0), ci[k1[0]], cq[k1[1]], sigma0,
    ), (ii, qq)


def estimate_peaks(data, bins: int = 64, thermal: bool = True, axis_mode: str = "difference") -> PeakModel:
    """Fit a two-component isotropic Gaussian mixture to I/Q data.

    ``data`` may be an IQRecord, a list of records, or a prebuilt
    Histogram2D.  Component weights come from the fitted areas; when
    ``thermal`` the heavier component is labeled g.  ``axis_mode``
    selects the projection axis: ``difference`` (peak-to-peak, default)
    or ``i`` (raw I quadrature).

    Raises UnresolvablePeaksError when the fit is poor or the two
    components are closer than their mean width.
    """
    hist = data if isinstance(data, Histogram2D) else histogram2d(data, bins=bins)
    guess, (ii, qq) = _mixture_initial_guess(hist)
    coords = np.stack([ii.ravel(), qq.ravel()], axis=1)
    y = hist.counts.ravel().astype(float)

    def model(params, x):
        a0, i0, q0, s0, a1, i1, q1, s1 = params
        r0 = ((x[:, 0] - i0) ** 2 + (x[:, 1] - q0) ** 2) / (2.0 * s0 * s0)
        r1 = ((x[:, 0] - i1) ** 2 + (x[:, 1] - q1) ** 2) / (2.0 * s1 * s1)
        return a0 * np.exp(-r0) + a1 * np.exp(-r1)

    span = math.hypot(
        hist.i_edges[-1] - hist.i_edges[0], hist.q_edges[-1] - hist.q_edges[0]
    )
    eps = 1e-6 * span
    bounds = [(0.0, None), (None, None), (None, None), (eps, None)] * 2
    fit = nonlinear_least_squares(model, coords, y, guess, bounds=bounds, max_iterations=400)

    a0, i0, q0, s0, a1, i1, q1, s1 = fit.parameters
    rel_residual = fit.residual_norm / max(float(np.linalg.norm(y)), 1e-300)
    if rel_residual > 0.5:
        raise UnresolvablePeaksError(
            f"mixture fit residual {rel_residual:.2f} of data norm; peaks not usable"
        )
    separation = math.hypot(i1 - i0, q1 - q0)
    if separation < 0.5 * (s0 + s1):
        raise UnresolvablePeaksError(
            f"components separated by {separation:.3g} but widths sum to {s0 + s1:.3g}"
        )

    # Component weight ~ integrated area of an isotropic 2D Gaussian.
    w0 = a0 * s0 * s0
    w1 = a1 * s1 * s1
    weight0 = w0 / (w0 + w1)
    if min(weight0, 1.0 - weight0) < 0.005:
        raise UnresolvablePeaksError(
            f"lighter component carries weight {min(weight0, 1.0 - weight0):.2g}; "
            "data looks single-peaked"
        )
    if thermal:
        g_first = weight0 >= 0.5
    else:
        g_first = (i0, q0) <= (i1, q1)
    if g_first:
        mg, sg, wg = (i0, q0), s0, weight0
        me, se = (i1, q1), s1
    else:
        mg, sg, wg = (i1, q1), s1, 1.0 - weight0
        me, se = (i0, q0), s0

    if axis_mode == "difference":
        ax = np.array([me[0] - mg[0], me[1] - mg[1]])
    elif axis_mode == "i":
        ax = np.array([1.0 if me[0] >= mg[0] else -1.0, 0.0])
        if me[0] == mg[0]:
            raise UnresolvablePeaksError("peaks have equal I means; I-axis projection degenerate")
    else:
        raise InvalidInputError(f"unknown axis_mode {axis_mode!r}")
    ax = ax / np.linalg.norm(ax)

    mu_g = float(mg[0] * ax[0] + mg[1] * ax[1])
    mu_e = float(me[0] * ax[0] + me[1] * ax[1])
    return PeakModel(mu_g, mu_e, float(sg), float(se), (float(ax[0]), float(ax[1])),
                     (float(mg[0]), float(mg[1])), (float(me[0]), float(me[1])), float(wg))


def filter_thresholds(peaks: PeakModel, mode: str = "peak") -> tuple[float, float]:
    """(to_g, to_e) switching thresholds on the projected axis.

    ``peak`` mode (default) places each threshold sigma/2 inward of the
    new state's peak: switch to g at mu_g + sigma_g/2, to e at
    mu_e - sigma_e/2.  ``midpoint`` mode places them sigma/2 beyond the
    midpoint of the two peaks instead.
    """
    if mode == "peak":
        to_g = peaks.mu_g + 0.5 * peaks.sigma_g
        to_e = peaks.mu_e - 0.5 * peaks.sigma_e
    elif mode == "midpoint":
        mid = 0.5 * (peaks.mu_g + peaks.mu_e)
        to_g = mid - 0.5 * peaks.sigma_g
        to_e = mid + 0.5 * peaks.sigma_e
    else:
        raise InvalidInputError(f"unknown filter mode {mode!r}")
    if to_g >= to_e:
        raise InvalidPeaksError(
            f"thresholds cross (to_g={to_g:.4g} >= to_e={to_e:.4g}); no hysteresis band"
        )
    return to_g, to_e


def two_point_filter(record: IQRecord, peaks: PeakModel, initial: int | None = None,
                     mode: str = "peak") -> StateTrace:
    """Latching two-threshold state estimate of an I/Q record.

    The declared state switches to e only when the projected sample
    reaches the e-side threshold, to g only at the g-side threshold, and
    stays put inside the hysteresis band.  The initial state defaults to
    the peak nearest the first sample.
    """
    to_g, to_e = filter_thresholds(peaks, mode)
    x = peaks.project(record.samples.astype(float))
    if initial is None:
        initial = GROUND if abs(x[0] - peaks.mu_g) <= abs(x[0] - peaks.mu_e) else EXCITED
    elif initial not in (GROUND, EXCITED):
        raise InvalidInputError(f"initial must be 0 or 1, got {initial}")

    # Decisive samples pin the state; band samples inherit the previous
    # decisive value (vectorized forward fill over decision indices).
    decision = np.full(len(x), -1, dtype=np.int64)
    decision[x <= to_g] = GROUND
    decision[x >= to_e] = EXCITED
    idx = np.arange(len(x))
    have = decision >= 0
    last = np.maximum.accumulate(np.where(have, idx, -1))
    states = np.where(last >= 0, decision[np.maximum(last, 0)], initial).astype(np.uint8)
    return StateTrace(states, record.sample_period)


def dwell_series(trace: StateTrace) -> DwellSeries:
    """tau(t) staircase of a state trace.

    Every sample carries the duration of the maximal constant-state run
    containing it; the first and last runs are flagged as truncated by
    the record edges.
    """
    s = trace.states
    change = np.flatnonzero(np.diff(s)) + 1
    starts = np.concatenate(([0], change))
    ends = np.concatenate((change, [len(s)]))
    lengths = (ends - starts) * trace.sample_period
    tau = np.repeat(lengths, ends - starts)
    boundary = np.zeros(len(s), dtype=bool)
    boundary[starts[0]:ends[0]] = True
    boundary[starts[-1]:ends[-1]] = True
    return DwellSeries(tau, boundary, trace.sample_period)


def readout_fidelity(truth: StateTrace, estimate: StateTrace) -> float:
    """Fraction of samples where the estimate matches the truth."""
    if len(truth) != len(estimate):
        raise InvalidInputError(f"trace lengths differ: {len(truth)} vs {len(estimate)}")
    return float(np.mean(truth.states == estimate.states))


@dataclass
class T1Estimate:
    t1: float
    p_e: float
    t1_stderr: float
    p_e_stderr: float
    n_dwells_g: int
    n_dwells_e: int


def complete_dwells(dwells: DwellSeries, trace: StateTrace) -> tuple[np.ndarray, np.ndarray]:
    """(state, duration) of each run not truncated by a record edge."""
    if len(dwells) != len(trace):
        raise InvalidInputError("dwell series and trace lengths differ")
    s = trace.states
    change = np.flatnonzero(np.diff(s)) + 1
    starts = np.concatenate(([0], change))
    keep = np.ones(len(starts), dtype=bool)
    keep[0] = keep[-1] = False
    return s[starts][keep], dwells.tau[starts][keep]


def estimate_t1(dwells, trace, min_dwells: int = 20) -> T1Estimate:
    """Recover T1 and p_e from complete dwells of an estimated trace.

    gamma_up = 1/(mean complete g dwell), gamma_down likewise for e;
    T1 = 1/(gamma_up + gamma_down) and p_e = gamma_up * T1.  Standard
    errors propagate the 1/sqrt(N) relative error of each rate.

    Accepts a single (DwellSeries, StateTrace) pair or parallel lists of
    them; complete dwells pool across the list.
    """
    if isinstance(dwells, DwellSeries):
        dwells, trace = [dwells], [trace]
    if len(dwells) != len(trace):
        raise InvalidInputError("need one trace per dwell series")
    pooled = [complete_dwells(d, t) for d, t in zip(dwells, trace)]
    run_states = np.concatenate([p[0] for p in pooled])
    run_tau = np.concatenate([p[1] for p in pooled])

    means = {}
    counts = {}
    for state in (GROUND, EXCITED):
        sel = run_states == state
        counts[state] = int(sel.sum())
        if counts[state] < min_dwells:
            raise InsufficientStatisticsError(
                f"only {counts[state]} complete {STATE_LABELS[state]} dwells; need >= {min_dwells}"
            )
        means[state] = float(run_tau[sel].mean())

    gamma_up = 1.0 / means[GROUND]
    gamma_down = 1.0 / means[EXCITED]
    total = gamma_up + gamma_down
    t1 = 1.0 / total
    p_e = gamma_up * t1
    var_up = (gamma_up / math.sqrt(counts[GROUND])) ** 2
    var_down = (gamma_down / math.sqrt(counts[EXCITED])) ** 2
    t1_stderr = t1 * t1 * math.sqrt(var_up + var_down)
    p_e_stderr = math.sqrt(gamma_down**2 * var_up + gamma_up**2 * var_down) / total**2
    return T1Estimate(t1, p_e, t1_stderr, p_e_stderr, counts[GROUND], counts[EXCITED])
