"""Two-state telegraph dynamics of a continuously monitored qubit.

A qubit relaxing and re-exciting under measurement is a continuous-time
two-state Markov process: dwell times in |g> and |e> are exponential
with rates set by T1 and the equilibrium excited-state population.
This module generates single trajectories and correlated pairs (two
qubits sharing one jump schedule inside designated epochs), plus the
thermal-equilibrium bookkeeping that links T1, populations, and
effective temperature.

States are encoded 0 = g, 1 = e throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .constants import BOLTZMANN_K, PLANCK_H
from .errors import InvalidInputError, NegativeTemperatureError, PackingError
from .seeding import rng_from_seed

GROUND = 0
EXCITED = 1


def equilibrium_population(f01_ghz: float, temperature_mk: float) -> float:
    """Excited-state population of a two-level system in equilibrium.

    p_e = 1 / (1 + exp(h f / k_B T)); computed in log space so very cold
    temperatures underflow cleanly to 0 instead of overflowing.
    """
    if not f01_ghz > 0:
        raise InvalidInputError(f"f01 must be positive, got {f01_ghz}")
    if not temperature_mk > 0:
        raise InvalidInputError(f"temperature must be positive, got {temperature_mk}")
    x = PLANCK_H * f01_ghz * 1e9 / (BOLTZMANN_K * temperature_mk * 1e-3)
    if x >= 0:
        ex = math.exp(-x)
        return ex / (1.0 + ex)
    return 1.0 / (1.0 + math.exp(x))


def effective_temperature(p_e: float, f01_ghz: float) -> float:
    """Temperature (mK) whose equilibrium population equals p_e.

    Exact inverse of :func:`equilibrium_population`.
    """
    if not f01_ghz > 0:
        raise InvalidInputError(f"f01 must be positive, got {f01_ghz}")
    if p_e <= 0:
        raise InvalidInputError(f"p_e must be positive, got {p_e}")
    if p_e >= 0.5:
        raise NegativeTemperatureError(
            f"p_e={p_e} >= 0.5 implies population inversion; no positive temperature exists"
        )
    x = math.log((1.0 - p_e) / p_e)
    return PLANCK_H * f01_ghz * 1e9 / (BOLTZMANN_K * x) * 1e3


def rates_from_t1(t1_us: float, p_e: float) -> tuple[float, float]:
    """(gamma_up, gamma_down) in 1/us from T1 and the equilibrium population.

    gamma_up + gamma_down = 1/T1 and gamma_up/gamma_down = p_e/(1-p_e).
    """
    if not t1_us > 0:
        raise InvalidInputError(f"t1 must be positive, got {t1_us}")
    if not 0 <= p_e < 1:
        raise InvalidInputError(f"p_e must lie in [0, 1), got {p_e}")
    return p_e / t1_us, (1.0 - p_e) / t1_us


@dataclass(frozen=True)
class TelegraphConfig:
    """Parameters of one monitored qubit's telegraph process.

    Times are microseconds.  ``p_e >= 0.5`` models population inversion
    and must be enabled explicitly with ``allow_nonthermal``.
    """

    t1: float
    p_e: float
    sample_period: float = 5.0
    duration: float = 20480.0
    seed: int = 0
    allow_nonthermal: bool = False

    def __post_init__(self):
        if not self.t1 > 0:
            raise InvalidInputError(f"t1 must be positive, got {self.t1}")
        if not 0 <= self.p_e < 1:
            raise InvalidInputError(f"p_e must lie in [0, 1), got {self.p_e}")
        if self.p_e >= 0.5 and not self.allow_nonthermal:
            raise InvalidInputError(
                f"p_e={self.p_e} >= 0.5 is non-thermal; set allow_nonthermal=True if intended"
            )
        if not self.sample_period > 0:
            raise InvalidInputError("sample_period must be positive")
        if not self.duration > 0:
            raise InvalidInputError("duration must be positive")
        n = self.duration / self.sample_period
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise InvalidInputError(
                f"duration {self.duration} is not an integer multiple of sample_period {self.sample_period}"
            )

    @property
    def n_samples(self) -> int:
        return int(round(self.duration / self.sample_period))

    @property
    def rates(self) -> tuple[float, float]:
        return rates_from_t1(self.t1, self.p_e)


@dataclass
class TelegraphTrajectory:
    """Ground truth state of one qubit over a monitoring window.

    ``states`` holds the state at each bin midpoint; ``jump_times``
    holds the exact continuous-time jump instants inside the window.
    """

    states: np.ndarray
    sample_period: float
    jump_times: np.ndarray
    initial_state: int

    @property
    def n_samples(self) -> int:
        return len(self.states)

    @property
    def duration(self) -> float:
        return self.n_samples * self.sample_period

    def state_at(self, t: float) -> int:
        """Exact state at continuous time t from the jump record."""
        flips = int(np.searchsorted(self.jump_times, t, side="right"))
        return (self.initial_state + flips) % 2


def _bin_states(jump_times: np.ndarray, initial_state: int, n_samples: int, sample_period: float) -> np.ndarray:
    midpoints = (np.arange(n_samples) + 0.5) * sample_period
    flips = np.searchsorted(jump_times, midpoints, side="right")
    return ((initial_state + flips) % 2).astype(np.uint8)


def _dwell_scales(gamma_up: float, gamma_down: float) -> tuple[float, float]:
    # Mean dwell per state; a vanishing rate freezes the state (infinite dwell).
    mean_g = 1.0 / gamma_up if gamma_up > 0 else np.inf
    mean_e = 1.0 / gamma_down if gamma_down > 0 else np.inf
    return mean_g, mean_e


def _jump_instants_loop(rng, start_state, t_start, t_end, mean_g, mean_e):
    """Exact jump instants of a two-state process on [t_start, t_end).

    Returns the instants and the state at t_end.  The fresh exponential
    draw at t_start is exact even when the caller stitches segments
    together, because the exponential dwell law is memoryless.
    """
    span = t_end - t_start
    instants = []
    t = 0.0
    state = start_state
    # Draw in chunks to limit Python-loop overhead.
    chunk = 64
    pending = np.empty(0)
    idx = 0
    while True:
        scale = mean_g if state == GROUND else mean_e
        if not np.isfinite(scale):
            break
        if idx >= len(pending):
            pending = rng.standard_exponential(chunk)
            idx = 0
        t += pending[idx] * scale
        idx += 1
        if t >= span:
            break
        instants.append(t_start + t)
        state = 1 - state
    return np.array(instants), state


def sample_trajectory(config: TelegraphConfig, initial_state: int | None = None,
                      rng: np.random.Generator | None = None) -> TelegraphTrajectory:
    """Draw one telegraph trajectory.

    Dwells are exponential with the configured per-state means; jump
    instants are recorded exactly and the binned sequence samples the
    state at each bin midpoint.  Deterministic given the config seed
    (or a caller-supplied generator).
    """
    if rng is None:
        rng = rng_from_seed(config.seed)
    gamma_up, gamma_down = config.rates
    if initial_state is None:
        initial_state = EXCITED if rng.random() < config.p_e else GROUND
    elif initial_state not in (GROUND, EXCITED):
        raise InvalidInputError(f"initial_state must be 0 or 1, got {initial_state}")

    jumps, _ = _jump_instants_loop(
        rng, initial_state, 0.0, config.duration,
        *_dwell_scales(gamma_up, gamma_down),
    )
    states = _bin_states(jumps, initial_state, config.n_samples, config.sample_period)
    return TelegraphTrajectory(states, config.sample_period, jumps, int(initial_state))


@dataclass(frozen=True)
class CorrelationInjection:
    """Shared-jump epochs forcing two qubits onto one dwell schedule.

    ``fraction`` of the monitoring time is covered by non-overlapping
    epochs (lengths exponential with mean ``epoch_mean_length``, starts
    uniform).  Inside an epoch both qubits jump at the instants of a
    single shared telegraph schedule with relaxation time
    ``correlated_t1``, so their dwell times coincide there.

    ``align_boundaries`` additionally forces both qubits to jump at each
    epoch boundary, which makes the dwell equality exact across the
    whole epoch at the cost of a few injected jumps per epoch.
    """

    fraction: float
    epoch_mean_length: float = 500.0
    correlated_t1: float = 100.0
    align_boundaries: bool = True

    def __post_init__(self):
        if not 0 <= self.fraction <= 1:
            raise InvalidInputError(f"fraction must lie in [0, 1], got {self.fraction}")
        if not self.epoch_mean_length > 0:
            raise InvalidInputError("epoch_mean_length must be positive")
        if not self.correlated_t1 > 0:
            raise InvalidInputError("correlated_t1 must be positive")


def _draw_epochs(rng, duration: float, fraction: float, mean_length: float,
                 max_retries: int = 200) -> list[tuple[float, float]]:
    """Non-overlapping epochs covering ``fraction`` of the window on average.

    The epoch count is Poisson with mean fraction*duration/mean_length
    and every length is exponential with the configured mean, so the
    epoch-length distribution is identical at every fraction and the
    ensemble covariance amplitude stays linear in the fraction (drawing
    a fixed total per dataset would instead truncate epochs ever shorter
    as the fraction shrinks).  Placement spreads the free time uniformly
    over the gaps.  Draws whose lengths cannot fit in the window are
    retried; persistent failure raises PackingError.
    """
    if fraction <= 0:
        return []
    if fraction >= 1.0:
        return [(0.0, duration)]
    for _ in range(max_retries):
        count = int(rng.poisson(fraction * duration / mean_length))
        if count == 0:
            return []
        lengths = rng.exponential(mean_length, size=count)
        total = float(lengths.sum())
        if total >= duration:
            continue
        cuts = np.sort(rng.uniform(0.0, duration - total, size=count))
        epochs = []
        consumed = 0.0
        for cut, length in zip(cuts, lengths):
            start = cut + consumed
            if epochs and start <= epochs[-1][1]:
                epochs[-1] = (epochs[-1][0], start + length)
            else:
                epochs.append((start, start + length))
            consumed += length
        return epochs
    raise PackingError(
        f"could not place epochs covering {fraction:.3f} of {duration} us "
        f"with mean length {mean_length} us after {max_retries} attempts"
    )


def sample_correlated_pair(
    config_a: TelegraphConfig,
    config_b: TelegraphConfig,
    injection: CorrelationInjection,
    seed,
    padding: float = 0.0,
) -> tuple[TelegraphTrajectory, TelegraphTrajectory]:
    """Draw a pair of trajectories with shared-jump epochs.

    Outside epochs the two qubits evolve independently with their own
    rates.  Inside an epoch both adopt the jump instants of one shared
    schedule (relaxation time ``correlated_t1``, excited population the
    mean of the two devices'), toggling through their own states, so
    the run lengths of the two traces coincide.

    ``padding`` extends the simulated window by that much on both sides
    (the returned trajectories cover duration + 2*padding).  Analyses
    that slice out the center window then see dwell staircases whose
    edge runs carry their true lengths instead of window-truncated
    ones; the truncation otherwise biases dwell covariances upward by
    O(mean_dwell/duration), comparable to sub-percent injections.

    Deterministic given ``seed``; epoch layout, the shared schedule and
    each qubit's independent stretches use separate derived streams.
    """
    if config_a.sample_period != config_b.sample_period:
        raise InvalidInputError("configs must share sample_period")
    if config_a.duration != config_b.duration:
        raise InvalidInputError("configs must share duration")
    if padding < 0:
        raise InvalidInputError("padding must be nonnegative")
    if padding > 0:
        total = config_a.duration + 2.0 * padding
        pad_bins = padding / config_a.sample_period
        if abs(pad_bins - round(pad_bins)) > 1e-9 * max(1.0, pad_bins):
            raise InvalidInputError("padding must be an integer multiple of sample_period")
        config_a = replace(config_a, duration=total)
        config_b = replace(config_b, duration=total)
    duration = config_a.duration

    if isinstance(seed, np.random.SeedSequence):
        root = seed
    else:
        root = np.random.SeedSequence(int(seed))
    rng_layout, rng_shared, rng_a, rng_b = (np.random.default_rng(s) for s in root.spawn(4))

    epochs = _draw_epochs(rng_layout, duration, injection.fraction, injection.epoch_mean_length)

    p_e_shared = 0.5 * (config_a.p_e + config_b.p_e)
    shared_up, shared_down = rates_from_t1(injection.correlated_t1, p_e_shared)
    shared_scales = _dwell_scales(shared_up, shared_down)

    state_a = EXCITED if rng_a.random() < config_a.p_e else GROUND
    state_b = EXCITED if rng_b.random() < config_b.p_e else GROUND
    init_a, init_b = state_a, state_b
    jumps_a: list[np.ndarray] = []
    jumps_b: list[np.ndarray] = []

    scales_a = _dwell_scales(*config_a.rates)
    scales_b = _dwell_scales(*config_b.rates)

    def independent(t0, t1, state_a, state_b):
        seg_a, state_a = _jump_instants_loop(rng_a, state_a, t0, t1, *scales_a)
        seg_b, state_b = _jump_instants_loop(rng_b, state_b, t0, t1, *scales_b)
        jumps_a.append(seg_a)
        jumps_b.append(seg_b)
        return state_a, state_b

    cursor = 0.0
    shared_parity = EXCITED if rng_shared.random() < p_e_shared else GROUND
    for start, end in epochs:
        state_a, state_b = independent(cursor, start, state_a, state_b)
        if injection.align_boundaries and start > 0.0:
            jumps_a.append(np.array([start]))
            jumps_b.append(np.array([start]))
            state_a, state_b = 1 - state_a, 1 - state_b
        shared, shared_parity = _jump_instants_loop(
            rng_shared, shared_parity, start, end, *shared_scales
        )
        jumps_a.append(shared)
        jumps_b.append(shared)
        n = len(shared)
        state_a = (state_a + n) % 2
        state_b = (state_b + n) % 2
        if injection.align_boundaries and end < duration:
            jumps_a.append(np.array([end]))
            jumps_b.append(np.array([end]))
            state_a, state_b = 1 - state_a, 1 - state_b
        cursor = end
    independent(cursor, duration, state_a, state_b)

    def finish(parts, init, config):
        jumps = np.concatenate(parts) if parts else np.empty(0)
        states = _bin_states(jumps, init, config.n_samples, config.sample_period)
        return TelegraphTrajectory(states, config.sample_period, jumps, int(init))

    return finish(jumps_a, init_a, config_a), finish(jumps_b, init_b, config_b)


@dataclass
class DwellRateEstimate:
    """Sojourn-time rate statistics accumulated from exact jump records."""

    mean_dwell_g: float
    mean_dwell_e: float
    n_exits_g: int
    n_exits_e: int
    time_g: float
    time_e: float


def dwell_statistics(trajectories) -> DwellRateEstimate:
    """Per-state mean dwell times from exact jump instants.

    Uses the exposure-over-exits estimator (total time in a state
    divided by the number of observed exits), which is free of the
    window-censoring bias that depresses the plain mean of fully
    contained dwells when the window is only tens of dwells long.
    """
    time_s = [0.0, 0.0]
    exits = [0, 0]
    for traj in trajectories:
        edges = np.concatenate(([0.0], traj.jump_times, [traj.duration]))
        spans = np.diff(edges)
        states = (traj.initial_state + np.arange(len(spans))) % 2
        for s in (GROUND, EXCITED):
            time_s[s] += float(spans[states == s].sum())
        n_jumps = len(traj.jump_times)
        jump_from = (traj.initial_state + np.arange(n_jumps)) % 2
        exits[GROUND] += int(np.sum(jump_from == GROUND))
        exits[EXCITED] += int(np.sum(jump_from == EXCITED))
    mean_g = time_s[GROUND] / exits[GROUND] if exits[GROUND] else math.inf
    mean_e = time_s[EXCITED] / exits[EXCITED] if exits[EXCITED] else math.inf
    return DwellRateEstimate(mean_g, mean_e, exits[GROUND], exits[EXCITED],
                             time_s[GROUND], time_s[EXCITED])
