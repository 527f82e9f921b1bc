"""Noisy I/Q readout synthesis and histogramming.

Each 5 us integration bin yields one (I, Q) point: the state-dependent
mean plus isotropic Gaussian noise, in photon-number units.  Records
store binary32 samples so they round-trip bit-identically through the
IQR1 file format.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleFidelityError, InvalidInputError
from .numerics import inverse_normal_cdf
from .seeding import rng_from_seed
from .telegraph import TelegraphTrajectory


@dataclass(frozen=True)
class ReadoutModel:
    """Two-peak readout response: per-state (I, Q) means and noise sigma."""

    mean_g: tuple[float, float]
    mean_e: tuple[float, float]
    sigma: float

    def __post_init__(self):
        if tuple(self.mean_g) == tuple(self.mean_e):
            raise InvalidInputError("state means must differ")
        if not self.sigma > 0:
            raise InvalidInputError(f"sigma must be positive, got {self.sigma}")

    @property
    def separation(self) -> float:
        dg, de = self.mean_g, self.mean_e
        return math.hypot(de[0] - dg[0], de[1] - dg[1])


@dataclass
class IQRecord:
    """One monitoring window of demodulated quadrature samples."""

    samples: np.ndarray  # (n, 2) float32, columns I, Q
    sample_period: float

    def __post_init__(self):
        self.samples = np.ascontiguousarray(self.samples, dtype=np.float32)
        if self.samples.ndim != 2 or self.samples.shape[1] != 2:
            raise InvalidInputError(f"samples must be (n, 2), got {self.samples.shape}")
        if not np.all(np.isfinite(self.samples)):
            raise InvalidInputError("samples contain non-finite values")

    @property
    def n_samples(self) -> int:
        return len(self.samples)


def sigma_for_fidelity(target_fidelity: float, separation: float) -> float:
    """Noise sigma giving a single-sample midpoint classifier the target fidelity.

    A midpoint threshold on one sample has assignment fidelity
    Phi(separation / (2 sigma)); inverting with the rational-approximation
    normal quantile gives sigma = separation / (2 Phi^-1(F)).
    """
    if not separation > 0:
        raise InvalidInputError(f"separation must be positive, got {separation}")
    if not target_fidelity < 1:
        raise InfeasibleFidelityError("fidelity 1 requires zero noise")
    if not target_fidelity > 0.5:
        raise InfeasibleFidelityError(
            f"single-sample fidelity {target_fidelity} <= 0.5 is not achievable by any sigma"
        )
    return separation / (2.0 * inverse_normal_cdf(target_fidelity))


def synthesize_iq(trajectory: TelegraphTrajectory, model: ReadoutModel, seed) -> IQRecord:
    """Simulate the measurement record of one trajectory.

    Sample k is the mean of the state occupied at bin k plus independent
    N(0, sigma^2) noise on each quadrature.  Deterministic given the seed.
    """
    rng = rng_from_seed(seed)
    means = np.array([model.mean_g, model.mean_e], dtype=float)
    centers = means[trajectory.states]
    noise = rng.normal(0.0, model.sigma, size=centers.shape)
    return IQRecord((centers + noise).astype(np.float32), trajectory.sample_period)


@dataclass
class Histogram2D:
    """I/Q occupation counts plus a tally of out-of-range samples."""

    counts: np.ndarray
    i_edges: np.ndarray
    q_edges: np.ndarray
    overflow: int

    @property
    def total(self) -> int:
        return int(self.counts.sum()) + self.overflow


def histogram2d(records, bins=64, value_range=None) -> Histogram2D:
    """Pooled 2D histogram of one or more IQ records.

    ``value_range`` is ((i_min, i_max), (q_min, q_max)); omitted axes
    default to the data extent.  Samples outside the range land in the
    overflow tally so the total count is conserved.
    """
    if isinstance(records, IQRecord):
        records = [records]
    if not records:
        raise InvalidInputError("need at least one record")
    data = np.concatenate([r.samples for r in records]).astype(float)

    if np.isscalar(bins):
        bins = (int(bins), int(bins))
    if bins[0] < 2 or bins[1] < 2:
        raise InvalidInputError(f"need >= 2 bins per axis, got {bins}")

    if value_range is None:
        value_range = ((data[:, 0].min(), data[:, 0].max()), (data[:, 1].min(), data[:, 1].max()))
    (i_lo, i_hi), (q_lo, q_hi) = value_range
    if not (i_lo < i_hi and q_lo < q_hi):
        raise InvalidInputError(f"degenerate histogram range {value_range}")

    inside = (
        (data[:, 0] >= i_lo) & (data[:, 0] <= i_hi)
        & (data[:, 1] >= q_lo) & (data[:, 1] <= q_hi)
    )
    counts, i_edges, q_edges = np.histogram2d(
        data[inside, 0], data[inside, 1], bins=bins, range=((i_lo, i_hi), (q_lo, q_hi))
    )
    overflow = int(len(data) - inside.sum())
    return Histogram2D(counts, i_edges, q_edges, overflow)
