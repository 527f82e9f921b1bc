"""Fluxonium spectrum model.

The qubit Hamiltonian in GHz units of frequency,

    H = 4 E_C n^2 + (1/2) E_L phi^2 - E_J cos(phi - 2 pi Phi_ext/Phi_0),

is represented in the truncated harmonic-oscillator basis of its
quadratic part.  The external flux sits inside the cosine (with the
phase operator built from a real ladder-operator convention) so the
matrix stays real-symmetric at every bias point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .constants import FLUX_QUANTUM, PLANCK_H
from .errors import InvalidInputError, TruncationUnsafeError, UnderdeterminedError
from .numerics import FitResult, nonlinear_least_squares, symmetric_eigensolve

_MIN_BASIS = 10


@dataclass(frozen=True)
class FluxoniumParams:
    """Circuit energies in GHz (divided by h) and the basis truncation."""

    e_j: float
    e_c: float
    e_l: float
    basis_size: int = 100

    def __post_init__(self):
        for name in ("e_j", "e_c", "e_l"):
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"{name} must be positive, got {getattr(self, name)}")
        if self.basis_size < _MIN_BASIS:
            raise InvalidInputError(f"basis_size must be >= {_MIN_BASIS}, got {self.basis_size}")

    @property
    def oscillator_freq(self) -> float:
        """Harmonic frequency sqrt(8 E_C E_L) of the quadratic part, GHz."""
        return math.sqrt(8.0 * self.e_c * self.e_l)

    @property
    def phi_zpf(self) -> float:
        """Zero-point spread of the phase operator."""
        return (2.0 * self.e_c / self.e_l) ** 0.25


@dataclass(frozen=True)
class SpectrumPoint:
    phi_ext: float
    f01_ghz: float


def el_from_inductance(inductance_nh: float) -> float:
    """Inductive energy E_L/h in GHz for an inductance in nH."""
    if not inductance_nh > 0:
        raise InvalidInputError(f"inductance must be positive, got {inductance_nh}")
    e_l_joule = (FLUX_QUANTUM / (2.0 * math.pi)) ** 2 / (inductance_nh * 1e-9)
    return e_l_joule / PLANCK_H / 1e9


def build_hamiltonian(params: FluxoniumParams, phi_ext: float) -> np.ndarray:
    """Hamiltonian matrix (GHz) at external flux phi_ext (in flux quanta).

    The cosine is evaluated through the spectral decomposition of the
    truncated phase operator: diagonalize phi, take the cosine of its
    eigenvalues shifted by the flux, rotate back.  Exact within the
    truncation and manifestly real-symmetric.
    """
    if not np.isfinite(phi_ext):
        raise InvalidInputError("phi_ext must be finite")
    n = params.basis_size
    k = np.arange(n)

    # phi = phi_zpf (a + a^dagger): real symmetric tridiagonal.
    off = params.phi_zpf * np.sqrt(k[1:])
    phi_op = np.zeros((n, n))
    phi_op[k[1:], k[1:] - 1] = off
    phi_op[k[1:] - 1, k[1:]] = off

    phi_vals, phi_vecs = symmetric_eigensolve(phi_op)
    shifted = np.cos(phi_vals - 2.0 * math.pi * phi_ext)
    cos_op = (phi_vecs * shifted) @ phi_vecs.T

    h = np.diag(params.oscillator_freq * (k + 0.5)) - params.e_j * cos_op
    return (h + h.T) / 2.0


def eigenlevels(params: FluxoniumParams, phi_ext: float) -> np.ndarray:
    """Ascending eigenenergies (GHz) at one flux bias."""
    values, _ = symmetric_eigensolve(build_hamiltonian(params, phi_ext))
    return values


def transition_frequency(params: FluxoniumParams, phi_ext: float, i: int = 0, j: int = 1) -> float:
    """Transition frequency f_ij = E_j - E_i in GHz.

    Levels above basis_size/2 are refused: truncation artifacts grow
    toward the top of the basis.
    """
    if not 0 <= i < j:
        raise InvalidInputError(f"need 0 <= i < j, got i={i}, j={j}")
    if j >= params.basis_size / 2:
        raise TruncationUnsafeError(
            f"level {j} is not safe with basis_size {params.basis_size}; "
            "raise basis_size to at least twice the level index"
        )
    levels = eigenlevels(params, phi_ext)
    return float(levels[j] - levels[i])


def spectrum_sweep(params: FluxoniumParams, fluxes) -> list[SpectrumPoint]:
    """f01 at each flux point, order preserving."""
    fluxes = list(fluxes)
    if not fluxes:
        raise InvalidInputError("flux list must be nonempty")
    return [SpectrumPoint(float(f), transition_frequency(params, float(f))) for f in fluxes]


def fit_spectrum(
    data: list[SpectrumPoint],
    initial: FluxoniumParams,
    flux_offset_free: bool = False,
) -> tuple[FluxoniumParams, float, FitResult]:
    """Least-squares fit of (e_j, e_c, e_l) [+ global flux offset] to data.

    Returns the fitted parameter set, the flux offset (0 when not free)
    and the underlying fit result.
    """
    if len(data) < 4:
        raise UnderdeterminedError(f"need at least 4 spectrum points, got {len(data)}")
    phi = np.array([p.phi_ext for p in data], dtype=float)
    f01 = np.array([p.f01_ghz for p in data], dtype=float)
    if phi.max() - phi.min() < 0.2:
        raise UnderdeterminedError(
            f"flux span {phi.max() - phi.min():.3f} too narrow; need >= 0.2 flux quanta"
        )

    basis = initial.basis_size

    def model(theta, x):
        e_j, e_c, e_l = theta[:3]
        offset = theta[3] if flux_offset_free else 0.0
        p = FluxoniumParams(e_j, e_c, e_l, basis)
        return np.array([transition_frequency(p, xx + offset) for xx in x])

    theta0 = [initial.e_j, initial.e_c, initial.e_l]
    bounds = [(1e-6, None), (1e-6, None), (1e-6, None)]
    if flux_offset_free:
        theta0.append(0.0)
        bounds.append((-0.5, 0.5))

    result = nonlinear_least_squares(model, phi, f01, theta0, bounds=bounds)
    e_j, e_c, e_l = result.parameters[:3]
    offset = float(result.parameters[3]) if flux_offset_free else 0.0
    fitted = FluxoniumParams(float(e_j), float(e_c), float(e_l), basis)
    return fitted, offset, result


def calibrate_e_j(
    target_f01_ghz: float,
    e_c: float,
    e_l: float,
    basis_size: int = 100,
    phi_ext: float = 0.5,
    tol: float = 1e-10,
) -> float:
    """E_J such that f01(phi_ext) hits a target, by bisection.

    f01 at half flux decreases monotonically in E_J over the physical
    range, which brackets the root.
    """

    def f01(e_j):
        return transition_frequency(FluxoniumParams(e_j, e_c, e_l, basis_size), phi_ext)

    lo, hi = 0.1, 0.2
    while f01(hi) > target_f01_ghz:
        lo, hi = hi, hi * 2.0
        if hi > 1e4:
            raise InvalidInputError("target frequency unreachable by raising E_J")
    if f01(lo) < target_f01_ghz:
        raise InvalidInputError("target frequency unreachable: f01 already below target at E_J=0.1")
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if f01(mid) > target_f01_ghz:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# Default device parameter sets.  E_L comes from the 455 nH array
# inductance; E_C is a representative fluxonium charging energy; E_J is
# calibrated (scripts/calibrate_devices.py) so the half-flux transition
# frequency lands on the measured value for each device.
DEVICE_A = FluxoniumParams(e_j=6.303377323255, e_c=2.5, e_l=0.359256072103, basis_size=100)
DEVICE_B = FluxoniumParams(e_j=6.203243769153, e_c=2.5, e_l=0.359256072103, basis_size=100)


def read_spectrum_csv(path) -> list[SpectrumPoint]:
    """Read spectroscopy data: CSV with header ``phi_ext,f01_ghz``."""
    points = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "phi_ext,f01_ghz":
            raise InvalidInputError(f"unexpected spectroscopy header: {header!r}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            a, b = line.split(",")
            points.append(SpectrumPoint(float(a), float(b)))
    return points


def write_fit_params(path, params: FluxoniumParams, flux_offset: float = 0.0) -> None:
    """Emit fitted parameters as a flat key-value text file."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"e_j_ghz={params.e_j:.9g}\n")
        fh.write(f"e_c_ghz={params.e_c:.9g}\n")
        fh.write(f"e_l_ghz={params.e_l:.9g}\n")
        fh.write(f"flux_offset={flux_offset:.9g}\n")


def read_fit_params(path) -> tuple[FluxoniumParams, float]:
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            key, _, val = line.partition("=")
            values[key] = float(val)
    params = FluxoniumParams(values["e_j_ghz"], values["e_c_ghz"], values["e_l_ghz"])
    return params, values.get("flux_offset", 0.0)
