"""Numerical kernels: symmetric eigensolver, damped Gauss-Newton least
squares, exponential-decay fitting, and an inverse normal CDF.

All routines are pure functions of their arguments and safe to call
concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, UnderdeterminedError


@dataclass
class FitResult:
    """Outcome of a least-squares minimization.

    ``residual_norm`` is the Euclidean norm of the residual vector at
    ``parameters``; it never exceeds the norm at the initial guess.
    """

    parameters: np.ndarray
    residual_norm: float
    converged: bool
    iterations: int


def symmetric_eigensolve(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a dense real-symmetric matrix.

    Parameters
    ----------
    m : (n, n) array
        Symmetric matrix (exact storage symmetry required).

    Returns
    -------
    eigenvalues : (n,) array, ascending
    eigenvectors : (n, n) array
        Orthonormal columns; column k pairs with eigenvalue k.  The sign
        of each column is fixed by making its largest-magnitude component
        positive, so results are deterministic.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
        raise InvalidInputError(f"expected a square matrix of dimension >= 1, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidInputError("matrix contains non-finite entries")
    if not np.array_equal(m, m.T):
        raise InvalidInputError("matrix is not symmetric as stored")

    eigenvalues, vectors = np.linalg.eigh(m)
    # Deterministic sign convention per column.
    lead = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[lead, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return eigenvalues, vectors * signs


def _numerical_jacobian(residual_fn, params, bounds):
    """Central-difference Jacobian, step 1e-6 * max(|p_i|, 1).

    Steps shrink (or fall back to one-sided differences) where a bound is
    closer than the nominal step.
    """
    p = np.asarray(params, dtype=float)
    r0 = residual_fn(p)
    jac = np.empty((r0.size, p.size))
    for i in range(p.size):
        step = 1e-6 * max(abs(p[i]), 1.0)
        lo, hi = bounds[i]
        up = min(step, (hi - p[i]) / 2) if np.isfinite(hi) else step
        dn = min(step, (p[i] - lo) / 2) if np.isfinite(lo) else step
        up = max(up, 0.0)
        dn = max(dn, 0.0)
        if up + dn <= 0.0:
            jac[:, i] = 0.0
            continue
        p_hi = p.copy()
        p_lo = p.copy()
        p_hi[i] += up
        p_lo[i] -= dn
        jac[:, i] = (residual_fn(p_hi) - residual_fn(p_lo)) / (up + dn)
    return jac


def nonlinear_least_squares(
    model,
    x,
    y,
    initial,
    bounds=None,
    max_iterations: int = 200,
    residual_tol: float = 1e-10,
    step_tol: float = 1e-12,
) -> FitResult:
    """Minimize ||model(params, x) - y||_2 by damped Gauss-Newton.

    Jacobians are numerical (central differences); a Levenberg-style
    damping term scaled by diag(J^T J) turns uphill steps into shorter,
    more gradient-like ones.  Only improving steps are accepted, so the
    returned residual norm never exceeds the initial one.  Convergence is
    declared when the relative residual change drops below
    ``residual_tol`` or the accepted step norm drops below ``step_tol``;
    hitting ``max_iterations`` first returns ``converged=False``.

    Parameters
    ----------
    model : callable(params, x) -> predicted y
    x, y : arrays of observations (len(y) >= number of parameters)
    initial : parameter start point, inside ``bounds``
    bounds : optional sequence of (lo, hi) per parameter, None for free
    """
    y = np.asarray(y, dtype=float).ravel()
    p = np.array(initial, dtype=float).ravel()
    if y.size < p.size:
        raise UnderdeterminedError(f"{y.size} data points cannot determine {p.size} parameters")

    if bounds is None:
        box = [(-np.inf, np.inf)] * p.size
    else:
        box = [
            (-np.inf if lo is None else float(lo), np.inf if hi is None else float(hi))
            for lo, hi in bounds
        ]
        for i, (lo, hi) in enumerate(box):
            if not (lo <= p[i] <= hi):
                raise InvalidInputError(f"initial[{i}]={p[i]} outside bounds ({lo}, {hi})")
    lo_arr = np.array([b[0] for b in box])
    hi_arr = np.array([b[1] for b in box])

    def residual(params):
        return np.asarray(model(params, x), dtype=float).ravel() - y

    r = residual(p)
    if r.size != y.size:
        raise InvalidInputError("model output length does not match data length")
    norm = float(np.linalg.norm(r))
    if not np.isfinite(norm):
        raise InvalidInputError("model is non-finite at the initial guess")
    if norm == 0.0:
        return FitResult(p, 0.0, True, 0)

    lam = 1e-3
    converged = False
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        jac = _numerical_jacobian(residual, p, box)
        jtj = jac.T @ jac
        grad = jac.T @ r
        scale = np.diag(jtj).copy()
        scale[scale < 1e-12] = 1e-12

        accepted = False
        for _ in range(60):
            try:
                step = np.linalg.solve(jtj + lam * np.diag(scale), -grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = np.clip(p + step, lo_arr, hi_arr)
            r_trial = residual(trial)
            norm_trial = float(np.linalg.norm(r_trial))
            if np.isfinite(norm_trial) and norm_trial <= norm:
                step_norm = float(np.linalg.norm(trial - p))
                rel_change = (norm - norm_trial) / max(norm, np.finfo(float).tiny)
                p, r, norm = trial, r_trial, norm_trial
                lam = max(lam / 3.0, 1e-14)
                accepted = True
                if rel_change < residual_tol or step_norm < step_tol or norm == 0.0:
                    converged = True
                break
            lam *= 10.0
        if not accepted:
            # Damping exhausted: stationary up to numerical resolution.
            converged = True
        if converged:
            break

    return FitResult(p, norm, converged, iterations)


@dataclass
class ExponentialFit:
    """A * exp(-|dt| / decay_time) fitted to (dt, value) samples."""

    amplitude: float
    decay_time: float
    decay_undetermined: bool
    fit: FitResult


def fit_exponential(delta_t, values, decay_bounds: tuple[float, float] | None = None) -> ExponentialFit:
    """Fit value(dt) = A * exp(-|dt| / tau) with tau constrained positive.

    ``decay_bounds`` optionally pins the allowed (lo, hi) decay-time
    interval; the default spans 0.1x the smallest nonzero |dt| to twice
    the full span.  All-zero input short-circuits to amplitude 0 with
    the decay time flagged as undetermined.
    """
    dt = np.abs(np.asarray(delta_t, dtype=float).ravel())
    v = np.asarray(values, dtype=float).ravel()
    if dt.size != v.size:
        raise InvalidInputError("delta_t and values must have equal length")
    if dt.size < 3:
        raise InvalidInputError("need at least 3 points to fit an exponential")
    if np.unique(np.asarray(delta_t, dtype=float)).size != dt.size:
        raise InvalidInputError("delta_t values must be distinct")
    if not (np.all(np.isfinite(dt)) and np.all(np.isfinite(v))):
        raise InvalidInputError("non-finite input")

    if np.all(v == 0.0):
        return ExponentialFit(0.0, math.nan, True, FitResult(np.array([0.0, math.nan]), 0.0, True, 0))

    span = float(dt.max())
    if span <= 0.0:
        raise InvalidInputError("delta_t values must not all be zero")
    order = np.argsort(dt)
    amp0 = float(v[order[0]])
    if amp0 == 0.0:
        amp0 = float(v[np.argmax(np.abs(v))])
    # Crude decay guess: last |dt| where the value is still above A/e.
    above = np.abs(v[order]) >= abs(amp0) / math.e
    tau0 = float(dt[order][above][-1]) if above.any() else span / 3.0
    # Constrain the decay to scales the lag grid can actually resolve:
    # below ~a grid step the model collapses onto one point, far beyond
    # the span it degenerates into a constant.
    if decay_bounds is None:
        smallest = float(np.min(dt[dt > 0])) if np.any(dt > 0) else span
        tau_lo = max(span * 1e-9, 0.1 * smallest)
        tau_hi = 2.0 * span
    else:
        tau_lo, tau_hi = decay_bounds
        if not 0 < tau_lo < tau_hi:
            raise InvalidInputError(f"invalid decay bounds ({tau_lo}, {tau_hi})")
    tau0 = min(max(tau0, 2 * tau_lo), tau_hi / 2)

    def model(params, t):
        a, tau = params
        return a * np.exp(-t / tau)

    result = nonlinear_least_squares(
        model, dt, v, [amp0, tau0], bounds=[(None, None), (tau_lo, tau_hi)]
    )
    amplitude, tau = result.parameters
    return ExponentialFit(float(amplitude), float(tau), False, result)


# Coefficients of Acklam's rational approximation to the inverse normal CDF.
_ICDF_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
           1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_ICDF_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
           6.680131188771972e+01, -1.328068155288572e+01)
_ICDF_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
           -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_ICDF_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
           3.754408661907416e+00)


def inverse_normal_cdf(p: float) -> float:
    """Quantile of the standard normal distribution.

    Acklam's rational approximation (relative error < 1.2e-9) refined by
    one Halley step through ``math.erfc``, which brings the result to
    near machine precision.
    """
    if not 0.0 < p < 1.0:
        raise InvalidInputError(f"probability must lie strictly in (0, 1), got {p}")

    p_low = 0.02425
    if p < p_low:
        q = math.sqrt(-2.0 * math.log(p))
        x = ((((( _ICDF_C[0] * q + _ICDF_C[1]) * q + _ICDF_C[2]) * q + _ICDF_C[3]) * q + _ICDF_C[4]) * q + _ICDF_C[5]) / \
            (((( _ICDF_D[0] * q + _ICDF_D[1]) * q + _ICDF_D[2]) * q + _ICDF_D[3]) * q + 1.0)
    elif p <= 1.0 - p_low:
        q = p - 0.5
        r = q * q
        x = ((((( _ICDF_A[0] * r + _ICDF_A[1]) * r + _ICDF_A[2]) * r + _ICDF_A[3]) * r + _ICDF_A[4]) * r + _ICDF_A[5]) * q / \
            ((((( _ICDF_B[0] * r + _ICDF_B[1]) * r + _ICDF_B[2]) * r + _ICDF_B[3]) * r + _ICDF_B[4]) * r + 1.0)
    else:
        q = math.sqrt(-2.0 * math.log1p(-p))
        x = -((((( _ICDF_C[0] * q + _ICDF_C[1]) * q + _ICDF_C[2]) * q + _ICDF_C[3]) * q + _ICDF_C[4]) * q + _ICDF_C[5]) / \
             (((( _ICDF_D[0] * q + _ICDF_D[1]) * q + _ICDF_D[2]) * q + _ICDF_D[3]) * q + 1.0)

    # Halley refinement: cdf(x) - p expressed through erfc for accuracy.
    err = 0.5 * math.erfc(-x / math.sqrt(2.0)) - p
    u = err * math.sqrt(2.0 * math.pi) * math.exp(x * x / 2.0)
    return x - u / (1.0 + x * u / 2.0)
