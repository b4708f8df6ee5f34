"""Damped least-squares minimizer used by all fit routines.

Multiplicative Levenberg-style damping with Marquardt column scaling,
solved through a QR least-squares formulation to avoid squaring the
Jacobian condition number. Deterministic stopping rule: relative
parameter step below ``step_tol`` or ``max_iter`` iterations, whichever
comes first, followed by a short undamped Gauss-Newton polish.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = ["LMResult", "levenberg_marquardt"]

_FD_STEP = 1.49e-8  # sqrt(machine epsilon)


@dataclass
class LMResult:
    x: np.ndarray
    cost: float  # sum of squared residuals at x
    residual: np.ndarray
    jacobian: np.ndarray
    covariance: np.ndarray | None
    n_iter: int
    converged: bool

    @property
    def sigmas(self) -> np.ndarray:
        if self.covariance is None:
            return np.full(len(self.x), np.nan)
        return np.sqrt(np.maximum(np.diag(self.covariance), 0.0))


def _numeric_jacobian(fn: Callable, x: np.ndarray, r0: np.ndarray, x_scale: np.ndarray) -> np.ndarray:
    jac = np.empty((len(r0), len(x)))
    for j in range(len(x)):
        h = _FD_STEP * max(abs(x[j]), x_scale[j])
        xp = x.copy()
        xp[j] += h
        jac[:, j] = (fn(xp) - r0) / h
    return jac


def _damped_step(jac: np.ndarray, r: np.ndarray, lam: float) -> np.ndarray:
    """Solve min ||J s + r||^2 + lam ||D s||^2 with D = column norms of J."""
    n = jac.shape[1]
    d = np.sqrt(np.einsum("ij,ij->j", jac, jac))
    d = np.maximum(d, 1e-300)
    aug = np.vstack([jac / d, math.sqrt(lam) * np.eye(n)])
    rhs = np.concatenate([-r, np.zeros(n)])
    step_scaled, *_ = np.linalg.lstsq(aug, rhs, rcond=None)
    return step_scaled / d


def levenberg_marquardt(
    residual_fn: Callable[[np.ndarray], np.ndarray],
    x0,
    jacobian_fn: Callable[[np.ndarray], np.ndarray] | None = None,
    *,
    x_scale=None,
    max_iter: int = 200,
    step_tol: float = 1e-10,
    lambda0: float = 1e-3,
    lambda_factor: float = 10.0,
    lambda_max: float = 1e15,
) -> LMResult:
    """Minimize ``sum(residual_fn(x) ** 2)`` starting from ``x0``.

    ``x_scale`` sets the magnitude floor used for relative step control and
    finite-difference steps of parameters that pass through zero. The
    covariance is ``inv(J^T J)`` scaled by the reduced chi-square, i.e.
    residuals are treated as equally weighted unless the caller already
    weighted them.
    """
    x = np.asarray(x0, dtype=float).copy()
    n = len(x)
    scale = np.ones(n) if x_scale is None else np.asarray(x_scale, dtype=float)

    def jac_at(xv, rv):
        if jacobian_fn is not None:
            return np.asarray(jacobian_fn(xv), dtype=float)
        return _numeric_jacobian(residual_fn, xv, rv, scale)

    r = np.asarray(residual_fn(x), dtype=float)
    cost = float(r @ r)
    lam = lambda0
    converged = False
    n_iter = 0

    while n_iter < max_iter and not converged and cost > 0.0:
        n_iter += 1
        jac = jac_at(x, r)
        accepted = False
        while lam <= lambda_max:
            step = _damped_step(jac, r, lam)
            x_new = x + step
            r_new = np.asarray(residual_fn(x_new), dtype=float)
            cost_new = float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new <= cost:
                rel_step = np.max(np.abs(step) / np.maximum(np.abs(x), scale))
                x, r, cost = x_new, r_new, cost_new
                accepted = True
                if rel_step < step_tol:
                    converged = True
                lam = max(lam / lambda_factor, 1e-12)
                break
            lam *= lambda_factor
        if not accepted:
            # Damping exhausted: no direction improves the cost, so the
            # current point is a numerical minimum.
            converged = True
            break

    # Undamped polish: near the optimum plain Gauss-Newton converges
    # quadratically and removes residual error along sloppy directions.
    for _ in range(3):
        jac = jac_at(x, r)
        step, *_ = np.linalg.lstsq(jac, -r, rcond=None)
        x_new = x + step
        r_new = np.asarray(residual_fn(x_new), dtype=float)
        cost_new = float(r_new @ r_new)
        if np.isfinite(cost_new) and cost_new <= cost:
            moved = cost_new < cost
            x, r, cost = x_new, r_new, cost_new
            if not moved:
                break
        else:
            break

    jac = jac_at(x, r)
    covariance = None
    m = len(r)
    if m > n and np.all(np.isfinite(jac)):
        try:
            # SVD of J keeps the condition number manageable and maps
            # near-degenerate directions to large variances rather than
            # silently dropping them.
            _, sv, vt = np.linalg.svd(jac, full_matrices=False)
            if sv.max() > 0:
                sv = np.maximum(sv, sv.max() * np.finfo(float).eps)
                covariance = (vt.T * sv**-2) @ vt * (cost / (m - n))
        except np.linalg.LinAlgError:
            covariance = None
    return LMResult(
        x=x,
        cost=cost,
        residual=r,
        jacobian=jac,
        covariance=covariance,
        n_iter=n_iter,
        converged=converged,
    )
