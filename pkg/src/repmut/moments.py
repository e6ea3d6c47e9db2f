"""Generalized (r, s) Kalman-Bucy moment dynamics.

For the linear-Gaussian model the filtering density stays Gaussian, so the
whole filter reduces to two coupled equations::

    dm = G m dt + (r - s) K (dZ - H m dt)          (mean; innovation weight r - s)
    dC/dt = G C + C G^T + Sigma - r C H^T Xi^{-1} H C   (covariance; s-free)

with gain ``K = C H^T Xi^{-1}``.  At (r, s) = (1, 0) these are the classical
Kalman-Bucy equations.  The covariance flow is deterministic and independent
of s; only the mean feels s, through the innovation weight r - s.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from ._io import write_csv
from .model import (
    ConvergenceError,
    LinearGaussianModel,
    ParameterError,
    RsPair,
    StabilityError,
    TimeGrid,
)
from .pathgen import PiecewiseObservation

__all__ = [
    "kalman_gain",
    "cov_rhs",
    "step_covariance",
    "step_mean_ito",
    "step_mean_smooth",
    "SteadyStateCov",
    "steady_state_cov",
    "steady_state_cov_scalar",
    "StabilityInfo",
    "stability_matrix",
    "a_inf_scalar",
    "MomentTrajectory",
    "run_moments",
    "trajectory_to_csv",
]


def kalman_gain(model: LinearGaussianModel, C: np.ndarray) -> np.ndarray:
    """Gain K = C H^T Xi^{-1} for the current covariance."""
    return C @ model.H.T @ model.xi_inv()


def cov_rhs(model: LinearGaussianModel, r: float, C: np.ndarray) -> np.ndarray:
    """Right side of the covariance flow; depends on r but never on s."""
    GC = model.G @ C
    quad = C @ model.H.T @ model.xi_inv() @ model.H @ C
    return GC + GC.T + model.Sigma - r * quad


def step_covariance(C: np.ndarray, model: LinearGaussianModel, rs: RsPair | float, dt: float) -> np.ndarray:
    """One RK4 step of the covariance flow, symmetrized.

    Raises :class:`StabilityError` if the update loses positive
    definiteness (the usual cue that dt is too large for this r).
    """
    r = rs.r if isinstance(rs, RsPair) else float(rs)
    k1 = cov_rhs(model, r, C)
    k2 = cov_rhs(model, r, C + 0.5 * dt * k1)
    k3 = cov_rhs(model, r, C + 0.5 * dt * k2)
    k4 = cov_rhs(model, r, C + dt * k3)
    out = C + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    out = 0.5 * (out + out.T)
    if np.min(np.linalg.eigvalsh(out)) <= 0.0:
        raise StabilityError(f"covariance lost positive definiteness at dt={dt}; reduce dt")
    return out


def step_mean_ito(
    m: np.ndarray,
    C: np.ndarray,
    model: LinearGaussianModel,
    rs: RsPair,
    dz: np.ndarray,
    dt: float,
) -> np.ndarray:
    """Euler-Maruyama mean update against an observation increment dz."""
    K = kalman_gain(model, C)
    innovation = np.asarray(dz, dtype=float) - model.H @ m * dt
    return m + model.G @ m * dt + rs.diff * (K @ innovation)


def step_mean_smooth(
    m: np.ndarray,
    C: np.ndarray,
    model: LinearGaussianModel,
    rs: RsPair,
    rate: np.ndarray,
    dt: float,
) -> np.ndarray:
    """Forward-Euler mean update against a piecewise-constant rate."""
    K = kalman_gain(model, C)
    return m + dt * (model.G @ m + rs.diff * (K @ (np.asarray(rate, dtype=float) - model.H @ m)))


class SteadyStateCov(NamedTuple):
    cov: np.ndarray
    residual: float
    iterations: int
    method: str


def steady_state_cov_scalar(model: LinearGaussianModel, r: float) -> float:
    """Closed-form steady covariance (G + sqrt(G^2 + r H^2 Xi^{-1} Sigma)) / (r H^2 Xi^{-1})."""
    model.require_scalar("steady_state_cov_scalar")
    if r <= 0:
        raise ParameterError(f"r must be > 0, got {r}")
    hh = model.h**2 / model.xi
    return float((model.g + np.sqrt(model.g**2 + r * model.snr)) / (r * hh))


def steady_state_cov(
    model: LinearGaussianModel,
    r: float,
    tol: float = 1e-10,
    max_steps: int = 2_000_000,
) -> SteadyStateCov:
    """Steady covariance: closed form for scalar models, flow to rest otherwise.

    The flow integrates the covariance equation with RK4 until the right
    side's Frobenius norm drops below ``tol``; failure to converge raises
    :class:`ConvergenceError`.
    """
    if model.is_scalar:
        c = steady_state_cov_scalar(model, r)
        cov = np.array([[c]])
        return SteadyStateCov(cov, float(np.linalg.norm(cov_rhs(model, r, cov))), 0, "closed-form")
    if r <= 0:
        raise ParameterError(f"r must be > 0, got {r}")
    C = model.C0 if np.min(np.linalg.eigvalsh(model.C0)) > 0 else model.Sigma + np.eye(model.dim_state)
    # Step scaled to the fastest local rate so stiff r values stay stable.
    for iteration in range(1, max_steps + 1):
        rhs = cov_rhs(model, r, C)
        res = float(np.linalg.norm(rhs))
        if res < tol:
            return SteadyStateCov(C, res, iteration - 1, "flow")
        scale = np.linalg.norm(model.G) + r * np.linalg.norm(
            model.H.T @ model.xi_inv() @ model.H
        ) * np.linalg.norm(C) + 1.0
        C = step_covariance(C, model, r, min(0.25 / scale, 1.0))
    raise ConvergenceError(f"steady-state covariance flow stalled at residual {res:.3e}")


@dataclass(frozen=True)
class StabilityInfo:
    """Error-dynamics matrix A = G - (r-s) K H and its spectral abscissas."""

    A: np.ndarray
    alpha: float  # max real part of eig(A)
    alpha_sym: float  # max eig of A + A^T

    @property
    def stable(self) -> bool:
        return self.alpha < 0 and self.alpha_sym < 0


def stability_matrix(model: LinearGaussianModel, rs: RsPair, C: np.ndarray) -> StabilityInfo:
    C = np.atleast_2d(np.asarray(C, dtype=float))
    A = model.G - rs.diff * kalman_gain(model, C) @ model.H
    alpha = float(np.max(np.linalg.eigvals(A).real))
    alpha_sym = float(np.max(np.linalg.eigvalsh(A + A.T)))
    return StabilityInfo(A=A, alpha=alpha, alpha_sym=alpha_sym)


def a_inf_scalar(model: LinearGaussianModel, r: float, s: float) -> float:
    """Steady-state error decay constant, scalar closed form.

    ``(s/r) G - ((r-s)/r) sqrt(G^2 + r H^2 Xi^{-1} Sigma)``; equals
    G - (r-s) K_inf H evaluated at the steady covariance.
    """
    model.require_scalar("a_inf_scalar")
    if r <= 0:
        raise ParameterError(f"r must be > 0, got {r}")
    root = np.sqrt(model.g**2 + r * model.snr)
    return float((s / r) * model.g - ((r - s) / r) * root)


@dataclass(frozen=True)
class MomentTrajectory:
    """Time series of the filter's mean, covariance, and gain."""

    times: np.ndarray  # (T + 1,)
    means: np.ndarray  # (T + 1, m)
    covs: np.ndarray  # (T + 1, m, m)
    gains: np.ndarray  # (T + 1, m, n)

    def at(self, index: int) -> tuple[np.ndarray, np.ndarray]:
        return self.means[index], self.covs[index]


def run_moments(
    model: LinearGaussianModel,
    rs: RsPair,
    grid: TimeGrid,
    drive,
    m_init: np.ndarray | None = None,
    c_init: np.ndarray | None = None,
    store_every: int = 1,
) -> MomentTrajectory:
    """Integrate mean and covariance over the grid against a drive.

    ``drive`` is either a :class:`PiecewiseObservation` (rate form, forward
    Euler) or an ``(n_steps, n)`` array of observation increments
    (Euler-Maruyama).  ``store_every`` thins the stored trajectory; the final
    state is always stored.
    """
    smooth = isinstance(drive, PiecewiseObservation)
    rates = drive.rates_per_step(grid) if smooth else np.asarray(drive, dtype=float)
    if not smooth and rates.shape != (grid.n_steps, model.dim_obs):
        raise ParameterError(
            f"increment drive must have shape ({grid.n_steps}, {model.dim_obs}), got {rates.shape}"
        )
    m = (model.m0 if m_init is None else np.asarray(m_init, dtype=float)).reshape(model.dim_state).copy()
    C = np.atleast_2d(np.asarray(model.C0 if c_init is None else c_init, dtype=float)).copy()

    stored = [0]
    means = [m.copy()]
    covs = [C.copy()]
    gains = [kalman_gain(model, C)]
    for j in range(grid.n_steps):
        if smooth:
            m = step_mean_smooth(m, C, model, rs, rates[j], grid.dt)
        else:
            m = step_mean_ito(m, C, model, rs, rates[j], grid.dt)
        C = step_covariance(C, model, rs, grid.dt)
        if (j + 1) % store_every == 0 or j + 1 == grid.n_steps:
            stored.append(j + 1)
            means.append(m.copy())
            covs.append(C.copy())
            gains.append(kalman_gain(model, C))
    times = grid.times()[np.asarray(stored)]
    return MomentTrajectory(
        times=times,
        means=np.asarray(means),
        covs=np.asarray(covs),
        gains=np.asarray(gains),
    )


def trajectory_to_csv(traj: MomentTrajectory, path: str | Path) -> Path:
    """Columns t, m0.., C00.., K00.. (row-major matrix entries)."""
    m = traj.means.shape[1]
    n = traj.gains.shape[2]
    header = (
        ["t"]
        + [f"m{i}" for i in range(m)]
        + [f"C{i}{j}" for i in range(m) for j in range(m)]
        + [f"K{i}{j}" for i in range(m) for j in range(n)]
    )
    rows = (
        [float(t), *map(float, mm), *map(float, CC.ravel()), *map(float, KK.ravel())]
        for t, mm, CC, KK in zip(traj.times, traj.means, traj.covs, traj.gains)
    )
    return write_csv(path, header, rows)
