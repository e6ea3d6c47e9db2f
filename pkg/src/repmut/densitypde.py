"""1-D finite-difference solvers for selection-mutation densities.

Three schemes share one transport operator (upwind advection by the drift
G x, central diffusion by Sigma/2, zero-Dirichlet ghost boundaries):

* ``ck_step``: the selection-mutation density driven by a piecewise-constant
  observation rate; explicit Euler.
* ``zakai_strat_step``: the damped observation-noise form with the
  Stratonovich reading of the noise term; Heun corrector on the noise
  coefficient.  Its normalized solution is the true filter.
* ``zakai_ito_step``: the same damped equation read in the Ito sense
  (Euler-Maruyama).  Driven by the same increments it converges to a
  different, doubly-damped solution; keeping it around is the point, since
  smooth-path approximations land on the Stratonovich limit, not this one.

All steps take and return immutable grids; negative overshoot is clipped to
zero and the clipped mass accumulated in the grid diagnostics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ._io import write_csv
from .model import (
    DegenerateDensityError,
    LinearGaussianModel,
    ParameterError,
    RsPair,
    StabilityError,
    TimeGrid,
)
from .pathgen import PiecewiseObservation

__all__ = [
    "DensityGrid",
    "gaussian_grid",
    "default_domain",
    "ck_step",
    "zakai_ito_step",
    "zakai_strat_step",
    "normalize",
    "density_moments",
    "run_ck",
    "run_zakai",
    "snapshot_to_csv",
]

# Tiny negatives from advection overshoot are clipped; anything worse means
# the step was rejected as unstable.
_NEGATIVITY_FLOOR = 1e-12


@dataclass(frozen=True)
class DensityGrid:
    """Unnormalized density on a uniform 1-D grid.

    ``log_mass`` accumulates the log of factored-out normalization
    constants, so long runs can renormalize each window without losing the
    overall growth factor (the unnormalized solution over- or underflows
    otherwise).  ``clipped`` tracks total mass removed as negative
    overshoot.
    """

    x_min: float
    x_max: float
    nx: int
    values: np.ndarray
    time: float = 0.0
    scheme: str = "ck"
    log_mass: float = 0.0
    clipped: float = 0.0

    def __post_init__(self) -> None:
        if self.nx < 3:
            raise ParameterError(f"need at least 3 nodes, got {self.nx}")
        if not self.x_max > self.x_min:
            raise ParameterError(f"empty domain [{self.x_min}, {self.x_max}]")
        if self.scheme not in ("ck", "zakai_ito", "zakai_strat"):
            raise ParameterError(f"unknown scheme tag {self.scheme!r}")
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.nx,):
            raise ParameterError(f"values must have shape ({self.nx},), got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DegenerateDensityError("density contains non-finite values")
        if np.min(values) < 0.0:
            raise DegenerateDensityError(f"negative density {np.min(values):.3e} on construction")
        object.__setattr__(self, "values", values)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx)

    def mass(self) -> float:
        return float(np.trapezoid(self.values, dx=self.dx))


def gaussian_grid(
    x_min: float,
    x_max: float,
    nx: int,
    mean: float,
    var: float,
    scheme: str = "ck",
) -> DensityGrid:
    """Grid initialized with a normal density (normalized analytically)."""
    if var <= 0:
        raise ParameterError(f"variance must be positive, got {var}")
    x = np.linspace(x_min, x_max, nx)
    values = np.exp(-0.5 * (x - mean) ** 2 / var) / math.sqrt(2.0 * math.pi * var)
    return DensityGrid(x_min=x_min, x_max=x_max, nx=nx, values=values, scheme=scheme)


def default_domain(model: LinearGaussianModel, ref_states: np.ndarray, n_sigma: float = 10.0) -> tuple[float, float]:
    """Domain wide enough that Gaussian tails vanish below double precision.

    The half-width is ``n_sigma`` standard deviations of the perfect-model
    steady covariance; when that degenerates (Sigma = 0) the initial
    covariance stands in.  Bounds cover the initial mean and the whole
    reference range.
    """
    from .moments import steady_state_cov_scalar

    model.require_scalar("default_domain")
    c_hat = steady_state_cov_scalar(model, 1.0) if model.snr > 0 else 0.0
    spread = math.sqrt(c_hat) if c_hat > 0 else math.sqrt(float(model.C0[0, 0]))
    if spread <= 0:
        raise ParameterError("both the steady and initial covariance vanish; no usable length scale")
    states = np.asarray(ref_states, dtype=float)
    m0 = float(model.m0[0])
    return (
        min(m0, float(states.min())) - n_sigma * spread,
        max(m0, float(states.max())) + n_sigma * spread,
    )


def _check_cfl(grid: DensityGrid, model: LinearGaussianModel, dt: float) -> None:
    dx = grid.dx
    v_max = abs(model.g) * max(abs(grid.x_min), abs(grid.x_max))
    denom = model.sig + v_max * dx
    if denom > 0 and dt > 0.4 * dx * dx / denom:
        raise StabilityError(
            f"dt={dt:.3e} exceeds the stability limit {0.4 * dx * dx / denom:.3e} "
            f"(dx={dx:.3e}, Sigma={model.sig}, |v|max={v_max:.3g})"
        )


def _transport(grid: DensityGrid, model: LinearGaussianModel) -> np.ndarray:
    """Drift-diffusion operator with zero ghost nodes outside the domain."""
    dx = grid.dx
    padded = np.concatenate(([0.0], grid.values, [0.0]))
    x_half = grid.x_min + dx * (np.arange(grid.nx + 1) - 0.5)
    v_half = model.g * x_half
    # Upwind interface flux: take the donor-cell value by the sign of v.
    flux = v_half * np.where(v_half > 0.0, padded[:-1], padded[1:])
    advection = -(flux[1:] - flux[:-1]) / dx
    diffusion = 0.5 * model.sig * (padded[2:] - 2.0 * padded[1:-1] + padded[:-2]) / (dx * dx)
    return advection + diffusion


def _finalize(grid: DensityGrid, raw: np.ndarray, dt: float, scheme: str) -> DensityGrid:
    floor = -_NEGATIVITY_FLOOR * max(1.0, float(np.max(raw, initial=0.0)))
    worst = float(np.min(raw))
    if worst < floor:
        raise StabilityError(
            f"nodal value {worst:.3e} below the overshoot floor {floor:.3e}; reduce dt"
        )
    clipped_now = float(np.trapezoid(np.clip(-raw, 0.0, None), dx=grid.dx))
    return replace(
        grid,
        values=np.clip(raw, 0.0, None),
        time=grid.time + dt,
        scheme=scheme,
        clipped=grid.clipped + clipped_now,
    )


def _obs_rate(rate, model: LinearGaussianModel) -> float:
    rate = np.asarray(rate, dtype=float).reshape(-1)
    if rate.shape != (model.dim_obs,):
        raise ParameterError(f"rate must have {model.dim_obs} entries, got shape {rate.shape}")
    return float(rate[0])


def ck_step(
    grid: DensityGrid,
    model: LinearGaussianModel,
    rs: RsPair,
    rate,
    dt: float,
) -> DensityGrid:
    """Explicit Euler step of the selection-mutation density.

    The fitness term is quadratic-selective: -(r/2)(Hx)^2/Xi plus
    observation coupling (r-s)(Hx) rate / Xi, both multiplying the density.
    """
    model.require_scalar("ck_step")
    _check_cfl(grid, model, dt)
    xi_rate = _obs_rate(rate, model)
    hx = model.h * grid.x
    react = -(rs.r / 2.0) * hx * hx / model.xi + rs.diff * hx * xi_rate / model.xi
    raw = grid.values + dt * (_transport(grid, model) + react * grid.values)
    return _finalize(grid, raw, dt, "ck")


def _damped_drift(grid: DensityGrid, model: LinearGaussianModel) -> np.ndarray:
    hx = model.h * grid.x
    return _transport(grid, model) - 0.5 * hx * hx / model.xi * grid.values


def zakai_ito_step(grid: DensityGrid, model: LinearGaussianModel, dz, dt: float) -> DensityGrid:
    """Euler-Maruyama step of the damped observation-noise density, Ito reading."""
    model.require_scalar("zakai_ito_step")
    _check_cfl(grid, model, dt)
    dz = _obs_rate(dz, model)
    noise = grid.values * model.h * grid.x / model.xi
    raw = grid.values + dt * _damped_drift(grid, model) + noise * dz
    return _finalize(grid, raw, dt, "zakai_ito")


def zakai_strat_step(grid: DensityGrid, model: LinearGaussianModel, dz, dt: float) -> DensityGrid:
    """Heun step of the same equation, Stratonovich reading.

    Euler-Maruyama predictor, then a corrector that averages the noise
    coefficient at the current and predictor states; the drift is not
    re-averaged.
    """
    model.require_scalar("zakai_strat_step")
    _check_cfl(grid, model, dt)
    dz = _obs_rate(dz, model)
    coeff = model.h * grid.x / model.xi
    drift = dt * _damped_drift(grid, model)
    predictor = grid.values + drift + grid.values * coeff * dz
    raw = grid.values + drift + 0.5 * (grid.values + predictor) * coeff * dz
    return _finalize(grid, raw, dt, "zakai_strat")


def normalize(grid: DensityGrid) -> tuple[DensityGrid, float]:
    """Rescale to unit trapezoidal mass; returns the mass factored out."""
    mass = grid.mass()
    if not mass > 0.0 or not math.isfinite(mass):
        raise DegenerateDensityError(f"cannot normalize density with mass {mass}")
    return replace(grid, values=grid.values / mass, log_mass=grid.log_mass + math.log(mass)), mass


def density_moments(grid: DensityGrid) -> tuple[float, float]:
    """Trapezoidal mean and variance of the normalized density."""
    mass = grid.mass()
    if not mass > 0.0 or not math.isfinite(mass):
        raise DegenerateDensityError(f"cannot take moments of density with mass {mass}")
    x = grid.x
    mean = float(np.trapezoid(x * grid.values, dx=grid.dx)) / mass
    second = float(np.trapezoid(x * x * grid.values, dx=grid.dx)) / mass
    return mean, second - mean * mean


def _snapshot_steps(tgrid: TimeGrid, snapshot_times) -> dict[int, float]:
    if snapshot_times is None:
        return {}
    out = {}
    for t in snapshot_times:
        idx = int(round(float(t) / tgrid.dt))
        if not 0 <= idx <= tgrid.n_steps:
            raise ParameterError(f"snapshot time {t} outside [0, {tgrid.t_end}]")
        out[idx] = float(t)
    return out


def run_ck(
    model: LinearGaussianModel,
    rs: RsPair,
    grid: DensityGrid,
    obs: PiecewiseObservation,
    tgrid: TimeGrid,
    renorm_every: int = 50,
    snapshot_times=None,
) -> tuple[DensityGrid, list[DensityGrid]]:
    """March the selection-mutation density across the grid's horizon.

    Renormalizes every ``renorm_every`` steps into ``log_mass`` so the
    unnormalized growth factor never hits the floating-point range.
    Returns the final grid and any requested snapshots (normalized).
    """
    wanted = _snapshot_steps(tgrid, snapshot_times)
    rates = obs.rates_per_step(tgrid)
    snaps: list[DensityGrid] = []
    if 0 in wanted:
        snaps.append(normalize(grid)[0])
    for j in range(tgrid.n_steps):
        grid = ck_step(grid, model, rs, rates[j], tgrid.dt)
        if (j + 1) % renorm_every == 0:
            grid, _ = normalize(grid)
        if (j + 1) in wanted:
            snaps.append(normalize(grid)[0])
    return grid, snaps


def run_zakai(
    model: LinearGaussianModel,
    grid: DensityGrid,
    increments: np.ndarray,
    tgrid: TimeGrid,
    scheme: str = "zakai_strat",
    renorm_every: int = 50,
    snapshot_times=None,
) -> tuple[DensityGrid, list[DensityGrid]]:
    """March a damped observation-noise density against observation increments."""
    if scheme == "zakai_strat":
        step = zakai_strat_step
    elif scheme == "zakai_ito":
        step = zakai_ito_step
    else:
        raise ParameterError(f"scheme must be 'zakai_strat' or 'zakai_ito', got {scheme!r}")
    increments = np.asarray(increments, dtype=float)
    if increments.shape != (tgrid.n_steps, model.dim_obs):
        raise ParameterError(
            f"increments must have shape ({tgrid.n_steps}, {model.dim_obs}), got {increments.shape}"
        )
    wanted = _snapshot_steps(tgrid, snapshot_times)
    snaps: list[DensityGrid] = []
    if 0 in wanted:
        snaps.append(normalize(grid)[0])
    for j in range(tgrid.n_steps):
        grid = step(grid, model, increments[j], tgrid.dt)
        if (j + 1) % renorm_every == 0:
            grid, _ = normalize(grid)
        if (j + 1) in wanted:
            snaps.append(normalize(grid)[0])
    return grid, snaps


def snapshot_to_csv(grid: DensityGrid, path: str | Path) -> Path:
    return write_csv(path, ["x", "density"], zip(map(float, grid.x), map(float, grid.values)))
