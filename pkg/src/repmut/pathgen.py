"""Brownian paths, piecewise-linear interpolants, and observation drives.

Two observation constructions share one Brownian draw:

* the *piecewise-smooth* drive: a constant rate per knot interval,
  ``xi_i = H x*_{t_i} + Xi^{1/2} (B_{t_{i+1}} - B_{t_i}) / delta_d``,
  built from the linear interpolant of the Brownian path over knots; and
* the *increment* drive on the fine grid, ``dZ_j = H x*_j dt + Xi^{1/2} dB_j``.

Coupling them through the same draw is what makes refinement studies
(delta_d -> 0) compare like with like.  Left endpoints are used for the
state in both constructions.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._io import write_csv
from .model import DimensionError, LinearGaussianModel, TimeGrid, sym_sqrt

__all__ = [
    "rng_stream",
    "brownian_increments",
    "knot_increments",
    "BrownianInterpolant",
    "piecewise_linear_path",
    "PiecewiseObservation",
    "ReferenceTrajectory",
    "reference_trajectory",
    "synth_observation",
    "ito_observation_increments",
    "path_to_csv",
]


def rng_stream(seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator for the stream named by ``(seed, *key)``.

    Streams with distinct keys are statistically independent, so Monte Carlo
    sweeps can parallelize over realization indices without draw overlap.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def _as_rng(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return rng_stream(int(seed_or_rng))


def brownian_increments(
    grid: TimeGrid,
    dim: int,
    seed_or_rng,
    scale: float = 1.0,
) -> np.ndarray:
    """I.i.d. N(0, dt) increments, shape ``(n_steps, dim)``.

    ``scale=0`` turns the noise off (all increments exactly zero), which the
    deterministic test fixtures rely on.
    """
    rng = _as_rng(seed_or_rng)
    if scale == 0.0:
        return np.zeros((grid.n_steps, dim))
    return rng.standard_normal((grid.n_steps, dim)) * (scale * np.sqrt(grid.dt))


def knot_increments(increments: np.ndarray, grid: TimeGrid) -> np.ndarray:
    """Per-knot sums of fine increments, shape ``(n_knots, dim)``.

    This is the single canonical reduction: every consumer of knot-level
    increments goes through it, so identities that must hold bit-for-bit
    (rate reconstruction, interpolant knot values) reduce the same floats in
    the same order.
    """
    increments = np.asarray(increments, dtype=float)
    if increments.ndim != 2 or increments.shape[0] != grid.n_steps:
        raise DimensionError(
            f"increments must have shape ({grid.n_steps}, dim), got {increments.shape}"
        )
    per_knot = increments.reshape(grid.n_knots, grid.steps_per_knot, -1)
    return per_knot.sum(axis=1)


@dataclass(frozen=True)
class BrownianInterpolant:
    """Piecewise-linear interpolation of a Brownian path over knots."""

    knot_times: np.ndarray  # (n_knots + 1,)
    knot_values: np.ndarray  # (n_knots + 1, dim), equals the path at knots
    slopes: np.ndarray  # (n_knots,  dim), constant derivative per interval

    @property
    def delta_d(self) -> float:
        return float(self.knot_times[1] - self.knot_times[0])

    def value(self, t: float) -> np.ndarray:
        t = float(t)
        i = min(int(np.searchsorted(self.knot_times, t, side="right")) - 1, len(self.slopes) - 1)
        i = max(i, 0)
        return self.knot_values[i] + (t - self.knot_times[i]) * self.slopes[i]

    def derivative(self, t: float) -> np.ndarray:
        i = min(int(np.searchsorted(self.knot_times, t, side="right")) - 1, len(self.slopes) - 1)
        return self.slopes[max(i, 0)]


def piecewise_linear_path(increments: np.ndarray, grid: TimeGrid) -> BrownianInterpolant:
    """Linear interpolant of the summed path over observation knots.

    The interpolant matches the underlying path at every knot by
    construction, and its per-interval derivative is
    ``(B_{t_{i+1}} - B_{t_i}) / delta_d``.
    """
    per_knot = knot_increments(increments, grid)
    dim = per_knot.shape[1]
    values = np.vstack([np.zeros((1, dim)), np.cumsum(per_knot, axis=0)])
    return BrownianInterpolant(
        knot_times=grid.knot_times(),
        knot_values=values,
        slopes=per_knot / grid.delta_d,
    )


@dataclass(frozen=True)
class PiecewiseObservation:
    """Constant observation rate per knot interval."""

    knot_times: np.ndarray  # (n_knots + 1,)
    rates: np.ndarray  # (n_knots, n), value of dZ/dt on [t_i, t_{i+1})
    seed: int | None = None

    @property
    def delta_d(self) -> float:
        return float(self.knot_times[1] - self.knot_times[0])

    @property
    def n_knots(self) -> int:
        return self.rates.shape[0]

    def rate_at(self, t: float) -> np.ndarray:
        i = min(int(np.searchsorted(self.knot_times, t, side="right")) - 1, self.n_knots - 1)
        return self.rates[max(i, 0)]

    def rates_per_step(self, grid: TimeGrid) -> np.ndarray:
        """Expand to one rate row per fine simulation step, shape (n_steps, n)."""
        if self.rates.shape[0] != grid.n_knots:
            raise DimensionError("observation knots do not match grid")
        return np.repeat(self.rates, grid.steps_per_knot, axis=0)


@dataclass(frozen=True)
class ReferenceTrajectory:
    """Simulated true-state path (the trajectory the filter tracks)."""

    times: np.ndarray  # (n_steps + 1,)
    states: np.ndarray  # (n_steps + 1, m)
    bias_used: np.ndarray  # (m,)

    def at_knots(self, grid: TimeGrid) -> np.ndarray:
        """Left-endpoint states at knot starts, shape (n_knots, m)."""
        return self.states[: -1 : grid.steps_per_knot]


def reference_trajectory(
    model: LinearGaussianModel,
    grid: TimeGrid,
    seed_or_rng,
    x0: np.ndarray | float | None = None,
    increments: np.ndarray | None = None,
) -> ReferenceTrajectory:
    """Forward-Euler path of the true signal, bias included.

    ``x0`` overrides the random N(m0, C0) initial draw (used by twin
    experiments that freeze the initial truth).  ``increments`` supplies the
    signal Brownian increments explicitly; otherwise they are drawn from the
    given stream.
    """
    rng = _as_rng(seed_or_rng)
    m = model.dim_state
    if increments is None:
        increments = brownian_increments(grid, m, rng)
    if x0 is None:
        start = model.m0 + sym_sqrt(model.C0, "C0") @ rng.standard_normal(m)
    else:
        start = np.atleast_1d(np.asarray(x0, dtype=float)).reshape(m)
    sqrt_sigma = model.sqrt_sigma()
    states = np.empty((grid.n_steps + 1, m))
    states[0] = start
    x = start.copy()
    dt = grid.dt
    for j in range(grid.n_steps):
        x = x + (model.G @ x + model.b) * dt + sqrt_sigma @ increments[j]
        states[j + 1] = x
    return ReferenceTrajectory(times=grid.times(), states=states, bias_used=model.b.copy())


def synth_observation(
    model: LinearGaussianModel,
    ref: ReferenceTrajectory,
    increments: np.ndarray,
    grid: TimeGrid,
    seed: int | None = None,
) -> PiecewiseObservation:
    """Piecewise-smooth observation rates from a shared Brownian draw.

    Rate on knot i is ``H x*_{t_i} + Xi^{1/2} (B_{t_{i+1}} - B_{t_i}) / delta_d``
    with the state evaluated at the *left* knot endpoint.
    """
    per_knot = knot_increments(increments, grid)
    states_at_knots = ref.at_knots(grid)
    signal = states_at_knots @ model.H.T
    noise = (per_knot / grid.delta_d) @ model.sqrt_xi().T
    return PiecewiseObservation(knot_times=grid.knot_times(), rates=signal + noise, seed=seed)


def ito_observation_increments(
    model: LinearGaussianModel,
    ref: ReferenceTrajectory,
    increments: np.ndarray,
    grid: TimeGrid,
) -> np.ndarray:
    """Fine-grid observation increments ``dZ_j = H x*_j dt + Xi^{1/2} dB_j``.

    Shares ``increments`` with :func:`synth_observation`; summing the
    returned rows over a knot reproduces ``delta_d`` times that knot's
    smooth rate up to the state term's endpoint convention.
    """
    increments = np.asarray(increments, dtype=float)
    if increments.shape != (grid.n_steps, model.dim_obs):
        raise DimensionError(
            f"increments must have shape ({grid.n_steps}, {model.dim_obs}), got {increments.shape}"
        )
    signal = ref.states[:-1] @ model.H.T * grid.dt
    return signal + increments @ model.sqrt_xi().T


def path_to_csv(path: str | Path, times: np.ndarray, values: np.ndarray, label: str = "value") -> Path:
    """Export a (times, values) series with columns t, <label>0, <label>1, ..."""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    if values.shape[0] != np.size(times):
        values = values.T
    names = [f"{label}{i}" for i in range(values.shape[1])] if values.shape[1] > 1 else [label]
    rows = ([float(t), *map(float, row)] for t, row in zip(np.asarray(times), values))
    return write_csv(path, ["t", *names], rows)
