"""Pure replicator flow on a discrete trait lattice.

With log-likelihood fitness the flow tempers a prior into the Bayesian
posterior along a pseudotime, and for symmetric interaction kernels it is
the Fisher-Rao gradient flow of the mean fitness, so the quadratic energy
-1/2 sum f(x,z)p(x)p(z) must decrease step over step.  Both facts are
checkable to tight tolerances on a lattice, which is why everything here
is discrete.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from ._io import write_csv
from .model import ParameterError, StabilityError

__all__ = [
    "TraitDistribution",
    "gaussian_weights",
    "quadratic_fitness",
    "replicator_step",
    "fisher_rao_energy",
    "TemperingResult",
    "tempering_run",
    "tempering_to_csv",
]

_MASS_TOL = 1e-12


@dataclass(frozen=True)
class TraitDistribution:
    """Probability weights over a finite 1-D trait lattice.

    ``fitness`` is local, shape (K,), or an interaction kernel, shape
    (K, K); kernels must be symmetric.
    """

    grid: np.ndarray
    probs: np.ndarray
    fitness: np.ndarray

    def __post_init__(self) -> None:
        grid = np.asarray(self.grid, dtype=float)
        probs = np.asarray(self.probs, dtype=float)
        fitness = np.asarray(self.fitness, dtype=float)
        if grid.ndim != 1 or grid.size < 2:
            raise ParameterError("trait grid must be 1-D with at least 2 nodes")
        if probs.shape != grid.shape:
            raise ParameterError(f"probs shape {probs.shape} does not match grid {grid.shape}")
        if np.any(probs < 0):
            raise ParameterError("weights must be nonnegative")
        if abs(probs.sum() - 1.0) > _MASS_TOL:
            raise ParameterError(f"weights must sum to 1, got {probs.sum()!r}")
        k = grid.size
        if fitness.shape not in ((k,), (k, k)):
            raise ParameterError(
                f"fitness must have shape ({k},) or ({k}, {k}), got {fitness.shape}"
            )
        if fitness.ndim == 2 and not np.array_equal(fitness, fitness.T):
            raise ParameterError("interaction kernel must be symmetric")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "fitness", fitness)

    @property
    def is_local(self) -> bool:
        return self.fitness.ndim == 1

    def effective_fitness(self) -> np.ndarray:
        """f(x) for local fitness, sum_z f(x,z) p(z) for a kernel."""
        return self.fitness if self.is_local else self.fitness @ self.probs


def gaussian_weights(grid: np.ndarray, mean: float, var: float) -> np.ndarray:
    if var <= 0:
        raise ParameterError(f"variance must be positive, got {var}")
    grid = np.asarray(grid, dtype=float)
    w = np.exp(-0.5 * (grid - mean) ** 2 / var)
    return w / w.sum()


def quadratic_fitness(grid: np.ndarray, h: float, y: float, xi: float) -> np.ndarray:
    """Log-likelihood of a linear-Gaussian observation, -(hx - y)^2 / (2 xi)."""
    if xi <= 0:
        raise ParameterError(f"observation variance must be positive, got {xi}")
    grid = np.asarray(grid, dtype=float)
    return -0.5 * (h * grid - y) ** 2 / xi


def replicator_step(dist: TraitDistribution, dt: float) -> TraitDistribution:
    """One Euler step p += dt p (F - <F>), renormalized exactly.

    The centering already preserves mass to O(dt^2); renormalization removes
    the Euler remainder so mass stays 1 over arbitrarily long runs.
    """
    f_eff = dist.effective_fitness()
    mean_fitness = dist.probs @ f_eff
    new = dist.probs * (1.0 + dt * (f_eff - mean_fitness))
    if np.any(new < 0):
        raise StabilityError(
            f"dt={dt} produced a negative weight; the update needs dt·max|F − <F>| < 1"
        )
    return replace(dist, probs=new / new.sum())


def fisher_rao_energy(dist: TraitDistribution) -> float:
    """Quadratic interaction energy -1/2 sum_{x,z} f(x,z) p(x) p(z).

    This is the Lyapunov functional of the replicator flow for symmetric
    kernels, so it must be non-increasing along accepted steps.
    """
    if dist.is_local:
        raise ParameterError("Fisher-Rao energy is defined for symmetric interaction kernels")
    return float(-0.5 * dist.probs @ dist.fitness @ dist.probs)


class TemperingResult(NamedTuple):
    times: np.ndarray  # (T,)
    probs: np.ndarray  # (T, K) flow snapshots
    exact: np.ndarray  # (T, K) normalized exp(t f) p0
    deviations: np.ndarray  # (T,) max-norm gaps
    max_deviation: float
    grid: np.ndarray


def tempering_run(
    prior: TraitDistribution,
    fitness: np.ndarray | None = None,
    t_end: float = 1.0,
    dt: float = 1e-4,
    store_every: int | None = None,
) -> TemperingResult:
    """Temper the prior by replicator flow and compare with exp(t f) p0.

    For local fitness the flow has the closed-form solution
    p_t ∝ p0 exp(t f), evaluated here in a max-shifted form; the returned
    deviations measure the Euler error (first order in dt).
    """
    dist = prior if fitness is None else replace(prior, fitness=np.asarray(fitness, dtype=float))
    if not dist.is_local:
        raise ParameterError("tempering against the exponential oracle needs local fitness")
    n_steps = int(round(t_end / dt)) if t_end > 0 else 0
    if store_every is None:
        store_every = max(1, n_steps // 200)
    p0 = dist.probs
    f = dist.fitness

    def exact_at(t: float) -> np.ndarray:
        w = p0 * np.exp(t * (f - f.max()))
        return w / w.sum()

    times = [0.0]
    snaps = [dist.probs]
    exacts = [exact_at(0.0)]
    for j in range(n_steps):
        dist = replicator_step(dist, dt)
        if (j + 1) % store_every == 0 or j + 1 == n_steps:
            t = (j + 1) * dt
            times.append(t)
            snaps.append(dist.probs)
            exacts.append(exact_at(t))
    probs = np.asarray(snaps)
    exact = np.asarray(exacts)
    deviations = np.abs(probs - exact).max(axis=1)
    return TemperingResult(
        times=np.asarray(times),
        probs=probs,
        exact=exact,
        deviations=deviations,
        max_deviation=float(deviations.max()),
        grid=dist.grid,
    )


def tempering_to_csv(result: TemperingResult, path: str | Path) -> Path:
    header = ["t"] + [f"p(x={x:.8g})" for x in result.grid]
    rows = ([t, *map(float, row)] for t, row in zip(result.times, result.probs))
    return write_csv(path, header, rows)
