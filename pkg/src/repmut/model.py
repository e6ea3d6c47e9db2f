"""Domain types for the linear-Gaussian signal/observation system.

The model couples a hidden linear diffusion with a linear observation
process::

    dX_t = G X_t dt + b dt + Sigma^{1/2} dW_t      (hidden state, bias b)
    dZ_t = H X_t dt + Xi^{1/2} dB_t                (observation)

A filter built from this model *without* knowledge of b is the misspecified
setting the asymptotic analysis in :mod:`repmut.asymptotics` studies.  The
replication parameters (r, s) weight the individual data-misfit term (r) and
the population-coupling term (s) of the fitness landscape; (1, 0) recovers
exact linear-Gaussian filtering.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterator, Mapping

import numpy as np

__all__ = [
    "DimensionError",
    "ParameterError",
    "StabilityError",
    "ConvergenceError",
    "RegimeError",
    "DegenerateDensityError",
    "LinearGaussianModel",
    "RsPair",
    "TimeGrid",
    "ValidationReport",
    "sym_sqrt",
    "validate_model",
    "admissible_s_range",
    "preset",
    "PRESET_NAMES",
    "model_from_dict",
    "model_to_dict",
    "load_model",
]


class DimensionError(ValueError):
    """Matrix/vector shapes do not describe a consistent system."""


class ParameterError(ValueError):
    """A numeric parameter is outside its admissible range."""


class StabilityError(RuntimeError):
    """A numerical scheme or steady-state assumption lost stability."""


class ConvergenceError(RuntimeError):
    """An iterative solve failed to reach its tolerance."""


class RegimeError(RuntimeError):
    """A closed-form result was requested outside its regime of validity."""


class DegenerateDensityError(RuntimeError):
    """A density lost all usable mass."""


def _as_matrix(value, rows: int, cols: int, name: str) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(value, dtype=float))
    if arr.shape != (rows, cols):
        raise DimensionError(f"{name} must have shape ({rows}, {cols}), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} contains non-finite entries")
    return arr


def _as_vector(value, size: int, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(value, dtype=float)).reshape(-1)
    if arr.shape != (size,):
        raise DimensionError(f"{name} must have shape ({size},), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} contains non-finite entries")
    return arr


def _check_symmetric(M: np.ndarray, name: str, tol: float = 1e-10) -> None:
    scale = max(1.0, float(np.max(np.abs(M))))
    if np.max(np.abs(M - M.T)) > tol * scale:
        raise ParameterError(f"{name} must be symmetric")


def sym_sqrt(M: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Symmetric square root via eigendecomposition.

    Requires ``M`` symmetric positive semidefinite; eigenvalues in
    [-tol, 0) are clipped to zero, anything lower raises.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    _check_symmetric(M, name)
    w, V = np.linalg.eigh(M)
    tol = 1e-12 * max(1.0, float(np.max(np.abs(w))))
    if np.any(w < -tol):
        raise ParameterError(f"{name} is not positive semidefinite (min eig {w.min():.3e})")
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)) @ V.T


@dataclass(frozen=True)
class LinearGaussianModel:
    """Immutable parameter set of the linear-Gaussian system.

    Fields
    ------
    G : (m, m) signal drift matrix
    H : (n, m) observation matrix
    Sigma : (m, m) signal noise covariance, symmetric PSD
    Xi : (n, n) observation noise covariance, symmetric positive definite
    b : (m,) constant drift bias of the *true* signal (the filter ignores it)
    m0 : (m,) initial mean
    C0 : (m, m) initial covariance, symmetric PSD
    """

    G: np.ndarray
    H: np.ndarray
    Sigma: np.ndarray
    Xi: np.ndarray
    b: np.ndarray
    m0: np.ndarray
    C0: np.ndarray

    def __post_init__(self) -> None:
        G = np.atleast_2d(np.asarray(self.G, dtype=float))
        m = G.shape[0]
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        n = H.shape[0]
        object.__setattr__(self, "G", _as_matrix(G, m, m, "G"))
        object.__setattr__(self, "H", _as_matrix(H, n, m, "H"))
        object.__setattr__(self, "Sigma", _as_matrix(self.Sigma, m, m, "Sigma"))
        object.__setattr__(self, "Xi", _as_matrix(self.Xi, n, n, "Xi"))
        object.__setattr__(self, "b", _as_vector(self.b, m, "b"))
        object.__setattr__(self, "m0", _as_vector(self.m0, m, "m0"))
        object.__setattr__(self, "C0", _as_matrix(self.C0, m, m, "C0"))
        _check_symmetric(self.Sigma, "Sigma")
        _check_symmetric(self.Xi, "Xi")
        _check_symmetric(self.C0, "C0")
        # Xi must be invertible everywhere the innovation is weighted; Sigma
        # and C0 only need PSD here (full Assumption checks live in
        # validate_model so degenerate toy configurations stay constructible).
        if np.min(np.linalg.eigvalsh(self.Xi)) <= 0:
            raise ParameterError("Xi must be positive definite")
        if np.min(np.linalg.eigvalsh(self.Sigma)) < -1e-12:
            raise ParameterError("Sigma must be positive semidefinite")
        if np.min(np.linalg.eigvalsh(self.C0)) < -1e-12:
            raise ParameterError("C0 must be positive semidefinite")

    @classmethod
    def from_scalars(
        cls,
        G: float,
        H: float,
        Sigma: float,
        Xi: float,
        b: float = 0.0,
        m0: float = 0.0,
        C0: float = 1.0,
    ) -> "LinearGaussianModel":
        return cls(
            G=[[G]], H=[[H]], Sigma=[[Sigma]], Xi=[[Xi]], b=[b], m0=[m0], C0=[[C0]]
        )

    @property
    def dim_state(self) -> int:
        return self.G.shape[0]

    @property
    def dim_obs(self) -> int:
        return self.H.shape[0]

    @property
    def is_scalar(self) -> bool:
        return self.dim_state == 1 and self.dim_obs == 1

    def require_scalar(self, what: str = "this operation") -> None:
        if not self.is_scalar:
            raise DimensionError(f"{what} requires a scalar model (m = n = 1)")

    # Scalar accessors for the closed-form machinery.
    @property
    def g(self) -> float:
        self.require_scalar("scalar accessor")
        return float(self.G[0, 0])

    @property
    def h(self) -> float:
        self.require_scalar("scalar accessor")
        return float(self.H[0, 0])

    @property
    def sig(self) -> float:
        self.require_scalar("scalar accessor")
        return float(self.Sigma[0, 0])

    @property
    def xi(self) -> float:
        self.require_scalar("scalar accessor")
        return float(self.Xi[0, 0])

    @property
    def bias(self) -> float:
        self.require_scalar("scalar accessor")
        return float(self.b[0])

    @property
    def snr(self) -> float:
        """H² Ξ⁻¹ Σ, the observability-to-noise scale every scalar closed form uses."""
        self.require_scalar("scalar accessor")
        return self.h**2 / self.xi * self.sig

    def sqrt_sigma(self) -> np.ndarray:
        return sym_sqrt(self.Sigma, "Sigma")

    def sqrt_xi(self) -> np.ndarray:
        return sym_sqrt(self.Xi, "Xi")

    def xi_inv(self) -> np.ndarray:
        return np.linalg.inv(self.Xi)

    def with_updates(self, **updates) -> "LinearGaussianModel":
        """Copy with some fields replaced (e.g. ``with_updates(b=0.0)``)."""
        current = {f.name: getattr(self, f.name) for f in fields(self)}
        for key, value in updates.items():
            if key not in current:
                raise ParameterError(f"unknown model field {key!r}")
            if key in ("b", "m0") and np.ndim(value) == 0:
                value = np.full(self.dim_state, float(value))
            if key in ("G", "Sigma", "C0") and np.ndim(value) == 0:
                value = np.eye(self.dim_state) * float(value)
            current[key] = value
        return LinearGaussianModel(**current)


@dataclass(frozen=True)
class RsPair:
    """Replication parameters: r weights the misfit, s the coupling term."""

    r: float
    s: float

    def __post_init__(self) -> None:
        r = float(self.r)
        s = float(self.s)
        if not np.isfinite(r) or not np.isfinite(s):
            raise ParameterError("r and s must be finite")
        if r <= 0:
            raise ParameterError(f"r must be > 0, got {r}")
        if s >= r:
            raise ParameterError(f"s must be < r, got s={s}, r={r}")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "s", s)

    @property
    def diff(self) -> float:
        """r − s, the effective innovation weight (always > 0)."""
        return self.r - self.s


KALMAN = RsPair(1.0, 0.0)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform simulation grid with observation knots every ``delta_d``.

    ``delta_d`` must be an integer multiple of ``dt``, and ``t_end`` an
    integer multiple of ``delta_d``, so observation knots always land on
    simulation steps.
    """

    dt: float
    t_end: float
    delta_d: float

    def __post_init__(self) -> None:
        for name in ("dt", "t_end", "delta_d"):
            v = float(getattr(self, name))
            if not np.isfinite(v) or v <= 0:
                raise ParameterError(f"{name} must be positive, got {v}")
            object.__setattr__(self, name, v)
        if _ratio_as_int(self.delta_d, self.dt) is None:
            raise ParameterError(
                f"delta_d ({self.delta_d}) must be an integer multiple of dt ({self.dt})"
            )
        if _ratio_as_int(self.t_end, self.delta_d) is None:
            raise ParameterError(
                f"t_end ({self.t_end}) must be an integer multiple of delta_d ({self.delta_d})"
            )

    @property
    def steps_per_knot(self) -> int:
        return _ratio_as_int(self.delta_d, self.dt)  # type: ignore[return-value]

    @property
    def n_knots(self) -> int:
        return _ratio_as_int(self.t_end, self.delta_d)  # type: ignore[return-value]

    @property
    def n_steps(self) -> int:
        return self.steps_per_knot * self.n_knots

    def times(self) -> np.ndarray:
        """All n_steps + 1 grid times including both endpoints."""
        return np.linspace(0.0, self.t_end, self.n_steps + 1)

    def knot_times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_end, self.n_knots + 1)

    def knot_of_step(self, step: int) -> int:
        return step // self.steps_per_knot


def _ratio_as_int(num: float, den: float, rel_tol: float = 1e-9) -> int | None:
    ratio = num / den
    nearest = round(ratio)
    if nearest < 1 or abs(ratio - nearest) > rel_tol * max(1.0, ratio):
        return None
    return int(nearest)


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of the standing-assumption checks for a model."""

    sigma_spd: bool
    xi_spd: bool
    c0_psd: bool
    controllability_rank: int
    observability_rank: int
    dim_state: int

    @property
    def controllable(self) -> bool:
        return self.controllability_rank == self.dim_state

    @property
    def observable(self) -> bool:
        return self.observability_rank == self.dim_state

    @property
    def passed(self) -> bool:
        return (
            self.sigma_spd
            and self.xi_spd
            and self.c0_psd
            and self.controllable
            and self.observable
        )


def _rank(M: np.ndarray) -> int:
    # Singular values below 1e-10 x the largest are treated as zero.
    sv = np.linalg.svd(M, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.sum(sv > 1e-10 * sv[0]))


def validate_model(model: LinearGaussianModel) -> ValidationReport:
    """Check positive-definiteness plus controllability/observability.

    Pure function: the report depends only on the model's matrices.  A model
    can exist without passing (degenerate toy setups); the steady-state and
    asymptotic machinery requires ``passed``.
    """
    m = model.dim_state
    sigma_spd = bool(np.min(np.linalg.eigvalsh(model.Sigma)) > 0)
    xi_spd = bool(np.min(np.linalg.eigvalsh(model.Xi)) > 0)
    c0_psd = bool(np.min(np.linalg.eigvalsh(model.C0)) >= -1e-12)

    sqrt_sigma = sym_sqrt(model.Sigma, "Sigma")
    powers = [np.eye(m)]
    for _ in range(m - 1):
        powers.append(model.G @ powers[-1])
    ctrl = np.hstack([P @ sqrt_sigma for P in powers])
    obs = np.vstack([model.H @ P for P in powers])
    return ValidationReport(
        sigma_spd=sigma_spd,
        xi_spd=xi_spd,
        c0_psd=c0_psd,
        controllability_rank=_rank(ctrl),
        observability_rank=_rank(obs),
        dim_state=m,
    )


def admissible_s_range(model: LinearGaussianModel, r: float) -> tuple[float, float]:
    """Open interval of s values with stable steady-state error dynamics.

    Scalar models only.  Returns ``(-inf, upper)`` with
    ``upper = min(r, r·y/(G+y))`` where ``y = sqrt(G² + r·H²Ξ⁻¹Σ)``; any
    ``s < upper`` yields a strictly negative steady-state decay constant.
    """
    model.require_scalar("admissible_s_range")
    if r <= 0:
        raise ParameterError(f"r must be > 0, got {r}")
    y = np.sqrt(model.g**2 + r * model.snr)
    upper = min(r, r * y / (model.g + y))
    return (-np.inf, float(upper))


_SYSTEM1 = dict(G=0.5, H=8.5, Sigma=0.8, Xi=6.3, b=9.9, m0=0.0)
_SYSTEM2 = dict(G=2.5, H=2.9, Sigma=18.0, Xi=26.0, b=1.2, m0=0.0)
_FIGURE1 = dict(G=0.0, H=2.0, Sigma=0.0, Xi=1.0, b=0.0, m0=0.0, C0=0.3)

PRESET_NAMES = ("system1", "system2", "figure1")


def preset(name: str) -> LinearGaussianModel:
    """Named scalar presets.

    ``system1``/``system2`` are the benchmark misspecified systems (C0 set to
    the r=1 steady-state covariance; experiment drivers re-pin C0 = C∞(r) per
    run).  ``figure1`` is the degenerate toy (no signal dynamics) used for
    the density-solver comparison.
    """
    if name == "figure1":
        return LinearGaussianModel.from_scalars(**_FIGURE1)
    if name in ("system1", "system2"):
        params = dict(_SYSTEM1 if name == "system1" else _SYSTEM2)
        base = LinearGaussianModel.from_scalars(**params, C0=1.0)
        from .moments import steady_state_cov_scalar

        return base.with_updates(C0=steady_state_cov_scalar(base, 1.0))
    raise ParameterError(f"unknown preset {name!r}; available: {', '.join(PRESET_NAMES)}")


_MODEL_KEYS = ("G", "H", "Sigma", "Xi", "b", "m0", "C0")


def model_from_dict(data: Mapping) -> LinearGaussianModel:
    """Build a model from a config mapping.

    Accepts either a full field set (scalars or nested lists) or
    ``{"preset": name, <field overrides>}``.
    """
    data = dict(data)
    base = None
    if "preset" in data:
        base = preset(str(data.pop("preset")))
    unknown = set(data) - set(_MODEL_KEYS)
    if unknown:
        raise ParameterError(f"unknown model keys: {sorted(unknown)}")
    if base is not None:
        return base.with_updates(**data) if data else base
    missing = [k for k in ("G", "H", "Sigma", "Xi") if k not in data]
    if missing:
        raise ParameterError(f"model config missing keys: {missing}")
    scalars = all(np.ndim(data[k]) == 0 for k in data)
    if scalars:
        return LinearGaussianModel.from_scalars(
            G=data["G"],
            H=data["H"],
            Sigma=data["Sigma"],
            Xi=data["Xi"],
            b=data.get("b", 0.0),
            m0=data.get("m0", 0.0),
            C0=data.get("C0", 1.0),
        )
    G = np.atleast_2d(np.asarray(data["G"], dtype=float))
    m = G.shape[0]
    return LinearGaussianModel(
        G=data["G"],
        H=data["H"],
        Sigma=data["Sigma"],
        Xi=data["Xi"],
        b=data.get("b", np.zeros(m)),
        m0=data.get("m0", np.zeros(m)),
        C0=data.get("C0", np.eye(m)),
    )


def model_to_dict(model: LinearGaussianModel) -> dict:
    """Plain-list representation, serializable to JSON or TOML."""
    return {key: getattr(model, key).tolist() for key in _MODEL_KEYS}


def load_model(path: str | Path) -> LinearGaussianModel:
    """Load a model from a TOML (or JSON) config file.

    The file may hold the model fields at the top level or under a
    ``[model]`` table.
    """
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json":
        data = json.loads(text)
    else:
        try:
            import tomllib  # type: ignore[import-not-found]
        except ModuleNotFoundError:
            import tomli as tomllib
        data = tomllib.loads(text)
    if "model" in data and isinstance(data["model"], Mapping):
        data = data["model"]
    return model_from_dict(data)
