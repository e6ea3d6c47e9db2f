"""Misspecified-filter asymptotics.

The filter believes the drift is G x while the truth carries an extra
constant push b.  The estimation error then has computable moments: an ODE
system for bias and error covariance, closed-form limits for squared bias
and MSE, and a family of (r, s) pairs minimizing the asymptotic MSE.  The
whole optimality story reduces to one number: the steady error-decay rate
a* solving the depressed cubic

    a^3 + p a + q = 0,   p = -(H^2 Xi^{-1} Sigma + G^2),  q = 4 b^2 H^2 Xi^{-1},

whose unique negative real root every MSE-minimizing (r, s) shares.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.linalg import solve_continuous_lyapunov
from scipy.optimize import bisect, brentq

from ._io import atomic_write_text, write_csv
from .model import (
    ConvergenceError,
    LinearGaussianModel,
    ParameterError,
    RegimeError,
    RsPair,
    StabilityError,
    admissible_s_range,
)
from .moments import (
    cov_rhs,
    kalman_gain,
    stability_matrix,
    steady_state_cov,
    steady_state_cov_scalar,
)

__all__ = [
    "cubic_coeffs",
    "CubicRoot",
    "cubic_a_star",
    "s_opt_given_r",
    "sl_su",
    "RoptResult",
    "r_opt_given_s",
    "BiasMse",
    "asymptotic_bias_mse",
    "ErrorMoments",
    "error_moment_flow",
    "lyapunov_solve",
    "MatchedPair",
    "matched_pair",
    "InflationBounds",
    "inflation_bounds",
    "AsymptoticsReport",
    "asymptotics_report",
    "report_to_json",
    "e_inf_surface",
    "surface_to_csv",
]


# ---------------------------------------------------------------------------
# The depressed cubic for the optimal error-decay rate


def cubic_coeffs(model: LinearGaussianModel) -> tuple[float, float]:
    """Coefficients (p, q) of a^3 + p a + q = 0 for the optimal decay rate."""
    model.require_scalar("cubic_coeffs")
    p = -(model.snr + model.g**2)
    q = 4.0 * model.bias**2 * model.h**2 / model.xi
    return p, q


class CubicRoot(NamedTuple):
    a_star: float
    tau: float
    branch: str  # "one-real-root" (tau > 0) or "three-real-roots"
    residual: float  # |a^3 + p a + q| / (|p a| + q), relative
    near_boundary: bool  # tau within rounding of 0; both branches agree there


def cubic_a_star(model: LinearGaussianModel) -> CubicRoot:
    """Unique negative real root of the decay-rate cubic.

    tau = q^2/4 + p^3/27 picks the branch: Cardano for tau > 0 (one real
    root), the trigonometric form for tau <= 0 (three real roots, of which
    exactly one is negative: the roots sum to zero and their product is
    -q <= 0).
    """
    p, q = cubic_coeffs(model)
    if p >= 0.0:
        raise ParameterError("decay cubic degenerates: need Sigma > 0 or G != 0")
    tau = q * q / 4.0 + p**3 / 27.0
    scale = max(q * q / 4.0, abs(p) ** 3 / 27.0)
    near_boundary = abs(tau) <= 1e-9 * scale
    if tau > 0.0:
        # Only the combination -q/2 + sqrt(tau) cancels (System-1-like
        # models have q^2/4 >> |p^3/27|); rewrite it as (p^3/27)/(q/2 +
        # sqrt(tau)) whose denominator is strictly positive.
        w = q / 2.0 + math.sqrt(tau)
        cbrt_w = np.cbrt(w)
        a = p / (3.0 * cbrt_w) - cbrt_w
        branch = "one-real-root"
    else:
        # k = 2 picks the smallest of the three real roots, the negative one.
        # At q = 0 it reduces to -sqrt(-p) with no special-casing.
        arg = np.clip((3.0 * q / (2.0 * p)) * math.sqrt(-3.0 / p), -1.0, 1.0)
        a = 2.0 * math.sqrt(-p / 3.0) * math.cos(math.acos(arg) / 3.0 - 4.0 * math.pi / 3.0)
        branch = "three-real-roots"
    residual = abs(a**3 + p * a + q) / (abs(p * a) + abs(q) + 1e-300)
    return CubicRoot(a_star=float(a), tau=float(tau), branch=branch, residual=float(residual), near_boundary=near_boundary)


def _a_star_bracketed(model: LinearGaussianModel) -> float:
    """Root of the decay cubic by bracketing, as a cross-check on the closed form.

    On (-inf, 0) the cubic rises from -inf to a local max at -sqrt(-p/3)
    where its value is >= q >= 0, so [-(1 + |p| + q), -sqrt(-p/3)] brackets.
    """
    p, q = cubic_coeffs(model)
    lo = -(1.0 + abs(p) + q)
    hi = -math.sqrt(-p / 3.0)
    return float(brentq(lambda t: t**3 + p * t + q, lo, hi, xtol=1e-14, rtol=8.9e-16))


def _y_of_r(model: LinearGaussianModel, r: float) -> float:
    return math.sqrt(model.g**2 + r * model.snr)


def s_opt_given_r(model: LinearGaussianModel, r: float) -> float:
    """s minimizing the asymptotic MSE at fixed r.

    s = r (a* + y) / (G + y) with y = sqrt(G^2 + r H^2 Xi^{-1} Sigma).
    Always strictly below both r and the mean-reversion threshold, since
    a* < -|G|.
    """
    if r <= 0:
        raise ParameterError(f"r must be > 0, got {r}")
    a = cubic_a_star(model).a_star
    y = _y_of_r(model, r)
    s = r * (a + y) / (model.g + y)
    _, upper = admissible_s_range(model, r)
    if not s < upper:
        raise RegimeError(f"s_opt={s} escaped the admissible range (upper {upper})")
    return float(s)


def sl_su(model: LinearGaussianModel) -> tuple[float, float]:
    """Thresholds (s_l, s_u) splitting the r-count regimes.

    Below s_l no r attains the optimum (the y-quadratic has no real root);
    between s_l and s_u two r values do; from s_u up exactly one survives
    the y > |G| cut.
    """
    a = cubic_a_star(model).a_star
    g = model.g
    s_l = -((g + a) ** 2) / (4.0 * model.snr)
    s_u = (abs(g) - g) * (a + abs(g)) / model.snr
    return float(s_l), float(s_u)


class RoptResult(NamedTuple):
    values: tuple[float, ...]  # descending
    regime: str  # "two-roots" | "unique" | "double-root"
    y_values: tuple[float, ...]


def r_opt_given_s(model: LinearGaussianModel, s: float) -> RoptResult:
    """All r > 0 minimizing asymptotic MSE at fixed s.

    Solves the quadratic y^2 + (a* - G) y - G a* - s H^2 Xi^{-1} Sigma = 0
    in y = sqrt(G^2 + r H^2 Xi^{-1} Sigma), keeps roots with y > |G|, and
    maps back through r = (y^2 - G^2) / (H^2 Xi^{-1} Sigma).
    """
    a = cubic_a_star(model).a_star
    g, snr = model.g, model.snr
    s_l, _ = sl_su(model)
    disc = (g - a) ** 2 + 4.0 * (g * a + s * snr)
    if disc < 0.0:
        raise RegimeError(f"s={s} lies below s_l={s_l}: the optimality quadratic has no real root")
    sqrt_disc = math.sqrt(disc)
    candidates = [((g - a) + sqrt_disc) / 2.0, ((g - a) - sqrt_disc) / 2.0]
    kept = [(float((y * y - g * g) / snr), float(y)) for y in candidates if y > abs(g)]
    kept = [(r, y) for r, y in kept if r > 0.0]
    if not kept:
        raise RegimeError(
            f"s={s}: both candidate rates fall at or below |G|={abs(g)}; no admissible optimal r"
        )
    kept.sort(reverse=True)
    if disc == 0.0:
        regime = "double-root"
    elif len(kept) == 2:
        regime = "two-roots"
    else:
        regime = "unique"
    return RoptResult(
        values=tuple(r for r, _ in kept),
        regime=regime,
        y_values=tuple(y for _, y in kept),
    )


# ---------------------------------------------------------------------------
# Asymptotic bias and MSE


def lyapunov_solve(A: np.ndarray) -> np.ndarray:
    """Symmetric X with A^T X + X A + I = 0, for stable A."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if np.max(np.linalg.eigvals(A).real) >= 0.0:
        raise StabilityError("Lyapunov solve requires all eigenvalues of A in the open left half-plane")
    eye = np.eye(A.shape[0])
    X = solve_continuous_lyapunov(A.T, -eye)
    X = 0.5 * (X + X.T)
    residual = float(np.linalg.norm(A.T @ X + X @ A + eye))
    if residual >= 1e-10:
        raise ConvergenceError(f"Lyapunov residual {residual:.3e} exceeds 1e-10")
    return X


class BiasMse(NamedTuple):
    nu_inf: float  # squared bias limit
    e_inf: float  # MSE limit
    bound: float  # Gronwall upper bound on e_inf
    a_inf: np.ndarray  # error-decay matrix at the steady gain
    alpha_sym: float


def asymptotic_bias_mse(model: LinearGaussianModel, rs: RsPair, method: str = "auto") -> BiasMse:
    """Limits of squared bias and MSE under constant drift misspecification.

    Scalar models use the explicit formulas; ``method="matrix"`` forces the
    Lyapunov-equation route (the two agree, which the tests exploit).
    """
    if method not in ("auto", "matrix"):
        raise ParameterError(f"method must be 'auto' or 'matrix', got {method!r}")
    C_inf = steady_state_cov(model, rs.r).cov
    info = stability_matrix(model, rs, C_inf)
    if info.alpha >= 0.0 or info.alpha_sym >= 0.0:
        raise StabilityError(
            f"error dynamics unstable at (r={rs.r}, s={rs.s}): alpha={info.alpha:.4g}, "
            f"alpha_sym={info.alpha_sym:.4g}"
        )
    hxh = model.H.T @ model.xi_inv() @ model.H
    gamma = (
        -2.0 * float(np.trace(np.linalg.solve(info.A, np.outer(model.b, model.b))))
        + float(np.trace(model.Sigma))
        + rs.diff**2 * float(np.max(np.linalg.eigvalsh(hxh))) * float(np.sum(C_inf * C_inf))
    )
    bound = -gamma / info.alpha_sym
    if model.is_scalar and method == "auto":
        a = float(info.A[0, 0])
        nu = (model.bias / a) ** 2
        e = -0.5 * (model.sig + ((model.g - a) / model.h) ** 2 * model.xi) / a + nu
        return BiasMse(float(nu), float(e), float(bound), info.A, info.alpha_sym)
    X = lyapunov_solve(info.A)
    err_inf = np.linalg.solve(info.A, model.b)
    nu = float(err_inf @ err_inf)
    M = (
        model.Sigma
        + rs.diff * (model.G - info.A) @ C_inf
        - 2.0 * np.linalg.solve(info.A, np.outer(model.b, model.b))
    )
    e = float(np.trace(M @ X))
    return BiasMse(nu, e, float(bound), info.A, info.alpha_sym)


@dataclass(frozen=True)
class ErrorMoments:
    """Trajectories of the error bias, covariance, and second moment.

    ``p_tilde = p + outer(mean_error, mean_error)`` exactly: their
    difference satisfies a homogeneous linear ODE started at zero, so the
    second moment is reconstructed from the identity rather than integrated
    redundantly.  ``bound_e`` integrates the MSE differential inequality
    with equality, giving the comparison curve.
    """

    times: np.ndarray  # (T,)
    mean_error: np.ndarray  # (T, m)
    p: np.ndarray  # (T, m, m) error covariance
    p_tilde: np.ndarray  # (T, m, m) second moment
    nu: np.ndarray  # (T,) squared bias
    e: np.ndarray  # (T,) MSE = trace(p_tilde)
    bound_e: np.ndarray  # (T,) Gronwall comparison curve
    unstable: bool
    alpha_sym_inf: float


def error_moment_flow(
    model: LinearGaussianModel,
    rs: RsPair,
    horizon: float,
    dt: float,
    freeze_cov: bool = False,
    mean_error0: np.ndarray | None = None,
    p0: np.ndarray | None = None,
    store_every: int | None = None,
) -> ErrorMoments:
    """Integrate the error-moment ODEs with RK4 over [0, horizon].

    The filter covariance rides along (frozen at C-infinity when
    ``freeze_cov``); an unstable (r, s) is flagged but still integrated.
    """
    if horizon <= 0 or dt <= 0:
        raise ParameterError("horizon and dt must be positive")
    m = model.dim_state
    C_inf = steady_state_cov(model, rs.r).cov
    info_inf = stability_matrix(model, rs, C_inf)
    unstable = info_inf.alpha_sym >= 0.0

    eps = np.zeros(m) if mean_error0 is None else np.asarray(mean_error0, dtype=float).reshape(m)
    P = np.atleast_2d(np.asarray(model.C0 if p0 is None else p0, dtype=float)).copy()
    C = C_inf.copy() if freeze_cov else model.C0.copy()
    bnd = float(np.trace(P) + eps @ eps)

    hxh_alpha = float(np.max(np.linalg.eigvalsh(model.H.T @ model.xi_inv() @ model.H)))
    tr_sigma = float(np.trace(model.Sigma))
    diff = rs.diff

    def rhs(eps, P, C, bnd):
        K = kalman_gain(model, C)
        A = model.G - diff * K @ model.H
        d_eps = A @ eps - model.b
        noise = model.Sigma + diff**2 * K @ model.Xi @ K.T
        d_P = A @ P + P @ A.T + noise
        d_C = np.zeros_like(C) if freeze_cov else cov_rhs(model, rs.r, C)
        alpha_sym = float(np.max(np.linalg.eigvalsh(A + A.T)))
        d_bnd = alpha_sym * bnd - 2.0 * float(eps @ model.b) + tr_sigma + diff**2 * hxh_alpha * float(np.sum(C * C))
        return d_eps, d_P, d_C, d_bnd

    n_steps = int(round(horizon / dt))
    if store_every is None:
        store_every = max(1, n_steps // 400)

    times = [0.0]
    eps_hist = [eps.copy()]
    p_hist = [P.copy()]
    bnd_hist = [bnd]
    for j in range(n_steps):
        k1 = rhs(eps, P, C, bnd)
        k2 = rhs(eps + 0.5 * dt * k1[0], P + 0.5 * dt * k1[1], C + 0.5 * dt * k1[2], bnd + 0.5 * dt * k1[3])
        k3 = rhs(eps + 0.5 * dt * k2[0], P + 0.5 * dt * k2[1], C + 0.5 * dt * k2[2], bnd + 0.5 * dt * k2[3])
        k4 = rhs(eps + dt * k3[0], P + dt * k3[1], C + dt * k3[2], bnd + dt * k3[3])
        eps = eps + (dt / 6.0) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        P = P + (dt / 6.0) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        C = C + (dt / 6.0) * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        bnd = bnd + (dt / 6.0) * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3])
        P = 0.5 * (P + P.T)
        C = 0.5 * (C + C.T)
        if (j + 1) % store_every == 0 or j + 1 == n_steps:
            times.append((j + 1) * dt)
            eps_hist.append(eps.copy())
            p_hist.append(P.copy())
            bnd_hist.append(bnd)

    eps_arr = np.asarray(eps_hist)
    p_arr = np.asarray(p_hist)
    p_tilde = p_arr + eps_arr[:, :, None] * eps_arr[:, None, :]
    nu = np.einsum("ti,ti->t", eps_arr, eps_arr)
    e = np.trace(p_tilde, axis1=1, axis2=2)
    return ErrorMoments(
        times=np.asarray(times),
        mean_error=eps_arr,
        p=p_arr,
        p_tilde=p_tilde,
        nu=nu,
        e=e,
        bound_e=np.asarray(bnd_hist),
        unstable=unstable,
        alpha_sym_inf=float(info_inf.alpha_sym),
    )


# ---------------------------------------------------------------------------
# Matched pair and inflation bounds


class MatchedPair(NamedTuple):
    r: float
    s: float
    r_minus_s: float
    e_inf: float  # = C_inf(r) at the pair
    resid_closed_form: float  # |(r - s) - closed-form r - s|
    resid_match: float  # |C_inf(r) - E_inf(r, s)|


def matched_pair(model: LinearGaussianModel) -> MatchedPair:
    """The (r, s) pair that both minimizes asymptotic MSE and makes C_inf equal it.

    Along the optimal curve s = s_opt(r) the MSE is one constant, so the
    pair is the root in r of C_inf(r) - E_inf*; bisection over [1e-3, 1e3]
    (C_inf is strictly decreasing in r).  The returned pair is checked
    against the closed form for r - s.
    """
    model.require_scalar("matched_pair")
    a = cubic_a_star(model).a_star
    g, snr = model.g, model.snr
    e_star = -0.5 * (model.sig + ((g - a) / model.h) ** 2 * model.xi) / a + (model.bias / a) ** 2

    def residual(r: float) -> float:
        return steady_state_cov_scalar(model, r) - e_star

    lo, hi = 1e-3, 1e3
    f_lo, f_hi = residual(lo), residual(hi)
    if not (f_lo > 0.0 > f_hi):
        raise ConvergenceError(
            f"matched-pair search not bracketed on [{lo}, {hi}]: residuals ({f_lo:.4g}, {f_hi:.4g})"
        )
    r = float(bisect(residual, lo, hi, xtol=1e-13, rtol=8.9e-16))
    s = s_opt_given_r(model, r)
    closed = a**2 * (g - a) / (-0.5 * a * (snr + (g - a) ** 2) + model.bias**2 * model.h**2 / model.xi)
    resid_closed = abs((r - s) - closed)
    resid_match = abs(steady_state_cov_scalar(model, r) - asymptotic_bias_mse(model, RsPair(r, s)).e_inf)
    if resid_closed > 1e-8 or resid_match > 1e-8:
        raise ConvergenceError(
            f"matched pair inconsistent: |closed-form gap|={resid_closed:.3e}, |C-E gap|={resid_match:.3e}"
        )
    return MatchedPair(r=r, s=float(s), r_minus_s=float(r - s), e_inf=float(e_star),
                       resid_closed_form=float(resid_closed), resid_match=float(resid_match))


class InflationBounds(NamedTuple):
    r0_opt: float
    lower_bound: float
    lower_ok: bool | None  # None: outside the regime where the bound is claimed
    c_ratio: float  # C_inf(r0_opt) / C_inf at (r, s) = (1, 0)
    ratio_bound: float
    ratio_ok: bool | None
    notes: tuple[str, ...]


def inflation_bounds(model: LinearGaussianModel) -> InflationBounds:
    """Multiplicative-inflation optimum r0 and its over-confidence bounds.

    r0_opt = ((a*)^2 - G^2) / (H^2 Xi^{-1} Sigma) minimizes MSE at s = 0
    regardless of b.  The lower bound on r0_opt and the covariance-ratio
    bound are only claimed in the one-real-root regime (tau > 0); the ratio
    bound additionally needs G > 0.  Out-of-regime checks are skipped with
    a note rather than failed.
    """
    model.require_scalar("inflation_bounds")
    root = cubic_a_star(model)
    g, snr = model.g, model.snr
    r0 = (root.a_star**2 - g**2) / snr
    lower = 2.0 * (g**2 + snr) / snr
    c_hat = steady_state_cov_scalar(model, 1.0)
    c_ratio = steady_state_cov_scalar(model, r0) / c_hat
    ratio_bound = (2.0 * abs(g) + math.sqrt(snr)) / (math.sqrt(r0) * (g + math.sqrt(g**2 + snr)))

    notes: list[str] = []
    if root.tau > 0.0:
        lower_ok = r0 > lower
        if not lower_ok:
            raise RegimeError(f"r0_opt={r0:.6g} violates its lower bound {lower:.6g} despite tau > 0")
    else:
        lower_ok = None
        notes.append("tau <= 0: r0_opt lower bound not claimed, check skipped")
    if root.tau > 0.0 and g > 0.0:
        ratio_ok = c_ratio < ratio_bound < 1.0
        if not ratio_ok:
            raise RegimeError(
                f"covariance ratio {c_ratio:.6g} violates bound {ratio_bound:.6g} despite tau > 0, G > 0"
            )
    else:
        ratio_ok = None
        if g <= 0.0:
            notes.append("G <= 0: covariance-ratio bound not claimed, check skipped")
        elif root.tau <= 0.0:
            notes.append("tau <= 0: covariance-ratio bound not claimed, check skipped")
    return InflationBounds(
        r0_opt=float(r0),
        lower_bound=float(lower),
        lower_ok=lower_ok,
        c_ratio=float(c_ratio),
        ratio_bound=float(ratio_bound),
        ratio_ok=ratio_ok,
        notes=tuple(notes),
    )


# ---------------------------------------------------------------------------
# Report and surface export


@dataclass(frozen=True)
class AsymptoticsReport:
    a_star: float
    tau: float
    branch: str
    cubic_residual: float
    near_boundary: bool
    a_star_bracketed: float  # independent bracketing root-find, for diagnostics
    s_l: float
    s_u: float
    matched_r: float
    matched_s: float
    r_minus_s: float
    nu_inf: float
    e_inf: float
    e_inf_bound: float
    c_inf: float
    e_inf_ode: float | None  # long-horizon ODE limit, when cross-checked
    alpha: float
    alpha_sym: float
    stable: bool
    s_opt_samples: tuple[tuple[float, float], ...]  # (r, s_opt(r))
    r_opt_at_matched_s: tuple[float, ...]
    r_opt_regime: str
    inflation: dict

    def to_dict(self) -> dict:
        return asdict(self)


def asymptotics_report(
    model: LinearGaussianModel,
    r_samples: np.ndarray | None = None,
    cross_check: bool = True,
) -> AsymptoticsReport:
    """Full closed-form analysis of a scalar misspecified model.

    Every closed form is paired with an independent numeric value: the
    cubic root with a bracketed root-find, the asymptotic MSE (when
    ``cross_check``) with a long-horizon integration of the moment ODEs.
    """
    model.require_scalar("asymptotics_report")
    root = cubic_a_star(model)
    s_l, s_u = sl_su(model)
    pair = matched_pair(model)
    rs = RsPair(pair.r, pair.s)
    bias_mse = asymptotic_bias_mse(model, rs)
    info = stability_matrix(model, rs, steady_state_cov(model, pair.r).cov)
    if r_samples is None:
        r_samples = np.logspace(math.log10(0.05), math.log10(50.0), 9)
    samples = tuple((float(r), s_opt_given_r(model, float(r))) for r in np.asarray(r_samples))
    ropt = r_opt_given_s(model, pair.s)

    e_ode = None
    if cross_check:
        # The bias relaxes at |alpha|, the covariance at |alpha_sym|; the
        # horizon must outlast the slower of the two.
        horizon = 14.0 / min(abs(info.alpha), abs(bias_mse.alpha_sym))
        flow = error_moment_flow(model, rs, horizon=horizon, dt=min(1e-3, horizon / 200.0), freeze_cov=True)
        e_ode = float(flow.e[-1])

    return AsymptoticsReport(
        a_star=root.a_star,
        tau=root.tau,
        branch=root.branch,
        cubic_residual=root.residual,
        near_boundary=root.near_boundary,
        a_star_bracketed=_a_star_bracketed(model),
        s_l=s_l,
        s_u=s_u,
        matched_r=pair.r,
        matched_s=pair.s,
        r_minus_s=pair.r_minus_s,
        nu_inf=bias_mse.nu_inf,
        e_inf=bias_mse.e_inf,
        e_inf_bound=bias_mse.bound,
        c_inf=steady_state_cov_scalar(model, pair.r),
        e_inf_ode=e_ode,
        alpha=info.alpha,
        alpha_sym=info.alpha_sym,
        stable=info.stable,
        s_opt_samples=samples,
        r_opt_at_matched_s=ropt.values,
        r_opt_regime=ropt.regime,
        inflation=inflation_bounds(model)._asdict(),
    )


def report_to_json(report: AsymptoticsReport, path: str | Path | None = None) -> str:
    text = json.dumps(report.to_dict(), indent=2, sort_keys=True)
    if path is not None:
        atomic_write_text(path, text + "\n")
    return text


def e_inf_surface(
    model: LinearGaussianModel,
    r_values: np.ndarray,
    s_values: np.ndarray,
) -> list[tuple[float, float, float, float, float, int]]:
    """Rows (r, s, E_inf, nu_inf, C_inf, stable) over a parameter grid.

    Inadmissible or unstable cells carry NaN moments and stable = 0.
    """
    model.require_scalar("e_inf_surface")
    rows = []
    for r in map(float, np.asarray(r_values)):
        c_inf = steady_state_cov_scalar(model, r)
        _, s_upper = admissible_s_range(model, r)
        for s in map(float, np.asarray(s_values)):
            try:
                if not s < s_upper:
                    raise StabilityError
                bm = asymptotic_bias_mse(model, RsPair(r, s))
                rows.append((r, s, bm.e_inf, bm.nu_inf, c_inf, 1))
            except StabilityError:
                rows.append((r, s, math.nan, math.nan, c_inf, 0))
    return rows


def surface_to_csv(rows, path: str | Path) -> Path:
    return write_csv(path, ["r", "s", "E_inf", "nu_inf", "C_inf", "stable"], rows)
