"""Independent reference implementations used to pin expected values.

Everything here is written against the raw formulas with plain
numpy/scipy, never by calling the package, so a test comparing the two is
a genuine cross-check rather than a tautology.
"""

from __future__ import annotations

import numpy as np
from scipy import integrate, optimize
from scipy.linalg import expm

_EPS = float(np.finfo(float).eps)


def real_roots_depressed_cubic(p: float, q: float, samples: int = 20001) -> list[float]:
    """All real roots of a^3 + p a + q, by sign scan plus Brent refinement."""

    def poly(a: float) -> float:
        return a * a * a + p * a + q

    # Any real root satisfies |a|^3 <= |p||a| + |q|; past twice the larger of
    # sqrt|p| and cbrt|q| the cubic term dominates, so this bound is rigorous.
    bound = 2.0 * max(np.sqrt(abs(p)), np.cbrt(abs(q)), 1.0)
    xs = np.linspace(-bound, bound, samples)
    vals = xs**3 + p * xs + q
    roots = [float(x) for x in xs[vals == 0.0]]
    signs = np.sign(vals)
    for i in np.nonzero(np.diff(signs) != 0)[0]:
        if vals[i] == 0.0 or vals[i + 1] == 0.0:
            continue
        roots.append(optimize.brentq(poly, xs[i], xs[i + 1], xtol=1e-13, rtol=4 * _EPS))
    return sorted(roots)


def a_star_bracketed(p: float, q: float) -> float:
    """Reference optimal decay rate: the most negative real root."""
    roots = real_roots_depressed_cubic(p, q)
    if not roots:
        raise ValueError("cubic has no real roots")
    return roots[0]


def lyapunov_quadrature(A: np.ndarray, Q: np.ndarray, tail: float = 1e-16) -> np.ndarray:
    """X = integral_0^inf exp(A v)^T Q exp(A v) dv by adaptive quadrature."""
    A = np.asarray(A, dtype=float)
    Q = np.asarray(Q, dtype=float)
    alpha = max(np.linalg.eigvalsh(A + A.T)) / 2.0
    if alpha >= 0:
        raise ValueError("A must be stable")
    horizon = np.log(1.0 / tail) / (-2.0 * alpha)
    result, _ = integrate.quad_vec(
        lambda v: expm(A.T * v) @ Q @ expm(A * v), 0.0, horizon, epsabs=1e-13, epsrel=1e-12
    )
    return result


def steady_cov_ode(g: float, h: float, sig: float, xi: float, r: float) -> float:
    """Scalar Riccati flow integrated to its limit (no closed form used)."""

    def rhs(_t, c):
        return 2.0 * g * c + sig - r * h * h / xi * c * c

    rate = max(abs(g), np.sqrt(max(g * g + r * h * h / xi * sig, 1e-12)))
    horizon = 60.0 / rate
    sol = integrate.solve_ivp(
        rhs, (0.0, horizon), [max(sig / rate, 1.0)], method="Radau", rtol=1e-12, atol=1e-14
    )
    return float(sol.y[0, -1])


def error_moments_ode(
    g: float,
    h: float,
    sig: float,
    xi: float,
    b: float,
    r: float,
    s: float,
    horizon: float | None = None,
) -> tuple[float, float]:
    """Asymptotic (mean, mean-square) tracking error of the biased filter.

    Integrates the error-moment ODEs with the gain frozen at the Riccati
    limit: d(mu)/dt = a mu - b and dE/dt = 2 a E - 2 b mu + d with
    a = g - (r-s) k h, k = C h / xi, d = sig + (r-s)^2 k^2 xi.
    """
    c_inf = steady_cov_ode(g, h, sig, xi, r)
    k = c_inf * h / xi
    a = g - (r - s) * k * h
    if a >= 0:
        raise ValueError("error dynamics not stable")
    d = sig + (r - s) ** 2 * k * k * xi
    if horizon is None:
        horizon = 60.0 / -a
    sol = integrate.solve_ivp(
        lambda _t, y: [a * y[0] - b, 2.0 * a * y[1] - 2.0 * b * y[0] + d],
        (0.0, horizon),
        [0.0, 0.0],
        method="Radau",
        rtol=1e-12,
        atol=1e-14,
    )
    return float(sol.y[0, -1]), float(sol.y[1, -1])


def tempering_posterior(p0: np.ndarray, f: np.ndarray, t: float) -> np.ndarray:
    """Closed-form replicator flow for local fitness: normalized p0 exp(t f)."""
    w = np.asarray(p0, dtype=float) * np.exp(t * (f - np.max(f)))
    return w / w.sum()


def two_state_logistic(p0: float, f0: float, f1: float, t: float) -> float:
    """Mass on the second state of a two-point replicator flow."""
    w1 = p0 * np.exp(t * f1)
    return float(w1 / (w1 + (1.0 - p0) * np.exp(t * f0)))


def gaussian_tempered_moments(
    m0: float, c0: float, h: float, y: float, xi: float, t: float
) -> tuple[float, float]:
    """Mean and variance of N(m0, c0) tempered by exp(-t (h x - y)^2 / (2 xi))."""
    precision = 1.0 / c0 + t * h * h / xi
    mean = (m0 / c0 + t * h * y / xi) / precision
    return mean, 1.0 / precision


def linear_sde_mean(G: np.ndarray, b: np.ndarray, m0: np.ndarray, t: float) -> np.ndarray:
    """E X_t = exp(G t) m0 + int_0^t exp(G v) b dv for dX = (G X + b) dt + noise."""
    G = np.atleast_2d(np.asarray(G, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    m0 = np.atleast_1d(np.asarray(m0, dtype=float))
    drift, _ = integrate.quad_vec(lambda v: expm(G * v) @ b, 0.0, t, epsabs=1e-13, epsrel=1e-12)
    return expm(G * t) @ m0 + drift
