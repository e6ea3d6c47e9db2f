import json

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from repmut import (
    LinearGaussianModel,
    RsPair,
    StabilityError,
    asymptotic_bias_mse,
    asymptotics_report,
    cubic_a_star,
    cubic_coeffs,
    e_inf_surface,
    error_moment_flow,
    inflation_bounds,
    lyapunov_solve,
    matched_pair,
    r_opt_given_s,
    report_to_json,
    s_opt_given_r,
    sl_su,
    steady_state_cov_scalar,
    surface_to_csv,
)
from repmut.model import KALMAN

from _oracles import a_star_bracketed, error_moments_ode, lyapunov_quadrature


class TestCubicRoot:
    def test_system1_anchor(self, system1):
        root = cubic_a_star(system1)
        assert root.a_star == pytest.approx(-16.695093297150397, rel=1e-12)
        assert root.tau > 0
        assert root.branch == "one-real-root"
        assert root.residual < 1e-10
        assert not root.near_boundary

    def test_system2_anchor(self, system2):
        root = cubic_a_star(system2)
        assert root.a_star == pytest.approx(-3.549259765935854, rel=1e-12)
        assert root.tau == pytest.approx(-64.29608705035217, rel=1e-9)
        assert root.branch == "three-real-roots"
        assert root.residual < 1e-10

    def test_matches_bracketed_root_find(self, system1, system2):
        for model in (system1, system2):
            p, q = cubic_coeffs(model)
            assert cubic_a_star(model).a_star == pytest.approx(a_star_bracketed(p, q), rel=1e-12)

    @given(
        g=st.floats(-3.0, 3.0),
        h=st.floats(0.05, 30.0),
        sig=st.floats(0.05, 30.0),
        xi=st.floats(0.05, 30.0),
        b=st.floats(0.0, 10.0),
    )
    def test_random_models_agree_with_scan(self, g, h, sig, xi, b):
        model = LinearGaussianModel.from_scalars(G=g, H=h, Sigma=sig, Xi=xi, b=b, m0=0.0, C0=1.0)
        root = cubic_a_star(model)
        p, q = cubic_coeffs(model)
        oracle = a_star_bracketed(p, q)
        assert abs(root.a_star - oracle) <= 1e-10 * max(1.0, abs(oracle))
        assert root.residual < 1e-9 * max(1.0, abs(q))

    def test_bias_scales_q_only(self, system1, system1_b0):
        p1, q1 = cubic_coeffs(system1)
        p0, q0 = cubic_coeffs(system1_b0)
        assert p1 == p0
        assert q0 == 0.0 and q1 > 0.0


class TestOptimalSelection:
    def test_s_opt_anchors(self, system1, system2):
        assert s_opt_given_r(system1, 0.13) == pytest.approx(-1.184050225118257, abs=1e-9)
        assert s_opt_given_r(system2, 0.99) == pytest.approx(-0.013793614148003177, abs=1e-9)

    def test_sl_su_system2(self, system2):
        s_l, s_u = sl_su(system2)
        assert s_l == pytest.approx(-0.047272753115843974, abs=1e-9)
        assert s_u == 0.0

    def test_flat_optimum_along_the_curve(self, system1, system2):
        for model in (system1, system2):
            values = [
                asymptotic_bias_mse(model, RsPair(r, s_opt_given_r(model, r))).e_inf
                for r in np.geomspace(0.05, 50.0, 7)
            ]
            assert max(values) / min(values) - 1.0 < 1e-8

    def test_local_optimality_in_s(self, system1):
        r = 0.13
        s_star = s_opt_given_r(system1, r)
        e_star = asymptotic_bias_mse(system1, RsPair(r, s_star)).e_inf
        for ds in np.linspace(-2.0, 0.4, 20):
            if abs(ds) < 1e-12:
                continue
            e = asymptotic_bias_mse(system1, RsPair(r, s_star + ds)).e_inf
            assert e > e_star

    def test_inverse_consistency_over_log_grid(self, system1, system2):
        for model in (system1, system2):
            for r in np.geomspace(0.05, 50.0, 12):
                s = s_opt_given_r(model, float(r))
                result = r_opt_given_s(model, s)
                if result.regime == "two-roots":
                    assert any(abs(v - r) / r < 1e-6 for v in result.values)
                else:
                    assert result.values[0] == pytest.approx(r, rel=1e-6)

    def test_r_opt_two_root_anchor(self, system2):
        result = r_opt_given_s(system2, -0.0135)
        assert result.regime == "two-roots"
        assert sorted(result.values) == pytest.approx(
            [0.07085894730588392, 0.9923006975505504], rel=1e-9
        )


class TestMatchedPair:
    def test_system1_anchor(self, system1):
        pair = matched_pair(system1)
        assert pair.r == pytest.approx(0.12892955619682017, rel=1e-9)
        assert pair.s == pytest.approx(-1.1774454349282737, rel=1e-9)
        assert pair.r_minus_s == pytest.approx(1.306374991125094, rel=1e-9)
        assert pair.e_inf == pytest.approx(1.1477290569888268, rel=1e-9)
        assert pair.resid_closed_form < 1e-8
        assert pair.resid_match < 1e-8

    def test_system2_anchor(self, system2):
        pair = matched_pair(system2)
        assert pair.r == pytest.approx(0.9927011475347438, rel=1e-9)
        assert pair.s == pytest.approx(-0.013448780505112112, rel=1e-7)
        assert pair.e_inf == pytest.approx(18.587324714374244, rel=1e-9)

    def test_unbiased_limit_degenerates_to_kalman(self, system1_b0, system2_b0):
        for model in (system1_b0, system2_b0):
            pair = matched_pair(model)
            assert abs(pair.r - 1.0) < 1e-8
            assert abs(pair.s) < 1e-8
            c_inf = steady_state_cov_scalar(model, 1.0)
            assert abs(pair.e_inf - c_inf) < 1e-10

    def test_matched_mse_equals_covariance(self, system1):
        pair = matched_pair(system1)
        c_at_pair = steady_state_cov_scalar(system1, pair.r)
        assert pair.e_inf == pytest.approx(c_at_pair, abs=1e-8)


class TestBiasMse:
    def test_kalman_values_against_ode_oracle(self, system1):
        result = asymptotic_bias_mse(system1, KALMAN)
        mu, e = error_moments_ode(0.5, 8.5, 0.8, 6.3, 9.9, 1.0, 0.0)
        assert result.nu_inf == pytest.approx(mu * mu, rel=1e-9)
        assert result.e_inf == pytest.approx(e, rel=1e-9)
        assert result.e_inf == pytest.approx(10.710666744352203, rel=1e-12)

    def test_scalar_bound_is_tight(self, system1, system2):
        for model in (system1, system2):
            for rs in (KALMAN, RsPair(0.5, -1.0)):
                result = asymptotic_bias_mse(model, rs)
                assert result.bound == pytest.approx(result.e_inf, rel=1e-10)

    def test_matrix_route_agrees_with_scalar(self, system2):
        auto = asymptotic_bias_mse(system2, RsPair(0.8, -0.02))
        matrix = asymptotic_bias_mse(system2, RsPair(0.8, -0.02), method="matrix")
        assert matrix.nu_inf == pytest.approx(auto.nu_inf, rel=1e-10)
        assert matrix.e_inf == pytest.approx(auto.e_inf, rel=1e-8)

    def test_unstable_pair_raises(self, system1):
        with pytest.raises(StabilityError):
            asymptotic_bias_mse(system1, RsPair(0.5, 0.4999))

    def test_mse_decomposes_into_bias_and_covariance(self, system1):
        # At (1, 0) the error covariance settles at C_inf, so E = nu + C_inf.
        result = asymptotic_bias_mse(system1, KALMAN)
        c_inf = steady_state_cov_scalar(system1, 1.0)
        assert result.e_inf == pytest.approx(result.nu_inf + c_inf, rel=1e-12)


class TestErrorMomentFlow:
    def test_limits_match_ode_oracle(self, system1):
        flow = error_moment_flow(system1, KALMAN, horizon=8.0, dt=1e-3)
        mu, e = error_moments_ode(0.5, 8.5, 0.8, 6.3, 9.9, 1.0, 0.0)
        assert flow.nu[-1] == pytest.approx(mu * mu, rel=1e-4)
        assert flow.e[-1] == pytest.approx(e, rel=1e-4)
        assert not flow.unstable

    def test_bias_variance_identity_at_every_stored_time(self, system2):
        flow = error_moment_flow(system2, RsPair(0.99, -0.0135), horizon=3.0, dt=1e-3)
        recomposed = np.trace(flow.p, axis1=1, axis2=2) + flow.nu
        assert np.allclose(flow.e, recomposed, rtol=1e-12, atol=1e-12)
        tilde = flow.p + flow.mean_error[:, :, None] * flow.mean_error[:, None, :]
        assert np.allclose(flow.p_tilde, tilde, rtol=1e-12, atol=1e-12)

    def test_gronwall_curve_dominates_mse(self, system1):
        flow = error_moment_flow(system1, KALMAN, horizon=5.0, dt=1e-3)
        assert np.all(flow.e <= flow.bound_e * (1.0 + 1e-9) + 1e-12)

    def test_frozen_covariance_flow_reaches_same_limit(self, system1):
        moving = error_moment_flow(system1, KALMAN, horizon=8.0, dt=1e-3)
        frozen = error_moment_flow(system1, KALMAN, horizon=8.0, dt=1e-3, freeze_cov=True)
        assert moving.e[-1] == pytest.approx(frozen.e[-1], rel=1e-6)

    def test_unstable_flag(self, system1):
        flow = error_moment_flow(system1, RsPair(0.5, 0.4999), horizon=0.5, dt=1e-3)
        assert flow.unstable


class TestLyapunov:
    def test_matches_quadrature_oracle(self):
        rng = np.random.default_rng(7)
        for dim in (1, 3, 5):
            A = rng.standard_normal((dim, dim)) - (2.0 + dim) * np.eye(dim)
            X = lyapunov_solve(A)
            oracle = lyapunov_quadrature(A, np.eye(dim))
            assert np.allclose(X, oracle, rtol=1e-8, atol=1e-10)

    def test_residuals_on_random_stable_matrices(self):
        rng = np.random.default_rng(21)
        for _ in range(25):
            dim = int(rng.integers(1, 7))
            M = rng.standard_normal((dim, dim))
            A = M - (np.max(np.linalg.eigvals(M).real) + rng.uniform(0.5, 3.0)) * np.eye(dim)
            X = lyapunov_solve(A)
            resid = np.max(np.abs(A.T @ X + X @ A + np.eye(dim)))
            assert resid < 1e-10


class TestInflationBounds:
    def test_system1_anchors(self, system1):
        bounds = inflation_bounds(system1)
        assert bounds.r0_opt == pytest.approx(30.352935696600404, rel=1e-9)
        assert bounds.lower_bound == pytest.approx(2.0544982698961936, rel=1e-9)
        assert bounds.c_ratio == pytest.approx(0.1586870547496666, rel=1e-9)
        assert bounds.ratio_bound == pytest.approx(0.20484734979167654, rel=1e-9)
        assert bounds.lower_ok and bounds.ratio_ok
        assert bounds.r0_opt > bounds.lower_bound

    def test_system2_r0(self, system2):
        bounds = inflation_bounds(system2)
        assert bounds.r0_opt == pytest.approx(1.0901596448564332, rel=1e-9)
        # tau < 0 here, so the one-root-regime bounds are out of scope.
        assert bounds.lower_ok is None


class TestReportAndSurface:
    def test_report_fields_and_json(self, system2, tmp_path):
        report = asymptotics_report(system2)
        assert report.branch == "three-real-roots"
        assert report.stable
        assert not report.near_boundary
        assert report.s_l == pytest.approx(-0.047272753115843974, abs=1e-9)
        assert report.r_opt_regime == "two-roots"
        assert len(report.s_opt_samples) == 9
        text = report_to_json(report, tmp_path / "report.json")
        parsed = json.loads(text)
        assert parsed["matched_r"] == pytest.approx(report.matched_r)
        assert json.loads((tmp_path / "report.json").read_text()) == parsed

    def test_report_cross_check_consistency(self, system1):
        report = asymptotics_report(system1)
        assert report.a_star_bracketed is not None
        assert report.a_star == pytest.approx(report.a_star_bracketed, rel=1e-10)
        assert report.e_inf_ode == pytest.approx(report.e_inf, rel=1e-4)

    def test_surface_rows_match_pointwise_evaluation(self, system1, tmp_path):
        r_values = np.array([0.13, 1.0])
        s_values = np.array([-1.18, -0.5])
        rows = e_inf_surface(system1, r_values, s_values)
        assert len(rows) == 4
        for r, s, e_inf, nu_inf, c_inf, stable in rows:
            point = asymptotic_bias_mse(system1, RsPair(r, s))
            assert e_inf == pytest.approx(point.e_inf, rel=1e-12)
            assert nu_inf == pytest.approx(point.nu_inf, rel=1e-12)
            assert stable == 1
        out = surface_to_csv(rows, tmp_path / "surface.csv")
        header = out.read_text().splitlines()[0]
        assert header.split(",")[:3] == ["r", "s", "E_inf"]

    def test_surface_flags_unstable_cells(self, system1):
        rows = e_inf_surface(system1, np.array([0.5]), np.array([0.4999]))
        r, s, e_inf, nu_inf, c_inf, stable = rows[0]
        assert stable == 0
        assert np.isnan(e_inf) and np.isnan(nu_inf)
        assert c_inf > 0


@given(
    g=st.floats(0.05, 2.0),
    h=st.floats(0.5, 10.0),
    sig=st.floats(0.1, 10.0),
    xi=st.floats(0.5, 10.0),
    b=st.floats(0.1, 5.0),
)
def test_matched_pair_sits_on_the_optimal_curve(g, h, sig, xi, b):
    # Growing signals only: with G < 0 and weak noise the optimal MSE can
    # exceed every reachable C_inf, and the match correctly fails to exist.
    model = LinearGaussianModel.from_scalars(G=g, H=h, Sigma=sig, Xi=xi, b=b, m0=0.0, C0=1.0)
    root = cubic_a_star(model)
    assume(not root.near_boundary)
    pair = matched_pair(model)
    assert pair.s == pytest.approx(s_opt_given_r(model, pair.r), rel=1e-5, abs=1e-7)
    assert steady_state_cov_scalar(model, pair.r) == pytest.approx(pair.e_inf, rel=1e-6)


def test_matched_pair_reports_nonexistence_for_damped_signal():
    from repmut import ConvergenceError

    model = LinearGaussianModel.from_scalars(G=-1.0, H=1.0, Sigma=1.0, Xi=1.0, b=1.0, m0=0.0, C0=1.0)
    with pytest.raises(ConvergenceError, match="not bracketed"):
        matched_pair(model)
