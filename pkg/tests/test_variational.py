"""Reduced scalar objective, sharp embedding constant, and the path-space
rate function minimization."""

import numpy as np
import pytest

from grushin.variational import (
    PhiProblem,
    asymptotic_rate_constant,
    c_gamma,
    c_gamma_upper_bound,
    minimize_phi,
    phi_and_grad,
    psi_closed_form,
    psi_minimize,
    psi_value,
)


class TestPsi:
    def test_frozen_example(self):
        # independent golden-section oracle, frozen: (p,q,r,gamma)=(1,1,0.5,1)
        res = psi_minimize(1.0, 1.0, 0.5, 1.0)
        assert abs(res.lambda_star - 0.652776572695) < 1e-6
        assert abs(res.value - 1.178622819028) < 1e-9

    def test_matches_closed_form_at_r_zero(self):
        rng = np.random.default_rng(12345)
        for _ in range(20):
            p, q = rng.uniform(0.1, 10.0, size=2)
            gamma = rng.uniform(0.2, 3.0)
            lam_exact, val_exact = psi_closed_form(p, q, gamma)
            res = psi_minimize(p, q, 0.0, gamma)
            assert abs(res.lambda_star - lam_exact) <= 1e-8 * lam_exact
            assert abs(res.value - val_exact) <= 1e-8 * val_exact

    def test_branches(self):
        assert psi_minimize(1.0, 1.0, 0.0, 0.3).branch == "gamma-lt-half"
        assert psi_minimize(1.0, 1.0, 0.0, 0.8).branch == "gamma-ge-half"

    def test_r_shifts_value_down(self):
        # larger r shrinks the first term at fixed lambda, so the min drops
        v0 = psi_minimize(2.0, 3.0, 0.0, 1.0).value
        v1 = psi_minimize(2.0, 3.0, 1.0, 1.0).value
        assert v1 < v0

    def test_minimum_is_global_on_grid(self):
        res = psi_minimize(1.0, 2.0, 0.3, 1.5)
        grid = np.logspace(-3, 3, 2000)
        vals = [psi_value(lam, 1.0, 2.0, 0.3, 1.5) for lam in grid]
        assert res.value <= min(vals) + 1e-9

    def test_validation(self):
        with pytest.raises(ValueError):
            psi_minimize(-1.0, 1.0, 0.0, 1.0)
        with pytest.raises(ValueError):
            psi_minimize(1.0, 1.0, -0.1, 1.0)
        with pytest.raises(ValueError):
            psi_minimize(1.0, 1.0, 0.0, 0.0)


class TestSharpConstant:
    def test_gamma_one_is_inverse_pi(self):
        val = c_gamma(1.0, 256)
        assert abs(val - 1.0 / np.pi) < 1e-3

    def test_beta_function_bound(self):
        for gamma in (0.6, 1.0, 1.5, 2.0):
            assert c_gamma(gamma, 128) <= c_gamma_upper_bound(gamma) + 1e-9

    def test_validation(self):
        with pytest.raises(ValueError):
            c_gamma(0.0, 128)
        with pytest.raises(ValueError):
            c_gamma(1.0, 4)

    def test_rate_constant_gamma_one(self):
        # c_1 = 1/pi gives 2 pi
        assert np.isclose(asymptotic_rate_constant(1.0, 1.0 / np.pi), 2.0 * np.pi, rtol=1e-12)


class TestGradient:
    @pytest.mark.parametrize("gamma", [0.7, 1.0, 2.0])
    def test_matches_central_differences(self, gamma):
        n = 64
        problem = PhiProblem([0.5], [1.0], 1.0, gamma, n)
        rng = np.random.default_rng(99)
        t = np.linspace(0.0, 1.0, n + 1)
        for _ in range(10):
            rough = rng.normal(size=(n + 1, 1)) * np.sqrt(1.0 / n)
            h = np.cumsum(rough, axis=0)
            h -= t[:, None] * h[-1][None, :]
            h[0] = h[-1] = 0.0
            _, grad, _ = phi_and_grad(problem, h)
            step = 1e-6
            for k in (1, n // 3, n // 2, n - 1):
                e = np.zeros_like(h)
                e[k, 0] = step
                fp, _, _ = phi_and_grad(problem, h + e)
                fm, _, _ = phi_and_grad(problem, h - e)
                fd = (fp - fm) / (2 * step)
                assert abs(grad[k, 0] - fd) <= 1e-5 * max(1.0, abs(fd))


class TestRateFunction:
    def test_origin_gamma_one(self):
        res = minimize_phi(PhiProblem([0.0], [0.0], 1.0, 1.0, 256))
        assert res.converged
        assert abs(res.m - 2.0 * np.pi) <= 0.01 * 2.0 * np.pi

    def test_scaling_identity(self):
        base = minimize_phi(PhiProblem([0.0], [0.0], 1.0, 1.0, 256))
        scaled = minimize_phi(PhiProblem([0.0], [0.0], 4.0, 1.0, 256))
        assert np.isclose(scaled.m, 4.0 * base.m, rtol=1e-12)  # exact by construction
        direct = minimize_phi(
            PhiProblem([0.0], [0.0], 4.0, 1.0, 256), use_scaling_shortcut=False
        )
        assert abs(direct.m - 4.0 * base.m) <= 0.02 * direct.m

    def test_zero_level(self):
        res = minimize_phi(PhiProblem([1.0], [2.0], 0.0, 1.0, 64))
        assert res.m == 0.0
        assert np.all(res.minimizer.values == 0.0)

    def test_upper_bound_at_zero_path(self):
        # m <= Phi(0) = a^2 / v(line) whenever the line does not vanish
        problem = PhiProblem([1.0], [1.0], 1.0, 1.0, 128)
        res = minimize_phi(problem)
        val0, _, _ = phi_and_grad(problem, np.zeros((129, 1)))
        assert 0 < res.m <= val0 + 1e-9

    def test_monotone_in_level(self):
        ms = [minimize_phi(PhiProblem([1.0], [1.0], a, 1.0, 128)).m for a in (0.5, 1.0, 2.0)]
        assert ms[0] < ms[1] < ms[2]

    def test_large_level_limit(self):
        # a^(-2/(1+gamma)) m approaches the embedding-constant expression
        const = asymptotic_rate_constant(1.0, c_gamma(1.0, 256))
        scaled = []
        for a in (10.0, 1000.0):
            res = minimize_phi(PhiProblem([1.0], [0.0], a, 1.0, 256))
            assert res.converged
            scaled.append(res.m / a)
        assert abs(scaled[-1] - const) <= 0.05 * const
        assert abs(scaled[-1] - const) < abs(scaled[0] - const)

    def test_gap_increases_rate(self):
        m_near = minimize_phi(PhiProblem([0.0], [1.0], 1.0, 1.0, 128)).m
        m_origin = minimize_phi(PhiProblem([0.0], [0.0], 1.0, 1.0, 128)).m
        # a nonvanishing line cheapens the integral constraint
        assert m_near < m_origin

    def test_validation(self):
        with pytest.raises(ValueError):
            PhiProblem([0.0], [0.0, 1.0], 1.0, 1.0)
        with pytest.raises(ValueError):
            PhiProblem([0.0], [0.0], -1.0, 1.0)
        with pytest.raises(ValueError):
            PhiProblem([0.0], [0.0], 1.0, -0.5)
