import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

import oracles
from implicit_influence.copula import (
    CopulaInfluenceRegressor,
    Hyperparams,
    StepSizeError,
    auto_step,
    compact_mean,
    fit,
    grad_smooth,
    objective,
    update_influence,
    update_mean,
    update_precision,
)
from implicit_influence.data import InfectionLog, build_design, design_predictions
from implicit_influence.synth import SynthConfig, gen_instance


def tiny_problem(rng, N=3, K=2, L=2, T=8, density=0.5, noise=0.0):
    flips = rng.random((N, K, T + 1)) < density
    u, k, t = np.nonzero(flips)
    log = InfectionLog(N, K, T, np.column_stack([u + 1, k + 1, t]))
    designs = build_design(log, L)
    I = rng.uniform(0, 1, (L * N, K))
    V = design_predictions(designs, I) + noise * rng.standard_normal((T, K))
    return log, designs, V, I


def zero_lambdas(**kw):
    base = dict(lambda1=0.0, lambda2=0.0, lambda3=0.0, lambda4=0.0, lambda5=0.0)
    base.update(kw)
    return base


class TestHyperparams:
    def test_defaults(self):
        hp = Hyperparams()
        assert (hp.inner_tol, hp.outer_tol, hp.inner_max, hp.outer_max) == (1e-6, 1e-5, 500, 50)

    @pytest.mark.parametrize("kw", [
        {"lambda1": -1.0},
        {"lambda1": 1.0, "lambda2": 0.0},
        {"step": 0.0},
        {"step": "fast"},
        {"lag": 0},
        {"inner_tol": 0.0},
    ])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            Hyperparams(**kw)


class TestObjective:
    def test_all_zero(self):
        designs = [np.zeros((4, 2))]
        val = objective(np.zeros((2, 1)), np.zeros((2, 1)), np.eye(1), designs,
                        np.zeros((4, 1)), Hyperparams(lag=1))
        assert val == 0.1  # lambda3 * |P_11| is the only nonzero term

    def test_all_zero_with_lambda3_off(self):
        designs = [np.zeros((4, 2))] * 3
        val = objective(np.zeros((2, 3)), np.zeros((2, 3)), np.eye(3), designs,
                        np.zeros((4, 3)), Hyperparams(lambda3=0.0))
        assert val == 0.0

    def test_single_term(self):
        T, K = 5, 3
        designs = [np.zeros((T, 4))] * K
        V = np.zeros((T, K))
        V[:, 0] = 1.0
        hp = Hyperparams(lambda3=0.7, lag=2)
        val = objective(np.zeros((4, K)), np.zeros((4, K)), np.eye(K), designs, V, hp)
        assert np.isclose(val, T + 0.7 * K, rtol=1e-15)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_term_by_term_oracle(self, seed):
        rng = np.random.default_rng(seed)
        _, designs, V, _ = tiny_problem(rng, noise=0.5)
        I = rng.uniform(0, 2, (6, 2))
        m = update_mean(rng.uniform(0, 2, (6, 2)), 2)
        P = oracles.random_spd(rng, 2) + 0.5 * np.eye(2)
        lambdas = tuple(rng.uniform(0.1, 2, 5))
        hp = Hyperparams(*lambdas, lag=2)
        want = oracles.copula_objective(I, m, P, designs, V, lambdas, 2)
        got = objective(I, m, P, designs, V, hp)
        assert np.isclose(got, want, rtol=1e-12)

    def test_infeasible_influence(self):
        with pytest.raises(ValueError, match="negative"):
            objective(-np.ones((2, 1)), np.zeros((2, 1)), np.eye(1),
                      [np.zeros((3, 2))], np.zeros((3, 1)), Hyperparams())

    def test_non_pd_precision(self):
        with pytest.raises(ValueError, match="positive definite"):
            objective(np.ones((2, 2)), np.zeros((2, 2)), np.diag([1.0, -1.0]),
                      [np.zeros((3, 2))] * 2, np.zeros((3, 2)), Hyperparams())


class TestUpdateMean:
    def test_lag_one_is_identity(self):
        I = np.random.default_rng(0).uniform(size=(5, 3))
        np.testing.assert_array_equal(update_mean(I, 1), I)

    def test_constant_blocks_fixed_point(self):
        I = np.repeat(np.random.default_rng(1).uniform(size=(3, 2)), 4, axis=0)
        np.testing.assert_allclose(update_mean(I, 4), I, rtol=1e-15)

    def test_one_two_three(self):
        I = np.array([[1.0], [2.0], [3.0]])
        np.testing.assert_array_equal(update_mean(I, 3), [[2.0], [2.0], [2.0]])

    def test_matches_qqt(self):
        rng = np.random.default_rng(2)
        N, L, K = 4, 3, 2
        I = rng.uniform(size=(N * L, K))
        Q = np.kron(np.eye(N), np.ones((L, 1)))
        np.testing.assert_allclose(update_mean(I, L), Q @ Q.T @ I / L, rtol=1e-14)
        np.testing.assert_allclose(compact_mean(update_mean(I, L), L), Q.T @ I / L,
                                   rtol=1e-14)

    @pytest.mark.parametrize("seed", range(10))
    def test_perturbations_never_beat_mean(self, seed):
        rng = np.random.default_rng(seed)
        N, L, K = 3, 4, 3
        I = rng.uniform(0, 3, (N * L, K))
        P = oracles.random_spd(rng, K) + 0.1 * np.eye(K)
        m_hat = update_mean(I, L)

        def trace(m):
            E = I - m
            return np.trace(E @ P @ E.T)

        best = trace(m_hat)
        for _ in range(100):
            delta = np.repeat(rng.standard_normal((N, K)) * rng.choice([1e-3, 0.1, 1]), L, axis=0)
            assert trace(m_hat + delta) >= best - 1e-12 * abs(best)


class TestUpdatePrecision:
    def test_degenerate_sample(self):
        I = np.random.default_rng(0).uniform(size=(4, 3))
        hp = Hyperparams(lambda1=1.0, lambda2=2.0, lambda3=0.5)
        res = update_precision(I, I, hp)
        np.testing.assert_allclose(res.precision, np.eye(3) / 0.25)

    def test_scalar_closed_form(self):
        rng = np.random.default_rng(1)
        I = rng.uniform(size=(6, 1))
        m = update_mean(I, 3)
        hp = Hyperparams(lambda1=2.0, lambda2=0.5, lambda3=0.1, lag=3)
        s = (2.0 / 0.5) * float(np.sum((I - m) ** 2))
        res = update_precision(I, m, hp)
        assert np.isclose(res.precision[0, 0], 1.0 / (s + 0.2))

    def test_orthogonal_equal_norm_columns_large_rho(self):
        E = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
        hp = Hyperparams(lambda1=1.0, lambda2=1.0, lambda3=5.0)
        res = update_precision(E, np.zeros_like(E), hp)
        assert res.precision[0, 1] == 0.0
        np.testing.assert_allclose(np.diag(res.precision), 1 / 7.0)

    def test_needs_lambda2(self):
        with pytest.raises(ValueError):
            update_precision(np.ones((2, 2)), np.zeros((2, 2)),
                             Hyperparams(**zero_lambdas()))


class TestGradient:
    def test_least_squares_stationarity(self):
        rng = np.random.default_rng(0)
        M = rng.standard_normal((10, 4))
        I = rng.uniform(size=(4, 1))
        V = (M @ I)
        g = grad_smooth(I, np.zeros_like(I), np.eye(1), [M], V,
                        Hyperparams(**zero_lambdas(), lag=1))
        np.testing.assert_allclose(g, 0.0, atol=1e-12)

    def test_lambda1_term_alone(self):
        rng = np.random.default_rng(1)
        I = rng.uniform(size=(4, 2))
        m = update_mean(I, 2)
        g = grad_smooth(I, m, np.eye(2), [np.zeros((3, 4))] * 2, np.zeros((3, 2)),
                        Hyperparams(lambda1=0.7, lag=2))
        np.testing.assert_allclose(g, 2 * 0.7 * (I - m), rtol=1e-15)

    @pytest.mark.parametrize("seed", range(10))
    def test_central_differences(self, seed):
        rng = np.random.default_rng(seed)
        N, K, L = rng.integers(1, 6), rng.integers(1, 4), rng.integers(1, 4)
        T = int(rng.integers(L, 11))
        _, designs, V, _ = tiny_problem(rng, N, K, L, T, noise=1.0)
        I = rng.uniform(0, 2, (L * N, K))
        m = update_mean(rng.uniform(0, 2, (L * N, K)), L)
        P = oracles.random_spd(rng, K) + 0.2 * np.eye(K)
        l1 = float(rng.uniform(0.1, 3))
        hp = Hyperparams(lambda1=l1, lag=int(L))
        g = grad_smooth(I, m, P, designs, V, hp)
        f = lambda X: oracles.smooth_part(X, m, P, designs, V, l1)  # noqa: E731
        fd = oracles.central_difference(f, I, 1e-6 * max(1.0, np.max(np.abs(I))))
        rel = np.max(np.abs(g - fd)) / max(np.max(np.abs(fd)), 1e-12)
        assert rel < 1e-5


class TestAutoStep:
    def test_zero_design_fallback(self):
        hp = Hyperparams(**zero_lambdas())
        assert auto_step([np.zeros((3, 2))], np.eye(1), hp) == 1.0

    def test_orthonormal_columns(self):
        Q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((8, 3)))
        hp = Hyperparams(**zero_lambdas())
        assert np.isclose(auto_step([Q, Q], np.eye(2), hp), 0.5, rtol=1e-12)

    def test_lambda1_additivity(self):
        Q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((8, 3)))
        hp = Hyperparams(lambda1=1.5)
        step = auto_step([Q, Q], 2.0 * np.eye(2), hp)
        assert np.isclose(1 / step, 2.0 + 2 * 1.5 * 2.0, rtol=1e-12)


class TestUpdateInfluence:
    @pytest.mark.parametrize("seed", range(3))
    def test_nnls_single_contagion(self, seed):
        rng = np.random.default_rng(seed)
        M = rng.integers(0, 2, (30, 6)).astype(float)
        V = rng.standard_normal((30, 1)) * 2 + 1
        hp = Hyperparams(**zero_lambdas(), lag=1, inner_max=50_000, inner_tol=1e-12)
        I = update_influence(np.zeros((6, 1)), np.zeros((6, 1)), np.eye(1), [M], V, hp)
        ref = oracles.nnls_columns([M], V)
        f, f_ref = oracles.data_term([M], V, I), oracles.data_term([M], V, ref)
        assert f <= f_ref * (1 + 1e-6) + 1e-12
        assert np.all(I >= 0)

    def test_huge_nuclear_penalty_gives_zero(self):
        rng = np.random.default_rng(0)
        _, designs, V, _ = tiny_problem(rng)
        hp = Hyperparams(lambda4=1e8, lag=2)
        I = update_influence(rng.uniform(size=(6, 2)), np.zeros((6, 2)), np.eye(2),
                             designs, V, hp)
        np.testing.assert_array_equal(I, 0.0)

    def test_fixed_point(self):
        rng = np.random.default_rng(1)
        M = rng.standard_normal((12, 4))
        I0 = rng.uniform(0.5, 1, (4, 1))
        hp = Hyperparams(**zero_lambdas(), lag=1)
        I = update_influence(I0, np.zeros_like(I0), np.eye(1), [M], M @ I0, hp)
        assert np.linalg.norm(I - I0) <= 1e-6 * max(1, np.linalg.norm(I0))

    def test_step_size_error(self):
        rng = np.random.default_rng(2)
        _, designs, V, _ = tiny_problem(rng, noise=1.0)
        hp = Hyperparams(**zero_lambdas(), lag=2, step=1e4)
        with pytest.raises(StepSizeError):
            update_influence(np.ones((6, 2)), np.zeros((6, 2)), np.eye(2), designs, V, hp)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**31), st.floats(0, 5), st.floats(0, 5))
    def test_always_feasible(self, seed, l4, l5):
        rng = np.random.default_rng(seed)
        _, designs, V, _ = tiny_problem(rng, noise=2.0)
        hp = Hyperparams(lambda4=l4, lambda5=l5, lag=2, inner_max=50)
        I = update_influence(np.zeros((6, 2)), np.zeros((6, 2)), np.eye(2), designs, V, hp)
        assert np.all(I >= 0)


class TestFit:
    def test_noiseless_small_lambdas(self):
        rng = np.random.default_rng(0)
        _, designs, V, _ = tiny_problem(rng, N=4, K=3, L=2, T=30)
        hp = Hyperparams(1e-4, 1e-4, 1e-5, 1e-4, 1e-4, lag=2, inner_max=5000,
                         inner_tol=1e-10, outer_tol=1e-10)
        res = fit(designs, V, hp)
        resid = oracles.data_term(designs, V, res.influence)
        assert resid <= 1e-3 * np.sum(V ** 2)

    @pytest.mark.parametrize("seed", range(3))
    def test_zero_lambdas_single_contagion_is_nnls(self, seed):
        rng = np.random.default_rng(seed)
        M = rng.integers(0, 2, (25, 8)).astype(float)
        V = rng.uniform(-1, 4, (25, 1))
        hp = Hyperparams(**zero_lambdas(), lag=2, inner_max=50_000, inner_tol=1e-12)
        res = fit([M], V, hp)
        f = oracles.data_term([M], V, res.influence)
        f_ref = oracles.data_term([M], V, oracles.nnls_columns([M], V))
        assert abs(f - f_ref) <= 1e-4 * max(f_ref, 1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_trace_non_increasing(self, seed):
        cfg = SynthConfig(n_nodes=10, n_contagions=5, lag=3, horizon=12, rank=2, seed=seed)
        inst = gen_instance(cfg)
        designs = build_design(inst.log, 3)
        res = fit(designs, inst.volumes.values, Hyperparams(lag=3, lambda1=10.0, lambda4=5.0))
        trace = [res.initial_objective] + list(res.objective_trace)
        assert np.all(np.isfinite(trace))
        for prev, cur in zip(trace, trace[1:]):
            assert cur <= prev + 1e-8 * (1 + abs(prev))
        assert np.all(res.influence >= 0)

    def test_init_strategies(self):
        rng = np.random.default_rng(3)
        _, designs, V, _ = tiny_problem(rng)
        for init in ("ridge", "zeros", "random", np.ones((6, 2))):
            res = fit(designs, V, Hyperparams(lag=2, outer_max=2), init=init, random_state=0)
            assert np.all(res.influence >= 0)
        with pytest.raises(ValueError):
            fit(designs, V, Hyperparams(lag=2), init="bogus")


class TestEstimator:
    def test_sklearn_contract(self):
        est = CopulaInfluenceRegressor(lambda4=3.0, lag=2)
        params = est.get_params()
        assert params["lambda4"] == 3.0 and params["lag"] == 2
        assert clone(est).get_params() == params
        est.set_params(lambda1=5.0)
        assert est.lambda1 == 5.0

    def test_not_fitted(self):
        with pytest.raises(NotFittedError):
            CopulaInfluenceRegressor().predict([np.zeros((3, 2))])

    def test_fit_predict_on_log(self):
        rng = np.random.default_rng(0)
        log, designs, V, _ = tiny_problem(rng, N=3, K=2, L=2, T=10, noise=0.1)
        est = CopulaInfluenceRegressor(lag=2, outer_max=5).fit(log, V)
        assert est.influence_.shape == (6, 2)
        assert est.precision_.shape == (2, 2)
        assert est.n_nodes_ == 3
        pred = est.predict(log)
        np.testing.assert_array_equal(pred, design_predictions(designs, est.influence_))
        np.testing.assert_array_equal(est.predict(designs), pred)
        assert est.predict_next(log, 2).shape == (2, 2)
        assert np.isclose(est.score(log, V), -np.mean((pred - V) ** 2))

    def test_volumes_required_for_designs(self):
        with pytest.raises(ValueError):
            CopulaInfluenceRegressor().fit([np.zeros((3, 2))])

    def test_width_mismatch(self):
        rng = np.random.default_rng(1)
        log, designs, V, _ = tiny_problem(rng)
        est = CopulaInfluenceRegressor(lag=2, outer_max=2).fit(designs, V)
        with pytest.raises(ValueError):
            est.predict([np.zeros((8, 5))] * 2)

    def test_deterministic(self):
        rng = np.random.default_rng(2)
        _, designs, V, _ = tiny_problem(rng, noise=0.3)
        a = CopulaInfluenceRegressor(lag=2).fit(designs, V).influence_
        b = CopulaInfluenceRegressor(lag=2).fit(designs, V).influence_
        np.testing.assert_array_equal(a, b)
