import numpy as np
import pytest

from objfit.fitting import (
    L1,
    L2SQ,
    LINF,
    assemble_kkt_system,
    fit_objective,
    predict,
    predict_many,
    residual_norm_of,
)
from objfit.problems import (
    TemplateTruth,
    diag_quadratic_template,
    generate_dataset,
    generate_random_pop,
    nonneg_constraints,
    reference_tpop,
    sqrt_utility_template,
    quadratic_utility_template,
)


def utility_system(n=2, K=12, seed=0, c_true=None):
    c_true = np.ones(n) if c_true is None else np.asarray(c_true, float)
    t = sqrt_utility_template(n)
    cons = nonneg_constraints(n)
    truth = TemplateTruth(t, c_true, cons)
    ds = generate_dataset(truth, [[5, 20]] * n, K, seed=seed)
    return t, cons, ds


def pop_system(seed=0, K=15, box=None):
    pop = reference_tpop()
    box = [[4, 6], [-6, -4]] if box is None else box
    ds = generate_dataset(pop, box, K, seed=seed)
    t = diag_quadratic_template(2, d0=lambda u: pop.H @ u + pop.c)
    return pop, t, ds


class TestAssembly:
    def test_row_counts_for_utility(self):
        n, K = 3, 7
        t, cons, ds = utility_system(n=n, K=K)
        sys = assemble_kkt_system(t, cons, ds)
        assert sys.n_stationarity_rows == K * n  # all observations interior
        assert sys.n_complementarity_rows == K * n
        assert sys.m == n and sys.J == n

    def test_true_parameters_zero_residual(self):
        t, cons, ds = utility_system(n=2, K=20, seed=3)
        sys = assemble_kkt_system(t, cons, ds)
        val = residual_norm_of(sys, np.ones(2), ds.duals, L1)
        assert val <= 1e-6

    def test_true_parameters_zero_residual_pop(self):
        pop, t, ds = pop_system(seed=5, K=25)
        sys = assemble_kkt_system(t, cons := pop.constraints(), ds)
        val = residual_norm_of(sys, np.diag(pop.Q), ds.duals, L1)
        assert val <= 1e-6

    def test_active_constraint_weight_is_zero(self):
        pop, t, ds = pop_system(seed=1, K=5)
        sys = assemble_kkt_system(t, pop.constraints(), ds)
        # constraint 4 is active across the sampled box
        for k in range(ds.K):
            assert sys.w[k][3] <= 1e-9

    def test_sqrt_singularity_dropped(self):
        # c_true = 0 puts every observation at the boundary x = 0 where the
        # sqrt gradient is singular: all stationarity rows must be dropped
        t, cons, _ = utility_system(n=2, K=1)
        U = np.array([[7.0, 9.0], [10.0, 12.0]])
        X = np.zeros((2, 2))
        from objfit.problems import Dataset
        ds = Dataset(U, X)
        sys = assemble_kkt_system(t, cons, ds)
        assert sys.n_stationarity_rows == 0
        assert sys.dropped_rows == 4


class TestFitUtility:
    @pytest.mark.parametrize("K", [10, 40, 100])
    def test_io_perfect_recovers_truth(self, K):
        t, cons, ds = utility_system(n=2, K=K, seed=K)
        sys = assemble_kkt_system(t, cons, ds)
        fit = fit_objective(sys, L1)
        assert fit.residual_norm <= 1e-6
        np.testing.assert_allclose(fit.c_hat, np.ones(2), atol=1e-5)
        # downstream prediction error on fresh parameters
        test = generate_dataset(TemplateTruth(t, np.ones(2), cons),
                                [[5, 20]] * 2, 50, seed=K + 1)
        preds = predict_many(t, fit.c_hat, cons, test.U)
        rel = np.linalg.norm(preds - test.X, axis=1) / np.linalg.norm(test.X, axis=1)
        assert np.mean(rel) < 1e-3

    def test_k_insensitivity(self):
        errs = {}
        for K in (10, 500):
            t, cons, ds = utility_system(n=2, K=K, seed=7)
            sys = assemble_kkt_system(t, cons, ds)
            fit = fit_objective(sys, L1)
            test = generate_dataset(TemplateTruth(t, np.ones(2), cons),
                                    [[5, 20]] * 2, 100, seed=123)
            preds = predict_many(t, fit.c_hat, cons, test.U)
            rel = np.linalg.norm(preds - test.X, axis=1) / np.linalg.norm(test.X, axis=1)
            errs[K] = float(np.mean(rel))
        assert abs(errs[10] - errs[500]) < 1e-3

    def test_imperfect_template_has_residual_but_fits(self):
        t, cons, ds = utility_system(n=2, K=30, seed=2)
        t_imp = quadratic_utility_template(2)
        sys = assemble_kkt_system(t_imp, cons, ds)
        fit = fit_objective(sys, L1)
        assert fit.residual_norm > 1e-4  # mis-specified, cannot be made exact
        assert fit.c_hat[0] <= 1e-12     # q stays concave-side
        assert fit.c_hat[1] >= -1e-12
        assert np.all(fit.lambda_hat >= -1e-8)


class TestFitPop:
    def test_io_perfect_on_reference_data(self):
        pop, t, ds = pop_system(seed=11, K=40)
        sys = assemble_kkt_system(t, pop.constraints(), ds)
        fit = fit_objective(sys, L1)
        assert fit.residual_norm <= 1e-6
        # x2 is interior so its curvature is identified exactly
        assert fit.c_hat[1] == pytest.approx(19.4545, abs=1e-6)
        # x1 is pinned by an active constraint: any coefficient at or below
        # the data-implied ceiling is optimal, predictions are unaffected
        test = generate_dataset(pop, [[4, 6], [-6, -4]], 80, seed=99)
        preds = predict_many(t, fit.c_hat, pop.constraints(), test.U)
        rel = np.linalg.norm(preds - test.X, axis=1) / np.linalg.norm(test.X, axis=1)
        assert np.mean(rel) < 1e-3

    def test_residual_never_exceeds_truth(self):
        pop, t, ds = pop_system(seed=21, K=30)
        sys = assemble_kkt_system(t, pop.constraints(), ds)
        fit = fit_objective(sys, L1)
        truth_val = residual_norm_of(sys, np.diag(pop.Q), ds.duals, L1)
        assert fit.residual_norm <= truth_val + 1e-8

    def test_mean_based_template_fits(self):
        pop, _, ds = pop_system(seed=31, K=60)
        t_mean = diag_quadratic_template(2, d0=np.array([6.0, -9.0]))
        sys = assemble_kkt_system(t_mean, pop.constraints(), ds)
        fit = fit_objective(sys, L1)
        assert np.all(fit.lambda_hat >= -1e-8)
        assert fit.c_hat[1] == pytest.approx(19.45, rel=0.2)


class TestRouteEquivalence:
    @pytest.mark.parametrize("seed", [0, 1, 2, 3])
    def test_reduced_matches_dense_pop(self, seed):
        pop, t, ds = pop_system(seed=seed, K=8)
        sys = assemble_kkt_system(t, pop.constraints(), ds)
        fr = fit_objective(sys, L1, method="reduced")
        fd = fit_objective(sys, L1, method="dense")
        assert fr.objective_value == pytest.approx(fd.objective_value, abs=1e-7)
        assert fr.residual_norm == pytest.approx(fd.residual_norm, abs=1e-7)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_reduced_matches_dense_random_pop(self, seed):
        pop = generate_random_pop(2, 4, 2, seed=100 + seed)
        ds = generate_dataset(pop, pop.u_box, 10, seed=seed)
        # deliberately mis-specified template so residuals are nonzero
        t = diag_quadratic_template(2, d0=np.array([0.5, 0.5]))
        sys = assemble_kkt_system(t, pop.constraints(), ds)
        fr = fit_objective(sys, L1, method="reduced")
        fd = fit_objective(sys, L1, method="dense")
        assert fr.residual_norm == pytest.approx(fd.residual_norm, abs=1e-6)

    def test_reduced_matches_dense_utility(self):
        t, cons, ds = utility_system(n=2, K=15, seed=9)
        t_imp = quadratic_utility_template(2)
        sys = assemble_kkt_system(t_imp, cons, ds)
        fr = fit_objective(sys, L1, method="reduced")
        fd = fit_objective(sys, L1, method="dense")
        assert fr.residual_norm == pytest.approx(fd.residual_norm, abs=1e-6)


class TestNormsAndNormalization:
    def test_single_observation_single_basis_closed_form(self):
        # one interior observation, one coefficient: the fit zeroes the
        # stationarity row exactly: p - c / (2 sqrt(x)) = 0
        t, cons, _ = utility_system(n=1)
        from objfit.problems import Dataset
        p, x = 8.0, 0.01
        ds = Dataset(np.array([[p]]), np.array([[x]]))
        sys = assemble_kkt_system(t, cons, ds)
        fit = fit_objective(sys, L1)
        assert fit.residual_norm <= 1e-9
        assert fit.c_hat[0] == pytest.approx(2.0 * p * np.sqrt(x), abs=1e-6)

    def test_homogeneous_needs_normalization(self):
        pop, _, ds = pop_system(seed=41, K=20)
        t_h = diag_quadratic_template(2)  # no linear part at all
        assert t_h.homogeneous
        sys = assemble_kkt_system(t_h, pop.constraints(), ds)
        fit = fit_objective(sys, L1)
        assert fit.normalized
        assert np.sum(fit.c_hat) == pytest.approx(t_h.J, abs=1e-6)
        assert np.linalg.norm(fit.c_hat) > 1e-3  # trivial zero solution excluded

    def test_homogeneous_scaling_invariance(self):
        pop, _, ds = pop_system(seed=43, K=20)
        t_h = diag_quadratic_template(2)
        sys = assemble_kkt_system(t_h, pop.constraints(), ds)
        fit = fit_objective(sys, L1)
        test_u = np.array([[4.5, -5.5], [5.5, -4.5], [5.0, -5.0]])
        base = predict_many(t_h, fit.c_hat, pop.constraints(), test_u)
        for alpha in (0.5, 2.0, 7.0):
            scaled = predict_many(t_h, alpha * fit.c_hat, pop.constraints(), test_u)
            np.testing.assert_allclose(scaled, base, atol=1e-6)

    def test_linf_also_zero_on_correct_template(self):
        t, cons, ds = utility_system(n=2, K=10, seed=17)
        sys = assemble_kkt_system(t, cons, ds)
        f1 = fit_objective(sys, L1)
        finf = fit_objective(sys, LINF)
        assert f1.residual_norm <= 1e-6
        assert finf.residual_norm <= 1e-6

    def test_l2sq_route(self):
        t, cons, ds = utility_system(n=2, K=8, seed=19)
        sys = assemble_kkt_system(t, cons, ds)
        fit = fit_objective(sys, L2SQ)
        assert fit.norm_kind == L2SQ
        assert fit.residual_norm <= 1e-8
        np.testing.assert_allclose(fit.c_hat, np.ones(2), atol=1e-3)

    def test_fit_result_json(self):
        t, cons, ds = utility_system(n=2, K=5, seed=23)
        sys = assemble_kkt_system(t, cons, ds)
        fit = fit_objective(sys, L1)
        import json
        payload = json.loads(fit.to_json())
        assert set(payload) == {"c_hat", "residual_norm", "norm_kind", "normalized"}
        assert payload["norm_kind"] == "l1"


class TestPredict:
    def test_predict_with_true_coefficients(self):
        pop, t, ds = pop_system(seed=51, K=5)
        from objfit.problems import forward_solve
        u = np.array([4.8, -5.1])
        x = predict(t, np.diag(pop.Q), pop.constraints(), u)
        np.testing.assert_allclose(x, forward_solve(pop, u).x, atol=1e-6)

    def test_predict_zero_homogeneous_rejected(self):
        t_h = diag_quadratic_template(2)
        pop = reference_tpop()
        with pytest.raises(ValueError):
            predict(t_h, np.zeros(2), pop.constraints(), np.array([5.0, -5.0]))

    def test_predict_out_of_range_coefficient_rejected(self):
        t, cons, _ = utility_system(n=2)
        with pytest.raises(ValueError):
            predict(t, np.array([-1.0, 1.0]), cons, np.array([8.0, 8.0]))
