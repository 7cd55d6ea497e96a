import csv

import numpy as np
import pytest
from reference import naive_objective, random_dataset

from proxcsl import (
    OracleCache,
    Regularization,
    SolverConfig,
    SweepSpec,
    SyntheticSpec,
    evaluate,
    lambda_grid,
    local_gradient,
    objective_error,
    run_sweep,
    solve_local,
    support_metrics,
)
from proxcsl.data import LabeledDataset, SparseDesignMatrix
from proxcsl.harness import ORACLE_SOLVER


def small_spec(**kw):
    base = dict(
        synthetic=SyntheticSpec(n_samples=300, n_features=20, n_true_nonzeros=4, seed=8),
        partitions=3,
        k_updates=1,
        lambda_count=3,
        lambda_min_ratio=1e-2,
        replicates=2,
        seed=5,
        oracle=True,
    )
    base.update(kw)
    return SweepSpec(**base)


class TestLambdaGrid:
    def test_single_point_grid_is_anchor(self, rng):
        ds, _, _ = random_dataset(rng, 50, 6)
        spec = small_spec(lambda_count=1)
        grid = lambda_grid(ds, spec)
        lam_max = float(np.max(np.abs(local_gradient(ds, np.zeros(6)).g)))
        assert grid.shape == (1,)
        assert grid[0] == pytest.approx(lam_max, rel=1e-15)

    def test_anchor_zeroes_the_model(self, rng):
        ds, _, _ = random_dataset(rng, 80, 8)
        grid = lambda_grid(ds, small_spec(lambda_count=2))
        res = solve_local(ds, Regularization(float(grid[0])))
        assert np.array_equal(res.w, np.zeros(8))

    def test_log_spacing_constant_ratio(self, rng):
        ds, _, _ = random_dataset(rng, 50, 6)
        grid = lambda_grid(ds, small_spec(lambda_count=6, lambda_min_ratio=1e-3))
        ratios = grid[1:] / grid[:-1]
        assert np.allclose(ratios, ratios[0], rtol=1e-12)
        assert grid[-1] == pytest.approx(grid[0] * 1e-3, rel=1e-12)

    def test_degenerate_data_rejected(self):
        X = SparseDesignMatrix.from_dense(np.zeros((4, 3)))
        ds = LabeledDataset(X, np.array([0.0, 1.0, 0.0, 1.0]))
        with pytest.raises(ValueError):
            lambda_grid(ds, small_spec())


class TestEvaluate:
    def test_zero_model_predicts_class_zero(self, rng):
        ds, _, y = random_dataset(rng, 40, 5)
        acc, k = evaluate(np.zeros(5), ds)
        assert k == 0
        assert acc == pytest.approx(np.mean(y == 0.0))

    def test_perfect_separator(self):
        X = np.array([[1.0], [2.0], [-1.0], [-3.0]])
        y = np.array([1.0, 1.0, 0.0, 0.0])
        ds = LabeledDataset(SparseDesignMatrix.from_dense(X), y)
        acc, _ = evaluate(np.array([1.0]), ds)
        assert acc == 1.0

    def test_sign_flip_symmetry(self):
        X = np.array([[1.0], [2.0], [-1.0], [-3.0]])
        y = np.array([1.0, 1.0, 0.0, 0.0])
        ds = LabeledDataset(SparseDesignMatrix.from_dense(X), y)
        acc_pos, _ = evaluate(np.array([1.0]), ds)
        acc_neg, _ = evaluate(np.array([-1.0]), ds)
        assert acc_pos + acc_neg == pytest.approx(1.0)


class TestObjectiveError:
    def test_zero_at_oracle(self, rng):
        ds, _, _ = random_dataset(rng, 60, 6)
        reg = Regularization(0.02)
        w = solve_local(ds, reg, ORACLE_SOLVER).w
        from proxcsl import local_objective

        oracle = local_objective(ds, w, reg)
        assert abs(objective_error(w, ds, reg, oracle)) < 1e-10

    def test_zero_model_large_error_at_small_lambda(self, rng):
        ds, _, _ = random_dataset(rng, 60, 6)
        reg = Regularization(1e-4)
        w_opt = solve_local(ds, reg).w
        from proxcsl import local_objective

        oracle = local_objective(ds, w_opt, reg)
        assert objective_error(np.zeros(6), ds, reg, oracle) > 1.0

    def test_matches_independent_recomputation(self, rng):
        ds, X, y = random_dataset(rng, 25, 5)
        reg = Regularization(0.1, 0.02)
        w = rng.standard_normal(5) * 0.3
        oracle = 0.55
        expected = 100.0 * (naive_objective(X, y, w, reg.lambda1, reg.lambda2) - oracle) / oracle
        assert objective_error(w, ds, reg, oracle) == pytest.approx(expected, abs=1e-10)


class TestSupportMetrics:
    def test_exact_recovery(self):
        w = np.array([0.0, 1.0, -2.0, 0.0])
        assert support_metrics(w, w) == (0.0, 1.0)

    def test_zero_model_consensus(self, rng):
        w_star = np.zeros(1000)
        w_star[rng.choice(1000, 100, replace=False)] = 1.0
        l2, cons = support_metrics(np.zeros(1000), w_star)
        assert cons == pytest.approx(0.9)
        assert l2 == pytest.approx(np.linalg.norm(w_star))

    def test_complement_support(self):
        # model supported exactly on the complement: no coordinate agrees
        d, s = 1000, 100
        w_star = np.zeros(d)
        w_star[:s] = 1.0
        model = np.zeros(d)
        model[s:] = 1.0
        _, cons = support_metrics(model, w_star)
        agree = sum(1 for j in range(d) if (model[j] != 0) == (w_star[j] != 0))
        assert agree == 0
        assert cons == pytest.approx(agree / d)

    def test_partial_overlap_counting_oracle(self, rng):
        d = 200
        w_star = np.zeros(d)
        w_star[rng.choice(d, 30, replace=False)] = rng.standard_normal(30)
        model = np.zeros(d)
        model[rng.choice(d, 50, replace=False)] = rng.standard_normal(50)
        _, cons = support_metrics(model, w_star)
        agree = sum(1 for j in range(d) if (model[j] != 0) == (w_star[j] != 0))
        assert cons == pytest.approx(agree / d)


class TestOracleCache:
    def test_cache_round_trip(self, rng, tmp_path):
        ds, _, _ = random_dataset(rng, 50, 6)
        reg = Regularization(0.05)
        cache = OracleCache(tmp_path / "cache")
        w1, obj1 = cache.solve(ds, reg, ORACLE_SOLVER)
        files = list((tmp_path / "cache").glob("*.npz"))
        assert len(files) == 1
        w2, obj2 = cache.solve(ds, reg, ORACLE_SOLVER)
        assert np.array_equal(w1, w2) and obj1 == obj2
        cache.solve(ds, Regularization(0.01), ORACLE_SOLVER)
        assert len(list((tmp_path / "cache").glob("*.npz"))) == 2


class TestRunSweep:
    def read(self, path):
        with open(path, newline="") as fh:
            return list(csv.reader(fh))

    def test_row_cardinality_and_sorting(self, tmp_path):
        spec = small_spec(oracle=False, replicates=1)
        paths = run_sweep(spec, tmp_path / "out")
        rows = self.read(paths["metrics"])
        header, body = rows[0], rows[1:]
        assert header[0] == "method"
        # 3 methods x 3 lambdas
        assert len(body) == 9
        methods = [r[0] for r in body]
        assert methods == sorted(methods)
        for m in set(methods):
            lams = [float(r[1]) for r in body if r[0] == m]
            assert lams == sorted(lams, reverse=True)

    def test_single_replicate_empty_std(self, tmp_path):
        spec = small_spec(oracle=False, replicates=1)
        paths = run_sweep(spec, tmp_path / "out")
        body = self.read(paths["metrics"])[1:]
        assert all(r[3] == "" and r[5] == "" for r in body)

    def test_std_present_with_replicates(self, tmp_path):
        spec = small_spec(oracle=False, replicates=2, lambda_count=2)
        paths = run_sweep(spec, tmp_path / "out")
        body = self.read(paths["metrics"])[1:]
        assert all(r[3] != "" and r[5] != "" for r in body)

    def test_byte_identical_reruns(self, tmp_path):
        spec = small_spec()
        a = run_sweep(spec, tmp_path / "a")
        b = run_sweep(spec, tmp_path / "b")
        assert a["metrics"].read_bytes() == b["metrics"].read_bytes()
        assert a["convergence"].read_bytes() == b["convergence"].read_bytes()

    def test_lambda_max_rows_are_zero_models(self, tmp_path):
        spec = small_spec()
        paths = run_sweep(spec, tmp_path / "out")
        body = self.read(paths["metrics"])[1:]
        lam_max = max(float(r[1]) for r in body)
        top = [r for r in body if float(r[1]) == lam_max]
        assert top and all(float(r[2]) == 0.0 for r in top)

    def test_oracle_rows_and_convergence_columns(self, tmp_path):
        spec = small_spec()
        paths = run_sweep(spec, tmp_path / "out")
        body = self.read(paths["metrics"])[1:]
        assert any(r[0] == "oracle" for r in body)
        conv = self.read(paths["convergence"])
        assert conv[0] == [
            "lambda",
            "replicate",
            "iteration",
            "objective_error",
            "nnz",
            "l2_distance",
            "support_consensus",
        ]
        # synthetic run: distance/consensus populated
        assert all(row[5] != "" and row[6] != "" for row in conv[1:])
        timing = self.read(paths["timing"])
        assert timing[0][3:] == [
            "initial_estimator",
            "broadcast_w",
            "collect_grads",
            "compute_global_grad",
            "csl_update",
            "single_outer_step",
        ]

    def test_oracle_dominates_random_guess_on_separable_data(self, tmp_path, rng):
        # weakly separable synthetic task: oracle accuracy should beat the
        # majority-class rate at every grid point below the anchor
        spec = small_spec(
            synthetic=SyntheticSpec(n_samples=400, n_features=10, n_true_nonzeros=3, seed=3),
            lambda_count=4,
            replicates=1,
        )
        paths = run_sweep(spec, tmp_path / "out")
        body = self.read(paths["metrics"])[1:]
        oracle_rows = [r for r in body if r[0] == "oracle"]
        lam_max = max(float(r[1]) for r in oracle_rows)
        for row in oracle_rows:
            if float(row[1]) < lam_max:
                assert float(row[4]) >= 0.5

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            SweepSpec(lambda_count=0, synthetic=SyntheticSpec(10, 5, 1))
        with pytest.raises(ValueError):
            SweepSpec(replicates=0, synthetic=SyntheticSpec(10, 5, 1))
        with pytest.raises(ValueError):
            SweepSpec()  # neither source
        with pytest.raises(ValueError):
            SweepSpec(data_path="x", synthetic=SyntheticSpec(10, 5, 1))  # both
