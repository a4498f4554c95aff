# LassoService 单元测试
# LassoService Unit Tests

"""
LassoService 的单元测试。

测试覆盖：
- 软阈值与问题标准化
- 单个 λ 的坐标下降（正交设计闭式解、λ=0 退化为 OLS）
- 正则化路径与变量进入顺序
- K 折交叉验证
- 错误处理
"""

import numpy as np
import pytest

from src.config_manager import ConfigManager
from src.lasso_service import (
    DegenerateProblemError,
    FoldTooSmallError,
    LassoConvergenceError,
    LassoError,
    LassoProblem,
    LassoService,
    soft_threshold,
)


@pytest.fixture
def service():
    return LassoService(ConfigManager("nonexistent.yaml"))


@pytest.fixture
def orthogonal_problem():
    """两列正交且已标准化的设计，Gram 矩阵为单位阵"""
    X = np.array([[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]])
    y = np.array([3.0, 1.0, -1.0, -3.0])
    return LassoProblem.build(X, y, ["a", "b"])


@pytest.fixture
def linear_problem():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((120, 4))
    y = 1.5 + X @ np.array([2.0, -1.0, 0.0, 0.5]) + 0.1 * rng.standard_normal(120)
    return LassoProblem.build(X, y, ["x1", "x2", "x3", "x4"])


class TestSoftThreshold:
    """测试软阈值算子"""

    @pytest.mark.parametrize("value,threshold,expected", [
        (3.0, 1.0, 2.0),
        (-3.0, 1.0, -2.0),
        (0.5, 1.0, 0.0),
        (-1.0, 1.0, 0.0),
    ])
    def test_values(self, value, threshold, expected):
        assert soft_threshold(value, threshold) == expected


class TestLassoProblem:
    """测试问题构造"""

    def test_constant_column_dropped(self):
        """常数列被丢弃并记录"""
        X = np.column_stack([np.arange(5.0), np.full(5, 7.0)])
        problem = LassoProblem.build(X, np.arange(5.0) * 2, ["x", "const"])
        assert problem.names == ["x"]
        assert problem.dropped == ["const"]

    def test_standardized_columns(self, linear_problem):
        np.testing.assert_allclose(linear_problem.Xs.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(linear_problem.Xs.std(axis=0), 1.0, atol=1e-12)

    def test_too_few_rows(self):
        with pytest.raises(DegenerateProblemError):
            LassoProblem.build(np.ones((1, 2)), np.ones(1))

    def test_all_constant(self):
        with pytest.raises(DegenerateProblemError):
            LassoProblem.build(np.ones((4, 2)), np.arange(4.0))

    def test_non_finite(self):
        X = np.array([[1.0], [np.nan], [3.0]])
        with pytest.raises(DegenerateProblemError):
            LassoProblem.build(X, np.arange(3.0))


class TestSolve:
    """测试单个 λ 的求解"""

    def test_orthogonal_closed_form(self, service, orthogonal_problem):
        """正交设计下系数等于软阈值后的相关"""
        solution = service.solve(orthogonal_problem, 0.5)
        np.testing.assert_allclose(solution.coefficients, [1.5, 0.5], atol=1e-9)
        assert solution.intercept == pytest.approx(0.0, abs=1e-12)

    def test_lambda_max_gives_zero(self, service, linear_problem):
        """λ >= λ_max 时所有系数为 0，截距为均值"""
        lam = service.lambda_max(linear_problem)
        solution = service.solve(linear_problem, lam)
        assert not np.any(solution.coefficients)
        assert solution.intercept == pytest.approx(linear_problem.y.mean())

    def test_just_below_lambda_max(self, service, orthogonal_problem):
        """刚低于 λ_max 时恰好一个变量进入"""
        lam = service.lambda_max(orthogonal_problem)
        solution = service.solve(orthogonal_problem, lam * 0.99)
        assert np.count_nonzero(solution.coefficients) == 1
        assert solution.coefficients[0] != 0

    def test_zero_lambda_matches_least_squares(self, service, linear_problem):
        """λ = 0 时与最小二乘一致"""
        solution = service.solve(linear_problem, 0.0, tol=1e-12)
        design = np.column_stack([np.ones(linear_problem.n_rows), linear_problem.X])
        ols, *_ = np.linalg.lstsq(design, linear_problem.y, rcond=None)
        np.testing.assert_allclose(solution.coefficients, ols[1:], atol=1e-6)
        assert solution.intercept == pytest.approx(ols[0], abs=1e-6)

    def test_objective_non_increasing(self, service, linear_problem):
        """每一轮后目标函数不增"""
        solution = service.solve(linear_problem, 0.05)
        trace = np.array(solution.objective_trace)
        assert np.all(np.diff(trace) <= 1e-12)

    def test_convergence_error(self, service):
        """轮数不足时抛出收敛错误并携带最后一次迭代"""
        rng = np.random.default_rng(0)
        base = rng.standard_normal(50)
        X = np.column_stack([base, base + 1e-3 * rng.standard_normal(50)])
        problem = LassoProblem.build(X, base * 3, ["a", "b"])
        with pytest.raises(LassoConvergenceError) as info:
            service.solve(problem, 1e-4, tol=1e-14, max_sweeps=1)
        assert info.value.sweeps == 1

    def test_negative_lambda(self, service, linear_problem):
        with pytest.raises(LassoError):
            service.solve(linear_problem, -1.0)


class TestPath:
    """测试正则化路径"""

    def test_path_shape(self, service, linear_problem):
        path = service.path(linear_problem, num_lambdas=20, lambda_ratio=1e-3)
        assert len(path.points) == 20
        assert np.all(np.diff(path.lambdas) < 0)
        assert path.points[0].active_count == 0
        assert path.points[-1].active_count >= 3

    def test_fraction_explained_in_unit_interval(self, service, linear_problem):
        path = service.path(linear_problem, num_lambdas=10)
        for record in path.to_records():
            assert 0.0 <= record["frac_var_explained"] <= 1.0

    def test_first_k_variables(self, service, linear_problem):
        """最强的变量最先进入"""
        path = service.path(linear_problem, num_lambdas=50)
        ordering = service.first_k_variables(path, 2)
        assert ordering.names == ["x1", "x2"]
        assert not ordering.truncated

    def test_first_k_truncated(self, service, orthogonal_problem):
        path = service.path(orthogonal_problem, num_lambdas=10)
        ordering = service.first_k_variables(path, 5)
        assert ordering.names == ["a", "b"]
        assert ordering.truncated

    def test_first_k_zero(self, service, orthogonal_problem):
        path = service.path(orthogonal_problem, num_lambdas=10)
        assert service.first_k_variables(path, 0).names == []

    def test_constant_response(self, service):
        """响应为常数时 λ_max 为 0"""
        problem = LassoProblem.build(np.arange(10.0).reshape(5, 2), np.ones(5))
        with pytest.raises(DegenerateProblemError):
            service.path(problem)

    def test_invalid_grid(self, service, linear_problem):
        with pytest.raises(LassoError):
            service.path(linear_problem, num_lambdas=1)
        with pytest.raises(LassoError):
            service.path(linear_problem, lambda_ratio=1.5)


class TestCrossValidation:
    """测试交叉验证"""

    def test_deterministic_for_seed(self, service, linear_problem):
        """相同种子得到相同结果，与线程数无关"""
        a = service.cross_validate(linear_problem, folds=5, num_lambdas=15, seed=11, n_jobs=1)
        b = service.cross_validate(linear_problem, folds=5, num_lambdas=15, seed=11, n_jobs=4)
        np.testing.assert_array_equal(a.cv_mse, b.cv_mse)
        assert a.lambda_min == b.lambda_min

    def test_sparse_lambda_not_smaller(self, service, linear_problem):
        cv = service.cross_validate(linear_problem, folds=5, num_lambdas=15, seed=0)
        assert cv.lambda_sparse >= cv.lambda_min
        assert cv.fold_mse.shape == (5, 15)

    def test_fold_assignment_balanced(self, service):
        assignment = service.fold_assignment(23, 5, seed=2)
        sizes = np.bincount(assignment)
        assert sizes.max() - sizes.min() <= 1

    def test_too_many_folds(self, service, orthogonal_problem):
        with pytest.raises(FoldTooSmallError):
            service.cross_validate(orthogonal_problem, folds=10)

    def test_folds_below_two(self, service, linear_problem):
        with pytest.raises(FoldTooSmallError):
            service.cross_validate(linear_problem, folds=1)

    def test_solution_at_returns_nonzero(self, service, orthogonal_problem):
        coefficients = service.solution_at(orthogonal_problem, 1.5)
        assert list(coefficients) == ["a"]
        assert coefficients["a"] == pytest.approx(0.5, abs=1e-9)
