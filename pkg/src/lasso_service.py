# LASSO 服务
# Lasso Service

"""
LASSO 服务模块 - L1 惩罚最小二乘、正则化路径与交叉验证。

目标函数（拉格朗日形式，截距不惩罚）：
    (1 / 2N) * ||y - a0 - X a||^2 + λ * ||a||_1

λ 越大解越稀疏；路径从 λ_max（全零解）开始向下排列，与“允许进入的变量数”递增的图形顺序一致。

支持功能：
- 列标准化（总体标准差），常数列带警告丢弃
- 协方差更新的循环坐标下降 + 软阈值
- 几何 λ 网格上的热启动路径
- K 折交叉验证，给出 λ_min 与一倍标准误规则下的 λ_sparse
- 按进入活跃集的先后给出前 k 个变量
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from src.config_manager import ConfigManager
from src.models import (
    CrossValidationResult,
    LassoPath,
    LassoPathPoint,
    VariableOrdering,
)

# 配置日志
logger = logging.getLogger(__name__)


class LassoError(Exception):
    """LASSO 错误异常基类"""
    pass


class LassoConvergenceError(LassoError):
    """
    坐标下降在最大迭代轮数内未收敛。

    Attributes:
        lambda_: 出错时的 λ
        coefficients: 最后一次迭代的原始单位系数
        intercept: 最后一次迭代的截距
        sweeps: 已执行的轮数
    """

    def __init__(self, lambda_: float, coefficients: np.ndarray, intercept: float, sweeps: int):
        self.lambda_ = lambda_
        self.coefficients = coefficients
        self.intercept = intercept
        self.sweeps = sweeps
        super().__init__(
            f"Coordinate descent did not converge at lambda={lambda_:.6g} after {sweeps} sweeps"
        )


class FoldTooSmallError(LassoError):
    """交叉验证某一折的行数少于 2"""
    pass


class DegenerateProblemError(LassoError):
    """问题退化：行数不足、没有非常数列或响应为常数"""
    pass


def soft_threshold(value: float, threshold: float) -> float:
    """
    软阈值算子 sign(v) * max(|v| - t, 0)。

    Examples:
        >>> soft_threshold(0.7, 0.2)
        0.49999999999999994
        >>> soft_threshold(-0.1, 0.2)
        0.0
    """
    if value > threshold:
        return value - threshold
    if value < -threshold:
        return value + threshold
    return 0.0


@dataclass
class LassoProblem:
    """
    标准化后的 LASSO 问题。

    Attributes:
        X: 原始单位设计矩阵（仅保留非常数列）
        y: 响应向量
        names: 保留的列名
        dropped: 因标准差为 0 被丢弃的列名
        means / scales: 每列的均值与总体标准差
        Xs: 标准化设计矩阵
        y_mean / y_var: 响应均值与总体方差
    """
    X: np.ndarray
    y: np.ndarray
    names: list[str]
    dropped: list[str]
    means: np.ndarray
    scales: np.ndarray
    Xs: np.ndarray
    y_mean: float
    y_var: float
    gram: np.ndarray = field(repr=False, default=None)
    xty: np.ndarray = field(repr=False, default=None)
    yty: float = 0.0

    @classmethod
    def build(cls, X: np.ndarray, y: np.ndarray, names: Optional[list[str]] = None) -> "LassoProblem":
        """
        构造问题：丢弃常数列并标准化。

        Args:
            X: N×n 设计矩阵
            y: 长度 N 的响应
            names: 列名，默认 x0, x1, ...

        Raises:
            DegenerateProblemError: N < 2 或没有非常数列
        """
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float).ravel()
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise DegenerateProblemError(f"Design shape {X.shape} does not match response length {y.shape[0]}")
        if X.shape[0] < 2:
            raise DegenerateProblemError(f"At least 2 observations are required, got {X.shape[0]}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DegenerateProblemError("Design and response must be finite")
        names = list(names) if names is not None else [f"x{j}" for j in range(X.shape[1])]

        means = X.mean(axis=0)
        scales = X.std(axis=0)
        constant = scales <= 1e-12 * np.maximum(1.0, np.abs(means))
        dropped = [n for n, c in zip(names, constant) if c]
        if dropped:
            logger.warning(f"丢弃 {len(dropped)} 个常数列: {dropped}")
        keep = ~constant
        if not keep.any():
            raise DegenerateProblemError("No non-constant columns remain after standardization")

        X = X[:, keep]
        means = means[keep]
        scales = scales[keep]
        Xs = (X - means) / scales
        n_rows = X.shape[0]
        y_mean = float(y.mean())
        yc = y - y_mean
        return cls(
            X=X,
            y=y,
            names=[n for n, k in zip(names, keep) if k],
            dropped=dropped,
            means=means,
            scales=scales,
            Xs=Xs,
            y_mean=y_mean,
            y_var=float(np.mean(yc ** 2)),
            gram=Xs.T @ Xs / n_rows,
            xty=Xs.T @ yc / n_rows,
            yty=float(yc @ yc / n_rows),
        )

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def objective(self, beta_std: np.ndarray, lambda_: float) -> float:
        """标准化坐标下的惩罚目标值"""
        quad = self.yty - 2.0 * self.xty @ beta_std + beta_std @ self.gram @ beta_std
        return 0.5 * max(float(quad), 0.0) + lambda_ * float(np.abs(beta_std).sum())

    def unstandardize(self, beta_std: np.ndarray) -> tuple[np.ndarray, float]:
        """标准化系数 → (原始单位系数, 截距)"""
        coefficients = beta_std / self.scales
        intercept = self.y_mean - float(coefficients @ self.means)
        return coefficients, intercept

    def predict(self, coefficients: np.ndarray, intercept: float, X: Optional[np.ndarray] = None) -> np.ndarray:
        X = self.X if X is None else np.asarray(X, dtype=float)
        return intercept + X @ coefficients


@dataclass
class LassoSolution:
    """单个 λ 的解"""
    lambda_: float
    coefficients: np.ndarray
    intercept: float
    beta_std: np.ndarray
    sweeps: int
    objective_trace: list[float]


class LassoService:
    """
    LASSO 服务。

    Attributes:
        config: 配置管理器实例，提供网格长度、收敛阈值、折数等默认值

    Example:
        >>> service = LassoService(ConfigManager())
        >>> problem = LassoProblem.build(X, y, names)
        >>> path = service.path(problem)
        >>> cv = service.cross_validate(problem, folds=10, seed=0)
    """

    def __init__(self, config: ConfigManager):
        self.config = config
        self.defaults = config.get_lasso_defaults()

    def lambda_max(self, p: LassoProblem) -> float:
        """
        使全部斜率为零的最小 λ：max_j |<x_j, y - ȳ>| / N（标准化列）。
        """
        if p.n_features == 0:
            return 0.0
        return float(np.max(np.abs(p.xty)))

    def solve(
        self,
        p: LassoProblem,
        lambda_: float,
        tol: Optional[float] = None,
        max_sweeps: Optional[int] = None,
        warm_start: Optional[np.ndarray] = None,
    ) -> LassoSolution:
        """
        循环坐标下降求解单个 λ。

        收敛条件：一整轮中标准化系数的最大变化 < tol。

        Args:
            p: 问题
            lambda_: 惩罚权重（≥ 0）
            tol: 收敛阈值（> 0），None 时取配置
            max_sweeps: 最大轮数，None 时取配置
            warm_start: 标准化坐标下的初始系数

        Returns:
            LassoSolution

        Raises:
            LassoError: 参数不合法
            LassoConvergenceError: 超过最大轮数仍未收敛（附最后一次迭代）
        """
        tol = self.defaults["tol"] if tol is None else tol
        max_sweeps = self.defaults["max_sweeps"] if max_sweeps is None else max_sweeps
        if lambda_ < 0:
            raise LassoError(f"lambda must be >= 0, got {lambda_}")
        if tol <= 0:
            raise LassoError(f"tol must be > 0, got {tol}")

        n = p.n_features
        if lambda_ >= self.lambda_max(p):
            zeros = np.zeros(n)
            coefficients, intercept = p.unstandardize(zeros)
            return LassoSolution(lambda_, coefficients, intercept, zeros, 0, [p.objective(zeros, lambda_)])

        beta = np.zeros(n) if warm_start is None else np.array(warm_start, dtype=float)
        gram, xty = p.gram, p.xty
        # 当前的 G @ beta，随坐标更新增量维护
        g_beta = gram @ beta
        trace = [p.objective(beta, lambda_)]
        for sweep in range(1, max_sweeps + 1):
            max_change = 0.0
            for j in range(n):
                old = beta[j]
                rho = xty[j] - g_beta[j] + gram[j, j] * old
                new = soft_threshold(rho, lambda_) / gram[j, j]
                if new != old:
                    g_beta += gram[:, j] * (new - old)
                    beta[j] = new
                    max_change = max(max_change, abs(new - old))
            trace.append(p.objective(beta, lambda_))
            if max_change < tol:
                coefficients, intercept = p.unstandardize(beta)
                logger.debug(f"λ={lambda_:.6g} 在第 {sweep} 轮收敛")
                return LassoSolution(lambda_, coefficients, intercept, beta, sweep, trace)

        coefficients, intercept = p.unstandardize(beta)
        raise LassoConvergenceError(lambda_, coefficients, intercept, max_sweeps)

    def lambda_grid(self, lambda_max: float, num_lambdas: int, lambda_ratio: float) -> np.ndarray:
        """从 λ_max 到 λ_max·ratio 的几何网格（严格递减）"""
        if num_lambdas < 2:
            raise LassoError(f"num_lambdas must be >= 2, got {num_lambdas}")
        if not 0 < lambda_ratio < 1:
            raise LassoError(f"lambda_ratio must lie in (0, 1), got {lambda_ratio}")
        if lambda_max <= 0:
            raise DegenerateProblemError(
                "lambda_max is 0: the response is constant or orthogonal to every column"
            )
        exponents = np.arange(num_lambdas) / (num_lambdas - 1)
        grid = lambda_max * lambda_ratio ** exponents
        grid[0] = lambda_max
        return grid

    def path(
        self,
        p: LassoProblem,
        num_lambdas: Optional[int] = None,
        lambda_ratio: Optional[float] = None,
        tol: Optional[float] = None,
        max_sweeps: Optional[int] = None,
    ) -> LassoPath:
        """
        计算正则化路径（热启动）。

        Returns:
            LassoPath: 从 λ_max 开始，λ 严格递减

        Raises:
            LassoConvergenceError: 某个 λ 未收敛（携带该 λ）
        """
        num_lambdas = self.defaults["num_lambdas"] if num_lambdas is None else num_lambdas
        lambda_ratio = self.defaults["lambda_ratio"] if lambda_ratio is None else lambda_ratio
        grid = self.lambda_grid(self.lambda_max(p), num_lambdas, lambda_ratio)

        points = []
        beta = np.zeros(p.n_features)
        for lam in grid:
            solution = self.solve(p, float(lam), tol=tol, max_sweeps=max_sweeps, warm_start=beta)
            beta = solution.beta_std
            points.append(self._point(p, solution))
        logger.info(
            f"LASSO 路径: {len(points)} 个 λ，最终活跃变量 {points[-1].active_count}/{p.n_features}"
        )
        return LassoPath(variables=list(p.names), points=points, y_variance=p.y_var)

    def _point(self, p: LassoProblem, solution: LassoSolution) -> LassoPathPoint:
        residual = p.y - p.predict(solution.coefficients, solution.intercept)
        mse = float(np.mean(residual ** 2))
        frac = 1.0 - mse / p.y_var if p.y_var > 0 else 0.0
        return LassoPathPoint(
            lambda_=solution.lambda_,
            coefficients=solution.coefficients,
            intercept=solution.intercept,
            active_count=int(np.count_nonzero(solution.beta_std)),
            train_mse=mse,
            frac_var_explained=min(max(frac, 0.0), 1.0),
        )

    def fold_assignment(self, n_rows: int, folds: int, seed: int) -> np.ndarray:
        """给定种子的确定性分折：随机排列后按下标取模"""
        order = np.random.default_rng(seed).permutation(n_rows)
        assignment = np.empty(n_rows, dtype=int)
        assignment[order] = np.arange(n_rows) % folds
        return assignment

    def cross_validate(
        self,
        p: LassoProblem,
        folds: Optional[int] = None,
        lambdas: Optional[np.ndarray] = None,
        num_lambdas: Optional[int] = None,
        lambda_ratio: Optional[float] = None,
        seed: int = 0,
        n_jobs: Optional[int] = None,
        tol: Optional[float] = None,
        max_sweeps: Optional[int] = None,
    ) -> CrossValidationResult:
        """
        K 折交叉验证选择 λ。

        每一折在训练部分重新标准化，沿同一个 λ 网格热启动求解，再计算折外 MSE。
        各折可并行，结果按折序合并，与线程数无关。

        Args:
            p: 问题
            folds: 折数（≥ 2），None 时取配置
            lambdas: 自定义 λ 网格；None 时按全样本 λ_max 生成
            seed: 分折随机种子
            n_jobs: 线程数，None 时取配置

        Returns:
            CrossValidationResult

        Raises:
            FoldTooSmallError: 折数不合法或某折少于 2 行
        """
        folds = self.defaults["folds"] if folds is None else folds
        n_jobs = self.config.get_n_jobs() if n_jobs is None else max(1, n_jobs)
        if folds < 2:
            raise FoldTooSmallError(f"folds must be >= 2, got {folds}")
        if p.n_rows < folds:
            raise FoldTooSmallError(f"{p.n_rows} rows cannot be split into {folds} folds")

        if lambdas is None:
            grid = self.lambda_grid(
                self.lambda_max(p),
                self.defaults["num_lambdas"] if num_lambdas is None else num_lambdas,
                self.defaults["lambda_ratio"] if lambda_ratio is None else lambda_ratio,
            )
        else:
            grid = np.sort(np.asarray(lambdas, dtype=float).ravel())[::-1]
            if grid.size == 0 or np.any(grid < 0):
                raise LassoError("lambdas must be a non-empty list of non-negative values")

        assignment = self.fold_assignment(p.n_rows, folds, seed)
        sizes = np.bincount(assignment, minlength=folds)
        if np.any(sizes < 2):
            raise FoldTooSmallError(f"Fold sizes {sizes.tolist()} include a fold with fewer than 2 rows")

        def run_fold(k: int) -> np.ndarray:
            return self._fold_mse(p, assignment == k, grid, tol, max_sweeps)

        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            futures = [pool.submit(run_fold, k) for k in range(folds)]
            fold_mse = np.vstack([f.result() for f in futures])

        cv_mse = fold_mse.mean(axis=0)
        cv_se = fold_mse.std(axis=0, ddof=1) / np.sqrt(folds)
        best = int(np.argmin(cv_mse))
        limit = cv_mse[best] + cv_se[best]
        sparse = int(np.nonzero(cv_mse <= limit)[0][0])
        logger.info(
            f"交叉验证: {folds} 折，λ_min={grid[best]:.6g}，λ_sparse={grid[sparse]:.6g}"
        )
        return CrossValidationResult(
            lambdas=grid,
            cv_mse=cv_mse,
            cv_se=cv_se,
            lambda_min=float(grid[best]),
            lambda_sparse=float(grid[sparse]),
            folds=folds,
            seed=seed,
            fold_mse=fold_mse,
        )

    def _fold_mse(
        self,
        p: LassoProblem,
        test_mask: np.ndarray,
        grid: np.ndarray,
        tol: Optional[float],
        max_sweeps: Optional[int],
    ) -> np.ndarray:
        train = LassoProblem.build(p.X[~test_mask], p.y[~test_mask], p.names)
        kept = [p.names.index(n) for n in train.names]
        X_test = p.X[test_mask][:, kept]
        y_test = p.y[test_mask]
        beta = np.zeros(train.n_features)
        errors = np.empty(len(grid))
        for i, lam in enumerate(grid):
            solution = self.solve(train, float(lam), tol=tol, max_sweeps=max_sweeps, warm_start=beta)
            beta = solution.beta_std
            residual = y_test - train.predict(solution.coefficients, solution.intercept, X_test)
            errors[i] = np.mean(residual ** 2)
        return errors

    def solution_at(self, p: LassoProblem, lambda_: float, tol: Optional[float] = None) -> dict[str, float]:
        """给定 λ 的非零系数（变量名 → 原始单位系数）"""
        solution = self.solve(p, lambda_, tol=tol)
        return {
            name: float(c) for name, c in zip(p.names, solution.coefficients) if c != 0.0
        }

    def first_k_variables(self, path: LassoPath, k: Optional[int] = None) -> VariableOrdering:
        """
        按首次进入活跃集的 λ 排列变量，取前 k 个。

        同时进入时按列顺序。进入的变量不足 k 个时返回全部并标记 truncated。
        """
        k = self.defaults["first_k"] if k is None else k
        if k <= 0:
            return VariableOrdering(names=[], truncated=False)
        entry: dict[int, int] = {}
        for step, point in enumerate(path.points):
            for j in np.nonzero(point.coefficients)[0]:
                entry.setdefault(int(j), step)
        order = sorted(entry, key=lambda j: (entry[j], j))
        names = [path.variables[j] for j in order]
        return VariableOrdering(names=names[:k], truncated=len(names) < k)
