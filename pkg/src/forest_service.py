# 随机森林服务
# Forest Service

"""
随机森林服务模块 - 自助采样的 CART 回归树与两种变量重要性。

不纯度 = 节点内响应方差 × 节点样本数（即节点内平方和）。

支持功能：
- 贪心最优分裂的回归树（阈值取相邻取值的中点，x <= 阈值走左侧）
- 按树预先派生随机种子的并行森林训练，结果与线程数无关
- 袋外 MSE
- 袋外置换重要性与不纯度下降重要性（均缩放到最大值 100）
- 按阈值筛选相关变量
- 森林的 JSON 序列化
"""

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from src.config_manager import ConfigManager
from src.models import ImportanceTable, TreeNode

# 配置日志
logger = logging.getLogger(__name__)

FOREST_FORMAT_VERSION = 1


class ForestError(Exception):
    """随机森林错误异常"""
    pass


@dataclass(frozen=True)
class ForestParams:
    """
    森林参数。

    Attributes:
        n_trees: 树的数量（≥ 1）
        bootstrap: 是否自助采样
        max_depth: 最大深度，None 表示不限
        min_samples_split: 节点继续分裂所需的最少样本数
        mtry: 每次分裂随机抽取的变量数，None 表示 ceil(n / 3)
    """
    n_trees: int = 300
    bootstrap: bool = True
    max_depth: Optional[int] = None
    min_samples_split: int = 5
    mtry: Optional[int] = None

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.min_samples_split < 2:
            raise ValueError(f"min_samples_split must be >= 2, got {self.min_samples_split}")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError(f"max_depth must be >= 0, got {self.max_depth}")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError(f"mtry must be >= 1, got {self.mtry}")

    def resolved_mtry(self, n_features: int) -> int:
        if self.mtry is None:
            return max(1, math.ceil(n_features / 3))
        return min(self.mtry, n_features)

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_trees": self.n_trees,
            "bootstrap": self.bootstrap,
            "max_depth": self.max_depth,
            "min_samples_split": self.min_samples_split,
            "mtry": self.mtry,
        }


@dataclass
class _FlatTree:
    """用于向量化预测的扁平数组表示"""
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @classmethod
    def from_node(cls, root: TreeNode) -> "_FlatTree":
        nodes = list(root.iter_nodes())
        ids = {id(node): k for k, node in enumerate(nodes)}
        feature = np.full(len(nodes), -1, dtype=int)
        threshold = np.zeros(len(nodes))
        left = np.full(len(nodes), -1, dtype=int)
        right = np.full(len(nodes), -1, dtype=int)
        value = np.zeros(len(nodes))
        for k, node in enumerate(nodes):
            value[k] = node.prediction
            if not node.is_leaf:
                feature[k] = node.feature
                threshold[k] = node.threshold
                left[k] = ids[id(node.left)]
                right[k] = ids[id(node.right)]
        return cls(feature, threshold, left, right, value)

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=int)
        active = self.feature[node] >= 0
        while active.any():
            rows = np.nonzero(active)[0]
            current = node[rows]
            go_left = X[rows, self.feature[current]] <= self.threshold[current]
            node[rows] = np.where(go_left, self.left[current], self.right[current])
            active = self.feature[node] >= 0
        return self.value[node]


@dataclass
class RandomForest:
    """
    训练好的森林（不可变使用）。

    Attributes:
        variables: 变量名
        params: 森林参数
        seed: 主随机种子
        trees: 每棵树的根节点
        in_bag: 形状为 (n_trees, N) 的自助采样计数
        oob_mse: 袋外 MSE（没有袋外行时为 nan）
        oob_excluded: 从未处于袋外、未计入袋外 MSE 的行数
    """
    variables: list[str]
    params: ForestParams
    seed: int
    trees: list[TreeNode]
    in_bag: np.ndarray
    oob_mse: float
    oob_excluded: int
    _flat: list[_FlatTree] = field(default_factory=list, repr=False)

    def __post_init__(self):
        if not self._flat:
            self._flat = [_FlatTree.from_node(tree) for tree in self.trees]

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def tree_predictions(self, X: np.ndarray) -> np.ndarray:
        """形状为 (n_trees, n) 的逐树预测"""
        X = np.asarray(X, dtype=float)
        return np.vstack([flat.predict(X) for flat in self._flat])

    def predict(self, X: np.ndarray) -> np.ndarray:
        """森林预测 = 各树预测的平均"""
        return self.tree_predictions(X).mean(axis=0)

    def oob_mask(self, tree: int) -> np.ndarray:
        return self.in_bag[tree] == 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "format_version": FOREST_FORMAT_VERSION,
            "variables": list(self.variables),
            "params": self.params.to_dict(),
            "seed": self.seed,
            "oob_mse": None if math.isnan(self.oob_mse) else self.oob_mse,
            "oob_excluded": self.oob_excluded,
            "in_bag": self.in_bag.tolist(),
            "trees": [tree.to_dict() for tree in self.trees],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RandomForest":
        version = data.get("format_version")
        if version != FOREST_FORMAT_VERSION:
            raise ForestError(f"Unsupported forest format version: {version}")
        oob = data.get("oob_mse")
        return cls(
            variables=list(data["variables"]),
            params=ForestParams(**data["params"]),
            seed=int(data["seed"]),
            trees=[TreeNode.from_dict(t) for t in data["trees"]],
            in_bag=np.array(data["in_bag"], dtype=int),
            oob_mse=float("nan") if oob is None else float(oob),
            oob_excluded=int(data.get("oob_excluded", 0)),
        )


def _node(y: np.ndarray) -> TreeNode:
    mean = float(np.mean(y))
    return TreeNode(
        n_samples=int(y.size),
        impurity=float(np.sum((y - mean) ** 2)),
        prediction=mean,
    )


def _split_threshold(low: float, high: float) -> float:
    mid = (low + high) / 2.0
    # 相邻值极近时中点可能舍入到 high
    return mid if low <= mid < high else low


def _best_split(
    X: np.ndarray,
    y: np.ndarray,
    idx: np.ndarray,
    features: np.ndarray,
    impurity: float,
) -> Optional[tuple[int, float]]:
    """
    在候选变量中寻找不纯度下降最大的分裂。

    变量按下标升序、阈值按升序扫描，只有严格更大的下降才会替换当前最优，
    因此并列时取下标最小的变量和最小的阈值。
    """
    y_node = y[idx]
    y_node = y_node - y_node.mean()
    m = y_node.size
    total = y_node.sum()
    total_sq = float(np.sum(y_node ** 2))
    n_left = np.arange(1, m)
    n_right = m - n_left
    best_gain = 1e-12 * impurity
    best: Optional[tuple[int, float]] = None
    for f in features:
        x = X[idx, f]
        order = np.argsort(x, kind="stable")
        xs = x[order]
        distinct = xs[1:] > xs[:-1]
        if not distinct.any():
            continue
        ys = y_node[order]
        csum = np.cumsum(ys)[:-1]
        csq = np.cumsum(ys ** 2)[:-1]
        sse_left = csq - csum ** 2 / n_left
        sse_right = (total_sq - csq) - (total - csum) ** 2 / n_right
        gain = np.where(distinct, impurity - sse_left - sse_right, -np.inf)
        i = int(np.argmax(gain))
        if gain[i] > best_gain:
            best_gain = float(gain[i])
            best = (int(f), _split_threshold(float(xs[i]), float(xs[i + 1])))
    return best


class ForestService:
    """
    随机森林服务。

    Attributes:
        config: 配置管理器实例，提供树数、最小分裂样本数、深度与筛选阈值默认值

    Example:
        >>> service = ForestService(ConfigManager())
        >>> forest = service.fit_forest(X, y, names, seed=0)
        >>> table = service.importance(forest, X, y, seed=0)
        >>> service.select_relevant(table, 5.0)
    """

    def __init__(self, config: ConfigManager):
        self.config = config
        self.defaults = config.get_forest_defaults()

    def default_params(self, **overrides: Any) -> ForestParams:
        """配置默认值与显式参数合并（值为 None 的参数不覆盖）"""
        values = {
            "n_trees": self.defaults["n_trees"],
            "max_depth": self.defaults["max_depth"],
            "min_samples_split": self.defaults["min_samples_split"],
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return ForestParams(**values)

    def fit_tree(
        self,
        X: np.ndarray,
        y: np.ndarray,
        max_depth: Optional[int] = None,
        min_samples_split: Optional[int] = None,
        mtry: Optional[int] = None,
        seed: int = 0,
        rng: Optional[np.random.Generator] = None,
    ) -> TreeNode:
        """
        训练一棵回归树。

        在以下情况停止分裂：达到最大深度、样本数少于 min_samples_split、
        节点内响应为常数、没有能降低不纯度的候选分裂。

        Args:
            X: N×n 特征矩阵
            y: 响应
            max_depth: 最大深度，None 表示不限
            min_samples_split: 最少分裂样本数，None 取配置
            mtry: 每次分裂抽取的变量数，None 表示全部变量
            seed: rng 未给出时使用的种子
            rng: 随机数生成器

        Returns:
            TreeNode: 根节点
        """
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float).ravel()
        if X.ndim != 2 or X.shape[0] != y.size or y.size == 0:
            raise ForestError(f"Design shape {X.shape} does not match response length {y.size}")
        min_samples_split = self.defaults["min_samples_split"] if min_samples_split is None else min_samples_split
        rng = rng if rng is not None else np.random.default_rng(seed)
        n_features = X.shape[1]
        mtry = n_features if mtry is None else min(mtry, n_features)

        root = _node(y)
        stack = [(root, np.arange(y.size), 0)]
        while stack:
            node, idx, depth = stack.pop()
            if max_depth is not None and depth >= max_depth:
                continue
            if idx.size < min_samples_split or np.ptp(y[idx]) == 0:
                continue
            if mtry < n_features:
                features = np.sort(rng.choice(n_features, size=mtry, replace=False))
            else:
                features = np.arange(n_features)
            split = _best_split(X, y, idx, features, node.impurity)
            if split is None:
                continue
            feature, threshold = split
            goes_left = X[idx, feature] <= threshold
            left_idx, right_idx = idx[goes_left], idx[~goes_left]
            left, right = _node(y[left_idx]), _node(y[right_idx])
            node.feature = feature
            node.threshold = threshold
            node.impurity_decrease = max(node.impurity - left.impurity - right.impurity, 0.0)
            node.left = left
            node.right = right
            stack.append((right, right_idx, depth + 1))
            stack.append((left, left_idx, depth + 1))
        return root

    def fit_forest(
        self,
        X: np.ndarray,
        y: np.ndarray,
        variables: Optional[list[str]] = None,
        params: Optional[ForestParams] = None,
        seed: int = 0,
        n_jobs: Optional[int] = None,
    ) -> RandomForest:
        """
        训练随机森林。

        每棵树的种子由主种子派生（SeedSequence.spawn），在调度前全部确定，
        因此结果与线程数无关。

        Args:
            X: N×n 特征矩阵
            y: 响应
            variables: 变量名
            params: 森林参数，None 时使用配置默认值
            seed: 主随机种子
            n_jobs: 线程数，None 取配置

        Returns:
            RandomForest: 附袋外 MSE 与未计入的行数
        """
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float).ravel()
        if X.ndim != 2 or X.shape[0] != y.size or y.size == 0:
            raise ForestError(f"Design shape {X.shape} does not match response length {y.size}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ForestError("Features and response must be finite")
        params = params or self.default_params()
        variables = list(variables) if variables is not None else [f"x{j}" for j in range(X.shape[1])]
        n_jobs = self.config.get_n_jobs() if n_jobs is None else max(1, n_jobs)
        n_rows = y.size
        mtry = params.resolved_mtry(X.shape[1])
        children = np.random.SeedSequence(seed).spawn(params.n_trees)

        def grow(child: np.random.SeedSequence) -> tuple[TreeNode, np.ndarray]:
            rng = np.random.default_rng(child)
            if params.bootstrap:
                sample = rng.integers(0, n_rows, size=n_rows)
                counts = np.bincount(sample, minlength=n_rows)
            else:
                sample = np.arange(n_rows)
                counts = np.ones(n_rows, dtype=int)
            tree = self.fit_tree(
                X[sample], y[sample],
                max_depth=params.max_depth,
                min_samples_split=params.min_samples_split,
                mtry=mtry,
                rng=rng,
            )
            return tree, counts

        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            grown = list(pool.map(grow, children))

        forest = RandomForest(
            variables=variables,
            params=params,
            seed=seed,
            trees=[g[0] for g in grown],
            in_bag=np.vstack([g[1] for g in grown]),
            oob_mse=float("nan"),
            oob_excluded=0,
        )
        forest.oob_mse, forest.oob_excluded = self._oob_mse(forest, X, y)
        if forest.oob_excluded:
            logger.warning(f"{forest.oob_excluded} 行从未处于袋外，不计入袋外 MSE")
        logger.info(f"森林训练完成: {params.n_trees} 棵树，袋外 MSE={forest.oob_mse:.6g}")
        return forest

    def _oob_mse(self, forest: RandomForest, X: np.ndarray, y: np.ndarray) -> tuple[float, int]:
        predictions = forest.tree_predictions(X)
        oob = forest.in_bag == 0
        counts = oob.sum(axis=0)
        covered = counts > 0
        excluded = int((~covered).sum())
        if not covered.any():
            return float("nan"), excluded
        sums = np.where(oob, predictions, 0.0).sum(axis=0)
        oob_prediction = sums[covered] / counts[covered]
        return float(np.mean((y[covered] - oob_prediction) ** 2)), excluded

    def importance(
        self,
        forest: RandomForest,
        X: np.ndarray,
        y: np.ndarray,
        seed: int = 0,
        is_area: Optional[list[bool]] = None,
        n_jobs: Optional[int] = None,
    ) -> ImportanceTable:
        """
        计算两种变量重要性。

        - mse_reduction: 每棵树在其袋外行上置换某个变量后 MSE 的增量，按树平均；
          负值截为 0
        - purity_gain: 该变量所有分裂的不纯度下降之和

        两列都缩放到最大值 100（全部为 0 时保持 0）。没有袋外行的森林（关闭自助采样）
        在训练数据上计算置换重要性。

        Args:
            forest: 训练好的森林
            X / y: 训练数据（行顺序与训练时一致）
            seed: 置换随机种子
            is_area: 每个变量是否为 "area" 类

        Returns:
            ImportanceTable
        """
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float).ravel()
        n_features = X.shape[1]
        if n_features != len(forest.variables):
            raise ForestError(
                f"Feature count {n_features} does not match forest variables {len(forest.variables)}"
            )
        n_jobs = self.config.get_n_jobs() if n_jobs is None else max(1, n_jobs)
        has_oob = bool((forest.in_bag == 0).any())
        if not has_oob:
            logger.warning("森林没有袋外行，置换重要性改用训练数据计算")
        children = np.random.SeedSequence(seed).spawn(forest.n_trees)

        def permutation_increase(t: int) -> Optional[np.ndarray]:
            rows = np.nonzero(forest.oob_mask(t))[0] if has_oob else np.arange(y.size)
            if rows.size == 0:
                return None
            rng = np.random.default_rng(children[t])
            flat = forest._flat[t]
            X_rows = X[rows]
            base = np.mean((y[rows] - flat.predict(X_rows)) ** 2)
            increases = np.zeros(n_features)
            for j in range(n_features):
                shuffled = X_rows.copy()
                shuffled[:, j] = X_rows[rng.permutation(rows.size), j]
                increases[j] = np.mean((y[rows] - flat.predict(shuffled)) ** 2) - base
            return increases

        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            per_tree = [r for r in pool.map(permutation_increase, range(forest.n_trees)) if r is not None]

        raw_mse = np.maximum(np.mean(per_tree, axis=0), 0.0) if per_tree else np.zeros(n_features)
        raw_purity = self.purity_gain(forest, n_features)
        return ImportanceTable(
            variables=list(forest.variables),
            mse_reduction=self._rescale(raw_mse),
            purity_gain=self._rescale(raw_purity),
            raw_mse_increase=raw_mse,
            raw_purity_gain=raw_purity,
            is_area=list(is_area) if is_area is not None else [],
        )

    @staticmethod
    def purity_gain(forest: RandomForest, n_features: int) -> np.ndarray:
        """按树顺序、先序遍历累加每个变量的不纯度下降"""
        totals = np.zeros(n_features)
        for tree in forest.trees:
            for node in tree.iter_nodes():
                if not node.is_leaf:
                    totals[node.feature] += node.impurity_decrease
        return totals

    @staticmethod
    def _rescale(values: np.ndarray) -> np.ndarray:
        top = float(np.max(values)) if values.size else 0.0
        if top <= 0:
            return np.zeros_like(values)
        return values * (100.0 / top)

    def select_relevant(self, table: ImportanceTable, threshold: Optional[float] = None) -> list[str]:
        """
        两项重要性都大于阈值的变量，按 mse_reduction 降序。

        Raises:
            ForestError: 阈值不在 [0, 100]
        """
        threshold = self.defaults["threshold"] if threshold is None else threshold
        if not 0 <= threshold <= 100:
            raise ForestError(f"threshold must lie in [0, 100], got {threshold}")
        chosen = [
            (i, name) for i, name in enumerate(table.variables)
            if table.mse_reduction[i] > threshold and table.purity_gain[i] > threshold
        ]
        chosen.sort(key=lambda item: (-table.mse_reduction[item[0]], item[0]))
        return [name for _, name in chosen]

    @staticmethod
    def save_forest(forest: RandomForest, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(json.dumps(forest.to_dict(), sort_keys=True) + "\n")

    @staticmethod
    def load_forest(path: str) -> RandomForest:
        try:
            with open(path, "r", encoding="utf-8") as f:
                return RandomForest.from_dict(json.load(f))
        except (OSError, ValueError, KeyError) as e:
            raise ForestError(f"Unable to load forest from {path}: {e}") from e
