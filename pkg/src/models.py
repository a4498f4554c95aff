# 数据模型
# Data Models

"""
数据模型模块 - 定义系统核心数据结构。

包含：
- VariableMeta / PanelDataset / DescriptiveStats: 期刊×年份×变量面板
- LassoPath / CrossValidationResult: LASSO 正则化路径与交叉验证结果
- TreeNode / ImportanceTable: 回归树与变量重要性
- CorrelationMatrix / ClusterPartition / VifReport: 相关性分析
- PanelSpec / PanelFit / DiagnosticResult: 面板回归
- CoefficientModel / EstimationReport: 指数推断
- DgpSpec / GroundTruth: 合成数据生成

支持功能：
- 数据序列化 (to_dict)
- 数据反序列化 (from_dict)
- 构造时校验不变量
"""

import hashlib
import json
import math
import re
from dataclasses import dataclass, field, replace
from typing import Any, Iterator, Optional

import numpy as np


class VariableSource:
    """变量来源常量"""
    SCOPUS = "SCOPUS"
    WOS = "WOS"
    DERIVED = "DERIVED"


class VariableKind:
    """变量类型常量"""
    QUALITY_NUMERIC = "quality_numeric"
    CATEGORICAL_AREA = "categorical_area"
    CATEGORICAL_OTHER = "categorical_other"
    BOOLEAN = "boolean"
    # 由分类变量展开得到的 0/1 指示变量
    INDICATOR = "indicator"


class EffectsKind:
    """面板效应类型常量"""
    POOLED = "pooled"
    FIXED = "fixed"
    FIXED_TIME = "fixed_time"
    RANDOM = "random"


class ErrorStructure:
    """合成数据的误差结构常量"""
    IID = "iid"
    AR1 = "ar1"


VALID_SOURCES = {VariableSource.SCOPUS, VariableSource.WOS, VariableSource.DERIVED}
VALID_KINDS = {
    VariableKind.QUALITY_NUMERIC,
    VariableKind.CATEGORICAL_AREA,
    VariableKind.CATEGORICAL_OTHER,
    VariableKind.BOOLEAN,
    VariableKind.INDICATOR,
}
CATEGORICAL_KINDS = {
    VariableKind.CATEGORICAL_AREA,
    VariableKind.CATEGORICAL_OTHER,
    VariableKind.BOOLEAN,
}
VALID_EFFECTS = {
    EffectsKind.POOLED,
    EffectsKind.FIXED,
    EffectsKind.FIXED_TIME,
    EffectsKind.RANDOM,
}

INTERCEPT_NAME = "Intercept"

_YEAR_SUFFIX = re.compile(r"\(\s*\d{4}\s*\)")
_NON_ALNUM = re.compile(r"[^0-9A-Za-z]+")


def canonical_name(header: str) -> str:
    """
    将导出文件的列名转换为规范变量名。

    去掉 "(2018)" 这样的年份后缀以及所有非字母数字字符。

    Examples:
        >>> canonical_name("Cites / Doc. (2years)")
        'CitesDoc2years'
        >>> canonical_name("Total Docs. (2018)")
        'TotalDocs'
        >>> canonical_name("H index")
        'Hindex'
    """
    without_year = _YEAR_SUFFIX.sub("", header)
    return _NON_ALNUM.sub("", without_year)


def name_key(name: str) -> str:
    """变量名查找键：规范化后忽略大小写"""
    return canonical_name(name).casefold()


def significance_stars(p_value: float) -> str:
    """
    按回归表图例给出显著性星号。

    *p<0.1; **p<0.05; ***p<0.01

    Examples:
        >>> significance_stars(0.004)
        '***'
        >>> significance_stars(0.2)
        ''
    """
    if p_value is None or not math.isfinite(p_value):
        return ""
    if p_value < 0.01:
        return "***"
    if p_value < 0.05:
        return "**"
    if p_value < 0.1:
        return "*"
    return ""


def _float_or_none(value: Any) -> Optional[float]:
    if value is None:
        return None
    value = float(value)
    return value if math.isfinite(value) else None


# =============================================================================
# 面板数据
# =============================================================================

@dataclass(frozen=True)
class VariableMeta:
    """
    变量元数据。

    Attributes:
        name: 变量名（数据集内唯一）
        source: 来源，可选值: "SCOPUS" | "WOS" | "DERIVED"
        kind: 变量类型，见 VariableKind
        description: 描述
        levels: 分类变量的水平（按首次出现顺序）
        parent: 指示变量对应的原分类变量
        parent_kind: 原分类变量的类型

    Example:
        >>> meta = VariableMeta("SJRBestQuartile", "SCOPUS", "categorical_other",
        ...                     levels=("Q1", "Q2"))
        >>> meta.is_categorical
        True
    """
    name: str
    source: str
    kind: str
    description: str = ""
    levels: tuple[str, ...] = ()
    parent: Optional[str] = None
    parent_kind: Optional[str] = None

    def __post_init__(self):
        """验证字段值"""
        if not self.name:
            raise ValueError("Variable name must not be empty")
        if self.source not in VALID_SOURCES:
            raise ValueError(
                f"Invalid source '{self.source}'. Must be one of: {VALID_SOURCES}"
            )
        if self.kind not in VALID_KINDS:
            raise ValueError(
                f"Invalid kind '{self.kind}'. Must be one of: {VALID_KINDS}"
            )
        object.__setattr__(self, "levels", tuple(str(level) for level in self.levels))
        if len(set(self.levels)) != len(self.levels):
            raise ValueError(f"Duplicate levels for variable '{self.name}'")
        if self.kind == VariableKind.BOOLEAN and len(self.levels) != 2:
            raise ValueError(
                f"Boolean variable '{self.name}' must have exactly two levels, "
                f"got {list(self.levels)}"
            )
        if self.kind not in CATEGORICAL_KINDS and self.levels:
            raise ValueError(f"Numeric variable '{self.name}' cannot carry levels")

    @property
    def is_categorical(self) -> bool:
        """是否为分类变量（含布尔）"""
        return self.kind in CATEGORICAL_KINDS

    @property
    def is_area(self) -> bool:
        """是否为 "area" 类变量（或由其展开的指示变量）"""
        return (
            self.kind == VariableKind.CATEGORICAL_AREA
            or self.parent_kind == VariableKind.CATEGORICAL_AREA
        )

    def to_dict(self) -> dict[str, Any]:
        """将对象序列化为字典"""
        return {
            "name": self.name,
            "source": self.source,
            "kind": self.kind,
            "description": self.description,
            "levels": list(self.levels),
            "parent": self.parent,
            "parent_kind": self.parent_kind,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "VariableMeta":
        """从字典反序列化创建对象"""
        return cls(
            name=data["name"],
            source=data.get("source", VariableSource.DERIVED),
            kind=data.get("kind", VariableKind.QUALITY_NUMERIC),
            description=data.get("description", ""),
            levels=tuple(data.get("levels", ())),
            parent=data.get("parent"),
            parent_kind=data.get("parent_kind"),
        )


@dataclass(frozen=True, eq=False)
class PanelDataset:
    """
    期刊×年份×变量的矩形面板。

    分类变量以水平下标存储；缺失值由 missing 掩码标记，缺失位置的数值固定为 0。
    构造后数组只读，可在多个线程间共享。

    Attributes:
        journals: 期刊标识（有序、唯一）
        years: 年份（严格递增）
        variables: 变量元数据
        values: 形状为 (J, T, V) 的数值表
        missing: 形状为 (J, T, V) 的缺失掩码
        present: 形状为 (J, T) 的行存在掩码
        issns: 与 journals 对齐的 ISSN（可为空字符串）
        empty_warning: 过滤后为空面板时置为 True
    """
    journals: tuple[str, ...]
    years: tuple[int, ...]
    variables: tuple[VariableMeta, ...]
    values: np.ndarray
    missing: np.ndarray
    present: np.ndarray
    issns: tuple[str, ...] = ()
    empty_warning: bool = False

    def __post_init__(self):
        """验证形状与不变量，并冻结数组"""
        journals = tuple(str(j) for j in self.journals)
        years = tuple(int(y) for y in self.years)
        variables = tuple(self.variables)
        if len(set(journals)) != len(journals):
            raise ValueError("Journal identifiers must be unique")
        if any(b <= a for a, b in zip(years, years[1:])):
            raise ValueError(f"Years must be strictly increasing, got {list(years)}")
        names = [v.name for v in variables]
        if len(set(names)) != len(names):
            raise ValueError(f"Variable names must be unique, got {names}")

        shape = (len(journals), len(years), len(variables))
        values = np.array(self.values, dtype=float).reshape(shape)
        missing = np.array(self.missing, dtype=bool).reshape(shape)
        present = np.array(self.present, dtype=bool).reshape(shape[:2])

        # 不存在的行视为全部缺失
        missing |= ~present[:, :, None]
        if not np.all(np.isfinite(values[~missing])):
            raise ValueError("Numeric values must be finite")
        values[missing] = 0.0

        issns = tuple(self.issns) if self.issns else tuple("" for _ in journals)
        if len(issns) != len(journals):
            raise ValueError("issns must align with journals")

        for array in (values, missing, present):
            array.setflags(write=False)
        object.__setattr__(self, "journals", journals)
        object.__setattr__(self, "years", years)
        object.__setattr__(self, "variables", variables)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "missing", missing)
        object.__setattr__(self, "present", present)
        object.__setattr__(self, "issns", issns)

    @property
    def variable_names(self) -> list[str]:
        """变量名列表"""
        return [v.name for v in self.variables]

    @property
    def n_journals(self) -> int:
        return len(self.journals)

    @property
    def n_years(self) -> int:
        return len(self.years)

    @property
    def n_obs(self) -> int:
        """存在的 (期刊, 年份) 行数"""
        return int(self.present.sum())

    def is_balanced(self) -> bool:
        """每个期刊每年每个变量都有值"""
        return not bool(self.missing.any())

    def index_of(self, name: str) -> int:
        """
        按名称查找变量下标。

        先精确匹配，再按规范化名称忽略大小写匹配。

        Raises:
            KeyError: 变量不存在
        """
        names = self.variable_names
        if name in names:
            return names.index(name)
        key = name_key(name)
        matches = [i for i, n in enumerate(names) if name_key(n) == key]
        if len(matches) == 1:
            return matches[0]
        if len(matches) > 1:
            raise KeyError(f"Variable name '{name}' is ambiguous: {[names[i] for i in matches]}")
        raise KeyError(f"Variable '{name}' not found")

    def has_variable(self, name: str) -> bool:
        try:
            self.index_of(name)
        except KeyError:
            return False
        return True

    def variable(self, name: str) -> VariableMeta:
        return self.variables[self.index_of(name)]

    def pooled(self, names: list[str]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        取出指定变量在所有完整行上的混合观测。

        行按期刊优先、年份其次排列；任一所选变量缺失的行被排除。

        Args:
            names: 变量名列表

        Returns:
            (数据矩阵 (n, k), 期刊下标 (n,), 年份下标 (n,))
        """
        idx = [self.index_of(n) for n in names]
        complete = self.present & ~self.missing[:, :, idx].any(axis=2)
        journal_idx, year_idx = np.nonzero(complete)
        data = self.values[journal_idx, year_idx][:, idx] if idx else np.empty((len(journal_idx), 0))
        return np.array(data, dtype=float), journal_idx, year_idx

    def level_label(self, name: str, value: float) -> str:
        """将分类变量的水平下标还原为标签"""
        meta = self.variable(name)
        return meta.levels[int(value)]

    def subset(
        self,
        journal_idx: Optional[np.ndarray] = None,
        year_idx: Optional[np.ndarray] = None,
        variable_idx: Optional[list[int]] = None,
        empty_warning: bool = False,
    ) -> "PanelDataset":
        """
        按下标截取子面板。

        Returns:
            新的 PanelDataset
        """
        j = np.arange(self.n_journals) if journal_idx is None else np.asarray(journal_idx, dtype=int)
        t = np.arange(self.n_years) if year_idx is None else np.asarray(year_idx, dtype=int)
        v = list(range(len(self.variables))) if variable_idx is None else list(variable_idx)
        return PanelDataset(
            journals=tuple(self.journals[i] for i in j),
            years=tuple(self.years[i] for i in t),
            variables=tuple(self.variables[i] for i in v),
            values=self.values[np.ix_(j, t, v)],
            missing=self.missing[np.ix_(j, t, v)],
            present=self.present[np.ix_(j, t)],
            issns=tuple(self.issns[i] for i in j),
            empty_warning=empty_warning,
        )

    def row(self, journal: int, year: int) -> dict[str, Any]:
        """
        取出一行的变量值；分类变量返回水平标签，缺失值不出现在结果中。
        """
        result: dict[str, Any] = {}
        for k, meta in enumerate(self.variables):
            if self.missing[journal, year, k]:
                continue
            value = float(self.values[journal, year, k])
            result[meta.name] = meta.levels[int(value)] if meta.is_categorical else value
        return result


@dataclass
class VariableSummary:
    """单个变量的描述统计"""
    mean: float
    median: float
    sd: float
    min: float
    max: float
    n: int

    def __post_init__(self):
        """验证字段值"""
        tol = 1e-9 * max(1.0, abs(self.min), abs(self.max))
        if not (self.min - tol <= self.median <= self.max + tol):
            raise ValueError(
                f"Median {self.median} outside [{self.min}, {self.max}]"
            )
        if self.sd < 0:
            raise ValueError(f"Standard deviation must be >= 0, got {self.sd}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "mean": self.mean,
            "median": self.median,
            "sd": self.sd,
            "min": self.min,
            "max": self.max,
            "n": self.n,
        }


@dataclass
class DescriptiveStats:
    """
    每个数值变量的描述统计（均值、中位数、标准差、最小值、最大值）。

    Example:
        >>> stats = DescriptiveStats({"SJR": VariableSummary(2, 2, 1, 1, 3, 3)})
        >>> stats.to_dict()["SJR"]["mean"]
        2
    """
    variables: dict[str, VariableSummary] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {name: summary.to_dict() for name, summary in self.variables.items()}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "DescriptiveStats":
        return cls({name: VariableSummary(**values) for name, values in data.items()})


# =============================================================================
# LASSO
# =============================================================================

@dataclass
class LassoPathPoint:
    """
    正则化路径上的一个点。

    Attributes:
        lambda_: 惩罚权重（拉格朗日形式）
        coefficients: 原始单位下的斜率系数
        intercept: 截距
        active_count: 非零系数个数
        train_mse: 训练集 MSE
        frac_var_explained: 1 - train_mse / Var(y)
    """
    lambda_: float
    coefficients: np.ndarray
    intercept: float
    active_count: int
    train_mse: float
    frac_var_explained: float

    def to_dict(self, variables: list[str]) -> dict[str, Any]:
        return {
            "lambda": self.lambda_,
            "intercept": self.intercept,
            "coefficients": {
                name: float(c) for name, c in zip(variables, self.coefficients)
            },
            "active_count": self.active_count,
            "train_mse": self.train_mse,
            "frac_var_explained": self.frac_var_explained,
        }


@dataclass
class LassoPath:
    """
    LASSO 正则化路径，按 λ 从大到小（从稀疏到稠密）排列。

    Attributes:
        variables: 原始列名
        points: 路径点
        y_variance: 响应变量的总体方差
    """
    variables: list[str]
    points: list[LassoPathPoint]
    y_variance: float

    def __post_init__(self):
        """验证 λ 严格递减"""
        lambdas = [p.lambda_ for p in self.points]
        if any(b >= a for a, b in zip(lambdas, lambdas[1:])):
            raise ValueError("Lambdas must be strictly decreasing along the path")

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([p.lambda_ for p in self.points])

    def to_records(self) -> list[dict[str, Any]]:
        """绘图数据：每个 λ 一行"""
        return [
            {
                "lambda": p.lambda_,
                "active_count": p.active_count,
                "train_mse": p.train_mse,
                "frac_var_explained": p.frac_var_explained,
            }
            for p in self.points
        ]

    def to_dict(self) -> dict[str, Any]:
        return {
            "variables": list(self.variables),
            "y_variance": self.y_variance,
            "points": [p.to_dict(self.variables) for p in self.points],
        }


@dataclass
class CrossValidationResult:
    """
    K 折交叉验证结果。

    Attributes:
        lambdas: λ 网格（递减）
        cv_mse: 每个 λ 的平均折外 MSE
        cv_se: 折外 MSE 的标准误
        lambda_min: CV-MSE 最小的 λ
        lambda_sparse: CV-MSE 在最小值一个标准误之内的最大 λ
        folds: 折数
        seed: 分折随机种子
        fold_mse: 形状为 (folds, L) 的逐折 MSE
    """
    lambdas: np.ndarray
    cv_mse: np.ndarray
    cv_se: np.ndarray
    lambda_min: float
    lambda_sparse: float
    folds: int
    seed: int
    fold_mse: np.ndarray

    def to_records(self) -> list[dict[str, Any]]:
        return [
            {"lambda": float(lam), "cv_mse": float(mse), "cv_se": float(se)}
            for lam, mse, se in zip(self.lambdas, self.cv_mse, self.cv_se)
        ]

    def to_dict(self) -> dict[str, Any]:
        return {
            "lambda_min": self.lambda_min,
            "lambda_sparse": self.lambda_sparse,
            "folds": self.folds,
            "seed": self.seed,
            "grid": self.to_records(),
        }


@dataclass
class VariableOrdering:
    """变量进入活跃集的顺序；truncated 表示不足 k 个"""
    names: list[str]
    truncated: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {"names": list(self.names), "truncated": self.truncated}


# =============================================================================
# 随机森林
# =============================================================================

@dataclass
class TreeNode:
    """
    回归树节点。

    叶节点 feature 为 None；内部节点记录分裂变量下标、阈值（x <= 阈值走左侧）
    以及本次分裂带来的不纯度下降。不纯度 = 节点内响应方差 × 样本数。
    """
    n_samples: int
    impurity: float
    prediction: float
    feature: Optional[int] = None
    threshold: Optional[float] = None
    impurity_decrease: float = 0.0
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    def iter_nodes(self) -> Iterator["TreeNode"]:
        """先序遍历所有节点"""
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            if not node.is_leaf:
                stack.append(node.right)
                stack.append(node.left)

    def depth(self) -> int:
        if self.is_leaf:
            return 0
        return 1 + max(self.left.depth(), self.right.depth())

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "n": self.n_samples,
            "impurity": self.impurity,
            "prediction": self.prediction,
        }
        if not self.is_leaf:
            data.update({
                "feature": self.feature,
                "threshold": self.threshold,
                "decrease": self.impurity_decrease,
                "left": self.left.to_dict(),
                "right": self.right.to_dict(),
            })
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TreeNode":
        if "feature" not in data:
            return cls(
                n_samples=int(data["n"]),
                impurity=float(data["impurity"]),
                prediction=float(data["prediction"]),
            )
        return cls(
            n_samples=int(data["n"]),
            impurity=float(data["impurity"]),
            prediction=float(data["prediction"]),
            feature=int(data["feature"]),
            threshold=float(data["threshold"]),
            impurity_decrease=float(data["decrease"]),
            left=cls.from_dict(data["left"]),
            right=cls.from_dict(data["right"]),
        )


@dataclass
class ImportanceTable:
    """
    变量重要性表，两列均缩放到最大值 100。

    Attributes:
        variables: 变量名
        mse_reduction: 袋外置换重要性（0-100）
        purity_gain: 不纯度下降总和（0-100）
        raw_mse_increase: 未缩放的置换 MSE 增量
        raw_purity_gain: 未缩放的不纯度下降总和
        is_area: 是否为 "area" 类变量
    """
    variables: list[str]
    mse_reduction: np.ndarray
    purity_gain: np.ndarray
    raw_mse_increase: np.ndarray
    raw_purity_gain: np.ndarray
    is_area: list[bool] = field(default_factory=list)

    def __post_init__(self):
        """验证非负"""
        if np.any(self.mse_reduction < 0) or np.any(self.purity_gain < 0):
            raise ValueError("Importance scores must be non-negative")
        if not self.is_area:
            self.is_area = [False] * len(self.variables)

    def score(self, name: str) -> tuple[float, float]:
        i = self.variables.index(name)
        return float(self.mse_reduction[i]), float(self.purity_gain[i])

    def to_records(self) -> list[dict[str, Any]]:
        return [
            {
                "variable": name,
                "mse_reduction": float(mse),
                "purity_gain": float(purity),
                "is_area": area,
            }
            for name, mse, purity, area in zip(
                self.variables, self.mse_reduction, self.purity_gain, self.is_area
            )
        ]


# =============================================================================
# 相关性
# =============================================================================

@dataclass
class CorrelationMatrix:
    """
    Pearson 相关矩阵：对称、对角线为 1、元素在 [-1, 1]。
    """
    variables: list[str]
    matrix: np.ndarray

    def __post_init__(self):
        """验证字段值"""
        m = np.asarray(self.matrix, dtype=float)
        k = len(self.variables)
        if m.shape != (k, k):
            raise ValueError(f"Matrix shape {m.shape} does not match {k} variables")
        if not np.allclose(m, m.T, atol=1e-8):
            raise ValueError("Correlation matrix must be symmetric")
        if not np.allclose(np.diag(m), 1.0, atol=1e-8):
            raise ValueError("Correlation matrix must have a unit diagonal")
        if np.any(np.abs(m) > 1.0 + 1e-8):
            raise ValueError("Correlations must lie in [-1, 1]")
        self.matrix = m

    def value(self, a: str, b: str) -> float:
        return float(self.matrix[self.variables.index(a), self.variables.index(b)])

    def to_dict(self) -> dict[str, Any]:
        return {"variables": list(self.variables), "matrix": self.matrix.tolist()}


@dataclass
class ClusterPartition:
    """
    变量的不相交分组及每组代表变量。
    """
    groups: list[list[str]]
    representatives: list[str]

    def __post_init__(self):
        """验证分组互不相交且代表变量属于本组"""
        seen: set[str] = set()
        for group in self.groups:
            overlap = seen.intersection(group)
            if overlap:
                raise ValueError(f"Groups overlap on {sorted(overlap)}")
            seen.update(group)
        if len(self.representatives) != len(self.groups):
            raise ValueError("One representative per group is required")
        for group, rep in zip(self.groups, self.representatives):
            if rep not in group:
                raise ValueError(f"Representative '{rep}' is not in its group {group}")

    def group_of(self, name: str) -> list[str]:
        for group in self.groups:
            if name in group:
                return group
        raise KeyError(name)

    def to_dict(self) -> dict[str, Any]:
        return {
            "clusters": [
                {"members": list(group), "representative": rep}
                for group, rep in zip(self.groups, self.representatives)
            ]
        }


@dataclass
class VifReport:
    """方差膨胀因子；infinite 列出完全共线的变量"""
    values: dict[str, float]
    infinite: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "vif": {k: (v if math.isfinite(v) else None) for k, v in self.values.items()},
            "infinite": list(self.infinite),
        }


# =============================================================================
# 面板回归
# =============================================================================

@dataclass(frozen=True)
class PanelSpec:
    """
    面板回归设定。

    Attributes:
        response: 被解释变量
        regressors: 解释变量
        effects: "pooled" | "fixed" | "fixed_time" | "random"
        gls: 是否使用 FGLS 修正

    Example:
        >>> spec = PanelSpec("SJR", ("JournalImpactFactor",), "fixed")
        >>> spec.with_effects("pooled").effects
        'pooled'
    """
    response: str
    regressors: tuple[str, ...]
    effects: str = EffectsKind.FIXED
    gls: bool = False

    def __post_init__(self):
        """验证字段值"""
        object.__setattr__(self, "regressors", tuple(self.regressors))
        if not self.regressors:
            raise ValueError("At least one regressor is required")
        if len(set(self.regressors)) != len(self.regressors):
            raise ValueError("Regressors must be unique")
        if self.response in self.regressors:
            raise ValueError(f"Response '{self.response}' cannot be a regressor")
        if self.effects not in VALID_EFFECTS:
            raise ValueError(
                f"Invalid effects '{self.effects}'. Must be one of: {VALID_EFFECTS}"
            )
        if self.gls and self.effects == EffectsKind.RANDOM:
            raise ValueError("GLS correction cannot be combined with random effects")

    def with_effects(self, effects: str, gls: Optional[bool] = None) -> "PanelSpec":
        return replace(self, effects=effects, gls=self.gls if gls is None else gls)

    def to_dict(self) -> dict[str, Any]:
        return {
            "response": self.response,
            "regressors": list(self.regressors),
            "effects": self.effects,
            "gls": self.gls,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PanelSpec":
        return cls(
            response=data["response"],
            regressors=tuple(data["regressors"]),
            effects=data.get("effects", EffectsKind.FIXED),
            gls=bool(data.get("gls", False)),
        )


@dataclass
class DiagnosticResult:
    """
    检验结果。

    Attributes:
        name: 检验名称
        statistic: 统计量
        dof: 自由度（F 检验有两个）
        p_value: p 值
        flags: 附加标记，如 pseudo_inverse、degenerate
        note: 说明
    """
    name: str
    statistic: float
    dof: list[float]
    p_value: float
    flags: dict[str, bool] = field(default_factory=dict)
    note: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "statistic": self.statistic,
            "dof": list(self.dof),
            "p_value": self.p_value,
            "flags": dict(self.flags),
            "note": self.note,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "DiagnosticResult":
        return cls(
            name=data["name"],
            statistic=float(data["statistic"]),
            dof=list(data.get("dof", [])),
            p_value=float(data["p_value"]),
            flags=dict(data.get("flags", {})),
            note=data.get("note", ""),
        )


@dataclass
class CoefficientEstimate:
    """单个系数的估计值、标准误、t 统计量、p 值与星号"""
    estimate: float
    std_error: float
    t_stat: float
    p_value: float
    stars: str = ""

    def __post_init__(self):
        if self.std_error < 0:
            raise ValueError(f"Standard error must be >= 0, got {self.std_error}")
        self.stars = significance_stars(self.p_value)

    def to_dict(self) -> dict[str, Any]:
        return {
            "estimate": self.estimate,
            "std_error": self.std_error,
            "t_stat": _float_or_none(self.t_stat),
            "p_value": _float_or_none(self.p_value),
            "stars": self.stars,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "CoefficientEstimate":
        t_stat = data.get("t_stat")
        p_value = data.get("p_value")
        return cls(
            estimate=float(data["estimate"]),
            std_error=float(data["std_error"]),
            t_stat=float("nan") if t_stat is None else float(t_stat),
            p_value=float("nan") if p_value is None else float(p_value),
        )


@dataclass
class PanelFit:
    """
    面板回归结果。

    系数按设计矩阵列顺序排列；covariance 与之对齐。residuals、fitted_values、
    effect_components、journal_index 只在内存中保留，不参与序列化。

    Attributes:
        spec: 回归设定
        coefficients: 名称 → 估计
        r_squared: R²（固定效应为组内 R²）
        r_squared_kind: "overall" | "within" | "quasi_demeaned" | "corr_squared"
        n_obs / n_journals / n_years: 样本规模
        estimator: "ols" 或 "fgls"
        covariance: 系数协方差矩阵
        rss / df_resid: 残差平方和与残差自由度
        diagnostics: 诊断检验
        dropped_journals: 被丢弃的期刊数
        time_effects: 年份虚拟变量名称
        flags: 如 ridge_regularized、diagonal_omega
        variance_components: 随机效应的方差分量
        intercept_note: 截距处理说明
    """
    spec: PanelSpec
    coefficients: dict[str, CoefficientEstimate]
    r_squared: float
    r_squared_kind: str
    n_obs: int
    n_journals: int
    n_years: int
    estimator: str
    covariance: np.ndarray
    rss: float
    df_resid: int
    diagnostics: dict[str, DiagnosticResult] = field(default_factory=dict)
    dropped_journals: int = 0
    time_effects: list[str] = field(default_factory=list)
    flags: dict[str, bool] = field(default_factory=dict)
    variance_components: dict[str, float] = field(default_factory=dict)
    intercept_note: str = ""
    residuals: Optional[np.ndarray] = field(default=None, repr=False)
    fitted_values: Optional[np.ndarray] = field(default=None, repr=False)
    effect_components: Optional[np.ndarray] = field(default=None, repr=False)
    journal_index: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        """验证 R² 在 [0, 1]"""
        if not (0.0 <= self.r_squared <= 1.0):
            raise ValueError(f"r_squared must lie in [0, 1], got {self.r_squared}")

    @property
    def names(self) -> list[str]:
        return list(self.coefficients)

    @property
    def slope_names(self) -> list[str]:
        """不含截距和年份效应的斜率名称"""
        excluded = set(self.time_effects) | {INTERCEPT_NAME}
        return [n for n in self.coefficients if n not in excluded]

    def estimates(self, names: Optional[list[str]] = None) -> np.ndarray:
        names = self.names if names is None else names
        return np.array([self.coefficients[n].estimate for n in names])

    def covariance_of(self, names: list[str]) -> np.ndarray:
        idx = [self.names.index(n) for n in names]
        return self.covariance[np.ix_(idx, idx)]

    @property
    def fit_id(self) -> str:
        """由设定与系数决定的稳定标识"""
        payload = json.dumps(
            {
                "spec": self.spec.to_dict(),
                "estimator": self.estimator,
                "coefficients": {k: repr(v.estimate) for k, v in self.coefficients.items()},
                "n_obs": self.n_obs,
            },
            sort_keys=True,
        )
        return hashlib.sha1(payload.encode("utf-8")).hexdigest()[:12]

    def to_dict(self) -> dict[str, Any]:
        return {
            "fit_id": self.fit_id,
            "spec": self.spec.to_dict(),
            "estimator": self.estimator,
            "coefficients": {k: v.to_dict() for k, v in self.coefficients.items()},
            "r_squared": self.r_squared,
            "r_squared_kind": self.r_squared_kind,
            "n_obs": self.n_obs,
            "n_journals": self.n_journals,
            "n_years": self.n_years,
            "rss": self.rss,
            "df_resid": self.df_resid,
            "covariance": self.covariance.tolist(),
            "diagnostics": {k: v.to_dict() for k, v in self.diagnostics.items()},
            "dropped_journals": self.dropped_journals,
            "time_effects": list(self.time_effects),
            "flags": dict(self.flags),
            "variance_components": dict(self.variance_components),
            "intercept_note": self.intercept_note,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PanelFit":
        return cls(
            spec=PanelSpec.from_dict(data["spec"]),
            coefficients={
                k: CoefficientEstimate.from_dict(v) for k, v in data["coefficients"].items()
            },
            r_squared=float(data["r_squared"]),
            r_squared_kind=data.get("r_squared_kind", "overall"),
            n_obs=int(data["n_obs"]),
            n_journals=int(data.get("n_journals", 0)),
            n_years=int(data.get("n_years", 0)),
            estimator=data.get("estimator", "ols"),
            covariance=np.array(data.get("covariance", []), dtype=float),
            rss=float(data.get("rss", float("nan"))),
            df_resid=int(data.get("df_resid", 0)),
            diagnostics={
                k: DiagnosticResult.from_dict(v) for k, v in data.get("diagnostics", {}).items()
            },
            dropped_journals=int(data.get("dropped_journals", 0)),
            time_effects=list(data.get("time_effects", [])),
            flags=dict(data.get("flags", {})),
            variance_components=dict(data.get("variance_components", {})),
            intercept_note=data.get("intercept_note", ""),
        )


# =============================================================================
# 指数推断
# =============================================================================

@dataclass(frozen=True)
class CoefficientTerm:
    """系数模型中的一项"""
    variable: str
    coefficient: float
    std_error: float = 0.0
    stars: str = ""

    def __post_init__(self):
        if not math.isfinite(self.coefficient):
            raise ValueError(f"Coefficient of '{self.variable}' must be finite")
        # 表格排版把标准误印成了负数，这里统一取绝对值
        object.__setattr__(self, "std_error", abs(float(self.std_error)))

    @property
    def significant(self) -> bool:
        return bool(self.stars)

    def to_dict(self) -> dict[str, Any]:
        return {
            "variable": self.variable,
            "coefficient": self.coefficient,
            "std_error": self.std_error,
            "stars": self.stars,
        }


@dataclass(frozen=True)
class CoefficientModel:
    """
    带版本的线性系数模型（变量名 → 系数）。

    Attributes:
        model_id: 模型标识
        target: 目标指数（SJR、IF 或拟合时的响应变量）
        terms: 各项系数
        fixed_effect_note: 固定效应说明
        provenance: 来源（原始回归表或拟合 ID）
        version: 版本号
    """
    model_id: str
    target: str
    terms: tuple[CoefficientTerm, ...]
    fixed_effect_note: str = ""
    provenance: str = ""
    version: int = 1

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        names = [name_key(t.variable) for t in self.terms]
        if len(set(names)) != len(names):
            raise ValueError(f"Duplicate variables in model '{self.model_id}'")

    @property
    def variables(self) -> list[str]:
        return [t.variable for t in self.terms]

    def term(self, variable: str) -> CoefficientTerm:
        key = name_key(variable)
        for t in self.terms:
            if name_key(t.variable) == key:
                return t
        raise KeyError(variable)

    def significant_only(self) -> "CoefficientModel":
        """去掉不显著（无星号）的项"""
        return replace(
            self,
            terms=tuple(t for t in self.terms if t.significant or t.variable == INTERCEPT_NAME),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "model_id": self.model_id,
            "target": self.target,
            "version": self.version,
            "provenance": self.provenance,
            "fixed_effect_note": self.fixed_effect_note,
            "terms": [t.to_dict() for t in self.terms],
        }


@dataclass
class EstimationEntry:
    """
    单个 (期刊, 年份) 的估计结果。

    estimate 恒等于 contributions 各项之和。
    """
    journal: str
    year: Optional[int]
    inputs: dict[str, Any]
    estimate: float
    contributions: dict[str, float]
    missing: list[str] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "journal": self.journal,
            "year": self.year,
            "inputs": dict(self.inputs),
            "estimate": self.estimate,
            "contributions": dict(self.contributions),
            "missing": list(self.missing),
            "flags": list(self.flags),
        }


@dataclass
class EstimationReport:
    """批量估计报告"""
    model_id: str
    target: str
    entries: list[EstimationEntry] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def summary(self) -> dict[str, Any]:
        """数量、平均估计值与各标记计数"""
        estimates = [e.estimate for e in self.entries]
        flag_counts: dict[str, int] = {}
        for entry in self.entries:
            for flag in entry.flags:
                flag_counts[flag] = flag_counts.get(flag, 0) + 1
        return {
            "count": len(self.entries),
            "mean_estimate": float(np.mean(estimates)) if estimates else None,
            "flag_counts": dict(sorted(flag_counts.items())),
        }

    def to_dict(self) -> dict[str, Any]:
        return {
            "model_id": self.model_id,
            "target": self.target,
            "notes": list(self.notes),
            "summary": self.summary,
            "entries": [e.to_dict() for e in self.entries],
        }


# =============================================================================
# 合成数据
# =============================================================================

@dataclass(frozen=True)
class DgpSpec:
    """
    合成面板的数据生成过程。

    Attributes:
        n_journals / n_years: 期刊数与年数
        slopes: 变量名 → 真实系数
        effect_sd: 期刊效应标准差
        effect_corr: 解释变量与期刊效应的相关系数
        noise_sd: 噪声标准差
        error_structure: "iid" 或 "ar1"
        rho: AR(1) 系数
        seed: 随机种子
        time_effect_sd: 年份效应标准差
        intercept: 常数项
        response: 响应变量名
        start_year: 起始年份
    """
    n_journals: int
    n_years: int
    slopes: dict[str, float]
    effect_sd: float = 0.0
    effect_corr: float = 0.0
    noise_sd: float = 1.0
    error_structure: str = ErrorStructure.IID
    rho: float = 0.0
    seed: int = 0
    time_effect_sd: float = 0.0
    intercept: float = 0.0
    response: str = "y"
    start_year: int = 2013

    def __post_init__(self):
        """验证字段值"""
        if self.n_journals < 1 or self.n_years < 1:
            raise ValueError("n_journals and n_years must be >= 1")
        if not self.slopes:
            raise ValueError("At least one slope is required")
        if self.response in self.slopes:
            raise ValueError(f"Response '{self.response}' cannot be a regressor")
        for label, sd in (("effect_sd", self.effect_sd), ("noise_sd", self.noise_sd),
                          ("time_effect_sd", self.time_effect_sd)):
            if sd < 0:
                raise ValueError(f"{label} must be >= 0, got {sd}")
        if not -1.0 <= self.effect_corr <= 1.0:
            raise ValueError(f"effect_corr must lie in [-1, 1], got {self.effect_corr}")
        if self.error_structure not in (ErrorStructure.IID, ErrorStructure.AR1):
            raise ValueError(f"Invalid error_structure '{self.error_structure}'")
        if abs(self.rho) >= 1.0:
            raise ValueError(f"|rho| must be < 1, got {self.rho}")
        object.__setattr__(self, "slopes", dict(self.slopes))

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_journals": self.n_journals,
            "n_years": self.n_years,
            "slopes": dict(self.slopes),
            "effect_sd": self.effect_sd,
            "effect_corr": self.effect_corr,
            "noise_sd": self.noise_sd,
            "error_structure": self.error_structure,
            "rho": self.rho,
            "seed": self.seed,
            "time_effect_sd": self.time_effect_sd,
            "intercept": self.intercept,
            "response": self.response,
            "start_year": self.start_year,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "DgpSpec":
        return cls(**data)


@dataclass
class GroundTruth:
    """合成面板的真实参数"""
    spec: DgpSpec
    journal_effects: dict[str, float]
    time_effects: dict[int, float]

    def to_dict(self) -> dict[str, Any]:
        return {
            "spec": self.spec.to_dict(),
            "slopes": dict(self.spec.slopes),
            "seed": self.spec.seed,
            "journal_effects": dict(self.journal_effects),
            "time_effects": {str(k): v for k, v in self.time_effects.items()},
        }
