# 相关性服务
# Correlation Service

"""
相关性服务模块 - 相关矩阵、相关聚类与方差膨胀因子。

支持功能：
- 混合样本 Pearson 相关矩阵
- 按 |r| >= 阈值连边的连通分量聚类（单链接），每组选一个代表变量
- 手动指定代表变量
- VIF = 1 / (1 - R²_j)，完全共线时标记为无穷大
- 方阵 CSV 的读写
"""

import logging
from typing import Optional

import numpy as np
import pandas as pd
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from src.config_manager import ConfigManager
from src.models import ClusterPartition, CorrelationMatrix, PanelDataset, VifReport

# 配置日志
logger = logging.getLogger(__name__)

# 变量选择表中的两组变量（SJR 由 WOS 变量解释，IF 由 SCOPUS 变量解释）
VARIABLE_SETS = {
    "table4-sjr": [
        "JournalImpactFactor",
        "EigenfactorScore",
        "ImpactFactorWithoutJournalSelfCites",
        "5YearImpactFactor",
        "ImmediacyIndex",
        "CitableItems",
        "ArticleInfluenceScore",
        "AverageJournalImpactFactorPercentile",
        "NormalizedEigenfactor",
    ],
    "table4-if": [
        "Rank",
        "SJR",
        "TotalDocs",
        "TotalDocs3years",
        "TotalRefs",
        "TotalCites3years",
        "CitableDocs3years",
        "CitesDoc2years",
        "RefDoc",
        "CitesDoc4Years",
        "SelfCites3Years",
        "UncitedDocs3Years",
        "InternationalCollaboration",
        "CitesDoc3Years",
        "SJRBestQuartileQ2",
        "SJRBestQuartileQ3",
        "SJRBestQuartileQ4",
    ],
}

# 1 - R² 小于该值视为完全共线
COLLINEARITY_TOL = 1e-10


class CorrelationError(Exception):
    """相关性分析错误异常基类"""
    pass


class ZeroVarianceError(CorrelationError):
    """变量在混合样本上方差为 0"""

    def __init__(self, variable: str):
        self.variable = variable
        super().__init__(f"Variable '{variable}' has zero variance over the pooled observations")


class CorrelationService:
    """
    相关性服务。

    Attributes:
        config: 配置管理器实例，提供默认聚类阈值

    Example:
        >>> service = CorrelationService(ConfigManager())
        >>> matrix = service.correlation_matrix(panel, ["SJR", "CitesDoc2years"])
        >>> partition = service.cluster(matrix)
    """

    def __init__(self, config: ConfigManager):
        self.config = config

    def resolve_variables(self, d: PanelDataset, spec: list[str]) -> list[str]:
        """
        解析变量列表；"table4-sjr" / "table4-if" 展开为对应变量组。

        Raises:
            CorrelationError: 变量不存在
        """
        names: list[str] = []
        for item in spec:
            for name in VARIABLE_SETS.get(item.lower(), [item]):
                if not d.has_variable(name):
                    raise CorrelationError(f"Variable '{name}' not found in the panel")
                resolved = d.variable(name).name
                if resolved not in names:
                    names.append(resolved)
        return names

    def correlation_matrix(self, d: PanelDataset, variables: list[str]) -> CorrelationMatrix:
        """
        在所有 (期刊, 年份) 行上计算混合 Pearson 相关矩阵。

        Raises:
            ZeroVarianceError: 某个变量方差为 0
            CorrelationError: 观测少于 2 行
        """
        names = [d.variable(v).name for v in variables]
        data, _, _ = d.pooled(names)
        if data.shape[0] < 2:
            raise CorrelationError(f"At least 2 complete observations are required, got {data.shape[0]}")
        sd = data.std(axis=0)
        for name, s in zip(names, sd):
            if s == 0:
                raise ZeroVarianceError(name)
        matrix = np.atleast_2d(np.corrcoef(data, rowvar=False))
        matrix = np.clip((matrix + matrix.T) / 2.0, -1.0, 1.0)
        np.fill_diagonal(matrix, 1.0)
        logger.info(f"相关矩阵: {len(names)} 个变量，{data.shape[0]} 个观测")
        return CorrelationMatrix(variables=names, matrix=matrix)

    def cluster(
        self,
        m: CorrelationMatrix,
        threshold: Optional[float] = None,
        representatives: Optional[list[str]] = None,
    ) -> ClusterPartition:
        """
        相关聚类：|r| >= 阈值的变量之间连边，取连通分量。

        组按最小列下标排序，组内按列顺序。代表变量为与组内其他变量平均 |r|
        最大者，并列取列顺序靠前者；representatives 可手动覆盖。

        Args:
            m: 相关矩阵
            threshold: 阈值（0 < threshold < 1），None 取配置
            representatives: 手动指定的代表变量

        Raises:
            CorrelationError: 阈值不合法或手动代表变量无效
        """
        threshold = self.config.get_correlation_threshold() if threshold is None else threshold
        if not 0 < threshold < 1:
            raise CorrelationError(f"threshold must lie in (0, 1), got {threshold}")

        absolute = np.abs(m.matrix)
        adjacency = absolute >= threshold
        np.fill_diagonal(adjacency, False)
        _, labels = connected_components(csr_matrix(adjacency), directed=False)

        order: list[int] = []
        for label in labels:
            if label not in order:
                order.append(int(label))
        groups_idx = [np.nonzero(labels == label)[0] for label in order]

        groups = [[m.variables[i] for i in idx] for idx in groups_idx]
        chosen = []
        for idx in groups_idx:
            if idx.size == 1:
                chosen.append(m.variables[idx[0]])
                continue
            block = absolute[np.ix_(idx, idx)]
            mean_abs = (block.sum(axis=1) - 1.0) / (idx.size - 1)
            chosen.append(m.variables[idx[int(np.argmax(mean_abs))]])

        for name in representatives or []:
            if name not in m.variables:
                raise CorrelationError(f"Representative '{name}' is not in the matrix")
            g = next(k for k, group in enumerate(groups) if name in group)
            overridden = [r for r in (representatives or []) if r in groups[g]]
            if len(overridden) > 1:
                raise CorrelationError(f"Several representatives given for one cluster: {overridden}")
            chosen[g] = name

        logger.info(f"相关聚类: 阈值 {threshold}，{len(groups)} 个组")
        return ClusterPartition(groups=groups, representatives=chosen)

    def vif(self, d: PanelDataset, variables: list[str]) -> VifReport:
        """
        方差膨胀因子：变量 j 对其余变量（含截距）回归得到 R²_j，VIF_j = 1 / (1 - R²_j)。

        只有一个变量时 VIF 为 1。完全共线的变量记为无穷大并列入 infinite。

        Raises:
            ZeroVarianceError: 某个变量方差为 0
        """
        names = [d.variable(v).name for v in variables]
        data, _, _ = d.pooled(names)
        values: dict[str, float] = {}
        infinite: list[str] = []
        if len(names) == 1:
            return VifReport(values={names[0]: 1.0})
        n_rows = data.shape[0]
        for j, name in enumerate(names):
            target = data[:, j]
            centered = target - target.mean()
            tss = float(centered @ centered)
            if tss == 0:
                raise ZeroVarianceError(name)
            others = np.column_stack([np.ones(n_rows), np.delete(data, j, axis=1)])
            coef, *_ = np.linalg.lstsq(others, target, rcond=None)
            residual = target - others @ coef
            unexplained = float(residual @ residual) / tss
            if unexplained < COLLINEARITY_TOL:
                values[name] = float("inf")
                infinite.append(name)
            else:
                values[name] = max(1.0, 1.0 / unexplained)
        if infinite:
            logger.warning(f"完全共线的变量: {infinite}")
        return VifReport(values=values, infinite=infinite)

    @staticmethod
    def matrix_frame(m: CorrelationMatrix) -> pd.DataFrame:
        """带表头的方阵表格，首列为变量名"""
        frame = pd.DataFrame(m.matrix, index=m.variables, columns=m.variables)
        frame.index.name = "variable"
        return frame

    @staticmethod
    def load_matrix_csv(path: str, symmetrize: bool = True) -> CorrelationMatrix:
        """
        读取方阵 CSV（首列为变量名，表头为变量名）。

        发表的矩阵存在转录误差，symmetrize 为 True 时取 (M + Mᵀ) / 2。

        Raises:
            CorrelationError: 文件不可读或不是方阵
        """
        try:
            frame = pd.read_csv(path, index_col=0)
        except (OSError, ValueError) as e:
            raise CorrelationError(f"Unable to read correlation matrix {path}: {e}") from e
        names = [str(c).strip() for c in frame.columns]
        rows = [str(r).strip() for r in frame.index]
        if names != rows:
            raise CorrelationError(f"{path}: row labels do not match column labels")
        matrix = frame.to_numpy(dtype=float)
        if symmetrize:
            gap = float(np.max(np.abs(matrix - matrix.T)))
            if gap > 0:
                logger.warning(f"{path}: 矩阵不对称（最大差 {gap:.3g}），取对称平均")
            matrix = (matrix + matrix.T) / 2.0
        return CorrelationMatrix(variables=names, matrix=matrix)
