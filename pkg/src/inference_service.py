# 指数推断服务
# Inference Service

"""
指数推断服务模块 - 用线性系数模型估计缺失的期刊指数。

支持功能：
- 单行估计：逐项贡献、分类水平展开为指示变量（如 SJRBestQuartile = "Q2"）
- 缺失变量报错，或在允许时按 0 处理并标记
- 只保留显著项
- 数据集批量估计（按行并行，输出顺序确定）
- 由面板拟合结果生成系数模型
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Optional

import numpy as np
import pandas as pd

from src.config_manager import ConfigManager
from src.models import (
    INTERCEPT_NAME,
    CoefficientModel,
    CoefficientTerm,
    EffectsKind,
    EstimationEntry,
    EstimationReport,
    PanelDataset,
    PanelFit,
    name_key,
)

# 配置日志
logger = logging.getLogger(__name__)


class EstimationFlag:
    """估计结果标记"""
    FIXED_EFFECT_ASSUMED_ZERO = "fixed_effect_assumed_zero"
    PARTIAL_ESTIMATE = "partial_estimate"
    NEGATIVE_ESTIMATE = "negative_estimate"


EMBEDDED_FIXED_EFFECT_NOTE = (
    "journal fixed effects were not published; alpha_i = 0 is assumed, "
    "so levels carry an unknown journal-specific offset"
)


class InferenceError(Exception):
    """推断错误异常基类"""
    pass


class MissingVariablesError(InferenceError):
    """输入行缺少模型需要的变量"""

    def __init__(self, missing: list[str]):
        self.missing = missing
        super().__init__(f"Missing model variables: {', '.join(missing)}")


# 已知的分类变量完整水平；模型中没有指示项的水平即基准水平
KNOWN_LEVELS: dict[str, tuple[str, ...]] = {
    name_key("SJRBestQuartile"): ("Q1", "Q2", "Q3", "Q4"),
}


def _split_inputs(row: dict[str, Any]) -> tuple[dict[str, float], dict[str, str]]:
    """
    把输入行拆为数值（name_key → 值）和文本（name_key → 原始文本）。

    文本是否为分类水平由模型决定：名字本身是模型项的文本视为无法解析的数值。
    """
    values: dict[str, float] = {}
    labels: dict[str, str] = {}
    for name, value in row.items():
        if value is None:
            continue
        key = name_key(name)
        if isinstance(value, str):
            text = value.strip()
            if not text:
                continue
            try:
                number = float(text)
            except ValueError:
                labels[key] = text
                continue
        else:
            number = float(value)
        if not math.isfinite(number):
            continue
        values[key] = number
    return values, labels


def _indicator_value(
    key: str,
    labels: dict[str, str],
    term_keys: set[str],
    levels: dict[str, tuple[str, ...]],
) -> Optional[float]:
    """
    指示项 parent+level 的取值：等于给定水平时为 1，其余已知水平为 0。

    给定水平既没有对应的模型项也不在该变量的已知水平中时返回 None（按缺失处理）。
    """
    parents = [p for p in labels if p not in term_keys and key.startswith(p) and key != p]
    if not parents:
        return None
    parent = max(parents, key=len)
    level_key = name_key(labels[parent])
    if key == parent + level_key:
        return 1.0
    known = {name_key(level) for level in levels.get(parent, ())}
    if parent + level_key in term_keys or level_key in known:
        return 0.0
    return None


class InferenceService:
    """
    指数推断服务。

    Attributes:
        config: 配置管理器实例，提供并行度

    Example:
        >>> service = InferenceService(ConfigManager())
        >>> model = ModelRegistry().get("table8_if_reduced")
        >>> entry = service.estimate(model, {"CitesDoc2years": 1.6, "SJRBestQuartile": "Q1", ...})
        >>> print(entry.estimate)
    """

    def __init__(self, config: ConfigManager):
        self.config = config

    def estimate(
        self,
        model: CoefficientModel,
        row: dict[str, Any],
        allow_partial: bool = False,
        significant_only: bool = False,
        journal: str = "",
        year: Optional[int] = None,
        levels: Optional[dict[str, tuple[str, ...]]] = None,
    ) -> EstimationEntry:
        """
        估计单行：estimate = Σ 系数 × 取值，截距项取值为 1。

        Args:
            model: 系数模型
            row: 变量名 → 取值；分类变量可直接给水平标签
            allow_partial: 缺失变量按 0 处理并标记 partial_estimate
            significant_only: 只使用带星号的项
            journal / year: 写入结果的标识
            levels: 分类变量名 → 全部水平，用于识别基准水平；
                SJRBestQuartile 等已知变量总是使用内置水平

        Returns:
            EstimationEntry，contributions 之和恰为 estimate。
            无法解析的数值、未知的分类水平都按缺失变量处理

        Raises:
            MissingVariablesError: 缺少变量且未允许部分估计
        """
        if significant_only:
            model = model.significant_only()
        values, labels = _split_inputs(row)
        term_keys = {name_key(t.variable) for t in model.terms}
        known_levels = {name_key(k): tuple(v) for k, v in (levels or {}).items()}
        known_levels.update(KNOWN_LEVELS)
        unparsed = sorted(name for name in row if name_key(name) in labels and name_key(name) in term_keys)
        if unparsed:
            logger.warning(f"{journal or '输入行'} 的数值无法解析: {unparsed}")

        contributions: dict[str, float] = {}
        inputs: dict[str, Any] = {}
        missing: list[str] = []
        for term in model.terms:
            if term.variable == INTERCEPT_NAME:
                value = 1.0
            else:
                key = name_key(term.variable)
                if key in values:
                    value = values[key]
                else:
                    indicator = _indicator_value(key, labels, term_keys, known_levels)
                    if indicator is None:
                        missing.append(term.variable)
                        continue
                    value = indicator
            inputs[term.variable] = value
            contributions[term.variable] = term.coefficient * value

        flags: list[str] = []
        if missing:
            if not allow_partial:
                raise MissingVariablesError(missing)
            logger.warning(f"{journal or '输入行'} 缺少 {missing}，按 0 处理")
            for name in missing:
                contributions[name] = 0.0
            flags.append(EstimationFlag.PARTIAL_ESTIMATE)
        if model.fixed_effect_note:
            flags.append(EstimationFlag.FIXED_EFFECT_ASSUMED_ZERO)

        estimate = math.fsum(contributions.values())
        if estimate < 0:
            flags.append(EstimationFlag.NEGATIVE_ESTIMATE)
        return EstimationEntry(
            journal=journal,
            year=year,
            inputs=inputs,
            estimate=estimate,
            contributions=contributions,
            missing=missing,
            flags=flags,
        )

    def estimate_batch(
        self,
        model: CoefficientModel,
        d: PanelDataset,
        allow_partial: bool = False,
        significant_only: bool = False,
    ) -> EstimationReport:
        """
        对数据集中每个存在的 (期刊, 年份) 行估计。

        缺变量的行在 allow_partial 为 False 时仍写入报告：估计值为 NaN，
        missing 列出缺失变量，不中断整批。

        Returns:
            EstimationReport（按期刊、年份顺序）
        """
        journal_idx, year_idx = np.nonzero(d.present)
        levels = {meta.name: meta.levels for meta in d.variables if meta.is_categorical}
        cells = list(zip(journal_idx.tolist(), year_idx.tolist()))

        def run(cell: tuple[int, int]) -> EstimationEntry:
            j, t = cell
            row = d.row(j, t)
            try:
                return self.estimate(
                    model, row,
                    allow_partial=allow_partial,
                    significant_only=significant_only,
                    journal=d.journals[j],
                    year=d.years[t],
                    levels=levels,
                )
            except MissingVariablesError as e:
                return EstimationEntry(
                    journal=d.journals[j],
                    year=d.years[t],
                    inputs={},
                    estimate=float("nan"),
                    contributions={},
                    missing=e.missing,
                    flags=[EstimationFlag.PARTIAL_ESTIMATE],
                )

        with ThreadPoolExecutor(max_workers=self.config.get_n_jobs()) as pool:
            entries = list(pool.map(run, cells))

        notes = []
        if model.fixed_effect_note:
            notes.append(model.fixed_effect_note)
        failed = sum(1 for e in entries if math.isnan(e.estimate))
        if failed:
            notes.append(f"{failed} rows lack model variables and have no estimate")
            logger.warning(f"{failed} 行缺少模型变量")
        logger.info(f"批量估计完成: 模型 {model.model_id}，{len(entries)} 行")
        return EstimationReport(model_id=model.model_id, target=model.target, entries=entries, notes=notes)

    @staticmethod
    def report_frame(report: EstimationReport) -> pd.DataFrame:
        """每行一个估计的表格：journal、year、estimate、各项贡献、missing、flags"""
        rows = []
        for entry in report.entries:
            record: dict[str, Any] = {"journal": entry.journal, "year": entry.year, "estimate": entry.estimate}
            record.update({f"contrib_{k}": v for k, v in entry.contributions.items()})
            record["missing"] = ";".join(entry.missing)
            record["flags"] = ";".join(entry.flags)
            rows.append(record)
        return pd.DataFrame(rows, columns=None if rows else ["journal", "year", "estimate", "missing", "flags"])


def model_from_fit(fit: PanelFit) -> CoefficientModel:
    """
    由面板拟合结果生成系数模型：保留截距（若有）和斜率，不含年份效应。

    同一个拟合结果总是得到相同的模型（model_id 由 fit_id 决定）。
    """
    names = ([INTERCEPT_NAME] if INTERCEPT_NAME in fit.coefficients else []) + fit.slope_names
    terms = tuple(
        CoefficientTerm(
            variable=name,
            coefficient=fit.coefficients[name].estimate,
            std_error=fit.coefficients[name].std_error,
            stars=fit.coefficients[name].stars,
        )
        for name in names
    )
    note = ""
    if fit.spec.effects in (EffectsKind.FIXED, EffectsKind.FIXED_TIME):
        note = "journal fixed effects were estimated but are not carried; alpha_i = 0 is assumed"
        if fit.time_effects:
            note += "; year effects dropped"
    return CoefficientModel(
        model_id=f"fit:{fit.fit_id}",
        target=fit.spec.response,
        terms=terms,
        fixed_effect_note=note,
        provenance=f"panel fit {fit.fit_id} ({fit.spec.effects}, {fit.estimator})",
    )
