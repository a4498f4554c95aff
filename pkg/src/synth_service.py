# 合成数据服务
# Synth Service

"""
合成数据服务模块 - 由已知数据生成过程构造期刊面板，用作估计器的检验基准。

支持功能：
- y_it = c + α_i + λ_t + Σ β_k x_itk + u_it
- 解释变量为标准正态，可与期刊效应相关
- 误差为独立同分布或平稳 AR(1)
- 随机数按 (种子, 数据流, 期刊) 派生，与生成顺序无关，可并行
- 返回面板与真实参数
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Any

import numpy as np

from src.config_manager import ConfigManager
from src.models import (
    DgpSpec,
    ErrorStructure,
    GroundTruth,
    PanelDataset,
    VariableKind,
    VariableMeta,
    VariableSource,
)

# 配置日志
logger = logging.getLogger(__name__)


class Stream:
    """随机数据流编号"""
    EFFECT = 0
    REGRESSORS = 1
    NOISE = 2
    TIME = 3


class SynthError(Exception):
    """合成数据错误异常"""
    pass


def _generator(seed: int, stream: int, journal: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, stream, journal]))


def journal_label(index: int, n_journals: int) -> str:
    """J0001、J0002 ...，位数随期刊数增加"""
    width = max(4, len(str(n_journals)))
    return f"J{index + 1:0{width}d}"


class SynthService:
    """
    合成数据服务。

    每个期刊的效应、解释变量与噪声分别来自由 (seed, 数据流, 期刊) 派生的独立生成器，
    每个 (年份, 变量) 占固定位置，因此单元格取值与生成顺序和并行度无关。

    Attributes:
        config: 配置管理器实例，提供并行度

    Example:
        >>> service = SynthService(ConfigManager())
        >>> spec = DgpSpec(n_journals=100, n_years=6, slopes={"x": 2.0}, effect_sd=1.0, seed=7)
        >>> panel, truth = service.generate(spec)
    """

    def __init__(self, config: ConfigManager):
        self.config = config

    @staticmethod
    def spec_from_dict(data: dict[str, Any]) -> DgpSpec:
        """
        由 JSON 字典构造 DgpSpec。

        Raises:
            SynthError: 字段缺失或取值无效
        """
        try:
            return DgpSpec.from_dict(data)
        except (TypeError, ValueError) as e:
            raise SynthError(f"Invalid data-generating process: {e}") from e

    def _journal_draws(self, spec: DgpSpec, j: int) -> tuple[float, np.ndarray, np.ndarray]:
        """一个期刊的标准化效应、解释变量 (T, K) 与误差 (T,)"""
        T = spec.n_years
        K = len(spec.slopes)
        a = float(_generator(spec.seed, Stream.EFFECT, j).standard_normal())
        w = _generator(spec.seed, Stream.REGRESSORS, j).standard_normal((T, K))
        x = spec.effect_corr * a + math.sqrt(1.0 - spec.effect_corr ** 2) * w

        eps = _generator(spec.seed, Stream.NOISE, j).standard_normal(T)
        if spec.error_structure == ErrorStructure.AR1 and T > 1:
            # 平稳 AR(1)，边际标准差为 noise_sd
            u = np.empty(T)
            u[0] = eps[0]
            innovation = math.sqrt(1.0 - spec.rho ** 2)
            for t in range(1, T):
                u[t] = spec.rho * u[t - 1] + innovation * eps[t]
            eps = u
        return a, x, spec.noise_sd * eps

    def generate(self, spec: DgpSpec) -> tuple[PanelDataset, GroundTruth]:
        """
        按数据生成过程构造平衡面板。

        Returns:
            (面板，变量依次为响应变量和各解释变量；真实参数)
        """
        J, T = spec.n_journals, spec.n_years
        slopes = np.array(list(spec.slopes.values()), dtype=float)
        with ThreadPoolExecutor(max_workers=self.config.get_n_jobs()) as pool:
            draws = list(pool.map(lambda j: self._journal_draws(spec, j), range(J)))

        time_effects = spec.time_effect_sd * _generator(spec.seed, Stream.TIME).standard_normal(T)
        values = np.empty((J, T, 1 + slopes.size))
        journal_effects = np.empty(J)
        for j, (a, x, u) in enumerate(draws):
            journal_effects[j] = spec.effect_sd * a
            values[j, :, 0] = spec.intercept + journal_effects[j] + time_effects + x @ slopes + u
            values[j, :, 1:] = x

        journals = tuple(journal_label(j, J) for j in range(J))
        years = tuple(spec.start_year + t for t in range(T))
        variables = tuple(
            VariableMeta(name=name, source=VariableSource.DERIVED, kind=VariableKind.QUALITY_NUMERIC,
                         description="synthetic")
            for name in [spec.response] + list(spec.slopes)
        )
        panel = PanelDataset(
            journals=journals,
            years=years,
            variables=variables,
            values=values,
            missing=np.zeros(values.shape, dtype=bool),
            present=np.ones((J, T), dtype=bool),
        )
        truth = GroundTruth(
            spec=spec,
            journal_effects={journals[j]: float(journal_effects[j]) for j in range(J)},
            time_effects={years[t]: float(time_effects[t]) for t in range(T)},
        )
        logger.info(f"合成面板: {J} 个期刊 × {T} 年，{slopes.size} 个解释变量，seed={spec.seed}")
        return panel, truth
