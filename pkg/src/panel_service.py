# 面板回归服务
# Panel Service

"""
面板回归服务模块 - 混合 OLS、期刊固定效应、期刊+年份固定效应、随机效应与 FGLS。

支持功能：
- 秩揭示的列主元 QR 求解（秩亏时指出依赖列）
- 组内变换（减去期刊均值），自由度按吸收的期刊效应修正，报告组内 R²
- 年份虚拟变量（year2014, ...）
- Swamy-Arora 方差分量与按期刊的 θ 准去均值，可强制 θ
- F 检验（固定效应是否全为零）、Hausman 检验、Breusch-Pagan LM 检验（非平衡形式）
- 两步 FGLS：估计 T×T 期刊内残差协方差，奇异时加岭并标记
- 与回归表一致的文本表格（估计值、括号标准误、星号、R²、N、诊断）
"""

import logging
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np
import pandas as pd
from scipy import stats
from scipy.linalg import LinAlgError, cholesky, qr, solve_triangular
from tabulate import tabulate

from src.config_manager import ConfigManager
from src.models import (
    INTERCEPT_NAME,
    CoefficientEstimate,
    DiagnosticResult,
    EffectsKind,
    PanelDataset,
    PanelFit,
    PanelSpec,
)

# 配置日志
logger = logging.getLogger(__name__)

# 列主元 QR 对角元相对阈值
RANK_TOL = 1e-10

EFFECTS_ORDER = (
    EffectsKind.POOLED,
    EffectsKind.RANDOM,
    EffectsKind.FIXED,
    EffectsKind.FIXED_TIME,
)

EFFECTS_LABELS = {
    EffectsKind.POOLED: "POLS",
    EffectsKind.RANDOM: "RANDOM",
    EffectsKind.FIXED: "FIXED",
    EffectsKind.FIXED_TIME: "FIXED&TIME",
}


class PanelError(Exception):
    """面板回归错误异常基类"""
    pass


class PanelSpecError(PanelError):
    """回归设定无效：变量不存在、为分类变量或估计方法组合不支持"""
    pass


class RankDeficiencyError(PanelError):
    """设计矩阵秩亏"""

    def __init__(self, column: str):
        self.column = column
        super().__init__(f"Design matrix is rank deficient: column '{column}' is linearly dependent")


class SpecMismatchError(PanelError):
    """两个拟合结果的设定或样本不一致，无法比较"""
    pass


class InsufficientDataError(PanelError):
    """观测不足以估计模型或检验"""
    pass


@dataclass
class _Sample:
    """一次拟合使用的样本（按期刊、年份排序）"""
    y: np.ndarray
    X: np.ndarray
    names: list[str]
    journal: np.ndarray
    year: np.ndarray
    n_journals: int
    years: list[int]
    dropped: int
    year_labels: tuple[int, ...] = ()

    @property
    def n_obs(self) -> int:
        return self.y.size

    def counts(self) -> np.ndarray:
        return np.bincount(self.journal, minlength=self.n_journals)


def group_means(values: np.ndarray, codes: np.ndarray, n_groups: int) -> np.ndarray:
    """按组求均值；values 可以是一维或二维"""
    counts = np.bincount(codes, minlength=n_groups).astype(float)
    if values.ndim == 1:
        return np.bincount(codes, weights=values, minlength=n_groups) / counts
    sums = np.zeros((n_groups, values.shape[1]))
    np.add.at(sums, codes, values)
    return sums / counts[:, None]


def demean(values: np.ndarray, codes: np.ndarray, n_groups: int) -> np.ndarray:
    """组内变换：减去所在组的均值"""
    return values - group_means(values, codes, n_groups)[codes]


def _least_squares(X: np.ndarray, y: np.ndarray, names: list[str]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    列主元 QR 最小二乘。

    Returns:
        (系数, 残差, (XᵀX)⁻¹)

    Raises:
        RankDeficiencyError: 秩亏，指出主元顺序中第一个依赖列
    """
    n, k = X.shape
    if k == 0:
        return np.zeros(0), y.copy(), np.zeros((0, 0))
    Q, R, P = qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    top = diag[0] if diag.size else 0.0
    rank = int(np.sum(diag > RANK_TOL * top)) if top > 0 else 0
    if rank < k:
        raise RankDeficiencyError(names[P[rank]])
    R_inv = solve_triangular(R, np.eye(k))
    beta = np.empty(k)
    beta[P] = R_inv @ (Q.T @ y)
    xtx_inv = np.empty((k, k))
    xtx_inv[np.ix_(P, P)] = R_inv @ R_inv.T
    return beta, y - X @ beta, xtx_inv


def _estimates(
    names: list[str],
    beta: np.ndarray,
    cov: np.ndarray,
    dof: Optional[int],
) -> dict[str, CoefficientEstimate]:
    """dof 为 None 时使用正态分布计算 p 值"""
    se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        t_stat = beta / se
    if dof is None:
        p = 2.0 * stats.norm.sf(np.abs(t_stat))
    else:
        p = 2.0 * stats.t.sf(np.abs(t_stat), dof)
    return {
        name: CoefficientEstimate(
            estimate=float(b), std_error=float(s), t_stat=float(t), p_value=float(pv)
        )
        for name, b, s, t, pv in zip(names, beta, se, t_stat, p)
    }


def _r_squared(rss: float, tss: float) -> float:
    if tss <= 0:
        return 1.0 if rss <= 0 else 0.0
    return float(min(max(1.0 - rss / tss, 0.0), 1.0))


class PanelService:
    """
    面板回归服务。

    Attributes:
        config: 配置管理器实例，提供 FGLS 岭正则系数

    Example:
        >>> service = PanelService(ConfigManager())
        >>> spec = PanelSpec("SJR", ("JournalImpactFactor",), "fixed")
        >>> fit = service.fit(panel, spec)
        >>> print(service.format_fit_table([fit]))
    """

    def __init__(self, config: ConfigManager):
        self.config = config

    # -------------------------------------------------------------------------
    # 样本准备
    # -------------------------------------------------------------------------

    def _check_spec(self, d: PanelDataset, spec: PanelSpec) -> list[str]:
        names = []
        for name in (spec.response,) + spec.regressors:
            if not d.has_variable(name):
                raise PanelSpecError(f"Variable '{name}' not found in the panel")
            meta = d.variable(name)
            if meta.is_categorical:
                raise PanelSpecError(
                    f"Variable '{meta.name}' is categorical; encode it into indicators first"
                )
            names.append(meta.name)
        if names[0] in names[1:]:
            raise PanelSpecError(f"Response '{names[0]}' cannot be a regressor")
        return names

    def drop_singleton_journals(self, d: PanelDataset, spec: PanelSpec) -> tuple[PanelDataset, int]:
        """
        丢弃在设定变量上只有一个完整观测的期刊。

        Returns:
            (数据集, 丢弃的期刊数)
        """
        names = self._check_spec(d, spec)
        idx = [d.index_of(n) for n in names]
        complete = d.present & ~d.missing[:, :, idx].any(axis=2)
        per_journal = complete.sum(axis=1)
        keep = np.nonzero(per_journal != 1)[0]
        dropped = int(np.sum(per_journal == 1))
        if dropped:
            logger.warning(f"丢弃 {dropped} 个只有一个观测的期刊")
        return d.subset(journal_idx=keep), dropped

    def _sample(self, d: PanelDataset, spec: PanelSpec, drop_singletons: bool) -> _Sample:
        dropped = 0
        if drop_singletons:
            d, dropped = self.drop_singleton_journals(d, spec)
        names = self._check_spec(d, spec)
        data, journal_idx, year_idx = d.pooled(names)
        if data.shape[0] == 0:
            raise InsufficientDataError("No complete observations for the requested variables")
        codes, journal = np.unique(journal_idx, return_inverse=True)
        return _Sample(
            y=data[:, 0],
            X=data[:, 1:],
            names=names[1:],
            journal=journal,
            year=year_idx,
            n_journals=codes.size,
            years=[d.years[t] for t in np.unique(year_idx)],
            dropped=dropped,
            year_labels=tuple(d.years),
        )

    def _year_dummies(self, sample: _Sample) -> tuple[np.ndarray, list[str]]:
        """除第一个出现的年份外，每个年份一个虚拟变量"""
        present = np.unique(sample.year)
        columns = []
        names = []
        for t in present[1:]:
            columns.append((sample.year == t).astype(float))
            names.append(f"year{sample.year_labels[t]}")
        if not columns:
            return np.zeros((sample.n_obs, 0)), []
        return np.column_stack(columns), names

    # -------------------------------------------------------------------------
    # 拟合
    # -------------------------------------------------------------------------

    def fit(self, d: PanelDataset, spec: PanelSpec, theta: Optional[float] = None) -> PanelFit:
        """
        按设定拟合面板模型。

        - pooled: 含截距的 OLS
        - fixed: 组内变换后 OLS，自由度 n - J - k，组内 R²
        - fixed_time: 组内变换 + T-1 个年份虚拟变量
        - random: Swamy-Arora 准去均值；theta 可强制所有期刊的 θ
        - spec.gls 为 True 时转入 fgls

        固定效应拟合会先丢弃只有一个观测的期刊并报告数量。标准误为同方差公式。

        Raises:
            PanelSpecError: 设定无效
            RankDeficiencyError: 设计矩阵秩亏
            InsufficientDataError: 残差自由度不足
        """
        if spec.gls:
            return self.fgls(d, spec)
        if spec.effects == EffectsKind.POOLED:
            result = self._fit_pooled(self._sample(d, spec, drop_singletons=False), spec)
        elif spec.effects in (EffectsKind.FIXED, EffectsKind.FIXED_TIME):
            result = self._fit_within(self._sample(d, spec, drop_singletons=True), spec)
        elif spec.effects == EffectsKind.RANDOM:
            result = self._fit_random(self._sample(d, spec, drop_singletons=False), spec, theta)
        else:
            raise PanelSpecError(f"Unsupported effects '{spec.effects}'")
        logger.info(
            f"{EFFECTS_LABELS[spec.effects]} 拟合完成: N={result.n_obs}，J={result.n_journals}，"
            f"R²={result.r_squared:.4f}"
        )
        return result

    def _fit_pooled(self, sample: _Sample, spec: PanelSpec) -> PanelFit:
        X = np.column_stack([np.ones(sample.n_obs), sample.X])
        names = [INTERCEPT_NAME] + sample.names
        beta, residuals, xtx_inv = _least_squares(X, sample.y, names)
        dof = sample.n_obs - X.shape[1]
        if dof <= 0:
            raise InsufficientDataError(f"No residual degrees of freedom ({sample.n_obs} obs, {X.shape[1]} columns)")
        rss = float(residuals @ residuals)
        centered = sample.y - sample.y.mean()
        cov = rss / dof * xtx_inv
        return PanelFit(
            spec=spec,
            coefficients=_estimates(names, beta, cov, dof),
            r_squared=_r_squared(rss, float(centered @ centered)),
            r_squared_kind="overall",
            n_obs=sample.n_obs,
            n_journals=sample.n_journals,
            n_years=len(sample.years),
            estimator="ols",
            covariance=cov,
            rss=rss,
            df_resid=dof,
            intercept_note="intercept estimated",
            residuals=residuals,
            fitted_values=sample.y - residuals,
            effect_components=np.zeros(sample.n_obs),
            journal_index=sample.journal,
        )

    def _within_design(self, sample: _Sample, spec: PanelSpec) -> tuple[np.ndarray, list[str], list[str]]:
        X = sample.X
        names = list(sample.names)
        time_names: list[str] = []
        if spec.effects == EffectsKind.FIXED_TIME:
            dummies, time_names = self._year_dummies(sample)
            X = np.column_stack([X, dummies])
            names += time_names
        return X, names, time_names

    def _fit_within(self, sample: _Sample, spec: PanelSpec) -> PanelFit:
        X, names, time_names = self._within_design(sample, spec)
        J = sample.n_journals
        X_w = demean(X, sample.journal, J)
        y_w = demean(sample.y, sample.journal, J)
        beta, residuals, xtx_inv = _least_squares(X_w, y_w, names)
        dof = sample.n_obs - J - X.shape[1]
        if dof <= 0:
            raise InsufficientDataError(
                f"No residual degrees of freedom ({sample.n_obs} obs, {J} journals, {X.shape[1]} slopes)"
            )
        rss = float(residuals @ residuals)
        cov = rss / dof * xtx_inv
        effects = group_means(sample.y, sample.journal, J) - group_means(X, sample.journal, J) @ beta
        fitted = effects[sample.journal] + X @ beta
        slope_part = sample.X @ beta[: len(sample.names)]
        return PanelFit(
            spec=spec,
            coefficients=_estimates(names, beta, cov, dof),
            r_squared=_r_squared(rss, float(y_w @ y_w)),
            r_squared_kind="within",
            n_obs=sample.n_obs,
            n_journals=J,
            n_years=len(sample.years),
            estimator="ols",
            covariance=cov,
            rss=rss,
            df_resid=dof,
            dropped_journals=sample.dropped,
            time_effects=time_names,
            intercept_note="intercept absorbed by journal fixed effects",
            residuals=residuals,
            fitted_values=fitted,
            effect_components=fitted - slope_part,
            journal_index=sample.journal,
        )

    def _fit_random(
        self,
        sample: _Sample,
        spec: PanelSpec,
        theta: Optional[float],
    ) -> PanelFit:
        J = sample.n_journals
        k = sample.X.shape[1]
        counts = sample.counts().astype(float)

        if theta is None:
            # 组内回归得到 σ²_e
            X_w = demean(sample.X, sample.journal, J)
            y_w = demean(sample.y, sample.journal, J)
            _, e_w, _ = _least_squares(X_w, y_w, sample.names)
            dof_w = sample.n_obs - J - k
            if dof_w <= 0:
                raise InsufficientDataError("Not enough within variation to estimate the idiosyncratic variance")
            sigma2_e = float(e_w @ e_w) / dof_w
            # 组间回归得到 σ²_u
            dof_b = J - k - 1
            if dof_b <= 0:
                raise InsufficientDataError(f"Between regression needs more than {k + 1} journals, got {J}")
            X_b = np.column_stack([np.ones(J), group_means(sample.X, sample.journal, J)])
            y_b = group_means(sample.y, sample.journal, J)
            _, e_b, _ = _least_squares(X_b, y_b, [INTERCEPT_NAME] + sample.names)
            sigma2_u = max(0.0, float(e_b @ e_b) / dof_b - sigma2_e * float(np.mean(1.0 / counts)))
            denominator = counts * sigma2_u + sigma2_e
            with np.errstate(divide="ignore", invalid="ignore"):
                thetas = np.where(denominator > 0, 1.0 - np.sqrt(sigma2_e / denominator), 0.0)
        else:
            if not 0.0 <= theta <= 1.0:
                raise PanelSpecError(f"theta must lie in [0, 1], got {theta}")
            sigma2_e = sigma2_u = float("nan")
            thetas = np.full(J, float(theta))

        th = thetas[sample.journal]
        y_star = sample.y - th * group_means(sample.y, sample.journal, J)[sample.journal]
        X_star = sample.X - th[:, None] * group_means(sample.X, sample.journal, J)[sample.journal]
        constant = 1.0 - th
        if np.max(constant) < 1e-12:
            X_design, names = X_star, list(sample.names)
            note = "intercept dropped (theta = 1)"
        else:
            X_design = np.column_stack([constant, X_star])
            names = [INTERCEPT_NAME] + sample.names
            note = "intercept estimated"
        beta, residuals, xtx_inv = _least_squares(X_design, y_star, names)
        dof = sample.n_obs - X_design.shape[1]
        if dof <= 0:
            raise InsufficientDataError("No residual degrees of freedom for the random-effects fit")
        rss = float(residuals @ residuals)
        centered = y_star - y_star.mean()
        cov = rss / dof * xtx_inv
        intercept = beta[0] if names[0] == INTERCEPT_NAME else 0.0
        slopes = beta[1:] if names[0] == INTERCEPT_NAME else beta
        fitted = intercept + sample.X @ slopes
        components = {"theta_mean": float(np.mean(thetas)), "theta_min": float(np.min(thetas)),
                      "theta_max": float(np.max(thetas))}
        if theta is None:
            components.update({"sigma2_e": sigma2_e, "sigma2_u": sigma2_u})
        return PanelFit(
            spec=spec,
            coefficients=_estimates(names, beta, cov, dof),
            r_squared=_r_squared(rss, float(centered @ centered)),
            r_squared_kind="quasi_demeaned",
            n_obs=sample.n_obs,
            n_journals=J,
            n_years=len(sample.years),
            estimator="ols",
            covariance=cov,
            rss=rss,
            df_resid=dof,
            variance_components=components,
            intercept_note=note,
            flags={"theta_forced": theta is not None},
            residuals=residuals,
            fitted_values=fitted,
            effect_components=np.zeros(sample.n_obs),
            journal_index=sample.journal,
        )

    # -------------------------------------------------------------------------
    # 检验
    # -------------------------------------------------------------------------

    @staticmethod
    def _check_pair(a: PanelFit, b: PanelFit) -> None:
        if a.spec.response != b.spec.response or a.spec.regressors != b.spec.regressors:
            raise SpecMismatchError(
                f"Fits use different specifications: {a.spec.to_dict()} vs {b.spec.to_dict()}"
            )

    def f_test_fixed_effects(self, pooled: PanelFit, fixed: PanelFit) -> DiagnosticResult:
        """
        F 检验：所有期刊固定效应为零。

        F = [(RSS_pooled - RSS_fixed) / (J - 1)] / [RSS_fixed / (N - J - k)]

        Raises:
            SpecMismatchError: 设定、效应类型或样本不一致
        """
        self._check_pair(pooled, fixed)
        if pooled.spec.effects != EffectsKind.POOLED or fixed.spec.effects != EffectsKind.FIXED:
            raise SpecMismatchError("F test compares a pooled fit with a fixed-effects fit")
        if pooled.n_obs != fixed.n_obs:
            raise SpecMismatchError(
                f"Fits use different samples ({pooled.n_obs} vs {fixed.n_obs} observations); "
                f"drop single-observation journals before fitting both"
            )
        df1 = fixed.n_journals - 1
        df2 = fixed.df_resid
        if df1 < 1:
            raise InsufficientDataError("F test needs at least 2 journals")
        gain = max(pooled.rss - fixed.rss, 0.0)
        if gain == 0.0:
            statistic, p_value = 0.0, 1.0
        elif fixed.rss == 0.0:
            statistic, p_value = float("inf"), 0.0
        else:
            statistic = (gain / df1) / (fixed.rss / df2)
            p_value = float(stats.f.sf(statistic, df1, df2))
        return DiagnosticResult(
            name="f_fixed_effects",
            statistic=float(statistic),
            dof=[df1, df2],
            p_value=p_value,
        )

    def hausman(self, fixed: PanelFit, random: PanelFit) -> DiagnosticResult:
        """
        Hausman 检验：H = (b_FE - b_RE)ᵀ (V_FE - V_RE)⁺ (b_FE - b_RE)。

        只比较共同的斜率（不含截距和年份效应）。协方差差值不正定时使用只保留正特征值的
        伪逆并标记 pseudo_inverse；自由度为差值矩阵的秩。H ≥ 0。

        Raises:
            SpecMismatchError: 没有共同的斜率
        """
        common = [n for n in fixed.slope_names if n in random.slope_names]
        if not common:
            raise SpecMismatchError("Fixed and random fits share no slope coefficients")
        diff = fixed.estimates(common) - random.estimates(common)
        V = fixed.covariance_of(common) - random.covariance_of(common)
        V = (V + V.T) / 2.0
        pseudo = False
        try:
            factor = cholesky(V, lower=True)
            z = solve_triangular(factor, diff, lower=True)
            statistic = float(z @ z)
            rank = len(common)
        except LinAlgError:
            pseudo = True
            eigenvalues, vectors = np.linalg.eigh(V)
            top = float(np.max(np.abs(eigenvalues))) if eigenvalues.size else 0.0
            positive = eigenvalues > 1e-10 * top if top > 0 else np.zeros_like(eigenvalues, dtype=bool)
            projections = vectors[:, positive].T @ diff
            statistic = float(np.sum(projections ** 2 / eigenvalues[positive]))
            rank = int(positive.sum())
        statistic = max(statistic, 0.0)
        p_value = float(stats.chi2.sf(statistic, rank)) if rank > 0 else 1.0
        if pseudo:
            logger.warning("Hausman 协方差差值不正定，使用伪逆")
        return DiagnosticResult(
            name="hausman",
            statistic=statistic,
            dof=[rank],
            p_value=p_value,
            flags={"pseudo_inverse": pseudo, "degenerate": rank == 0},
        )

    def lm_test_random_effects(self, pooled: PanelFit) -> DiagnosticResult:
        """
        Breusch-Pagan LM 检验（随机效应方差为零），非平衡面板形式：

            LM = n² / (2 (Σ T_i² - n)) · (Σ_i (Σ_t e_it)² / Σ e² - 1)²

        残差全为零时统计量为 0 并标记 degenerate。

        Raises:
            PanelError: 拟合结果没有保留残差
            InsufficientDataError: 每个期刊都只有一个观测
        """
        if pooled.residuals is None or pooled.journal_index is None:
            raise PanelError("The pooled fit does not carry residuals (fits loaded from JSON cannot be tested)")
        e = pooled.residuals
        journal = pooled.journal_index
        counts = np.bincount(journal)
        counts = counts[counts > 0]
        n = e.size
        spread = float(np.sum(counts.astype(float) ** 2) - n)
        if spread <= 0:
            raise InsufficientDataError("LM test needs at least one journal with more than one observation")
        total = float(e @ e)
        if total == 0.0:
            return DiagnosticResult(
                name="lm_random_effects",
                statistic=0.0,
                dof=[1],
                p_value=1.0,
                flags={"degenerate": True},
                note="Breusch-Pagan LM",
            )
        sums = np.bincount(journal, weights=e)
        ratio = float(sums @ sums) / total
        statistic = n ** 2 / (2.0 * spread) * (ratio - 1.0) ** 2
        return DiagnosticResult(
            name="lm_random_effects",
            statistic=float(statistic),
            dof=[1],
            p_value=float(stats.chi2.sf(statistic, 1)),
            flags={"degenerate": False},
            note="Breusch-Pagan LM",
        )

    # -------------------------------------------------------------------------
    # FGLS
    # -------------------------------------------------------------------------

    def _balanced_sample(self, d: PanelDataset, spec: PanelSpec) -> tuple[_Sample, int]:
        names = self._check_spec(d, spec)
        idx = [d.index_of(n) for n in names]
        complete = d.present & ~d.missing[:, :, idx].any(axis=2)
        observed_years = np.nonzero(complete.any(axis=0))[0]
        full = complete[:, observed_years].all(axis=1)
        dropped = int(np.sum(complete.any(axis=1) & ~full))
        if dropped:
            logger.warning(f"FGLS 需要平衡面板，丢弃 {dropped} 个不完整期刊")
        subset = d.subset(journal_idx=np.nonzero(full)[0], year_idx=observed_years)
        sample = self._sample(subset, spec, drop_singletons=False)
        sample.dropped = dropped
        return sample, len(observed_years)

    def fgls(
        self,
        d: PanelDataset,
        spec: PanelSpec,
        omega: Optional[np.ndarray] = None,
        diagonal: bool = False,
    ) -> PanelFit:
        """
        两步可行广义最小二乘。

        1. 按设定（混合或组内）做 OLS，得到残差
        2. Ω̂ = 各期刊 T 维残差向量外积的平均；diagonal 时只保留对角线
        3. 用 Ω̂ 的 Cholesky 因子白化每个期刊的数据后做 OLS

        Ω̂ 奇异（固定效应下必然如此）时加 ε·trace(Ω̂)/T 的岭并标记 ridge_regularized。
        系数协方差为 (X̃ᵀ Ω̂⁻¹ X̃)⁻¹，p 值按正态分布；R² 为拟合值（含效应）与实际值相关系数的平方。

        Args:
            d: 数据集（不完整的期刊会被丢弃并报告）
            spec: 设定，effects 为 pooled / fixed / fixed_time
            omega: 直接给定的 T×T 协方差（跳过第 2 步）
            diagonal: 只使用对角协方差

        Raises:
            PanelSpecError: 随机效应不支持 FGLS
            InsufficientDataError: T 大于期刊数
        """
        if spec.effects == EffectsKind.RANDOM:
            raise PanelSpecError("FGLS correction is not available for random effects")
        sample, T = self._balanced_sample(d, spec)
        J = sample.n_journals
        if T > J:
            raise InsufficientDataError(f"FGLS needs at least as many journals as years ({J} < {T})")

        within = spec.effects in (EffectsKind.FIXED, EffectsKind.FIXED_TIME)
        if within:
            X, names, time_names = self._within_design(sample, spec)
            X_design = demean(X, sample.journal, J)
            y_design = demean(sample.y, sample.journal, J)
        else:
            X = np.column_stack([np.ones(sample.n_obs), sample.X])
            names, time_names = [INTERCEPT_NAME] + sample.names, []
            X_design, y_design = X, sample.y

        flags = {"ridge_regularized": False, "diagonal_omega": bool(diagonal), "omega_supplied": omega is not None}
        if omega is None:
            _, first_step, _ = _least_squares(X_design, y_design, names)
            E = first_step.reshape(J, T)
            omega = E.T @ E / J
            if diagonal:
                omega = np.diag(np.diag(omega))
        else:
            omega = np.asarray(omega, dtype=float)
            if omega.shape != (T, T):
                raise PanelSpecError(f"omega must be {T}x{T}, got {omega.shape}")

        factor = self._cholesky_or_ridge(omega, flags)
        k = X_design.shape[1]
        X_white = solve_triangular(factor, X_design.reshape(J, T, k).transpose(1, 0, 2).reshape(T, J * k), lower=True)
        X_white = X_white.reshape(T, J, k).transpose(1, 0, 2).reshape(J * T, k)
        y_white = solve_triangular(factor, y_design.reshape(J, T).T, lower=True).T.reshape(J * T)
        beta, _, cov = _least_squares(X_white, y_white, names)

        if within:
            effects = group_means(sample.y, sample.journal, J) - group_means(X, sample.journal, J) @ beta
            fitted = effects[sample.journal] + X @ beta
            dof = sample.n_obs - J - k
            slope_part = sample.X @ beta[: len(sample.names)]
            note = "intercept absorbed by journal fixed effects"
        else:
            fitted = X @ beta
            dof = sample.n_obs - k
            slope_part = fitted
            note = "intercept estimated"
        residuals = sample.y - fitted
        if np.std(fitted) > 0 and np.std(sample.y) > 0:
            r_squared = float(np.corrcoef(fitted, sample.y)[0, 1] ** 2)
        else:
            r_squared = 1.0 if float(residuals @ residuals) == 0.0 else 0.0
        fit = PanelFit(
            spec=spec,
            coefficients=_estimates(names, beta, cov, None),
            r_squared=min(max(r_squared, 0.0), 1.0),
            r_squared_kind="corr_squared",
            n_obs=sample.n_obs,
            n_journals=J,
            n_years=T,
            estimator="fgls",
            covariance=cov,
            rss=float(residuals @ residuals),
            df_resid=dof,
            dropped_journals=sample.dropped,
            time_effects=time_names,
            flags=flags,
            intercept_note=note,
            residuals=residuals,
            fitted_values=fitted,
            effect_components=fitted - slope_part,
            journal_index=sample.journal,
        )
        logger.info(f"FGLS 拟合完成: N={fit.n_obs}，T={T}，R²={fit.r_squared:.4f}")
        return fit

    def _cholesky_or_ridge(self, omega: np.ndarray, flags: dict[str, bool]) -> np.ndarray:
        omega = (omega + omega.T) / 2.0
        T = omega.shape[0]
        eigenvalues = np.linalg.eigvalsh(omega)
        top = float(np.max(np.abs(eigenvalues))) if eigenvalues.size else 0.0
        if top > 0 and float(np.min(eigenvalues)) > 1e-12 * top:
            try:
                return cholesky(omega, lower=True)
            except LinAlgError:
                pass
        eps = self.config.get_gls_ridge_eps()
        ridge = eps * float(np.trace(omega)) / T
        if ridge <= 0:
            raise InsufficientDataError("Residual covariance is zero; FGLS is undefined")
        logger.warning(f"残差协方差矩阵奇异，加岭 {ridge:.3g}")
        flags["ridge_regularized"] = True
        return cholesky(omega + ridge * np.eye(T), lower=True)

    # -------------------------------------------------------------------------
    # 组合与报告
    # -------------------------------------------------------------------------

    def diagnose(self, d: PanelDataset, spec: PanelSpec) -> PanelFit:
        """
        拟合指定模型并附加适用的诊断检验：

        - pooled: LM 检验
        - fixed: F 检验、Hausman 检验
        - random: LM 检验、Hausman 检验

        辅助拟合失败时跳过对应检验并记录警告。
        """
        sample_d, dropped = self.drop_singleton_journals(d, spec)
        fit = self.fit(sample_d if spec.effects == EffectsKind.FIXED else d, spec)
        if spec.gls:
            return fit
        if spec.effects == EffectsKind.FIXED:
            fit.dropped_journals = dropped

        def on_sample(effects: str) -> PanelFit:
            # 检验两侧必须来自同一样本（与 fit_all 一致）
            if spec.effects == effects and (effects == EffectsKind.FIXED or not dropped):
                return fit
            return self.fit(sample_d, spec.with_effects(effects))

        try:
            if spec.effects in (EffectsKind.POOLED, EffectsKind.RANDOM):
                fit.diagnostics["lm_random_effects"] = self.lm_test_random_effects(on_sample(EffectsKind.POOLED))
            if spec.effects == EffectsKind.FIXED:
                fit.diagnostics["f_fixed_effects"] = self.f_test_fixed_effects(on_sample(EffectsKind.POOLED), fit)
            if spec.effects in (EffectsKind.FIXED, EffectsKind.RANDOM):
                fit.diagnostics["hausman"] = self.hausman(on_sample(EffectsKind.FIXED), on_sample(EffectsKind.RANDOM))
        except PanelError as e:
            logger.warning(f"诊断检验跳过: {e}")
        return fit

    def fit_all(self, d: PanelDataset, spec: PanelSpec) -> dict[str, PanelFit]:
        """
        在同一样本（已丢弃单观测期刊）上拟合 pooled、random、fixed、fixed_time 四个模型，
        并附加 F、Hausman、LM 检验。

        Returns:
            效应类型 → PanelFit（按 EFFECTS_ORDER 排列）
        """
        if spec.gls:
            raise PanelSpecError("fit_all compares OLS estimators; run fgls separately")
        sample_d, dropped = self.drop_singleton_journals(d, spec)
        fits = {effects: self.fit(sample_d, spec.with_effects(effects)) for effects in EFFECTS_ORDER}
        for fit in fits.values():
            fit.dropped_journals = dropped
        pooled, fixed = fits[EffectsKind.POOLED], fits[EffectsKind.FIXED]
        pooled.diagnostics["lm_random_effects"] = self.lm_test_random_effects(pooled)
        fixed.diagnostics["f_fixed_effects"] = self.f_test_fixed_effects(pooled, fixed)
        fixed.diagnostics["hausman"] = self.hausman(fixed, fits[EffectsKind.RANDOM])
        return fits

    @staticmethod
    def coefficient_frame(fit: PanelFit) -> pd.DataFrame:
        """系数表（变量、估计、标准误、t、p、星号）"""
        rows = [
            {"variable": name, **estimate.to_dict()}
            for name, estimate in fit.coefficients.items()
        ]
        return pd.DataFrame(rows, columns=["variable", "estimate", "std_error", "t_stat", "p_value", "stars"])

    @staticmethod
    def format_fit_table(fits: list[PanelFit], digits: int = 4) -> str:
        """
        回归表文本：每个变量两行（估计值+星号、括号中的标准误），
        之后是 R²、N、估计方法与诊断检验。

        Example:
            >>> print(PanelService.format_fit_table([pooled, fixed]))
        """
        headers = ["Variable"] + [
            EFFECTS_LABELS[f.spec.effects] + (" (GLS)" if f.estimator == "fgls" else "") for f in fits
        ]
        variables: list[str] = []
        for fit in fits:
            for name in fit.coefficients:
                if name not in variables:
                    variables.append(name)

        def number(value: float) -> str:
            return f"{value:.{digits}g}" if np.isfinite(value) else str(value)

        rows: list[list[Any]] = []
        for name in variables:
            estimate_row = [name]
            se_row = [""]
            for fit in fits:
                est = fit.coefficients.get(name)
                estimate_row.append(f"{number(est.estimate)}{est.stars}" if est else "")
                se_row.append(f"({number(est.std_error)})" if est else "")
            rows.append(estimate_row)
            rows.append(se_row)
        rows.append(["R²"] + [f"{f.r_squared:.4f} ({f.r_squared_kind})" for f in fits])
        rows.append(["N"] + [str(f.n_obs) for f in fits])
        rows.append(["Journals"] + [str(f.n_journals) for f in fits])
        for key in ("f_fixed_effects", "hausman", "lm_random_effects"):
            if any(key in f.diagnostics for f in fits):
                row = [key]
                for f in fits:
                    test = f.diagnostics.get(key)
                    row.append(
                        f"{number(test.statistic)} (p={test.p_value:.3g})" if test else ""
                    )
                rows.append(row)
        table = tabulate(rows, headers=headers, tablefmt="simple", disable_numparse=True)
        return table + "\n*p<0.1; **p<0.05; ***p<0.01\n"
