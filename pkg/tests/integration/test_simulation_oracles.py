# 模拟校验集成测试
# Simulation Oracle Integration Tests

"""
用已知数据生成过程的合成面板，在多个种子上检验估计量与检验的统计性质。

测试覆盖：
- LASSO: 真实变量最先进入；纯噪声时解释比例很低；λ_sparse 只保留真实变量
- 随机森林: 袋外 MSE 低于响应方差；信号变量两项重要性均为 100
- 面板回归: 效应与解释变量相关时混合 OLS 有偏、固定效应无偏
- F / Hausman / LM 检验在原假设下的拒绝率约为 5%，在备择下接近 100%
- FGLS: AR(1) 误差下斜率估计的方差不大于 OLS
- 推断: 用指数模型本身生成的数据做估计，平均绝对误差很小
"""

import numpy as np
import pytest

from src.config_manager import ConfigManager
from src.forest_service import ForestParams, ForestService
from src.inference_service import InferenceService
from src.lasso_service import LassoProblem, LassoService
from src.model_registry import ModelRegistry
from src.models import CoefficientModel, DgpSpec, EffectsKind, PanelSpec
from src.panel_service import PanelService
from src.synth_service import SynthService

ALPHA = 0.05


@pytest.fixture(scope="module")
def config():
    return ConfigManager("nonexistent.yaml")


@pytest.fixture(scope="module")
def synth(config):
    return SynthService(config)


@pytest.fixture(scope="module")
def panel_service(config):
    return PanelService(config)


def single_signal(seed: int, n_rows: int, slope: float = 2.0, noise: float = 1.0, decoys: int = 9):
    """y = slope·x₁ + ε，另有若干无关变量"""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n_rows, 1 + decoys))
    y = slope * X[:, 0] + rng.normal(scale=noise, size=n_rows)
    names = ["signal"] + [f"decoy{k}" for k in range(decoys)]
    return X, y, names


def rejection_rate(p_values: list[float]) -> float:
    return float(np.mean(np.array(p_values) < ALPHA))


# =============================================================================
# LASSO
# =============================================================================

class TestLassoOracles:
    """LASSO 变量选择的模拟校验"""

    def test_signal_enters_first(self, config):
        service = LassoService(config)
        hits = 0
        for seed in range(100):
            X, y, names = single_signal(seed, 100)
            path = service.path(LassoProblem.build(X, y, names), num_lambdas=30)
            hits += service.first_k_variables(path, 1).names == ["signal"]
        assert hits >= 95

    def test_pure_noise_explains_little(self, config):
        service = LassoService(config)
        for seed in range(20):
            rng = np.random.default_rng(1000 + seed)
            X = rng.normal(size=(200, 10))
            y = rng.normal(size=200)
            path = service.path(LassoProblem.build(X, y), num_lambdas=30)
            assert max(point.frac_var_explained for point in path.points) < 0.2

    def test_sparse_lambda_keeps_only_signal(self, config):
        service = LassoService(config)
        hits = 0
        for seed in range(100):
            X, y, names = single_signal(seed, 200, slope=3.0, noise=0.5)
            problem = LassoProblem.build(X, y, names)
            cv = service.cross_validate(problem, folds=10, num_lambdas=40, seed=seed, n_jobs=1)
            hits += list(service.solution_at(problem, cv.lambda_sparse)) == ["signal"]
        assert hits >= 90


# =============================================================================
# 随机森林
# =============================================================================

class TestForestOracles:
    """随机森林重要性的模拟校验"""

    def test_oob_error_below_variance(self, config):
        service = ForestService(config)
        params = ForestParams(n_trees=30)
        for seed in range(20):
            X, y, names = single_signal(seed, 300)
            forest = service.fit_forest(X, y, names, params, seed=seed, n_jobs=1)
            assert forest.oob_mse < np.var(y)

    def test_signal_scores_100(self, config):
        service = ForestService(config)
        params = ForestParams(n_trees=30)
        hits = 0
        for seed in range(50):
            X, y, names = single_signal(seed, 200)
            forest = service.fit_forest(X, y, names, params, seed=seed, n_jobs=1)
            table = service.importance(forest, X, y, seed=seed, n_jobs=1)
            hits += table.score("signal") == (100.0, 100.0)
        assert hits >= 48

    def test_threshold_selects_signal(self, config):
        service = ForestService(config)
        X, y, names = single_signal(3, 300)
        forest = service.fit_forest(X, y, names, ForestParams(n_trees=50), seed=3, n_jobs=1)
        table = service.importance(forest, X, y, seed=3, n_jobs=1)
        assert service.select_relevant(table, 10.0) == ["signal"]


# =============================================================================
# 面板回归
# =============================================================================

class TestPanelOracles:
    """面板估计量与检验的模拟校验"""

    def test_fixed_effects_unbiased_pooled_biased(self, synth, panel_service):
        spec = PanelSpec("y", ("x",), EffectsKind.FIXED)
        fixed, pooled = [], []
        for seed in range(50):
            dgp = DgpSpec(n_journals=500, n_years=6, slopes={"x": 2.0}, effect_sd=1.0,
                          effect_corr=0.6, seed=seed)
            panel, _ = synth.generate(dgp)
            fixed.append(panel_service.fit(panel, spec).coefficients["x"].estimate)
            pooled.append(panel_service.fit(panel, spec.with_effects(EffectsKind.POOLED)).coefficients["x"].estimate)
        assert abs(np.mean(fixed) - 2.0) <= 0.02
        assert np.mean(pooled) - 2.0 >= 0.1

    def _diagnostics(self, synth, panel_service, effect_sd: float, effect_corr: float, seeds: int = 200):
        spec = PanelSpec("y", ("x",), EffectsKind.FIXED)
        results = {"f_fixed_effects": [], "hausman": [], "lm_random_effects": []}
        for seed in range(seeds):
            dgp = DgpSpec(n_journals=200, n_years=4, slopes={"x": 1.0}, effect_sd=effect_sd,
                          effect_corr=effect_corr, seed=10_000 + seed)
            panel, _ = synth.generate(dgp)
            fits = panel_service.fit_all(panel, spec)
            results["f_fixed_effects"].append(fits[EffectsKind.FIXED].diagnostics["f_fixed_effects"].p_value)
            results["hausman"].append(fits[EffectsKind.FIXED].diagnostics["hausman"].p_value)
            results["lm_random_effects"].append(fits[EffectsKind.POOLED].diagnostics["lm_random_effects"].p_value)
        return {name: rejection_rate(p) for name, p in results.items()}

    def test_no_effects_calibration(self, synth, panel_service):
        """没有期刊效应时 F 与 LM 检验的拒绝率约为 5%"""
        rates = self._diagnostics(synth, panel_service, effect_sd=0.0, effect_corr=0.0)
        assert 0.02 <= rates["f_fixed_effects"] <= 0.08
        assert 0.02 <= rates["lm_random_effects"] <= 0.08

    def test_strong_effects_power(self, synth, panel_service):
        rates = self._diagnostics(synth, panel_service, effect_sd=2.0, effect_corr=0.0)
        assert rates["f_fixed_effects"] >= 0.99
        assert rates["lm_random_effects"] >= 0.99

    def test_hausman_calibration(self, synth, panel_service):
        """效应与解释变量独立时随机效应一致，Hausman 拒绝率约为 5%"""
        rates = self._diagnostics(synth, panel_service, effect_sd=1.0, effect_corr=0.0)
        assert 0.02 <= rates["hausman"] <= 0.08

    def test_hausman_power(self, synth, panel_service):
        rates = self._diagnostics(synth, panel_service, effect_sd=1.0, effect_corr=0.6)
        assert rates["hausman"] >= 0.90

    def test_fgls_more_efficient_under_ar1(self, synth, panel_service):
        spec = PanelSpec("y", ("x",), EffectsKind.POOLED)
        ols, fgls = [], []
        for seed in range(200):
            dgp = DgpSpec(n_journals=100, n_years=5, slopes={"x": 1.0}, error_structure="ar1",
                          rho=0.8, seed=20_000 + seed)
            panel, _ = synth.generate(dgp)
            ols.append(panel_service.fit(panel, spec).coefficients["x"].estimate)
            fgls.append(panel_service.fgls(panel, spec).coefficients["x"].estimate)
        assert np.var(fgls) <= np.var(ols)
        assert abs(np.mean(fgls) - 1.0) <= 0.02


# =============================================================================
# 指数推断
# =============================================================================

class TestInferenceOracle:
    """由模型本身生成的数据估计误差很小"""

    def test_table8_self_consistency(self, config, synth):
        published = ModelRegistry().get("table8_if_reduced")
        numeric = tuple(t for t in published.terms if not t.variable.startswith("SJRBestQuartile"))
        model = CoefficientModel("table8_numeric", "IF", numeric)
        dgp = DgpSpec(
            n_journals=300, n_years=3,
            slopes={t.variable: t.coefficient for t in numeric},
            noise_sd=0.1, response="IF", seed=5,
        )
        panel, _ = synth.generate(dgp)
        report = InferenceService(config).estimate_batch(model, panel)
        truth = panel.values[:, :, panel.index_of("IF")].ravel()
        estimates = np.array([entry.estimate for entry in report.entries])
        assert report.summary["count"] == 900
        assert np.mean(np.abs(estimates - truth)) <= 0.15
