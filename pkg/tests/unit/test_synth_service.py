# SynthService 单元测试
# SynthService Unit Tests

"""
SynthService 的单元测试。

测试覆盖：
- 面板形状、变量与期刊标签
- 同一种子可复现，与并行度无关，增加期刊不改变已有期刊
- 数据生成过程的组成部分（效应、噪声、AR(1)、年份效应）
- 参数校验
"""

import numpy as np
import pytest
import yaml

from src.config_manager import ConfigManager
from src.models import DgpSpec
from src.synth_service import SynthError, SynthService, journal_label


@pytest.fixture
def service():
    return SynthService(ConfigManager("nonexistent.yaml"))


def _config_with_jobs(tmp_path, n_jobs: int) -> ConfigManager:
    path = tmp_path / f"config_{n_jobs}.yaml"
    path.write_text(yaml.dump({"runtime": {"n_jobs": n_jobs}}), encoding="utf-8")
    return ConfigManager(str(path))


class TestPanelShape:
    """测试面板结构"""

    def test_shape_and_variables(self, service):
        spec = DgpSpec(n_journals=12, n_years=3, slopes={"x1": 1.0, "x2": -0.5}, seed=1, start_year=2015)
        panel, truth = service.generate(spec)
        assert panel.values.shape == (12, 3, 3)
        assert panel.variable_names == ["y", "x1", "x2"]
        assert panel.years == (2015, 2016, 2017)
        assert panel.is_balanced()
        assert set(truth.journal_effects) == set(panel.journals)
        assert list(truth.time_effects) == [2015, 2016, 2017]

    def test_journal_labels(self):
        assert journal_label(0, 50) == "J0001"
        assert journal_label(11999, 12000) == "J12000"

    def test_truth_dict(self, service):
        spec = DgpSpec(n_journals=2, n_years=2, slopes={"x": 2.0}, seed=5)
        _, truth = service.generate(spec)
        data = truth.to_dict()
        assert data["slopes"] == {"x": 2.0}
        assert data["seed"] == 5
        assert set(data["time_effects"]) == {"2013", "2014"}


class TestDeterminism:
    """测试可复现性"""

    def test_same_seed_same_panel(self, service):
        spec = DgpSpec(n_journals=20, n_years=4, slopes={"x": 1.0}, effect_sd=1.0, seed=3)
        a, _ = service.generate(spec)
        b, _ = service.generate(spec)
        np.testing.assert_array_equal(a.values, b.values)

    def test_different_seed_differs(self, service):
        a, _ = service.generate(DgpSpec(n_journals=5, n_years=3, slopes={"x": 1.0}, seed=1))
        b, _ = service.generate(DgpSpec(n_journals=5, n_years=3, slopes={"x": 1.0}, seed=2))
        assert not np.array_equal(a.values, b.values)

    def test_independent_of_thread_count(self, tmp_path):
        spec = DgpSpec(n_journals=40, n_years=5, slopes={"x": 1.0}, effect_sd=1.0, seed=9,
                       error_structure="ar1", rho=0.5)
        a, _ = SynthService(_config_with_jobs(tmp_path, 1)).generate(spec)
        b, _ = SynthService(_config_with_jobs(tmp_path, 8)).generate(spec)
        np.testing.assert_array_equal(a.values, b.values)

    def test_prefix_stable_when_adding_journals(self, service):
        """每个期刊的随机数只取决于 (种子, 期刊)"""
        small, _ = service.generate(DgpSpec(n_journals=10, n_years=3, slopes={"x": 1.0}, effect_sd=1.0, seed=4))
        large, _ = service.generate(DgpSpec(n_journals=30, n_years=3, slopes={"x": 1.0}, effect_sd=1.0, seed=4))
        np.testing.assert_array_equal(small.values, large.values[:10])


class TestComponents:
    """测试数据生成过程的组成部分"""

    def test_noiseless_linear(self, service):
        spec = DgpSpec(n_journals=5, n_years=4, slopes={"x": 2.0, "z": -1.0}, noise_sd=0.0, intercept=3.0, seed=0)
        panel, _ = service.generate(spec)
        y, x, z = (panel.values[:, :, k] for k in range(3))
        np.testing.assert_allclose(y, 3.0 + 2.0 * x - z)

    def test_journal_effects_added(self, service):
        spec = DgpSpec(n_journals=6, n_years=3, slopes={"x": 1.0}, noise_sd=0.0, effect_sd=2.0, seed=2)
        panel, truth = service.generate(spec)
        effects = np.array([truth.journal_effects[j] for j in panel.journals])
        np.testing.assert_allclose(panel.values[:, :, 0] - panel.values[:, :, 1], effects[:, None] * np.ones((1, 3)))

    def test_time_effects_added(self, service):
        spec = DgpSpec(n_journals=4, n_years=3, slopes={"x": 1.0}, noise_sd=0.0, time_effect_sd=1.0, seed=2)
        panel, truth = service.generate(spec)
        lam = np.array([truth.time_effects[t] for t in panel.years])
        np.testing.assert_allclose(panel.values[:, :, 0] - panel.values[:, :, 1], np.tile(lam, (4, 1)))

    def test_effect_correlation(self, service):
        """解释变量与标准化期刊效应的相关系数接近 effect_corr"""
        spec = DgpSpec(n_journals=2000, n_years=2, slopes={"x": 1.0}, effect_sd=1.0, effect_corr=0.6, seed=7)
        panel, truth = service.generate(spec)
        effects = np.repeat([truth.journal_effects[j] for j in panel.journals], 2)
        x = panel.values[:, :, 1].ravel()
        assert np.corrcoef(x, effects)[0, 1] == pytest.approx(0.6, abs=0.05)
        assert x.std() == pytest.approx(1.0, abs=0.05)

    def test_ar1_noise(self, service):
        """AR(1) 噪声的边际标准差为 noise_sd，一阶自相关为 rho"""
        spec = DgpSpec(n_journals=3000, n_years=4, slopes={"x": 0.0}, noise_sd=2.0,
                       error_structure="ar1", rho=0.7, seed=11)
        panel, _ = service.generate(spec)
        u = panel.values[:, :, 0]
        assert u.std() == pytest.approx(2.0, rel=0.05)
        lag = np.corrcoef(u[:, :-1].ravel(), u[:, 1:].ravel())[0, 1]
        assert lag == pytest.approx(0.7, abs=0.05)


class TestValidation:
    """测试参数校验"""

    def test_spec_from_dict(self, service):
        spec = service.spec_from_dict({"n_journals": 3, "n_years": 2, "slopes": {"x": 1.0}})
        assert spec.noise_sd == 1.0

    @pytest.mark.parametrize("payload", [
        {"n_journals": 0, "n_years": 2, "slopes": {"x": 1.0}},
        {"n_journals": 3, "n_years": 2, "slopes": {}},
        {"n_journals": 3, "n_years": 2, "slopes": {"x": 1.0}, "rho": 1.0, "error_structure": "ar1"},
        {"n_journals": 3, "n_years": 2, "slopes": {"x": 1.0}, "effect_corr": 2.0},
        {"n_journals": 3, "n_years": 2, "slopes": {"y": 1.0}},
        {"n_journals": 3, "n_years": 2, "slopes": {"x": 1.0}, "unknown": 1},
        {"n_years": 2, "slopes": {"x": 1.0}},
    ])
    def test_invalid_specs(self, service, payload):
        with pytest.raises(SynthError):
            service.spec_from_dict(payload)
