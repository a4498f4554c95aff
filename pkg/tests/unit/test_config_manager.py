# ConfigManager 单元测试
# ConfigManager Unit Tests

"""
ConfigManager 配置管理器的单元测试。

测试覆盖：
- YAML 配置文件加载
- 默认配置回退
- 方言、LASSO、森林、推断等分段配置
- 环境变量覆盖默认种子
- reload() 方法
"""

import pytest
import yaml

from src.config_manager import ENV_SEED, ConfigError, ConfigManager


class TestConfigManagerInit:
    """测试 ConfigManager 初始化"""

    def test_init_with_custom_path(self):
        """测试使用自定义路径初始化"""
        config = ConfigManager("/custom/path/config.yaml")
        assert config.config_path == "/custom/path/config.yaml"

    def test_init_with_env_path(self, monkeypatch, tmp_path):
        """测试从环境变量读取配置文件路径"""
        config_file = tmp_path / "run.yaml"
        config_file.write_text(yaml.dump({"correlate": {"threshold": 0.7}}), encoding="utf-8")
        monkeypatch.setenv("JOURNAL_INDEX_CONFIG", str(config_file))

        config = ConfigManager()

        assert config.config_path == str(config_file)
        assert config.get_correlation_threshold() == 0.7


class TestConfigManagerDefaultValues:
    """测试默认配置值"""

    def test_default_dialects(self):
        """测试默认 CSV 方言"""
        config = ConfigManager("nonexistent.yaml")
        assert config.get_dialect("scopus") == (";", ",")
        assert config.get_dialect("wos") == (",", ".")

    def test_default_lasso(self):
        """测试默认 LASSO 参数"""
        config = ConfigManager("nonexistent.yaml")
        defaults = config.get_lasso_defaults()
        assert defaults["num_lambdas"] == 100
        assert defaults["lambda_ratio"] == pytest.approx(1e-3)
        assert defaults["folds"] == 10
        assert defaults["first_k"] == 10

    def test_default_forest(self):
        """测试默认森林参数"""
        config = ConfigManager("nonexistent.yaml")
        defaults = config.get_forest_defaults()
        assert defaults["n_trees"] == 300
        assert defaults["max_depth"] is None
        assert defaults["threshold"] == 5.0

    def test_default_models(self):
        """测试默认系数模型"""
        config = ConfigManager("nonexistent.yaml")
        assert config.get_default_model("if") == "table8_if_reduced"
        assert config.get_default_model("SJR") == "table7_sjr_reduced"

    def test_default_runtime(self, monkeypatch):
        """测试默认运行参数"""
        monkeypatch.delenv(ENV_SEED, raising=False)
        config = ConfigManager("nonexistent.yaml")
        assert config.get_default_seed() == 0
        assert config.get_log_level() == "INFO"
        assert config.get_n_jobs() == 4
        assert config.get_join_key() == "title"
        assert config.get_gls_ridge_eps() == pytest.approx(1e-8)

    def test_unknown_schema(self):
        """测试未知的方言"""
        config = ConfigManager("nonexistent.yaml")
        with pytest.raises(ConfigError):
            config.get_dialect("crossref")


class TestConfigManagerLoadFromFile:
    """测试从文件加载配置"""

    def test_load_partial_config(self, tmp_path):
        """测试加载部分配置（其他使用默认值）"""
        config_file = tmp_path / "config.yaml"
        config_file.write_text(yaml.dump({"lasso": {"folds": 5}}), encoding="utf-8")

        config = ConfigManager(str(config_file))

        assert config.get_lasso_defaults()["folds"] == 5
        assert config.get_lasso_defaults()["num_lambdas"] == 100
        assert config.get_correlation_threshold() == 0.85

    def test_load_empty_config_file(self, tmp_path):
        """测试加载空配置文件"""
        config_file = tmp_path / "config.yaml"
        config_file.write_text("", encoding="utf-8")

        config = ConfigManager(str(config_file))

        assert config.get_forest_defaults()["n_trees"] == 300

    def test_load_invalid_yaml(self, tmp_path):
        """测试加载无效的 YAML"""
        config_file = tmp_path / "config.yaml"
        config_file.write_text("lasso: [unclosed", encoding="utf-8")

        config = ConfigManager(str(config_file))

        assert config.get_lasso_defaults()["folds"] == 10

    def test_load_non_mapping(self, tmp_path):
        """测试顶层不是字典的配置文件"""
        config_file = tmp_path / "config.yaml"
        config_file.write_text("- a\n- b\n", encoding="utf-8")

        config = ConfigManager(str(config_file))

        assert config.get_dialect("scopus") == (";", ",")

    def test_invalid_values_fall_back(self, tmp_path):
        """测试类型错误的配置项回退到默认值"""
        config_file = tmp_path / "config.yaml"
        config_file.write_text(yaml.dump({
            "lasso": {"folds": "ten", "num_lambdas": True},
            "datastore": {"scopus": {"delimiter": ";;", "decimal": "x"}, "join_key": "doi"},
            "runtime": {"n_jobs": 0},
        }), encoding="utf-8")

        config = ConfigManager(str(config_file))

        assert config.get_lasso_defaults()["folds"] == 10
        assert config.get_lasso_defaults()["num_lambdas"] == 100
        assert config.get_dialect("scopus") == (";", ",")
        assert config.get_join_key() == "title"
        assert config.get_n_jobs() == 1

    def test_custom_dialect(self, tmp_path):
        """测试自定义方言"""
        config_file = tmp_path / "config.yaml"
        config_file.write_text(yaml.dump({"datastore": {"wos": {"delimiter": "\t"}}}), encoding="utf-8")

        config = ConfigManager(str(config_file))

        assert config.get_dialect("wos") == ("\t", ".")


class TestConfigManagerSeed:
    """测试默认种子的环境变量覆盖"""

    def test_env_seed_overrides_file(self, monkeypatch, tmp_path):
        """测试环境变量优先于配置文件"""
        config_file = tmp_path / "config.yaml"
        config_file.write_text(yaml.dump({"runtime": {"seed": 11}}), encoding="utf-8")
        monkeypatch.setenv(ENV_SEED, "42")

        assert ConfigManager(str(config_file)).get_default_seed() == 42

    def test_invalid_env_seed_ignored(self, monkeypatch, tmp_path):
        """测试无效的环境变量被忽略"""
        config_file = tmp_path / "config.yaml"
        config_file.write_text(yaml.dump({"runtime": {"seed": 11}}), encoding="utf-8")
        monkeypatch.setenv(ENV_SEED, "abc")

        assert ConfigManager(str(config_file)).get_default_seed() == 11


class TestConfigManagerAccess:
    """测试通用访问方法"""

    def test_get_dotted_key(self):
        """测试点号路径访问"""
        config = ConfigManager("nonexistent.yaml")
        assert config.get("correlate.threshold") == 0.85
        assert config.get("missing.key", "fallback") == "fallback"

    def test_config_property_is_copy(self):
        """测试 config 属性返回副本"""
        config = ConfigManager("nonexistent.yaml")
        snapshot = config.config
        snapshot["lasso"]["folds"] = 99
        assert config.get_lasso_defaults()["folds"] == 10

    def test_reload(self, tmp_path):
        """测试重新加载配置"""
        config_file = tmp_path / "config.yaml"
        config_file.write_text(yaml.dump({"forest": {"n_trees": 10}}), encoding="utf-8")
        config = ConfigManager(str(config_file))
        assert config.get_forest_defaults()["n_trees"] == 10

        config_file.write_text(yaml.dump({"forest": {"n_trees": 20}}), encoding="utf-8")
        config.reload()

        assert config.get_forest_defaults()["n_trees"] == 20
