# 配置管理器
# Config Manager

"""
配置管理器模块 - 负责加载和管理 YAML 配置文件。

支持功能：
- YAML 配置文件加载
- 默认配置回退
- 配置热重载
- 环境变量覆盖（默认随机种子、配置文件路径）
"""

import logging
import os
from typing import Any, Optional

import yaml
from dotenv import load_dotenv

# 配置日志
logger = logging.getLogger(__name__)

# 环境变量名
ENV_SEED = "JOURNAL_INDEX_SEED"
ENV_CONFIG_PATH = "JOURNAL_INDEX_CONFIG"

# 支持的文件方言
SCHEMAS = ("scopus", "wos")


class ConfigError(Exception):
    """配置错误异常"""
    pass


class ConfigManager:
    """
    配置管理器，负责加载和管理 YAML 配置。

    支持从 YAML 文件加载配置，当配置文件不存在或无效时使用默认配置值。

    Attributes:
        config_path: 配置文件路径
        _config: 加载的配置数据

    Example:
        >>> config = ConfigManager("config.yaml")
        >>> delimiter, decimal = config.get_dialect("scopus")
        >>> seed = config.get_default_seed()
    """

    # 默认配置值
    DEFAULT_CONFIG = {
        "datastore": {
            "scopus": {"delimiter": ";", "decimal": ","},
            "wos": {"delimiter": ",", "decimal": "."},
            "join_key": "title",
            "encoding": "utf-8"
        },
        "lasso": {
            "num_lambdas": 100,
            "lambda_ratio": 1e-3,
            "tol": 1e-7,
            "max_sweeps": 100000,
            "folds": 10,
            "first_k": 10
        },
        "forest": {
            "n_trees": 300,
            "min_samples_split": 5,
            "max_depth": None,
            "threshold": 5.0
        },
        "correlate": {
            "threshold": 0.85
        },
        "panel": {
            "gls_ridge_eps": 1e-8
        },
        "infer": {
            "default_if_model": "table8_if_reduced",
            "default_sjr_model": "table7_sjr_reduced"
        },
        "runtime": {
            "seed": 0,
            "log_level": "INFO",
            "n_jobs": 4
        }
    }

    def __init__(self, config_path: Optional[str] = None):
        """
        初始化配置管理器。

        Args:
            config_path: 配置文件路径；为 None 时读取环境变量
                JOURNAL_INDEX_CONFIG，仍为空则使用 "config.yaml"

        Note:
            如果配置文件不存在或无效，将使用默认配置值并记录警告日志。
        """
        load_dotenv()
        self.config_path = config_path or os.environ.get(ENV_CONFIG_PATH, "config.yaml")
        self._config: dict[str, Any] = {}
        self._load_config()

    def _load_config(self) -> None:
        """
        加载配置文件。

        从指定路径加载 YAML 配置文件，如果文件不存在或解析失败，
        则使用默认配置值。
        """
        # 首先使用默认配置
        self._config = self._deep_copy_dict(self.DEFAULT_CONFIG)

        if not os.path.exists(self.config_path):
            logger.warning(
                f"配置文件 '{self.config_path}' 不存在，使用默认配置值"
            )
            return

        try:
            with open(self.config_path, 'r', encoding='utf-8') as f:
                file_config = yaml.safe_load(f)

            if file_config is None:
                logger.warning(
                    f"配置文件 '{self.config_path}' 为空，使用默认配置值"
                )
                return

            if not isinstance(file_config, dict):
                logger.warning(
                    f"配置文件 '{self.config_path}' 格式无效，使用默认配置值"
                )
                return

            # 合并配置（文件配置覆盖默认配置）
            self._merge_config(self._config, file_config)
            logger.info(f"成功加载配置文件: {self.config_path}")

        except yaml.YAMLError as e:
            logger.warning(
                f"配置文件 '{self.config_path}' 解析失败: {e}，使用默认配置值"
            )
        except IOError as e:
            logger.warning(
                f"无法读取配置文件 '{self.config_path}': {e}，使用默认配置值"
            )

    def _deep_copy_dict(self, d: dict) -> dict:
        """
        深拷贝字典。

        Args:
            d: 要拷贝的字典

        Returns:
            字典的深拷贝
        """
        result = {}
        for key, value in d.items():
            if isinstance(value, dict):
                result[key] = self._deep_copy_dict(value)
            elif isinstance(value, list):
                result[key] = value.copy()
            else:
                result[key] = value
        return result

    def _merge_config(self, base: dict, override: dict) -> None:
        """
        递归合并配置字典。

        Args:
            base: 基础配置字典（会被修改）
            override: 覆盖配置字典
        """
        for key, value in override.items():
            if key in base and isinstance(base[key], dict) and isinstance(value, dict):
                self._merge_config(base[key], value)
            else:
                base[key] = value

    def _section_value(self, section: str, key: str, expected: tuple) -> Any:
        """
        读取某个配置段的值，类型不符时回退默认值。

        Args:
            section: 配置段名称
            key: 配置项名称
            expected: 允许的类型

        Returns:
            配置值或默认值
        """
        default = self.DEFAULT_CONFIG[section][key]
        value = self._config.get(section, {}).get(key, default)
        # bool 是 int 的子类，需要单独排除
        if isinstance(value, bool) and bool not in expected:
            value = None
        if value is None and default is None:
            return None
        if not isinstance(value, expected):
            logger.warning(
                f"配置项 {section}.{key} 类型无效: {value!r}，使用默认值 {default!r}"
            )
            return default
        return value

    def get_dialect(self, schema: str) -> tuple[str, str]:
        """
        获取某种 CSV 方言的分隔符和小数点。

        Args:
            schema: "scopus" 或 "wos"

        Returns:
            (delimiter, decimal) 元组

        Raises:
            ConfigError: 未知的 schema

        Example:
            >>> config = ConfigManager()
            >>> config.get_dialect("scopus")
            (';', ',')
        """
        if schema not in SCHEMAS:
            raise ConfigError(f"未知的文件方言: {schema}，可选值: {SCHEMAS}")
        default = self.DEFAULT_CONFIG["datastore"][schema]
        dialect = self._config.get("datastore", {}).get(schema, {})
        if not isinstance(dialect, dict):
            logger.warning(f"配置项 datastore.{schema} 格式无效，使用默认方言")
            dialect = {}
        delimiter = dialect.get("delimiter", default["delimiter"])
        decimal = dialect.get("decimal", default["decimal"])
        if not isinstance(delimiter, str) or len(delimiter) != 1:
            logger.warning(f"分隔符配置无效: {delimiter!r}，使用默认值")
            delimiter = default["delimiter"]
        if decimal not in (".", ","):
            logger.warning(f"小数点配置无效: {decimal!r}，使用默认值")
            decimal = default["decimal"]
        return delimiter, decimal

    def get_join_key(self) -> str:
        """
        获取合并两个数据库时使用的期刊键（title 或 issn）。

        Returns:
            键名
        """
        key = self._section_value("datastore", "join_key", (str,))
        if key not in ("title", "issn"):
            logger.warning(f"join_key 配置无效: {key!r}，使用 title")
            return "title"
        return key

    def get_encoding(self) -> str:
        """获取 CSV 文件编码"""
        return self._section_value("datastore", "encoding", (str,))

    def get_lasso_defaults(self) -> dict[str, Any]:
        """
        获取 LASSO 默认参数。

        Returns:
            包含 num_lambdas、lambda_ratio、tol、max_sweeps、folds、first_k 的字典
        """
        return {
            "num_lambdas": self._section_value("lasso", "num_lambdas", (int,)),
            "lambda_ratio": float(self._section_value("lasso", "lambda_ratio", (int, float))),
            "tol": float(self._section_value("lasso", "tol", (int, float))),
            "max_sweeps": self._section_value("lasso", "max_sweeps", (int,)),
            "folds": self._section_value("lasso", "folds", (int,)),
            "first_k": self._section_value("lasso", "first_k", (int,)),
        }

    def get_forest_defaults(self) -> dict[str, Any]:
        """
        获取随机森林默认参数。

        Returns:
            包含 n_trees、min_samples_split、max_depth、threshold 的字典
        """
        return {
            "n_trees": self._section_value("forest", "n_trees", (int,)),
            "min_samples_split": self._section_value("forest", "min_samples_split", (int,)),
            "max_depth": self._section_value("forest", "max_depth", (int,)),
            "threshold": float(self._section_value("forest", "threshold", (int, float))),
        }

    def get_correlation_threshold(self) -> float:
        """获取相关聚类阈值"""
        return float(self._section_value("correlate", "threshold", (int, float)))

    def get_gls_ridge_eps(self) -> float:
        """获取 FGLS 协方差奇异时的岭正则系数"""
        return float(self._section_value("panel", "gls_ridge_eps", (int, float)))

    def get_default_model(self, target: str) -> str:
        """
        获取某个目标指数的默认系数模型。

        Args:
            target: "if" 或 "sjr"

        Returns:
            模型 ID
        """
        key = "default_sjr_model" if target.lower() == "sjr" else "default_if_model"
        return self._section_value("infer", key, (str,))

    def get_default_seed(self) -> int:
        """
        获取默认随机种子。

        环境变量 JOURNAL_INDEX_SEED 优先于配置文件。

        Returns:
            随机种子
        """
        env_seed = os.environ.get(ENV_SEED)
        if env_seed:
            try:
                return int(env_seed)
            except ValueError:
                logger.warning(f"环境变量 {ENV_SEED}={env_seed!r} 不是整数，忽略")
        return self._section_value("runtime", "seed", (int,))

    def get_log_level(self) -> str:
        """获取日志级别"""
        return str(self._section_value("runtime", "log_level", (str,))).upper()

    def get_n_jobs(self) -> int:
        """获取并行线程数"""
        n_jobs = self._section_value("runtime", "n_jobs", (int,))
        return max(1, n_jobs)

    def get(self, key: str, default: Any = None) -> Any:
        """
        获取配置值。

        支持使用点号分隔的键路径，如 "lasso.num_lambdas"。

        Args:
            key: 配置键，支持点号分隔的路径
            default: 默认值

        Returns:
            配置值或默认值

        Example:
            >>> config = ConfigManager()
            >>> config.get("correlate.threshold")
            0.85
        """
        keys = key.split(".")
        value = self._config

        for k in keys:
            if isinstance(value, dict) and k in value:
                value = value[k]
            else:
                return default

        return value

    def reload(self) -> None:
        """
        重新加载配置。

        从配置文件重新加载配置，用于配置文件变更后的热更新。
        """
        logger.info(f"重新加载配置文件: {self.config_path}")
        self._load_config()

    @property
    def config(self) -> dict[str, Any]:
        """
        获取完整配置字典（只读）。

        Returns:
            配置字典的副本
        """
        return self._deep_copy_dict(self._config)
