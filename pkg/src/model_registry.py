# 系数模型注册表
# Model Registry

"""
系数模型注册表模块 - 管理内置与用户提供的系数模型。

支持功能：
- 加载随包发布的带版本纯文本模型文件（每行 model_id、target、variable、coefficient、se、stars）
- 按 ID 获取、列出、注册模型
- 解析 file:PATH（TSV 或 JSON 模型）与 fit:PATH（面板拟合结果 JSON）
- 线程安全
"""

import json
import logging
from pathlib import Path
from threading import Lock
from typing import Any, Optional

from src.inference_service import EMBEDDED_FIXED_EFFECT_NOTE, model_from_fit
from src.models import CoefficientModel, CoefficientTerm, PanelFit

# 配置日志
logger = logging.getLogger(__name__)

EMBEDDED_MODELS_PATH = Path(__file__).parent / "data" / "coefficient_models.tsv"

MODELS_FORMAT_VERSION = 1

# IF 与 JournalImpactFactor 是同一个目标
TARGET_NAMES = {"if": "IF", "journalimpactfactor": "IF", "sjr": "SJR"}


class ModelNotFoundError(Exception):
    """模型不存在异常"""

    def __init__(self, model_id: str):
        self.model_id = model_id
        super().__init__(f"Model not found: {model_id}")


class ModelFormatError(Exception):
    """模型文件格式错误"""
    pass


def parse_models(text: str, source: str = "<text>", fixed_effect_note: str = "") -> list[CoefficientModel]:
    """
    解析模型文本。

    以 # 开头的行为注释；"# version: N" 声明格式版本。数据行以制表符分隔
    model_id、target、variable、coefficient、se、stars，stars 可省略。

    Raises:
        ModelFormatError: 版本不支持或行格式错误
    """
    version = MODELS_FORMAT_VERSION
    grouped: dict[str, dict[str, Any]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            header = line[1:].strip()
            if header.lower().startswith("version:"):
                try:
                    version = int(header.split(":", 1)[1])
                except ValueError:
                    raise ModelFormatError(f"{source}:{lineno}: unparseable models version {header!r}")
                if version != MODELS_FORMAT_VERSION:
                    raise ModelFormatError(f"{source}: unsupported models version {version}")
            continue
        fields = line.rstrip("\n").split("\t")
        if len(fields) not in (5, 6):
            raise ModelFormatError(f"{source}:{lineno}: expected 5 or 6 tab-separated fields, got {len(fields)}")
        model_id, target, variable, coefficient, se = (f.strip() for f in fields[:5])
        stars = fields[5].strip() if len(fields) == 6 else ""
        try:
            term = CoefficientTerm(variable, float(coefficient), float(se), stars)
        except ValueError as e:
            raise ModelFormatError(f"{source}:{lineno}: {e}") from e
        entry = grouped.setdefault(model_id, {"target": target, "terms": []})
        if entry["target"] != target:
            raise ModelFormatError(f"{source}:{lineno}: model '{model_id}' mixes targets")
        entry["terms"].append(term)

    models = []
    for model_id, entry in grouped.items():
        try:
            models.append(
                CoefficientModel(
                    model_id=model_id,
                    target=TARGET_NAMES.get(entry["target"].lower(), entry["target"]),
                    terms=tuple(entry["terms"]),
                    fixed_effect_note=fixed_effect_note,
                    provenance=f"{source}#{model_id}",
                    version=version,
                )
            )
        except ValueError as e:
            raise ModelFormatError(f"{source}: {e}") from e
    return models


def model_from_json(data: dict[str, Any], source: str = "<json>") -> CoefficientModel:
    """由 CoefficientModel.to_dict() 的输出恢复模型"""
    try:
        return CoefficientModel(
            model_id=data["model_id"],
            target=data["target"],
            terms=tuple(
                CoefficientTerm(t["variable"], float(t["coefficient"]), float(t.get("std_error", 0.0)),
                                t.get("stars", ""))
                for t in data["terms"]
            ),
            fixed_effect_note=data.get("fixed_effect_note", ""),
            provenance=data.get("provenance", source),
            version=int(data.get("version", MODELS_FORMAT_VERSION)),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ModelFormatError(f"{source}: invalid model JSON: {e}") from e


class ModelRegistry:
    """
    系数模型注册表。

    初始化时加载内置模型；用户模型通过 register 或 resolve 加入。

    Attributes:
        _models: 模型字典，key 为 model_id
        _lock: 线程锁，保证并发安全

    Example:
        >>> registry = ModelRegistry()
        >>> model = registry.get("table8_if_reduced")
        >>> model = registry.resolve("file:my_model.tsv")
    """

    def __init__(self, path: Optional[Path] = None):
        self._models: dict[str, CoefficientModel] = {}
        self._lock = Lock()
        path = Path(path) if path else EMBEDDED_MODELS_PATH
        for model in parse_models(path.read_text(encoding="utf-8"), source=path.name,
                                  fixed_effect_note=EMBEDDED_FIXED_EFFECT_NOTE):
            self._models[model.model_id] = model
        logger.info(f"ModelRegistry 初始化完成，内置模型 {len(self._models)} 个")

    def get(self, model_id: str) -> CoefficientModel:
        """
        获取模型。

        Raises:
            ModelNotFoundError: 模型不存在
        """
        with self._lock:
            if model_id not in self._models:
                logger.warning(f"模型不存在: {model_id}")
                raise ModelNotFoundError(model_id)
            return self._models[model_id]

    def register(self, model: CoefficientModel) -> None:
        with self._lock:
            if model.model_id in self._models:
                logger.info(f"覆盖已注册的模型: {model.model_id}")
            self._models[model.model_id] = model

    def list_models(self) -> list[dict[str, Any]]:
        """按 ID 排序的模型概要"""
        with self._lock:
            models = sorted(self._models.values(), key=lambda m: m.model_id)
        return [
            {
                "model_id": m.model_id,
                "target": m.target,
                "version": m.version,
                "n_terms": len(m.terms),
                "provenance": m.provenance,
            }
            for m in models
        ]

    def resolve(self, reference: str) -> CoefficientModel:
        """
        按引用获取模型：

        - "file:PATH": .json 为 CoefficientModel JSON，其他按制表符文本解析（须只含一个模型）
        - "fit:PATH": PanelFit JSON，转换为系数模型
        - 其他: 注册表中的 model_id

        解析得到的模型会注册到表中。

        Raises:
            ModelNotFoundError: model_id 不存在或文件不存在
            ModelFormatError: 文件格式错误
        """
        if reference.startswith("file:"):
            path = Path(reference[len("file:"):])
            text = self._read(path, reference)
            if path.suffix.lower() == ".json":
                model = model_from_json(json.loads(text), source=path.name)
            else:
                models = parse_models(text, source=path.name)
                if len(models) != 1:
                    raise ModelFormatError(f"{path}: expected exactly one model, found {len(models)}")
                model = models[0]
        elif reference.startswith("fit:"):
            path = Path(reference[len("fit:"):])
            try:
                fit = PanelFit.from_dict(json.loads(self._read(path, reference)))
            except (KeyError, TypeError, ValueError) as e:
                raise ModelFormatError(f"{path}: invalid fit JSON: {e}") from e
            model = model_from_fit(fit)
        else:
            return self.get(reference)
        self.register(model)
        logger.info(f"加载模型 {model.model_id}（{len(model.terms)} 项）")
        return model

    @staticmethod
    def _read(path: Path, reference: str) -> str:
        if not path.is_file():
            raise ModelNotFoundError(reference)
        return path.read_text(encoding="utf-8")
