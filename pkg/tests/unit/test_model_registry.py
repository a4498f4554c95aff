# ModelRegistry 单元测试
# ModelRegistry Unit Tests

"""
ModelRegistry 的单元测试。

测试覆盖：
- 内置模型与发表的回归表逐项一致
- 获取、列出、注册模型
- file: / fit: 引用的解析
- 模型文本格式校验
"""

import json
from pathlib import Path

import numpy as np
import pytest

from src.inference_service import EMBEDDED_FIXED_EFFECT_NOTE
from src.model_registry import (
    ModelFormatError,
    ModelNotFoundError,
    ModelRegistry,
    parse_models,
)
from src.models import (
    CoefficientEstimate,
    CoefficientModel,
    CoefficientTerm,
    PanelFit,
    PanelSpec,
    name_key,
)

FIXTURES = Path(__file__).parent.parent / "fixtures"

EMBEDDED_IDS = ["table5_sjr_full", "table6_if_full", "table7_sjr_reduced", "table8_if_reduced"]


def _published_tables() -> dict[str, list[tuple[str, float, str, float]]]:
    """读取逐字转录的回归表：变量、系数、星号、印刷的标准误"""
    tables: dict[str, list[tuple[str, float, str, float]]] = {}
    current = None
    for line in (FIXTURES / "published_coefficients.txt").read_text(encoding="utf-8").splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        if line.startswith("["):
            current = line.strip("[]")
            tables[current] = []
            continue
        variable, printed, se = line.split("\t")
        stars = printed[len(printed.rstrip("*")):]
        tables[current].append((variable, float(printed.rstrip("*")), stars, float(se)))
    return tables


@pytest.fixture
def registry():
    return ModelRegistry()


class TestEmbeddedModels:
    """测试内置模型"""

    def test_four_models(self, registry):
        assert [m["model_id"] for m in registry.list_models()] == EMBEDDED_IDS

    def test_targets(self, registry):
        assert registry.get("table5_sjr_full").target == "SJR"
        assert registry.get("table6_if_full").target == "IF"
        assert registry.get("table7_sjr_reduced").target == "SJR"
        assert registry.get("table8_if_reduced").target == "IF"

    @pytest.mark.parametrize("model_id", EMBEDDED_IDS)
    def test_matches_published_tables(self, registry, model_id):
        """系数、星号与标准误（取绝对值）逐项与发表的表一致"""
        published = _published_tables()[model_id]
        model = registry.get(model_id)
        assert len(model.terms) == len(published)
        for variable, coefficient, stars, se in published:
            term = model.term(variable)
            assert term.coefficient == coefficient
            assert term.stars == stars
            assert term.std_error == abs(se)

    def test_published_variable_order(self, registry):
        published = _published_tables()["table8_if_reduced"]
        model = registry.get("table8_if_reduced")
        assert [name_key(t.variable) for t in model.terms] == [name_key(p[0]) for p in published]

    def test_fixed_effect_note(self, registry):
        for model_id in EMBEDDED_IDS:
            assert registry.get(model_id).fixed_effect_note == EMBEDDED_FIXED_EFFECT_NOTE

    def test_case_insensitive_term_lookup(self, registry):
        model = registry.get("table6_if_full")
        assert model.term("SJRBESTQuartileQ2").coefficient == 0.011
        assert model.term("CitesDoc4 Years").coefficient == -0.0608


class TestRegistryAccess:
    """测试获取与注册"""

    def test_unknown_model(self, registry):
        with pytest.raises(ModelNotFoundError) as info:
            registry.get("table9")
        assert info.value.model_id == "table9"

    def test_register(self, registry):
        model = CoefficientModel("custom", "IF", (CoefficientTerm("x", 1.0),))
        registry.register(model)
        assert registry.get("custom") is model
        assert "custom" in [m["model_id"] for m in registry.list_models()]


class TestResolve:
    """测试引用解析"""

    def test_resolve_id(self, registry):
        assert registry.resolve("table7_sjr_reduced").model_id == "table7_sjr_reduced"

    def test_resolve_tsv_file(self, registry, tmp_path):
        path = tmp_path / "mine.tsv"
        path.write_text("# version: 1\nmine\tIF\tCitesDoc2years\t0.8\t0.01\t***\n", encoding="utf-8")
        model = registry.resolve(f"file:{path}")
        assert model.model_id == "mine"
        assert model.term("CitesDoc2years").coefficient == 0.8
        assert registry.get("mine") is model

    def test_resolve_json_file(self, registry, tmp_path):
        source = CoefficientModel("json_model", "SJR", (CoefficientTerm("JournalImpactFactor", 0.5, 0.1, "**"),))
        path = tmp_path / "model.json"
        path.write_text(json.dumps(source.to_dict()), encoding="utf-8")
        model = registry.resolve(f"file:{path}")
        assert model.to_dict() == source.to_dict()

    def test_resolve_file_with_two_models(self, registry, tmp_path):
        path = tmp_path / "two.tsv"
        path.write_text("a\tIF\tx\t1\t0\nb\tIF\tx\t2\t0\n", encoding="utf-8")
        with pytest.raises(ModelFormatError):
            registry.resolve(f"file:{path}")

    def test_resolve_missing_file(self, registry, tmp_path):
        with pytest.raises(ModelNotFoundError):
            registry.resolve(f"file:{tmp_path / 'absent.tsv'}")

    def test_resolve_fit(self, registry, tmp_path):
        """拟合结果转换为系数模型：保留截距与斜率"""
        fit = PanelFit(
            spec=PanelSpec("y", ("x",), "pooled"),
            coefficients={
                "Intercept": CoefficientEstimate(1.0, 0.1, 10.0, 0.0),
                "x": CoefficientEstimate(2.0, 0.1, 20.0, 0.0),
            },
            r_squared=0.9,
            r_squared_kind="overall",
            n_obs=10,
            n_journals=5,
            n_years=2,
            estimator="ols",
            covariance=np.eye(2) * 0.01,
            rss=1.0,
            df_resid=8,
        )
        path = tmp_path / "fit.json"
        path.write_text(json.dumps(fit.to_dict()), encoding="utf-8")

        model = registry.resolve(f"fit:{path}")

        assert model.model_id == f"fit:{fit.fit_id}"
        assert model.variables == ["Intercept", "x"]
        assert model.term("x").coefficient == 2.0
        assert model.fixed_effect_note == ""

    def test_resolve_invalid_fit(self, registry, tmp_path):
        path = tmp_path / "fit.json"
        path.write_text(json.dumps({"spec": {}}), encoding="utf-8")
        with pytest.raises(ModelFormatError):
            registry.resolve(f"fit:{path}")


class TestParseModels:
    """测试模型文本解析"""

    def test_stars_optional(self):
        models = parse_models("m\tIF\tx\t1.5\t-0.2\n")
        assert models[0].terms[0].stars == ""
        assert models[0].terms[0].std_error == 0.2

    def test_target_alias(self):
        models = parse_models("m\tJournalImpactFactor\tx\t1\t0\n")
        assert models[0].target == "IF"

    def test_unsupported_version(self):
        with pytest.raises(ModelFormatError):
            parse_models("# version: 2\nm\tIF\tx\t1\t0\n")

    @pytest.mark.parametrize("header", ["# version: x", "# version:", "# version: 1.5"])
    def test_unparseable_version(self, header):
        with pytest.raises(ModelFormatError) as info:
            parse_models(f"{header}\nm\tIF\tx\t1\t0\n")
        assert "version" in str(info.value)

    def test_wrong_field_count(self):
        with pytest.raises(ModelFormatError):
            parse_models("m\tIF\tx\t1\n")

    def test_non_numeric_coefficient(self):
        with pytest.raises(ModelFormatError):
            parse_models("m\tIF\tx\tone\t0\n")

    def test_mixed_targets(self):
        with pytest.raises(ModelFormatError):
            parse_models("m\tIF\tx\t1\t0\nm\tSJR\ty\t1\t0\n")

    def test_duplicate_variables(self):
        with pytest.raises(ModelFormatError):
            parse_models("m\tIF\tx\t1\t0\nm\tIF\tX\t2\t0\n")
