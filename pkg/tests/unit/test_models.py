# 数据模型单元测试
# Data Models Unit Tests

"""
数据模型的单元测试。

测试覆盖：
- 列名规范化与显著性星号
- VariableMeta: 来源、类型、水平校验
- PanelDataset: 不变量、只读数组、按名称查找、子面板
- PanelSpec / PanelFit: 校验、序列化、稳定标识
- CoefficientModel: 重复变量、显著项筛选
- ClusterPartition / DgpSpec: 校验
"""

import numpy as np
import pytest

from src.models import (
    ClusterPartition,
    CoefficientEstimate,
    CoefficientModel,
    CoefficientTerm,
    DgpSpec,
    EffectsKind,
    ImportanceTable,
    LassoPath,
    LassoPathPoint,
    PanelDataset,
    PanelFit,
    PanelSpec,
    TreeNode,
    VariableKind,
    VariableMeta,
    canonical_name,
    name_key,
    significance_stars,
)


def _numeric(name: str) -> VariableMeta:
    return VariableMeta(name, "SCOPUS", VariableKind.QUALITY_NUMERIC)


def _panel(**overrides) -> PanelDataset:
    values = np.arange(12.0).reshape(2, 3, 2)
    fields = {
        "journals": ("A", "B"),
        "years": (2016, 2017, 2018),
        "variables": (_numeric("SJR"), _numeric("Hindex")),
        "values": values,
        "missing": np.zeros(values.shape, dtype=bool),
        "present": np.ones((2, 3), dtype=bool),
    }
    fields.update(overrides)
    return PanelDataset(**fields)


class TestNames:
    """测试列名规范化"""

    @pytest.mark.parametrize("header,expected", [
        ("Cites / Doc. (2years)", "CitesDoc2years"),
        ("Total Docs. (2018)", "TotalDocs"),
        ("Total Docs. (3years)", "TotalDocs3years"),
        ("Ref. / Doc.", "RefDoc"),
        ("SJR Best Quartile", "SJRBestQuartile"),
        ("5-Year Impact Factor", "5YearImpactFactor"),
    ])
    def test_canonical_name(self, header, expected):
        assert canonical_name(header) == expected

    def test_name_key_ignores_case_and_spacing(self):
        assert name_key("CitesDoc4 Years") == name_key("CitesDoc4Years") == "citesdoc4years"

    @pytest.mark.parametrize("p_value,stars", [
        (0.001, "***"), (0.0099, "***"), (0.01, "**"), (0.049, "**"), (0.05, "*"), (0.099, "*"),
        (0.1, ""), (0.5, ""), (float("nan"), ""),
    ])
    def test_significance_stars(self, p_value, stars):
        assert significance_stars(p_value) == stars


class TestVariableMeta:
    """测试变量元数据"""

    def test_categorical(self):
        meta = VariableMeta("SJRBestQuartile", "SCOPUS", VariableKind.CATEGORICAL_OTHER, levels=("Q1", "Q2"))
        assert meta.is_categorical
        assert not meta.is_area

    def test_area(self):
        meta = VariableMeta("Categories", "SCOPUS", VariableKind.CATEGORICAL_AREA, levels=("Math", "Physics"))
        assert meta.is_area

    def test_invalid_source(self):
        with pytest.raises(ValueError, match="Invalid source"):
            VariableMeta("x", "PUBMED", VariableKind.QUALITY_NUMERIC)

    def test_invalid_kind(self):
        with pytest.raises(ValueError, match="Invalid kind"):
            VariableMeta("x", "WOS", "ordinal")

    def test_boolean_needs_two_levels(self):
        with pytest.raises(ValueError):
            VariableMeta("OpenAccess", "WOS", VariableKind.BOOLEAN, levels=("Yes",))

    def test_numeric_without_levels(self):
        with pytest.raises(ValueError):
            VariableMeta("SJR", "SCOPUS", VariableKind.QUALITY_NUMERIC, levels=("a",))

    def test_duplicate_levels(self):
        with pytest.raises(ValueError):
            VariableMeta("Q", "SCOPUS", VariableKind.CATEGORICAL_OTHER, levels=("Q1", "Q1"))

    def test_round_trip(self):
        meta = VariableMeta("SJRBestQuartileQ2", "SCOPUS", VariableKind.INDICATOR,
                            description="SJRBestQuartile == Q2", parent="SJRBestQuartile",
                            parent_kind=VariableKind.CATEGORICAL_OTHER)
        assert VariableMeta.from_dict(meta.to_dict()) == meta


class TestPanelDataset:
    """测试面板数据集"""

    def test_sizes(self):
        panel = _panel()
        assert (panel.n_journals, panel.n_years, panel.n_obs) == (2, 3, 6)
        assert panel.is_balanced()

    def test_arrays_read_only(self):
        panel = _panel()
        with pytest.raises(ValueError):
            panel.values[0, 0, 0] = 99.0

    def test_missing_cells_zeroed(self):
        missing = np.zeros((2, 3, 2), dtype=bool)
        missing[1, 2, 0] = True
        panel = _panel(missing=missing)
        assert panel.values[1, 2, 0] == 0.0
        assert not panel.is_balanced()

    def test_absent_rows_marked_missing(self):
        present = np.ones((2, 3), dtype=bool)
        present[0, 1] = False
        panel = _panel(present=present)
        assert panel.missing[0, 1].all()
        assert panel.n_obs == 5

    def test_duplicate_journals(self):
        with pytest.raises(ValueError, match="unique"):
            _panel(journals=("A", "A"))

    def test_years_increasing(self):
        with pytest.raises(ValueError, match="increasing"):
            _panel(years=(2016, 2018, 2017))

    def test_non_finite_values(self):
        values = np.arange(12.0).reshape(2, 3, 2)
        values[0, 0, 0] = np.nan
        with pytest.raises(ValueError, match="finite"):
            _panel(values=values)

    def test_non_finite_allowed_when_missing(self):
        values = np.arange(12.0).reshape(2, 3, 2)
        values[0, 0, 0] = np.nan
        missing = np.zeros((2, 3, 2), dtype=bool)
        missing[0, 0, 0] = True
        assert _panel(values=values, missing=missing).values[0, 0, 0] == 0.0

    def test_index_of_loose_match(self):
        panel = _panel()
        assert panel.index_of("H index") == 1
        assert panel.has_variable("sjr")
        assert not panel.has_variable("JIF")

    def test_index_of_ambiguous(self):
        panel = _panel(variables=(_numeric("TotalDocs"), _numeric("Total Docs")))
        with pytest.raises(KeyError):
            panel.index_of("totaldocs")

    def test_pooled_order_and_completeness(self):
        missing = np.zeros((2, 3, 2), dtype=bool)
        missing[0, 1, 1] = True
        panel = _panel(missing=missing)
        data, journal_idx, year_idx = panel.pooled(["SJR", "Hindex"])
        assert data.shape == (5, 2)
        assert list(journal_idx) == [0, 0, 1, 1, 1]
        assert list(year_idx) == [0, 2, 0, 1, 2]

    def test_subset(self):
        sub = _panel().subset(journal_idx=np.array([1]), year_idx=np.array([0, 2]))
        assert sub.journals == ("B",)
        assert sub.years == (2016, 2018)
        assert sub.values[0, 1, 0] == 10.0

    def test_row(self):
        variables = (_numeric("SJR"), VariableMeta("Q", "SCOPUS", VariableKind.CATEGORICAL_OTHER, levels=("Q1", "Q2")))
        values = np.zeros((1, 1, 2))
        values[0, 0] = [1.5, 1]
        panel = PanelDataset(("A",), (2018,), variables, values, np.zeros((1, 1, 2), dtype=bool),
                             np.ones((1, 1), dtype=bool))
        assert panel.row(0, 0) == {"SJR": 1.5, "Q": "Q2"}


class TestPanelSpec:
    """测试回归设定"""

    def test_defaults(self):
        spec = PanelSpec("SJR", ["JournalImpactFactor"])
        assert spec.effects == EffectsKind.FIXED
        assert spec.regressors == ("JournalImpactFactor",)

    @pytest.mark.parametrize("kwargs", [
        {"response": "y", "regressors": ()},
        {"response": "y", "regressors": ("x", "x")},
        {"response": "y", "regressors": ("y",)},
        {"response": "y", "regressors": ("x",), "effects": "between"},
        {"response": "y", "regressors": ("x",), "effects": "random", "gls": True},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            PanelSpec(**kwargs)

    def test_round_trip(self):
        spec = PanelSpec("y", ("x", "z"), EffectsKind.FIXED_TIME, gls=True)
        assert PanelSpec.from_dict(spec.to_dict()) == spec


class TestPanelFit:
    """测试面板回归结果"""

    def _fit(self, r_squared=0.4):
        return PanelFit(
            spec=PanelSpec("y", ("x",), EffectsKind.FIXED_TIME),
            coefficients={
                "x": CoefficientEstimate(1.5, 0.2, 7.5, 0.0001),
                "year2018": CoefficientEstimate(0.1, 0.1, 1.0, 0.3),
            },
            r_squared=r_squared,
            r_squared_kind="within",
            n_obs=40,
            n_journals=20,
            n_years=2,
            estimator="ols",
            covariance=np.array([[0.04, 0.0], [0.0, 0.01]]),
            rss=12.0,
            df_resid=18,
            time_effects=["year2018"],
        )

    def test_stars_from_p_value(self):
        assert self._fit().coefficients["x"].stars == "***"
        assert self._fit().coefficients["year2018"].stars == ""

    def test_slope_names(self):
        assert self._fit().slope_names == ["x"]

    def test_covariance_of(self):
        np.testing.assert_array_equal(self._fit().covariance_of(["year2018"]), [[0.01]])

    def test_round_trip(self):
        fit = self._fit()
        restored = PanelFit.from_dict(fit.to_dict())
        assert restored.to_dict() == fit.to_dict()
        assert restored.fit_id == fit.fit_id
        assert restored.residuals is None

    def test_invalid_r_squared(self):
        with pytest.raises(ValueError):
            self._fit(r_squared=1.2)

    def test_negative_std_error(self):
        with pytest.raises(ValueError):
            CoefficientEstimate(1.0, -0.1, 1.0, 0.5)


class TestCoefficientModel:
    """测试系数模型"""

    def test_printed_negative_se(self):
        assert CoefficientTerm("x", 1.0, -0.25).std_error == 0.25

    def test_non_finite_coefficient(self):
        with pytest.raises(ValueError):
            CoefficientTerm("x", float("inf"))

    def test_duplicate_variables(self):
        with pytest.raises(ValueError):
            CoefficientModel("m", "IF", (CoefficientTerm("Total Docs", 1.0), CoefficientTerm("TotalDocs", 2.0)))

    def test_significant_only_keeps_intercept(self):
        model = CoefficientModel("m", "SJR", (
            CoefficientTerm("Intercept", 0.1),
            CoefficientTerm("a", 1.0, 0.1, "**"),
            CoefficientTerm("b", 2.0),
        ))
        assert model.significant_only().variables == ["Intercept", "a"]

    def test_term_lookup(self):
        model = CoefficientModel("m", "SJR", (CoefficientTerm("CitesDoc2years", 1.0),))
        assert model.term("Cites / Doc. (2years)").coefficient == 1.0
        with pytest.raises(KeyError):
            model.term("SJR")


class TestOtherModels:
    """测试其他数据模型的校验"""

    def test_partition_overlap(self):
        with pytest.raises(ValueError):
            ClusterPartition(groups=[["a", "b"], ["b"]], representatives=["a", "b"])

    def test_partition_representative_outside_group(self):
        with pytest.raises(ValueError):
            ClusterPartition(groups=[["a"], ["b"]], representatives=["b", "a"])

    def test_lasso_path_decreasing(self):
        point = LassoPathPoint(1.0, np.zeros(1), 0.0, 0, 1.0, 0.0)
        with pytest.raises(ValueError):
            LassoPath(variables=["x"], points=[point, point], y_variance=1.0)

    def test_importance_non_negative(self):
        with pytest.raises(ValueError):
            ImportanceTable(["x"], np.array([-1.0]), np.array([1.0]), np.array([-0.1]), np.array([1.0]))

    def test_tree_round_trip(self):
        node = TreeNode(4, 25.0, 2.5, feature=0, threshold=2.5, impurity_decrease=25.0,
                        left=TreeNode(2, 0.0, 0.0), right=TreeNode(2, 0.0, 5.0))
        assert TreeNode.from_dict(node.to_dict()) == node
        assert [n.n_samples for n in node.iter_nodes()] == [4, 2, 2]

    @pytest.mark.parametrize("kwargs", [
        {"noise_sd": -1.0},
        {"effect_corr": 1.5},
        {"error_structure": "ma1"},
        {"rho": -1.0},
        {"n_years": 0},
    ])
    def test_dgp_spec_invalid(self, kwargs):
        params = {"n_journals": 5, "n_years": 3, "slopes": {"x": 1.0}}
        params.update(kwargs)
        with pytest.raises(ValueError):
            DgpSpec(**params)

    def test_dgp_round_trip(self):
        spec = DgpSpec(n_journals=5, n_years=3, slopes={"x": 1.0}, error_structure="ar1", rho=0.3)
        assert DgpSpec.from_dict(spec.to_dict()) == spec
