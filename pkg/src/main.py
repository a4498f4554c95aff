# 命令行主程序
# Main Application

"""
命令行主程序模块 - 把数据导入、变量选择、面板回归与指数推断串成完整流程。

支持功能：
- ingest: 读取 SCOPUS / WOS 导出文件，合并并保留完整期刊，写出规范面板
- describe: 描述统计
- lasso: 正则化路径与交叉验证
- forest: 随机森林变量重要性
- corr: 相关矩阵、相关聚类与 VIF
- fit: 面板回归（pooled / fixed / fixed_time / random / all，可选 FGLS）
- estimate: 用系数模型估计缺失的指数
- synth: 生成合成面板
- models: 列出可用的系数模型

每次运行写出 manifest.json（命令、解析后的参数、种子、版本、输入文件 SHA-256，不含时间戳）；
出错时在输出位置写出 FAILED 标记。退出码：0 成功，2 参数错误，1 计算错误。
"""

import argparse
import hashlib
import json
import logging
import math
import os
import sys
from pathlib import Path
from typing import Any, Callable, Literal, Optional

import numpy as np
import pandas as pd
import scipy
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src import __version__
from src.config_manager import ConfigError, ConfigManager
from src.correlation_service import CorrelationError, CorrelationService
from src.datastore_service import DatastoreError, DatastoreService
from src.forest_service import ForestError, ForestService
from src.inference_service import InferenceError, InferenceService
from src.lasso_service import LassoError, LassoProblem, LassoService
from src.model_registry import ModelFormatError, ModelNotFoundError, ModelRegistry
from src.models import EffectsKind, PanelSpec
from src.panel_service import PanelError, PanelService
from src.synth_service import SynthError, SynthService

# 配置日志
logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

SERVICE_ERRORS = (
    DatastoreError,
    LassoError,
    ForestError,
    CorrelationError,
    PanelError,
    InferenceError,
    ModelNotFoundError,
    ModelFormatError,
    SynthError,
    ConfigError,
)


class UsageError(Exception):
    """参数组合无效"""
    pass


# ============== 参数模型 ==============

class CommandOptions(BaseModel):
    """各子命令参数的公共部分"""
    model_config = ConfigDict(extra="forbid")

    out: str
    seed: Optional[int] = None

    def input_paths(self) -> list[str]:
        return []

    def writes_panel(self) -> bool:
        return False


def _split_year(item: str) -> tuple[str, Optional[int]]:
    """PATH 或 PATH@YEAR"""
    path, sep, year = item.rpartition("@")
    if sep and year.isdigit():
        return path, int(year)
    return item, None


class IngestOptions(CommandOptions):
    scopus: list[str] = Field(default_factory=list)
    wos: list[str] = Field(default_factory=list)
    years: Optional[tuple[int, int]] = None
    key: Optional[Literal["title", "issn"]] = None

    @field_validator("years", mode="before")
    @classmethod
    def parse_years(cls, value: Any) -> Any:
        if isinstance(value, str):
            start, sep, end = value.partition(":")
            if not sep:
                raise ValueError("years must look like START:END")
            return int(start), int(end)
        return value

    @model_validator(mode="after")
    def check_sources(self) -> "IngestOptions":
        if not self.scopus and not self.wos:
            raise ValueError("at least one of --scopus / --wos is required")
        if self.years and self.years[0] > self.years[1]:
            raise ValueError(f"empty year range {self.years[0]}:{self.years[1]}")
        return self

    def input_paths(self) -> list[str]:
        return [_split_year(item)[0] for item in self.scopus + self.wos]

    def writes_panel(self) -> bool:
        return True


class PanelInputOptions(CommandOptions):
    panel: str

    def input_paths(self) -> list[str]:
        return [self.panel]


class DescribeOptions(PanelInputOptions):
    pass


class SelectionOptions(PanelInputOptions):
    target: str = "sjr"
    features: Literal["scopus", "wos", "both"] = "wos"


class LassoOptions(SelectionOptions):
    folds: Optional[int] = Field(default=None, ge=2)
    num_lambdas: Optional[int] = Field(default=None, ge=2)
    lambda_ratio: Optional[float] = Field(default=None, gt=0, lt=1)
    first_k: Optional[int] = Field(default=None, ge=0)


class ForestOptions(SelectionOptions):
    trees: Optional[int] = Field(default=None, ge=1)
    threshold: Optional[float] = Field(default=None, ge=0, le=100)
    min_samples_split: Optional[int] = Field(default=None, ge=2)
    max_depth: Optional[int] = Field(default=None, ge=0)
    mtry: Optional[int] = Field(default=None, ge=1)
    save_forest: Optional[bool] = None


class CorrOptions(PanelInputOptions):
    vars: list[str] = Field(min_length=1)
    threshold: Optional[float] = Field(default=None, gt=0, lt=1)
    representatives: list[str] = Field(default_factory=list)


class FitOptions(PanelInputOptions):
    spec: dict[str, Any]
    effects: Optional[Literal["pooled", "fixed", "fixed_time", "random", "all"]] = None
    gls: Optional[bool] = None
    gls_diagonal: Optional[bool] = None

    @field_validator("spec", mode="before")
    @classmethod
    def load_spec(cls, value: Any) -> Any:
        return _load_json_argument(value, "spec")

    @model_validator(mode="after")
    def check_combination(self) -> "FitOptions":
        if "response" not in self.spec or not isinstance(self.spec.get("regressors"), list):
            raise ValueError('spec needs "response" and a "regressors" list')
        effects = self.effects or self.spec.get("effects", EffectsKind.FIXED)
        gls = bool(self.gls or self.gls_diagonal or self.spec.get("gls", False))
        if gls and effects in (EffectsKind.RANDOM, "all"):
            raise ValueError(f"--gls cannot be combined with --effects {effects}")
        if effects != "all":
            # 构造一次以校验设定
            self.panel_spec(effects)
        return self

    def resolved_effects(self) -> str:
        return self.effects or self.spec.get("effects", EffectsKind.FIXED)

    def panel_spec(self, effects: str) -> PanelSpec:
        return PanelSpec(
            response=self.spec["response"],
            regressors=tuple(self.spec["regressors"]),
            effects=effects,
            gls=bool(self.gls or self.gls_diagonal or self.spec.get("gls", False)),
        )

    def input_paths(self) -> list[str]:
        return [self.panel]


class EstimateOptions(CommandOptions):
    model: Optional[str] = None
    target: Literal["sjr", "if"] = "if"
    input: Optional[str] = None
    panel: Optional[str] = None
    schema_name: Literal["scopus", "wos"] = Field(default="scopus", alias="schema")
    year: Optional[int] = None
    allow_partial: Optional[bool] = None
    significant_only: Optional[bool] = None

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    @model_validator(mode="after")
    def check_input(self) -> "EstimateOptions":
        if bool(self.input) == bool(self.panel):
            raise ValueError("exactly one of --input / --panel is required")
        return self

    def input_paths(self) -> list[str]:
        paths = [p for p in (self.input, self.panel) if p]
        if self.model and ":" in self.model:
            paths.append(self.model.split(":", 1)[1])
        return paths


class SynthOptions(CommandOptions):
    spec: dict[str, Any]

    @field_validator("spec", mode="before")
    @classmethod
    def load_spec(cls, value: Any) -> Any:
        return _load_json_argument(value, "spec")

    def writes_panel(self) -> bool:
        return True


class ModelsOptions(CommandOptions):
    pass


def _load_json_argument(value: Any, label: str) -> Any:
    """内联 JSON 或 JSON 文件路径"""
    if not isinstance(value, str):
        return value
    text = value.strip()
    if not text.startswith("{"):
        try:
            text = Path(text).read_text(encoding="utf-8")
        except OSError as e:
            raise ValueError(f"cannot read {label} file {value}: {e}") from e
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ValueError(f"{label} is not valid JSON: {e}") from e


# ============== 输出 ==============

def _clean(value: Any) -> Any:
    """JSON 不支持 NaN / inf，写为 null"""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, (np.floating, float)):
        return float(value) if math.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    return value


def write_json(path: Path, data: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_clean(data), indent=2, ensure_ascii=False, sort_keys=True)
    path.write_text(text + "\n", encoding="utf-8")


def write_frame(path: Path, frame: pd.DataFrame) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, encoding="utf-8", lineterminator="\n")


def sha256_of(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


class RunContext:
    """
    一次运行的输出位置。

    写面板的命令（ingest、synth）的 --out 是面板 CSV 路径，清单与失败标记放在旁边；
    其他命令的 --out 是输出目录。
    """

    def __init__(self, command: str, options: CommandOptions, config: ConfigManager, seed: int):
        self.command = command
        self.options = options
        self.config = config
        self.seed = seed
        out = Path(options.out)
        if options.writes_panel():
            root = out.with_suffix("")
            self.out_dir = out.parent
            self.manifest_path = Path(f"{root}.manifest.json")
            self.failed_path = Path(f"{root}.FAILED")
        else:
            self.out_dir = out
            self.manifest_path = out / "manifest.json"
            self.failed_path = out / "FAILED"

    def output(self, name: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        return self.out_dir / name

    def write_manifest(self, outputs: list[str]) -> None:
        inputs = {}
        for path in self.options.input_paths():
            if os.path.isfile(path):
                inputs[path] = sha256_of(path)
        write_json(self.manifest_path, {
            "command": self.command,
            "options": self.options.model_dump(mode="json", by_alias=True),
            "seed": self.seed,
            "versions": {
                "journal_index": __version__,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "pandas": pd.__version__,
            },
            "inputs": inputs,
            "outputs": sorted(outputs),
        })
        if self.failed_path.exists():
            self.failed_path.unlink()

    def mark_failed(self, message: str) -> None:
        self.failed_path.parent.mkdir(parents=True, exist_ok=True)
        self.failed_path.write_text(f"{self.command} failed: {message}\n", encoding="utf-8")


# ============== 子命令 ==============

def run_ingest(ctx: RunContext) -> list[str]:
    opts: IngestOptions = ctx.options
    datastore = DatastoreService(ctx.config)

    def load(items: list[str], schema: str):
        panels = []
        for item in items:
            path, year = _split_year(item)
            panels.append(datastore.load_csv(path, schema, year=year))
        return panels[0] if len(panels) == 1 else datastore.stack(panels)

    sources = [load(items, schema) for items, schema in ((opts.scopus, "scopus"), (opts.wos, "wos")) if items]
    panel = sources[0] if len(sources) == 1 else datastore.merge(sources[0], sources[1], key=opts.key)
    panel = datastore.keep_complete(panel, opts.years)
    Path(opts.out).parent.mkdir(parents=True, exist_ok=True)
    datastore.write_csv(panel, opts.out)
    print(json.dumps(datastore.panel_summary(panel), sort_keys=True))
    root = Path(opts.out).with_suffix("")
    return [opts.out, f"{root}.meta.json"]


def run_describe(ctx: RunContext) -> list[str]:
    opts: DescribeOptions = ctx.options
    datastore = DatastoreService(ctx.config)
    panel = datastore.read_panel(opts.panel)
    stats = datastore.describe(panel)
    path = ctx.output("describe.json")
    write_json(path, {"panel": datastore.panel_summary(panel), "variables": stats.to_dict()})
    return [str(path)]


def _selection_data(ctx: RunContext, opts: SelectionOptions):
    datastore = DatastoreService(ctx.config)
    panel = datastore.encode_categoricals(datastore.read_panel(opts.panel))
    target, features = datastore.select_features(panel, opts.target, opts.features)
    if not features:
        raise DatastoreError(f"No {opts.features} features available to explain {target}")
    data, _, _ = panel.pooled([target] + features)
    return panel, target, features, data


def run_lasso(ctx: RunContext) -> list[str]:
    opts: LassoOptions = ctx.options
    lasso = LassoService(ctx.config)
    _, target, features, data = _selection_data(ctx, opts)
    problem = LassoProblem.build(data[:, 1:], data[:, 0], features)
    path = lasso.path(problem, num_lambdas=opts.num_lambdas, lambda_ratio=opts.lambda_ratio)
    cv = lasso.cross_validate(problem, folds=opts.folds, lambdas=path.lambdas, seed=ctx.seed,
                              n_jobs=ctx.config.get_n_jobs())
    ordering = lasso.first_k_variables(path, opts.first_k)

    records = []
    for point, record in zip(path.points, path.to_records()):
        record.update({f"coef_{n}": float(c) for n, c in zip(path.variables, point.coefficients)})
        records.append(record)
    path_csv, cv_csv, summary_json = ctx.output("lasso_path.csv"), ctx.output("lasso_cv.csv"), ctx.output("lasso.json")
    write_frame(path_csv, pd.DataFrame(records))
    write_frame(cv_csv, pd.DataFrame(cv.to_records()))
    write_json(summary_json, {
        "target": target,
        "features": problem.names,
        "dropped_constant": problem.dropped,
        "n_obs": problem.n_rows,
        "cross_validation": {k: v for k, v in cv.to_dict().items() if k != "grid"},
        "coefficients_lambda_min": lasso.solution_at(problem, cv.lambda_min),
        "coefficients_lambda_sparse": lasso.solution_at(problem, cv.lambda_sparse),
        "first_variables": ordering.to_dict(),
    })
    print(f"{target}: lambda_min={cv.lambda_min:.6g} lambda_sparse={cv.lambda_sparse:.6g} "
          f"first={ordering.names}")
    return [str(path_csv), str(cv_csv), str(summary_json)]


def run_forest(ctx: RunContext) -> list[str]:
    opts: ForestOptions = ctx.options
    forest_service = ForestService(ctx.config)
    panel, target, features, data = _selection_data(ctx, opts)
    overrides = {
        key: value for key, value in (
            ("n_trees", opts.trees),
            ("min_samples_split", opts.min_samples_split),
            ("max_depth", opts.max_depth),
            ("mtry", opts.mtry),
        ) if value is not None
    }
    params = forest_service.default_params(**overrides)
    X, y = data[:, 1:], data[:, 0]
    forest = forest_service.fit_forest(X, y, features, params, seed=ctx.seed, n_jobs=ctx.config.get_n_jobs())
    table = forest_service.importance(
        forest, X, y, seed=ctx.seed,
        is_area=[panel.variable(n).is_area for n in features],
        n_jobs=ctx.config.get_n_jobs(),
    )
    selected = forest_service.select_relevant(table, opts.threshold)

    importance_csv, summary_json = ctx.output("importance.csv"), ctx.output("forest.json")
    write_frame(importance_csv, pd.DataFrame(table.to_records()))
    write_json(summary_json, {
        "target": target,
        "features": features,
        "params": params.to_dict(),
        "oob_mse": forest.oob_mse,
        "selected": selected,
        "threshold": forest_service.defaults["threshold"] if opts.threshold is None else opts.threshold,
    })
    outputs = [str(importance_csv), str(summary_json)]
    if opts.save_forest:
        model_path = ctx.output("forest_model.json")
        forest_service.save_forest(forest, str(model_path))
        outputs.append(str(model_path))
    print(f"{target}: selected {selected}")
    return outputs


def run_corr(ctx: RunContext) -> list[str]:
    opts: CorrOptions = ctx.options
    datastore = DatastoreService(ctx.config)
    corr = CorrelationService(ctx.config)
    panel = datastore.encode_categoricals(datastore.read_panel(opts.panel))
    names = corr.resolve_variables(panel, opts.vars)
    matrix = corr.correlation_matrix(panel, names)
    partition = corr.cluster(matrix, opts.threshold, opts.representatives or None)
    vif_all = corr.vif(panel, names)
    vif_reduced = corr.vif(panel, partition.representatives)

    matrix_csv, clusters_json = ctx.output("correlation.csv"), ctx.output("clusters.json")
    ctx.out_dir.mkdir(parents=True, exist_ok=True)
    corr.matrix_frame(matrix).to_csv(matrix_csv, encoding="utf-8", lineterminator="\n")
    write_json(clusters_json, {
        "threshold": ctx.config.get_correlation_threshold() if opts.threshold is None else opts.threshold,
        **partition.to_dict(),
        "vif": vif_all.to_dict(),
        "vif_representatives": vif_reduced.to_dict(),
    })
    print(f"{len(partition.groups)} clusters; representatives {partition.representatives}")
    return [str(matrix_csv), str(clusters_json)]


def run_fit(ctx: RunContext) -> list[str]:
    opts: FitOptions = ctx.options
    datastore = DatastoreService(ctx.config)
    panel_service = PanelService(ctx.config)
    panel = datastore.encode_categoricals(datastore.read_panel(opts.panel))

    effects = opts.resolved_effects()
    if effects == "all":
        fits = list(panel_service.fit_all(panel, opts.panel_spec(EffectsKind.FIXED)).values())
    else:
        spec = opts.panel_spec(effects)
        if spec.gls:
            fits = [panel_service.fgls(panel, spec, diagonal=bool(opts.gls_diagonal))]
        else:
            fits = [panel_service.diagnose(panel, spec)]

    table = panel_service.format_fit_table(fits)
    frames = []
    for fit in fits:
        frame = panel_service.coefficient_frame(fit)
        frame.insert(0, "effects", fit.spec.effects)
        frame.insert(1, "estimator", fit.estimator)
        frames.append(frame)

    fit_json, coef_csv, table_txt = ctx.output("fit.json"), ctx.output("coefficients.csv"), ctx.output("table.txt")
    write_json(fit_json, {"fits": [fit.to_dict() for fit in fits]} if len(fits) > 1 else fits[0].to_dict())
    write_frame(coef_csv, pd.concat(frames, ignore_index=True))
    table_txt.write_text(table, encoding="utf-8")
    print(table)
    return [str(fit_json), str(coef_csv), str(table_txt)]


def run_estimate(ctx: RunContext) -> list[str]:
    opts: EstimateOptions = ctx.options
    datastore = DatastoreService(ctx.config)
    inference = InferenceService(ctx.config)
    registry = ModelRegistry()
    model = registry.resolve(opts.model or ctx.config.get_default_model(opts.target))
    if opts.panel:
        panel = datastore.read_panel(opts.panel)
    else:
        panel = datastore.load_csv(opts.input, opts.schema_name, year=opts.year)
    report = inference.estimate_batch(
        model, panel,
        allow_partial=bool(opts.allow_partial),
        significant_only=bool(opts.significant_only),
    )
    if opts.allow_partial and report.summary["flag_counts"].get("partial_estimate"):
        print("WARNING: some estimates treat missing variables as 0", file=sys.stderr)

    report_json, report_csv = ctx.output("estimates.json"), ctx.output("estimates.csv")
    write_json(report_json, {"model": model.to_dict(), **report.to_dict()})
    write_frame(report_csv, inference.report_frame(report))
    print(json.dumps(_clean(report.summary), sort_keys=True))
    return [str(report_json), str(report_csv)]


def run_synth(ctx: RunContext) -> list[str]:
    opts: SynthOptions = ctx.options
    synth = SynthService(ctx.config)
    payload = dict(opts.spec)
    if opts.seed is not None or "seed" not in payload:
        payload["seed"] = ctx.seed
    spec = synth.spec_from_dict(payload)
    panel, truth = synth.generate(spec)
    Path(opts.out).parent.mkdir(parents=True, exist_ok=True)
    DatastoreService(ctx.config).write_csv(panel, opts.out)
    root = Path(opts.out).with_suffix("")
    truth_path = Path(f"{root}.truth.json")
    write_json(truth_path, truth.to_dict())
    return [opts.out, f"{root}.meta.json", str(truth_path)]


def run_models(ctx: RunContext) -> list[str]:
    registry = ModelRegistry()
    models_json = ctx.output("models.json")
    listing = registry.list_models()
    write_json(models_json, {"models": listing})
    for entry in listing:
        print(f"{entry['model_id']}\t{entry['target']}\t{entry['n_terms']} terms")
    return [str(models_json)]


COMMANDS: dict[str, tuple[type[CommandOptions], Callable[[RunContext], list[str]]]] = {
    "ingest": (IngestOptions, run_ingest),
    "describe": (DescribeOptions, run_describe),
    "lasso": (LassoOptions, run_lasso),
    "forest": (ForestOptions, run_forest),
    "corr": (CorrOptions, run_corr),
    "fit": (FitOptions, run_fit),
    "estimate": (EstimateOptions, run_estimate),
    "synth": (SynthOptions, run_synth),
    "models": (ModelsOptions, run_models),
}


# ============== 参数解析 ==============

def build_parser() -> argparse.ArgumentParser:
    """
    构造命令行解析器。

    除开关外的参数默认值均为 None，便于区分"未给出"与"显式给出"：
    显式参数 > --config 运行配置 > config.yaml。
    """
    parser = argparse.ArgumentParser(
        prog="journal-index",
        description="Infer journal quality indices (SJR, JIF) across databases",
    )
    parser.add_argument("--log-level", default=None, choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", default=None, help="JSON run configuration mirroring the flags")
        p.add_argument("--seed", type=int, default=None)
        return p

    def selection(p: argparse.ArgumentParser) -> None:
        p.add_argument("--panel", default=None)
        p.add_argument("--target", default=None, help="sjr, if or a variable name")
        p.add_argument("--features", default=None, choices=["scopus", "wos", "both"])
        p.add_argument("--out", default=None)

    p = command("ingest", "Load SCOPUS/WOS exports and write the canonical panel")
    p.add_argument("--scopus", action="append", default=None, help="PATH or PATH@YEAR, repeatable")
    p.add_argument("--wos", action="append", default=None, help="PATH or PATH@YEAR, repeatable")
    p.add_argument("--years", default=None, help="START:END")
    p.add_argument("--key", default=None, choices=["title", "issn"])
    p.add_argument("--out", default=None, help="canonical panel CSV")

    p = command("describe", "Descriptive statistics of a panel")
    p.add_argument("--panel", default=None)
    p.add_argument("--out", default=None)

    p = command("lasso", "LASSO path and cross-validation")
    selection(p)
    p.add_argument("--folds", type=int, default=None)
    p.add_argument("--num-lambdas", type=int, default=None)
    p.add_argument("--lambda-ratio", type=float, default=None)
    p.add_argument("--first-k", type=int, default=None)

    p = command("forest", "Random forest variable importance")
    selection(p)
    p.add_argument("--trees", type=int, default=None)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--min-samples-split", type=int, default=None)
    p.add_argument("--max-depth", type=int, default=None)
    p.add_argument("--mtry", type=int, default=None)
    p.add_argument("--save-forest", action="store_true", default=None)

    p = command("corr", "Correlation matrix, clusters and VIF")
    p.add_argument("--panel", default=None)
    p.add_argument("--vars", nargs="+", default=None, help="variable names or table4-sjr / table4-if")
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--representatives", nargs="+", default=None)
    p.add_argument("--out", default=None)

    p = command("fit", "Panel regression")
    p.add_argument("--panel", default=None)
    p.add_argument("--spec", default=None, help='JSON file or inline {"response": ..., "regressors": [...]}')
    p.add_argument("--effects", default=None, choices=["pooled", "fixed", "fixed_time", "random", "all"])
    p.add_argument("--gls", action="store_true", default=None)
    p.add_argument("--gls-diagonal", action="store_true", default=None)
    p.add_argument("--out", default=None)

    p = command("estimate", "Estimate an index with a coefficient model")
    p.add_argument("--model", default=None, help="model id, file:PATH or fit:PATH")
    p.add_argument("--target", default=None, choices=["sjr", "if"])
    p.add_argument("--input", default=None, help="export CSV in the --schema dialect")
    p.add_argument("--panel", default=None, help="canonical panel CSV")
    p.add_argument("--schema", default=None, choices=["scopus", "wos"])
    p.add_argument("--year", type=int, default=None)
    p.add_argument("--allow-partial", action="store_true", default=None)
    p.add_argument("--significant-only", action="store_true", default=None)
    p.add_argument("--out", default=None)

    p = command("synth", "Generate a synthetic panel")
    p.add_argument("--spec", default=None, help="JSON file or inline data-generating process")
    p.add_argument("--out", default=None, help="canonical panel CSV")

    p = command("models", "List the available coefficient models")
    p.add_argument("--out", default=None)
    return parser


# 输出目录的默认值（写面板的命令必须显式给出 --out）
DEFAULT_OUT = {
    "describe": "output/describe",
    "lasso": "output/lasso",
    "forest": "output/forest",
    "corr": "output/corr",
    "fit": "output/fit",
    "estimate": "output/estimate",
    "models": "output/models",
}


def resolve_options(args: argparse.Namespace) -> dict[str, Any]:
    """
    合并运行配置 JSON 与命令行参数，显式参数优先。

    Raises:
        UsageError: 运行配置文件不可读或不是 JSON 对象
    """
    values: dict[str, Any] = {}
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise UsageError(f"cannot read run configuration {args.config}: {e}") from e
        if not isinstance(loaded, dict):
            raise UsageError(f"run configuration {args.config} must be a JSON object")
        values.update({key.replace("-", "_"): value for key, value in loaded.items()})
    for key, value in vars(args).items():
        if key in ("command", "config", "log_level"):
            continue
        if value is not None:
            values[key] = value
    if "out" not in values and args.command in DEFAULT_OUT:
        values["out"] = DEFAULT_OUT[args.command]
    return values


def main(argv: Optional[list[str]] = None) -> int:
    """
    命令行入口。

    Returns:
        退出码：0 成功，2 参数错误，1 计算错误
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    config = ConfigManager()
    logging.basicConfig(level=args.log_level or config.get_log_level(), format=LOG_FORMAT)

    options_type, handler = COMMANDS[args.command]
    try:
        values = resolve_options(args)
        options = options_type.model_validate(values)
    except (UsageError, ValidationError) as e:
        print(f"{parser.prog} {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE

    seed = options.seed if options.seed is not None else config.get_default_seed()
    ctx = RunContext(args.command, options, config, seed)
    logger.info(f"运行 {args.command}，seed={seed}")
    try:
        outputs = handler(ctx)
    except SERVICE_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        ctx.mark_failed(str(e))
        return EXIT_FAILURE
    except (ValueError, OSError) as e:
        logger.error(f"{args.command} 失败: {e}")
        print(f"error: {e}", file=sys.stderr)
        ctx.mark_failed(str(e))
        return EXIT_FAILURE
    ctx.write_manifest(outputs)
    logger.info(f"{args.command} 完成，输出 {len(outputs)} 个文件")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
