# 数据存储服务
# Datastore Service

"""
数据存储服务模块 - 读取 SCOPUS / WOS 导出文件并整理成期刊×年份面板。

支持功能：
- 按两种 CSV 方言导入（分隔符、小数点可配置）
- 按标准化标题或 ISSN 合并两个数据库
- 保留在指定年份内完全无缺失的期刊
- 描述统计（均值、中位数、样本标准差、最小值、最大值）
- 分类变量展开为 0/1 指示变量
- 影响因子计算
- 规范面板 CSV 的读写（附带 .meta.json 元数据）
"""

import json
import logging
import math
import os
import re
from dataclasses import replace
from typing import Any, Optional, Union

import numpy as np
import pandas as pd

from src.config_manager import ConfigManager, SCHEMAS
from src.models import (
    DescriptiveStats,
    PanelDataset,
    VariableKind,
    VariableMeta,
    VariableSource,
    VariableSummary,
    canonical_name,
    name_key,
)

# 配置日志
logger = logging.getLogger(__name__)


class DatastoreError(Exception):
    """数据存储错误异常基类"""
    pass


class DataFormatError(DatastoreError):
    """文件格式错误：文件不可读、数值无法解析等"""
    pass


class SchemaError(DatastoreError):
    """列结构错误：缺少标识列、变量名冲突、分类水平不合法等"""
    pass


class DuplicateKeyError(DatastoreError):
    """同一 (期刊, 年份) 出现多次"""

    def __init__(self, journal: str, year: int, line: int):
        self.journal = journal
        self.year = year
        self.line = line
        super().__init__(
            f"Duplicate (journal, year) key ('{journal}', {year}) at line {line}"
        )


class AmbiguousJoinError(DatastoreError):
    """合并时多个期刊标准化为同一个键"""

    def __init__(self, collisions: dict[str, list[str]]):
        self.collisions = collisions
        listing = "; ".join(
            f"'{key}' <- {names}" for key, names in sorted(collisions.items())
        )
        super().__init__(f"Ambiguous join key collisions: {listing}")


class UndefinedImpactFactorError(DatastoreError):
    """前两年文章数为 0，影响因子无定义"""
    pass


# 期刊标识列与年份列的候选列名（规范化后比较）
JOURNAL_COLUMNS = ("title", "journal", "fulljournaltitle", "journaltitle", "sourcetitle")
YEAR_COLUMNS = ("year",)
ISSN_COLUMNS = ("issn", "issns", "eissn")

# 视为缺失的单元格
MISSING_TOKENS = {"", "-", "na", "n/a", "nan", "null"}

# 已知的分类列
KNOWN_CATEGORICALS = {
    "scopus": {
        "SJRBestQuartile": VariableKind.CATEGORICAL_OTHER,
        "Type": VariableKind.CATEGORICAL_OTHER,
        "Country": VariableKind.CATEGORICAL_OTHER,
        "Region": VariableKind.CATEGORICAL_OTHER,
        "Publisher": VariableKind.CATEGORICAL_OTHER,
        "Coverage": VariableKind.CATEGORICAL_OTHER,
        "Categories": VariableKind.CATEGORICAL_AREA,
        "Areas": VariableKind.CATEGORICAL_AREA,
        "OpenAccess": VariableKind.BOOLEAN,
    },
    "wos": {
        "JCRCategory": VariableKind.CATEGORICAL_AREA,
        "Category": VariableKind.CATEGORICAL_AREA,
        "Edition": VariableKind.CATEGORICAL_OTHER,
        "OpenAccess": VariableKind.BOOLEAN,
    },
}

BOOLEAN_LEVELS = ("No", "Yes")
_TRUE_TOKENS = {"yes", "true", "1", "y"}
_FALSE_TOKENS = {"no", "false", "0", "n"}

# 目标指数别名
TARGET_ALIASES = {"sjr": "SJR", "if": "JournalImpactFactor"}
FEATURE_SOURCES = {
    "scopus": {VariableSource.SCOPUS},
    "wos": {VariableSource.WOS},
    "both": {VariableSource.SCOPUS, VariableSource.WOS, VariableSource.DERIVED},
}

_ISSN_PATTERN = re.compile(r"(\d{4})-?(\d{3}[0-9X])")
_NUMERIC_KINDS = {VariableKind.QUALITY_NUMERIC, VariableKind.INDICATOR}


def normalize_title(title: str) -> str:
    """
    标题标准化：忽略大小写、去掉首尾空白、合并内部空白。

    Examples:
        >>> normalize_title("  The   Journal ")
        'the journal'
    """
    return " ".join(str(title).casefold().split())


def normalize_issns(field_value: str) -> set[str]:
    """
    解析 ISSN 字段（可能含多个，以逗号分隔），统一为 "XXXX-XXXX" 形式。

    Examples:
        >>> sorted(normalize_issns("15424863, 0007-9235"))
        ['0007-9235', '1542-4863']
    """
    codes = set()
    for match in _ISSN_PATTERN.finditer(str(field_value).upper().replace(" ", "")):
        codes.add(f"{match.group(1)}-{match.group(2)}")
    return codes


def impact_factor(citations_to_prev2: float, articles_prev2: float) -> float:
    """
    影响因子：T 年对前两年文章的引用数 A 除以前两年文章数 B。

    Args:
        citations_to_prev2: 引用数 A（≥ 0）
        articles_prev2: 文章数 B（> 0）

    Returns:
        A / B

    Raises:
        UndefinedImpactFactorError: B 为 0
        DataFormatError: 输入为负数或非有限值

    Example:
        >>> impact_factor(100, 50)
        2.0
    """
    a = float(citations_to_prev2)
    b = float(articles_prev2)
    if not (math.isfinite(a) and math.isfinite(b)) or a < 0 or b < 0:
        raise DataFormatError(f"Counts must be finite and non-negative, got A={a}, B={b}")
    if b == 0:
        raise UndefinedImpactFactorError(
            "Impact factor is undefined when the article count of the previous two years is 0"
        )
    return a / b


def resolve_target(target: str) -> str:
    """将 "sjr" / "if" 别名解析为变量名，其他名称原样返回"""
    return TARGET_ALIASES.get(target.lower(), target)


def _find_column(columns: list[str], options: tuple[str, ...]) -> Optional[str]:
    lookup = {name_key(c): c for c in columns}
    for option in options:
        if option in lookup:
            return lookup[option]
    return None


_THOUSANDS_GROUPED = {
    ",": re.compile(r"[+-]?[1-9]\d{0,2}(\.\d{3})+(,\d*)?"),
    ".": re.compile(r"[+-]?[1-9]\d{0,2}(,\d{3})+(\.\d*)?"),
}


def _parse_number(text: str, decimal: str) -> float:
    """
    按小数点方言解析数字；千位分隔符被去掉。

    另一个分隔符只能按千位分组出现（1.200,5 或 1,200.5），
    否则说明方言声明有误（如 decimal="," 时的 0.868），报 ValueError。
    """
    cleaned = text.replace(" ", "").replace(" ", "").rstrip("%")
    thousands = "." if decimal == "," else ","
    if thousands in cleaned and not _THOUSANDS_GROUPED[decimal].fullmatch(cleaned):
        raise ValueError(f"separator {thousands!r} in {text!r} does not match decimal mark {decimal!r}")
    cleaned = cleaned.replace(thousands, "")
    if decimal == ",":
        cleaned = cleaned.replace(",", ".")
    value = float(cleaned)
    if not math.isfinite(value):
        raise ValueError(f"non-finite value {text!r}")
    return value


def _parse_boolean(text: str) -> Optional[int]:
    token = text.strip().casefold()
    if token in _TRUE_TOKENS:
        return 1
    if token in _FALSE_TOKENS:
        return 0
    return None


def _sidecar_path(path: str) -> str:
    root, _ = os.path.splitext(path)
    return f"{root}.meta.json"


def _format_value(value: float) -> str:
    return repr(float(value))


class DatastoreService:
    """
    数据存储服务，负责面板数据的导入、合并、过滤与导出。

    Attributes:
        config: 配置管理器实例

    Example:
        >>> service = DatastoreService(ConfigManager())
        >>> scopus = service.load_csv("scimago.csv", "scopus")
        >>> wos = service.load_csv("jcr.csv", "wos")
        >>> panel = service.keep_complete(service.merge(scopus, wos), (2013, 2018))
    """

    def __init__(self, config: ConfigManager):
        """
        初始化数据存储服务。

        Args:
            config: 配置管理器实例，用于获取方言、编码与合并键
        """
        self.config = config

    # -------------------------------------------------------------------------
    # 导入
    # -------------------------------------------------------------------------

    def load_csv(
        self,
        path: str,
        schema: str,
        delimiter: Optional[str] = None,
        decimal: Optional[str] = None,
        categorical: Optional[dict[str, str]] = None,
        year: Optional[int] = None,
    ) -> PanelDataset:
        """
        读取一个导出文件。

        Args:
            path: 文件路径
            schema: "scopus" 或 "wos"，决定默认方言和变量来源
            delimiter: 分隔符，None 时取配置
            decimal: 小数点，None 时取配置
            categorical: 额外声明的分类列（列名 → 变量类型）
            year: 文件没有年份列时使用的年份（Scimago 按年导出）

        Returns:
            PanelDataset: 每个 (期刊, 年份) 一行

        Raises:
            DataFormatError: 文件不可读或数值无法解析（附行号和列名）
            SchemaError: 缺少期刊或年份列
            DuplicateKeyError: (期刊, 年份) 重复
        """
        if schema not in SCHEMAS:
            raise SchemaError(f"Unknown schema '{schema}'. Must be one of: {SCHEMAS}")
        default_delimiter, default_decimal = self.config.get_dialect(schema)
        delimiter = delimiter or default_delimiter
        decimal = decimal or default_decimal
        if decimal not in (".", ","):
            raise DataFormatError(f"Unsupported decimal mark {decimal!r}")

        frame = self._read_frame(path, delimiter)
        source = VariableSource.SCOPUS if schema == "scopus" else VariableSource.WOS

        declared = dict(KNOWN_CATEGORICALS.get(schema, {}))
        for column, kind in (categorical or {}).items():
            declared[canonical_name(column)] = kind
        declared_keys = {name_key(k): v for k, v in declared.items()}

        columns = list(frame.columns)
        journal_col = _find_column(columns, JOURNAL_COLUMNS)
        year_col = _find_column(columns, YEAR_COLUMNS)
        issn_col = _find_column(columns, ISSN_COLUMNS)
        if journal_col is None:
            raise SchemaError(f"{path}: missing journal identity column (e.g. 'Title')")
        if year_col is None and year is None:
            raise SchemaError(f"{path}: missing 'Year' column and no year was given")

        identity = {journal_col, year_col, issn_col}
        value_columns = [c for c in columns if c not in identity]
        metas = []
        for column in value_columns:
            name = canonical_name(column) or column
            kind = declared_keys.get(name_key(name), VariableKind.QUALITY_NUMERIC)
            metas.append((column, name, kind))

        names = [m[1] for m in metas]
        duplicates = sorted({n for n in names if names.count(n) > 1})
        if duplicates:
            raise SchemaError(f"{path}: columns map to duplicate variable names {duplicates}")

        logger.info(f"读取 {schema} 文件: {path}，{len(frame)} 行，{len(metas)} 个变量")
        return self._build_panel(
            frame=frame,
            path=path,
            journal_col=journal_col,
            year_col=year_col,
            issn_col=issn_col,
            fixed_year=year,
            columns=metas,
            source=source,
            decimal=decimal,
        )

    def _read_frame(self, path: str, delimiter: str) -> pd.DataFrame:
        if not os.path.isfile(path):
            raise DataFormatError(f"File not found: {path}")
        try:
            frame = pd.read_csv(
                path,
                sep=delimiter,
                dtype=str,
                keep_default_na=False,
                encoding=self.config.get_encoding(),
                skipinitialspace=True,
            )
        except (OSError, UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            raise DataFormatError(f"Unable to read {path}: {e}") from e
        frame.columns = [str(c).strip() for c in frame.columns]
        return frame

    def _build_panel(
        self,
        frame: pd.DataFrame,
        path: str,
        journal_col: str,
        year_col: Optional[str],
        issn_col: Optional[str],
        fixed_year: Optional[int],
        columns: list[tuple[str, str, str]],
        source: str,
        decimal: str,
        known_levels: Optional[dict[str, tuple[str, ...]]] = None,
        sources: Optional[dict[str, str]] = None,
        descriptions: Optional[dict[str, str]] = None,
        parents: Optional[dict[str, tuple[Optional[str], Optional[str]]]] = None,
        journal_order: Optional[list[str]] = None,
        year_order: Optional[list[int]] = None,
        issn_by_journal: Optional[dict[str, str]] = None,
    ) -> PanelDataset:
        """
        将字符串表格转换为 PanelDataset。

        行号从 2 开始计（第 1 行为表头）。
        """
        known_levels = known_levels or {}
        journal_ids: dict[str, str] = {}
        journal_list: list[str] = list(journal_order or [])
        for j in journal_list:
            journal_ids[normalize_title(j)] = j
        issns: dict[str, str] = dict(issn_by_journal or {})
        levels: dict[str, list[str]] = {
            name: list(known_levels.get(name, ())) for _, name, kind in columns
            if kind in (VariableKind.CATEGORICAL_AREA, VariableKind.CATEGORICAL_OTHER)
        }
        rows: list[tuple[str, int, list[Optional[float]]]] = []
        seen: set[tuple[str, int]] = set()

        for i, record in enumerate(frame.itertuples(index=False, name=None)):
            line = i + 2
            cells = dict(zip(frame.columns, record))
            title = str(cells[journal_col]).strip()
            if not title:
                raise DataFormatError(f"{path}: empty journal identifier at line {line}")
            key = normalize_title(title)
            journal = journal_ids.setdefault(key, title)
            if journal not in journal_list:
                journal_list.append(journal)
            if year_col is not None:
                raw_year = str(cells[year_col]).strip()
                try:
                    number = float(raw_year)
                    row_year = int(number)
                except (ValueError, OverflowError):
                    raise DataFormatError(
                        f"{path}: unparseable year {raw_year!r} at line {line}, column '{year_col}'"
                    )
                if number != row_year:
                    raise DataFormatError(
                        f"{path}: non-integral year {raw_year!r} at line {line}, column '{year_col}'"
                    )
            else:
                row_year = int(fixed_year)
            if (journal, row_year) in seen:
                raise DuplicateKeyError(journal, row_year, line)
            seen.add((journal, row_year))
            if issn_col is not None and str(cells[issn_col]).strip():
                issns.setdefault(journal, str(cells[issn_col]).strip())

            parsed: list[Optional[float]] = []
            for column, name, kind in columns:
                text = str(cells[column]).strip()
                if text.casefold() in MISSING_TOKENS:
                    parsed.append(None)
                    continue
                if kind == VariableKind.BOOLEAN:
                    flag = _parse_boolean(text)
                    if flag is None:
                        raise DataFormatError(
                            f"{path}: unparseable boolean {text!r} at line {line}, column '{column}'"
                        )
                    parsed.append(float(flag))
                elif name in levels:
                    if text not in levels[name]:
                        levels[name].append(text)
                    parsed.append(float(levels[name].index(text)))
                else:
                    try:
                        parsed.append(_parse_number(text, decimal))
                    except ValueError:
                        raise DataFormatError(
                            f"{path}: unparseable number {text!r} at line {line}, column '{column}'"
                        )
            rows.append((journal, row_year, parsed))

        years = sorted(set(year_order or []) | {r[1] for r in rows})
        j_index = {j: k for k, j in enumerate(journal_list)}
        t_index = {t: k for k, t in enumerate(years)}
        shape = (len(journal_list), len(years), len(columns))
        values = np.zeros(shape)
        missing = np.ones(shape, dtype=bool)
        present = np.zeros(shape[:2], dtype=bool)
        for journal, row_year, parsed in rows:
            j, t = j_index[journal], t_index[row_year]
            present[j, t] = True
            for v, value in enumerate(parsed):
                if value is not None:
                    values[j, t, v] = value
                    missing[j, t, v] = False

        variables = []
        for _, name, kind in columns:
            if kind == VariableKind.BOOLEAN:
                var_levels = BOOLEAN_LEVELS
            else:
                var_levels = tuple(levels.get(name, ()))
            parent, parent_kind = (parents or {}).get(name, (None, None))
            variables.append(VariableMeta(
                name=name,
                source=(sources or {}).get(name, source),
                kind=kind,
                description=(descriptions or {}).get(name, ""),
                levels=var_levels,
                parent=parent,
                parent_kind=parent_kind,
            ))

        return PanelDataset(
            journals=tuple(journal_list),
            years=tuple(years),
            variables=tuple(variables),
            values=values,
            missing=missing,
            present=present,
            issns=tuple(issns.get(j, "") for j in journal_list),
        )

    # -------------------------------------------------------------------------
    # 合并与过滤
    # -------------------------------------------------------------------------

    def merge(self, a: PanelDataset, b: PanelDataset, key: Optional[str] = None) -> PanelDataset:
        """
        按期刊身份与年份内连接两个数据集。

        Args:
            a: 第一个数据集（决定期刊标签与顺序）
            b: 第二个数据集
            key: "title"（标准化标题）或 "issn"，None 时取配置

        Returns:
            PanelDataset: 变量为两者并集；仅当两边都有该期刊该年份时单元格存在

        Raises:
            AmbiguousJoinError: 同一侧有两个期刊映射到同一个键
            DatastoreError: 两个数据集没有共同年份
        """
        key = key or self.config.get_join_key()
        if key not in ("title", "issn"):
            raise SchemaError(f"Unknown join key '{key}'")

        pairs = self._match_journals(a, b, key)
        years = sorted(set(a.years) & set(b.years))
        if not years:
            raise DatastoreError(
                f"Datasets share no years: {list(a.years)} vs {list(b.years)}"
            )
        ta = [a.years.index(y) for y in years]
        tb = [b.years.index(y) for y in years]
        ja = np.array([p[0] for p in pairs], dtype=int)
        jb = np.array([p[1] for p in pairs], dtype=int)

        a_names = set(a.variable_names)
        b_variables = []
        for meta in b.variables:
            if meta.name in a_names:
                renamed = f"{meta.name}_{meta.source.lower()}"
                if renamed in a_names:
                    raise SchemaError(f"Cannot disambiguate variable '{meta.name}' while merging")
                logger.warning(f"变量名冲突: {meta.name}，第二个数据集中的变量改名为 {renamed}")
                meta = VariableMeta(
                    name=renamed,
                    source=meta.source,
                    kind=meta.kind,
                    description=meta.description,
                    levels=meta.levels,
                    parent=meta.parent,
                    parent_kind=meta.parent_kind,
                )
            b_variables.append(meta)

        shape_a = (len(ja), len(years), len(a.variables))
        shape_b = (len(jb), len(years), len(b.variables))
        if len(pairs):
            va = a.values[np.ix_(ja, ta)] if a.variables else np.zeros(shape_a)
            vb = b.values[np.ix_(jb, tb)] if b.variables else np.zeros(shape_b)
            ma = a.missing[np.ix_(ja, ta)] if a.variables else np.ones(shape_a, dtype=bool)
            mb = b.missing[np.ix_(jb, tb)] if b.variables else np.ones(shape_b, dtype=bool)
            present = a.present[np.ix_(ja, ta)] & b.present[np.ix_(jb, tb)]
        else:
            va, vb = np.zeros(shape_a), np.zeros(shape_b)
            ma, mb = np.ones(shape_a, dtype=bool), np.ones(shape_b, dtype=bool)
            present = np.zeros((0, len(years)), dtype=bool)

        merged = PanelDataset(
            journals=tuple(a.journals[i] for i in ja),
            years=tuple(years),
            variables=tuple(a.variables) + tuple(b_variables),
            values=np.concatenate([va, vb], axis=2),
            missing=np.concatenate([ma, mb], axis=2),
            present=present,
            issns=tuple(a.issns[i] or b.issns[k] for i, k in zip(ja, jb)),
        )
        logger.info(
            f"合并完成: {a.n_journals} × {b.n_journals} 个期刊 -> {merged.n_journals} 个共同期刊，"
            f"{len(years)} 个年份，{len(merged.variables)} 个变量"
        )
        return merged

    def stack(self, panels: list[PanelDataset]) -> PanelDataset:
        """
        纵向拼接同一来源的多个年度导出。

        期刊按标准化标题对齐，变量取并集，分类水平按出现顺序合并。

        Raises:
            DatastoreError: 没有输入
            SchemaError: 同名变量类型不一致
            DuplicateKeyError: 同一 (期刊, 年份) 出现在多个文件中（line 为 0）
        """
        if not panels:
            raise DatastoreError("Nothing to stack")
        labels: dict[str, str] = {}
        journals: list[str] = []
        issns: dict[str, str] = {}
        metas: dict[str, VariableMeta] = {}
        levels: dict[str, list[str]] = {}
        for p in panels:
            for j, issn in zip(p.journals, p.issns):
                label = labels.setdefault(normalize_title(j), j)
                if label not in journals:
                    journals.append(label)
                if issn:
                    issns.setdefault(label, issn)
            for meta in p.variables:
                if meta.name not in metas:
                    metas[meta.name] = meta
                    levels[meta.name] = list(meta.levels)
                elif metas[meta.name].kind != meta.kind:
                    raise SchemaError(
                        f"Variable '{meta.name}' is {metas[meta.name].kind} in one file and {meta.kind} in another"
                    )
                else:
                    levels[meta.name] += [l for l in meta.levels if l not in levels[meta.name]]

        names = list(metas)
        years = sorted(set().union(*(p.years for p in panels)))
        j_index = {j: k for k, j in enumerate(journals)}
        t_index = {t: k for k, t in enumerate(years)}
        v_index = {n: k for k, n in enumerate(names)}
        shape = (len(journals), len(years), len(names))
        values = np.zeros(shape)
        missing = np.ones(shape, dtype=bool)
        present = np.zeros(shape[:2], dtype=bool)
        for p in panels:
            for jj, tt in zip(*np.nonzero(p.present)):
                journal = labels[normalize_title(p.journals[jj])]
                J, T = j_index[journal], t_index[p.years[tt]]
                if present[J, T]:
                    raise DuplicateKeyError(journal, p.years[tt], 0)
                present[J, T] = True
                for vv, meta in enumerate(p.variables):
                    if p.missing[jj, tt, vv]:
                        continue
                    value = float(p.values[jj, tt, vv])
                    if meta.levels:
                        value = float(levels[meta.name].index(meta.levels[int(value)]))
                    values[J, T, v_index[meta.name]] = value
                    missing[J, T, v_index[meta.name]] = False

        variables = tuple(
            replace(metas[n], levels=tuple(levels[n])) if metas[n].levels else metas[n]
            for n in names
        )
        stacked = PanelDataset(
            journals=tuple(journals),
            years=tuple(years),
            variables=variables,
            values=values,
            missing=missing,
            present=present,
            issns=tuple(issns.get(j, "") for j in journals),
        )
        logger.info(f"拼接 {len(panels)} 个文件: {stacked.n_journals} 个期刊，{len(years)} 个年份")
        return stacked

    def _match_journals(self, a: PanelDataset, b: PanelDataset, key: str) -> list[tuple[int, int]]:
        """返回 (a 下标, b 下标) 列表，按 a 的期刊顺序"""
        if key == "title":
            keys_a = [{normalize_title(j)} for j in a.journals]
            keys_b = [{normalize_title(j)} for j in b.journals]
        else:
            keys_a = [normalize_issns(s) for s in a.issns]
            keys_b = [normalize_issns(s) for s in b.issns]

        index_b: dict[str, int] = {}
        collisions: dict[str, list[str]] = {}
        for side, keys, journals in (("a", keys_a, a.journals), ("b", keys_b, b.journals)):
            owners: dict[str, list[str]] = {}
            for codes, journal in zip(keys, journals):
                for code in codes:
                    owners.setdefault(code, []).append(journal)
            for code, names in owners.items():
                if len(names) > 1:
                    collisions[f"{side}:{code}"] = names
        if collisions:
            raise AmbiguousJoinError(collisions)

        for k, codes in enumerate(keys_b):
            for code in codes:
                index_b[code] = k

        pairs = []
        used_b: dict[int, int] = {}
        for i, codes in enumerate(keys_a):
            matches = sorted({index_b[c] for c in codes if c in index_b})
            if not matches:
                continue
            if len(matches) > 1 or matches[0] in used_b:
                raise AmbiguousJoinError({
                    f"a:{a.journals[i]}": [b.journals[m] for m in matches]
                })
            used_b[matches[0]] = i
            pairs.append((i, matches[0]))
        return pairs

    def keep_complete(
        self,
        d: PanelDataset,
        years: Optional[Union[tuple[int, int], list[int]]] = None,
    ) -> PanelDataset:
        """
        只保留在年份范围内每年每个变量都有值的期刊。

        Args:
            d: 数据集
            years: (起始年, 结束年) 闭区间，或年份列表；None 表示全部年份

        Returns:
            PanelDataset: 平衡面板；结果为空时 empty_warning 为 True

        Raises:
            DatastoreError: 请求的年份不在数据集中
        """
        if years is None:
            wanted = list(d.years)
        elif isinstance(years, tuple) and len(years) == 2:
            wanted = list(range(int(years[0]), int(years[1]) + 1))
        else:
            wanted = sorted(int(y) for y in years)
        absent = [y for y in wanted if y not in d.years]
        if absent:
            raise DatastoreError(f"Years {absent} are not in the dataset {list(d.years)}")

        t = np.array([d.years.index(y) for y in wanted], dtype=int)
        window_present = d.present[:, t]
        window_missing = d.missing[:, t, :]
        complete = window_present.all(axis=1) & ~window_missing.any(axis=(1, 2))
        keep = np.nonzero(complete)[0]
        empty = len(keep) == 0
        if empty:
            logger.warning(f"年份 {wanted[0]}-{wanted[-1]} 内没有完整的期刊，返回空面板")
        else:
            logger.info(f"保留 {len(keep)}/{d.n_journals} 个完整期刊")
        return d.subset(journal_idx=keep, year_idx=t, empty_warning=empty)

    # -------------------------------------------------------------------------
    # 统计与变换
    # -------------------------------------------------------------------------

    def describe(self, d: PanelDataset) -> DescriptiveStats:
        """
        计算每个数值变量的描述统计。

        标准差使用 n-1 分母；只有一个观测时为 0。

        Raises:
            DatastoreError: 某个数值变量没有任何观测
        """
        summaries: dict[str, VariableSummary] = {}
        for k, meta in enumerate(d.variables):
            if meta.kind not in _NUMERIC_KINDS:
                continue
            observed = d.values[:, :, k][~d.missing[:, :, k]]
            if observed.size == 0:
                raise DatastoreError(f"Variable '{meta.name}' has no observations")
            summaries[meta.name] = VariableSummary(
                mean=float(np.mean(observed)),
                median=float(np.median(observed)),
                sd=float(np.std(observed, ddof=1)) if observed.size > 1 else 0.0,
                min=float(np.min(observed)),
                max=float(np.max(observed)),
                n=int(observed.size),
            )
        return DescriptiveStats(summaries)

    def scale(self, d: PanelDataset, c: float, variables: Optional[list[str]] = None) -> PanelDataset:
        """
        将数值变量乘以常数 c（c > 0）。

        Args:
            d: 数据集
            c: 缩放系数
            variables: 要缩放的变量，None 表示全部数值变量
        """
        if not c > 0:
            raise DatastoreError(f"Scale factor must be > 0, got {c}")
        if variables is None:
            idx = [k for k, m in enumerate(d.variables) if m.kind in _NUMERIC_KINDS]
        else:
            idx = [d.index_of(v) for v in variables]
        values = np.array(d.values)
        values[:, :, idx] *= c
        return PanelDataset(
            journals=d.journals,
            years=d.years,
            variables=d.variables,
            values=values,
            missing=d.missing,
            present=d.present,
            issns=d.issns,
            empty_warning=d.empty_warning,
        )

    def encode_categoricals(
        self,
        d: PanelDataset,
        baseline: Optional[dict[str, str]] = None,
    ) -> PanelDataset:
        """
        将每个有 L 个水平的分类变量替换为 L-1 个 0/1 指示变量。

        指示变量命名为 变量名+规范化水平名，例如 SJRBestQuartileQ2。

        Args:
            d: 数据集
            baseline: 变量名 → 基准水平；未指定时取字典序最小的水平

        Returns:
            PanelDataset: 不再含分类变量的数据集

        Raises:
            SchemaError: 基准水平不存在、变量不是分类变量或水平数少于 2
        """
        baseline = dict(baseline or {})
        for name in baseline:
            if not d.has_variable(name) or not d.variable(name).is_categorical:
                raise SchemaError(f"Baseline given for non-categorical variable '{name}'")
        resolved = {d.variable(n).name: level for n, level in baseline.items()}

        metas: list[VariableMeta] = []
        planes: list[np.ndarray] = []
        masks: list[np.ndarray] = []
        taken = {m.name for m in d.variables if not m.is_categorical}
        for k, meta in enumerate(d.variables):
            column = d.values[:, :, k]
            mask = d.missing[:, :, k]
            if not meta.is_categorical:
                metas.append(meta)
                planes.append(column)
                masks.append(mask)
                continue
            if len(meta.levels) < 2:
                raise SchemaError(
                    f"Categorical variable '{meta.name}' needs at least 2 levels, got {list(meta.levels)}"
                )
            base = resolved.get(meta.name, sorted(meta.levels)[0])
            if base not in meta.levels:
                raise SchemaError(
                    f"Baseline level '{base}' not present in '{meta.name}' levels {list(meta.levels)}"
                )
            for index, level in enumerate(meta.levels):
                if level == base:
                    continue
                indicator = f"{meta.name}{canonical_name(level)}"
                if indicator == meta.name or indicator in taken:
                    indicator = f"{meta.name}_{index}"
                taken.add(indicator)
                metas.append(VariableMeta(
                    name=indicator,
                    source=meta.source,
                    kind=VariableKind.INDICATOR,
                    description=f"{meta.name} == {level}",
                    parent=meta.name,
                    parent_kind=meta.kind,
                ))
                planes.append(np.where(mask, 0.0, (column == index).astype(float)))
                masks.append(mask)
            logger.debug(f"{meta.name}: {len(meta.levels)} 个水平，基准 {base}")

        shape = (d.n_journals, d.n_years, 0)
        return PanelDataset(
            journals=d.journals,
            years=d.years,
            variables=tuple(metas),
            values=np.stack(planes, axis=2) if planes else np.zeros(shape),
            missing=np.stack(masks, axis=2) if masks else np.zeros(shape, dtype=bool),
            present=d.present,
            issns=d.issns,
            empty_warning=d.empty_warning,
        )

    def select_features(self, d: PanelDataset, target: str, features: str) -> tuple[str, list[str]]:
        """
        按变量来源选择解释变量。

        Args:
            d: 数据集（分类变量应已展开）
            target: 目标变量名或别名（sjr / if）
            features: "scopus" | "wos" | "both"

        Returns:
            (目标变量名, 解释变量名列表)

        Raises:
            SchemaError: 目标变量不存在或来源不合法
        """
        if features not in FEATURE_SOURCES:
            raise SchemaError(f"Unknown feature set '{features}'. Must be one of: {sorted(FEATURE_SOURCES)}")
        target_name = resolve_target(target)
        if not d.has_variable(target_name):
            raise SchemaError(f"Target variable '{target_name}' not found")
        target_name = d.variable(target_name).name
        sources = FEATURE_SOURCES[features]
        chosen = []
        skipped = []
        for meta in d.variables:
            if meta.name == target_name or meta.source not in sources:
                continue
            if meta.is_categorical:
                skipped.append(meta.name)
                continue
            chosen.append(meta.name)
        if skipped:
            logger.warning(f"未展开的分类变量不参与变量选择: {skipped}")
        return target_name, chosen

    # -------------------------------------------------------------------------
    # 规范格式
    # -------------------------------------------------------------------------

    def write_csv(self, d: PanelDataset, path: str) -> None:
        """
        写出规范面板 CSV（journal, year, 变量...；逗号分隔，点小数点，UTF-8），
        并在旁边写出 .meta.json 记录变量元数据、期刊顺序与 ISSN。

        分类变量写为水平标签，缺失值写为空。
        """
        names = d.variable_names
        records = []
        for j, journal in enumerate(d.journals):
            for t, year in enumerate(d.years):
                if not d.present[j, t]:
                    continue
                record = [journal, str(year)]
                for k, meta in enumerate(d.variables):
                    if d.missing[j, t, k]:
                        record.append("")
                    elif meta.is_categorical:
                        record.append(meta.levels[int(d.values[j, t, k])])
                    else:
                        record.append(_format_value(d.values[j, t, k]))
                records.append(record)
        frame = pd.DataFrame(records, columns=["journal", "year"] + names, dtype=str)
        frame.to_csv(path, index=False, encoding="utf-8", lineterminator="\n")

        meta = {
            "format_version": 1,
            "journals": list(d.journals),
            "years": list(d.years),
            "issns": list(d.issns),
            "variables": [m.to_dict() for m in d.variables],
        }
        with open(_sidecar_path(path), "w", encoding="utf-8") as f:
            f.write(json.dumps(meta, indent=2, ensure_ascii=False, sort_keys=True) + "\n")
        logger.info(f"写出面板: {path}（{d.n_obs} 行，{len(names)} 个变量）")

    def read_panel(self, path: str) -> PanelDataset:
        """
        读取规范面板 CSV。

        有 .meta.json 时恢复变量来源、类型、分类水平、期刊顺序与 ISSN；
        否则所有变量视为 DERIVED 数值变量。

        Raises:
            DataFormatError: 文件不可读或数值无法解析
            SchemaError: 缺少 journal / year 列，或与元数据不一致
        """
        frame = self._read_frame(path, ",")
        columns = list(frame.columns)
        if columns[:2] != ["journal", "year"]:
            raise SchemaError(f"{path}: canonical panel must start with 'journal,year' columns")
        variable_columns = columns[2:]

        sidecar = _sidecar_path(path)
        if not os.path.isfile(sidecar):
            logger.warning(f"未找到元数据文件 {sidecar}，所有变量按数值处理")
            metas = [(c, c, VariableKind.QUALITY_NUMERIC) for c in variable_columns]
            return self._build_panel(
                frame=frame, path=path, journal_col="journal", year_col="year",
                issn_col=None, fixed_year=None, columns=metas,
                source=VariableSource.DERIVED, decimal=".",
            )

        try:
            with open(sidecar, "r", encoding="utf-8") as f:
                meta = json.load(f)
            variables = [VariableMeta.from_dict(v) for v in meta["variables"]]
        except (OSError, ValueError, KeyError) as e:
            raise DataFormatError(f"Invalid metadata file {sidecar}: {e}") from e
        if [v.name for v in variables] != variable_columns:
            raise SchemaError(f"{path}: columns do not match metadata {sidecar}")

        journals = list(meta.get("journals", []))
        issns = list(meta.get("issns", []))
        return self._build_panel(
            frame=frame,
            path=path,
            journal_col="journal",
            year_col="year",
            issn_col=None,
            fixed_year=None,
            columns=[(v.name, v.name, v.kind) for v in variables],
            source=VariableSource.DERIVED,
            decimal=".",
            known_levels={v.name: v.levels for v in variables if v.is_categorical},
            sources={v.name: v.source for v in variables},
            descriptions={v.name: v.description for v in variables},
            parents={v.name: (v.parent, v.parent_kind) for v in variables},
            journal_order=journals,
            year_order=[int(y) for y in meta.get("years", [])],
            issn_by_journal={j: s for j, s in zip(journals, issns) if s},
        )

    @staticmethod
    def describe_to_json(stats: DescriptiveStats) -> str:
        """描述统计的 JSON 报告"""
        return json.dumps(stats.to_dict(), indent=2, ensure_ascii=False, sort_keys=True)

    @staticmethod
    def panel_summary(d: PanelDataset) -> dict[str, Any]:
        """面板规模摘要，用于日志与清单文件"""
        return {
            "journals": d.n_journals,
            "years": list(d.years),
            "variables": len(d.variables),
            "observations": d.n_obs,
            "balanced": d.is_balanced(),
            "empty_warning": d.empty_warning,
        }
