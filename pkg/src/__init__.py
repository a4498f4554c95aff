# 期刊指数推断系统
# Journal Index Inference

"""
期刊指数推断系统 - 用另一个数据库的变量推断期刊在 SCOPUS / WOS 中缺失的质量指数（SJR、影响因子）。
"""

__version__ = "1.0.0"
