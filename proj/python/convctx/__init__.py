"""Conversational context discovery over tweet, hashtag and URL graphs."""

from ._core import (
    DataError,
    NumericError,
    __version__,
    clean_text,
    hdbscan,
    kendall_tau,
    normalize_hashtag,
    normalize_url,
    pagerank,
    partition_quality,
    percentile_rank,
    run_pipeline,
    synthesize,
)

__all__ = [
    "DataError",
    "NumericError",
    "__version__",
    "clean_text",
    "hdbscan",
    "kendall_tau",
    "normalize_hashtag",
    "normalize_url",
    "pagerank",
    "partition_quality",
    "percentile_rank",
    "run_pipeline",
    "synthesize",
]
