"""ESG knowledge-base construction and analysis."""

from ._core import (
    DomainError,
    IoError,
    ParseError,
    ValidationError,
    build_graph,
    cluster,
    count_and_filter,
    cqi,
    match,
    metrics,
    parse_conllu,
    propagate,
    select_seeds,
    stats,
    taxonomy,
    topic_frequencies,
    validate,
)

__all__ = [
    "DomainError",
    "IoError",
    "ParseError",
    "ValidationError",
    "build_graph",
    "cluster",
    "count_and_filter",
    "cqi",
    "match",
    "metrics",
    "parse_conllu",
    "propagate",
    "select_seeds",
    "stats",
    "taxonomy",
    "topic_frequencies",
    "validate",
]
