"""Workload-clustering materialized view selection."""

from .clustering import cluster
from .costs import (
    CandidateView,
    Selection,
    SelectionConfig,
    TraceStep,
    WarehouseStats,
    WorkloadModel,
    build_candidates,
    collect_stats,
    estimate_cells,
    estimate_size,
    hybrid,
    objective_value,
    profit,
    ratio,
    select_views,
    trace_csv,
)
from .matrix import (
    Partition,
    QueryAttributeMatrix,
    build_matrix,
    dissim_c,
    dissim_q,
    dissim_within,
    quality,
    sim_c,
    sim_q,
    sim_within,
)
from .views import (
    RewrittenQuery,
    ViewCell,
    ViewConfiguration,
    ViewDocument,
    choose_views,
    load_views,
    materialize,
    parse_view,
    rewrite_for_view,
    save_views,
    serialize_view,
)

__all__ = [name for name in dir() if not name.startswith("_")]
