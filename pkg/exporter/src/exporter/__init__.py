"""Train tabular model zoos and CATE meta-learners; export reconcile CSVs."""

from .export import ExportManifest, export_cate_estimates, export_predictions
from .sources import (
    CausalSource,
    FetchError,
    TabularSource,
    load_source,
    synthetic_causal,
    synthetic_tabular,
)

__version__ = "0.1.0"

__all__ = [
    "ExportManifest",
    "export_predictions",
    "export_cate_estimates",
    "TabularSource",
    "CausalSource",
    "FetchError",
    "load_source",
    "synthetic_tabular",
    "synthetic_causal",
    "__version__",
]
