"""Reconciliation of disagreeing predictive models.

Library layout:

* ``core``: datasets, predictors, groups, and the scalar primitives
* ``engine``: the iterative reconciliation loop and its trace
* ``aggregation``: model-class aggregators, incl. the sequential chain
* ``multiplicity``: disagreement metrics and reconciled-set construction
* ``maaudit``: multiaccuracy auditing of traces
* ``cate``: the treatment-effect extension (reduction and unit-level)
* ``fairness``: subgroup corruption/repair harness
* ``synth``: seeded generators for desk-scale experiments
* ``dataio`` / ``cli``: file formats and the command-line runner
"""

from .core import (
    Dataset,
    DisagreementRegion,
    GroupIndicator,
    Predictor,
    brier_score,
    disagreement_region,
    group_mass,
    mean_consistency_gap,
    patch,
    restricted_brier,
    round_to_grid,
)
from .engine import (
    ReconcileParams,
    ReconcileResult,
    RoundRecord,
    reconcile,
    select_update,
    theoretical_round_bound,
)
from .errors import (
    AlignmentError,
    DataFormatError,
    DegenerateInputError,
    EmptyGroupError,
    GenerationError,
    OverlapError,
    ParameterError,
    ReconcileError,
)

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "Predictor",
    "GroupIndicator",
    "DisagreementRegion",
    "brier_score",
    "restricted_brier",
    "group_mass",
    "disagreement_region",
    "round_to_grid",
    "patch",
    "mean_consistency_gap",
    "ReconcileParams",
    "ReconcileResult",
    "RoundRecord",
    "reconcile",
    "select_update",
    "theoretical_round_bound",
    "ReconcileError",
    "AlignmentError",
    "ParameterError",
    "EmptyGroupError",
    "DegenerateInputError",
    "GenerationError",
    "OverlapError",
    "DataFormatError",
    "__version__",
]
