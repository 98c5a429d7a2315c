"""Bottom-up testing of tree-structured hypotheses with false-assignment-rate control."""

__version__ = "0.1.0"

from .baselines import conjunction_method, naive_method, top_down_method
from .bottomup import (BottomUpResult, DetectionState, ProcedureConfig, TwoStageResult,
                       run_one_stage, run_two_stage, thresholds)
from .metrics import TruthModel, error_rates, pinpoint_rate, weighted_jaccard
from .simulate import SimScenario, run_scenario
from .tree import TaxTree, TreeError, build_complete, build_from_lineages, from_edges
from .weights import least_favorable_weights, runtime_weights, sorted_weights_complete

__all__ = [
    "BottomUpResult", "DetectionState", "ProcedureConfig", "SimScenario", "TaxTree",
    "TreeError", "TruthModel", "TwoStageResult", "build_complete", "build_from_lineages",
    "conjunction_method", "error_rates", "from_edges", "least_favorable_weights",
    "naive_method", "pinpoint_rate", "run_one_stage", "run_scenario", "run_two_stage",
    "runtime_weights", "sorted_weights_complete", "thresholds", "top_down_method",
    "weighted_jaccard",
]
