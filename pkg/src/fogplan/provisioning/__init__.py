from .greedy import (
    DecisionInput,
    DecisionOutcome,
    all_cloud,
    calc_viol_perc,
    cloud_rule,
    min_cost,
    min_viol,
    static_fog,
)
from .optimal import DEFAULT_LIMIT, evaluate_candidates, solve_optimal

POLICIES = ("min_viol", "min_cost", "all_cloud", "static_fog", "optimal")

__all__ = [
    "DEFAULT_LIMIT",
    "POLICIES",
    "DecisionInput",
    "DecisionOutcome",
    "all_cloud",
    "calc_viol_perc",
    "cloud_rule",
    "evaluate_candidates",
    "min_cost",
    "min_viol",
    "solve_optimal",
    "static_fog",
]
