from .base import (EngineOptions, FlexOutcome, FspStage, ImbalanceSeries,
                   SolverFailure, initial_stage, initial_stages, shift_stage)
from .dayahead import DayAheadOutcome, InfeasibleMarket, clear_day_ahead
from .schemes import (SCHEMES, CostReport, SchemeResult, account_costs,
                      forward_bids, run_common_joint, run_common_separate,
                      run_lfm_opf, run_lfm_ptdf, run_scheme, run_tso_multilevel)

__all__ = [
    "EngineOptions", "FlexOutcome", "FspStage", "ImbalanceSeries",
    "SolverFailure", "initial_stage", "initial_stages", "shift_stage",
    "DayAheadOutcome", "InfeasibleMarket", "clear_day_ahead",
    "SCHEMES", "CostReport", "SchemeResult", "account_costs", "forward_bids",
    "run_common_joint", "run_common_separate", "run_lfm_opf", "run_lfm_ptdf",
    "run_scheme", "run_tso_multilevel",
]
