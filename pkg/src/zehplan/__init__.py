"""Sample-average planning of household PV and storage investment.

Three models share one scenario set: households investing on their own,
the neighborhood pooling investment as a single user, and a game between
households (PV) and a storage manager that hands out allowances.
"""

__version__ = "0.1.0"

from .game import (
    EquilibriumReport,
    EquilibriumResult,
    GameConfig,
    best_response_manager,
    best_response_user,
    compare_models,
    solve_game,
    verify_equilibrium,
)
from .model import (
    COST_TERMS,
    Bounds,
    ChargeProfile,
    ConfigError,
    CostBreakdown,
    DataError,
    Decision,
    PlannerError,
    ScenarioSet,
    SolverError,
    Tariff,
    TariffError,
    validate_tariff,
)
from .saa import (
    HistoricalData,
    SampleSizeInputs,
    SyntheticParams,
    bootstrap_scenarios,
    read_csv,
    sample_size,
    synthetic_neighborhood,
    write_csv,
)
from .solver import SolveResult, SolverConfig, grid_oracle, minimize_box, solve_global, solve_individual

__all__ = [name for name in dir() if not name.startswith("_")]
