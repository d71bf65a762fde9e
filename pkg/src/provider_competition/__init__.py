"""Price competition between two wireless providers over heterogeneous users."""

from .constants import TOLERANCES
from .duopoly import (
    DegenerateBoundaryError,
    Equilibrium,
    EquilibriumKind,
    MuTable,
    Partition,
    find_fractional_mce,
    find_integer_mce,
    mu,
    mu_table,
    preferred_provider,
    solve_nash,
)
from .market import (
    Market,
    MarketValidationError,
    PriceResult,
    Provider,
    User,
    bisection_price_oracle,
    demand,
    fictitious_price,
    optimal_price,
    random_market,
    utility,
)
from .scenario import (
    PlanarScenario,
    Region,
    RegionGrid,
    asymmetric_density_scenario,
    compile_scenario,
    region_grid,
    sweep_beta,
    uniform_scenario,
)
from .welfare import (
    Allocation,
    KktReport,
    check_kkt,
    exhaustive_stability_oracle,
    solve_system,
    total_utility,
)

__all__ = [name for name in dir() if not name.startswith("_")]
