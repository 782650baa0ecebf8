"""Learning-assisted solving of the single-item capacitated lot sizing problem."""
from .core import (
    ConfigurationError,
    ContractError,
    GeneratorConfig,
    Instance,
    ProductionPlan,
    Provenance,
    Solution,
    Status,
    Violation,
    evaluate_objective,
    generate_instance,
    setup_feasible,
    validate_plan,
)
from .exact import BnBOptions, bnb_solve, brute_force_solve
from .flow import Fix, relaxation_bound, solve_fixed_setup

__version__ = "0.1.0"
