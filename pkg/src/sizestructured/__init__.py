"""Size-structured consumer-resource models in two equivalent formulations.

The density formulation evolves a size density together with the
resource concentration; the delay formulation evolves the history of
birth rates and resource levels. :mod:`.intertwine` converts between the
two, :mod:`.equilibrium` finds steady states and :mod:`.spectral`
decides their linearised stability.
"""
from .delay_engine import HistoryState, advance_history, constant_history, evolve_history, rhs_F
from .equilibrium import SteadyState, find_steady_states, invasion_check, reproduction_number, solve_steady
from .errors import ConfigError, HypothesisError, NumericalError, SizeStructuredError
from .ingredients import ModelIngredients, WeightPair, builtin_family, check_hypotheses, expression_model
from .intertwine import check_intertwining, compare_histories, map_L, map_L_inv
from .numerics import DEFAULT_TOLERANCES, TOLERANCE_PROFILES, Grid1D, ToleranceSet
from .pde_engine import DensityState, evolve, picard_resource, solve_birth
from .spectral import analyze_stability, build_char_data, char_det

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DEFAULT_TOLERANCES",
    "DensityState",
    "Grid1D",
    "HistoryState",
    "HypothesisError",
    "ModelIngredients",
    "NumericalError",
    "SizeStructuredError",
    "SteadyState",
    "TOLERANCE_PROFILES",
    "ToleranceSet",
    "WeightPair",
    "advance_history",
    "analyze_stability",
    "build_char_data",
    "builtin_family",
    "char_det",
    "check_hypotheses",
    "check_intertwining",
    "compare_histories",
    "constant_history",
    "evolve",
    "evolve_history",
    "expression_model",
    "find_steady_states",
    "invasion_check",
    "map_L",
    "map_L_inv",
    "picard_resource",
    "reproduction_number",
    "rhs_F",
    "solve_birth",
    "solve_steady",
]
