"""Channel coding under mean and variance cost constraints: capacity-cost
solver, dispersion, the error floor K(r, V), optimal second-order rates,
the one-switch feedback bound, and Monte Carlo checks of the schemes."""
from .capacity import (CapacityCostSolution, DispersionInfo, check_q_ratio_bound,
                       dispersion, quantized_quantities, solve_capacity_cost, verify_kkt)
from .channel import Dmc, NType, bsc, load_channel, quantize_to_type, validate_channel
from .kfunction import (KResult, ThreePointDist, error_floor, find_beta, k_oracle_grid,
                        k_value, l2_bound, socr)

__version__ = "0.1.0"

__all__ = [
    "CapacityCostSolution", "DispersionInfo", "Dmc", "KResult", "NType", "ThreePointDist",
    "bsc", "check_q_ratio_bound", "dispersion", "error_floor", "find_beta", "k_oracle_grid",
    "k_value", "l2_bound", "load_channel", "quantize_to_type", "quantized_quantities",
    "socr", "solve_capacity_cost", "validate_channel", "verify_kkt",
]
