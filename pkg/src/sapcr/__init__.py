"""Sense-and-predict cognitive-radio MAC: opportunistic probability from sensed
interference, the optimal access policy and a Monte Carlo slot simulator."""

from .channel import NetworkParams, Regime
from .errors import (ConfigError, DomainError, InfeasibleProtectionError, NumericError,
                     ParameterError, SapError)
from .geometry import BlockageModel, Region
from .op_analysis import (OpResult, asymptotic_floor, empty_ball_radius, op_at, op_below6,
                          op_blockage, op_from_interference, op_mmw)
from .sap_mac import SapPolicy, access_probability, ase, beta_min, optimal_beta, primary_outage

__all__ = [
    "NetworkParams", "Regime", "BlockageModel", "Region",
    "SapError", "ParameterError", "NumericError", "DomainError", "InfeasibleProtectionError",
    "ConfigError",
    "OpResult", "op_at", "op_below6", "op_blockage", "op_mmw", "op_from_interference",
    "empty_ball_radius", "asymptotic_floor",
    "SapPolicy", "access_probability", "ase", "beta_min", "optimal_beta", "primary_outage",
]
