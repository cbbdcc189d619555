"""Eisenhart lift of one-dimensional mechanics: lifted metrics, flatness tests,
flattening coordinate maps and classical/quantum transport checks."""

from .expr import diff, evaluate, lambdify, parse, to_string
from .flatmap import (FlatteningMap, PotentialSpec, build_map_general, map_ho_const,
                      map_ho_timedep, map_linear_galilean, map_linear_mobius, verify_map)
from .geometry import build_metric, is_conformally_flat, is_flat

__all__ = [
    "diff", "evaluate", "lambdify", "parse", "to_string",
    "FlatteningMap", "PotentialSpec", "build_map_general", "map_ho_const", "map_ho_timedep",
    "map_linear_galilean", "map_linear_mobius", "verify_map",
    "build_metric", "is_conformally_flat", "is_flat",
]
__version__ = "0.1.0"
