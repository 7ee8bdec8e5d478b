"""Simulated secure software leasing over subspace states."""

__version__ = "0.1.0"

from .field import FieldParams, Subspace, random_subspace
from .states import PureState, subspace_state, trace_distance
from .scheme import check, gen, lessor, run, run_reusable, setup

__all__ = ["FieldParams", "Subspace", "random_subspace", "PureState", "subspace_state",
           "trace_distance", "setup", "gen", "lessor", "run", "run_reusable", "check", "__version__"]
