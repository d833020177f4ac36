"""Step-optimal gait families for drag-dominated swimmers by locus continuation."""

from .errors import GaitLocusError
from .gait_space import GaitParams
from .locus import LocusOptions, LocusTrace, trace_locus
from .seed import find_max_efficiency_gait, solve_constrained
from .swimmer import SwimmerGeometry, SwimmerModel
from .toy import ToyModel

__all__ = [
    "GaitLocusError",
    "GaitParams",
    "LocusOptions",
    "LocusTrace",
    "trace_locus",
    "find_max_efficiency_gait",
    "solve_constrained",
    "SwimmerGeometry",
    "SwimmerModel",
    "ToyModel",
]
__version__ = "0.1.0"
