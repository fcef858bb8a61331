"""Generalized multiscale finite elements for the acoustic wave equation."""
from .errors import ConfigurationError, DataError, InstabilityError, InternalError
from .mesh import build_hierarchy, build_oversample_map
from .media import CoefficientField, load_raster, save_raster, synth_periodic_inclusions
from .msbasis import build_bank, load_bank, save_bank
from .ipdg import DGParams, assemble_adg, estimate_trace_constant
from .propagate import CoarseSystem, FineSystem, SourceSpec, TimeGrid, init_states, leapfrog_run
from .metrics import compute_errors, expand

__version__ = "0.1.0"
