"""Dentability of maps on finite point clouds.

Slices, oscillations, the epsilon-derivation and its index, strongly slicing
functionals, delta-convex envelopes, and generators for the standard examples.
"""

from .dcapprox import (
    build_renorm,
    control_check,
    dc_split_check,
    midpoint_drop_check,
    moreau_envelope,
    uniform_error_curve,
)
from .dentability import (
    denting_test,
    derive_once,
    dz_index,
    equi_slice,
    find_small_slice,
    lancien_check,
    modulus_delta,
)
from .examples import (
    TreeSpec,
    gen_norm_one_map,
    gen_sep_metric,
    gen_standard,
    gen_tree,
    martingale_run,
)
from .exceptions import (
    CapacityError,
    DentlabError,
    DomainError,
    InconclusiveError,
    NotFinitelyDentableError,
    OutputError,
    PreconditionError,
)
from .geometry import (
    Metric,
    PointCloud,
    ScoredMap,
    Slice,
    Tolerances,
    covering_number,
    hull_membership,
    oscillation,
    slice_cloud,
    support,
)
from .slicing import bour_bound_check, ss_density_scan, ss_perturb, ss_profile

__version__ = "0.1.0"

__all__ = [
    "build_renorm", "control_check", "dc_split_check", "midpoint_drop_check",
    "moreau_envelope", "uniform_error_curve", "denting_test", "derive_once",
    "dz_index", "equi_slice", "find_small_slice", "lancien_check", "modulus_delta",
    "TreeSpec", "gen_norm_one_map", "gen_sep_metric", "gen_standard", "gen_tree",
    "martingale_run", "CapacityError", "DentlabError", "DomainError",
    "InconclusiveError", "NotFinitelyDentableError", "OutputError", "PreconditionError",
    "Metric", "PointCloud", "ScoredMap", "Slice", "Tolerances", "covering_number",
    "hull_membership", "oscillation", "slice_cloud", "support", "bour_bound_check",
    "ss_density_scan", "ss_perturb", "ss_profile",
]
