"""Stationary measures of i.i.d. random matrix products on projective space."""

from .classify import (
    critical_semisimplicity_check,
    decide_lift_existence,
    find_stationary_measures,
    orbit_compactness_probe,
)
from .ensemble import (
    MatrixEnsemble,
    ProjectivePoint,
    Subspace,
    WordSample,
    act_projective,
    angular_distance,
    distance_to_subspace,
    load_ensemble,
    dump_ensemble,
    restrict_quotient,
    sample_word,
)
from .errors import (
    ClassifierInconsistent,
    DegenerateFrame,
    EnsembleError,
    ExponentMismatch,
    NotInvariant,
    ProjmeasError,
    ScenarioError,
    TimeoutNoReturn,
    ToleranceAmbiguity,
)
from .invariant import (
    NoComplement,
    algebra_closure,
    complete_reducibility_certificate,
    fkh_filtration,
    invariant_subspace_lattice,
    solve_complement,
)
from .lyapunov import (
    BlockSpec,
    cocycle_average,
    estimate_spectrum,
    per_vector_exponent,
    recurrence_ratio_probe,
    tied,
)
from .scenario import run_scenario
from .stationary import (
    EmpiricalMeasure,
    backward_limit_measure,
    cesaro_measure,
    escape_mass_profile,
    measure_distance,
    resample_component,
    stationarity_residual,
)

__version__ = "0.1.0"
