"""Multiscale solver for the regularized diffusion model
u_t + alpha*u_tt - div(kappa grad u) = f on high-contrast media.

Spatial reduction builds a spectral auxiliary space per coarse element and
constraint-energy-minimizing basis functions on oversampling patches; time
integration is an explicit-in-stiffness central-difference scheme with a
stability check, energy monitoring and fine-grid reference runs.
"""

from .grid import GridConfigError, GridHierarchy, build_hierarchy
from .coefficient import (
    FieldFormatError,
    PermeabilityField,
    generate_channels,
    load_raster,
    save_raster,
    uniform_field,
)
from .fem import (
    assemble_mass,
    assemble_stiffness,
    build_partition_of_unity,
)
from .cem import (
    build_auxiliary_space,
    build_global_basis,
    build_multiscale_basis,
    decay_factor,
    export_basis,
    measure_decay,
)
from .solver import (
    CflViolationError,
    LeapfrogConfig,
    QgdProblem,
    assemble_fine_operators,
    check_cfl,
    get_source,
    init_steps,
    leapfrog_solve,
    make_fine_space,
    make_reduced_space,
    reference_solve,
)
from .analysis import (
    ErrorReport,
    StudySpec,
    cfl_boundary_scan,
    compute_errors,
    estimate_inverse_constant,
    run_convergence_study,
)

__version__ = "0.1.0"
