"""Face-based asynchronous discrete-event schemes for conservation laws.

The system evolves through local events, each transferring mass across a
single face of a Cartesian finite-volume grid.  Two transfer rules are
provided: a fixed-mass-unit Euler rule (BAS) and the exact two-cell
exponential rule (EAS), which preserves nonnegativity by construction.
"""

from .bch import (DecayStudy, ExponentFit, GeneratorDecomposition,
                  effective_generator, fit_exponents, remainder_decay_study)
from .discretization import (Connection, FaceCoefficients,
                             apply_connection, assemble_global_operator,
                             build_face_coefficients, connection_coefficients,
                             exact_transfer_mass, face_flux, harmonic_mean, phi1)
from .engine import (EditablePriorityQueue, EventLimitExceeded, RunStats,
                     SchemeConfig, delta_mass_bas, delta_mass_eas,
                     reaction_advance, requeue, run_scheme, update_time)
from .fields import (fracture_walk, langmuir_rate_coefficients, peclet,
                     sample_gaussian_field, sample_lognormal_diffusivity,
                     solve_darcy, uniform_face_velocity, velocity_field)
from .grid import FaceGeom, Grid, associated_faces, build_cartesian_grid, face_geometry
from .harness import (ExperimentConfig, ResultRow, build_problem, cmd_bch,
                      cmd_converge, cmd_fields, cmd_run, load_config, parse_config)
from .reference import expm_solve, l2_error, reference_reaction_solve

__version__ = "0.1.0"
