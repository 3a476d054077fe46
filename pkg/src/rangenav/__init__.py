"""Single-range + inertial state estimation with a linear drag model.

The package bundles the drag-augmented dynamics, nonlinear observability
analysis, the stepping sliding-window least-squares estimator (full and
polynomial-reduced), a discrete-exact flight simulator with fault
injection, CSV data formats, error metrics, and a benchmark CLI.
"""

from .errors import (
    AnchorCollisionError,
    ConfigError,
    DataError,
    DegeneratePositionError,
    InconsistentWindowError,
    InvalidDragError,
    NonMonotoneTimeError,
    ParseError,
    RangeNavError,
    SolverError,
)
from .estimator import (
    Estimate,
    EstimatorConfig,
    MeasurementWindow,
    PolyCoefficients,
    SolveReport,
    StreamRecord,
    assemble_system,
    build_basis,
    check_convergence,
    remainder_bound,
    remainder_factor,
    set_fault,
    solve_full,
    solve_reduced,
    wriggle,
)
from .model import (
    DiscreteModel,
    DragModel,
    InputSample,
    StateVector,
    acceleration_from_attitude,
    closed_form_velocity,
    discretize,
    output_row,
    preintegrate,
    step,
)
from .observability import (
    ObservabilityReport,
    lie_derivatives_srifo,
    lie_derivatives_srio,
    observability_matrix_srifo,
    observability_matrix_srio,
    observability_timeline,
)
from .simulator import (
    Dataset,
    FaultSchedule,
    NoiseSpec,
    Trajectory,
    TrajectorySpec,
    generate,
    sense,
)

__version__ = "0.1.0"
