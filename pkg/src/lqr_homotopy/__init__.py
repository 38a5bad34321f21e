"""Discounted LQR with nonlinear linear-in-parameter policies.

Provides the problem and policy abstractions, a Riccati oracle for the
discounted optimal gain, exact policy gradients with gradient descent,
a discount-factor continuation loop, and the numerical certificate that
fixed-discount gradient descent can trap in a strict local minimum.
"""

from .counterexample import (
    ConeGeometry,
    CounterexampleConstants,
    VerificationReport,
    cone_geometry,
    constants,
    landscape_grid,
    make_mu0,
    reference_instantiation,
    uniform_part_bound_check,
    verify_local_min,
)
from .errors import (
    ConfigError,
    DareConvergenceError,
    DimensionMismatchError,
    DivergenceError,
    LqrError,
    RepresentationError,
    UnstableRolloutError,
)
from .homotopy import (
    HomotopyLog,
    HomotopySchedule,
    StageRecord,
    propose_gamma_step,
    run_homotopy,
    run_vanilla,
)
from .optim import (
    GradientReport,
    PgConfig,
    TrainLog,
    cost_gradient,
    fd_gradient,
    fit_decay_rate,
    hessian_at,
    hessian_series,
    pg_inner,
)
from .policies import (
    Abs,
    BasisFunction,
    Composite,
    LinearEntry,
    Policy,
    PolicyClass,
    ReluFeature,
    Tent,
    features,
    make_counterexample_class,
    make_random_features_class,
    make_spike_feature,
    preimage_on_descending_spike,
)
from .problem import (
    InitialDistribution,
    LqrProblem,
    Trajectory,
    default_horizon,
    discounted_cost,
    rollout,
    step,
)
from .riccati import (
    DareSolution,
    dare_residual,
    gamma_sweep,
    optimal_cost,
    optimal_theta,
    solve_dare,
)

__version__ = "0.1.0"
