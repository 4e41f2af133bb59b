"""Steer dynamical systems through parameter space by shaping the persistent
homology of their steady-state trajectories.

The pipeline: simulate a parameterized ODE, take the trajectory tail as a
point cloud, compute its Vietoris-Rips persistence, evaluate topological loss
terms on the diagram, and either backpropagate through the whole chain (the
attaching-edge diagram derivative composed with an adjoint ODE solve) or
navigate derivative-free with sampled trust regions.
"""

from .loss import (
    LossEvaluation,
    LossTerm,
    UndefinedEntropyError,
    average_persistence,
    avg_pers_term,
    box_bounds_term,
    entropy_term,
    evaluate,
    forbidden_pairs_term,
    forbidden_params_term,
    forbidden_penalty,
    max_pers_term,
    max_persistence,
    persistent_entropy,
    top_n_persistence,
    top_n_term,
    total_pers_term,
    total_persistence,
)
from .navigate import (
    AdamState,
    GDConfig,
    PathRecord,
    TrustRegionConfig,
    adam_step,
    clip_gradient,
    global_sampling_path,
    gradient_descent_path,
    grid_feature,
    local_sampling_path,
    path_to_csv,
    region_argmax,
    topological_loss_gradient,
)
from .simulate import (
    AdjointState,
    DivergenceError,
    SimulationConfig,
    StateGradientSeed,
    Trajectory,
    adjoint_gradient,
    finite_difference_gradient,
    integrate,
    tail_point_cloud,
)
from .systems import (
    MagneticPendulumParams,
    ParameterVector,
    SystemModel,
    eval_field,
    lorenz_model,
    magnetic_pendulum_model,
    model_by_name,
    rossler_model,
)
from .tda import (
    DiagramGradient,
    PersistenceDiagram,
    PersistencePair,
    PointCloud,
    SingularEdgeError,
    check_general_position,
    diagram_gradient,
    pullback,
    rips_persistence,
)

__all__ = [
    "AdamState",
    "AdjointState",
    "DiagramGradient",
    "DivergenceError",
    "GDConfig",
    "LossEvaluation",
    "LossTerm",
    "MagneticPendulumParams",
    "ParameterVector",
    "PathRecord",
    "PersistenceDiagram",
    "PersistencePair",
    "PointCloud",
    "SimulationConfig",
    "SingularEdgeError",
    "StateGradientSeed",
    "SystemModel",
    "Trajectory",
    "TrustRegionConfig",
    "UndefinedEntropyError",
    "adam_step",
    "adjoint_gradient",
    "average_persistence",
    "avg_pers_term",
    "box_bounds_term",
    "check_general_position",
    "clip_gradient",
    "diagram_gradient",
    "entropy_term",
    "eval_field",
    "evaluate",
    "finite_difference_gradient",
    "forbidden_pairs_term",
    "forbidden_params_term",
    "forbidden_penalty",
    "global_sampling_path",
    "gradient_descent_path",
    "grid_feature",
    "integrate",
    "local_sampling_path",
    "lorenz_model",
    "magnetic_pendulum_model",
    "max_pers_term",
    "max_persistence",
    "model_by_name",
    "path_to_csv",
    "persistent_entropy",
    "pullback",
    "region_argmax",
    "rips_persistence",
    "tail_point_cloud",
    "top_n_persistence",
    "top_n_term",
    "topological_loss_gradient",
    "total_pers_term",
    "total_persistence",
]

__version__ = "0.1.0"
