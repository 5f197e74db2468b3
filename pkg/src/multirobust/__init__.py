"""Training and evaluation toolkit for robustness against multiple lp perturbations."""

from multirobust.attacks import (
    ATTACK_NAMES,
    AttackSpec,
    PerturbationSet,
    SaltPepperSpec,
    default_epsilon,
    make_attack,
    pgd_attack,
    salt_pepper_attack,
)
from multirobust.config import (
    AttackConfig,
    DatasetConfig,
    ExperimentConfig,
    ModelConfig,
    OptimizerConfig,
    SeedConfig,
    TrainerConfig,
    fingerprint,
    load_config,
    save_config,
)
from multirobust.estimator import RobustImageClassifier
from multirobust.evaluation import (
    MetricsReport,
    beta_sweep,
    evaluate,
    landscape_directions,
    loss_landscape_grid,
)
from multirobust.experiment import train_experiment
from multirobust.geometry import (
    DEFAULT_SPARSITY,
    NormBall,
    NumericError,
    ball_norm,
    project_ball,
    steepest_direction,
)
from multirobust.losses import ac_loss, cls_loss, total_loss
from multirobust.models import (
    NoiseGenerator,
    generate_augmented,
    make_classifier,
    params_hash,
)
from multirobust.oracles import (
    GradCheckReport,
    fd_gradient,
    fd_hypergradient,
    l1_projection_oracle,
)
from multirobust.training import (
    METHODS,
    LrSchedule,
    TrainState,
    avg_step,
    lr_at,
    max_step,
    meta_gradient,
    mng_ac_step,
    nat_step,
    sat_step,
)

__version__ = "0.1.0"

__all__ = [
    "ATTACK_NAMES",
    "AttackConfig",
    "AttackSpec",
    "DEFAULT_SPARSITY",
    "DatasetConfig",
    "ExperimentConfig",
    "GradCheckReport",
    "LrSchedule",
    "METHODS",
    "MetricsReport",
    "ModelConfig",
    "NoiseGenerator",
    "NormBall",
    "NumericError",
    "OptimizerConfig",
    "PerturbationSet",
    "RobustImageClassifier",
    "SaltPepperSpec",
    "SeedConfig",
    "TrainState",
    "TrainerConfig",
    "ac_loss",
    "avg_step",
    "ball_norm",
    "beta_sweep",
    "cls_loss",
    "default_epsilon",
    "evaluate",
    "fd_gradient",
    "fd_hypergradient",
    "fingerprint",
    "generate_augmented",
    "l1_projection_oracle",
    "landscape_directions",
    "load_config",
    "loss_landscape_grid",
    "lr_at",
    "make_attack",
    "make_classifier",
    "max_step",
    "meta_gradient",
    "mng_ac_step",
    "nat_step",
    "params_hash",
    "pgd_attack",
    "project_ball",
    "salt_pepper_attack",
    "sat_step",
    "save_config",
    "steepest_direction",
    "total_loss",
    "train_experiment",
    "__version__",
]
