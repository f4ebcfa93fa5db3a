"""Static/dynamic appearance disentanglement of video clips via per-pixel
temporal projection, with joint multi-objective training."""

from .autodiff import Var, backward
from .datagen import LabeledClip, SynthSpec, make_dataset, render_clip
from .gradcheck import grad_check
from .linalg import SingularBasisError, spd_solve_batch
from .objectives import (
    JointMode,
    SchedulerConfig,
    TaskGradients,
    cross_entropy,
    enopr,
    joint_step,
    mgda_alpha,
    scale_schedule,
)
from .projector import (
    MlpConfig,
    PwtpConfig,
    SegmentDecomposition,
    aggregate_conv,
    generate_bases,
    init_pwtp_params,
    project,
    pwtp_forward,
    residual_and_da,
    temporal_descriptors,
)
from .recognizer import head_forward, init_head_params, predict
from .rng import Rng, derive_seed
from .training import TrainConfig, evaluate, train_joint, train_unsup

__all__ = [
    "Var", "backward", "grad_check", "Rng", "derive_seed",
    "SingularBasisError", "spd_solve_batch",
    "PwtpConfig", "MlpConfig", "SegmentDecomposition",
    "aggregate_conv", "temporal_descriptors", "generate_bases", "project",
    "residual_and_da", "pwtp_forward", "init_pwtp_params",
    "enopr", "cross_entropy", "mgda_alpha", "joint_step", "scale_schedule",
    "JointMode", "SchedulerConfig", "TaskGradients",
    "head_forward", "init_head_params", "predict",
    "SynthSpec", "LabeledClip", "render_clip", "make_dataset",
    "TrainConfig", "train_unsup", "train_joint", "evaluate",
]
