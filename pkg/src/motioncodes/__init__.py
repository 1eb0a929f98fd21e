"""Residual-quantized skeletal motion codec with content/style latent editing."""

from .codec import (
    PROFILES,
    CodecConfig,
    MotionCodec,
    StratifiedSampler,
    fine_tune,
    load_checkpoint,
    loss_suite,
    profile_config,
    save_checkpoint,
    train,
)
from .errors import (
    CheckpointError,
    ConfigurationError,
    MotionCodesError,
    NumericError,
    ParseError,
    StructuralError,
    UndefinedResultError,
)
from .evaluate import (
    ClassifierConfig,
    EvalReport,
    StyleClassifier,
    content_deviation,
    cross_classification,
    export_embeddings,
    linear_probe_accuracy,
    load_classifier,
    per_style_report,
    reconstruction_l2p,
    save_classifier,
    style_accuracy,
    train_classifier,
)
from .features import (
    FeatureLayout,
    Normalizer,
    assemble_features,
    disassemble_features,
    expected_feature_dim,
    feature_weights,
)
from .kinematics import (
    finite_diff,
    forward_kinematics,
    integrate_root,
    root_trajectory,
)
from .mqm import load_clip, save_clip
from .ops import (
    StyleCodeBlock,
    TransitionScript,
    TransitionSegment,
    code_swap_transfer,
    content_extract,
    content_interpolation,
    extract_style_block,
    motion_blend,
    random_style_augmentation,
    style_interpolation,
    style_inversion,
    style_transition,
)
from .skeleton import FrameState, MotionClip, Skeleton, window_dataset
from .synthetic import CONTENT_NAMES, STYLE_TABLE, default_skeleton, generate_synthetic

__version__ = "0.1.0"
