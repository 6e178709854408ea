"""Haptic intent inference for two agents carrying one object."""
from .exceptions import (
    AlignmentError,
    ConfigError,
    DegenerateDirectionError,
    DyadicIntentError,
    InitializationError,
    InvalidInputError,
    MissingStreamError,
    SchemaError,
    UndefinedScoreError,
)
from .features import PhysicalObject, PowerFeatures, compute_power_features
from .fusion import FilterConfig, FusedStream, RawStreams, SensorFusion, align
from .intent import (
    AgentGoal,
    GoalAssignment,
    IntentClassifier,
    IntentModel,
    InteractionType,
    classify,
    clustering_scores,
    extract_features,
    fit_lda,
    interaction_type,
)
from .kinematics import GoalLayout, HandleGeometry
from .pipeline import AnalysisConfig, SessionContext, analyze, analyze_session, interaction_signature
from .segmentation import (
    ActionSegment,
    ActionSegmenter,
    PhaseBoundary,
    SegmenterConfig,
    StreamingActionDetector,
    detect_actions,
    detect_negotiation_end,
    segment_session,
)
from .simulator import AgentPolicy, NoiseConfig, SceneConfig, generate_batch, simulate
from .stats import anova, box_stats, negotiation_summary, tukey_hsd

__version__ = "0.1.0"
