"""Multi-granular explanations for black-box video summarizers."""

from .evaluation import (
    DeltaScope,
    EvaluationReport,
    delta_e,
    discoverability,
    evaluate_corpus,
    kendall_tau,
    sanity_violation,
)
from .fragment_explainer import (
    FragmentExplanation,
    attention_fragment_explain,
    lime_fragment_explain,
)
from .fragmentation import FragmenterConfig, detect_shots, fragment_scores, subdivide_if_needed
from .object_explainer import (
    ExplanationSkipped,
    FragmentSelection,
    ObjectExplanation,
    enumerate_objects,
    lime_object_explain,
    render_overlay,
    select_fragments_by_summarizer,
    select_keyframe,
)
from .oracle import (
    AttentionDiagonal,
    CapabilityError,
    LinearMaskOracle,
    MeanFeatureScorer,
    Oracle,
    OracleCapabilities,
    OracleError,
    PixelOracle,
    SmoothedNormScorer,
    ToyAttentionScorer,
    grid_mean_rgb_extractor,
)
from .remote import ExternalOracle
from .surrogate import LimeConfig, FitError, sample_masks
from .types import (
    Fragment,
    Fragmentation,
    FrameFeatures,
    NONE_SPEC,
    PerturbationSpec,
    ScoreSequence,
    SegmentationMaps,
    ValidationError,
    VideoBundle,
    validate_bundle,
)

__version__ = "0.1.0"
