"""Open-vocabulary detect/track/re-detect/follow pipeline over descriptor fields."""

from .core import (
    DescriptorField,
    LabeledRegion,
    Mask,
    QueryDescriptor,
    QueryKind,
    SimilarityConfig,
    cosine_similarity,
    validate_shapes,
)
from .detection import (
    DetectionConfig,
    LabelMap,
    Strategy,
    classify_regions,
    classify_single,
    coarse_detect,
    connected_components,
    pixel_label_map,
    region_descriptor,
)
from .providers import (
    CameraModel,
    ClassSpec,
    GroundTruth,
    ObjectSpec,
    Occluder,
    SceneScript,
    load_descriptor_field,
    load_masks,
    query_from_click,
    query_from_region,
    render_frame,
    write_descriptor_field,
    write_masks,
)
from .redetection import (
    FeatureMemory,
    RecoveryMode,
    human_redetect,
    maybe_store,
    recovery_query,
    redetect,
)
from .tracking import TrackerConfig, TrackState, init_track, is_lost, step_track
from .control import (
    ControlCommand,
    ControllerConfig,
    ControllerState,
    ControlMode,
    compute_command,
    pixel_error,
)
from .simulator import FollowConfig, TrajectoryLog, WorldState, run_following, step_world
from .pipeline import (
    DetectPath,
    FrameProcessor,
    LatestFrameBuffer,
    PipelineMode,
    ProcessorConfig,
    StageTimings,
)
from .evaluation import (
    AnnotatedSequence,
    EvalReport,
    detection_rates,
    emit_report,
    iou,
    trajectory_distance,
)

__version__ = "0.1.0"
