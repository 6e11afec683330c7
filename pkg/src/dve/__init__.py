"""Dense visual embedding toolkit.

Refines segment embeddings by context suppression, distills them into a
per-pixel student with a cosine loss, converts dense embeddings into
closed-set segmentations (text references, visual means, linear probe),
evaluates with mIoU, and fuses embeddings into a queryable sparse 3D
map. Artifacts flow through small binary formats plus an HTTP service.
"""

from .closedset import (
    IGNORE_LABEL,
    ArgmaxResult,
    MiouReport,
    ProbeWeights,
    ReferenceSet,
    classify_argmax,
    evaluate_miou,
    probe_predict,
    train_linear_probe,
    visual_mean_references,
)
from .core import (
    DEFAULT_ALPHA,
    DEFAULT_DIM,
    GLOBAL_SEGMENT_ID,
    NORM_EPS,
    SegmentRecord,
    SuppressionConfig,
    TeacherVolume,
    assemble_teacher_volume,
    cosine_similarity,
    l2_normalize,
    refine_records,
    suppress_context,
)
from .distill import (
    LossReport,
    StudentParams,
    TrainConfig,
    cosine_distill_loss,
    cosine_distill_loss_grad,
    init_student_params,
    student_forward,
    train_student,
)
from .map3d import (
    CameraIntrinsics,
    EmbeddingMap3D,
    MapBuilder,
    Pose,
    backproject,
    map_classify,
    map_freeze,
    map_insert,
    map_query,
)
from .service import (
    EmbedderConfig,
    SessionState,
    embed_prompt,
    handle_query,
    handle_segment,
)
from .storage import (
    EmbeddingBank,
    load_embedding_bank,
    read_label_map,
    read_map3d,
    read_mask_map,
    read_segment_records,
    read_volume,
    save_embedding_bank,
    similarity_to_pgm,
    write_label_map,
    write_map3d,
    write_mask_map,
    write_segment_records,
    write_volume,
)

__version__ = "0.1.0"
