"""robomesh: body-mesh kinematics, robustness sweeps, and pose metrics."""

from .augmentation import AugmentationSpec, apply_full, apply_image, classify, sweep_grid
from .body_model import (
    BodyModelTemplate,
    BodyParams,
    forward,
    load_template,
    make_synthetic_template,
    regress_joints,
    save_template,
)
from .camera import AffineMap, Bbox, Camera, co_update, crop_affine, derive_part_bbox, project
from .contrastive import (
    ContrastiveConfig,
    Representation,
    build_positive,
    contrastive_loss,
    make_representation,
    pair_distance,
    retrieve_topk,
)
from .harness import (
    LossWeights,
    MetricReport,
    emit_report,
    gen_dataset,
    load_report,
    run_sweep,
    total_loss,
)
from .localization import (
    HeatVolume,
    PartSegMap,
    gaussian_heatmap,
    l1_loss,
    segmentation_ce_loss,
    soft_argmax3d,
)
from .metrics import (
    AlignmentResult,
    bbox_iou,
    f_score,
    mpjpe,
    pa_mpjpe,
    pa_pve,
    procrustes_align,
    pve,
)
from .rendering import (
    RenderTarget,
    SoftSilhouette,
    projected_silhouette_loss,
    projected_vertex_error,
    rasterize_parts,
    soft_silhouette,
)
from .rotations import rodrigues, rot6d_to_rotmat, rotmat_to_axis_angle, rotmat_to_rot6d
from .samples import SampleRecord

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
