"""Tear meniscus height measurement toolkit.

Edge-operator enhancement, polygon ROI selection, KD-tree band repair,
pupil-anchored TMH measurement (three methods), segmentation metrics and
rater-agreement statistics, all verifiable on synthetic eye phantoms.
"""

__version__ = "0.1.0"

from .errors import (
    TmhkitError,
    EmptyMaskError,
    MissingMeniscusError,
    SectionError,
    GeometryError,
    UndefinedIccError,
    ConvergenceError,
    QualityRejectedError,
)
from .raster import (
    RasterImage,
    BinaryMask,
    GeometryConfig,
    load_png,
    save_png,
    load_mask,
    save_mask,
    otsu_threshold,
    binarize,
    px_to_mm,
    mm_to_px,
)
from .edgeops import edo_kernel, fo_kernel, convolve, edge_enhance
from .repair import (
    Polygon,
    RepairConfig,
    KdTree,
    build_kdtree,
    polygon_inside_mask,
    clip_to_polygon,
    repair_band,
    merge_masks,
)
from .tmh import (
    TmrsSet,
    PupilCenter,
    SectionSpec,
    TmhResult,
    locate_pupil,
    extract_tmrs,
    tmh_method1,
    tmh_method2,
    tmh_method3,
    measure,
)
from .metrics import (
    ConfusionCounts,
    LossWeights,
    confusion,
    miou,
    precision_recall_f1,
    bce_loss,
    dice_loss,
    matrix_norm_loss,
    combined_loss,
)
from .stats import (
    RaterTable,
    AnovaDecomposition,
    anova_two_way,
    icc,
    pearson,
    spearman,
    acc_tmh,
    linreg,
    BlandAltman,
    bland_altman,
    AgreementReport,
    agreement_report,
)
from .phantom import (
    PhantomSpec,
    PhantomCase,
    FlatBand,
    WedgeBand,
    ArcBand,
    generate,
    generate_suite,
    write_suite,
    load_manifest,
    connectivity_spec,
)
from .quality import QualityReport, QualityThresholds, assess
from .pipeline import (
    EdgeConfig,
    PupilAnnotation,
    compute_edge_map,
    threshold_band,
    extract_band,
    annotate_apply,
    bbox_polygon,
)

__all__ = [
    "__version__",
    "TmhkitError",
    "EmptyMaskError",
    "MissingMeniscusError",
    "SectionError",
    "GeometryError",
    "UndefinedIccError",
    "ConvergenceError",
    "QualityRejectedError",
    "RasterImage",
    "BinaryMask",
    "GeometryConfig",
    "load_png",
    "save_png",
    "load_mask",
    "save_mask",
    "otsu_threshold",
    "binarize",
    "px_to_mm",
    "mm_to_px",
    "edo_kernel",
    "fo_kernel",
    "convolve",
    "edge_enhance",
    "Polygon",
    "RepairConfig",
    "KdTree",
    "build_kdtree",
    "polygon_inside_mask",
    "clip_to_polygon",
    "repair_band",
    "merge_masks",
    "TmrsSet",
    "PupilCenter",
    "SectionSpec",
    "TmhResult",
    "locate_pupil",
    "extract_tmrs",
    "tmh_method1",
    "tmh_method2",
    "tmh_method3",
    "measure",
    "ConfusionCounts",
    "LossWeights",
    "confusion",
    "miou",
    "precision_recall_f1",
    "bce_loss",
    "dice_loss",
    "matrix_norm_loss",
    "combined_loss",
    "RaterTable",
    "AnovaDecomposition",
    "anova_two_way",
    "icc",
    "pearson",
    "spearman",
    "acc_tmh",
    "linreg",
    "BlandAltman",
    "bland_altman",
    "AgreementReport",
    "agreement_report",
    "PhantomSpec",
    "PhantomCase",
    "FlatBand",
    "WedgeBand",
    "ArcBand",
    "generate",
    "generate_suite",
    "write_suite",
    "load_manifest",
    "connectivity_spec",
    "QualityReport",
    "QualityThresholds",
    "assess",
    "EdgeConfig",
    "PupilAnnotation",
    "compute_edge_map",
    "threshold_band",
    "extract_band",
    "annotate_apply",
    "bbox_polygon",
]
