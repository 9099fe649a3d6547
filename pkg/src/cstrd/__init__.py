"""Tree-ring detection on wood cross-section images, with evaluation and measurement tools."""
from .annotation_io import (
    AnnotationFile,
    PithRecord,
    RingShape,
    load_annotation,
    load_pith_csv,
    save_annotation,
    write_annotation,
)
from .errors import CSTRDError, InputError, IOFailure
from .evaluate import (
    Assignment,
    EvalReport,
    assign,
    build_influence_map,
    consensus_gt,
    evaluate,
    expert_rms,
    rmse,
    sample_polygon_on_rays,
    score,
)
from .measure import calibrate, cardinal_widths, equivalent_series
from .rings import DetectParams, DetectionResult, detect, run_detection
from .spider import Chain, Ring, SpiderWeb

__version__ = "0.1.0"

__all__ = [
    "AnnotationFile", "PithRecord", "RingShape", "load_annotation", "load_pith_csv",
    "save_annotation", "write_annotation", "CSTRDError", "InputError", "IOFailure",
    "Assignment", "EvalReport", "assign", "build_influence_map", "consensus_gt", "evaluate",
    "expert_rms", "rmse", "sample_polygon_on_rays", "score", "calibrate", "cardinal_widths",
    "equivalent_series", "DetectParams", "DetectionResult", "detect", "run_detection",
    "Chain", "Ring", "SpiderWeb",
]
