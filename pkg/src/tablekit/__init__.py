"""tablekit: table recognition data pipeline, task labels, and evaluation."""

from .geometry import (
    AnnotationError,
    BBox,
    Cell,
    DiscretizationConfig,
    GridEntry,
    LogicalCoords,
    TableAnnotation,
    derive_row_col_lines,
    discretize,
    giou_loss,
    iou,
    l1_box_loss,
    undiscretize,
    validate_annotation,
)
from .htmlcodec import (
    HtmlNode,
    HtmlParseError,
    MalformedTableError,
    canonicalize_structure,
    grid_to_html,
    html_to_grid,
    parse_html_string,
    serialize_html,
)
from .metrics import CorpusReport, DetectionSet, TedsResult, ap50, corpus_eval, teds, tree_edit_distance
from .ingest import CleanResult, clean, crop_table, derive_grids, unify, uncrop_table
from .augment import AugmentConfig, SubTable, augment_table, sample_subtable
from .taskgen import TaskSample

__version__ = "0.1.0"

__all__ = [
    "AnnotationError",
    "AugmentConfig",
    "BBox",
    "Cell",
    "CleanResult",
    "CorpusReport",
    "DetectionSet",
    "DiscretizationConfig",
    "GridEntry",
    "HtmlNode",
    "HtmlParseError",
    "LogicalCoords",
    "MalformedTableError",
    "SubTable",
    "TableAnnotation",
    "TaskSample",
    "TedsResult",
    "ap50",
    "augment_table",
    "canonicalize_structure",
    "clean",
    "corpus_eval",
    "crop_table",
    "derive_grids",
    "derive_row_col_lines",
    "discretize",
    "giou_loss",
    "grid_to_html",
    "html_to_grid",
    "iou",
    "l1_box_loss",
    "parse_html_string",
    "sample_subtable",
    "serialize_html",
    "teds",
    "tree_edit_distance",
    "undiscretize",
    "unify",
    "uncrop_table",
    "validate_annotation",
]
