//! Detection and segmentation metrics: COCO-style mAP over IOU thresholds
//! 0.5:0.05:0.95 with 101-point interpolation, dataset-level mean IOU, and a
//! TIDE-style breakdown of detection errors.

mod ap;
mod miou;
mod tide;

pub use ap::{
    average_precision, class_mean, coco_thresholds, gt_categories, interpolated_ap, match_detections, mean_ap,
    Matching, MeanAp, RECALL_POINTS,
};
pub use miou::{mean_iou, MeanIou};
pub use tide::{
    tide_breakdown, DetectionError, ErrorKind, TideReport, DEFAULT_BACKGROUND_IOU, DEFAULT_FOREGROUND_IOU,
};
