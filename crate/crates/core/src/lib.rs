//! Multi-task learning from partially annotated data: turning segmentation
//! masks into instance boxes for a detector and detection boxes into pseudo
//! masks for a segmenter, plus the losses and metrics around them.

pub mod eval;
pub mod flow;
pub mod geometry;
pub mod losses;
pub mod mask;
pub mod pseudo;
pub mod refine;
pub mod segmenter;

pub use geometry::{crop, iou, nms, touch, BBox, Category, LabeledBox, ScoredBox, BACKGROUND, IGNORE};
pub use mask::{connected_components, Component, SemanticMask};
pub use pseudo::{box_fill, make_coarse_mask, make_pseudo_pair, PseudoMaskPair};
pub use refine::{refine, refine_from_mask, Origin, RefinedBox, RefinementParams};
pub use segmenter::{CoarseSegmenter, SegmenterRegistry};
