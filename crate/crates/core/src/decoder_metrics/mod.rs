//! Occupancy decoding, objectives, and evaluation metrics.

pub mod decode;
pub mod grid;
pub mod iou;
pub mod loss;
pub mod rayiou;
pub mod report;

pub use decode::{argmax_labels, decode, DecoderDims, DecoderHead};
pub use grid::SemanticGrid;
pub use iou::{iou_miou, ConfusionMatrix, IouSummary};
pub use loss::{binary_cross_entropy, cross_entropy, losses, Losses, LAMBDA_BIN, LAMBDA_FORE, LAMBDA_OCC};
pub use rayiou::{cast_ray, ray_counts, rayiou, traverse_cells, RayCounts, RayHit, RayIouScores, RaySet};
pub use report::MetricReport;
