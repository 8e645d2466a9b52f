//! Query-guided aggregation: instance queries sample the fused volume, are
//! filtered, and inject their features into the cells their boxes cover.

pub mod detector;
pub mod dqa;
pub mod index;
pub mod query;
pub mod select;
pub mod v2q;

pub use detector::{detector_source, DetectorMode, DetectorParams, OracleNoise, ReplayDetections, ReplayRecord};
pub use dqa::{
    attend_cell, dqa, dqa_detailed, ffn_residual, gate, gated_output_channel, gated_output_channel_grad, CellUpdate,
    ChannelNorm, DqaParams, FfnParams,
};
pub use index::{build_voxel_query_index, VoxelQueryIndex};
pub use query::{bev_iou, Box3, DynamicBox, InstanceQuery};
pub use select::{select_queries, SelectMode, SelectionConfig};
pub use v2q::{attend_query, v2q_deform_attn, DeformAttnParams, PointWeights};
