//! Streaming dense 3D occupancy engine.
//!
//! Each frame lifts camera features into a voxel volume, fuses it with the
//! motion-compensated state carried from the previous frame, injects
//! instance-query features into the cells their boxes cover, and decodes
//! per-voxel semantics. See [`pipeline`] for the per-frame recurrence.

pub mod classes;
pub mod decoder_metrics;
pub mod error;
pub mod geometry;
pub mod numerics;
pub mod pipeline;
pub mod query_agg;
pub mod scene_harness;
pub mod stream_agg;

pub use decoder_metrics::{MetricReport, SemanticGrid};
pub use error::{Error, Result};
pub use geometry::{EgoPose, GridFrame, GridSpec, RigidTransform, Vec3};
pub use numerics::VoxelVolume;
pub use query_agg::{Box3, DynamicBox, InstanceQuery};
pub use stream_agg::StreamState;
