//! Per-cell training objectives, evaluated (not optimized) on decoder outputs.

use serde::{Deserialize, Serialize};

use super::grid::SemanticGrid;
use crate::error::{Error, Result};
use crate::numerics::{log_sum_exp, softplus, VoxelVolume};

/// Weights of the occupancy, forecast and binary-occupancy terms.
pub const LAMBDA_OCC: f64 = 10.0;
pub const LAMBDA_FORE: f64 = 10.0;
pub const LAMBDA_BIN: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Losses {
    pub occ: f64,
    pub fore: f64,
    pub bin: f64,
    pub total: f64,
}

impl Losses {
    pub fn combine(occ: f64, fore: f64, bin: f64) -> Self {
        Self {
            occ,
            fore,
            bin,
            total: LAMBDA_OCC * occ + LAMBDA_FORE * fore + LAMBDA_BIN * bin,
        }
    }
}

fn check(logits: &VoxelVolume, gt: &SemanticGrid, what: &str) -> Result<()> {
    if logits.dims() != gt.dims {
        return Err(Error::contract(format!(
            "{what} logits dims {:?} differ from gt dims {:?}",
            logits.dims(),
            gt.dims
        )));
    }
    Ok(())
}

/// Mean per-cell softmax cross-entropy over all classes including empty.
pub fn cross_entropy(logits: &VoxelVolume, gt: &SemanticGrid) -> Result<f64> {
    check(logits, gt, "class")?;
    if gt.labels.iter().any(|&l| l as usize >= logits.channels()) {
        return Err(Error::contract("gt label outside logit channels"));
    }
    let c = logits.channels();
    let mut buf = vec![0.0f64; c];
    let mut total = 0.0f64;
    for (cell, &label) in gt.labels.iter().enumerate() {
        for (ch, b) in buf.iter_mut().enumerate() {
            *b = logits.channel(ch)[cell] as f64;
        }
        total += log_sum_exp(&buf) - buf[label as usize];
    }
    Ok(total / gt.num_cells() as f64)
}

/// Mean binary cross-entropy of single-channel logits against `label != 0`.
pub fn binary_cross_entropy(logits: &VoxelVolume, gt: &SemanticGrid) -> Result<f64> {
    check(logits, gt, "occupancy")?;
    if logits.channels() != 1 {
        return Err(Error::contract("occupancy logits must have one channel"));
    }
    let total: f64 = logits
        .channel(0)
        .iter()
        .zip(&gt.labels)
        .map(|(&x, &l)| {
            let x = x as f64;
            let y = if l != 0 { 1.0 } else { 0.0 };
            softplus(x) - y * x
        })
        .sum();
    Ok(total / gt.num_cells() as f64)
}

pub fn losses(logits: &VoxelVolume, forecast_logits: &VoxelVolume, bin_logits: &VoxelVolume, gt: &SemanticGrid) -> Result<Losses> {
    Ok(Losses::combine(
        cross_entropy(logits, gt)?,
        cross_entropy(forecast_logits, gt)?,
        binary_cross_entropy(bin_logits, gt)?,
    ))
}
