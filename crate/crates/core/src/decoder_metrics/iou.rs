//! Voxel IoU / mIoU from an accumulated confusion matrix.

use serde::{Deserialize, Serialize};

use super::grid::SemanticGrid;
use crate::classes::NUM_CLASSES;
use crate::error::{Error, Result};

const K: usize = NUM_CLASSES + 1;

/// `counts[gt][pred]` over evaluated cells, accumulated across frames.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: [[u64; K]; K],
}

impl Default for ConfusionMatrix {
    fn default() -> Self {
        Self { counts: [[0; K]; K] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IouSummary {
    /// Index `c - 1` holds class `c`; `None` when the class is absent from both grids.
    pub per_class_iou: Vec<Option<f64>>,
    pub miou: Option<f64>,
    pub geometry_iou: Option<f64>,
}

impl ConfusionMatrix {
    /// Adds one frame. With `use_mask`, only cells flagged visible in `gt.mask`
    /// count (a grid without a mask counts every cell).
    pub fn add(&mut self, pred: &SemanticGrid, gt: &SemanticGrid, use_mask: bool) -> Result<()> {
        if pred.dims != gt.dims {
            return Err(Error::contract(format!(
                "pred dims {:?} differ from gt dims {:?}",
                pred.dims, gt.dims
            )));
        }
        let mask = if use_mask { gt.mask.as_deref() } else { None };
        for (n, (&p, &g)) in pred.labels.iter().zip(&gt.labels).enumerate() {
            if mask.is_some_and(|m| !m[n]) {
                continue;
            }
            self.counts[g as usize][p as usize] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for g in 0..K {
            for p in 0..K {
                self.counts[g][p] += other.counts[g][p];
            }
        }
    }

    pub fn summary(&self) -> IouSummary {
        let mut per_class = Vec::with_capacity(NUM_CLASSES);
        for c in 1..K {
            let tp = self.counts[c][c];
            let fn_: u64 = (0..K).filter(|&p| p != c).map(|p| self.counts[c][p]).sum();
            let fp: u64 = (0..K).filter(|&g| g != c).map(|g| self.counts[g][c]).sum();
            let denom = tp + fp + fn_;
            per_class.push((denom > 0).then(|| tp as f64 / denom as f64));
        }
        let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
        let miou = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
        // geometry: occupied (label != 0) vs empty
        let mut tp = 0u64;
        let mut fp = 0u64;
        let mut fn_ = 0u64;
        for g in 0..K {
            for p in 0..K {
                let n = self.counts[g][p];
                match (g != 0, p != 0) {
                    (true, true) => tp += n,
                    (false, true) => fp += n,
                    (true, false) => fn_ += n,
                    _ => {}
                }
            }
        }
        let denom = tp + fp + fn_;
        IouSummary {
            per_class_iou: per_class,
            miou,
            geometry_iou: (denom > 0).then(|| tp as f64 / denom as f64),
        }
    }
}

/// Single-frame IoU/mIoU.
pub fn iou_miou(pred: &SemanticGrid, gt: &SemanticGrid, use_mask: bool) -> Result<IouSummary> {
    let mut cm = ConfusionMatrix::default();
    cm.add(pred, gt, use_mask)?;
    Ok(cm.summary())
}
