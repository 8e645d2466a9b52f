//! Supplementary query selection before injection into voxel space.

use serde::{Deserialize, Serialize};

use super::query::{bev_iou, Box3, DynamicBox, InstanceQuery};
use crate::classes::LARGE_OBJECT_CLASSES;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectMode {
    Train,
    Infer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    /// Queries need confidence strictly above this.
    pub min_confidence: f64,
    /// Large objects: BEV IoU with the matched box at least this.
    pub min_iou: f64,
    /// Small objects: `center_weight·D_center + size_weight·D_size` below this.
    pub max_small_score: f64,
    pub center_weight: f64,
    pub size_weight: f64,
    pub large_classes: Vec<u8>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            min_confidence: 0.3,
            min_iou: 0.4,
            max_small_score: 1.5,
            center_weight: 2.0,
            size_weight: 1.0,
            large_classes: LARGE_OBJECT_CLASSES.to_vec(),
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        let v = [self.min_confidence, self.min_iou, self.max_small_score, self.center_weight, self.size_weight];
        if v.iter().any(|x| !x.is_finite() || *x <= 0.0) {
            return Err(Error::config("selection thresholds and weights must be positive"));
        }
        Ok(())
    }

    pub fn is_large(&self, class_id: u8) -> bool {
        self.large_classes.contains(&class_id)
    }

    /// `σ_c·‖Δcenter‖₂ + σ_b·‖Δsize‖₁`.
    pub fn small_score(&self, q: &Box3, g: &Box3) -> f64 {
        let dc = (q.center - g.center).norm();
        let ds = (q.size - g.size).abs().sum();
        self.center_weight * dc + self.size_weight * ds
    }
}

/// Keeps the queries worth injecting.
///
/// Infer mode filters on confidence alone. Train mode additionally matches
/// queries greedily (descending confidence) to same-class GT boxes, each GT at
/// most once: large classes by best BEV IoU, small classes by lowest
/// center/size score. Unmatched queries are dropped. Output keeps input order.
pub fn select_queries(queries: &[InstanceQuery], gt_boxes: Option<&[DynamicBox]>, mode: SelectMode, cfg: &SelectionConfig) -> Result<Vec<InstanceQuery>> {
    let confident: Vec<usize> = (0..queries.len())
        .filter(|&i| queries[i].confidence > cfg.min_confidence)
        .collect();
    if mode == SelectMode::Infer {
        return Ok(confident.into_iter().map(|i| queries[i].clone()).collect());
    }
    let gt = gt_boxes.ok_or_else(|| Error::contract("train-mode query selection requires ground-truth boxes"))?;
    let mut order = confident;
    order.sort_by(|&a, &b| queries[b].confidence.total_cmp(&queries[a].confidence).then(a.cmp(&b)));
    let mut used = vec![false; gt.len()];
    let mut keep = Vec::new();
    for i in order {
        let q = &queries[i];
        let candidates = gt
            .iter()
            .enumerate()
            .filter(|(g, b)| !used[*g] && b.class_id == q.class_id);
        let chosen = if cfg.is_large(q.class_id) {
            candidates
                .map(|(g, b)| (g, bev_iou(&q.bbox, &b.bbox)))
                .fold(None, |best: Option<(usize, f64)>, c| match best {
                    Some(b) if b.1 >= c.1 => Some(b),
                    _ => Some(c),
                })
                .filter(|&(_, iou)| iou >= cfg.min_iou)
        } else {
            candidates
                .map(|(g, b)| (g, cfg.small_score(&q.bbox, &b.bbox)))
                .fold(None, |best: Option<(usize, f64)>, c| match best {
                    Some(b) if b.1 <= c.1 => Some(b),
                    _ => Some(c),
                })
                .filter(|&(_, s)| s < cfg.max_small_score)
        };
        if let Some((g, _)) = chosen {
            used[g] = true;
            keep.push(i);
        }
    }
    keep.sort_unstable();
    Ok(keep.into_iter().map(|i| queries[i].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classes::{CAR, PEDESTRIAN};
    use crate::geometry::Vec3;
    use proptest::prelude::*;

    fn query(class_id: u8, bbox: Box3, confidence: f64) -> InstanceQuery {
        InstanceQuery {
            feature: vec![0.0; 4],
            bbox,
            confidence,
            class_id,
            track_id: 0,
        }
    }

    fn gt(class_id: u8, bbox: Box3) -> DynamicBox {
        DynamicBox {
            class_id,
            bbox,
            velocity: Vec3::zeros(),
            track_id: 0,
        }
    }

    #[test]
    fn train_mode_needs_gt() {
        let q = [query(CAR, Box3::new([0.0; 3], [4.0, 2.0, 1.5], 0.0), 0.9)];
        let e = select_queries(&q, None, SelectMode::Train, &SelectionConfig::default()).unwrap_err();
        assert_eq!(e.exit_code(), 3);
    }

    #[test]
    fn one_gt_matches_one_query() {
        let b = Box3::new([0.0; 3], [4.0, 2.0, 1.5], 0.0);
        let q = [query(CAR, b, 0.8), query(CAR, b, 0.9)];
        let g = [gt(CAR, b)];
        let s = select_queries(&q, Some(&g), SelectMode::Train, &SelectionConfig::default()).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].confidence, 0.9);
        let inf = select_queries(&q, None, SelectMode::Infer, &SelectionConfig::default()).unwrap();
        assert_eq!(inf.len(), 2);
    }

    #[test]
    fn class_must_agree() {
        let b = Box3::new([0.0; 3], [0.8, 0.6, 1.7], 0.0);
        let q = [query(PEDESTRIAN, b, 0.9)];
        let g = [gt(CAR, b)];
        assert!(select_queries(&q, Some(&g), SelectMode::Train, &SelectionConfig::default()).unwrap().is_empty());
    }

    proptest! {
        #[test]
        fn raising_confidence_never_deselects(
            pts in proptest::collection::vec((-3.0..3.0f64, -3.0..3.0f64, 0.0..1.0f64, 0usize..2), 1..8),
            gts in proptest::collection::vec((-3.0..3.0f64, -3.0..3.0f64, 0usize..2), 1..6),
            pick in 0usize..8,
            bump in 0.0..1.0f64,
        ) {
            let cls = [CAR, PEDESTRIAN];
            let size = |c: u8| if c == CAR { [4.0, 2.0, 1.5] } else { [0.8, 0.6, 1.7] };
            let qs: Vec<InstanceQuery> = pts.iter().enumerate().map(|(n, &(x, y, c, k))| {
                let mut q = query(cls[k], Box3::new([x, y, 0.0], size(cls[k]), 0.1), c);
                q.track_id = n as u64;
                q
            }).collect();
            let g: Vec<DynamicBox> = gts.iter().map(|&(x, y, k)| gt(cls[k], Box3::new([x, y, 0.0], size(cls[k]), 0.0))).collect();
            let cfg = SelectionConfig::default();
            let before = select_queries(&qs, Some(&g), SelectMode::Train, &cfg).unwrap();
            let i = pick % qs.len();
            if before.iter().any(|q| q.track_id == i as u64) {
                let mut raised = qs.clone();
                raised[i].confidence = (raised[i].confidence + bump).min(1.0);
                let after = select_queries(&raised, Some(&g), SelectMode::Train, &cfg).unwrap();
                prop_assert!(after.iter().any(|q| q.track_id == i as u64));
            }
        }
    }
}
