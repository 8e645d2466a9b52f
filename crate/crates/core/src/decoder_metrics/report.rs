//! Aggregated evaluation report with a fixed-order key-value text form.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::iou::IouSummary;
use super::loss::Losses;
use super::rayiou::RayIouScores;
use crate::classes::CLASS_NAMES;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MetricReport {
    pub frames: usize,
    /// Index `c - 1` holds class `c`.
    pub per_class_iou: Vec<Option<f64>>,
    pub miou: Option<f64>,
    pub geometry_iou: Option<f64>,
    pub rayiou: Option<RayIouScores>,
    /// Mean over frames.
    pub losses: Option<Losses>,
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.6}"),
        None => "nan".to_string(),
    }
}

impl MetricReport {
    pub fn from_parts(frames: usize, iou: IouSummary, rayiou: Option<RayIouScores>, losses: Option<Losses>) -> Self {
        Self {
            frames,
            per_class_iou: iou.per_class_iou,
            miou: iou.miou,
            geometry_iou: iou.geometry_iou,
            rayiou,
            losses,
        }
    }

    /// `key value` lines in a fixed order; undefined values print as `nan`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "frames {}", self.frames).unwrap();
        writeln!(s, "miou {}", fmt_opt(self.miou)).unwrap();
        writeln!(s, "geometry_iou {}", fmt_opt(self.geometry_iou)).unwrap();
        for (n, v) in self.per_class_iou.iter().enumerate() {
            writeln!(s, "iou.{} {}", CLASS_NAMES[n + 1], fmt_opt(*v)).unwrap();
        }
        if let Some(r) = &self.rayiou {
            writeln!(s, "rayiou.1m {:.6}", r.rayiou_1m).unwrap();
            writeln!(s, "rayiou.2m {:.6}", r.rayiou_2m).unwrap();
            writeln!(s, "rayiou.4m {:.6}", r.rayiou_4m).unwrap();
            writeln!(s, "rayiou.mean {:.6}", r.mean).unwrap();
        }
        if let Some(l) = &self.losses {
            writeln!(s, "loss.occ {:.6}", l.occ).unwrap();
            writeln!(s, "loss.fore {:.6}", l.fore).unwrap();
            writeln!(s, "loss.bin {:.6}", l.bin).unwrap();
            writeln!(s, "loss.total {:.6}", l.total).unwrap();
        }
        s
    }
}
