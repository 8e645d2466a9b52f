//! Ray-based occupancy scoring: first-hit class and depth agreement along a
//! fixed angular ray lattice cast from the ego origin.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::SemanticGrid;
use crate::classes::NUM_CLASSES;
use crate::error::{Error, Result};
use crate::geometry::{GridSpec, Vec3};

pub const DEPTH_THRESHOLDS: [f64; 3] = [1.0, 2.0, 4.0];
const K: usize = NUM_CLASSES + 1;

/// Uniform azimuth × elevation ray lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RaySet {
    pub azimuths: usize,
    pub elevation_rows: usize,
    pub elevation_min_deg: f64,
    pub elevation_max_deg: f64,
}

impl Default for RaySet {
    fn default() -> Self {
        Self {
            azimuths: 900,
            elevation_rows: 32,
            elevation_min_deg: -30.0,
            elevation_max_deg: 10.0,
        }
    }
}

impl RaySet {
    /// Unit directions, azimuth-major. Elevation rows span the inclusive range.
    pub fn directions(&self) -> Vec<Vec3> {
        let mut out = Vec::with_capacity(self.azimuths * self.elevation_rows);
        for a in 0..self.azimuths {
            let az = std::f64::consts::TAU * a as f64 / self.azimuths as f64;
            for r in 0..self.elevation_rows {
                let f = if self.elevation_rows == 1 {
                    0.5
                } else {
                    r as f64 / (self.elevation_rows - 1) as f64
                };
                let el = (self.elevation_min_deg + f * (self.elevation_max_deg - self.elevation_min_deg)).to_radians();
                out.push(Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin()));
            }
        }
        out
    }
}

/// Exact voxel traversal (Amanatides–Woo) in continuous cell coordinates.
///
/// Visits every cell the ray `start + t·dir` (t ≥ 0) passes through, in order,
/// with the entry and exit parameters, until the ray leaves the lattice or
/// `visit` returns `false`. `start` must lie inside the lattice.
pub fn traverse_cells(dims: [usize; 3], start: [f64; 3], dir: [f64; 3], mut visit: impl FnMut([usize; 3], f64, f64) -> bool) {
    let mut cell = [0isize; 3];
    let mut step = [0isize; 3];
    let mut t_max = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    for a in 0..3 {
        let c = (start[a].floor() as isize).clamp(0, dims[a] as isize - 1);
        cell[a] = c;
        if dir[a] > 0.0 {
            step[a] = 1;
            t_max[a] = ((c + 1) as f64 - start[a]) / dir[a];
            t_delta[a] = 1.0 / dir[a];
        } else if dir[a] < 0.0 {
            step[a] = -1;
            t_max[a] = (c as f64 - start[a]) / dir[a];
            t_delta[a] = -1.0 / dir[a];
        }
    }
    let mut t_enter = 0.0f64;
    loop {
        let axis = if t_max[0] <= t_max[1] && t_max[0] <= t_max[2] {
            0
        } else if t_max[1] <= t_max[2] {
            1
        } else {
            2
        };
        let t_exit = t_max[axis];
        if !visit([cell[0] as usize, cell[1] as usize, cell[2] as usize], t_enter, t_exit) {
            return;
        }
        if !t_exit.is_finite() {
            return;
        }
        cell[axis] += step[axis];
        if cell[axis] < 0 || cell[axis] >= dims[axis] as isize {
            return;
        }
        t_enter = t_exit;
        t_max[axis] += t_delta[axis];
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub cell: [usize; 3],
    pub label: u8,
    /// Distance in meters from the origin to where the ray enters the cell.
    pub depth: f64,
}

fn check_origin(spec: &GridSpec, origin: &Vec3) -> Result<[f64; 3]> {
    if !spec.contains(origin) {
        return Err(Error::contract(format!("ray origin {origin:?} outside grid extent")));
    }
    let u = spec.to_cell_space(origin);
    Ok([u.x, u.y, u.z])
}

/// First non-empty cell along a unit metric direction.
pub fn cast_ray(grid: &SemanticGrid, start: [f64; 3], dir: &Vec3, resolution: f64) -> Option<RayHit> {
    let d = [dir.x / resolution, dir.y / resolution, dir.z / resolution];
    let mut hit = None;
    traverse_cells(grid.dims, start, d, |c, t0, _| {
        let l = grid.get(c[0], c[1], c[2]);
        if l != 0 {
            hit = Some(RayHit {
                cell: c,
                label: l,
                depth: t0,
            });
            false
        } else {
            true
        }
    });
    hit
}

/// Per-threshold, per-class TP/FP/FN ray counts; accumulates across frames.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RayCounts {
    pub tp: [[u64; K]; 3],
    pub fp: [[u64; K]; 3],
    pub fn_: [[u64; K]; 3],
}

impl Default for RayCounts {
    fn default() -> Self {
        Self {
            tp: [[0; K]; 3],
            fp: [[0; K]; 3],
            fn_: [[0; K]; 3],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayIouScores {
    pub rayiou_1m: f64,
    pub rayiou_2m: f64,
    pub rayiou_4m: f64,
    pub mean: f64,
}

impl RayCounts {
    /// Scores one ray. A GT hit is TP iff the prediction hits the same class
    /// within the depth threshold; otherwise it is an FN of the GT class, and
    /// any predicted hit is an FP of the predicted class.
    pub fn add_ray(&mut self, pred: Option<RayHit>, gt: Option<RayHit>) {
        for (n, tau) in DEPTH_THRESHOLDS.iter().enumerate() {
            match (pred, gt) {
                (Some(p), Some(g)) if p.label == g.label && (p.depth - g.depth).abs() <= *tau => {
                    self.tp[n][g.label as usize] += 1;
                }
                _ => {
                    if let Some(g) = gt {
                        self.fn_[n][g.label as usize] += 1;
                    }
                    if let Some(p) = pred {
                        self.fp[n][p.label as usize] += 1;
                    }
                }
            }
        }
    }

    pub fn merge(&mut self, o: &RayCounts) {
        for n in 0..3 {
            for c in 0..K {
                self.tp[n][c] += o.tp[n][c];
                self.fp[n][c] += o.fp[n][c];
                self.fn_[n][c] += o.fn_[n][c];
            }
        }
    }

    /// Class-averaged IoU per threshold (classes with no rays are skipped;
    /// a threshold with no defined class scores 0).
    pub fn scores(&self) -> RayIouScores {
        let mut v = [0.0; 3];
        for (n, out) in v.iter_mut().enumerate() {
            let ious: Vec<f64> = (1..K)
                .filter_map(|c| {
                    let d = self.tp[n][c] + self.fp[n][c] + self.fn_[n][c];
                    (d > 0).then(|| self.tp[n][c] as f64 / d as f64)
                })
                .collect();
            *out = if ious.is_empty() {
                0.0
            } else {
                ious.iter().sum::<f64>() / ious.len() as f64
            };
        }
        RayIouScores {
            rayiou_1m: v[0],
            rayiou_2m: v[1],
            rayiou_4m: v[2],
            mean: (v[0] + v[1] + v[2]) / 3.0,
        }
    }
}

/// Casts the ray set through both grids and tallies the outcomes.
pub fn ray_counts(pred: &SemanticGrid, gt: &SemanticGrid, spec: &GridSpec, origin: &Vec3, rays: &RaySet) -> Result<RayCounts> {
    if pred.dims != gt.dims || gt.dims != spec.dims {
        return Err(Error::contract("rayiou: pred, gt and grid spec dims must agree"));
    }
    let start = check_origin(spec, origin)?;
    let res = spec.resolution;
    let hits: Vec<(Option<RayHit>, Option<RayHit>)> = rays
        .directions()
        .par_iter()
        .map(|d| (cast_ray(pred, start, d, res), cast_ray(gt, start, d, res)))
        .collect();
    let mut counts = RayCounts::default();
    for (p, g) in hits {
        counts.add_ray(p, g);
    }
    Ok(counts)
}

pub fn rayiou(pred: &SemanticGrid, gt: &SemanticGrid, spec: &GridSpec, origin: &Vec3, rays: &RaySet) -> Result<RayIouScores> {
    Ok(ray_counts(pred, gt, spec, origin, rays)?.scores())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GridFrame;

    fn spec(dims: [usize; 3], res: f64) -> GridSpec {
        GridSpec::new(dims, [0.0; 3], res, GridFrame::Ego).unwrap()
    }

    #[test]
    fn identical_grids_score_one_and_empty_scores_zero() {
        let s = spec([10, 10, 10], 0.4);
        let mut gt = SemanticGrid::empty(s.dims, 0.4);
        for i in 0..10 {
            for j in 0..10 {
                gt.set(i, j, 0, 12);
                gt.set(9, j, i, 16);
            }
        }
        let o = Vec3::new(1.0, 2.0, 2.0);
        let rays = RaySet {
            azimuths: 90,
            elevation_rows: 8,
            ..RaySet::default()
        };
        let r = rayiou(&gt, &gt, &s, &o, &rays).unwrap();
        assert_eq!((r.rayiou_1m, r.rayiou_2m, r.rayiou_4m, r.mean), (1.0, 1.0, 1.0, 1.0));
        let e = rayiou(&SemanticGrid::empty(s.dims, 0.4), &gt, &s, &o, &rays).unwrap();
        assert_eq!(e.mean, 0.0);
    }

    #[test]
    fn depth_thresholds_on_displaced_column() {
        // 0.2 m cells, one +x ray: 0.6 m displacement passes all thresholds,
        // 3 m passes only the 4 m threshold.
        let s = spec([40, 10, 10], 0.2);
        let origin = Vec3::new(0.5, 1.0, 1.0);
        let one_ray = RaySet {
            azimuths: 1,
            elevation_rows: 1,
            elevation_min_deg: 0.0,
            elevation_max_deg: 0.0,
        };
        let column = |x: usize| {
            let mut g = SemanticGrid::empty(s.dims, 0.2);
            for k in 0..10 {
                g.set(x, 5, k, 5);
            }
            g
        };
        let gt = column(10);
        let near = rayiou(&column(13), &gt, &s, &origin, &one_ray).unwrap();
        assert_eq!((near.rayiou_1m, near.rayiou_2m, near.rayiou_4m), (1.0, 1.0, 1.0));
        let far = rayiou(&column(25), &gt, &s, &origin, &one_ray).unwrap();
        assert_eq!((far.rayiou_1m, far.rayiou_2m, far.rayiou_4m), (0.0, 0.0, 1.0));
        let g = cast_ray(&gt, [2.5, 5.0, 5.0], &Vec3::x(), 0.2).unwrap();
        assert!((g.depth - 1.5).abs() < 1e-12);
    }

    #[test]
    fn origin_outside_is_rejected() {
        let s = spec([4, 4, 4], 1.0);
        let g = SemanticGrid::empty(s.dims, 1.0);
        assert!(rayiou(&g, &g, &s, &Vec3::new(-1.0, 0.0, 0.0), &RaySet::default()).is_err());
    }

    #[test]
    fn traversal_visits_contiguous_cells() {
        let mut cells = Vec::new();
        traverse_cells([5, 5, 5], [0.5, 0.5, 0.5], [1.0, 0.5, 0.25], |c, t0, t1| {
            assert!(t1 >= t0);
            cells.push(c);
            true
        });
        assert_eq!(cells.first(), Some(&[0, 0, 0]));
        for w in cells.windows(2) {
            let d: usize = (0..3).map(|a| w[0][a].abs_diff(w[1][a])).sum();
            assert_eq!(d, 1);
        }
        assert_eq!(cells.last().unwrap()[0], 4);
    }

    #[test]
    fn default_ray_set_size() {
        let d = RaySet::default().directions();
        assert_eq!(d.len(), 900 * 32);
        assert!(d.iter().all(|v| (v.norm() - 1.0).abs() < 1e-12));
    }
}
