//! Oriented boxes, instance queries, and bird's-eye-view box overlap.


use crate::geometry::Vec3;

/// Oriented 3D box: center (m), size `(l, w, h)` (m), yaw about +z (rad).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box3 {
    pub center: Vec3,
    pub size: Vec3,
    pub yaw: f64,
}

impl Box3 {
    pub fn new(center: [f64; 3], size: [f64; 3], yaw: f64) -> Self {
        Self {
            center: Vec3::from(center),
            size: Vec3::from(size),
            yaw,
        }
    }

    /// Point expressed in the box frame (inverse yaw about the center).
    pub fn to_local(&self, p: &Vec3) -> Vec3 {
        let d = p - self.center;
        let (s, c) = self.yaw.sin_cos();
        Vec3::new(c * d.x + s * d.y, -s * d.x + c * d.y, d.z)
    }

    /// Closed containment: |local| ≤ half-size on every axis.
    pub fn contains(&self, p: &Vec3) -> bool {
        let l = self.to_local(p);
        l.x.abs() <= self.size.x * 0.5 && l.y.abs() <= self.size.y * 0.5 && l.z.abs() <= self.size.z * 0.5
    }

    pub fn corners(&self) -> [Vec3; 8] {
        let (s, c) = self.yaw.sin_cos();
        let h = self.size * 0.5;
        let mut out = [Vec3::zeros(); 8];
        for (n, o) in out.iter_mut().enumerate() {
            let lx = if n & 1 == 0 { -h.x } else { h.x };
            let ly = if n & 2 == 0 { -h.y } else { h.y };
            let lz = if n & 4 == 0 { -h.z } else { h.z };
            *o = self.center + Vec3::new(c * lx - s * ly, s * lx + c * ly, lz);
        }
        out
    }

    /// Footprint corners, counter-clockwise.
    pub fn footprint(&self) -> [[f64; 2]; 4] {
        let (s, c) = self.yaw.sin_cos();
        let (hl, hw) = (self.size.x * 0.5, self.size.y * 0.5);
        let local = [[-hl, -hw], [hl, -hw], [hl, hw], [-hl, hw]];
        local.map(|[x, y]| [self.center.x + c * x - s * y, self.center.y + s * x + c * y])
    }

    /// The 7 box parameters `(cx, cy, cz, l, w, h, yaw)`.
    pub fn params(&self) -> [f64; 7] {
        [
            self.center.x,
            self.center.y,
            self.center.z,
            self.size.x,
            self.size.y,
            self.size.z,
            self.yaw,
        ]
    }
}

fn polygon_area(p: &[[f64; 2]]) -> f64 {
    let n = p.len();
    let mut a = 0.0;
    for i in 0..n {
        let (x0, y0) = (p[i][0], p[i][1]);
        let (x1, y1) = (p[(i + 1) % n][0], p[(i + 1) % n][1]);
        a += x0 * y1 - x1 * y0;
    }
    0.5 * a.abs()
}

/// Sutherland–Hodgman clip of `subject` by a counter-clockwise convex `clip`.
fn clip_convex(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut out = subject.to_vec();
    for e in 0..clip.len() {
        if out.is_empty() {
            break;
        }
        let a = clip[e];
        let b = clip[(e + 1) % clip.len()];
        let side = |p: [f64; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
        let input = std::mem::take(&mut out);
        for i in 0..input.len() {
            let cur = input[i];
            let prev = input[(i + input.len() - 1) % input.len()];
            let (sc, sp) = (side(cur), side(prev));
            if sc >= 0.0 {
                if sp < 0.0 {
                    out.push(intersect(prev, cur, sp, sc));
                }
                out.push(cur);
            } else if sp >= 0.0 {
                out.push(intersect(prev, cur, sp, sc));
            }
        }
    }
    out
}

fn intersect(p: [f64; 2], q: [f64; 2], sp: f64, sq: f64) -> [f64; 2] {
    let t = sp / (sp - sq);
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

/// Intersection-over-union of two boxes' yaw-aware ground footprints.
pub fn bev_iou(a: &Box3, b: &Box3) -> f64 {
    let pa = a.footprint();
    let pb = b.footprint();
    let inter = polygon_area(&clip_convex(&pa, &pb));
    let union = a.size.x * a.size.y + b.size.x * b.size.y - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// A ground-truth (or simulated) dynamic object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicBox {
    pub class_id: u8,
    pub bbox: Box3,
    /// m/s in the frame the box is expressed in.
    pub velocity: Vec3,
    pub track_id: u64,
}

/// Instance query: feature plus oriented box, confidence and class.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceQuery {
    pub feature: Vec<f32>,
    pub bbox: Box3,
    pub confidence: f64,
    pub class_id: u8,
    pub track_id: u64,
}
