//! Global-frame primitives, ego trajectory, rasterization and ray casting.

use crate::geometry::{RigidTransform, Vec3};
use crate::query_agg::Box3;

use super::config::{EgoConfig, SceneConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Slab {
    pub class_id: u8,
    pub z_min: f64,
    pub z_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cylinder {
    pub class_id: u8,
    pub center: [f64; 2],
    pub radius: f64,
    pub z_min: f64,
    pub z_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolidBox {
    pub class_id: u8,
    pub bbox: Box3,
}

/// All solids at one instant, in global coordinates, ordered by precedence
/// (dynamic boxes win over walls, walls over pillars, pillars over ground).
#[derive(Debug, Clone, Default)]
pub struct World {
    pub dynamic: Vec<SolidBox>,
    pub walls: Vec<SolidBox>,
    pub pillars: Vec<Cylinder>,
    pub ground: Option<Slab>,
}

impl World {
    /// Static layout plus dynamic boxes advanced to `time` seconds.
    pub fn at_time(cfg: &SceneConfig, time: f64) -> World {
        let dynamic = cfg
            .dynamic
            .values()
            .map(|d| {
                let c = [
                    d.center[0] + d.velocity[0] * time,
                    d.center[1] + d.velocity[1] * time,
                    d.center[2] + d.velocity[2] * time,
                ];
                SolidBox {
                    class_id: SceneConfig::class_of(&d.class),
                    bbox: Box3::new(c, d.size, d.yaw),
                }
            })
            .collect();
        let s = &cfg.static_layout;
        World {
            dynamic,
            walls: s
                .walls
                .iter()
                .map(|w| SolidBox {
                    class_id: SceneConfig::class_of(&w.class),
                    bbox: Box3::new(w.center, w.size, w.yaw),
                })
                .collect(),
            pillars: s
                .pillars
                .iter()
                .map(|p| Cylinder {
                    class_id: SceneConfig::class_of(&p.class),
                    center: p.center,
                    radius: p.radius,
                    z_min: p.z_min,
                    z_max: p.z_max,
                })
                .collect(),
            ground: s.ground.as_ref().map(|g| Slab {
                class_id: SceneConfig::class_of(&g.class),
                z_min: g.top - g.thickness,
                z_max: g.top,
            }),
        }
    }

    /// Class of the solid containing `p` (closed sets), 0 if none.
    pub fn label_at(&self, p: &Vec3) -> u8 {
        for b in self.dynamic.iter().chain(&self.walls) {
            if b.bbox.contains(p) {
                return b.class_id;
            }
        }
        for c in &self.pillars {
            let (dx, dy) = (p.x - c.center[0], p.y - c.center[1]);
            if dx * dx + dy * dy <= c.radius * c.radius && p.z >= c.z_min && p.z <= c.z_max {
                return c.class_id;
            }
        }
        match &self.ground {
            Some(g) if p.z >= g.z_min && p.z <= g.z_max => g.class_id,
            _ => 0,
        }
    }

    /// Nearest hit `(t, class)` along `origin + t·dir`, `t > 0`.
    pub fn cast(&self, origin: &Vec3, dir: &Vec3) -> Option<(f64, u8)> {
        let mut best: Option<(f64, u8)> = None;
        let mut take = |t: Option<f64>, class: u8| {
            if let Some(t) = t {
                if best.is_none_or(|(bt, _)| t < bt) {
                    best = Some((t, class));
                }
            }
        };
        for b in self.dynamic.iter().chain(&self.walls) {
            take(ray_box(&b.bbox, origin, dir), b.class_id);
        }
        for c in &self.pillars {
            take(ray_cylinder(c, origin, dir), c.class_id);
        }
        if let Some(g) = &self.ground {
            take(ray_slab(g.z_min, g.z_max, origin.z, dir.z), g.class_id);
        }
        best
    }
}

/// Entry distance of a ray into an interval along one axis, via the slab method.
fn slab_interval(o: f64, d: f64, lo: f64, hi: f64) -> Option<(f64, f64)> {
    if d == 0.0 {
        return (o >= lo && o <= hi).then_some((f64::NEG_INFINITY, f64::INFINITY));
    }
    let (a, b) = ((lo - o) / d, (hi - o) / d);
    Some((a.min(b), a.max(b)))
}

fn first_positive(t0: f64, t1: f64) -> Option<f64> {
    if t1 < t0 || t1 <= 0.0 {
        None
    } else if t0 > 0.0 {
        Some(t0)
    } else {
        // origin inside the solid
        None
    }
}

pub fn ray_slab(z_min: f64, z_max: f64, oz: f64, dz: f64) -> Option<f64> {
    let (t0, t1) = slab_interval(oz, dz, z_min, z_max)?;
    first_positive(t0, t1)
}

pub fn ray_box(b: &Box3, origin: &Vec3, dir: &Vec3) -> Option<f64> {
    let o = b.to_local(origin);
    let (s, c) = b.yaw.sin_cos();
    let d = Vec3::new(c * dir.x + s * dir.y, -s * dir.x + c * dir.y, dir.z);
    let h = b.size * 0.5;
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for a in 0..3 {
        let (lo, hi) = slab_interval(o[a], d[a], -h[a], h[a])?;
        t0 = t0.max(lo);
        t1 = t1.min(hi);
    }
    first_positive(t0, t1)
}

pub fn ray_cylinder(c: &Cylinder, origin: &Vec3, dir: &Vec3) -> Option<f64> {
    let (ox, oy) = (origin.x - c.center[0], origin.y - c.center[1]);
    let a = dir.x * dir.x + dir.y * dir.y;
    let (mut t0, mut t1) = if a == 0.0 {
        if ox * ox + oy * oy <= c.radius * c.radius {
            (f64::NEG_INFINITY, f64::INFINITY)
        } else {
            return None;
        }
    } else {
        let b = ox * dir.x + oy * dir.y;
        let disc = b * b - a * (ox * ox + oy * oy - c.radius * c.radius);
        if disc < 0.0 {
            return None;
        }
        let r = disc.sqrt();
        ((-b - r) / a, (-b + r) / a)
    };
    let (z0, z1) = slab_interval(origin.z, dir.z, c.z_min, c.z_max)?;
    t0 = t0.max(z0);
    t1 = t1.min(z1);
    first_positive(t0, t1)
}

/// Catmull-Rom position and tangent at `s ∈ [0, 1]` over the whole path.
pub fn spline(points: &[[f64; 2]], s: f64) -> ([f64; 2], [f64; 2]) {
    let n = points.len();
    if n == 1 {
        return (points[0], [0.0, 0.0]);
    }
    let u = s.clamp(0.0, 1.0) * (n - 1) as f64;
    let seg = (u.floor() as usize).min(n - 2);
    let t = u - seg as f64;
    let p = |i: isize| points[i.clamp(0, n as isize - 1) as usize];
    let (p0, p1, p2, p3) = (p(seg as isize - 1), p(seg as isize), p(seg as isize + 1), p(seg as isize + 2));
    let mut pos = [0.0; 2];
    let mut tan = [0.0; 2];
    for a in 0..2 {
        let (a0, a1, a2, a3) = (p0[a], p1[a], p2[a], p3[a]);
        let c1 = 0.5 * (a2 - a0);
        let c2 = a0 - 2.5 * a1 + 2.0 * a2 - 0.5 * a3;
        let c3 = 0.5 * (a3 - a0) + 1.5 * (a1 - a2);
        pos[a] = a1 + t * (c1 + t * (c2 + t * c3));
        tan[a] = c1 + t * (2.0 * c2 + 3.0 * t * c3);
    }
    (pos, tan)
}

/// Ego-to-global pose for frame `t` of `frames`.
pub fn ego_pose(ego: &EgoConfig, t: usize, frames: usize) -> RigidTransform {
    let s = if frames > 1 { t as f64 / (frames - 1) as f64 } else { 0.0 };
    let (pos, tan) = spline(&ego.waypoints, s);
    let yaw = if ego.follow_tangent && tan[0].hypot(tan[1]) > 1e-9 {
        tan[1].atan2(tan[0])
    } else {
        ego.yaw
    };
    RigidTransform::from_yaw_translation(yaw, Vec3::new(pos[0], pos[1], ego.height))
}
